#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgrl/common.hpp"

namespace sgrl::ad {

// Dense row-major 2-D tensor of doubles. Vectors are [1,n] rows, scalars
// [1,1]. A tensor produced by a Tape op remembers the id of its node and the
// id of the tape that owns it; plain value tensors have node == -1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;
  int node = -1;
  std::uint64_t tape_id = 0;

  Tensor() = default;
  Tensor(int r, int c);
  Tensor(int r, int c, std::vector<double> data);

  int size() const { return rows * cols; }
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  double scalar() const;

  static Tensor zeros(int r, int c);
  static Tensor full(int r, int c, double value);
  static Tensor scalar_of(double value);
  static Tensor row(std::vector<double> data);

  std::string shape_str() const;
};

enum class Op : std::uint8_t {
  Const,
  Input,
  MatMul,
  Add,
  Sub,
  Mul,
  Minimum,
  Tanh,
  Relu,
  Exp,
  Log,
  Softplus,
  Square,
  Clamp,
  Scale,     // x * p0 + p1
  Sum,       // all elements -> [1,1]
  SumRows,   // [r,c] -> [r,1]
  Mean,      // all elements -> [1,1]
  ConcatRows,
  ConcatCols,
  SliceRows,  // rows [p0, p1)
  SliceCols,  // cols [p0, p1)
};

const char* op_name(Op op);

// Reverse-mode tape. Built define-by-run each forward pass and discarded
// after backward; parameters live outside as plain Tensors and are re-bound
// through input() every pass. Node order is the construction order, which is
// already topological, so backward is a single reverse sweep. All math is
// double precision and single threaded; identical call sequences produce
// bit-identical values and gradients.
class Tape {
 public:
  Tape();

  Tensor input(const Tensor& value);     // differentiable leaf
  Tensor constant(const Tensor& value);  // non-differentiable leaf

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor minimum(const Tensor& a, const Tensor& b);
  Tensor tanh(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor softplus(const Tensor& x);
  Tensor square(const Tensor& x);
  Tensor clamp(const Tensor& x, double lo, double hi);
  Tensor scale(const Tensor& x, double k, double b = 0.0);
  Tensor sum(const Tensor& x);
  Tensor sum_rows(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor concat_rows(std::span<const Tensor> parts);
  Tensor concat_cols(std::span<const Tensor> parts);
  Tensor slice_rows(const Tensor& x, int r0, int r1);
  Tensor slice_cols(const Tensor& x, int c0, int c1);

  // Generic dispatch over the primitive set; parameterized ops read p0/p1.
  Tensor forward_op(Op op, std::span<const Tensor> inputs, double p0 = 0.0, double p1 = 0.0);

  // log N(action | mu, exp(log_sigma)) summed over action dims -> [B,1].
  // Composite of primitives, so it is differentiable like everything else.
  Tensor gaussian_logprob(const Tensor& mu, const Tensor& log_sigma, const Tensor& action);
  // Entropy of the same diagonal Gaussian -> [B,1].
  Tensor gaussian_entropy(const Tensor& log_sigma);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. loss must be a
  // [1,1] tensor owned by this tape. Gradient buffers are (re)allocated here.
  void backward(const Tensor& loss);

  bool has_grad(const Tensor& x) const;
  Tensor grad(const Tensor& x) const;

  std::size_t num_nodes() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }
  void clear();

 private:
  struct Node {
    Op op = Op::Const;
    int in0 = -1;
    int in1 = -1;
    std::vector<int> ins;  // ConcatRows / ConcatCols only
    int rows = 0;
    int cols = 0;
    double p0 = 0.0;
    double p1 = 0.0;
    std::vector<double> out;
    bool needs_grad = false;
  };

  int own(const Tensor& t, bool differentiable);
  int use(const Tensor& t);  // node id, interning plain values as Const
  Tensor wrap(int id) const;
  int push(Node n);
  void backward_node(int id);
  std::vector<double>& gbuf(int id);

  static void binary_shape(const Node& a, const Node& b, const char* what, int& r, int& c);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::uint64_t id_ = 0;
};

}  // namespace sgrl::ad
