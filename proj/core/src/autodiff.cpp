#include "sgrl/autodiff.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sgrl::ad {

namespace {

std::atomic<std::uint64_t> g_tape_counter{1};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

double softplus_val(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid_val(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor::Tensor(int r, int c) : rows(r), cols(c) {
  check_arg(r > 0 && c > 0, "tensor: dimensions must be positive, got " + shape_str());
  v.assign(static_cast<std::size_t>(r) * c, 0.0);
}

Tensor::Tensor(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
  check_arg(r > 0 && c > 0, "tensor: dimensions must be positive, got " + shape_str());
  check_arg(static_cast<std::size_t>(r) * c == v.size(),
            "tensor: " + shape_str() + " does not match " + std::to_string(v.size()) + " values");
}

double Tensor::scalar() const {
  check_arg(rows == 1 && cols == 1, "tensor: scalar() on shape " + shape_str());
  return v[0];
}

Tensor Tensor::zeros(int r, int c) { return Tensor(r, c); }

Tensor Tensor::full(int r, int c, double value) {
  Tensor t(r, c);
  std::fill(t.v.begin(), t.v.end(), value);
  return t;
}

Tensor Tensor::scalar_of(double value) { return full(1, 1, value); }

Tensor Tensor::row(std::vector<double> data) {
  int n = static_cast<int>(data.size());
  return Tensor(1, n, std::move(data));
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Input: return "input";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Minimum: return "minimum";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softplus: return "softplus";
    case Op::Square: return "square";
    case Op::Clamp: return "clamp";
    case Op::Scale: return "scale";
    case Op::Sum: return "sum";
    case Op::SumRows: return "sum_rows";
    case Op::Mean: return "mean";
    case Op::ConcatRows: return "concat_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceRows: return "slice_rows";
    case Op::SliceCols: return "slice_cols";
  }
  return "?";
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::own(const Tensor& t, bool differentiable) {
  check_arg(t.node < 0, "tape: tensor is already bound to a tape");
  check_arg(t.rows > 0 && t.cols > 0, "tape: empty tensor");
  Node n;
  n.op = differentiable ? Op::Input : Op::Const;
  n.rows = t.rows;
  n.cols = t.cols;
  n.out = t.v;
  n.needs_grad = differentiable;
  return push(std::move(n));
}

int Tape::use(const Tensor& t) {
  if (t.node >= 0) {
    check_arg(t.tape_id == id_, "tape: tensor belongs to a different tape");
    check_arg(t.node < static_cast<int>(nodes_.size()), "tape: stale tensor node");
    return t.node;
  }
  return own(t, false);
}

Tensor Tape::wrap(int id) const {
  const Node& n = nodes_[id];
  Tensor t(n.rows, n.cols, n.out);
  t.node = id;
  t.tape_id = id_;
  return t;
}

Tensor Tape::input(const Tensor& value) { return wrap(own(value, true)); }
Tensor Tape::constant(const Tensor& value) { return wrap(own(value, false)); }

void Tape::binary_shape(const Node& a, const Node& b, const char* what, int& r, int& c) {
  r = std::max(a.rows, b.rows);
  c = std::max(a.cols, b.cols);
  auto ok = [&](const Node& x) {
    if (x.rows == r && x.cols == c) return true;
    if (x.rows == 1 && x.cols == c) return true;
    return x.rows == 1 && x.cols == 1;
  };
  if (!ok(a) || !ok(b)) {
    std::ostringstream os;
    os << what << ": incompatible shapes [" << a.rows << "x" << a.cols << "] vs [" << b.rows
       << "x" << b.cols << "]";
    fail_arg(os.str());
  }
}

namespace {
// Value of a possibly batch-broadcast operand at output position (i, j).
inline double bval(const std::vector<double>& out, int rows, int cols, int i, int j) {
  int ii = rows == 1 ? 0 : i;
  int jj = cols == 1 ? 0 : j;
  return out[static_cast<std::size_t>(ii) * cols + jj];
}
inline std::size_t bidx(int rows, int cols, int i, int j) {
  int ii = rows == 1 ? 0 : i;
  int jj = cols == 1 ? 0 : j;
  return static_cast<std::size_t>(ii) * cols + jj;
}
}  // namespace

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  int ia = use(a), ib = use(b);
  const Node& na = nodes_[ia];
  const Node& nb = nodes_[ib];
  if (na.cols != nb.rows) {
    fail_arg("matmul: inner dimensions differ: [" + std::to_string(na.rows) + "x" +
             std::to_string(na.cols) + "] * [" + std::to_string(nb.rows) + "x" +
             std::to_string(nb.cols) + "]");
  }
  Node n;
  n.op = Op::MatMul;
  n.in0 = ia;
  n.in1 = ib;
  n.rows = na.rows;
  n.cols = nb.cols;
  n.out.resize(static_cast<std::size_t>(n.rows) * n.cols);
  CMap ma(na.out.data(), na.rows, na.cols);
  CMap mb(nb.out.data(), nb.rows, nb.cols);
  Map mo(n.out.data(), n.rows, n.cols);
  mo.noalias() = ma * mb;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return wrap(push(std::move(n)));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return forward_op(Op::Add, std::array{a, b}); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return forward_op(Op::Sub, std::array{a, b}); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return forward_op(Op::Mul, std::array{a, b}); }
Tensor Tape::minimum(const Tensor& a, const Tensor& b) {
  return forward_op(Op::Minimum, std::array{a, b});
}
Tensor Tape::tanh(const Tensor& x) { return forward_op(Op::Tanh, std::array{x}); }
Tensor Tape::relu(const Tensor& x) { return forward_op(Op::Relu, std::array{x}); }
Tensor Tape::exp(const Tensor& x) { return forward_op(Op::Exp, std::array{x}); }
Tensor Tape::log(const Tensor& x) { return forward_op(Op::Log, std::array{x}); }
Tensor Tape::softplus(const Tensor& x) { return forward_op(Op::Softplus, std::array{x}); }
Tensor Tape::square(const Tensor& x) { return forward_op(Op::Square, std::array{x}); }
Tensor Tape::clamp(const Tensor& x, double lo, double hi) {
  check_arg(lo <= hi, "clamp: lo > hi");
  return forward_op(Op::Clamp, std::array{x}, lo, hi);
}
Tensor Tape::scale(const Tensor& x, double k, double b) {
  return forward_op(Op::Scale, std::array{x}, k, b);
}
Tensor Tape::sum(const Tensor& x) { return forward_op(Op::Sum, std::array{x}); }
Tensor Tape::sum_rows(const Tensor& x) { return forward_op(Op::SumRows, std::array{x}); }
Tensor Tape::mean(const Tensor& x) { return forward_op(Op::Mean, std::array{x}); }
Tensor Tape::concat_rows(std::span<const Tensor> parts) {
  return forward_op(Op::ConcatRows, parts);
}
Tensor Tape::concat_cols(std::span<const Tensor> parts) {
  return forward_op(Op::ConcatCols, parts);
}
Tensor Tape::slice_rows(const Tensor& x, int r0, int r1) {
  return forward_op(Op::SliceRows, std::array{x}, r0, r1);
}
Tensor Tape::slice_cols(const Tensor& x, int c0, int c1) {
  return forward_op(Op::SliceCols, std::array{x}, c0, c1);
}

Tensor Tape::forward_op(Op op, std::span<const Tensor> inputs, double p0, double p1) {
  auto unary = [&]() -> const Tensor& {
    check_arg(inputs.size() == 1, std::string(op_name(op)) + ": expects 1 input");
    return inputs[0];
  };
  auto binary = [&]() {
    check_arg(inputs.size() == 2, std::string(op_name(op)) + ": expects 2 inputs");
  };

  switch (op) {
    case Op::Const:
    case Op::Input:
      fail_arg("forward_op: leaf kinds are not ops");
    case Op::MatMul:
      binary();
      return matmul(inputs[0], inputs[1]);
    default:
      break;
  }

  Node n;
  n.op = op;
  n.p0 = p0;
  n.p1 = p1;

  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Minimum: {
      binary();
      int ia = use(inputs[0]), ib = use(inputs[1]);
      const Node& na = nodes_[ia];
      const Node& nb = nodes_[ib];
      binary_shape(na, nb, op_name(op), n.rows, n.cols);
      n.in0 = ia;
      n.in1 = ib;
      n.needs_grad = na.needs_grad || nb.needs_grad;
      n.out.resize(static_cast<std::size_t>(n.rows) * n.cols);
      for (int i = 0; i < n.rows; ++i) {
        for (int j = 0; j < n.cols; ++j) {
          double x = bval(na.out, na.rows, na.cols, i, j);
          double y = bval(nb.out, nb.rows, nb.cols, i, j);
          double r = 0.0;
          switch (op) {
            case Op::Add: r = x + y; break;
            case Op::Sub: r = x - y; break;
            case Op::Mul: r = x * y; break;
            case Op::Minimum: r = std::min(x, y); break;
            default: break;
          }
          n.out[static_cast<std::size_t>(i) * n.cols + j] = r;
        }
      }
      break;
    }
    case Op::Tanh:
    case Op::Relu:
    case Op::Exp:
    case Op::Log:
    case Op::Softplus:
    case Op::Square:
    case Op::Clamp:
    case Op::Scale: {
      const Tensor& x = unary();
      int ix = use(x);
      const Node& nx = nodes_[ix];
      n.in0 = ix;
      n.rows = nx.rows;
      n.cols = nx.cols;
      n.needs_grad = nx.needs_grad;
      n.out.resize(nx.out.size());
      for (std::size_t k = 0; k < nx.out.size(); ++k) {
        double v = nx.out[k];
        double r = 0.0;
        switch (op) {
          case Op::Tanh: r = std::tanh(v); break;
          case Op::Relu: r = v > 0.0 ? v : 0.0; break;
          case Op::Exp: r = std::exp(v); break;
          case Op::Log: r = std::log(v); break;
          case Op::Softplus: r = softplus_val(v); break;
          case Op::Square: r = v * v; break;
          case Op::Clamp: r = std::min(std::max(v, p0), p1); break;
          case Op::Scale: r = v * p0 + p1; break;
          default: break;
        }
        n.out[k] = r;
      }
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      const Tensor& x = unary();
      int ix = use(x);
      const Node& nx = nodes_[ix];
      n.in0 = ix;
      n.rows = 1;
      n.cols = 1;
      n.needs_grad = nx.needs_grad;
      double acc = 0.0;
      for (double v : nx.out) acc += v;
      if (op == Op::Mean) acc /= static_cast<double>(nx.out.size());
      n.out = {acc};
      break;
    }
    case Op::SumRows: {
      const Tensor& x = unary();
      int ix = use(x);
      const Node& nx = nodes_[ix];
      n.in0 = ix;
      n.rows = nx.rows;
      n.cols = 1;
      n.needs_grad = nx.needs_grad;
      n.out.assign(nx.rows, 0.0);
      for (int i = 0; i < nx.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < nx.cols; ++j) acc += nx.out[static_cast<std::size_t>(i) * nx.cols + j];
        n.out[i] = acc;
      }
      break;
    }
    case Op::ConcatRows:
    case Op::ConcatCols: {
      check_arg(!inputs.empty(), std::string(op_name(op)) + ": no inputs");
      for (const Tensor& t : inputs) n.ins.push_back(use(t));
      const Node& first = nodes_[n.ins[0]];
      int total = 0;
      for (int id : n.ins) {
        const Node& p = nodes_[id];
        if (op == Op::ConcatRows) {
          check_arg(p.cols == first.cols, "concat_rows: column counts differ");
          total += p.rows;
        } else {
          check_arg(p.rows == first.rows, "concat_cols: row counts differ");
          total += p.cols;
        }
        n.needs_grad = n.needs_grad || p.needs_grad;
      }
      if (op == Op::ConcatRows) {
        n.rows = total;
        n.cols = first.cols;
        n.out.reserve(static_cast<std::size_t>(n.rows) * n.cols);
        for (int id : n.ins) {
          const Node& p = nodes_[id];
          n.out.insert(n.out.end(), p.out.begin(), p.out.end());
        }
      } else {
        n.rows = first.rows;
        n.cols = total;
        n.out.resize(static_cast<std::size_t>(n.rows) * n.cols);
        int off = 0;
        for (int id : n.ins) {
          const Node& p = nodes_[id];
          for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < p.cols; ++j)
              n.out[static_cast<std::size_t>(i) * n.cols + off + j] =
                  p.out[static_cast<std::size_t>(i) * p.cols + j];
          off += p.cols;
        }
      }
      break;
    }
    case Op::SliceRows:
    case Op::SliceCols: {
      const Tensor& x = unary();
      int ix = use(x);
      const Node& nx = nodes_[ix];
      int lo = static_cast<int>(p0), hi = static_cast<int>(p1);
      int limit = op == Op::SliceRows ? nx.rows : nx.cols;
      check_arg(0 <= lo && lo < hi && hi <= limit,
                std::string(op_name(op)) + ": range [" + std::to_string(lo) + "," +
                    std::to_string(hi) + ") out of bounds for " + x.shape_str());
      n.in0 = ix;
      n.needs_grad = nx.needs_grad;
      if (op == Op::SliceRows) {
        n.rows = hi - lo;
        n.cols = nx.cols;
        n.out.assign(nx.out.begin() + static_cast<std::size_t>(lo) * nx.cols,
                     nx.out.begin() + static_cast<std::size_t>(hi) * nx.cols);
      } else {
        n.rows = nx.rows;
        n.cols = hi - lo;
        n.out.resize(static_cast<std::size_t>(n.rows) * n.cols);
        for (int i = 0; i < n.rows; ++i)
          for (int j = 0; j < n.cols; ++j)
            n.out[static_cast<std::size_t>(i) * n.cols + j] =
                nx.out[static_cast<std::size_t>(i) * nx.cols + lo + j];
      }
      break;
    }
    default:
      fail_arg("forward_op: unhandled op");
  }
  return wrap(push(std::move(n)));
}

Tensor Tape::gaussian_logprob(const Tensor& mu, const Tensor& log_sigma, const Tensor& action) {
  Tensor diff = sub(action, mu);
  Tensor inv_sigma = exp(scale(log_sigma, -1.0));
  Tensor z = mul(diff, inv_sigma);
  Tensor terms = scale(sub(scale(square(z), -0.5), log_sigma), 1.0, -kHalfLog2Pi);
  return sum_rows(terms);
}

Tensor Tape::gaussian_entropy(const Tensor& log_sigma) {
  return sum_rows(scale(log_sigma, 1.0, kHalfLog2Pi + 0.5));
}

std::vector<double>& Tape::gbuf(int id) {
  if (grads_[id].empty())
    grads_[id].assign(static_cast<std::size_t>(nodes_[id].rows) * nodes_[id].cols, 0.0);
  return grads_[id];
}

void Tape::backward(const Tensor& loss) {
  check_arg(loss.node >= 0 && loss.tape_id == id_, "backward: loss is not on this tape");
  check_arg(loss.rows == 1 && loss.cols == 1,
            "backward: loss must be scalar, got " + loss.shape_str());
  grads_.assign(nodes_.size(), {});
  if (!nodes_[loss.node].needs_grad) return;  // loss detached from all inputs
  gbuf(loss.node)[0] = 1.0;
  for (int id = loss.node; id >= 0; --id) {
    if (!nodes_[id].needs_grad || grads_[id].empty()) continue;
    backward_node(id);
  }
}

void Tape::backward_node(int id) {
  const Node& n = nodes_[id];
  const std::vector<double>& g = grads_[id];
  auto needs = [&](int in) { return in >= 0 && nodes_[in].needs_grad; };

  switch (n.op) {
    case Op::Const:
    case Op::Input:
      return;
    case Op::MatMul: {
      const Node& a = nodes_[n.in0];
      const Node& b = nodes_[n.in1];
      CMap mg(g.data(), n.rows, n.cols);
      if (needs(n.in0)) {
        Map ga(gbuf(n.in0).data(), a.rows, a.cols);
        CMap mb(b.out.data(), b.rows, b.cols);
        ga.noalias() += mg * mb.transpose();
      }
      if (needs(n.in1)) {
        Map gb(gbuf(n.in1).data(), b.rows, b.cols);
        CMap ma(a.out.data(), a.rows, a.cols);
        gb.noalias() += ma.transpose() * mg;
      }
      return;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Minimum: {
      const Node& a = nodes_[n.in0];
      const Node& b = nodes_[n.in1];
      bool wa = needs(n.in0), wb = needs(n.in1);
      std::vector<double>* ga = wa ? &gbuf(n.in0) : nullptr;
      std::vector<double>* gb = wb ? &gbuf(n.in1) : nullptr;
      for (int i = 0; i < n.rows; ++i) {
        for (int j = 0; j < n.cols; ++j) {
          double gv = g[static_cast<std::size_t>(i) * n.cols + j];
          double av = bval(a.out, a.rows, a.cols, i, j);
          double bv = bval(b.out, b.rows, b.cols, i, j);
          switch (n.op) {
            case Op::Add:
              if (wa) (*ga)[bidx(a.rows, a.cols, i, j)] += gv;
              if (wb) (*gb)[bidx(b.rows, b.cols, i, j)] += gv;
              break;
            case Op::Sub:
              if (wa) (*ga)[bidx(a.rows, a.cols, i, j)] += gv;
              if (wb) (*gb)[bidx(b.rows, b.cols, i, j)] -= gv;
              break;
            case Op::Mul:
              if (wa) (*ga)[bidx(a.rows, a.cols, i, j)] += gv * bv;
              if (wb) (*gb)[bidx(b.rows, b.cols, i, j)] += gv * av;
              break;
            case Op::Minimum:
              if (av <= bv) {
                if (wa) (*ga)[bidx(a.rows, a.cols, i, j)] += gv;
              } else if (wb) {
                (*gb)[bidx(b.rows, b.cols, i, j)] += gv;
              }
              break;
            default:
              break;
          }
        }
      }
      return;
    }
    case Op::Tanh:
    case Op::Relu:
    case Op::Exp:
    case Op::Log:
    case Op::Softplus:
    case Op::Square:
    case Op::Clamp:
    case Op::Scale: {
      if (!needs(n.in0)) return;
      const Node& x = nodes_[n.in0];
      std::vector<double>& gx = gbuf(n.in0);
      for (std::size_t k = 0; k < g.size(); ++k) {
        double gv = g[k];
        double xv = x.out[k];
        double yv = n.out[k];
        switch (n.op) {
          case Op::Tanh: gx[k] += gv * (1.0 - yv * yv); break;
          case Op::Relu: gx[k] += xv > 0.0 ? gv : 0.0; break;
          case Op::Exp: gx[k] += gv * yv; break;
          case Op::Log: gx[k] += gv / xv; break;
          case Op::Softplus: gx[k] += gv * sigmoid_val(xv); break;
          case Op::Square: gx[k] += gv * 2.0 * xv; break;
          case Op::Clamp: gx[k] += (xv >= n.p0 && xv <= n.p1) ? gv : 0.0; break;
          case Op::Scale: gx[k] += gv * n.p0; break;
          default: break;
        }
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      if (!needs(n.in0)) return;
      std::vector<double>& gx = gbuf(n.in0);
      double gv = g[0];
      if (n.op == Op::Mean) gv /= static_cast<double>(gx.size());
      for (double& e : gx) e += gv;
      return;
    }
    case Op::SumRows: {
      if (!needs(n.in0)) return;
      const Node& x = nodes_[n.in0];
      std::vector<double>& gx = gbuf(n.in0);
      for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) gx[static_cast<std::size_t>(i) * x.cols + j] += g[i];
      return;
    }
    case Op::ConcatRows: {
      std::size_t off = 0;
      for (int in : n.ins) {
        const Node& p = nodes_[in];
        std::size_t count = p.out.size();
        if (needs(in)) {
          std::vector<double>& gp = gbuf(in);
          for (std::size_t k = 0; k < count; ++k) gp[k] += g[off + k];
        }
        off += count;
      }
      return;
    }
    case Op::ConcatCols: {
      int off = 0;
      for (int in : n.ins) {
        const Node& p = nodes_[in];
        if (needs(in)) {
          std::vector<double>& gp = gbuf(in);
          for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < p.cols; ++j)
              gp[static_cast<std::size_t>(i) * p.cols + j] +=
                  g[static_cast<std::size_t>(i) * n.cols + off + j];
        }
        off += p.cols;
      }
      return;
    }
    case Op::SliceRows: {
      if (!needs(n.in0)) return;
      const Node& x = nodes_[n.in0];
      std::vector<double>& gx = gbuf(n.in0);
      int lo = static_cast<int>(n.p0);
      for (int i = 0; i < n.rows; ++i)
        for (int j = 0; j < n.cols; ++j)
          gx[static_cast<std::size_t>(lo + i) * x.cols + j] +=
              g[static_cast<std::size_t>(i) * n.cols + j];
      return;
    }
    case Op::SliceCols: {
      if (!needs(n.in0)) return;
      const Node& x = nodes_[n.in0];
      std::vector<double>& gx = gbuf(n.in0);
      int lo = static_cast<int>(n.p0);
      for (int i = 0; i < n.rows; ++i)
        for (int j = 0; j < n.cols; ++j)
          gx[static_cast<std::size_t>(i) * x.cols + lo + j] +=
              g[static_cast<std::size_t>(i) * n.cols + j];
      return;
    }
  }
}

bool Tape::has_grad(const Tensor& x) const {
  if (x.node < 0 || x.tape_id != id_) return false;
  if (grads_.size() != nodes_.size()) return false;
  return nodes_[x.node].needs_grad;
}

Tensor Tape::grad(const Tensor& x) const {
  check_arg(x.node >= 0 && x.tape_id == id_, "grad: tensor is not on this tape");
  check_arg(grads_.size() == nodes_.size(), "grad: backward has not been run");
  const Node& n = nodes_[x.node];
  check_arg(n.needs_grad, "grad: tensor does not require gradients");
  if (grads_[x.node].empty()) return Tensor::zeros(n.rows, n.cols);
  return Tensor(n.rows, n.cols, grads_[x.node]);
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
  id_ = g_tape_counter.fetch_add(1);
}

}  // namespace sgrl::ad
