#pragma once

#include <map>
#include <string>
#include <vector>

#include "sgrl/autodiff.hpp"

namespace sgrl::opt {

// L2 norm over every element of every tensor in the map.
double global_norm(const std::map<std::string, ad::Tensor>& grads);

// Scales all gradients in place so the global norm is at most max_norm.
void clip_global_norm(std::map<std::string, ad::Tensor>& grads, double max_norm);

// Adam with bias correction. Moment buffers are keyed by parameter name and
// sized lazily from the first gradient each parameter produces.
class Adam {
 public:
  explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::map<std::string, ad::Tensor>& params,
            const std::map<std::string, ad::Tensor>& grads);

  double lr() const { return lr_; }
  long long updates() const { return t_; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long long t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace sgrl::opt
