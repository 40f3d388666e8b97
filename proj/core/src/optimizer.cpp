#include "sgrl/optimizer.hpp"

#include <cmath>

namespace sgrl::opt {

double global_norm(const std::map<std::string, ad::Tensor>& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) sq += x * x;
  return std::sqrt(sq);
}

void clip_global_norm(std::map<std::string, ad::Tensor>& grads, double max_norm) {
  check_arg(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
  double norm = global_norm(grads);
  if (norm <= max_norm) return;
  double s = max_norm / norm;
  for (auto& [name, g] : grads)
    for (double& x : g.v) x *= s;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  check_arg(lr > 0.0, "adam: learning rate must be positive");
  check_arg(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
            "adam: betas must be in [0,1)");
  check_arg(eps > 0.0, "adam: eps must be positive");
}

void Adam::step(std::map<std::string, ad::Tensor>& params,
                const std::map<std::string, ad::Tensor>& grads) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    check_arg(git != grads.end(), "adam: missing gradient for '" + name + "'");
    const ad::Tensor& g = git->second;
    check_arg(g.rows == p.rows && g.cols == p.cols,
              "adam: gradient shape mismatch for '" + name + "'");
    std::vector<double>& m = m_[name];
    std::vector<double>& v = v_[name];
    if (m.empty()) {
      m.assign(p.v.size(), 0.0);
      v.assign(p.v.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g.v[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g.v[i] * g.v[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace sgrl::opt
