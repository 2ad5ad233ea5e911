// Named parameters and the Adam update.
#pragma once
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/tensor.hpp"

namespace tfm {

struct Parameter {
  std::string name;
  Tensor tensor;
};

inline void check_unique_names(const std::vector<Parameter>& params) {
  std::set<std::string> seen;
  for (const auto& p : params)
    if (!seen.insert(p.name).second)
      throw ValidationError("duplicate parameter name '" + p.name + "'");
}

inline void zero_grad(std::vector<Parameter>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;

  static AdamState init(const std::vector<Parameter>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.tensor.size(), 0.0);
      s.v.emplace_back(p.tensor.size(), 0.0);
    }
    return s;
  }
};

// One bias-corrected Adam update over every parameter's accumulated gradient.
inline void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    auto& value = params[p].tensor.values();
    const auto& grad = params[p].tensor.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace tfm
