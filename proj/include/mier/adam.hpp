#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "mier/error.hpp"
#include "mier/tensor.hpp"

namespace mier {

/// Named parameter arrays, ordered by name so iteration is deterministic.
using ParameterMap = std::map<std::string, Array>;
/// Gradient per parameter name, same shape as the parameter.
using GradientMap = std::map<std::string, Array>;

/// Leaf tensors bound to a ParameterMap for a single graph.
using TensorMap = std::map<std::string, Tensor>;

inline TensorMap attach(const ParameterMap& params, bool requires_grad) {
  TensorMap out;
  for (const auto& [name, a] : params) out.emplace(name, Tensor(a, requires_grad));
  return out;
}

/// Gradients of the last backward pass; untouched parameters map to zeros.
inline GradientMap collect_gradients(const TensorMap& leaves) {
  GradientMap out;
  for (const auto& [name, t] : leaves) out.emplace(name, t.grad());
  return out;
}

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  ParameterMap m;
  ParameterMap v;
  std::uint64_t t = 0;

  static AdamState for_params(const ParameterMap& params, AdamHyper hyper = {}) {
    AdamState s;
    s.hyper = hyper;
    for (const auto& [name, a] : params) {
      s.m.emplace(name, Array::zeros(a.shape));
      s.v.emplace(name, Array::zeros(a.shape));
    }
    return s;
  }
};

/// One bias-corrected Adam step that *descends* the given gradients.
inline void adam_step(ParameterMap& params, const GradientMap& grads,
                      AdamState& state) {
  for (const auto& [name, p] : params) {
    const auto g = grads.find(name);
    const auto m = state.m.find(name);
    const auto v = state.v.find(name);
    if (g == grads.end() || m == state.m.end() || v == state.v.end()) {
      throw ShapeError("adam_step: no gradient or moment for '" + name + "'");
    }
    if (g->second.shape != p.shape || m->second.shape != p.shape ||
        v->second.shape != p.shape) {
      throw ShapeError("adam_step: shape mismatch for '" + name + "': param " +
                       shape_string(p.shape) + " vs grad " +
                       shape_string(g->second.shape));
    }
  }
  state.t += 1;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name).data;
    auto& m = state.m.at(name).data;
    auto& v = state.v.at(name).data;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.data[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

}  // namespace mier
