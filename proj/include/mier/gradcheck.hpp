#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mier/adam.hpp"
#include "mier/model.hpp"
#include "mier/objectives.hpp"
#include "mier/rng.hpp"

namespace mier {

struct GradcheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
/// coordinates whose true gradient is ~0 from dividing rounding noise by 0.
inline constexpr double kGradcheckFloor = 1e-6;

/// Compares reverse-mode gradients of a scalar function of the parameters
/// with central differences, coordinate by coordinate.
/// `f` maps bound leaves to a scalar Tensor.
template <typename F>
GradcheckReport check_gradients(const ParameterMap& params, F f, double h = 1e-5,
                                double floor = kGradcheckFloor) {
  const TensorMap leaves = attach(params, true);
  backward(f(leaves));
  const GradientMap analytic = collect_gradients(leaves);

  GradcheckReport rep;
  ParameterMap probe = params;
  for (auto& [name, array] : probe) {
    const auto& g = analytic.at(name).data;
    for (std::size_t i = 0; i < array.data.size(); ++i) {
      const double saved = array.data[i];
      array.data[i] = saved + h;
      const double up = f(attach(probe, false)).item();
      array.data[i] = saved - h;
      const double down = f(attach(probe, false)).item();
      array.data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(g[i] - numeric);
      const double rel = abs_err / std::max({std::abs(g[i]), std::abs(numeric), floor});
      rep.max_absolute_error = std::max(rep.max_absolute_error, abs_err);
      if (rel > rep.max_relative_error) {
        rep.max_relative_error = rel;
        rep.worst_parameter = name;
        rep.worst_index = i;
      }
      ++rep.coordinates;
    }
  }
  return rep;
}

/// A small random instance of the full objective: parameters (with nonzero
/// biases), a labeled and an unlabeled batch, and fixed noise.
struct ToyProblem {
  M2Parameters params;
  LabeledBatch labeled;
  Tensor x_unlabeled;
  ObjectiveNoise noise;
};

inline ModelConfig toy_model_config() {
  ModelConfig c;
  c.input_dim = 6;
  c.num_classes = 3;
  c.latent_dim = 4;
  c.hidden_dims = {8};
  c.classifier_hidden = 8;
  return c;
}

inline ToyProblem make_toy_problem(std::uint64_t seed, const ModelConfig& config,
                                   std::size_t labeled = 3, std::size_t unlabeled = 5,
                                   std::size_t z_samples = 1) {
  ToyProblem t;
  t.params = init_parameters(config, seed);
  Rng rng(seed ^ 0x70E5ULL);
  for (auto& [name, a] : t.params.tensors) {
    if (name.ends_with(".bias")) {
      for (auto& v : a.data) v = 0.3 * rng.normal();
    }
  }
  auto uniform_matrix = [&rng](std::size_t r, std::size_t c) {
    std::vector<double> v(r * c);
    for (auto& e : v) e = rng.uniform();
    return Tensor(Shape{r, c}, std::move(v));
  };
  t.labeled.x = uniform_matrix(labeled, config.input_dim);
  for (std::size_t i = 0; i < labeled; ++i) {
    t.labeled.labels.push_back(static_cast<std::size_t>(rng.below(config.num_classes)));
  }
  t.x_unlabeled = uniform_matrix(unlabeled, config.input_dim);
  t.noise = draw_noise(rng, labeled, unlabeled, config.num_classes, config.latent_dim,
                       z_samples);
  return t;
}

/// Finite-difference check of J2 on the toy problem for one seed.
inline GradcheckReport gradcheck_j2(std::uint64_t seed, double beta = 5.0,
                                    double gamma = 1.0, double h = 1e-5) {
  const ModelConfig config = toy_model_config();
  const ToyProblem t = make_toy_problem(seed, config);
  ObjectiveConfig cfg;
  cfg.alpha = 1.0;
  cfg.beta = beta;
  cfg.gamma = gamma;
  cfg.kl_weight = 1.0;
  return check_gradients(
      t.params.tensors,
      [&](const TensorMap& p) {
        return total_objective_j2(config, p, t.labeled, t.x_unlabeled, cfg, t.noise).value;
      },
      h);
}

}  // namespace mier
