#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mier/adam.hpp"
#include "mier/distributions.hpp"
#include "mier/error.hpp"
#include "mier/rng.hpp"
#include "mier/tensor.hpp"

namespace mier {

enum class Likelihood { Bernoulli, Gaussian };

inline std::string to_string(Likelihood l) {
  return l == Likelihood::Bernoulli ? "bernoulli" : "gaussian";
}

inline Likelihood likelihood_from_string(const std::string& s) {
  if (s == "bernoulli") return Likelihood::Bernoulli;
  if (s == "gaussian") return Likelihood::Gaussian;
  throw ConfigError("unknown likelihood '" + s + "'");
}

struct ModelConfig {
  std::size_t input_dim = 784;
  std::size_t num_classes = 10;
  std::size_t latent_dim = 50;
  std::vector<std::size_t> hidden_dims{600, 600};
  std::size_t classifier_hidden = 600;
  Likelihood likelihood = Likelihood::Bernoulli;
  // Fixed per-pixel variance of the Gaussian likelihood.
  double gaussian_variance = 0.01;

  void validate() const {
    if (input_dim == 0 || num_classes == 0 || latent_dim == 0 ||
        classifier_hidden == 0) {
      throw ConfigError("model dimensions must be >= 1");
    }
    if (hidden_dims.empty()) throw ConfigError("hidden_dims must be nonempty");
    for (auto h : hidden_dims) {
      if (h == 0) throw ConfigError("hidden_dims entries must be >= 1");
    }
    if (!(gaussian_variance > 0.0)) {
      throw ConfigError("gaussian_variance must be positive");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Classifier, encoder and decoder weights of the M2 model.
///
/// Layer naming: `<net>.<i>.weight|bias` for hidden layers, then
/// `classifier.out`, `encoder.mu`, `encoder.logvar`, `decoder.out`.
/// Weights are [fan_in, fan_out] so a layer computes x W + b.
struct M2Parameters {
  ModelConfig config;
  ParameterMap tensors;
};

namespace detail {

struct LayerSpec {
  std::string name;
  std::size_t fan_in;
  std::size_t fan_out;
};

inline std::vector<LayerSpec> layer_specs(const ModelConfig& c) {
  std::vector<LayerSpec> specs;
  specs.push_back({"classifier.0", c.input_dim, c.classifier_hidden});
  specs.push_back({"classifier.out", c.classifier_hidden, c.num_classes});
  std::size_t in = c.input_dim + c.num_classes;
  for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) {
    specs.push_back({"encoder." + std::to_string(i), in, c.hidden_dims[i]});
    in = c.hidden_dims[i];
  }
  specs.push_back({"encoder.mu", in, c.latent_dim});
  specs.push_back({"encoder.logvar", in, c.latent_dim});
  in = c.latent_dim + c.num_classes;
  for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) {
    specs.push_back({"decoder." + std::to_string(i), in, c.hidden_dims[i]});
    in = c.hidden_dims[i];
  }
  specs.push_back({"decoder.out", in, c.input_dim});
  return specs;
}

inline Tensor dense(const TensorMap& p, const std::string& name, const Tensor& x) {
  const auto w = p.find(name + ".weight");
  const auto b = p.find(name + ".bias");
  if (w == p.end() || b == p.end()) {
    throw ConfigError("missing parameters for layer '" + name + "'");
  }
  return matmul(x, w->second) + b->second;
}

inline void require_cols(const Tensor& t, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected [B," + std::to_string(cols) +
                     "], got " + shape_string(t.shape()));
  }
}

}  // namespace detail

/// Glorot-uniform weights, zero biases; deterministic per seed.
inline M2Parameters init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  M2Parameters out{config, {}};
  for (const auto& spec : detail::layer_specs(config)) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
    Array w = Array::zeros({spec.fan_in, spec.fan_out});
    for (auto& v : w.data) v = rng.uniform(-limit, limit);
    out.tensors.emplace(spec.name + ".weight", std::move(w));
    out.tensors.emplace(spec.name + ".bias", Array::zeros({spec.fan_out}));
  }
  return out;
}

/// Pre-softmax class scores [B, K].
inline Tensor classifier_logits(const ModelConfig& c, const TensorMap& p,
                                const Tensor& x) {
  detail::require_cols(x, c.input_dim, "classify");
  const Tensor h = softplus(detail::dense(p, "classifier.0", x));
  return detail::dense(p, "classifier.out", h);
}

/// q(y|x): one probability row per input.
inline Tensor classify(const ModelConfig& c, const TensorMap& p, const Tensor& x) {
  return softmax_rows(classifier_logits(c, p, x));
}

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

/// q(z|x,y) from concat(x, onehot(y)).
inline DiagonalGaussian encode(const ModelConfig& c, const TensorMap& p,
                               const Tensor& x, const Tensor& y_onehot) {
  detail::require_cols(x, c.input_dim, "encode x");
  detail::require_cols(y_onehot, c.num_classes, "encode y");
  Tensor h = concat_cols(x, y_onehot);
  for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) {
    h = softplus(detail::dense(p, "encoder." + std::to_string(i), h));
  }
  return {detail::dense(p, "encoder.mu", h),
          clamp(detail::dense(p, "encoder.logvar", h), kLogvarMin, kLogvarMax)};
}

/// p(x|z,y) parameters: Bernoulli logits or Gaussian means, [B, D].
inline Tensor decode(const ModelConfig& c, const TensorMap& p, const Tensor& z,
                     const Tensor& y_onehot) {
  detail::require_cols(z, c.latent_dim, "decode z");
  detail::require_cols(y_onehot, c.num_classes, "decode y");
  Tensor h = concat_cols(z, y_onehot);
  for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) {
    h = softplus(detail::dense(p, "decoder." + std::to_string(i), h));
  }
  return detail::dense(p, "decoder.out", h);
}

/// log p(x|z,y) per row under the configured likelihood.
inline Tensor reconstruction_log_likelihood(const ModelConfig& c, const Tensor& x,
                                            const Tensor& decoded) {
  if (c.likelihood == Likelihood::Bernoulli) {
    return bernoulli_log_likelihood(x, decoded);
  }
  return gaussian_log_likelihood(x, decoded, c.gaussian_variance);
}

/// Decoder output mapped to data space ([0,1] intensities).
inline Tensor decoded_mean(const ModelConfig& c, const Tensor& decoded) {
  if (c.likelihood == Likelihood::Bernoulli) return sigmoid(decoded);
  return clamp(decoded, 0.0, 1.0);
}

/// [B, K] one-hot rows for the given labels.
inline Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t k) {
  std::vector<double> v(labels.size() * k, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) {
      throw DomainError("one_hot: label " + std::to_string(labels[i]) +
                        " out of range for " + std::to_string(k) + " classes");
    }
    v[i * k + labels[i]] = 1.0;
  }
  return Tensor(Shape{labels.size(), k}, std::move(v));
}

// Convenience overloads evaluating without a graph.
inline Tensor classify(const M2Parameters& m, const Tensor& x) {
  return classify(m.config, attach(m.tensors, false), x);
}
inline DiagonalGaussian encode(const M2Parameters& m, const Tensor& x,
                               const Tensor& y_onehot) {
  return encode(m.config, attach(m.tensors, false), x, y_onehot);
}
inline Tensor decode(const M2Parameters& m, const Tensor& z, const Tensor& y_onehot) {
  return decode(m.config, attach(m.tensors, false), z, y_onehot);
}

}  // namespace mier
