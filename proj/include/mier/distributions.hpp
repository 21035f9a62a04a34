#pragma once

#include <cmath>
#include <string>

#include "mier/error.hpp"
#include "mier/tensor.hpp"

namespace mier {

/// Batch of diagonal Gaussians; mu and logvar are both [B, latent].
struct DiagonalGaussian {
  Tensor mu;
  Tensor logvar;
};

/// Probabilities below this are clamped inside logs.
inline constexpr double kProbFloor = 1e-12;

/// KL(N(mu, diag exp(logvar)) || N(0, I)) per row -> [B].
inline Tensor gaussian_kl_to_standard(const DiagonalGaussian& q) {
  if (q.mu.shape() != q.logvar.shape()) {
    throw ShapeError("gaussian_kl: mu " + shape_string(q.mu.shape()) +
                     " vs logvar " + shape_string(q.logvar.shape()));
  }
  const Tensor terms = square(q.mu) + exp(q.logvar) - q.logvar - 1.0;
  return scale(row_sum(terms), 0.5);
}

/// -sum p log p per row, with p clamped to [1e-12, 1] inside the log.
inline Tensor categorical_entropy(const Tensor& probs) {
  const Tensor logp = log(clamp(probs, kProbFloor, 1.0));
  return -row_sum(probs * logp);
}

/// KL(q || Uniform(K)) per row, summed directly as sum q log(q K).
inline Tensor categorical_kl_to_uniform(const Tensor& probs) {
  const double k = static_cast<double>(probs.cols());
  if (probs.cols() < 2) {
    throw DomainError("categorical_kl_to_uniform: need at least 2 classes");
  }
  const Tensor log_ratio = log(clamp(probs, kProbFloor, 1.0) * k);
  return row_sum(probs * log_ratio);
}

/// sum_i x_i log sigmoid(l_i) + (1 - x_i) log(1 - sigmoid(l_i)) per row,
/// evaluated as x*l - softplus(l).
inline Tensor bernoulli_log_likelihood(const Tensor& x, const Tensor& logits) {
  if (x.shape() != logits.shape()) {
    throw ShapeError("bernoulli_log_likelihood: x " + shape_string(x.shape()) +
                     " vs logits " + shape_string(logits.shape()));
  }
  for (double v : x.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("bernoulli_log_likelihood: x value " +
                        std::to_string(v) + " outside [0,1]");
    }
  }
  return row_sum(x * logits - softplus(logits));
}

/// Fixed-variance Gaussian log-density per row.
inline Tensor gaussian_log_likelihood(const Tensor& x, const Tensor& mean,
                                      double variance) {
  if (x.shape() != mean.shape()) {
    throw ShapeError("gaussian_log_likelihood: x " + shape_string(x.shape()) +
                     " vs mean " + shape_string(mean.shape()));
  }
  const double log_norm = -0.5 * std::log(2.0 * M_PI * variance);
  const Tensor per_dim = scale(square(x - mean), -0.5 / variance) + log_norm;
  return row_sum(per_dim);
}

/// z = mu + exp(logvar / 2) * noise. The noise is treated as a constant.
inline Tensor reparameterized_sample(const DiagonalGaussian& q,
                                     const Tensor& noise) {
  if (noise.shape() != q.mu.shape()) {
    throw ShapeError("reparameterized_sample: noise " +
                     shape_string(noise.shape()) + " vs mu " +
                     shape_string(q.mu.shape()));
  }
  return q.mu + exp(scale(q.logvar, 0.5)) * noise.detach();
}

}  // namespace mier
