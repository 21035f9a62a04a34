#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mier/distributions.hpp"
#include "mier/error.hpp"
#include "mier/model.hpp"
#include "mier/rng.hpp"
#include "mier/tensor.hpp"

namespace mier {

struct ObjectiveConfig {
  double alpha = 0.1;     // weight of the labeled log q(y|x) term
  double beta = 5.0;      // classifier-entropy penalty
  double gamma = 1.0;     // mutual-information reward
  std::size_t z_samples_per_class = 1;
  double kl_weight = 1.0; // warm-up multiplier on the KL-to-prior terms

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
      throw ConfigError("alpha, beta and gamma must be nonnegative");
    }
    if (z_samples_per_class < 1) throw ConfigError("z_samples_per_class must be >= 1");
    if (!(kl_weight >= 0.0 && kl_weight <= 1.0)) {
      throw ConfigError("kl_weight must lie in [0,1]");
    }
  }
};

/// Scalar summary of one objective evaluation. Unlabeled-side terms are
/// per-example means over the unlabeled batch.
struct ObjectiveBreakdown {
  double reconstruction = 0.0;
  double kl_y = 0.0;
  double kl_z = 0.0;
  double classifier_entropy_mean = 0.0;
  double marginal_entropy = 0.0;
  double mi_estimate = 0.0;
  double labeled_elbo = 0.0;
  double unlabeled_elbo = 0.0;
  double total = 0.0;
};

struct ObjectiveResult {
  Tensor value;  // scalar, attached to the graph when parameters are
  ObjectiveBreakdown breakdown;
};

/// Standard-normal draws for the reparameterized z samples of one step.
///
/// `labeled[s]` is [B_L, latent]. `unlabeled[s]` is [K * B_U, latent] in
/// class-major blocks: rows k*B_U .. (k+1)*B_U - 1 feed class k.
struct ObjectiveNoise {
  std::vector<Tensor> labeled;
  std::vector<Tensor> unlabeled;
};

inline Tensor normal_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> v(rows * cols);
  for (auto& e : v) e = rng.normal();
  return Tensor(Shape{rows, cols}, std::move(v));
}

inline ObjectiveNoise draw_noise(Rng& rng, std::size_t labeled_batch,
                                 std::size_t unlabeled_batch, std::size_t classes,
                                 std::size_t latent, std::size_t samples) {
  ObjectiveNoise n;
  for (std::size_t s = 0; s < samples; ++s) {
    n.labeled.push_back(normal_matrix(rng, labeled_batch, latent));
  }
  for (std::size_t s = 0; s < samples; ++s) {
    n.unlabeled.push_back(normal_matrix(rng, classes * unlabeled_batch, latent));
  }
  return n;
}

namespace detail {

inline void require_one_hot(const Tensor& y, std::size_t k) {
  if (y.rank() != 2 || y.cols() != k) {
    throw ShapeError("labels: expected one-hot [B," + std::to_string(k) +
                     "], got " + shape_string(y.shape()));
  }
  for (std::size_t i = 0; i < y.rows(); ++i) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = y.at(i, j);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = 2;
      }
    }
    if (ones != 1) {
      throw DomainError("labels: row " + std::to_string(i) + " is not one-hot");
    }
  }
}

inline Tensor mean_over_samples(const std::vector<Tensor>& xs) {
  Tensor acc = xs[0];
  for (std::size_t s = 1; s < xs.size(); ++s) acc = acc + xs[s];
  return xs.size() == 1 ? acc : scale(acc, 1.0 / static_cast<double>(xs.size()));
}

}  // namespace detail

/// Per-(example, class) pieces shared by both unlabeled ELBO forms.
/// All matrices are [B, K].
struct PerClassTerms {
  Tensor probs;           // q(y|x)
  Tensor reconstruction;  // Monte-Carlo E_q(z|x,y) log p(x|z,y)
  Tensor kl_z;            // KL(q(z|x,y) || p(z))
};

/// Enumerates every class for each input; z is sampled once per noise draw.
inline PerClassTerms per_class_terms(const ModelConfig& c, const TensorMap& p,
                                     const Tensor& x,
                                     const std::vector<Tensor>& noise) {
  const std::size_t b = x.rows();
  const std::size_t k = c.num_classes;
  if (noise.empty()) throw ShapeError("unlabeled noise: no samples supplied");
  std::vector<Tensor> x_blocks(k, x);
  std::vector<std::size_t> labels(k * b);
  for (std::size_t cls = 0; cls < k; ++cls)
    for (std::size_t i = 0; i < b; ++i) labels[cls * b + i] = cls;
  const Tensor x_rep = concat_rows(x_blocks);
  const Tensor y_rep = one_hot(labels, k);
  const DiagonalGaussian q = encode(c, p, x_rep, y_rep);

  std::vector<Tensor> recon;
  for (const auto& eps : noise) {
    const Tensor z = reparameterized_sample(q, eps);
    recon.push_back(reconstruction_log_likelihood(c, x_rep, decode(c, p, z, y_rep)));
  }
  auto to_batch_by_class = [b, k](const Tensor& flat) {
    return transpose(reshape(flat, Shape{k, b}));
  };
  return {classify(c, p, x),
          to_batch_by_class(detail::mean_over_samples(recon)),
          to_batch_by_class(gaussian_kl_to_standard(q))};
}

/// L(x,y) per example: E_q(z|x,y)[log p(x|y,z)] + w log p(y) - w KL(q(z|x,y)||p(z)).
/// With w = 1 this is the labeled bound exactly; p(y) is uniform.
inline Tensor labeled_elbo(const ModelConfig& c, const TensorMap& p, const Tensor& x,
                           const Tensor& y_onehot, const std::vector<Tensor>& noise,
                           double kl_weight = 1.0) {
  detail::require_one_hot(y_onehot, c.num_classes);
  if (noise.empty()) throw ShapeError("labeled noise: no samples supplied");
  const DiagonalGaussian q = encode(c, p, x, y_onehot);
  std::vector<Tensor> recon;
  for (const auto& eps : noise) {
    const Tensor z = reparameterized_sample(q, eps);
    recon.push_back(reconstruction_log_likelihood(c, x, decode(c, p, z, y_onehot)));
  }
  const double log_prior_y = -std::log(static_cast<double>(c.num_classes));
  return detail::mean_over_samples(recon) + kl_weight * log_prior_y -
         scale(gaussian_kl_to_standard(q), kl_weight);
}

/// U(x) = E_q(y,z|x)[log p(x|z,y)] - w KL(q(y|x)||p(y)) - w E_q(y|x)[KL(q(z|x,y)||p(z))].
inline Tensor unlabeled_elbo_kl_form(const PerClassTerms& t, double kl_weight = 1.0) {
  const Tensor expected_recon = row_sum(t.probs * t.reconstruction);
  const Tensor expected_kl_z = row_sum(t.probs * t.kl_z);
  return expected_recon - scale(categorical_kl_to_uniform(t.probs), kl_weight) -
         scale(expected_kl_z, kl_weight);
}

/// U(x) = E_q(y|x)[L(x,y)] + w H(q(y|x)).
inline Tensor unlabeled_elbo_entropy_form(const PerClassTerms& t,
                                          double kl_weight = 1.0) {
  const double log_prior_y = -std::log(static_cast<double>(t.probs.cols()));
  const Tensor per_class =
      t.reconstruction + kl_weight * log_prior_y - scale(t.kl_z, kl_weight);
  return row_sum(t.probs * per_class) +
         scale(categorical_entropy(t.probs), kl_weight);
}

inline Tensor unlabeled_elbo_kl_form(const ModelConfig& c, const TensorMap& p,
                                     const Tensor& x, const std::vector<Tensor>& noise,
                                     double kl_weight = 1.0) {
  return unlabeled_elbo_kl_form(per_class_terms(c, p, x, noise), kl_weight);
}

inline Tensor unlabeled_elbo_entropy_form(const ModelConfig& c, const TensorMap& p,
                                          const Tensor& x,
                                          const std::vector<Tensor>& noise,
                                          double kl_weight = 1.0) {
  return unlabeled_elbo_entropy_form(per_class_terms(c, p, x, noise), kl_weight);
}

/// Entropy of the batch-averaged classifier output q(y).
inline Tensor marginal_entropy(const Tensor& probs) {
  return sum(categorical_entropy(reshape(column_mean(probs), Shape{1, probs.cols()})));
}

/// Batch estimate of I(y;x) = H(q(y)) - E_x[H(q(y|x))], q(y) the row mean.
inline Tensor mi_estimate(const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() < 1) {
    throw ShapeError("mi_estimate: expected [B,K] with B >= 1, got " +
                     shape_string(probs.shape()));
  }
  return marginal_entropy(probs) - mean(categorical_entropy(probs));
}

namespace detail {

struct UnlabeledPart {
  Tensor mean_u;
  Tensor mean_entropy;
  Tensor mi;
  Tensor marginal_h;
};

inline UnlabeledPart unlabeled_part(const ModelConfig& c, const TensorMap& p,
                                    const Tensor& x_unlabeled, double kl_weight,
                                    const std::vector<Tensor>& noise,
                                    ObjectiveBreakdown& bd) {
  const PerClassTerms t = per_class_terms(c, p, x_unlabeled, noise);
  const Tensor u = unlabeled_elbo_kl_form(t, kl_weight);
  const Tensor h = categorical_entropy(t.probs);
  UnlabeledPart out{mean(u), mean(h), {}, marginal_entropy(t.probs)};
  out.mi = out.marginal_h - out.mean_entropy;
  bd.reconstruction = mean(row_sum(t.probs * t.reconstruction)).item();
  bd.kl_y = mean(categorical_kl_to_uniform(t.probs)).item();
  bd.kl_z = mean(row_sum(t.probs * t.kl_z)).item();
  bd.classifier_entropy_mean = out.mean_entropy.item();
  bd.marginal_entropy = out.marginal_h.item();
  bd.mi_estimate = out.mi.item();
  bd.unlabeled_elbo = out.mean_u.item();
  return out;
}

}  // namespace detail

/// Batch MIER objective: mean U + gamma * I(y;x) - beta * mean H(q(y|x)).
inline ObjectiveResult mier_objective(const ModelConfig& c, const TensorMap& p,
                                      const Tensor& x_unlabeled,
                                      const ObjectiveConfig& cfg,
                                      const std::vector<Tensor>& noise) {
  cfg.validate();
  if (x_unlabeled.rows() < 2) {
    throw DomainError("mier_objective: the mutual-information estimate needs an "
                      "unlabeled batch of at least 2 examples");
  }
  ObjectiveResult r;
  const auto part =
      detail::unlabeled_part(c, p, x_unlabeled, cfg.kl_weight, noise, r.breakdown);
  r.value = part.mean_u + cfg.gamma * part.mi - cfg.beta * part.mean_entropy;
  r.breakdown.total = r.value.item();
  return r;
}

struct LabeledBatch {
  Tensor x;  // [B, D]
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

namespace detail {

// Shared assembly of J (regularize = false) and J2 (regularize = true).
inline ObjectiveResult assemble(const ModelConfig& c, const TensorMap& p,
                                const LabeledBatch& labeled,
                                const Tensor& x_unlabeled, const ObjectiveConfig& cfg,
                                const ObjectiveNoise& noise, bool regularize) {
  cfg.validate();
  if (labeled.size() == 0 && cfg.alpha > 0.0) {
    throw DomainError("objective: empty labeled batch with alpha > 0");
  }
  const bool has_unlabeled = x_unlabeled.size() > 0 && x_unlabeled.rows() > 0;
  if (regularize && has_unlabeled && x_unlabeled.rows() < 2) {
    throw DomainError("objective: unlabeled batch needs at least 2 examples");
  }
  ObjectiveResult r;
  Tensor total = Tensor::scalar(0.0);
  if (labeled.size() > 0) {
    const Tensor y = one_hot(labeled.labels, c.num_classes);
    const Tensor l = mean(labeled_elbo(c, p, labeled.x, y, noise.labeled, cfg.kl_weight));
    r.breakdown.labeled_elbo = l.item();
    total = total + l;
  }
  if (has_unlabeled) {
    const auto part = unlabeled_part(c, p, x_unlabeled, cfg.kl_weight,
                                     noise.unlabeled, r.breakdown);
    if (regularize) {
      total = total + (part.mean_u + cfg.gamma * part.mi - cfg.beta * part.mean_entropy);
    } else {
      total = total + part.mean_u;
    }
  }
  if (labeled.size() > 0) {
    const Tensor y = one_hot(labeled.labels, c.num_classes);
    const Tensor log_q = log_softmax_rows(classifier_logits(c, p, labeled.x));
    total = total + cfg.alpha * mean(row_sum(y * log_q));
  }
  r.value = total;
  r.breakdown.total = total.item();
  return r;
}

}  // namespace detail

/// J2 = mean L over labeled + mean M over unlabeled + alpha * mean log q(y|x).
inline ObjectiveResult total_objective_j2(const ModelConfig& c, const TensorMap& p,
                                          const LabeledBatch& labeled,
                                          const Tensor& x_unlabeled,
                                          const ObjectiveConfig& cfg,
                                          const ObjectiveNoise& noise) {
  return detail::assemble(c, p, labeled, x_unlabeled, cfg, noise, true);
}

/// Baseline J: as J2 with the unlabeled regularizers absent.
inline ObjectiveResult baseline_objective_j(const ModelConfig& c, const TensorMap& p,
                                            const LabeledBatch& labeled,
                                            const Tensor& x_unlabeled,
                                            const ObjectiveConfig& cfg,
                                            const ObjectiveNoise& noise) {
  return detail::assemble(c, p, labeled, x_unlabeled, cfg, noise, false);
}

struct KlMiDecomposition {
  double lhs;          // mean_x KL(q(y|x) || p(y))
  double mi;           // I(y;x) under the empirical q(x)
  double kl_marginal;  // KL(q(y) || p(y))
};

/// Empirical-batch check of mean KL(q(y|x)||p(y)) = I(y;x) + KL(q(y)||p(y)).
inline KlMiDecomposition kl_mi_lower_bound_check(const Tensor& probs) {
  const Tensor q_bar = reshape(column_mean(probs.detach()), Shape{1, probs.cols()});
  return {mean(categorical_kl_to_uniform(probs.detach())).item(),
          mi_estimate(probs.detach()).item(),
          sum(categorical_kl_to_uniform(q_bar)).item()};
}

}  // namespace mier
