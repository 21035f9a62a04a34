#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mier/adam.hpp"
#include "mier/data.hpp"
#include "mier/distributions.hpp"
#include "mier/error.hpp"
#include "mier/model.hpp"
#include "mier/objectives.hpp"
#include "mier/rng.hpp"

namespace mier {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 200;
  double lr = 3e-4;
  std::size_t lr_halving_period = 150;
  std::size_t warmup_epochs = 60;
  ObjectiveConfig objective;
  // Unset: 0.1 * (training examples / labeled examples).
  std::optional<double> alpha;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;
  bool mier_enabled = true;
  double validation_fraction = 0.1;
  std::size_t eval_z_samples = 1;         // per-epoch metrics
  std::size_t final_eval_z_samples = 100; // end-of-run evaluation

  void validate() const {
    if (warmup_epochs > epochs) throw ConfigError("warmup_epochs must be <= epochs");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (lr_halving_period < 1) throw ConfigError("lr_halving_period must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("validation_fraction must lie in [0,1)");
    }
    if (eval_z_samples < 1 || final_eval_z_samples < 1) {
      throw ConfigError("evaluation z samples must be >= 1");
    }
    if (alpha && !(*alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
    objective.validate();
  }
};

struct MetricsRecord {
  std::int64_t epoch = 0;
  double test_accuracy = 0.0;
  double mean_classifier_entropy = 0.0;
  double elbo_bound = 0.0;
  double mi_estimate = 0.0;
  double objective_value = 0.0;
  double lr = 0.0;
  double kl_weight = 1.0;

  bool operator==(const MetricsRecord&) const = default;
};

/// Linear KL warm-up: min(1, epoch / warmup_epochs); 1 when warm-up is off.
inline double warmup_weight(std::size_t epoch, std::size_t warmup_epochs) {
  if (warmup_epochs == 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

/// Base rate halved once per completed `period` epochs.
inline double learning_rate_at(double base_lr, std::size_t epoch, std::size_t period) {
  return base_lr * std::pow(0.5, static_cast<double>(epoch / period));
}

/// Lowest index wins ties.
inline std::size_t argmax_row(const Tensor& probs, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < probs.cols(); ++j) {
    if (probs.at(row, j) > probs.at(row, best)) best = j;
  }
  return best;
}

inline double accuracy(const M2Parameters& params, const Dataset& d) {
  if (d.size() == 0) throw DataError("empty_dataset", "accuracy: empty dataset");
  const Tensor probs = classify(params, Tensor(d.inputs));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hits += argmax_row(probs, i) == d.labels[i];
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

/// Accuracy, classifier entropy, MI estimate and the unlabeled bound U(x)
/// (z_samples reparameterized draws per class) over a labeled dataset.
inline MetricsRecord evaluate(const M2Parameters& params, const Dataset& d,
                              std::size_t z_samples, std::uint64_t seed = 0) {
  if (d.size() == 0) throw DataError("empty_dataset", "evaluate: empty test set");
  if (z_samples < 1) throw ConfigError("evaluate: z_samples must be >= 1");
  const ModelConfig& c = params.config;
  const TensorMap p = attach(params.tensors, false);
  const Tensor probs = classify(c, p, Tensor(d.inputs));

  MetricsRecord r;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hits += argmax_row(probs, i) == d.labels[i];
  r.test_accuracy = static_cast<double>(hits) / static_cast<double>(d.size());
  r.mean_classifier_entropy = mean(categorical_entropy(probs)).item();
  r.mi_estimate = mi_estimate(probs).item();

  Rng rng(seed);
  constexpr std::size_t kChunk = 256;
  double bound_sum = 0.0;
  for (std::size_t start = 0; start < d.size(); start += kChunk) {
    const std::size_t end = std::min(d.size(), start + kChunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const Tensor x = gather_rows(d, idx);
    std::vector<Tensor> noise;
    for (std::size_t s = 0; s < z_samples; ++s) {
      noise.push_back(normal_matrix(rng, c.num_classes * idx.size(), c.latent_dim));
    }
    bound_sum += sum(unlabeled_elbo_kl_form(c, p, x, noise)).item();
  }
  r.elbo_bound = bound_sum / static_cast<double>(d.size());
  return r;
}

inline std::string describe(const ObjectiveBreakdown& b) {
  std::ostringstream os;
  os.precision(17);
  os << "reconstruction=" << b.reconstruction << " kl_y=" << b.kl_y
     << " kl_z=" << b.kl_z << " classifier_entropy_mean=" << b.classifier_entropy_mean
     << " marginal_entropy=" << b.marginal_entropy << " mi_estimate=" << b.mi_estimate
     << " labeled_elbo=" << b.labeled_elbo << " unlabeled_elbo=" << b.unlabeled_elbo
     << " total=" << b.total;
  return os.str();
}

/// One optimizer step on -J2 (or -J without MIER). Aborts with
/// NonFiniteLoss, carrying the objective breakdown, if the objective or any
/// gradient is not finite; parameters are left untouched in that case.
inline ObjectiveBreakdown train_step(const ModelConfig& model_config, ParameterMap& params,
                                     AdamState& adam, const LabeledBatch& labeled,
                                     const Tensor& x_unlabeled, const ObjectiveConfig& obj,
                                     const ObjectiveNoise& noise, bool mier_enabled,
                                     std::size_t epoch, std::size_t step) {
  const TensorMap leaves = attach(params, true);
  const ObjectiveResult r =
      mier_enabled
          ? total_objective_j2(model_config, leaves, labeled, x_unlabeled, obj, noise)
          : baseline_objective_j(model_config, leaves, labeled, x_unlabeled, obj, noise);
  const std::string where =
      "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": ";
  if (!std::isfinite(r.breakdown.total)) {
    throw NonFiniteLoss(where + "non-finite objective; " + describe(r.breakdown));
  }
  backward(-r.value);
  const GradientMap grads = collect_gradients(leaves);
  for (const auto& [name, g] : grads) {
    if (!all_finite(g.data)) {
      throw NonFiniteLoss(where + "non-finite gradient for " + name + "; " +
                          describe(r.breakdown));
    }
  }
  adam_step(params, grads, adam);
  return r.breakdown;
}

/// Everything a caller may persist at the end of an epoch.
struct EpochState {
  std::size_t epoch;
  const M2Parameters& params;
  const AdamState& optimizer;
  const MetricsRecord& record;
  const Rng& noise_rng;
  bool is_best;
};

struct TrainResult {
  M2Parameters final_params;
  M2Parameters best_params;
  std::int64_t best_epoch = -1;
  double best_validation_accuracy = -1.0;
  std::vector<MetricsRecord> history;
  AdamState optimizer;
  double alpha = 0.0;
};

inline double default_alpha(std::size_t total_examples, std::size_t labeled_examples) {
  return 0.1 * static_cast<double>(total_examples) /
         static_cast<double>(std::max<std::size_t>(labeled_examples, 1));
}

/// Optimizes -J2 (or -J when MIER is off) with Adam.
///
/// `split.unlabeled` is used as given; carve a validation slice beforehand
/// with `carve_validation`. Per-epoch records are computed on `test` when it
/// is provided, otherwise on `validation`. The best parameters are those
/// with the highest validation accuracy (later epochs win ties).
inline TrainResult train(const TrainConfig& cfg, const SemiSupervisedSplit& split,
                         const ModelConfig& model_config,
                         const Dataset& validation = {},
                         const std::optional<Dataset>& test = std::nullopt,
                         const std::function<void(const EpochState&)>& on_epoch = {}) {
  cfg.validate();
  model_config.validate();
  if (split.labeled.size() == 0) {
    throw DataError("empty_dataset", "train: no labeled examples");
  }
  if (split.labeled.dim() != model_config.input_dim) {
    throw ShapeError("train: data dimension " + std::to_string(split.labeled.dim()) +
                     " does not match model input_dim " +
                     std::to_string(model_config.input_dim));
  }
  TrainResult result;
  M2Parameters params = init_parameters(model_config, cfg.seed);
  AdamState adam = AdamState::for_params(params.tensors, {cfg.lr, 0.9, 0.999, 1e-8});
  Rng noise_rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);

  ObjectiveConfig obj = cfg.objective;
  obj.alpha = cfg.alpha ? *cfg.alpha
                        : default_alpha(split.labeled.size() + split.unlabeled.size() +
                                            validation.size(),
                                        split.labeled.size());
  result.alpha = obj.alpha;
  const std::size_t k = model_config.num_classes;
  const std::size_t latent = model_config.latent_dim;
  result.best_params = params;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    obj.kl_weight = warmup_weight(epoch, cfg.warmup_epochs);
    adam.hyper.lr = learning_rate_at(cfg.lr, epoch, cfg.lr_halving_period);
    double objective_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& pair : make_batches(split, cfg.batch_size, cfg.seed, epoch)) {
      const LabeledBatch labeled{gather_rows(split.labeled, pair.labeled),
                                 gather_labels(split.labeled, pair.labeled)};
      const Tensor x_u = gather_rows(split.unlabeled, pair.unlabeled);
      const ObjectiveNoise noise =
          draw_noise(noise_rng, labeled.size(), x_u.rows(), k, latent,
                     obj.z_samples_per_class);
      const ObjectiveBreakdown bd = train_step(model_config, params.tensors, adam, labeled,
                                               x_u, obj, noise, cfg.mier_enabled, epoch,
                                               steps);
      objective_sum += bd.total;
      ++steps;
    }

    const Dataset& report_set = test ? *test : validation;
    MetricsRecord rec;
    if (report_set.size() > 0) {
      rec = evaluate(params, report_set, cfg.eval_z_samples,
                     epoch_seed(cfg.seed, epoch) ^ 0x5EEDULL);
    }
    rec.epoch = static_cast<std::int64_t>(epoch);
    rec.objective_value = steps ? objective_sum / static_cast<double>(steps) : 0.0;
    rec.lr = adam.hyper.lr;
    rec.kl_weight = obj.kl_weight;
    result.history.push_back(rec);

    const double val_acc =
        validation.size() > 0 ? accuracy(params, validation) : rec.test_accuracy;
    const bool is_best = val_acc >= result.best_validation_accuracy;
    if (is_best) {
      result.best_validation_accuracy = val_acc;
      result.best_epoch = static_cast<std::int64_t>(epoch);
      result.best_params = params;
    }
    if (on_epoch) on_epoch({epoch, params, adam, rec, noise_rng, is_best});
  }
  result.final_params = std::move(params);
  result.optimizer = std::move(adam);
  return result;
}

/// Decoder means for `num_per_class` prior draws of z per class, class-major:
/// rows [c * n, (c+1) * n) belong to class c. Shape (K * n) x D, in [0,1].
inline Array generate_samples(const M2Parameters& params, std::size_t num_per_class,
                              std::uint64_t seed) {
  const ModelConfig& c = params.config;
  Rng rng(seed);
  std::vector<std::size_t> labels;
  for (std::size_t cls = 0; cls < c.num_classes; ++cls)
    for (std::size_t i = 0; i < num_per_class; ++i) labels.push_back(cls);
  const Tensor z = normal_matrix(rng, labels.size(), c.latent_dim);
  const Tensor out = decoded_mean(c, decode(params, z, one_hot(labels, c.num_classes)));
  return out.array();
}

/// Decoder means of test inputs passed through q(y|x) argmax and the
/// posterior mean of q(z|x,y).
inline Array reconstruct(const M2Parameters& params, const Tensor& x) {
  const ModelConfig& c = params.config;
  const TensorMap p = attach(params.tensors, false);
  const Tensor probs = classify(c, p, x);
  std::vector<std::size_t> labels(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) labels[i] = argmax_row(probs, i);
  const Tensor y = one_hot(labels, c.num_classes);
  const DiagonalGaussian q = encode(c, p, x, y);
  return decoded_mean(c, decode(c, p, q.mu, y)).array();
}

}  // namespace mier
