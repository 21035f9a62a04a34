#pragma once

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mier/data.hpp"
#include "mier/io.hpp"
#include "mier/training.hpp"

namespace mier {

struct RunOutputs {
  TrainResult result;
  MetricsRecord final_metrics;
  MetricsRecord best_metrics;
  Dataset validation;
};

/// Parses a run config where model dimensions absent from the document are
/// left at 0, meaning "take them from the training data".
inline RunConfig load_run_config(const json& j) {
  json copy = j;
  if (!copy.contains("model")) copy["model"] = json::object();
  if (!copy["model"].contains("input_dim")) copy["model"]["input_dim"] = 0;
  if (!copy["model"].contains("num_classes")) copy["model"]["num_classes"] = 0;
  return run_config_from_json(copy);
}

/// Split, train and write everything a run produces into `out_dir`:
/// config.json, metrics.csv, checkpoint_best.json, checkpoint_final.json,
/// periodic checkpoint_epoch_<n>.json, and summary.json.
inline RunOutputs run_training(RunConfig cfg, const Dataset& train_data,
                               const std::optional<Dataset>& test_data,
                               const std::string& out_dir) {
  namespace fs = std::filesystem;
  train_data.validate();
  if (cfg.model.input_dim == 0) cfg.model.input_dim = train_data.dim();
  if (cfg.model.num_classes == 0) cfg.model.num_classes = train_data.num_classes;
  if (cfg.model.input_dim != train_data.dim()) {
    throw ConfigError("model.input_dim " + std::to_string(cfg.model.input_dim) +
                      " does not match data dimension " +
                      std::to_string(train_data.dim()));
  }
  if (cfg.model.num_classes < train_data.num_classes) {
    throw ConfigError("model.num_classes is smaller than the label range of the data");
  }
  if (test_data) {
    test_data->validate();
    if (test_data->dim() != train_data.dim()) {
      throw ConfigError("test data dimension does not match training data");
    }
  }
  Dataset train_copy = train_data;
  train_copy.num_classes = cfg.model.num_classes;
  SemiSupervisedSplit split = split_labeled(train_copy, cfg.labels_per_class, cfg.train.seed);
  RunOutputs out;
  out.validation = carve_validation(split, cfg.train.validation_fraction,
                                    cfg.train.seed + 1);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_text_file((dir / "config.json").string(), to_json(cfg).dump(2) + "\n");
  MetricsCsvWriter metrics((dir / "metrics.csv").string());

  auto checkpoint_of = [&](const EpochState& s) {
    return Checkpoint{s.params, s.optimizer, static_cast<std::int64_t>(s.epoch),
                      cfg.train.seed, s.noise_rng.serialize()};
  };
  out.result = train(
      cfg.train, split, cfg.model, out.validation, test_data, [&](const EpochState& s) {
        metrics.append(s.record);
        if (s.is_best) {
          save_checkpoint(checkpoint_of(s), (dir / "checkpoint_best.json").string());
        }
        if (cfg.train.checkpoint_every > 0 &&
            (s.epoch + 1) % cfg.train.checkpoint_every == 0) {
          save_checkpoint(checkpoint_of(s),
                          (dir / ("checkpoint_epoch_" + std::to_string(s.epoch + 1) +
                                  ".json"))
                              .string());
        }
      });
  const TrainResult& r = out.result;
  save_checkpoint({r.final_params, r.optimizer,
                   static_cast<std::int64_t>(cfg.train.epochs) - 1, cfg.train.seed, ""},
                  (dir / "checkpoint_final.json").string());

  const Dataset& eval_set = test_data ? *test_data : out.validation;
  json summary = {{"seed", cfg.train.seed},
                  {"mier_enabled", cfg.train.mier_enabled},
                  {"alpha", r.alpha},
                  {"epochs", cfg.train.epochs},
                  {"labels_per_class", cfg.labels_per_class},
                  {"best_epoch", r.best_epoch},
                  {"best_validation_accuracy", r.best_validation_accuracy},
                  {"eval_z_samples", cfg.train.final_eval_z_samples}};
  if (eval_set.size() > 0) {
    const std::uint64_t eval_seed = cfg.train.seed ^ 0xE7A1ULL;
    out.final_metrics =
        evaluate(r.final_params, eval_set, cfg.train.final_eval_z_samples, eval_seed);
    out.best_metrics =
        evaluate(r.best_params, eval_set, cfg.train.final_eval_z_samples, eval_seed);
    out.final_metrics.epoch = static_cast<std::int64_t>(cfg.train.epochs) - 1;
    if (!r.history.empty()) {
      out.final_metrics.objective_value = r.history.back().objective_value;
      out.final_metrics.lr = r.history.back().lr;
      out.final_metrics.kl_weight = r.history.back().kl_weight;
    }
    out.best_metrics.epoch = r.best_epoch;
    summary["final"] = to_json(out.final_metrics);
    summary["best"] = to_json(out.best_metrics);
  }
  write_text_file((dir / "summary.json").string(), summary.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------------------
// Baseline-vs-MIER comparison over run directories
// ---------------------------------------------------------------------------

struct RunSummary {
  std::string dir;
  std::uint64_t seed = 0;
  bool mier_enabled = false;
  MetricsRecord last;
};

/// Reads config.json (seed, MIER flag) and the last row of metrics.csv.
inline RunSummary read_run(const std::string& dir) {
  namespace fs = std::filesystem;
  const json cfg = read_json_file((fs::path(dir) / "config.json").string());
  const auto rows = read_metrics_csv((fs::path(dir) / "metrics.csv").string());
  if (rows.empty()) throw DataError("metrics_format", dir + ": metrics.csv has no rows");
  RunSummary s;
  s.dir = dir;
  s.seed = cfg.at("train").at("seed").get<std::uint64_t>();
  s.mier_enabled = cfg.at("train").at("mier_enabled").get<bool>();
  s.last = rows.back();
  return s;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Fixed-width table: one row per seed, baseline and MIER side by side,
/// followed by a row of medians over each column.
inline std::string comparison_table(const std::vector<RunSummary>& runs) {
  std::map<std::uint64_t, std::pair<std::optional<MetricsRecord>, std::optional<MetricsRecord>>>
      by_seed;
  for (const auto& r : runs) {
    auto& slot = by_seed[r.seed];
    (r.mier_enabled ? slot.second : slot.first) = r.last;
  }
  std::ostringstream os;
  auto cell = [&os](const std::optional<double>& v) {
    if (v) {
      os << std::setw(12) << std::fixed << std::setprecision(4) << *v;
    } else {
      os << std::setw(12) << "-";
    }
  };
  os << std::setw(8) << "seed" << std::setw(12) << "acc_base" << std::setw(12)
     << "acc_mier" << std::setw(12) << "ent_base" << std::setw(12) << "ent_mier"
     << std::setw(12) << "elbo_base" << std::setw(12) << "elbo_mier" << '\n';
  std::vector<double> cols[6];
  for (const auto& [seed, pair] : by_seed) {
    const auto& [base, mier] = pair;
    os << std::setw(8) << seed;
    const std::optional<double> vals[6] = {
        base ? std::optional(base->test_accuracy) : std::nullopt,
        mier ? std::optional(mier->test_accuracy) : std::nullopt,
        base ? std::optional(base->mean_classifier_entropy) : std::nullopt,
        mier ? std::optional(mier->mean_classifier_entropy) : std::nullopt,
        base ? std::optional(base->elbo_bound) : std::nullopt,
        mier ? std::optional(mier->elbo_bound) : std::nullopt};
    for (int i = 0; i < 6; ++i) {
      cell(vals[i]);
      if (vals[i]) cols[i].push_back(*vals[i]);
    }
    os << '\n';
  }
  os << std::setw(8) << "median";
  for (auto& c : cols) {
    cell(c.empty() ? std::nullopt : std::optional(median(c)));
  }
  os << '\n';
  return os.str();
}

}  // namespace mier
