#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mier/adam.hpp"
#include "mier/error.hpp"
#include "mier/model.hpp"
#include "mier/objectives.hpp"
#include "mier/training.hpp"

namespace mier {

using json = nlohmann::json;

/// Model + objective + training settings as one JSON document.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t labels_per_class = 100;
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> known,
                           const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

}  // namespace detail

inline json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},
          {"num_classes", c.num_classes},
          {"latent_dim", c.latent_dim},
          {"hidden_dims", c.hidden_dims},
          {"classifier_hidden", c.classifier_hidden},
          {"likelihood", to_string(c.likelihood)},
          {"gaussian_variance", c.gaussian_variance}};
}

inline ModelConfig model_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"input_dim", "num_classes", "latent_dim", "hidden_dims",
                          "classifier_hidden", "likelihood", "gaussian_variance"},
                         "model");
  ModelConfig c;
  detail::read_opt(j, "input_dim", c.input_dim);
  detail::read_opt(j, "num_classes", c.num_classes);
  detail::read_opt(j, "latent_dim", c.latent_dim);
  detail::read_opt(j, "hidden_dims", c.hidden_dims);
  detail::read_opt(j, "classifier_hidden", c.classifier_hidden);
  detail::read_opt(j, "gaussian_variance", c.gaussian_variance);
  if (j.contains("likelihood")) {
    c.likelihood = likelihood_from_string(j.at("likelihood").get<std::string>());
  }
  return c;
}

inline json to_json(const RunConfig& r) {
  const TrainConfig& t = r.train;
  json objective = {{"alpha", t.alpha ? json(*t.alpha) : json(nullptr)},
                    {"beta", t.objective.beta},
                    {"gamma", t.objective.gamma},
                    {"z_samples_per_class", t.objective.z_samples_per_class}};
  json train = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"lr_halving_period", t.lr_halving_period},
                {"warmup_epochs", t.warmup_epochs},
                {"seed", t.seed},
                {"checkpoint_every", t.checkpoint_every},
                {"mier_enabled", t.mier_enabled},
                {"validation_fraction", t.validation_fraction},
                {"eval_z_samples", t.eval_z_samples},
                {"final_eval_z_samples", t.final_eval_z_samples},
                {"labels_per_class", r.labels_per_class}};
  return {{"model", to_json(r.model)}, {"objective", objective}, {"train", train}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const json& j) {
  detail::reject_unknown(j, {"model", "objective", "train"}, "config");
  RunConfig r;
  if (j.contains("model")) r.model = model_config_from_json(j.at("model"));
  if (j.contains("objective")) {
    const json& o = j.at("objective");
    detail::reject_unknown(o, {"alpha", "beta", "gamma", "z_samples_per_class"},
                           "objective");
    if (o.contains("alpha") && !o.at("alpha").is_null()) {
      r.train.alpha = o.at("alpha").get<double>();
    }
    detail::read_opt(o, "beta", r.train.objective.beta);
    detail::read_opt(o, "gamma", r.train.objective.gamma);
    detail::read_opt(o, "z_samples_per_class", r.train.objective.z_samples_per_class);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::reject_unknown(
        t,
        {"epochs", "batch_size", "lr", "lr_halving_period", "warmup_epochs", "seed",
         "checkpoint_every", "mier_enabled", "validation_fraction", "eval_z_samples",
         "final_eval_z_samples", "labels_per_class"},
        "train");
    detail::read_opt(t, "epochs", r.train.epochs);
    detail::read_opt(t, "batch_size", r.train.batch_size);
    detail::read_opt(t, "lr", r.train.lr);
    detail::read_opt(t, "lr_halving_period", r.train.lr_halving_period);
    detail::read_opt(t, "warmup_epochs", r.train.warmup_epochs);
    detail::read_opt(t, "seed", r.train.seed);
    detail::read_opt(t, "checkpoint_every", r.train.checkpoint_every);
    detail::read_opt(t, "mier_enabled", r.train.mier_enabled);
    detail::read_opt(t, "validation_fraction", r.train.validation_fraction);
    detail::read_opt(t, "eval_z_samples", r.train.eval_z_samples);
    detail::read_opt(t, "final_eval_z_samples", r.train.final_eval_z_samples);
    detail::read_opt(t, "labels_per_class", r.labels_per_class);
  }
  return r;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("io", path + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("json_parse", path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("io", path + ": cannot write");
  out << text;
}

// ---------------------------------------------------------------------------
// Objective breakdown
// ---------------------------------------------------------------------------

inline json to_json(const ObjectiveBreakdown& b) {
  return {{"reconstruction", b.reconstruction},
          {"kl_y", b.kl_y},
          {"kl_z", b.kl_z},
          {"classifier_entropy_mean", b.classifier_entropy_mean},
          {"marginal_entropy", b.marginal_entropy},
          {"mi_estimate", b.mi_estimate},
          {"labeled_elbo", b.labeled_elbo},
          {"unlabeled_elbo", b.unlabeled_elbo},
          {"total", b.total}};
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline json to_json(const ParameterMap& params) {
  json out = json::object();
  for (const auto& [name, a] : params) {
    out[name] = {{"shape", a.shape}, {"data", a.data}};
  }
  return out;
}

inline ParameterMap parameter_map_from_json(const json& j) {
  ParameterMap out;
  for (const auto& [name, v] : j.items()) {
    out.emplace(name, Array(v.at("shape").get<Shape>(),
                            v.at("data").get<std::vector<double>>()));
  }
  return out;
}

struct Checkpoint {
  M2Parameters params;
  AdamState optimizer;
  std::int64_t epoch = -1;
  std::uint64_t seed = 0;
  std::string rng_state;
};

inline json to_json(const Checkpoint& c) {
  const auto& h = c.optimizer.hyper;
  return {{"format", "mier-checkpoint"},
          {"version", 1},
          {"config", to_json(c.params.config)},
          {"parameters", to_json(c.params.tensors)},
          {"optimizer",
           {{"lr", h.lr},
            {"beta1", h.beta1},
            {"beta2", h.beta2},
            {"eps", h.eps},
            {"t", c.optimizer.t},
            {"m", to_json(c.optimizer.m)},
            {"v", to_json(c.optimizer.v)}}},
          {"epoch", c.epoch},
          {"seed", c.seed},
          {"rng_state", c.rng_state}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "mier-checkpoint") {
    throw DataError("checkpoint_format", "not a checkpoint document");
  }
  try {
    Checkpoint c;
    c.params.config = model_config_from_json(j.at("config"));
    c.params.tensors = parameter_map_from_json(j.at("parameters"));
    const json& o = j.at("optimizer");
    c.optimizer.hyper = {o.at("lr").get<double>(), o.at("beta1").get<double>(),
                         o.at("beta2").get<double>(), o.at("eps").get<double>()};
    c.optimizer.t = o.at("t").get<std::uint64_t>();
    c.optimizer.m = parameter_map_from_json(o.at("m"));
    c.optimizer.v = parameter_map_from_json(o.at("v"));
    c.epoch = j.at("epoch").get<std::int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.rng_state = j.at("rng_state").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw DataError("checkpoint_format", std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  write_text_file(path, to_json(c).dump());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "epoch,test_accuracy,mean_classifier_entropy,elbo_bound,mi_estimate,"
    "objective_value,lr,kl_weight";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metrics_row(const MetricsRecord& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.test_accuracy, r.mean_classifier_entropy, r.elbo_bound,
                   r.mi_estimate, r.objective_value, r.lr, r.kl_weight}) {
    s += ',' + format_double(v);
  }
  return s;
}

/// Append-only metrics file; the header is written on open.
class MetricsCsvWriter {
 public:
  explicit MetricsCsvWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw DataError("io", path + ": cannot write");
    out_ << kMetricsHeader << '\n';
    out_.flush();
  }

  void append(const MetricsRecord& r) {
    out_ << metrics_row(r) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

inline std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("io", path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw DataError("metrics_format", path + ": unexpected header");
  }
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 8) throw DataError("metrics_format", path + ": bad row '" + line + "'");
    out.push_back({static_cast<std::int64_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6],
                   v[7]});
  }
  return out;
}

inline json to_json(const MetricsRecord& r) {
  return {{"epoch", r.epoch},
          {"test_accuracy", r.test_accuracy},
          {"mean_classifier_entropy", r.mean_classifier_entropy},
          {"elbo_bound", r.elbo_bound},
          {"mi_estimate", r.mi_estimate},
          {"objective_value", r.objective_value},
          {"lr", r.lr},
          {"kl_weight", r.kl_weight}};
}

inline MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord r;
  r.epoch = j.at("epoch").get<std::int64_t>();
  r.test_accuracy = j.at("test_accuracy").get<double>();
  r.mean_classifier_entropy = j.at("mean_classifier_entropy").get<double>();
  r.elbo_bound = j.at("elbo_bound").get<double>();
  r.mi_estimate = j.at("mi_estimate").get<double>();
  r.objective_value = j.at("objective_value").get<double>();
  r.lr = j.at("lr").get<double>();
  r.kl_weight = j.at("kl_weight").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5)
// ---------------------------------------------------------------------------

/// Tiles the rows of `images` (each image_rows*image_cols values in [0,1])
/// into a grid with `tiles_per_row` columns, and writes an 8-bit P5 file.
inline void write_pgm(const std::string& path, const Array& images,
                      std::size_t image_rows, std::size_t image_cols,
                      std::size_t tiles_per_row) {
  if (image_rows * image_cols != images.cols() || tiles_per_row == 0) {
    throw ShapeError("write_pgm: images of width " + std::to_string(images.cols()) +
                     " do not tile as " + std::to_string(image_rows) + "x" +
                     std::to_string(image_cols));
  }
  const std::size_t n = images.rows();
  const std::size_t grid_rows = (n + tiles_per_row - 1) / tiles_per_row;
  const std::size_t width = tiles_per_row * image_cols;
  const std::size_t height = grid_rows * image_rows;
  std::vector<unsigned char> pixels(width * height, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t tr = i / tiles_per_row, tc = i % tiles_per_row;
    for (std::size_t r = 0; r < image_rows; ++r) {
      for (std::size_t c = 0; c < image_cols; ++c) {
        const double v = std::clamp(images.at(i, r * image_cols + c), 0.0, 1.0);
        pixels[(tr * image_rows + r) * width + tc * image_cols + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("io", path + ": cannot write");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

}  // namespace mier
