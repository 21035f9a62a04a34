#pragma once

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mier/mier.hpp"

namespace mier::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCheckFailed = 2;

/// CSV path, or "images.idx,labels.idx" for an IDX pair.
inline Dataset load_dataset(const std::string& spec) {
  const auto comma = spec.find(',');
  if (comma != std::string::npos) {
    return load_idx(spec.substr(0, comma), spec.substr(comma + 1));
  }
  return read_csv(spec);
}

inline std::size_t thread_cap() {
  const char* env = std::getenv("MIER_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("MIER_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

inline bool parse_on_off(const std::string& v) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw ConfigError("--mier expects 'on' or 'off', got '" + v + "'");
}

/// Square images when D is a perfect square, otherwise 1 x D strips.
inline std::pair<std::size_t, std::size_t> image_shape(std::size_t d) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
  if (side * side == d) return {side, side};
  return {1, d};
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, char** argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Semi-supervised M2 VAE with mutual-information and entropy regularization"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic Gaussian-mixture dataset as CSV");
  std::size_t gen_classes = 4, gen_per_class = 250, gen_dim = 2;
  double gen_sep = 4.0, gen_noise = 1.0;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--classes", gen_classes, "Number of classes")->capture_default_str();
  gen->add_option("--per-class", gen_per_class, "Points per class")->capture_default_str();
  gen->add_option("--dim", gen_dim, "Feature dimension (>= 2)")->capture_default_str();
  gen->add_option("--separation", gen_sep, "Radius of the class-centre circle")
      ->capture_default_str();
  gen->add_option("--noise", gen_noise, "Per-coordinate noise sigma")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train baseline or MIER model and write a run directory");
  std::string tr_config, tr_data, tr_test, tr_out, tr_mier;
  std::optional<std::size_t> tr_labels;
  std::optional<std::uint64_t> tr_seed;
  tr->add_option("--config", tr_config, "Run config JSON (model/objective/train sections)")
      ->required();
  tr->add_option("--train-data", tr_data, "Training CSV, or images.idx,labels.idx")->required();
  tr->add_option("--test-data", tr_test, "Test CSV or IDX pair (per-epoch metrics)");
  tr->add_option("--labels-per-class", tr_labels, "Override train.labels_per_class");
  tr->add_option("--mier", tr_mier, "Override train.mier_enabled: on|off");
  tr->add_option("--seed", tr_seed, "Override train.seed");
  tr->add_option("--out", tr_out, "Run output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; prints a metrics record as JSON");
  std::string ev_ckpt, ev_data;
  std::size_t ev_z = 100;
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON")->required();
  ev->add_option("--test-data", ev_data, "Labeled test CSV or IDX pair")->required();
  ev->add_option("--z-samples", ev_z, "z draws per class for the bound")->capture_default_str();
  ev->add_option("--seed", ev_seed, "Noise seed")->capture_default_str();

  // verify
  auto* ve = app.add_subcommand("verify", "Exact identity suites; exit 0 iff all residuals < 1e-10");
  std::size_t ve_trials = 1000;
  std::uint64_t ve_seed = 7;
  ve->add_option("--trials", ve_trials, "Random worlds / batches per identity")
      ->capture_default_str();
  ve->add_option("--seed", ve_seed, "Random seed")->capture_default_str();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full objective");
  std::uint64_t gc_seed = 0;
  std::size_t gc_count = 20;
  double gc_tol = 1e-4;
  gc->add_option("--seed", gc_seed, "First seed")->capture_default_str();
  gc->add_option("--seeds", gc_count, "Number of consecutive seeds")->capture_default_str();
  gc->add_option("--tolerance", gc_tol, "Max relative error")->capture_default_str();

  // sample
  auto* sa = app.add_subcommand("sample", "Decode prior samples per class into a PGM grid");
  std::string sa_ckpt, sa_out, sa_recon;
  std::size_t sa_per_class = 3;
  std::uint64_t sa_seed = 0;
  sa->add_option("--checkpoint", sa_ckpt, "Checkpoint JSON")->required();
  sa->add_option("--per-class", sa_per_class, "Samples per class")->capture_default_str();
  sa->add_option("--seed", sa_seed, "Random seed")->capture_default_str();
  sa->add_option("--out", sa_out, "Output PGM path")->required();
  sa->add_option("--reconstruct", sa_recon,
                 "Also write reconstructions of this dataset's inputs to <out>.recon.pgm");

  // report
  auto* rp = app.add_subcommand("report", "Compare baseline and MIER run directories per seed");
  std::vector<std::string> rp_dirs;
  rp->add_option("runs", rp_dirs, "Run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return kExitError;
  }

  try {
    thread_cap();
    if (*gen) {
      write_csv(generate_gaussian_mixture(gen_classes, gen_per_class, gen_dim, gen_sep,
                                          gen_noise, gen_seed),
                gen_out);
      return kExitOk;
    }
    if (*tr) {
      RunConfig cfg = load_run_config(read_json_file(tr_config));
      if (tr_labels) cfg.labels_per_class = *tr_labels;
      if (!tr_mier.empty()) cfg.train.mier_enabled = parse_on_off(tr_mier);
      if (tr_seed) cfg.train.seed = *tr_seed;
      const Dataset train_data = load_dataset(tr_data);
      std::optional<Dataset> test_data;
      if (!tr_test.empty()) test_data = load_dataset(tr_test);
      const RunOutputs r = run_training(cfg, train_data, test_data, tr_out);
      out << to_json(r.final_metrics).dump() << '\n';
      return kExitOk;
    }
    if (*ev) {
      const Checkpoint c = load_checkpoint(ev_ckpt);
      Dataset d = load_dataset(ev_data);
      MetricsRecord rec = evaluate(c.params, d, ev_z, ev_seed);
      rec.epoch = c.epoch;
      out << to_json(rec).dump() << '\n';
      return kExitOk;
    }
    if (*ve) {
      const auto rows = run_verification(ve_trials, ve_seed);
      out << format_verify_table(rows);
      for (const auto& r : rows) {
        if (!r.pass()) return kExitCheckFailed;
      }
      return kExitOk;
    }
    if (*gc) {
      double worst = 0.0;
      out << std::setw(8) << "seed" << std::setw(16) << "max_rel_err" << std::setw(16)
          << "max_abs_err" << "  worst_parameter\n";
      for (std::uint64_t s = gc_seed; s < gc_seed + gc_count; ++s) {
        const auto rep = gradcheck_j2(s);
        worst = std::max(worst, rep.max_relative_error);
        out << std::setw(8) << s << std::setw(16) << std::scientific << std::setprecision(3)
            << rep.max_relative_error << std::setw(16) << rep.max_absolute_error << "  "
            << rep.worst_parameter << '[' << rep.worst_index << "]\n";
      }
      const bool ok = worst < gc_tol;
      out << "max relative error " << worst << (ok ? " < " : " >= ") << gc_tol
          << (ok ? "  PASS\n" : "  FAIL\n");
      return ok ? kExitOk : kExitCheckFailed;
    }
    if (*sa) {
      const Checkpoint c = load_checkpoint(sa_ckpt);
      const auto [rows, cols] = image_shape(c.params.config.input_dim);
      write_pgm(sa_out, generate_samples(c.params, sa_per_class, sa_seed), rows, cols,
                sa_per_class);
      if (!sa_recon.empty()) {
        const Dataset d = load_dataset(sa_recon);
        write_pgm(sa_out + ".recon.pgm", reconstruct(c.params, Tensor(d.inputs)), rows, cols,
                  std::max<std::size_t>(1, sa_per_class));
      }
      return kExitOk;
    }
    if (*rp) {
      std::vector<RunSummary> runs;
      for (const auto& d : rp_dirs) runs.push_back(read_run(d));
      out << comparison_table(runs);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}

}  // namespace mier::cli
