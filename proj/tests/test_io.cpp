#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "support.hpp"

namespace mier {
namespace {

using testing::TempDir;

Checkpoint sample_checkpoint() {
  const ToyProblem t = make_toy_problem(3, toy_model_config());
  Checkpoint c;
  c.params = t.params;
  c.optimizer = AdamState::for_params(t.params.tensors, {1e-3, 0.9, 0.999, 1e-8});
  Rng rng(3);
  for (auto& [name, a] : c.optimizer.m)
    for (auto& v : a.data) v = rng.normal() * 1e-3;
  for (auto& [name, a] : c.optimizer.v)
    for (auto& v : a.data) v = rng.uniform() * 1e-7;
  c.optimizer.t = 17;
  c.epoch = 4;
  c.seed = 99;
  rng.normal();
  c.rng_state = rng.serialize();
  return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir;
  Checkpoint c = sample_checkpoint();
  c.params.tensors.begin()->second.data[0] = 0.1 + 0.2;  // non-terminating binary value
  c.params.tensors.begin()->second.data[1] = std::numeric_limits<double>::denorm_min();
  save_checkpoint(c, dir.file("ck.json"));
  const Checkpoint back = load_checkpoint(dir.file("ck.json"));
  EXPECT_EQ(back.params.tensors, c.params.tensors);
  EXPECT_EQ(back.params.config.hidden_dims, c.params.config.hidden_dims);
  EXPECT_EQ(back.params.config.input_dim, c.params.config.input_dim);
  EXPECT_EQ(back.optimizer.m, c.optimizer.m);
  EXPECT_EQ(back.optimizer.v, c.optimizer.v);
  EXPECT_EQ(back.optimizer.t, 17u);
  EXPECT_EQ(back.optimizer.hyper.lr, 1e-3);
  EXPECT_EQ(back.epoch, 4);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.rng_state, c.rng_state);
}

TEST(Checkpoint, RestoredRngContinuesTheStream) {
  const Checkpoint c = sample_checkpoint();
  Rng a(3);
  for (int i = 0; i < 7; ++i) (void)a.next_u64();
  Rng b(0);
  b.deserialize(a.serialize());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng r(1);
  EXPECT_NO_THROW(r.deserialize(c.rng_state));
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
  const ToyProblem t = make_toy_problem(5, toy_model_config());
  ObjectiveConfig obj;
  obj.alpha = 0.1;
  M2Parameters p = t.params;
  AdamState adam = AdamState::for_params(p.tensors, {});
  for (int s = 0; s < 2; ++s) {
    (void)train_step(p.config, p.tensors, adam, t.labeled, t.x_unlabeled, obj, t.noise, true, 0,
                     static_cast<std::size_t>(s));
  }
  TempDir dir;
  save_checkpoint({p, adam, 0, 5, ""}, dir.file("mid.json"));
  Checkpoint resumed = load_checkpoint(dir.file("mid.json"));
  for (int s = 2; s < 4; ++s) {
    const auto n = static_cast<std::size_t>(s);
    (void)train_step(p.config, p.tensors, adam, t.labeled, t.x_unlabeled, obj, t.noise, true, 0,
                     n);
    (void)train_step(resumed.params.config, resumed.params.tensors, resumed.optimizer,
                     t.labeled, t.x_unlabeled, obj, t.noise, true, 0, n);
  }
  EXPECT_EQ(resumed.params.tensors, p.tensors);
}

TEST(Checkpoint, MalformedDocumentsAreRejected) {
  auto code_of = [](const json& j) {
    try {
      (void)checkpoint_from_json(j);
    } catch (const DataError& e) {
      return e.code();
    }
    return std::string("none");
  };
  EXPECT_EQ(code_of(json{{"format", "other"}}), "checkpoint_format");
  json j = to_json(sample_checkpoint());
  j.erase("optimizer");
  EXPECT_EQ(code_of(j), "checkpoint_format");
  TempDir dir;
  testing::write_bytes(dir.file("bad.json"), {'{', 'x'});
  try {
    (void)load_checkpoint(dir.file("bad.json"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), "json_parse");
  }
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig r;
  r.model.input_dim = 5;
  r.model.num_classes = 3;
  r.model.hidden_dims = {11, 7};
  r.model.likelihood = Likelihood::Gaussian;
  r.train.epochs = 12;
  r.train.alpha = 2.5;
  r.train.objective.beta = 3.0;
  r.train.objective.gamma = 0.5;
  r.train.mier_enabled = false;
  r.labels_per_class = 9;
  const RunConfig back = run_config_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_EQ(back.model.hidden_dims, (std::vector<std::size_t>{11, 7}));
  EXPECT_EQ(*back.train.alpha, 2.5);
  EXPECT_FALSE(back.train.mier_enabled);
}

TEST(RunConfig, MissingKeysKeepDefaults) {
  const RunConfig r = run_config_from_json(json::object());
  EXPECT_EQ(r.train.epochs, 300u);
  EXPECT_EQ(r.train.lr, 3e-4);
  EXPECT_FALSE(r.train.alpha.has_value());
  EXPECT_EQ(r.model.hidden_dims, (std::vector<std::size_t>{600, 600}));
}

TEST(RunConfig, UnknownKeysAreRejected) {
  EXPECT_THROW((void)run_config_from_json(json{{"extra", 1}}), ConfigError);
  EXPECT_THROW((void)run_config_from_json(json{{"train", {{"epoch", 3}}}}), ConfigError);
  EXPECT_THROW((void)run_config_from_json(json{{"model", {{"latent", 3}}}}), ConfigError);
  EXPECT_THROW((void)run_config_from_json(json{{"objective", {{"delta", 3}}}}), ConfigError);
  EXPECT_THROW((void)run_config_from_json(json{{"train", {{"epochs", "many"}}}}), ConfigError);
}

TEST(MetricsCsv, RoundTripIsExact) {
  TempDir dir;
  std::vector<MetricsRecord> rows;
  Rng rng(4);
  for (std::int64_t e = 0; e < 5; ++e) {
    rows.push_back({e, rng.uniform(), rng.normal(), -100 * rng.uniform(), rng.uniform() / 3,
                    rng.normal() * 1e5, 3e-4, 0.1 * static_cast<double>(e)});
  }
  {
    MetricsCsvWriter w(dir.file("m.csv"));
    for (const auto& r : rows) w.append(r);
  }
  EXPECT_EQ(read_metrics_csv(dir.file("m.csv")), rows);
  const std::string text = testing::read_text(dir.file("m.csv"));
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsHeader);
}

TEST(MetricsCsv, BadHeaderIsRejected) {
  TempDir dir;
  const std::string text = "epoch,acc\n0,1\n";
  testing::write_bytes(dir.file("m.csv"), {text.begin(), text.end()});
  try {
    (void)read_metrics_csv(dir.file("m.csv"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), "metrics_format");
  }
}

TEST(MetricsJson, RoundTrip) {
  const MetricsRecord r{3, 0.5, 0.25, -12.5, 0.125, 4.0, 1e-3, 1.0};
  EXPECT_EQ(metrics_from_json(to_json(r)), r);
}

TEST(BreakdownJson, HasExactlyTheNineTerms) {
  const ToyProblem t = make_toy_problem(6, toy_model_config());
  ObjectiveConfig obj;
  obj.alpha = 0.1;
  const auto r = total_objective_j2(t.params.config, attach(t.params.tensors, false), t.labeled,
                                    t.x_unlabeled, obj, t.noise);
  const json j = to_json(r.breakdown);
  EXPECT_EQ(j.size(), 9u);
  for (const char* key : {"reconstruction", "kl_y", "kl_z", "classifier_entropy_mean",
                          "marginal_entropy", "mi_estimate", "labeled_elbo", "unlabeled_elbo",
                          "total"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j.at("total").get<double>(), r.breakdown.total);
}

TEST(Pgm, HeaderAndPixels) {
  TempDir dir;
  const Array images({3, 4}, {0.0, 1.0, 0.5, 0.25, 1, 1, 1, 1, 0, 0, 0, 0});
  write_pgm(dir.file("g.pgm"), images, 2, 2, 2);
  const auto bytes = testing::read_bytes(dir.file("g.pgm"));
  const std::string header = "P5\n4 4\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())),
            header);
  const unsigned char* px = bytes.data() + header.size();
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[1], 255);
  EXPECT_EQ(px[2], 255);  // second tile, first row
  EXPECT_EQ(px[4], 128);
  EXPECT_EQ(px[5], 64);
  EXPECT_EQ(px[8], 0);    // third tile
  EXPECT_EQ(px[10], 0);   // empty grid cell
  EXPECT_THROW(write_pgm(dir.file("h.pgm"), images, 3, 2, 2), ShapeError);
}

TEST(Rng, DeterministicAcrossInstances) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(a.uniform(), b.uniform());
    EXPECT_EQ(a.below(17), b.below(17));
  }
  Rng u(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
    EXPECT_LT(u.below(7), 7u);
  }
}

}  // namespace
}  // namespace mier
