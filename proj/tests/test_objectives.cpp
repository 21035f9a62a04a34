#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

namespace mier {
namespace {

// Encoder pinned to the prior and a decoder whose logits put (numerically)
// all mass on the observed binary x.
M2Parameters perfect_reconstruction_model(std::size_t k, const std::vector<double>& x) {
  ModelConfig c;
  c.input_dim = x.size();
  c.num_classes = k;
  c.latent_dim = 2;
  c.hidden_dims = {3};
  c.classifier_hidden = 3;
  M2Parameters m = init_parameters(c, 1);
  for (auto& [name, a] : m.tensors) {
    if (name.starts_with("encoder.") || name.starts_with("decoder.")) {
      for (auto& v : a.data) v = 0.0;
    }
  }
  auto& out_bias = m.tensors.at("decoder.out.bias").data;
  for (std::size_t j = 0; j < x.size(); ++j) out_bias[j] = x[j] > 0.5 ? 60.0 : -60.0;
  return m;
}

void make_classifier_uniform(M2Parameters& m) {
  for (auto& v : m.tensors.at("classifier.out.weight").data) v = 0.0;
  for (auto& v : m.tensors.at("classifier.out.bias").data) v = 0.0;
}

TEST(LabeledElbo, PerfectReconstructionAtPriorGivesMinusLogK) {
  const std::vector<double> x{1, 0, 1, 0};
  for (std::size_t k : {3u, 10u}) {
    const M2Parameters m = perfect_reconstruction_model(k, x);
    Rng rng(1);
    const Tensor l = labeled_elbo(m.config, attach(m.tensors, false), Tensor(Shape{1, 4}, x),
                                  one_hot({1}, k), {normal_matrix(rng, 1, 2)});
    EXPECT_NEAR(l[0], -std::log(static_cast<double>(k)), 1e-12);
    if (k == 10) {
      EXPECT_NEAR(l[0], -2.302585, 1e-6);
    }
  }
}

TEST(LabeledElbo, MonteCarloAgreesWithQuadrature) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const M2Parameters m = testing::scalar_latent_model(seed, 3);
    Rng rng(seed + 100);
    const Tensor x = testing::random_tensor(rng, {1, 4}, 0, 1);
    const std::size_t y = seed % 3;
    const double exact = testing::exact_labeled_elbo(m, x, y);

    const std::size_t n = 10000;
    const Tensor xs = concat_rows(std::vector<Tensor>(n, x));
    const Tensor ys = one_hot(std::vector<std::size_t>(n, y), 3);
    const Tensor samples = labeled_elbo(m.config, attach(m.tensors, false), xs, ys,
                                        {normal_matrix(rng, n, 1)});
    double mean_v = 0.0, sq = 0.0;
    for (double v : samples.values()) mean_v += v / n;
    for (double v : samples.values()) sq += (v - mean_v) * (v - mean_v);
    const double se = std::sqrt(sq / (n - 1) / n);
    EXPECT_LT(std::abs(mean_v - exact), 4.0 * se + 1e-9) << "seed " << seed;
  }
}

TEST(LabeledElbo, InvalidOneHotIsRejected) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(0, c);
  const TensorMap p = attach(t.params.tensors, false);
  const Tensor x = slice_rows(t.labeled.x, 0, 1);
  const Tensor noise = slice_rows(t.noise.labeled[0], 0, 1);
  EXPECT_THROW((void)labeled_elbo(c, p, x, Tensor::matrix(1, 3, {1, 1, 0}), {noise}), DomainError);
  EXPECT_THROW((void)labeled_elbo(c, p, x, Tensor::matrix(1, 3, {0.5, 0.5, 0}), {noise}),
               DomainError);
  EXPECT_THROW((void)labeled_elbo(c, p, x, Tensor::matrix(1, 2, {1, 0}), {noise}), ShapeError);
}

TEST(UnlabeledElbo, UniformClassifierAtPriorWithPerfectReconstructionIsZero) {
  const std::vector<double> x{0, 1, 1};
  M2Parameters m = perfect_reconstruction_model(4, x);
  make_classifier_uniform(m);
  Rng rng(2);
  const Tensor u = unlabeled_elbo_kl_form(m.config, attach(m.tensors, false),
                                          Tensor(Shape{1, 3}, x), {normal_matrix(rng, 4, 2)});
  EXPECT_NEAR(u[0], 0.0, 1e-12);
}

TEST(UnlabeledElbo, FormsAgreeOnFiftyRandomTriples) {
  Rng rng(3);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) worst = std::max(worst, elbo_form_gap(rng));
  EXPECT_LT(worst, 1e-10);
}

TEST(UnlabeledElbo, FormsAgreeUnderWarmupWeight) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(4, c, 2, 6, 2);
  const TensorMap p = attach(t.params.tensors, false);
  for (double w : {0.0, 0.25, 0.9}) {
    const Tensor a = unlabeled_elbo_kl_form(c, p, t.x_unlabeled, t.noise.unlabeled, w);
    const Tensor b = unlabeled_elbo_entropy_form(c, p, t.x_unlabeled, t.noise.unlabeled, w);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-10);
  }
}

TEST(UnlabeledElbo, OneHotClassifierCollapsesToLabeledBound) {
  const ModelConfig c = toy_model_config();
  ToyProblem t = make_toy_problem(5, c, 1, 1);
  for (auto& v : t.params.tensors.at("classifier.out.weight").data) v = 0.0;
  t.params.tensors.at("classifier.out.bias").data = {0.0, 900.0, 0.0};
  const TensorMap p = attach(t.params.tensors, false);
  const Tensor x = t.x_unlabeled;
  const Tensor noise = t.noise.unlabeled[0];  // row k feeds class k
  const double u = unlabeled_elbo_entropy_form(c, p, x, {noise})[0];
  const double l = labeled_elbo(c, p, x, one_hot({1}, 3), {slice_rows(noise, 1, 2)})[0];
  EXPECT_NEAR(u, l, 1e-12);
  EXPECT_NEAR(unlabeled_elbo_kl_form(c, p, x, {noise})[0], l, 1e-10);
}

TEST(UnlabeledElbo, UniformBinaryClassifierAveragesBoundsPlusLogTwo) {
  ModelConfig c = toy_model_config();
  c.num_classes = 2;
  ToyProblem t = make_toy_problem(6, c, 1, 1);
  make_classifier_uniform(t.params);
  const TensorMap p = attach(t.params.tensors, false);
  const Tensor x = t.x_unlabeled;
  const Tensor noise = t.noise.unlabeled[0];
  const double u = unlabeled_elbo_entropy_form(c, p, x, {noise})[0];
  const double l0 = labeled_elbo(c, p, x, one_hot({0}, 2), {slice_rows(noise, 0, 1)})[0];
  const double l1 = labeled_elbo(c, p, x, one_hot({1}, 2), {slice_rows(noise, 1, 2)})[0];
  EXPECT_NEAR(u, 0.5 * (l0 + l1) + std::log(2.0), 1e-12);
}

TEST(MiEstimate, IdenticalRowsGiveZero) {
  const Tensor probs = Tensor::matrix(3, 3, {0.2, 0.5, 0.3, 0.2, 0.5, 0.3, 0.2, 0.5, 0.3});
  EXPECT_NEAR(mi_estimate(probs).item(), 0.0, 1e-15);
}

TEST(MiEstimate, DistinctOneHotRowsGiveLogTwo) {
  EXPECT_NEAR(mi_estimate(Tensor::matrix(2, 2, {1, 0, 0, 1})).item(), std::log(2.0), 1e-12);
}

TEST(MiEstimate, MatchesDirectJointSum) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor probs = random_prob_batch(rng, 16, 5);
    std::vector<double> q_bar(5, 0.0);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t y = 0; y < 5; ++y) q_bar[y] += probs.at(i, y) / 16.0;
    double oracle = 0.0;
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t y = 0; y < 5; ++y) {
        const double q = probs.at(i, y);
        if (q > 0) oracle += q * std::log(q / q_bar[y]) / 16.0;
      }
    EXPECT_NEAR(mi_estimate(probs).item(), oracle, 1e-12);
  }
}

TEST(MiEstimate, StaysWithinZeroAndLogK) {
  Rng rng(21);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t k = 2 + rng.below(9);
    const double mi = mi_estimate(random_prob_batch(rng, 2 + rng.below(30), k)).item();
    EXPECT_GE(mi, -1e-15);
    EXPECT_LE(mi, std::log(static_cast<double>(k)) + 1e-12);
  }
}

ObjectiveConfig regularizers(double beta, double gamma) {
  ObjectiveConfig cfg;
  cfg.beta = beta;
  cfg.gamma = gamma;
  return cfg;
}

TEST(MierObjective, RegularizersOffGiveMeanUnlabeledBound) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(7, c);
  const TensorMap p = attach(t.params.tensors, false);
  const double m = mier_objective(c, p, t.x_unlabeled, regularizers(0, 0), t.noise.unlabeled)
                       .value.item();
  EXPECT_EQ(m, mean(unlabeled_elbo_kl_form(c, p, t.x_unlabeled, t.noise.unlabeled)).item());
}

TEST(MierObjective, UniformClassifierSubtractsBetaLogK) {
  const ModelConfig c = toy_model_config();
  ToyProblem t = make_toy_problem(8, c);
  make_classifier_uniform(t.params);
  const TensorMap p = attach(t.params.tensors, false);
  const auto r = mier_objective(c, p, t.x_unlabeled, regularizers(5, 1), t.noise.unlabeled);
  const double u = mean(unlabeled_elbo_kl_form(c, p, t.x_unlabeled, t.noise.unlabeled)).item();
  EXPECT_NEAR(r.value.item(), u - 5.0 * std::log(3.0), 1e-12);
  EXPECT_NEAR(r.breakdown.mi_estimate, 0.0, 1e-15);
  EXPECT_NEAR(r.breakdown.classifier_entropy_mean, std::log(3.0), 1e-12);
}

TEST(MierObjective, PaperWeightsMatchComponentAssembly) {
  const ModelConfig c = toy_model_config();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ToyProblem t = make_toy_problem(seed, c, 3, 6);
    const TensorMap p = attach(t.params.tensors, false);
    const auto r = mier_objective(c, p, t.x_unlabeled, regularizers(5, 1), t.noise.unlabeled);
    const double u = mean(unlabeled_elbo_entropy_form(c, p, t.x_unlabeled, t.noise.unlabeled)).item();
    const Tensor probs = classify(c, p, t.x_unlabeled);
    const double mi = direct_batch_mi(probs);
    const double h = mean(categorical_entropy(probs)).item();
    EXPECT_NEAR(r.value.item(), u + 1.0 * mi - 5.0 * h, 1e-12);
    EXPECT_EQ(r.breakdown.total, r.value.item());
  }
}

TEST(MierObjective, LinearInBetaAndGamma) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(9, c);
  const TensorMap p = attach(t.params.tensors, false);
  auto m = [&](double b, double g) {
    return mier_objective(c, p, t.x_unlabeled, regularizers(b, g), t.noise.unlabeled).value.item();
  };
  const double base = m(0, 0);
  const double db = m(1, 0) - base;
  const double dg = m(0, 1) - base;
  EXPECT_NEAR(m(3.5, 2.0), base + 3.5 * db + 2.0 * dg, 1e-12);
  EXPECT_LE(db, 0.0);
  EXPECT_GE(dg, 0.0);
}

TEST(MierObjective, SingleExampleBatchIsRejected) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(10, c, 1, 1);
  EXPECT_THROW((void)mier_objective(c, attach(t.params.tensors, false), t.x_unlabeled,
                                    regularizers(5, 1), t.noise.unlabeled),
               DomainError);
}

TEST(TotalObjective, ZeroRegularizersReproduceBaselineBitwise) {
  const ModelConfig c = toy_model_config();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ToyProblem t = make_toy_problem(seed, c);
    ObjectiveConfig cfg = regularizers(0, 0);
    cfg.alpha = 0.7;
    cfg.kl_weight = 0.4;
    const TensorMap p = attach(t.params.tensors, false);
    const auto j2 = total_objective_j2(c, p, t.labeled, t.x_unlabeled, cfg, t.noise);
    const auto j = baseline_objective_j(c, p, t.labeled, t.x_unlabeled, cfg, t.noise);
    EXPECT_EQ(j2.value.item(), j.value.item());
    EXPECT_EQ(to_json(j2.breakdown), to_json(j.breakdown));
  }
}

TEST(TotalObjective, EmptyLabeledBatchWithZeroAlphaEqualsMeanM) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(11, c);
  ObjectiveConfig cfg = regularizers(5, 1);
  cfg.alpha = 0.0;
  const TensorMap p = attach(t.params.tensors, false);
  const LabeledBatch empty{Tensor::zeros({0, c.input_dim}), {}};
  const double j2 = total_objective_j2(c, p, empty, t.x_unlabeled, cfg, t.noise).value.item();
  EXPECT_EQ(j2, mier_objective(c, p, t.x_unlabeled, cfg, t.noise.unlabeled).value.item());
  cfg.alpha = 0.1;
  EXPECT_THROW((void)total_objective_j2(c, p, empty, t.x_unlabeled, cfg, t.noise), DomainError);
}

TEST(TotalObjective, AssemblesLabeledUnlabeledAndClassifierTerms) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(12, c);
  ObjectiveConfig cfg = regularizers(5, 1);
  cfg.alpha = 2.0;
  const TensorMap p = attach(t.params.tensors, false);
  const auto r = total_objective_j2(c, p, t.labeled, t.x_unlabeled, cfg, t.noise);
  const double l = mean(labeled_elbo(c, p, t.labeled.x, one_hot(t.labeled.labels, 3),
                                     t.noise.labeled)).item();
  const double m = mier_objective(c, p, t.x_unlabeled, cfg, t.noise.unlabeled).value.item();
  const Tensor probs = classify(c, p, t.labeled.x);
  double log_q = 0.0;
  for (std::size_t i = 0; i < t.labeled.size(); ++i) {
    log_q += std::log(probs.at(i, t.labeled.labels[i])) / t.labeled.size();
  }
  EXPECT_NEAR(r.value.item(), l + m + 2.0 * log_q, 1e-12);
  EXPECT_NEAR(r.breakdown.labeled_elbo, l, 1e-15);
  EXPECT_NEAR(r.breakdown.unlabeled_elbo,
              mean(unlabeled_elbo_kl_form(c, p, t.x_unlabeled, t.noise.unlabeled)).item(), 1e-15);
  EXPECT_NEAR(r.breakdown.kl_y - (std::log(3.0) - r.breakdown.classifier_entropy_mean), 0.0,
              1e-12);
}

TEST(TotalObjective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto rep = gradcheck_j2(seed);
    EXPECT_LT(rep.max_relative_error, 1e-4)
        << "seed " << seed << " " << rep.worst_parameter << "[" << rep.worst_index << "]";
    EXPECT_EQ(rep.coordinates, 353u);
  }
}

TEST(TotalObjective, InvalidConfigIsRejected) {
  const ModelConfig c = toy_model_config();
  const ToyProblem t = make_toy_problem(13, c);
  const TensorMap p = attach(t.params.tensors, false);
  ObjectiveConfig cfg;
  cfg.beta = -1.0;
  EXPECT_THROW((void)total_objective_j2(c, p, t.labeled, t.x_unlabeled, cfg, t.noise),
               ConfigError);
  cfg = ObjectiveConfig{};
  cfg.kl_weight = 1.5;
  EXPECT_THROW((void)total_objective_j2(c, p, t.labeled, t.x_unlabeled, cfg, t.noise),
               ConfigError);
}

TEST(KlMiCheck, UniformRowsGiveZeros) {
  const auto d = kl_mi_lower_bound_check(Tensor::full({4, 3}, 1.0 / 3.0));
  EXPECT_NEAR(d.lhs, 0.0, 1e-15);
  EXPECT_NEAR(d.mi, 0.0, 1e-15);
  EXPECT_NEAR(d.kl_marginal, 0.0, 1e-15);
}

TEST(KlMiCheck, DistinctOneHotRows) {
  const auto d = kl_mi_lower_bound_check(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  EXPECT_NEAR(d.lhs, std::log(2.0), 1e-12);
  EXPECT_NEAR(d.mi, std::log(2.0), 1e-12);
  EXPECT_NEAR(d.kl_marginal, 0.0, 1e-15);
}

TEST(KlMiCheck, IdentityHoldsOnRandomBatches) {
  Rng rng(22);
  for (int t = 0; t < 200; ++t) {
    const Tensor probs = random_prob_batch(rng, 2 + rng.below(40), 2 + rng.below(9));
    const auto d = kl_mi_lower_bound_check(probs);
    EXPECT_LT(std::abs(d.lhs - d.mi - d.kl_marginal), 1e-12);
    EXPECT_GE(d.lhs, d.mi - 1e-15);
  }
}

TEST(Noise, DrawShapes) {
  Rng rng(23);
  const ObjectiveNoise n = draw_noise(rng, 3, 5, 4, 2, 2);
  ASSERT_EQ(n.labeled.size(), 2u);
  ASSERT_EQ(n.unlabeled.size(), 2u);
  EXPECT_EQ(n.labeled[0].shape(), (Shape{3, 2}));
  EXPECT_EQ(n.unlabeled[1].shape(), (Shape{20, 2}));
}

}  // namespace
}  // namespace mier
