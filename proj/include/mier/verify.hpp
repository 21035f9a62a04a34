#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mier/exact_oracle.hpp"
#include "mier/gradcheck.hpp"
#include "mier/objectives.hpp"
#include "mier/rng.hpp"

// Identity suites behind the `verify` command: exact finite-world checks of
// the bound and the KL / mutual-information identities, plus the same
// identities and the two unlabeled-bound forms through the tensor path.

namespace mier {

inline constexpr double kVerifyTolerance = 1e-10;

struct VerifyRow {
  std::string name;
  std::size_t trials = 0;
  double max_residual = 0.0;
  double tolerance = kVerifyTolerance;

  bool pass() const { return max_residual < tolerance; }
};

inline oracle::DiscreteWorld random_sized_world(Rng& rng) {
  const std::size_t nx = 2 + rng.below(7);
  const std::size_t k = 2 + rng.below(5);
  const std::size_t nz = 2 + rng.below(5);
  return oracle::random_world(rng, nx, k, nz);
}

/// Random [B, K] probability rows: Dirichlet(1) rows, some sharpened toward
/// one-hot so saturated classifiers are covered too.
inline Tensor random_prob_batch(Rng& rng, std::size_t b, std::size_t k) {
  std::vector<double> v;
  v.reserve(b * k);
  for (std::size_t i = 0; i < b; ++i) {
    auto row = rng.dirichlet_ones(k);
    if (rng.uniform() < 0.25) {
      const double sharp = 1.0 + 20.0 * rng.uniform();
      double s = 0.0;
      for (auto& e : row) s += (e = std::pow(e, sharp));
      for (auto& e : row) e /= s;
    }
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor(Shape{b, k}, std::move(v));
}

/// (1/B) sum_i sum_y q(y|x_i) log(q(y|x_i) / qbar(y)) by explicit loops.
inline double direct_batch_mi(const Tensor& probs) {
  const std::size_t b = probs.rows(), k = probs.cols();
  std::vector<double> q_bar(k, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t y = 0; y < k; ++y) q_bar[y] += probs.at(i, y) / static_cast<double>(b);
  double s = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t y = 0; y < k; ++y) {
      const double q = probs.at(i, y);
      if (q > 0.0) s += q * std::log(q / q_bar[y]) / static_cast<double>(b);
    }
  return s;
}

/// Max |KL form - entropy form| of the unlabeled bound over random tiny models.
inline double elbo_form_gap(Rng& rng) {
  ModelConfig c = toy_model_config();
  c.num_classes = 2 + rng.below(4);
  c.latent_dim = 1 + rng.below(4);
  const ToyProblem t = make_toy_problem(rng.next_u64(), c, 2, 2 + rng.below(6),
                                        1 + rng.below(3));
  const TensorMap p = attach(t.params.tensors, false);
  const double w = rng.uniform() < 0.5 ? 1.0 : rng.uniform();
  const PerClassTerms terms = per_class_terms(c, p, t.x_unlabeled, t.noise.unlabeled);
  const Tensor a = unlabeled_elbo_kl_form(terms, w);
  const Tensor b = unlabeled_elbo_entropy_form(terms, w);
  double gap = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
  return gap;
}

inline std::vector<VerifyRow> run_verification(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  VerifyRow kl_mi{"kl_mi_identity_worlds", trials};
  VerifyRow mi_entropy{"mi_entropy_decomposition_worlds", trials};
  VerifyRow jensen{"jensen_bound_violation_worlds", trials};
  VerifyRow tight{"jensen_tight_posterior_worlds", trials};
  for (std::size_t t = 0; t < trials; ++t) {
    const auto w = random_sized_world(rng);
    const auto rep = oracle::exact_identity_suite(w);
    kl_mi.max_residual = std::max(kl_mi.max_residual, rep.kl_identity_residual);
    mi_entropy.max_residual = std::max(mi_entropy.max_residual, rep.entropy_identity_residual);
    const auto posterior = oracle::with_true_posterior(w);
    for (std::size_t x = 0; x < w.nx; ++x) {
      const double log_px = oracle::exact_log_marginal(w, x);
      jensen.max_residual =
          std::max(jensen.max_residual, oracle::exact_unlabeled_elbo(w, x) - log_px);
      tight.max_residual = std::max(
          tight.max_residual, std::abs(oracle::exact_unlabeled_elbo(posterior, x) - log_px));
    }
  }

  VerifyRow batch_kl{"kl_mi_identity_batches", trials};
  VerifyRow batch_mi{"mi_joint_sum_batches", trials};
  for (std::size_t t = 0; t < trials; ++t) {
    const Tensor probs = random_prob_batch(rng, 2 + rng.below(31), 2 + rng.below(9));
    const auto d = kl_mi_lower_bound_check(probs);
    batch_kl.max_residual =
        std::max(batch_kl.max_residual, std::abs(d.lhs - d.mi - d.kl_marginal));
    batch_mi.max_residual =
        std::max(batch_mi.max_residual, std::abs(d.mi - direct_batch_mi(probs)));
  }

  const std::size_t form_trials = std::min<std::size_t>(trials, 50);
  VerifyRow forms{"elbo_form_equivalence", form_trials};
  for (std::size_t t = 0; t < form_trials; ++t) {
    forms.max_residual = std::max(forms.max_residual, elbo_form_gap(rng));
  }
  return {kl_mi, mi_entropy, jensen, tight, batch_kl, batch_mi, forms};
}

inline std::string format_verify_table(const std::vector<VerifyRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(36) << "identity" << std::right << std::setw(8)
     << "trials" << std::setw(14) << "max_residual" << std::setw(7) << "status" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(36) << r.name << std::right << std::setw(8) << r.trials
       << std::setw(14) << std::scientific << std::setprecision(3) << r.max_residual
       << std::setw(7) << (r.pass() ? "PASS" : "FAIL") << '\n';
  }
  return os.str();
}

}  // namespace mier
