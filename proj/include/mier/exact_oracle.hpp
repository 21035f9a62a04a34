#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mier/error.hpp"
#include "mier/rng.hpp"

// Exact enumeration over fully tabulated finite models of (x, y, z).
//
// The latent z is finite here, so log p(x) and every bound on it reduce to
// finite sums. The identities relating the unlabeled bound, the KL to the
// class prior and the mutual information I(y;x) do not depend on z being
// continuous, so they can be checked to rounding error. Everything in this
// header works on plain doubles and shares no code with the tensor path.

namespace mier::oracle {

/// Tables indexed as documented on each field; all conditionals are
/// row-stochastic.
struct DiscreteWorld {
  std::size_t nx = 0, k = 0, nz = 0;
  std::vector<double> q_x;           // [nx]
  std::vector<double> q_y_given_x;   // [nx][k]
  std::vector<double> q_z_given_xy;  // [nx][k][nz]
  std::vector<double> p_x_given_yz;  // [k][nz][nx]
  std::vector<double> p_y;           // [k]
  std::vector<double> p_z;           // [nz]

  double qy(std::size_t x, std::size_t y) const { return q_y_given_x[x * k + y]; }
  double qz(std::size_t x, std::size_t y, std::size_t z) const {
    return q_z_given_xy[(x * k + y) * nz + z];
  }
  double px(std::size_t y, std::size_t z, std::size_t x) const {
    return p_x_given_yz[(y * nz + z) * nx + x];
  }

  /// Throws DomainError unless every slice is a probability vector (1e-12).
  void validate() const {
    auto check = [](const std::vector<double>& v, std::size_t rows,
                    std::size_t width, const char* what) {
      if (v.size() != rows * width) {
        throw DomainError(std::string("DiscreteWorld: ") + what + " has wrong size");
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          const double e = v[r * width + j];
          if (!(e >= 0.0)) {
            throw DomainError(std::string("DiscreteWorld: negative entry in ") + what);
          }
          s += e;
        }
        if (std::abs(s - 1.0) > 1e-12) {
          throw DomainError(std::string("DiscreteWorld: ") + what +
                            " slice does not sum to 1");
        }
      }
    };
    check(q_x, 1, nx, "q_x");
    check(q_y_given_x, nx, k, "q_y_given_x");
    check(q_z_given_xy, nx * k, nz, "q_z_given_xy");
    check(p_x_given_yz, k * nz, nx, "p_x_given_yz");
    check(p_y, 1, k, "p_y");
    check(p_z, 1, nz, "p_z");
  }
};

namespace detail {

inline std::vector<double> dirichlet_rows(Rng& rng, std::size_t rows, std::size_t width) {
  std::vector<double> out;
  out.reserve(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = rng.dirichlet_ones(width);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

inline double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double e : v) s += std::exp(e - mx);
  return mx + std::log(s);
}

// sum_i p_i log(p_i / q_i) with 0 log 0 := 0.
inline double kl(const double* p, const double* q, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

inline double entropy(const double* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) s -= p[i] * std::log(p[i]);
  }
  return s;
}

}  // namespace detail

/// Every table drawn row-wise from a symmetric Dirichlet(1). When
/// `uniform_prior_y` is set, p(y) is uniform as in the M2 model.
inline DiscreteWorld random_world(Rng& rng, std::size_t nx, std::size_t k,
                                  std::size_t nz, bool uniform_prior_y = true) {
  DiscreteWorld w;
  w.nx = nx;
  w.k = k;
  w.nz = nz;
  w.q_x = detail::dirichlet_rows(rng, 1, nx);
  w.q_y_given_x = detail::dirichlet_rows(rng, nx, k);
  w.q_z_given_xy = detail::dirichlet_rows(rng, nx * k, nz);
  w.p_x_given_yz = detail::dirichlet_rows(rng, k * nz, nx);
  w.p_y = uniform_prior_y ? std::vector<double>(k, 1.0 / static_cast<double>(k))
                          : detail::dirichlet_rows(rng, 1, k);
  w.p_z = detail::dirichlet_rows(rng, 1, nz);
  return w;
}

inline void check_index(const DiscreteWorld& w, std::size_t x) {
  if (x >= w.nx) {
    throw DomainError("x index " + std::to_string(x) + " out of range for " +
                      std::to_string(w.nx) + " outcomes");
  }
}

/// log p(x) = log sum_y sum_z p(x|z,y) p(y) p(z), by log-sum-exp.
inline double exact_log_marginal(const DiscreteWorld& w, std::size_t x) {
  check_index(w, x);
  std::vector<double> terms;
  terms.reserve(w.k * w.nz);
  for (std::size_t y = 0; y < w.k; ++y)
    for (std::size_t z = 0; z < w.nz; ++z)
      terms.push_back(std::log(w.px(y, z, x)) + std::log(w.p_y[y]) +
                      std::log(w.p_z[z]));
  return detail::log_sum_exp(terms);
}

/// U(x) as the three exact finite sums of the unlabeled bound.
inline double exact_unlabeled_elbo(const DiscreteWorld& w, std::size_t x) {
  check_index(w, x);
  double expected_recon = 0.0;
  double expected_kl_z = 0.0;
  for (std::size_t y = 0; y < w.k; ++y) {
    const double qy = w.qy(x, y);
    for (std::size_t z = 0; z < w.nz; ++z) {
      const double qz = w.qz(x, y, z);
      if (qy > 0.0 && qz > 0.0) expected_recon += qy * qz * std::log(w.px(y, z, x));
    }
    expected_kl_z += qy * detail::kl(&w.q_z_given_xy[(x * w.k + y) * w.nz],
                                     w.p_z.data(), w.nz);
  }
  const double kl_y = detail::kl(&w.q_y_given_x[x * w.k], w.p_y.data(), w.k);
  return expected_recon - kl_y - expected_kl_z;
}

/// Copy of `w` whose variational tables equal the exact posterior p(y,z|x).
inline DiscreteWorld with_true_posterior(const DiscreteWorld& w) {
  DiscreteWorld out = w;
  for (std::size_t x = 0; x < w.nx; ++x) {
    const double px = std::exp(exact_log_marginal(w, x));
    for (std::size_t y = 0; y < w.k; ++y) {
      double joint_y = 0.0;
      for (std::size_t z = 0; z < w.nz; ++z) {
        joint_y += w.px(y, z, x) * w.p_y[y] * w.p_z[z];
      }
      out.q_y_given_x[x * w.k + y] = joint_y / px;
      for (std::size_t z = 0; z < w.nz; ++z) {
        out.q_z_given_xy[(x * w.k + y) * w.nz + z] =
            w.px(y, z, x) * w.p_y[y] * w.p_z[z] / joint_y;
      }
    }
  }
  return out;
}

/// q(y) = sum_x q(x) q(y|x).
inline std::vector<double> aggregated_posterior(const DiscreteWorld& w) {
  std::vector<double> q(w.k, 0.0);
  for (std::size_t x = 0; x < w.nx; ++x)
    for (std::size_t y = 0; y < w.k; ++y) q[y] += w.q_x[x] * w.qy(x, y);
  return q;
}

struct IdentityReport {
  double mean_kl_to_prior = 0.0;  // E_q(x) KL(q(y|x) || p(y))
  double mutual_information = 0.0;  // direct joint sum
  double kl_marginal = 0.0;  // KL(q(y) || p(y))
  double entropy_decomposition = 0.0;  // -E_q(x) H(q(y|x)) + H(q(y))
  double kl_identity_residual = 0.0;  // |mean KL - (I + KL marginal)|
  double entropy_identity_residual = 0.0;  // |I_direct - entropy decomposition|
};

/// Evaluates both sides of the KL->MI identity and the entropy decomposition
/// of the mutual information, each by its own summation.
inline IdentityReport exact_identity_suite(const DiscreteWorld& w) {
  IdentityReport r;
  const auto q_y = aggregated_posterior(w);
  double mean_cond_entropy = 0.0;
  for (std::size_t x = 0; x < w.nx; ++x) {
    const double* row = &w.q_y_given_x[x * w.k];
    r.mean_kl_to_prior += w.q_x[x] * detail::kl(row, w.p_y.data(), w.k);
    mean_cond_entropy += w.q_x[x] * detail::entropy(row, w.k);
  }
  // I(y;x) = sum_x sum_y q(y,x) log( q(y,x) / (q(y) q(x)) ).
  for (std::size_t x = 0; x < w.nx; ++x) {
    for (std::size_t y = 0; y < w.k; ++y) {
      const double joint = w.qy(x, y) * w.q_x[x];
      if (joint > 0.0) {
        r.mutual_information += joint * std::log(joint / (q_y[y] * w.q_x[x]));
      }
    }
  }
  r.kl_marginal = detail::kl(q_y.data(), w.p_y.data(), w.k);
  r.entropy_decomposition = -mean_cond_entropy + detail::entropy(q_y.data(), w.k);
  r.kl_identity_residual =
      std::abs(r.mean_kl_to_prior - (r.mutual_information + r.kl_marginal));
  r.entropy_identity_residual =
      std::abs(r.mutual_information - r.entropy_decomposition);
  return r;
}

}  // namespace mier::oracle
