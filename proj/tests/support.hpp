#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <unistd.h>
#include <string>
#include <vector>

#include "mier/mier.hpp"

namespace mier::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "mier") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Test-only IDX writer.
inline std::vector<unsigned char> idx_image_bytes(std::uint32_t n, std::uint32_t rows,
                                                  std::uint32_t cols,
                                                  const std::vector<unsigned char>& pixels,
                                                  std::uint32_t magic = kIdxImageMagic) {
  std::vector<unsigned char> out;
  put_be32(out, magic);
  put_be32(out, n);
  put_be32(out, rows);
  put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

inline std::vector<unsigned char> idx_label_bytes(const std::vector<unsigned char>& labels,
                                                  std::uint32_t magic = kIdxLabelMagic) {
  std::vector<unsigned char> out;
  put_be32(out, magic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

/// Re-quantizes a loaded dataset back to IDX bytes.
inline std::pair<std::vector<unsigned char>, std::vector<unsigned char>> idx_bytes_of(
    const Dataset& d, std::uint32_t rows, std::uint32_t cols) {
  std::vector<unsigned char> pixels(d.inputs.data.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<unsigned char>(std::lround(d.inputs.data[i] * 255.0));
  }
  std::vector<unsigned char> labels(d.labels.begin(), d.labels.end());
  return {idx_image_bytes(static_cast<std::uint32_t>(d.size()), rows, cols, pixels),
          idx_label_bytes(labels)};
}

/// Random IDX pair written to disk; returns the original bytes.
inline std::pair<std::vector<unsigned char>, std::vector<unsigned char>> write_random_idx(
    Rng& rng, const std::string& images, const std::string& labels, std::uint32_t n,
    std::uint32_t rows, std::uint32_t cols, std::uint32_t classes) {
  std::vector<unsigned char> pixels(std::size_t{n} * rows * cols);
  for (auto& p : pixels) p = static_cast<unsigned char>(rng.below(256));
  std::vector<unsigned char> lab(n);
  for (auto& l : lab) l = static_cast<unsigned char>(rng.below(classes));
  auto img = idx_image_bytes(n, rows, cols, pixels);
  auto lb = idx_label_bytes(lab);
  write_bytes(images, img);
  write_bytes(labels, lb);
  return {img, lb};
}

inline Array random_array(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Array a = Array::zeros(std::move(shape));
  for (auto& v : a.data) v = rng.uniform(lo, hi);
  return a;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  return Tensor(random_array(rng, std::move(shape), lo, hi));
}

/// E_{z ~ q(z|x,y)} log p(x|z,y) for a model with a one-dimensional latent,
/// by trapezoid quadrature over mu +- 12 sigma. `x` is a single row [1, D].
inline double expected_reconstruction(const M2Parameters& m, const Tensor& x, std::size_t y,
                                      std::size_t points = 4001) {
  const ModelConfig& c = m.config;
  const Tensor y1 = one_hot({y}, c.num_classes);
  const DiagonalGaussian q = encode(m, x, y1);
  const double mu = q.mu[0], sigma = std::exp(0.5 * q.logvar[0]);
  const double lo = mu - 12.0 * sigma, hi = mu + 12.0 * sigma;
  const double dz = (hi - lo) / static_cast<double>(points - 1);
  std::vector<double> zs(points);
  for (std::size_t i = 0; i < points; ++i) zs[i] = lo + dz * static_cast<double>(i);
  std::vector<Tensor> xs(points, x);
  const Tensor x_rep = concat_rows(xs);
  const Tensor y_rep = one_hot(std::vector<std::size_t>(points, y), c.num_classes);
  const Tensor ll = reconstruction_log_likelihood(
      c, x_rep, decode(m, Tensor(Shape{points, 1}, zs), y_rep));
  double total = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double u = (zs[i] - mu) / sigma;
    const double density = std::exp(-0.5 * u * u) / (sigma * std::sqrt(2.0 * M_PI));
    const double w = (i == 0 || i + 1 == points) ? 0.5 : 1.0;
    total += w * density * ll[i];
  }
  return total * dz;
}

/// Exact labeled bound L(x,y) of a one-dimensional-latent model.
inline double exact_labeled_elbo(const M2Parameters& m, const Tensor& x, std::size_t y) {
  const DiagonalGaussian q = encode(m, x, one_hot({y}, m.config.num_classes));
  return expected_reconstruction(m, x, y) -
         std::log(static_cast<double>(m.config.num_classes)) -
         gaussian_kl_to_standard(q)[0];
}

/// Exact unlabeled bound U(x) = sum_y q(y|x) L(x,y) + H(q(y|x)).
inline double exact_unlabeled_elbo(const M2Parameters& m, const Tensor& x) {
  const Tensor probs = classify(m, x);
  double u = 0.0;
  for (std::size_t y = 0; y < m.config.num_classes; ++y) {
    const double q = probs[y];
    u += q * exact_labeled_elbo(m, x, y);
    if (q > 0.0) u -= q * std::log(q);
  }
  return u;
}

/// Small model with a one-dimensional latent and nonzero biases.
inline M2Parameters scalar_latent_model(std::uint64_t seed, std::size_t classes = 2) {
  ModelConfig c;
  c.input_dim = 4;
  c.num_classes = classes;
  c.latent_dim = 1;
  c.hidden_dims = {5};
  c.classifier_hidden = 5;
  M2Parameters m = init_parameters(c, seed);
  Rng rng(seed + 17);
  for (auto& [name, a] : m.tensors) {
    if (name.ends_with(".bias")) {
      for (auto& v : a.data) v = 0.3 * rng.normal();
    }
  }
  return m;
}

}  // namespace mier::testing
