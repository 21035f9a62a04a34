#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mier/error.hpp"
#include "mier/rng.hpp"
#include "mier/tensor.hpp"

namespace mier {

/// N x D inputs in [0,1] with class labels in [0, num_classes).
struct Dataset {
  Array inputs;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols(); }

  void validate() const {
    if (labels.empty()) throw DataError("empty_dataset", name + ": no examples");
    if (inputs.shape.size() != 2 || inputs.shape[0] != labels.size()) {
      throw DataError("shape", name + ": inputs " + shape_string(inputs.shape) +
                                   " do not match " + std::to_string(labels.size()) +
                                   " labels");
    }
    for (double v : inputs.data) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DataError("range", name + ": input value outside [0,1]");
      }
    }
    for (auto l : labels) {
      if (l >= num_classes) throw DataError("range", name + ": label out of range");
    }
  }
};

inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices,
                      std::string name = {}) {
  Dataset out;
  out.num_classes = d.num_classes;
  out.name = name.empty() ? d.name : std::move(name);
  const std::size_t dim = d.dim();
  out.inputs = Array::zeros({indices.size(), dim});
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(&d.inputs.data[indices[i] * dim], dim, &out.inputs.data[i * dim]);
    out.labels.push_back(d.labels[indices[i]]);
  }
  return out;
}

/// K Gaussian blobs centred on a circle of radius `separation` in the first
/// two coordinates, isotropic noise in every coordinate, then per-feature
/// min-max scaling to [0,1]. Constant features map to 0.5.
inline Dataset generate_gaussian_mixture(std::size_t num_classes,
                                         std::size_t per_class, std::size_t dim,
                                         double separation, double noise_sigma,
                                         std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("gaussian mixture needs >= 2 classes");
  if (per_class < 1) throw ConfigError("gaussian mixture needs >= 1 point per class");
  if (dim < 2) throw ConfigError("gaussian mixture needs dim >= 2");
  Rng rng(seed);
  Dataset d;
  d.num_classes = num_classes;
  d.name = "gaussian_mixture";
  const std::size_t n = num_classes * per_class;
  d.inputs = Array::zeros({n, dim});
  d.labels.resize(n);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * M_PI * static_cast<double>(c) /
                         static_cast<double>(num_classes);
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t row = c * per_class + i;
      d.labels[row] = c;
      for (std::size_t j = 0; j < dim; ++j) {
        double centre = 0.0;
        if (j == 0) centre = separation * std::cos(angle);
        if (j == 1) centre = separation * std::sin(angle);
        d.inputs.at(row, j) = centre + noise_sigma * rng.normal();
      }
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    double lo = d.inputs.at(0, j), hi = lo;
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, d.inputs.at(r, j));
      hi = std::max(hi, d.inputs.at(r, j));
    }
    for (std::size_t r = 0; r < n; ++r) {
      double& v = d.inputs.at(r, j);
      v = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.5;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// IDX (big-endian, magic-tagged) image/label files
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("io", path + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off,
                               const std::string& path) {
  if (b.size() < off + 4) throw DataError("idx_truncated", path + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

}  // namespace detail

/// Parses an IDX image file (u8, N x rows x cols) and its label file.
/// Pixels are scaled by 1/255; the class count is max(label) + 1.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);

  const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
  if (img_magic != kIdxImageMagic) {
    throw DataError("idx_magic", images_path + ": wrong magic " +
                                     detail::hex32(img_magic) + ", expected " +
                                     detail::hex32(kIdxImageMagic));
  }
  const std::uint32_t lab_magic = detail::read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelMagic) {
    throw DataError("idx_magic", labels_path + ": wrong magic " +
                                     detail::hex32(lab_magic) + ", expected " +
                                     detail::hex32(kIdxLabelMagic));
  }
  const std::size_t n = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
  const std::size_t dim = rows * cols;
  if (img.size() < 16 + n * dim) {
    throw DataError("idx_truncated", images_path + ": expected " +
                                         std::to_string(n * dim) + " pixel bytes");
  }
  if (lab.size() < 8 + n_labels) {
    throw DataError("idx_truncated", labels_path + ": expected " +
                                         std::to_string(n_labels) + " label bytes");
  }
  if (n != n_labels) {
    throw DataError("idx_count_mismatch",
                    labels_path + ": " + std::to_string(n_labels) + " labels for " +
                        std::to_string(n) + " images in " + images_path);
  }
  Dataset d;
  d.name = images_path;
  d.inputs = Array::zeros({n, dim});
  for (std::size_t i = 0; i < n * dim; ++i) d.inputs.data[i] = img[16 + i] / 255.0;
  d.labels.resize(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = n ? max_label + 1 : 0;
  return d;
}

/// Luminance conversion of RGB rows. Interleaved rows are r,g,b per pixel;
/// planar rows hold all red, then all green, then all blue values.
inline Array to_grayscale(const Array& rgb, bool planar = false) {
  if (rgb.shape.size() != 2 || rgb.cols() % 3 != 0) {
    throw ShapeError("to_grayscale: expected [N, 3P], got " + shape_string(rgb.shape));
  }
  constexpr std::array<double, 3> w{0.299, 0.587, 0.114};
  const std::size_t n = rgb.rows(), pixels = rgb.cols() / 3;
  Array out = Array::zeros({n, pixels});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        s += w[c] * (planar ? rgb.at(i, c * pixels + p) : rgb.at(i, p * 3 + c));
      }
      out.at(i, p) = s;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: one row per example, label first, then the D features.
// ---------------------------------------------------------------------------

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("io", path + ": cannot write");
  out << std::setprecision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << d.labels[i];
    for (std::size_t j = 0; j < d.dim(); ++j) out << ',' << d.inputs.at(i, j);
    out << '\n';
  }
}

/// `num_classes` = 0 infers max(label) + 1.
inline Dataset read_csv(const std::string& path, std::size_t num_classes = 0) {
  std::ifstream in(path);
  if (!in) throw DataError("io", path + ": cannot open");
  Dataset d;
  d.name = path;
  std::vector<double> values;
  std::size_t dim = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw DataError("csv_parse", path + ":" + std::to_string(line_no) +
                                         ": bad number '" + cell + "'");
      }
    }
    if (row.size() < 2) {
      throw DataError("csv_parse", path + ":" + std::to_string(line_no) +
                                       ": expected label and features");
    }
    if (dim == 0) dim = row.size() - 1;
    if (row.size() - 1 != dim) {
      throw DataError("csv_parse", path + ":" + std::to_string(line_no) +
                                       ": inconsistent feature count");
    }
    if (row[0] < 0 || row[0] != std::floor(row[0])) {
      throw DataError("csv_parse", path + ":" + std::to_string(line_no) +
                                       ": label must be a nonnegative integer");
    }
    d.labels.push_back(static_cast<std::size_t>(row[0]));
    values.insert(values.end(), row.begin() + 1, row.end());
  }
  if (d.labels.empty()) throw DataError("empty_dataset", path + ": no rows");
  d.inputs = Array({d.labels.size(), dim}, std::move(values));
  const std::size_t max_label = *std::max_element(d.labels.begin(), d.labels.end());
  d.num_classes = num_classes ? num_classes : max_label + 1;
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Semi-supervised splitting and batching
// ---------------------------------------------------------------------------

struct SemiSupervisedSplit {
  Dataset labeled;
  Dataset unlabeled;  // labels retained for evaluation only
  std::size_t per_class = 0;
  std::vector<std::size_t> labeled_indices;
  std::vector<std::size_t> unlabeled_indices;
};

/// Balanced random choice of `per_class` labeled examples per class; the
/// rest become unlabeled. Both index lists are sorted.
inline SemiSupervisedSplit split_labeled(const Dataset& d, std::size_t per_class,
                                         std::uint64_t seed) {
  if (per_class < 1) throw ConfigError("labels per class must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(d.num_classes);
  for (std::size_t i = 0; i < d.size(); ++i) by_class[d.labels[i]].push_back(i);
  Rng rng(seed);
  SemiSupervisedSplit s;
  s.per_class = per_class;
  std::vector<bool> chosen(d.size(), false);
  for (std::size_t c = 0; c < d.num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < per_class) {
      throw DataError("insufficient_labels",
                      "class " + std::to_string(c) + " has " +
                          std::to_string(idx.size()) + " examples, need " +
                          std::to_string(per_class));
    }
    rng.shuffle(idx);
    for (std::size_t i = 0; i < per_class; ++i) chosen[idx[i]] = true;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    (chosen[i] ? s.labeled_indices : s.unlabeled_indices).push_back(i);
  }
  s.labeled = subset(d, s.labeled_indices, d.name + ":labeled");
  s.unlabeled = subset(d, s.unlabeled_indices, d.name + ":unlabeled");
  return s;
}

/// Moves a random `fraction` of the unlabeled pool into a held-out
/// validation set (whose labels are then used for model selection).
inline Dataset carve_validation(SemiSupervisedSplit& s, double fraction,
                                std::uint64_t seed) {
  const std::size_t n = s.unlabeled.size();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  Rng rng(seed);
  auto perm = rng.permutation(n);
  std::vector<std::size_t> val(perm.begin(), perm.begin() + count);
  std::vector<std::size_t> keep(perm.begin() + count, perm.end());
  std::sort(val.begin(), val.end());
  std::sort(keep.begin(), keep.end());
  Dataset validation = subset(s.unlabeled, val, s.unlabeled.name + ":validation");
  std::vector<std::size_t> kept_global;
  for (auto i : keep) kept_global.push_back(s.unlabeled_indices[i]);
  s.unlabeled = subset(s.unlabeled, keep);
  s.unlabeled_indices = std::move(kept_global);
  return validation;
}

/// Row indices (into split.labeled / split.unlabeled) of one training step.
struct BatchPair {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;
};

inline std::uint64_t epoch_seed(std::uint64_t seed, std::uint64_t epoch) {
  return seed ^ ((epoch + 1) * 0x9E3779B97F4A7C15ULL);
}

/// Shuffled unlabeled batches covering every unlabeled row exactly once,
/// each paired with min(batch_size, labeled_count) labeled rows taken from a
/// cycled, shuffled labeled stream. A trailing unlabeled remainder of fewer
/// than 2 rows is merged into the previous batch.
inline std::vector<BatchPair> make_batches(const SemiSupervisedSplit& split,
                                           std::size_t batch_size, std::uint64_t seed,
                                           std::uint64_t epoch) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  Rng rng(epoch_seed(seed, epoch));
  const auto u_perm = rng.permutation(split.unlabeled.size());
  const auto l_perm = rng.permutation(split.labeled.size());
  const std::size_t nu = u_perm.size(), nl = l_perm.size();
  const std::size_t per_labeled = std::min(batch_size, nl);

  std::vector<BatchPair> out;
  if (nu > 0) {
    for (std::size_t start = 0; start < nu; start += batch_size) {
      const std::size_t end = std::min(nu, start + batch_size);
      if (end - start < 2 && !out.empty()) {
        out.back().unlabeled.insert(out.back().unlabeled.end(), u_perm.begin() + start,
                                    u_perm.begin() + end);
        break;
      }
      out.push_back({{}, {u_perm.begin() + start, u_perm.begin() + end}});
    }
  } else if (nl > 0) {
    out.resize((nl + batch_size - 1) / batch_size);
  }
  std::size_t cursor = 0;
  for (auto& pair : out) {
    for (std::size_t i = 0; i < per_labeled; ++i) {
      pair.labeled.push_back(l_perm[cursor % nl]);
      ++cursor;
    }
  }
  return out;
}

/// Rows of `d` as a [B, D] tensor.
inline Tensor gather_rows(const Dataset& d, const std::vector<std::size_t>& idx) {
  const std::size_t dim = d.dim();
  std::vector<double> v(idx.size() * dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(&d.inputs.data[idx[i] * dim], dim, &v[i * dim]);
  }
  return Tensor(Shape{idx.size(), dim}, std::move(v));
}

inline std::vector<std::size_t> gather_labels(const Dataset& d,
                                              const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(d.labels[i]);
  return out;
}

}  // namespace mier
