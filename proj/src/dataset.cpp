#include "gkl/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "gkl/errors.hpp"

namespace gkl {

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int label : labels) ++counts[static_cast<std::size_t>(label)];
  return counts;
}

LabeledDataset make_blobs(Rng& rng, std::size_t classes, std::span<const std::size_t> counts,
                          double radius, double sigma) {
  if (classes < 2) throw std::invalid_argument("make_blobs: need at least two classes");
  if (counts.size() != classes)
    throw std::invalid_argument("make_blobs: counts size must equal class count");
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  if (total == 0) throw std::invalid_argument("make_blobs: all counts are zero");

  LabeledDataset data;
  data.num_classes = classes;
  data.inputs = Matrix(total, 2);
  data.labels.reserve(total);
  std::size_t row = 0;
  for (std::size_t y = 0; y < classes; ++y) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(y) /
                         static_cast<double>(classes);
    const double mx = radius * std::cos(angle);
    const double my = radius * std::sin(angle);
    for (std::size_t i = 0; i < counts[y]; ++i) {
      data.inputs(row, 0) = mx + sigma * rng.normal();
      data.inputs(row, 1) = my + sigma * rng.normal();
      data.labels.push_back(static_cast<int>(y));
      ++row;
    }
  }
  return data;
}

std::vector<std::size_t> long_tail_counts(std::size_t classes, std::size_t n_max, double rho) {
  if (classes < 1) throw std::invalid_argument("long_tail_counts: need at least one class");
  if (!(rho > 0.0 && rho <= 1.0))
    throw std::invalid_argument("long_tail_counts: rho must be in (0, 1]");
  std::vector<std::size_t> counts(classes);
  for (std::size_t y = 0; y < classes; ++y) {
    const double exponent = classes > 1
                                ? static_cast<double>(y) / static_cast<double>(classes - 1)
                                : 0.0;
    counts[y] = static_cast<std::size_t>(
        std::llround(static_cast<double>(n_max) * std::pow(rho, exponent)));
  }
  return counts;
}

LabeledDataset make_spirals(Rng& rng, std::size_t per_arm, double noise) {
  if (per_arm < 1) throw std::invalid_argument("make_spirals: need at least one point per arm");
  LabeledDataset data;
  data.num_classes = 2;
  data.inputs = Matrix(2 * per_arm, 2);
  data.labels.reserve(2 * per_arm);
  const double t_min = std::numbers::pi / 2.0;
  const double t_max = 3.0 * std::numbers::pi;
  std::size_t row = 0;
  for (std::size_t arm = 0; arm < 2; ++arm) {
    const double phase = static_cast<double>(arm) * std::numbers::pi;
    for (std::size_t i = 0; i < per_arm; ++i) {
      const double t = per_arm == 1
                           ? t_min
                           : t_min + (t_max - t_min) * static_cast<double>(i) /
                                         static_cast<double>(per_arm - 1);
      const double r = 4.0 * t / t_max;
      data.inputs(row, 0) = r * std::cos(t + phase) + noise * rng.normal();
      data.inputs(row, 1) = r * std::sin(t + phase) + noise * rng.normal();
      data.labels.push_back(static_cast<int>(arm));
      ++row;
    }
  }
  return data;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4))
    throw IoError("load_idx: truncated payload in " + path);
  return (static_cast<std::uint32_t>(bytes[0]) << 24) |
         (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) | static_cast<std::uint32_t>(bytes[3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw IoError("load_idx: cannot open " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw IoError("load_idx: cannot open " + labels_path);

  const std::uint32_t image_magic = read_be_u32(images, images_path);
  if (image_magic != 0x00000803u)
    throw IoError("load_idx: bad magic in " + images_path + " (expected 0x00000803)");
  const std::uint32_t n_images = read_be_u32(images, images_path);
  const std::uint32_t height = read_be_u32(images, images_path);
  const std::uint32_t width = read_be_u32(images, images_path);

  const std::uint32_t label_magic = read_be_u32(labels, labels_path);
  if (label_magic != 0x00000801u)
    throw IoError("load_idx: bad magic in " + labels_path + " (expected 0x00000801)");
  const std::uint32_t n_labels = read_be_u32(labels, labels_path);

  if (n_images != n_labels)
    throw IoError("load_idx: image/label count mismatch (" + std::to_string(n_images) +
                  " images vs " + std::to_string(n_labels) + " labels)");

  const std::size_t dim = static_cast<std::size_t>(height) * width;
  LabeledDataset data;
  data.inputs = Matrix(n_images, dim);
  data.labels.resize(n_labels);
  data.box_lo = 0.0;
  data.box_hi = 1.0;

  std::vector<unsigned char> buffer(dim);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!images.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(dim)))
      throw IoError("load_idx: truncated payload in " + images_path);
    auto row = data.inputs.row(i);
    for (std::size_t p = 0; p < dim; ++p) row[p] = static_cast<double>(buffer[p]) / 255.0;
  }
  std::vector<unsigned char> raw_labels(n_labels);
  if (n_labels > 0 && !labels.read(reinterpret_cast<char*>(raw_labels.data()),
                                   static_cast<std::streamsize>(n_labels)))
    throw IoError("load_idx: truncated payload in " + labels_path);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    data.labels[i] = static_cast<int>(raw_labels[i]);
    if (data.labels[i] > max_label) max_label = data.labels[i];
  }
  data.num_classes = static_cast<std::size_t>(max_label) + 1;
  return data;
}

}  // namespace gkl
