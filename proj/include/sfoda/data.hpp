#pragma once

// Synthetic open-set domain pairs and the label-preserving transformation
// used for consistency training.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"
#include "sfoda/random.hpp"

namespace sfoda {

struct LabeledData {
  Matrix features;
  std::vector<int> labels;
};

// A labeled source set and an unlabeled target set. target_labels_hidden is
// for evaluation only; training entry points take target features alone.
struct DomainPair {
  LabeledData source;
  Matrix target_features;
  std::vector<int> target_labels_hidden;
  std::size_t num_known = 0;
  std::size_t num_unknown = 0;
  // Class centers in the source frame, known classes first.
  Matrix class_centers;
  // The same centers mapped through the domain shift.
  Matrix target_centers;
  std::vector<std::string> warnings;

  std::size_t num_target_classes() const { return num_known + num_unknown; }
};

struct SynthConfig {
  std::size_t dim = 2;
  std::size_t num_known = 4;
  std::size_t num_unknown = 2;
  std::size_t source_per_class = 200;
  std::size_t target_per_class = 150;
  double radius = 4.0;
  // Unknown centers sit on an inner circle; at 0 they all share the origin,
  // equally far from every known class.
  double unknown_radius = 0.0;
  double blob_std = 0.5;
  double shift_degrees = 25.0;
  std::vector<double> shift_translation{0.5, 0.5};
};

namespace detail {

// Rotation by `angle` in the (i, j) coordinate plane, in place.
inline void rotate_plane(std::span<double> x, std::size_t i, std::size_t j, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double xi = x[i];
  const double xj = x[j];
  x[i] = c * xi - s * xj;
  x[j] = s * xi + c * xj;
}

inline void domain_shift(std::span<double> x, const SynthConfig& cfg) {
  rotate_plane(x, 0, 1, cfg.shift_degrees * std::numbers::pi / 180.0);
  for (std::size_t k = 0; k < x.size() && k < cfg.shift_translation.size(); ++k)
    x[k] += cfg.shift_translation[k];
}

}  // namespace detail

// Gaussian blobs. Known centers are evenly spaced on a circle in the first
// two coordinates, unknown ones on a circle of unknown_radius. The source
// holds the known classes; the target holds every class, passed through a
// rotation plus translation.
inline DomainPair generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.dim < 2) throw ContractError("synthetic: dim must be >= 2");
  if (cfg.num_known < 2) throw ContractError("synthetic: num_known must be >= 2");
  if (cfg.source_per_class < 8 || cfg.target_per_class < 8)
    throw ContractError("synthetic: per-class counts must be >= 8");
  if (cfg.blob_std < 0.0) throw ContractError("synthetic: blob_std must be >= 0");
  if (cfg.shift_translation.size() > cfg.dim)
    throw ContractError("synthetic: shift_translation longer than dim");

  DomainPair pair;
  pair.num_known = cfg.num_known;
  pair.num_unknown = cfg.num_unknown;
  if (cfg.radius == 0.0) pair.warnings.push_back("class separation is 0; classes coincide");

  const std::size_t total = cfg.num_known + cfg.num_unknown;
  pair.class_centers = Matrix(total, cfg.dim);
  for (std::size_t k = 0; k < cfg.num_known; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / cfg.num_known;
    pair.class_centers(k, 0) = cfg.radius * std::cos(angle);
    pair.class_centers(k, 1) = cfg.radius * std::sin(angle);
  }
  for (std::size_t u = 0; u < cfg.num_unknown; ++u) {
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(u) + 0.5) / cfg.num_unknown;
    pair.class_centers(cfg.num_known + u, 0) = cfg.unknown_radius * std::cos(angle);
    pair.class_centers(cfg.num_known + u, 1) = cfg.unknown_radius * std::sin(angle);
  }
  pair.target_centers = pair.class_centers;
  for (std::size_t c = 0; c < total; ++c) detail::domain_shift(pair.target_centers.row(c), cfg);

  Rng rng(seed);
  auto sample = [&](std::size_t cls, std::span<double> out) {
    for (std::size_t k = 0; k < cfg.dim; ++k)
      out[k] = pair.class_centers(cls, k) + (cfg.blob_std > 0.0 ? rng.normal(0.0, cfg.blob_std) : 0.0);
  };
  auto shuffled_order = [&](std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    return order;
  };

  {
    const std::size_t n = cfg.num_known * cfg.source_per_class;
    Matrix x(n, cfg.dim);
    std::vector<int> y(n);
    auto order = shuffled_order(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cls = i / cfg.source_per_class;
      sample(cls, x.row(order[i]));
      y[order[i]] = static_cast<int>(cls);
    }
    pair.source = {std::move(x), std::move(y)};
  }
  {
    const std::size_t n = total * cfg.target_per_class;
    Matrix x(n, cfg.dim);
    std::vector<int> y(n);
    auto order = shuffled_order(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cls = i / cfg.target_per_class;
      sample(cls, x.row(order[i]));
      detail::domain_shift(x.row(order[i]), cfg);
      y[order[i]] = static_cast<int>(cls);
    }
    pair.target_features = std::move(x);
    pair.target_labels_hidden = std::move(y);
  }
  return pair;
}

struct TransformPolicy {
  double noise_std = 0.1;
  double rotation_max_radians = 10.0 * std::numbers::pi / 180.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;

  static TransformPolicy identity() { return {0.0, 0.0, 1.0, 1.0}; }

  void validate() const {
    if (!(noise_std >= 0.0)) throw ContractError("transform: noise_std must be >= 0");
    if (!(rotation_max_radians >= 0.0))
      throw ContractError("transform: rotation_max_radians must be >= 0");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi))
      throw ContractError("transform: need 0 < scale_lo <= scale_hi");
  }
};

// x+ = scale * R * x + noise, with R a random rotation in a uniformly chosen
// coordinate plane. The identity policy returns x unchanged.
inline std::vector<double> transform(std::span<const double> x, const TransformPolicy& policy,
                                     Rng& rng) {
  std::vector<double> out(x.begin(), x.end());
  const std::size_t d = out.size();
  if (policy.rotation_max_radians > 0.0 && d >= 2) {
    const std::size_t i = rng.index(d);
    std::size_t j = rng.index(d - 1);
    if (j >= i) ++j;
    const double angle = rng.uniform(-policy.rotation_max_radians, policy.rotation_max_radians);
    detail::rotate_plane(out, i, j, angle);
  }
  if (policy.scale_lo != 1.0 || policy.scale_hi != 1.0) {
    const double s =
        policy.scale_lo == policy.scale_hi ? policy.scale_lo : rng.uniform(policy.scale_lo, policy.scale_hi);
    for (double& v : out) v *= s;
  }
  if (policy.noise_std > 0.0) {
    for (double& v : out) v += rng.normal(0.0, policy.noise_std);
  }
  return out;
}

inline Matrix transform_batch(const Matrix& x, const TransformPolicy& policy, Rng& rng) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto t = transform(x.row(r), policy, rng);
    std::copy(t.begin(), t.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace sfoda
