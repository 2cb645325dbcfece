#pragma once

#include <cmath>

#include "wav/core/error.hpp"
#include "wav/worldgen/trajectory.hpp"

namespace wav {

inline constexpr double kSsimDynamicRange = 1.0;
inline constexpr double kSsimC1 = (0.01 * kSsimDynamicRange) * (0.01 * kSsimDynamicRange);
inline constexpr double kSsimC2 = (0.03 * kSsimDynamicRange) * (0.03 * kSsimDynamicRange);

/// Global single-window SSIM with population moments.
inline double ssim(const Frame& a, const Frame& b) {
  require(a.pixels.rows() == b.pixels.rows() && a.pixels.cols() == b.pixels.cols(),
          "ssim: frame dimensions differ");
  require(a.pixels.size() > 0, "ssim: empty frame");
  const double n = static_cast<double>(a.pixels.size());
  const double mu_a = a.pixels.sum() / n;
  const double mu_b = b.pixels.sum() / n;
  const auto da = (a.pixels.array() - mu_a);
  const auto db = (b.pixels.array() - mu_b);
  const double var_a = da.square().sum() / n;
  const double var_b = db.square().sum() / n;
  const double cov = (da * db).sum() / n;
  return ((2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2)) /
         ((mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2));
}

inline double mse(const Frame& a, const Frame& b) {
  require(a.pixels.rows() == b.pixels.rows() && a.pixels.cols() == b.pixels.cols(),
          "mse: frame dimensions differ");
  return (a.pixels - b.pixels).squaredNorm() / static_cast<double>(a.pixels.size());
}

}  // namespace wav
