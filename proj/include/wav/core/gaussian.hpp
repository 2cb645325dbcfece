#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wav/core/error.hpp"
#include "wav/core/rng.hpp"

namespace wav {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned Gaussian N(mean, diag(std^2)) over a latent space.
///
/// Construction through `make` enforces positive, finite std. Raw
/// construction is allowed for intermediate fits whose std may be zero
/// before the planner applies its floor; `valid()` reports which case holds.
struct DiagonalGaussian {
  Vector mean;
  Vector std;

  static DiagonalGaussian make(Vector mean, Vector std) {
    DiagonalGaussian g{std::move(mean), std::move(std)};
    g.validate();
    return g;
  }

  static DiagonalGaussian standard(Eigen::Index dim) {
    require(dim >= 1, "DiagonalGaussian: dimension must be >= 1");
    return {Vector::Zero(dim), Vector::Ones(dim)};
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return mean.size(); }

  [[nodiscard]] bool valid() const noexcept {
    if (mean.size() < 1 || mean.size() != std.size()) return false;
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      if (!std::isfinite(mean[i]) || !std::isfinite(std[i]) || !(std[i] > 0.0)) return false;
    }
    return true;
  }

  void validate() const {
    require(mean.size() >= 1 && mean.size() == std.size(),
            "DiagonalGaussian: mean and std must have equal length >= 1");
    for (Eigen::Index i = 0; i < mean.size(); ++i) {
      require(std::isfinite(mean[i]), "DiagonalGaussian: non-finite mean component " + std::to_string(i));
      require(std::isfinite(std[i]) && std[i] > 0.0,
              "DiagonalGaussian: std component " + std::to_string(i) + " must be finite and > 0");
    }
  }

  friend bool operator==(const DiagonalGaussian& a, const DiagonalGaussian& b) {
    return a.mean.size() == b.mean.size() && a.std.size() == b.std.size() && a.mean == b.mean &&
           a.std == b.std;
  }
};

/// `count` draws of mean + std * z, z standard normal from `stream`.
inline std::vector<Vector> gaussian_sample(const DiagonalGaussian& dist, const SeededStream& stream,
                                           std::size_t count) {
  dist.validate();
  require(count >= 1, "gaussian_sample: count must be >= 1");
  auto engine = stream.engine();
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    Vector v(dist.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = dist.mean[i] + dist.std[i] * engine.normal();
    out.push_back(std::move(v));
  }
  return out;
}

inline Vector gaussian_sample_one(const DiagonalGaussian& dist, const SeededStream& stream) {
  return gaussian_sample(dist, stream, 1).front();
}

/// Per-dimension mean and population std (divide by the sample count).
/// The result may carry zero std; callers floor it before sampling.
inline DiagonalGaussian gaussian_fit(std::span<const Vector> samples) {
  require(!samples.empty(), "gaussian_fit: empty sample list");
  const Eigen::Index dim = samples.front().size();
  require(dim >= 1, "gaussian_fit: zero-dimensional samples");
  Vector mean = Vector::Zero(dim);
  for (const auto& s : samples) {
    require(s.size() == dim, "gaussian_fit: mismatched sample dimensions");
    mean += s;
  }
  const double n = static_cast<double>(samples.size());
  mean /= n;
  Vector var = Vector::Zero(dim);
  for (const auto& s : samples) var.array() += (s - mean).array().square();
  return {mean, (var / n).array().sqrt().matrix()};
}

inline DiagonalGaussian gaussian_fit(const std::vector<Vector>& samples) {
  return gaussian_fit(std::span<const Vector>(samples));
}

/// mean <- alpha*current + (1-alpha)*previous, std <- beta*current + (1-beta)*previous.
inline DiagonalGaussian gaussian_blend(const DiagonalGaussian& current, const DiagonalGaussian& previous,
                                       double alpha, double beta) {
  require(alpha >= 0.0 && alpha <= 1.0, "gaussian_blend: alpha must lie in [0,1]");
  require(beta >= 0.0 && beta <= 1.0, "gaussian_blend: beta must lie in [0,1]");
  require(current.dim() == previous.dim() && current.std.size() == previous.std.size(),
          "gaussian_blend: dimension mismatch");
  // Exact endpoints: 1*x + 0*y is x for finite y, but spell the limits out.
  DiagonalGaussian out;
  out.mean = alpha == 1.0   ? current.mean
             : alpha == 0.0 ? previous.mean
                            : (alpha * current.mean + (1.0 - alpha) * previous.mean).eval();
  out.std = beta == 1.0   ? current.std
            : beta == 0.0 ? previous.std
                          : (beta * current.std + (1.0 - beta) * previous.std).eval();
  return out;
}

inline DiagonalGaussian floor_std(DiagonalGaussian dist, double sigma_min) {
  dist.std = dist.std.cwiseMax(sigma_min);
  return dist;
}

}  // namespace wav
