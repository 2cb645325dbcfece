#pragma once

// Monte Carlo feasible-mass estimates with exact binomial intervals, and
// closed-form tube volumes around a segment for checking them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <boost/math/distributions/beta.hpp>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"
#include "wav/core/parallel.hpp"
#include "wav/core/rng.hpp"
#include "wav/worldgen/affine.hpp"
#include "wav/worldgen/trajectory.hpp"

namespace wav {

struct MassEstimate {
  double ratio = 0.0;
  long long samples_used = 0;
  long long hits = 0;
  double ci_low = 0.0;
  double ci_high = 1.0;
};

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

/// Two-sided Clopper-Pearson interval for `hits` successes in `n` trials.
inline Interval clopper_pearson(long long hits, long long n, double confidence = 0.95) {
  require(n >= 1, "clopper_pearson: need at least one trial");
  require(hits >= 0 && hits <= n, "clopper_pearson: hits must lie in [0, n]");
  require(confidence > 0.0 && confidence < 1.0, "clopper_pearson: confidence must lie in (0,1)");
  const double a = 0.5 * (1.0 - confidence);
  const auto k = static_cast<double>(hits);
  const auto m = static_cast<double>(n);
  Interval ci;
  if (hits > 0) ci.low = boost::math::quantile(boost::math::beta_distribution<>(k, m - k + 1.0), a);
  if (hits < n) ci.high = boost::math::quantile(boost::math::beta_distribution<>(k + 1.0, m - k), 1.0 - a);
  return ci;
}

inline MassEstimate make_estimate(long long hits, long long n) {
  const Interval ci = clopper_pearson(hits, n);
  return {static_cast<double>(hits) / static_cast<double>(n), n, hits, ci.low, ci.high};
}

/// Volume of the n-ball of radius r.
inline double ball_volume(int n, double r) {
  require(n >= 0, "ball_volume: dimension must be >= 0");
  const double half = 0.5 * n;
  return std::exp(half * std::log(std::numbers::pi) - std::lgamma(half + 1.0)) * std::pow(r, n);
}

/// Volume of the epsilon-neighbourhood of a segment of length `length` in
/// R^D: a cylinder plus two half-ball caps.
inline double segment_tube_volume(int D, double length, double epsilon) {
  require(D >= 1, "segment_tube_volume: dimension must be >= 1");
  require(length >= 0.0 && epsilon >= 0.0, "segment_tube_volume: length and epsilon must be >= 0");
  return ball_volume(D - 1, epsilon) * length + ball_volume(D, epsilon);
}

namespace detail {

constexpr long long kMassBlock = 1 << 16;

template <class Hit>
long long count_hits(long long n, int workers, const SeededStream& stream, Hit hit) {
  const long long blocks = (n + kMassBlock - 1) / kMassBlock;
  std::vector<long long> counts(static_cast<std::size_t>(blocks), 0);
  parallel_for(static_cast<std::size_t>(blocks), static_cast<std::size_t>(workers), [&](std::size_t b) {
    const SeededStream block = stream.derive(indexed("block", static_cast<long long>(b)));
    auto engine = block.engine();
    const long long begin = static_cast<long long>(b) * kMassBlock;
    const long long end = std::min(n, begin + kMassBlock);
    long long c = 0;
    for (long long i = begin; i < end; ++i) c += hit(engine, block, i) ? 1 : 0;
    counts[b] = c;
  });
  long long total = 0;
  for (long long c : counts) total += c;
  return total;
}

}  // namespace detail

/// Fraction of uniform points in the space's box that lie within epsilon
/// of the patch.
inline MassEstimate estimate_feasible_mass(const AffineManifoldSpec& spec, const TrajectorySpace& space,
                                           long long n_samples, const SeededStream& stream, int workers = 1) {
  require(n_samples >= 1, "estimate_feasible_mass: n_samples must be positive");
  space.validate();
  spec.validate();
  require(spec.ambient_dim() == space.ambient_dim(), "estimate_feasible_mass: spec and space dimensions differ");
  for (const Vector& corner : {spec.point(Vector::Zero(spec.intrinsic_dim())), spec.point(Vector::Ones(spec.intrinsic_dim()))}) {
    require(space.contains(corner), "estimate_feasible_mass: patch is not embedded in the space's box");
  }
  const Vector lo = space.lower;
  const Vector width = space.upper - space.lower;
  const long long hits = detail::count_hits(n_samples, workers, stream, [&](SplitMix64& engine, const SeededStream&, long long) {
    Vector x(lo.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = lo[j] + width[j] * engine.uniform();
    return is_feasible(x, spec);
  });
  return make_estimate(hits, n_samples);
}

/// Fraction of standard-normal latents whose decode is feasible.
inline MassEstimate estimate_latent_mass(const AffineManifoldSpec& spec, long long n_samples,
                                         const SeededStream& stream, int workers = 1) {
  require(n_samples >= 1, "estimate_latent_mass: n_samples must be positive");
  spec.validate();
  const long long hits =
      detail::count_hits(n_samples, workers, stream, [&](SplitMix64& engine, const SeededStream& block, long long i) {
        Vector z(spec.intrinsic_dim());
        for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = engine.normal();
        return is_feasible(decode_affine(z, spec, block.derive(indexed("decode", i))).point, spec);
      });
  return make_estimate(hits, n_samples);
}

}  // namespace wav
