#pragma once

// Planted rare region in latent space: {z : z_0 > q}, with q the standard
// normal (1 - p) quantile so the region has prior mass p. One-shot search
// draws the whole budget from the prior; the iterative arm runs the
// planner with the same number of evaluations.

#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "wav/core/error.hpp"
#include "wav/core/rng.hpp"
#include "wav/geolab/mass.hpp"
#include "wav/planner/planner.hpp"

namespace wav {

struct LandscapeSpec {
  double p = 0.001;
  int dim = 2;
  int segments = 8;
  double noise_scale = 0.0;

  void validate() const {
    require(p > 0.0, "landscape: target mass p must be > 0 (an empty region cannot be found)");
    require(p <= 1.0, "landscape: target mass p must be <= 1");
    require(dim >= 1, "landscape: dim must be >= 1");
    require(segments >= 2, "landscape: segments must be >= 2");
    require(noise_scale >= 0.0, "landscape: noise_scale must be >= 0");
  }

  [[nodiscard]] double threshold() const {
    if (p >= 1.0) return -std::numeric_limits<double>::infinity();
    return boost::math::quantile(boost::math::normal_distribution<>(), 1.0 - p);
  }
};

/// Identity decode: the latent is the trajectory.
struct PassThroughGenerator {
  int dim = 2;
  using output_type = Vector;
  [[nodiscard]] Eigen::Index latent_dim() const noexcept { return dim; }
  [[nodiscard]] Vector decode(const Vector& z) const { return z; }
  [[nodiscard]] Matrix action_chunk(const Vector& out, int n) const { return out.transpose().replicate(n, 1); }
};

/// Value vector exp(z_0) in every segment, plus optional latent noise.
struct LandscapeEvaluator {
  int segments = 8;
  double noise_scale = 0.0;
  using features_type = Vector;
  [[nodiscard]] Eigen::Index latent_dim() const noexcept { return segments; }
  [[nodiscard]] Vector features(const Vector& z) const { return Vector::Constant(segments, std::exp(z[0])); }
  [[nodiscard]] ValueSample evaluate(const Vector& f, const Vector& z_val) const {
    require(z_val.size() >= f.size(), "landscape: value latent shorter than the value vector");
    return {f + noise_scale * z_val.head(f.size())};
  }
};

struct ArmResult {
  long long hits = 0;
  long long repetitions = 0;
  double rate = 0.0;
  Interval ci;
};

struct LandscapeComparison {
  double threshold = 0.0;
  double analytic_one_shot = 0.0;  // 1 - (1 - p)^budget
  long long budget = 0;
  ArmResult one_shot;
  ArmResult iterative;
};

inline ArmResult make_arm(long long hits, long long reps) {
  return {hits, reps, static_cast<double>(hits) / static_cast<double>(reps), clopper_pearson(hits, reps)};
}

/// A repetition hits when any evaluated latent lies in the planted region.
inline LandscapeComparison one_shot_vs_iterative(const LandscapeSpec& spec, long long budget, PlannerConfig cfg,
                                                 long long repetitions, const SeededStream& stream) {
  spec.validate();
  cfg.validate();
  require(repetitions >= 1, "landscape: repetitions must be >= 1");
  require(budget == static_cast<long long>(cfg.K) * cfg.M * cfg.N,
          "landscape: budget must equal planner.K * planner.M * planner.N");
  require(cfg.d_vid == spec.dim, "landscape: planner.d_vid must equal the landscape dimension");
  LandscapeComparison out;
  out.budget = budget;
  out.threshold = spec.threshold();
  out.analytic_one_shot = 1.0 - std::pow(1.0 - spec.p, static_cast<double>(budget));

  const PassThroughGenerator gen{spec.dim};
  const LandscapeEvaluator eval{spec.segments, spec.noise_scale};
  long long one_shot_hits = 0, iterative_hits = 0;
  for (long long r = 0; r < repetitions; ++r) {
    const SeededStream rep = stream.derive(indexed("rep", r));
    auto engine = rep.derive("oneshot").engine();
    bool hit = false;
    for (long long i = 0; i < budget; ++i) {
      const double z0 = engine.normal();
      for (int j = 1; j < spec.dim; ++j) engine.normal();
      hit = hit || z0 > out.threshold;
    }
    one_shot_hits += hit ? 1 : 0;

    const auto result = plan(gen, eval, cfg, rep.derive("iterative"));
    hit = false;
    for (const auto& rec : result.history) {
      for (const auto& z : rec.z_vid) hit = hit || z[0] > out.threshold;
    }
    iterative_hits += hit ? 1 : 0;
  }
  out.one_shot = make_arm(one_shot_hits, repetitions);
  out.iterative = make_arm(iterative_hits, repetitions);
  return out;
}

}  // namespace wav
