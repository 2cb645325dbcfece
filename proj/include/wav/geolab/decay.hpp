#pragma once

// Feasible-mass decay over a horizon sweep: one diagonal-segment patch per
// horizon in the cube [0, side]^D with D = H * (dim_state + dim_action),
// uniform and latent mass estimates, and a log-linear fit in H.

#include <cmath>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wav/core/error.hpp"
#include "wav/core/rng.hpp"
#include "wav/geolab/mass.hpp"
#include "wav/worldgen/affine.hpp"
#include "wav/worldgen/trajectory.hpp"

namespace wav {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "fit_line: x and y differ in length");
  require(x.size() >= 2, "fit_line: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, "fit_line: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

struct GeolabConfig {
  std::vector<int> horizons{1, 2, 4, 8};
  int dim_state = 1;
  int dim_action = 1;
  int intrinsic_dim = 1;  // only 1 (diagonal segment) has a closed-form tube volume
  double side = 0.2;
  double epsilon = 0.05;
  double delta = 0.1;
  double off_scale = 2.0;
  long long n_uniform = 1'000'000;
  long long n_latent = 100'000;
  int workers = 1;

  void validate() const {
    require(horizons.size() >= 3, "geolab.horizons needs at least 3 entries");
    for (std::size_t i = 0; i < horizons.size(); ++i) {
      require(horizons[i] >= 1, "geolab.horizons entries must be >= 1");
      require(i == 0 || horizons[i] > horizons[i - 1], "geolab.horizons must be strictly increasing");
    }
    require(dim_state >= 1 && dim_action >= 0, "geolab.dim_state must be >= 1 and geolab.dim_action >= 0");
    require(intrinsic_dim == 1, "geolab.intrinsic_dim: only 1 is supported");
    require(side > 2.0 * epsilon, "geolab.side must exceed 2 * geolab.epsilon");
    require(epsilon > 0.0, "geolab.epsilon must be > 0");
    require(delta >= 0.0 && delta <= 1.0, "geolab.delta must lie in [0,1]");
    require(off_scale > 1.0, "geolab.off_scale must be > 1");
    require(n_uniform >= 1000, "geolab.n_uniform must be >= 1000");
    require(n_latent >= 1, "geolab.n_latent must be >= 1");
    require(workers >= 1, "geolab.workers must be >= 1");
  }
};

struct DecayPoint {
  int H = 0;
  int D = 0;
  MassEstimate uniform;
  MassEstimate latent;
  double closed_form = 0.0;  // exact tube volume / box volume
  double log_ratio = -std::numeric_limits<double>::infinity();
  bool in_fit = false;
  double reweight = 0.0;           // latent ratio / uniform ratio
  bool reweight_is_bound = false;  // zero uniform hits: latent / ci_high, a lower bound
  double reweight_closed_form = 0.0;
};

struct DecayCurve {
  std::vector<DecayPoint> points;
  LinearFit fit;
  int fitted_points = 0;
};

inline AffineManifoldSpec decay_spec(const GeolabConfig& cfg, int H, TrajectorySpace& space_out) {
  space_out = TrajectorySpace::uniform_box(H, cfg.dim_state, cfg.dim_action, 0.0, cfg.side);
  return diagonal_segment_spec(space_out, cfg.epsilon, cfg.delta, cfg.off_scale);
}

inline DecayCurve decay_curve(const GeolabConfig& cfg, const SeededStream& stream) {
  cfg.validate();
  DecayCurve curve;
  std::vector<double> xs, ys;
  for (int H : cfg.horizons) {
    TrajectorySpace space;
    const AffineManifoldSpec spec = decay_spec(cfg, H, space);
    const SeededStream h_stream = stream.derive(indexed("H", H));
    DecayPoint p;
    p.H = H;
    p.D = static_cast<int>(space.ambient_dim());
    p.uniform = estimate_feasible_mass(spec, space, cfg.n_uniform, h_stream.derive("uniform"), cfg.workers);
    p.latent = estimate_latent_mass(spec, cfg.n_latent, h_stream.derive("latent"), cfg.workers);
    p.closed_form = segment_tube_volume(p.D, spec.extent[0], cfg.epsilon) / space.volume();
    p.reweight_closed_form = (1.0 - cfg.delta) / p.closed_form;
    if (p.uniform.hits > 0) {
      p.log_ratio = std::log(p.uniform.ratio);
      p.in_fit = true;
      p.reweight = p.latent.ratio / p.uniform.ratio;
      xs.push_back(H);
      ys.push_back(p.log_ratio);
    } else {
      std::clog << "geolab: H=" << H << " produced no feasible uniform samples out of " << cfg.n_uniform
                << "; excluded from the fit\n";
      p.reweight = p.latent.ratio / p.uniform.ci_high;
      p.reweight_is_bound = true;
    }
    curve.points.push_back(p);
  }
  curve.fitted_points = static_cast<int>(xs.size());
  if (xs.size() >= 2) curve.fit = fit_line(xs, ys);
  else curve.fit = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0.0};
  return curve;
}

}  // namespace wav
