#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"
#include "wav/valuation/reward.hpp"
#include "wav/worldgen/point_mass.hpp"

namespace wav {

struct ReturnSpec {
  double gamma = 0.99;
  int horizon = 24;

  void validate() const {
    require(gamma > 0.0 && gamma <= 1.0, "ReturnSpec: gamma must lie in (0,1]");
    require(horizon >= 1, "ReturnSpec: horizon must be positive");
  }
};

/// sum_i gamma^i r_i, i from 0. gamma = 0 gives r_0.
inline double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

inline double discounted_return(std::span<const double> rewards, const ReturnSpec& spec) {
  require(static_cast<int>(rewards.size()) == spec.horizon, "discounted_return: reward length must equal horizon");
  return discounted_return(rewards, spec.gamma);
}

/// Vector of per-segment value estimates for one (trajectory, value latent) pair.
struct ValueSample {
  Vector values;
};

struct StepReward {
  RewardBreakdown breakdown;
  double collision = 0.0;  // 1 while inside an obstacle
  double total = 0.0;      // breakdown.total + w_time + w_collision * collision
};

/// Dense reward at every step of a point-mass trajectory, against the goal
/// frame and goal state. Previous states/actions before the horizon are the
/// initial state and world.start_action.
inline std::vector<StepReward> step_rewards(const Trajectory& traj, const PointMassWorld& world,
                                            const RewardWeights& weights) {
  const int horizon = traj.horizon();
  require(traj.actions.rows() == horizon, "step_rewards: states/actions length mismatch");
  const Frame goal_frame = render_goal(world);
  const Vector goal_state = world.goal_state();
  const Vector a0 = world.start_action;
  std::vector<StepReward> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int t = 0; t < horizon; ++t) {
    const Vector s_t = traj.state_at(t);
    const Vector s_prev = traj.state_at(t - 1);
    const Vector s_prev2 = traj.state_at(std::max(t - 2, -1));
    const Vector a_t = traj.actions.row(t).transpose();
    const Vector a_prev = t >= 1 ? Vector(traj.actions.row(t - 1).transpose()) : a0;
    const Vector a_prev2 = t >= 2 ? Vector(traj.actions.row(t - 2).transpose()) : a0;
    const Frame frame = traj.frames ? (*traj.frames)[static_cast<std::size_t>(t)] : render(world, s_t);
    StepReward step;
    step.breakdown = dense_reward({frame, goal_frame, s_t, goal_state, s_prev, s_prev2, a_t, a_prev, a_prev2},
                                  weights);
    step.collision = world.in_obstacle(s_t.head<2>()) ? 1.0 : 0.0;
    step.total = step.breakdown.total + weights.w_time + weights.w_collision * step.collision;
    out.push_back(step);
  }
  return out;
}

/// Discounted H-step return-to-go from the start of each of `segments`
/// equal segments of an H-step reward sequence:
///   v_j = sum_{i=0}^{H-1} gamma^i r~(start_j + i),  start_j = floor(j*H/segments)
/// where r~(t) = r_t inside the horizon and r_{H-1} beyond it (the final
/// step is held). Every component sums the same number of steps, so a
/// constant reward sequence gives equal components, and v_0 is the plain
/// discounted return of the sequence.
inline Vector segment_returns(std::span<const double> rewards, double gamma, int segments) {
  const int horizon = static_cast<int>(rewards.size());
  require(segments >= 1 && segments <= horizon, "segment_returns: need 1 <= segments <= horizon");
  const double held = rewards.back();
  Vector out(segments);
  for (int j = 0; j < segments; ++j) {
    const int start = static_cast<int>((static_cast<long long>(j) * horizon) / segments);
    double total = 0.0;
    double weight = 1.0;
    for (int i = 0; i < horizon; ++i) {
      const int t = start + i;
      total += weight * (t < horizon ? rewards[static_cast<std::size_t>(t)] : held);
      weight *= gamma;
    }
    out[j] = total;
  }
  return out;
}

/// Reference value evaluator: segment returns of the dense reward plus
/// noise_scale times the leading components of the value latent.
struct AnalyticValueEvaluator {
  PointMassWorld world;
  ReturnSpec returns;
  RewardWeights weights;
  double noise_scale = 0.05;
  int segments = 8;

  using features_type = Vector;

  [[nodiscard]] Eigen::Index latent_dim() const noexcept { return segments; }

  /// Noiseless segment values for a decoded trajectory.
  [[nodiscard]] Vector features(const Trajectory& traj) const {
    require(traj.horizon() == returns.horizon, "evaluate_value: trajectory horizon differs from ReturnSpec");
    const auto steps = step_rewards(traj, world, weights);
    std::vector<double> r(steps.size());
    std::transform(steps.begin(), steps.end(), r.begin(), [](const StepReward& s) { return s.total; });
    return segment_returns(r, returns.gamma, segments);
  }

  [[nodiscard]] ValueSample evaluate(const Vector& features, const Vector& z_val) const {
    require(z_val.size() >= features.size(), "evaluate_value: value latent shorter than the value vector");
    return {features + noise_scale * z_val.head(features.size())};
  }
};

inline ValueSample evaluate_value(const Trajectory& traj, const Vector& z_val, const PointMassWorld& world,
                                  const ReturnSpec& spec, double noise_scale, const RewardWeights& weights = {},
                                  int segments = 8) {
  const AnalyticValueEvaluator eval{world, spec, weights, noise_scale, segments};
  return eval.evaluate(eval.features(traj), z_val);
}

/// mean(v) / (population_std(v) + eps).
inline double snr(const ValueSample& sample, double eps) {
  const auto& v = sample.values;
  require(v.size() >= 2, "snr: value sample needs at least two components");
  require(eps >= 0.0, "snr: eps must be non-negative");
  const double n = static_cast<double>(v.size());
  const double mean = v.sum() / n;
  const double var = (v.array() - mean).square().sum() / n;
  return mean / (std::sqrt(var) + eps);
}

inline double exploration_score(std::span<const double> snr_row) {
  require(!snr_row.empty(), "exploration_score: empty row");
  return *std::max_element(snr_row.begin(), snr_row.end());
}

}  // namespace wav
