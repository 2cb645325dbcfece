#pragma once

// Receding-horizon episodes on the point-mass world: plan, execute the
// first `stride` actions of the chunk, re-plan from the new state. An
// episode ends when the agent comes within the success radius of the goal
// or after max_steps executed steps. Success requires reaching the goal
// without entering any obstacle at any executed step.

#include <cstdint>
#include <optional>
#include <vector>

#include "wav/core/rng.hpp"
#include "wav/planner/planner.hpp"
#include "wav/valuation/value.hpp"
#include "wav/worldgen/point_mass.hpp"

namespace wav {

struct EpisodeConfig {
  int max_steps = 48;
  int stride = 6;                    // executed steps per plan() call
  double success_fraction = 0.05;    // of the workspace diagonal
};

struct IterationTrace {
  int plan = 0;
  int k = 0;
  double mean_elite_phi = 0.0;
  double best_phi = 0.0;
  double mean_sigma_vid = 0.0;
  double mean_sigma_val = 0.0;
  double wall_ms = 0.0;
};

struct EpisodeOutcome {
  int episode = 0;
  bool success = false;
  bool reached = false;
  bool collided = false;
  int steps = 0;
  int plans = 0;
  double final_distance = 0.0;
  double mean_best_phi = 0.0;
  double plan_ms_total = 0.0;  // wall time spent inside plan()
  std::vector<IterationTrace> history;
};

inline EpisodeOutcome run_episode(const PointMassWorld& base_world, const AnalyticValueEvaluator& evaluator_proto,
                                  const PlannerConfig& cfg, const EpisodeConfig& ecfg, const SeededStream& stream,
                                  int episode_index = 0) {
  require(ecfg.stride >= 1 && ecfg.stride <= cfg.chunk_len, "episode: stride must lie in [1, planner.chunk_len]");
  require(ecfg.max_steps >= 1, "episode: max_steps must be positive");
  EpisodeOutcome out;
  out.episode = episode_index;
  PointMassWorld world = base_world;
  const double threshold = ecfg.success_fraction * world.diagonal();
  std::optional<PlannerState> warm;
  double phi_sum = 0.0;

  auto distance = [&] { return (world.start_position() - world.goal).norm(); };
  while (out.steps < ecfg.max_steps && distance() >= threshold) {
    const KnotGenerator generator(world);
    AnalyticValueEvaluator evaluator = evaluator_proto;
    evaluator.world = world;
    auto result = plan(generator, evaluator, cfg, stream.derive(indexed("replan", out.plans)),
                       cfg.warm_start ? warm : std::nullopt);
    ++out.plans;
    out.plan_ms_total += result.total_ms;
    phi_sum += result.chosen_score;
    if (cfg.warm_start) warm = result.final_state;
    for (const auto& rec : result.history) {
      out.history.push_back({out.plans - 1, rec.k, rec.mean_elite_phi, rec.best_phi, rec.mean_sigma_vid,
                             rec.mean_sigma_val, rec.wall_ms});
    }

    State4 s = world.start;
    Vec2 last_action = world.start_action;
    for (int i = 0; i < ecfg.stride && out.steps < ecfg.max_steps; ++i) {
      last_action = result.action_chunk.row(i).transpose();
      s = step_dynamics(world, s, last_action);
      ++out.steps;
      if (world.in_obstacle(s.head<2>())) out.collided = true;
      world.start = s;
      if (distance() < threshold) break;
    }
    world.start_action = last_action;
  }
  out.final_distance = distance();
  out.reached = out.final_distance < threshold;
  out.success = out.reached && !out.collided;
  out.mean_best_phi = out.plans > 0 ? phi_sum / out.plans : 0.0;
  return out;
}

}  // namespace wav
