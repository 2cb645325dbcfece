#pragma once

// 2-D point mass (double integrator) in a box with circular obstacles.
//
// State layout: (px, py, vx, vy). Integration is semi-implicit Euler:
//   v += a*dt; p += v*dt; then p is clamped to the workspace and the
//   velocity component on any clamped axis is set to zero.
// Obstacles do not alter the dynamics; they only enter the reward.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wav/core/error.hpp"
#include "wav/worldgen/trajectory.hpp"

namespace wav {

using Vec2 = Eigen::Vector2d;
using State4 = Eigen::Vector4d;

struct Circle {
  Vec2 center = Vec2::Zero();
  double radius = 0.1;
};

struct PointMassWorld {
  double dt = 0.1;
  Vector start = Vector::Zero(4);  // px, py, vx, vy
  Vec2 goal = Vec2(0.85, 0.85);
  std::vector<Circle> obstacles;
  Vec2 workspace_lo = Vec2(0.0, 0.0);
  Vec2 workspace_hi = Vec2(1.0, 1.0);
  int horizon = 24;
  int knots = 4;
  double accel_limit = 3.0;
  int image_size = 16;
  double agent_radius = 0.08;
  double goal_radius = 0.08;
  Vec2 start_action = Vec2::Zero();  // action applied just before the horizon

  static PointMassWorld default_world() {
    PointMassWorld w;
    w.start = Vector(4);
    w.start << 0.15, 0.15, 0.0, 0.0;
    w.goal = Vec2(0.85, 0.85);
    w.obstacles = {Circle{Vec2(0.5, 0.5), 0.15}};
    return w;
  }

  [[nodiscard]] Vec2 start_position() const { return start.head<2>(); }

  [[nodiscard]] double diagonal() const { return (workspace_hi - workspace_lo).norm(); }

  [[nodiscard]] bool inside_workspace(const Vec2& p) const {
    return (p.array() >= workspace_lo.array()).all() && (p.array() <= workspace_hi.array()).all();
  }

  [[nodiscard]] bool in_obstacle(const Vec2& p) const {
    return std::any_of(obstacles.begin(), obstacles.end(),
                       [&](const Circle& c) { return (p - c.center).norm() < c.radius; });
  }

  [[nodiscard]] State4 goal_state() const {
    State4 s;
    s << goal, 0.0, 0.0;
    return s;
  }

  /// Checks everything needed to integrate and render.
  void validate_dynamics() const {
    require(dt > 0.0 && std::isfinite(dt), "PointMassWorld: dt must be positive");
    require(start.size() == 4 && start.allFinite(), "PointMassWorld: start must be a finite 4-vector");
    require(((workspace_hi - workspace_lo).array() > 0.0).all(), "PointMassWorld: empty workspace");
    require(horizon >= 1, "PointMassWorld: horizon must be positive");
    require(knots >= 1 && knots <= horizon && horizon % knots == 0,
            "PointMassWorld: knots must divide the horizon");
    require(accel_limit > 0.0, "PointMassWorld: accel_limit must be positive");
    require(image_size >= 1, "PointMassWorld: image_size must be positive");
    for (const auto& c : obstacles) require(c.radius > 0.0, "PointMassWorld: obstacle radius must be positive");
  }

  /// Full check for a configured task: start and goal placement too.
  void validate() const {
    validate_dynamics();
    require(inside_workspace(start_position()) && inside_workspace(goal),
            "PointMassWorld: start and goal must lie inside the workspace");
    require(!in_obstacle(start_position()) && !in_obstacle(goal),
            "PointMassWorld: start and goal must lie outside every obstacle");
  }

  [[nodiscard]] int latent_dim() const noexcept { return 2 * knots; }
};

namespace detail {

inline void fill_disc(Matrix& px, const PointMassWorld& w, const Vec2& center, double radius, double value) {
  const int n = w.image_size;
  const Vec2 cell = (w.workspace_hi - w.workspace_lo) / n;
  // Pixel (row i, col j) has its center at lo + (j+0.5, i+0.5) * cell.
  const int j0 = std::max(0, static_cast<int>(std::floor((center.x() - radius - w.workspace_lo.x()) / cell.x())));
  const int j1 = std::min(n - 1, static_cast<int>(std::ceil((center.x() + radius - w.workspace_lo.x()) / cell.x())));
  const int i0 = std::max(0, static_cast<int>(std::floor((center.y() - radius - w.workspace_lo.y()) / cell.y())));
  const int i1 = std::min(n - 1, static_cast<int>(std::ceil((center.y() + radius - w.workspace_lo.y()) / cell.y())));
  const double r2 = radius * radius;
  for (int i = i0; i <= i1; ++i) {
    const double y = w.workspace_lo.y() + (i + 0.5) * cell.y() - center.y();
    for (int j = j0; j <= j1; ++j) {
      const double x = w.workspace_lo.x() + (j + 0.5) * cell.x() - center.x();
      if (x * x + y * y <= r2) px(i, j) = value;
    }
  }
}

}  // namespace detail

inline constexpr double kObstacleShade = 0.3;
inline constexpr double kGoalShade = 0.6;
inline constexpr double kAgentShade = 1.0;

/// Background 0, obstacles 0.3, goal disc 0.6, agent disc 1.0 (drawn last).
inline Frame render(const PointMassWorld& world, const Vector& state) {
  require(state.size() >= 2, "render: state must contain a position");
  const Vec2 p = state.head<2>();
  require(world.inside_workspace(p), "render: position outside workspace");
  Frame f{Matrix::Zero(world.image_size, world.image_size)};
  for (const auto& c : world.obstacles) detail::fill_disc(f.pixels, world, c.center, c.radius, kObstacleShade);
  detail::fill_disc(f.pixels, world, world.goal, world.goal_radius, kGoalShade);
  detail::fill_disc(f.pixels, world, p, world.agent_radius, kAgentShade);
  return f;
}

inline Frame render_goal(const PointMassWorld& world) { return render(world, world.goal_state()); }

/// One semi-implicit Euler step with wall clamping.
inline State4 step_dynamics(const PointMassWorld& world, const State4& s, const Vec2& accel) {
  const Vec2 a = accel.cwiseMax(-world.accel_limit).cwiseMin(world.accel_limit);
  Vec2 v = s.tail<2>() + a * world.dt;
  Vec2 p = s.head<2>() + v * world.dt;
  for (int axis = 0; axis < 2; ++axis) {
    if (p[axis] < world.workspace_lo[axis]) {
      p[axis] = world.workspace_lo[axis];
      v[axis] = 0.0;
    } else if (p[axis] > world.workspace_hi[axis]) {
      p[axis] = world.workspace_hi[axis];
      v[axis] = 0.0;
    }
  }
  State4 out;
  out << p, v;
  return out;
}

/// Applies `actions` (rows, each clamped componentwise to the accel limit)
/// from world.start. Stored actions are the clamped ones, so replaying
/// them reproduces the states exactly.
inline Trajectory rollout(const Matrix& actions, const PointMassWorld& world, bool with_frames = true) {
  require(actions.cols() == 2, "rollout: actions must have 2 columns");
  require(actions.rows() >= 1, "rollout: need at least one action");
  Trajectory traj;
  traj.initial_state = world.start;
  traj.actions = actions.cwiseMax(-world.accel_limit).cwiseMin(world.accel_limit);
  traj.states.resize(actions.rows(), 4);
  State4 s = world.start;
  for (Eigen::Index t = 0; t < actions.rows(); ++t) {
    s = step_dynamics(world, s, traj.actions.row(t).transpose());
    traj.states.row(t) = s.transpose();
  }
  if (with_frames) {
    std::vector<Frame> frames;
    frames.reserve(static_cast<std::size_t>(actions.rows()));
    for (Eigen::Index t = 0; t < actions.rows(); ++t) frames.push_back(render(world, traj.states.row(t).transpose()));
    traj.frames = std::move(frames);
  }
  return traj;
}

/// Latent of size 2P -> P tanh-squashed acceleration knots held
/// piecewise-constant over H/P steps each -> rollout.
inline Matrix knots_to_actions(const Vector& z, const PointMassWorld& world) {
  require(z.size() == world.latent_dim(),
          "decode_knots: latent dimension " + std::to_string(z.size()) + " != 2*knots = " +
              std::to_string(world.latent_dim()));
  const int hold = world.horizon / world.knots;
  Matrix actions(world.horizon, 2);
  for (int t = 0; t < world.horizon; ++t) {
    const int k = t / hold;
    actions(t, 0) = world.accel_limit * std::tanh(z[2 * k]);
    actions(t, 1) = world.accel_limit * std::tanh(z[2 * k + 1]);
  }
  return actions;
}

inline Trajectory decode_knots(const Vector& z, const PointMassWorld& world, bool with_frames = true) {
  return rollout(knots_to_actions(z, world), world, with_frames);
}

/// Latent trajectory generator over a point-mass world.
class KnotGenerator {
 public:
  using output_type = Trajectory;

  explicit KnotGenerator(PointMassWorld world) : world_(std::move(world)) { world_.validate_dynamics(); }

  [[nodiscard]] Eigen::Index latent_dim() const noexcept { return world_.latent_dim(); }
  [[nodiscard]] Trajectory decode(const Vector& z) const { return decode_knots(z, world_); }
  [[nodiscard]] Matrix action_chunk(const Trajectory& traj, int chunk_len) const {
    return extract_action_chunk(traj, chunk_len);
  }
  [[nodiscard]] const PointMassWorld& world() const noexcept { return world_; }

 private:
  PointMassWorld world_;
};

}  // namespace wav
