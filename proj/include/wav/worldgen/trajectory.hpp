#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"

namespace wav {

/// Bounded box S^H x A^H. Coordinates are laid out step-major:
/// [s_0, a_0, s_1, a_1, ...] with dim_state + dim_action entries per step.
struct TrajectorySpace {
  int horizon = 1;
  int dim_state = 1;
  int dim_action = 1;
  Vector lower;  // length ambient_dim()
  Vector upper;

  static TrajectorySpace uniform_box(int horizon, int dim_state, int dim_action, double lo, double hi) {
    TrajectorySpace s{horizon, dim_state, dim_action, {}, {}};
    s.lower = Vector::Constant(s.ambient_dim(), lo);
    s.upper = Vector::Constant(s.ambient_dim(), hi);
    s.validate();
    return s;
  }

  [[nodiscard]] Eigen::Index ambient_dim() const noexcept {
    return static_cast<Eigen::Index>(horizon) * (dim_state + dim_action);
  }

  [[nodiscard]] double volume() const { return (upper - lower).prod(); }

  void validate() const {
    require(horizon >= 1 && dim_state >= 1 && dim_action >= 1, "TrajectorySpace: sizes must be positive");
    require(lower.size() == ambient_dim() && upper.size() == ambient_dim(),
            "TrajectorySpace: bounds must have length H*(dim_state+dim_action)");
    require(((upper - lower).array() > 0.0).all() && lower.allFinite() && upper.allFinite(),
            "TrajectorySpace: every bound interval must be finite with lower < upper");
  }

  [[nodiscard]] bool contains(const Vector& x) const {
    return x.size() == ambient_dim() && (x.array() >= lower.array()).all() &&
           (x.array() <= upper.array()).all();
  }
};

/// Grayscale raster, values in [0,1].
struct Frame {
  Matrix pixels;

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.pixels.rows() == b.pixels.rows() && a.pixels.cols() == b.pixels.cols() &&
           a.pixels == b.pixels;
  }
};

/// H-step trajectory. Row t of `states` is the state after applying row t
/// of `actions`; `initial_state` is the state before the first action.
struct Trajectory {
  Vector initial_state;
  Matrix states;   // H x dim_state
  Matrix actions;  // H x dim_action
  std::optional<std::vector<Frame>> frames;

  [[nodiscard]] int horizon() const noexcept { return static_cast<int>(states.rows()); }

  /// State at step t, with t = -1 meaning the initial state.
  [[nodiscard]] Vector state_at(int t) const {
    return t < 0 ? initial_state : Vector(states.row(t).transpose());
  }
};

inline Matrix extract_action_chunk(const Trajectory& traj, int chunk_len) {
  require(chunk_len >= 1, "extract_action_chunk: chunk_len must be positive");
  require(chunk_len <= traj.actions.rows(), "extract_action_chunk: chunk_len exceeds horizon");
  return traj.actions.topRows(chunk_len);
}

}  // namespace wav
