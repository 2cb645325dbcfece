#pragma once

// Three conditional fields trained in order on point-mass rollouts:
//   video : start state                      -> trajectory summary
//   value : (start, summary)                 -> segment value vector
//   action: (start, summary, values)         -> flattened action chunk
// Each stage sees ground-truth conditions and leaves earlier fields untouched.

#include <array>
#include <string>
#include <vector>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"
#include "wav/core/rng.hpp"
#include "wav/flowmatch/flow.hpp"
#include "wav/flowmatch/mlp.hpp"
#include "wav/valuation/value.hpp"
#include "wav/worldgen/point_mass.hpp"

namespace wav {

/// Positions at `points` evenly spaced steps, the last one at H-1.
inline Vector trajectory_summary(const Trajectory& traj, int points) {
  const int H = traj.horizon();
  require(points >= 1 && points <= H, "trajectory_summary: need 1 <= points <= horizon");
  Vector out(2 * points);
  for (int i = 0; i < points; ++i) {
    const int t = static_cast<int>((static_cast<long long>(i + 1) * H) / points) - 1;
    out.segment(2 * i, 2) = traj.states.row(t).head(2).transpose();
  }
  return out;
}

struct StagedFlowConfig {
  TrainConfig train;
  int hidden = 64;
  int summary_points = 8;
  int euler_steps = 20;
  int dataset = 2048;
  int chunk_len = 6;

  void validate() const {
    train.validate();
    require(hidden >= 1, "flow.hidden must be >= 1");
    require(summary_points >= 1, "flow.summary_points must be >= 1");
    require(euler_steps >= 1, "flow.euler_steps must be >= 1");
    require(dataset >= 1, "flow.dataset must be >= 1");
    require(chunk_len >= 1, "flow.chunk_len must be >= 1");
  }
};

struct FlowSample {
  Vector start;
  Vector summary;
  Vector values;
  Vector actions;  // chunk rows concatenated
};

/// Rollouts from prior latents, with start positions drawn uniformly in
/// the workspace outside obstacles (stream label "sample=i").
inline std::vector<FlowSample> make_flow_dataset(const PointMassWorld& world, const AnalyticValueEvaluator& evaluator,
                                                 const StagedFlowConfig& cfg, const SeededStream& stream) {
  cfg.validate();
  world.validate();
  require(cfg.chunk_len <= world.horizon, "flow.chunk_len must not exceed world.horizon");
  std::vector<FlowSample> out;
  out.reserve(static_cast<std::size_t>(cfg.dataset));
  for (int i = 0; i < cfg.dataset; ++i) {
    auto engine = stream.derive(indexed("sample", i)).engine();
    PointMassWorld w = world;
    Vec2 p;
    do {
      p = world.workspace_lo + (world.workspace_hi - world.workspace_lo).cwiseProduct(
                                   Vec2(engine.uniform(), engine.uniform()));
    } while (world.in_obstacle(p));
    w.start.head(2) = p;
    w.start.tail(2).setZero();
    Vector z(w.latent_dim());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = engine.normal();
    const Trajectory traj = decode_knots(z, w);
    AnalyticValueEvaluator eval = evaluator;
    eval.world = w;
    const Matrix chunk = extract_action_chunk(traj, cfg.chunk_len);
    const Matrix chunk_rows = chunk.transpose();
    out.push_back({w.start, trajectory_summary(traj, cfg.summary_points), eval.features(traj),
                   Eigen::Map<const Vector>(chunk_rows.data(), chunk_rows.size())});
  }
  return out;
}

enum class FlowStage { kVideo = 0, kValue = 1, kAction = 2 };

inline const char* stage_name(FlowStage s) {
  switch (s) {
    case FlowStage::kVideo: return "video";
    case FlowStage::kValue: return "value";
    case FlowStage::kAction: return "action";
  }
  return "?";
}

/// (condition, target) of one sample for a stage.
inline std::pair<Vector, Vector> stage_pair(const FlowSample& s, FlowStage stage) {
  auto cat = [](std::initializer_list<const Vector*> parts) {
    Eigen::Index n = 0;
    for (const auto* p : parts) n += p->size();
    Vector v(n);
    Eigen::Index at = 0;
    for (const auto* p : parts) {
      v.segment(at, p->size()) = *p;
      at += p->size();
    }
    return v;
  };
  switch (stage) {
    case FlowStage::kVideo: return {s.start, s.summary};
    case FlowStage::kValue: return {cat({&s.start, &s.summary}), s.values};
    case FlowStage::kAction: return {cat({&s.start, &s.summary, &s.values}), s.actions};
  }
  throw ContractError("stage_pair: unknown stage");
}

struct StagedFlow {
  std::array<MlpField, 3> fields;
  std::array<std::vector<double>, 3> losses;

  [[nodiscard]] const MlpField& field(FlowStage s) const { return fields[static_cast<std::size_t>(s)]; }
};

inline MlpField train_stage(const std::vector<FlowSample>& data, FlowStage stage, const StagedFlowConfig& cfg,
                            const SeededStream& stream, std::vector<double>& losses) {
  require(!data.empty(), "train_stage: empty dataset");
  const auto [c0, x0] = stage_pair(data.front(), stage);
  const MlpShape shape{static_cast<int>(c0.size()), static_cast<int>(x0.size()), cfg.hidden};
  MlpField field = MlpField::initialised(shape, stream.derive("init"));
  const BatchSampler sampler = [&](const SeededStream& s, int batch) {
    auto engine = s.engine();
    Matrix base(shape.dim_x, batch), target(shape.dim_x, batch), cond(shape.dim_cond, batch);
    for (int b = 0; b < batch; ++b) {
      const auto idx = static_cast<std::size_t>(engine() % data.size());
      auto [c, x] = stage_pair(data[idx], stage);
      cond.col(b) = c;
      target.col(b) = x;
      for (int j = 0; j < shape.dim_x; ++j) base(j, b) = engine.normal();
    }
    return FlowBatch::with_uniform_times(std::move(base), std::move(target), std::move(cond), s.derive("t"));
  };
  losses = fit_field(field, sampler, cfg.train, stream.derive("fit"));
  return field;
}

/// Video, then value, then action; stage s uses stream label "stage=<name>".
inline StagedFlow train_staged(const std::vector<FlowSample>& data, const StagedFlowConfig& cfg,
                               const SeededStream& stream) {
  cfg.validate();
  StagedFlow out;
  for (FlowStage s : {FlowStage::kVideo, FlowStage::kValue, FlowStage::kAction}) {
    const auto i = static_cast<std::size_t>(s);
    out.fields[i] = train_stage(data, s, cfg, stream.derive(std::string("stage=") + stage_name(s)), out.losses[i]);
  }
  return out;
}

/// Value evaluator backed by a trained value field: the value latent is the
/// flow's base noise, pushed through Euler integration.
struct FlowValueEvaluator {
  MlpField value_field;
  PointMassWorld world;
  int summary_points = 8;
  int euler_steps = 20;

  using features_type = Vector;

  [[nodiscard]] Eigen::Index latent_dim() const noexcept { return value_field.dim_x(); }

  [[nodiscard]] Vector features(const Trajectory& traj) const {
    Vector c(world.start.size() + 2 * summary_points);
    c << world.start, trajectory_summary(traj, summary_points);
    return c;
  }

  [[nodiscard]] ValueSample evaluate(const Vector& cond, const Vector& z_val) const {
    require(z_val.size() >= value_field.dim_x(), "flow value: value latent shorter than the value field");
    return {euler_sample(value_field, Vector(z_val.head(value_field.dim_x())), cond, euler_steps)};
  }
};

}  // namespace wav
