#pragma once

// Flow matching on the linear path x_t = (1-t) x0 + t x1 with target
// velocity x1 - x0: loss, exact gradients for MlpField, Adam, Euler
// sampling and the closed-form Gaussian-to-Gaussian velocity.

#include <cmath>
#include <concepts>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"
#include "wav/core/rng.hpp"
#include "wav/flowmatch/mlp.hpp"

namespace wav {

template <class F>
concept VelocityField = requires(const F& f, double t, const Vector& c, const Vector& x) {
  { f(t, c, x) } -> std::convertible_to<Vector>;
};

struct Interpolant {
  Vector x_t;
  Vector target;
};

inline Interpolant interpolate(const Vector& x0, const Vector& x1, double t) {
  require(x0.size() == x1.size(), "interpolate: x0 and x1 differ in dimension");
  require(t >= 0.0 && t <= 1.0, "interpolate: t must lie in [0,1]");
  return {(1.0 - t) * x0 + t * x1, x1 - x0};
}

/// Column-wise training pairs with their conditions and path times.
struct FlowBatch {
  Matrix x0;    // dim_x x B
  Matrix x1;    // dim_x x B
  Matrix cond;  // dim_cond x B (zero rows when unconditioned)
  Vector t;     // B

  [[nodiscard]] Eigen::Index size() const noexcept { return x0.cols(); }

  void validate() const {
    require(x0.cols() >= 1, "flow batch: batch is empty");
    require(x1.rows() == x0.rows() && x1.cols() == x0.cols(), "flow batch: x0 and x1 shapes differ");
    require(cond.cols() == x0.cols(), "flow batch: condition column count differs from batch size");
    require(t.size() == x0.cols(), "flow batch: one time per pair required");
    require((t.array() >= 0.0).all() && (t.array() <= 1.0).all(), "flow batch: times must lie in [0,1]");
  }

  /// Pairs with times drawn uniformly on [0,1] from `stream`.
  static FlowBatch with_uniform_times(Matrix x0, Matrix x1, Matrix cond, const SeededStream& stream) {
    auto engine = stream.engine();
    Vector t(x0.cols());
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = engine.uniform();
    FlowBatch b{std::move(x0), std::move(x1), std::move(cond), std::move(t)};
    b.validate();
    return b;
  }
};

/// Mean over the batch of ||v(t, c, x_t) - (x1 - x0)||^2.
template <VelocityField F>
double fm_loss(const F& field, const FlowBatch& batch) {
  batch.validate();
  double total = 0.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto [x_t, target] = interpolate(batch.x0.col(i), batch.x1.col(i), batch.t[i]);
    total += (field(batch.t[i], Vector(batch.cond.col(i)), x_t) - target).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

namespace detail {

inline Matrix batch_inputs(const MlpField& field, const FlowBatch& batch, Matrix& targets) {
  const auto& s = field.shape();
  require(batch.x0.rows() == s.dim_x, "flow: batch state dimension differs from the field");
  require(batch.cond.rows() == s.dim_cond, "flow: batch condition dimension differs from the field");
  const Eigen::Index B = batch.size();
  Matrix in(s.input(), B);
  in.row(0) = batch.t.transpose();
  in.middleRows(1, s.dim_cond) = batch.cond;
  in.bottomRows(s.dim_x) = batch.x0 + (batch.x1 - batch.x0) * batch.t.asDiagonal();
  targets = batch.x1 - batch.x0;
  return in;
}

}  // namespace detail

struct LossGradient {
  double loss = 0.0;
  Vector grad;
};

inline LossGradient fm_loss_and_gradient(const MlpField& field, const FlowBatch& batch) {
  batch.validate();
  Matrix targets;
  const Matrix in = detail::batch_inputs(field, batch, targets);
  Matrix h1, h2;
  const Matrix residual = field.forward(in, h1, h2) - targets;
  const double B = static_cast<double>(batch.size());
  LossGradient out{residual.squaredNorm() / B, Vector::Zero(field.params().size())};
  field.backward(in, h1, h2, (2.0 / B) * residual, out.grad);
  return out;
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  long long step = 0;
  Vector m;
  Vector v;
};

/// One Adam step on fm_loss; returns the loss before the update.
inline double train_step(MlpField& field, AdamState& adam, const FlowBatch& batch, double learning_rate) {
  require(learning_rate > 0.0, "train_step: learning_rate must be > 0");
  auto [loss, grad] = fm_loss_and_gradient(field, batch);
  if (!std::isfinite(loss) || !grad.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < grad.size() && std::isfinite(grad[bad]); ++bad) {
    }
    throw NumericError("train_step: non-finite gradient at parameter " + std::to_string(bad) + " (loss " +
                       std::to_string(loss) + ", step " + std::to_string(adam.step) + ")");
  }
  if (adam.m.size() != grad.size()) {
    adam.m = Vector::Zero(grad.size());
    adam.v = Vector::Zero(grad.size());
    adam.step = 0;
  }
  ++adam.step;
  adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad;
  adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  field.params().array() -=
      learning_rate * (adam.m.array() / c1) / ((adam.v.array() / c2).sqrt() + adam.eps);
  return loss;
}

struct TrainConfig {
  int steps = 2000;
  int batch = 256;
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.1;  // cosine decay to this fraction of learning_rate
  void validate() const {
    require(steps >= 1, "flow.steps must be >= 1");
    require(batch >= 1, "flow.batch must be >= 1");
    require(learning_rate > 0.0, "flow.learning_rate must be > 0");
    require(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0, "flow.final_lr_fraction must lie in (0,1]");
  }
};

/// Draws one batch of (x0, x1, cond) columns for a training step.
using BatchSampler = std::function<FlowBatch(const SeededStream&, int batch)>;

/// Runs cfg.steps Adam steps on fresh batches (stream label "step=i");
/// returns the per-step losses.
inline std::vector<double> fit_field(MlpField& field, const BatchSampler& sampler, const TrainConfig& cfg,
                                     const SeededStream& stream) {
  cfg.validate();
  AdamState adam;
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.steps));
  const double pi = std::acos(-1.0);
  for (int i = 0; i < cfg.steps; ++i) {
    const double progress = cfg.steps > 1 ? static_cast<double>(i) / (cfg.steps - 1) : 0.0;
    const double scale = cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(pi * progress));
    losses.push_back(train_step(field, adam, sampler(stream.derive(indexed("step", i)), cfg.batch),
                                cfg.learning_rate * scale));
  }
  return losses;
}

/// Explicit Euler from t = 0 to t = 1 in `steps` uniform steps.
template <VelocityField F>
Vector euler_sample(const F& field, const Vector& z0, const Vector& cond, int steps) {
  require(steps >= 1, "euler_sample: steps must be >= 1");
  const double h = 1.0 / steps;
  Vector x = z0;
  for (int i = 0; i < steps; ++i) {
    x += h * field(i * h, cond, x);
    if (!x.allFinite()) {
      throw NumericError("euler_sample: non-finite state at step " + std::to_string(i + 1) + " of " +
                         std::to_string(steps));
    }
  }
  return x;
}

struct Gaussian1 {
  double mean = 0.0;
  double std = 1.0;
};

/// E[x1 - x0 | x_t = x] for independent x0 ~ base, x1 ~ target.
inline double gaussian_oracle_velocity(double t, double x, Gaussian1 base, Gaussian1 target) {
  require(t >= 0.0 && t <= 1.0, "gaussian_oracle_velocity: t must lie in [0,1]");
  require(base.std > 0.0, "gaussian_oracle_velocity: base std must be > 0");
  require(target.std >= 0.0, "gaussian_oracle_velocity: target std must be >= 0");
  const double v0 = base.std * base.std;
  const double v1 = target.std * target.std;
  const double var = (1.0 - t) * (1.0 - t) * v0 + t * t * v1;
  if (!(var > 0.0)) throw ContractError("gaussian_oracle_velocity: x_t is degenerate at t = 1 with zero target std");
  const double cov = t * v1 - (1.0 - t) * v0;
  const double mean_t = (1.0 - t) * base.mean + t * target.mean;
  return (target.mean - base.mean) + cov / var * (x - mean_t);
}

}  // namespace wav
