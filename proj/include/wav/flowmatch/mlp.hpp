#pragma once

// Two-hidden-layer tanh MLP velocity field v(t, c, x). Input is the
// concatenation [t, c, x]; output has the dimension of x. Parameters live
// in one flat vector laid out as W1, b1, W2, b2, W3, b3 (column-major).

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"
#include "wav/core/rng.hpp"

namespace wav {

struct MlpShape {
  int dim_cond = 0;
  int dim_x = 1;
  int hidden = 64;

  [[nodiscard]] int input() const noexcept { return 1 + dim_cond + dim_x; }
  [[nodiscard]] Eigen::Index param_count() const noexcept {
    const Eigen::Index in = input(), h = hidden, out = dim_x;
    return h * in + h + h * h + h + out * h + out;
  }
  void validate() const {
    require(dim_cond >= 0, "mlp: dim_cond must be >= 0");
    require(dim_x >= 1, "mlp: dim_x must be >= 1");
    require(hidden >= 1, "mlp: hidden width must be >= 1");
  }
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

class MlpField {
 public:
  using MatMap = Eigen::Map<Matrix>;
  using ConstMatMap = Eigen::Map<const Matrix>;

  MlpField() = default;
  explicit MlpField(MlpShape shape) : shape_(shape) {
    shape_.validate();
    params_ = Vector::Zero(shape_.param_count());
  }
  MlpField(MlpShape shape, Vector params) : shape_(shape), params_(std::move(params)) {
    shape_.validate();
    require(params_.size() == shape_.param_count(), "mlp: parameter count does not match layer sizes");
  }

  /// Scaled normal init: weights ~ N(0, 1/fan_in), biases zero.
  static MlpField initialised(MlpShape shape, const SeededStream& stream) {
    MlpField f(shape);
    auto engine = stream.engine();
    const int h = shape.hidden;
    auto fill = [&](Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
      for (Eigen::Index i = 0; i < rows * cols; ++i) f.params_[offset + i] = scale * engine.normal();
    };
    const auto o = f.offsets();
    fill(o.w1, h, shape.input());
    fill(o.w2, h, h);
    fill(o.w3, shape.dim_x, h);
    return f;
  }

  [[nodiscard]] const MlpShape& shape() const noexcept { return shape_; }
  [[nodiscard]] int dim_x() const noexcept { return shape_.dim_x; }
  [[nodiscard]] int dim_cond() const noexcept { return shape_.dim_cond; }
  [[nodiscard]] const Vector& params() const noexcept { return params_; }
  [[nodiscard]] Vector& params() noexcept { return params_; }

  /// Builds the input column [t, cond, x].
  [[nodiscard]] Vector input(double t, const Vector& cond, const Vector& x) const {
    require(cond.size() == shape_.dim_cond, "mlp: condition has dimension " + std::to_string(cond.size()) +
                                                ", field expects " + std::to_string(shape_.dim_cond));
    require(x.size() == shape_.dim_x, "mlp: state has dimension " + std::to_string(x.size()) + ", field expects " +
                                          std::to_string(shape_.dim_x));
    Vector in(shape_.input());
    in[0] = t;
    in.segment(1, shape_.dim_cond) = cond;
    in.tail(shape_.dim_x) = x;
    return in;
  }

  [[nodiscard]] Vector operator()(double t, const Vector& cond, const Vector& x) const {
    return forward(input(t, cond, x));
  }

  /// Batched forward pass on inputs stored column-wise.
  [[nodiscard]] Matrix forward(const Matrix& inputs) const {
    Matrix h1, h2;
    return forward(inputs, h1, h2);
  }

  /// Forward pass keeping hidden activations, and the matching backward
  /// pass that adds d(loss)/d(params) to `grad` given d(loss)/d(outputs).
  Matrix forward(const Matrix& inputs, Matrix& h1, Matrix& h2) const {
    require(inputs.rows() == shape_.input(), "mlp: input rows do not match the field");
    const auto L = layers();
    h1 = ((L.w1 * inputs).colwise() + L.b1).array().tanh().matrix();
    h2 = ((L.w2 * h1).colwise() + L.b2).array().tanh().matrix();
    return (L.w3 * h2).colwise() + L.b3;
  }

  void backward(const Matrix& inputs, const Matrix& h1, const Matrix& h2, const Matrix& d_out, Vector& grad) const {
    require(grad.size() == params_.size(), "mlp: gradient buffer has the wrong size");
    const auto L = layers();
    const auto o = offsets();
    const int h = shape_.hidden, in = shape_.input(), out = shape_.dim_x;
    MatMap(grad.data() + o.w3, out, h).noalias() += d_out * h2.transpose();
    grad.segment(o.b3, out) += d_out.rowwise().sum();
    const Matrix dz2 = ((L.w3.transpose() * d_out).array() * (1.0 - h2.array().square())).matrix();
    MatMap(grad.data() + o.w2, h, h).noalias() += dz2 * h1.transpose();
    grad.segment(o.b2, h) += dz2.rowwise().sum();
    const Matrix dz1 = ((L.w2.transpose() * dz2).array() * (1.0 - h1.array().square())).matrix();
    MatMap(grad.data() + o.w1, h, in).noalias() += dz1 * inputs.transpose();
    grad.segment(o.b1, h) += dz1.rowwise().sum();
  }

  friend bool operator==(const MlpField& a, const MlpField& b) {
    return a.shape_ == b.shape_ && a.params_ == b.params_;
  }

 private:
  struct Offsets {
    Eigen::Index w1, b1, w2, b2, w3, b3;
  };
  struct Layers {
    ConstMatMap w1;
    Eigen::Map<const Vector> b1;
    ConstMatMap w2;
    Eigen::Map<const Vector> b2;
    ConstMatMap w3;
    Eigen::Map<const Vector> b3;
  };

  [[nodiscard]] Offsets offsets() const noexcept {
    const Eigen::Index in = shape_.input(), h = shape_.hidden, out = shape_.dim_x;
    Offsets o{};
    o.w1 = 0;
    o.b1 = o.w1 + h * in;
    o.w2 = o.b1 + h;
    o.b2 = o.w2 + h * h;
    o.w3 = o.b2 + h;
    o.b3 = o.w3 + out * h;
    return o;
  }

  [[nodiscard]] Layers layers() const {
    const auto o = offsets();
    const Eigen::Index in = shape_.input(), h = shape_.hidden, out = shape_.dim_x;
    const double* p = params_.data();
    return {ConstMatMap(p + o.w1, h, in), Eigen::Map<const Vector>(p + o.b1, h),
            ConstMatMap(p + o.w2, h, h),  Eigen::Map<const Vector>(p + o.b2, h),
            ConstMatMap(p + o.w3, out, h), Eigen::Map<const Vector>(p + o.b3, out)};
  }

  MlpShape shape_{};
  Vector params_;
};

}  // namespace wav
