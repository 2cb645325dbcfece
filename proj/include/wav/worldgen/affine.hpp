#pragma once

// Affine feasible patch M = {offset + basis * (extent .* u) : u in [0,1]^d}
// inside a trajectory space, and a latent generator over it that emits an
// off-manifold point with planted probability delta.

#include <cmath>
#include <utility>

#include <Eigen/Core>
#include <Eigen/QR>

#include "wav/core/error.hpp"
#include "wav/core/gaussian.hpp"
#include "wav/core/rng.hpp"
#include "wav/worldgen/trajectory.hpp"

namespace wav {

struct AffineManifoldSpec {
  Matrix basis;   // D x d, orthonormal columns
  Vector offset;  // D
  Vector extent;  // d, side lengths of the patch along each basis column
  double epsilon = 0.05;
  double delta = 0.0;
  double off_scale = 2.0;

  [[nodiscard]] Eigen::Index ambient_dim() const noexcept { return basis.rows(); }
  [[nodiscard]] Eigen::Index intrinsic_dim() const noexcept { return basis.cols(); }

  void validate() const {
    require(basis.cols() >= 1, "AffineManifoldSpec: intrinsic dimension must be >= 1");
    require(basis.cols() < basis.rows(), "AffineManifoldSpec: intrinsic dimension must be below ambient");
    require(offset.size() == basis.rows(), "AffineManifoldSpec: offset length must equal ambient dimension");
    require(extent.size() == basis.cols() && (extent.array() > 0.0).all(),
            "AffineManifoldSpec: extent must be positive with one entry per basis column");
    const Matrix gram = basis.transpose() * basis;
    require((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-10,
            "AffineManifoldSpec: basis columns must be orthonormal");
    require(epsilon > 0.0 && std::isfinite(epsilon), "AffineManifoldSpec: epsilon must be positive");
    require(delta >= 0.0 && delta <= 1.0, "AffineManifoldSpec: delta must lie in [0,1]");
    require(off_scale > 1.0, "AffineManifoldSpec: off_scale must exceed 1 so perturbed points are infeasible");
  }

  /// Point at unit-box parameters u (not clamped).
  [[nodiscard]] Vector point(const Vector& u) const { return offset + basis * extent.cwiseProduct(u); }
};

/// Orthonormalises the columns of `raw_basis` (thin QR) and builds a spec.
inline AffineManifoldSpec make_affine_spec(const Matrix& raw_basis, Vector offset, Vector extent, double epsilon,
                                           double delta = 0.0, double off_scale = 2.0) {
  require(raw_basis.cols() >= 1 && raw_basis.cols() < raw_basis.rows(), "make_affine_spec: need 1 <= d < D");
  Eigen::HouseholderQR<Matrix> qr(raw_basis);
  Matrix q = qr.householderQ() * Matrix::Identity(raw_basis.rows(), raw_basis.cols());
  AffineManifoldSpec spec{std::move(q), std::move(offset), std::move(extent), epsilon, delta, off_scale};
  spec.validate();
  return spec;
}

/// Segment along the main diagonal of a cube [lo, hi]^D, centred, of the
/// greatest length whose epsilon-tube stays inside the cube:
/// length = (hi - lo - 2*epsilon) * sqrt(D).
inline AffineManifoldSpec diagonal_segment_spec(const TrajectorySpace& space, double epsilon, double delta = 0.0,
                                                double off_scale = 2.0) {
  space.validate();
  const Eigen::Index dim = space.ambient_dim();
  const double lo = space.lower.maxCoeff();
  const double hi = space.upper.minCoeff();
  require(space.lower.minCoeff() == lo && space.upper.maxCoeff() == hi,
          "diagonal_segment_spec: space must be a cube");
  const double side = hi - lo;
  require(side > 2.0 * epsilon, "diagonal_segment_spec: box too small for the epsilon tube");
  const double root_d = std::sqrt(static_cast<double>(dim));
  const double length = (side - 2.0 * epsilon) * root_d;
  Matrix basis = Matrix::Constant(dim, 1, 1.0 / root_d);
  Vector offset = Vector::Constant(dim, 0.5 * (lo + hi)) - 0.5 * length * basis.col(0);
  AffineManifoldSpec spec{std::move(basis), std::move(offset), Vector::Constant(1, length), epsilon, delta,
                          off_scale};
  spec.validate();
  return spec;
}

/// Euclidean distance from x to the patch: project onto the subspace,
/// clamp the coordinates to the patch, return the residual norm. Exact
/// when the projection lands inside the patch, an upper bound otherwise
/// (exact for d = 1).
inline double manifold_distance(const Vector& x, const AffineManifoldSpec& spec) {
  require(x.size() == spec.ambient_dim(), "manifold_distance: dimension mismatch");
  const Vector rel = x - spec.offset;
  const Vector coords = (spec.basis.transpose() * rel).cwiseMax(0.0).cwiseMin(spec.extent);
  return (rel - spec.basis * coords).norm();
}

inline bool is_feasible(const Vector& x, const AffineManifoldSpec& spec) {
  return manifold_distance(x, spec) <= spec.epsilon;
}

struct AffineDecode {
  Vector point;
  bool on_manifold = true;
};

inline double logistic(double z) noexcept { return 1.0 / (1.0 + std::exp(-z)); }

/// Logistic squash into the unit parameter box, map onto the patch; with
/// probability delta (drawn from `stream`) push the point off_scale*epsilon
/// away along a random direction orthogonal to the patch.
inline AffineDecode decode_affine(const Vector& z, const AffineManifoldSpec& spec, const SeededStream& stream) {
  require(z.size() == spec.intrinsic_dim(), "decode_affine: latent dimension must equal intrinsic dimension");
  const Vector u = z.unaryExpr([](double v) { return logistic(v); });
  AffineDecode out{spec.point(u), true};
  if (spec.delta <= 0.0) return out;
  auto engine = stream.engine();
  if (!engine.bernoulli(spec.delta)) return out;
  Vector dir(spec.ambient_dim());
  double norm = 0.0;
  while (norm < 1e-12) {
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = engine.normal();
    dir -= spec.basis * (spec.basis.transpose() * dir);
    norm = dir.norm();
  }
  out.point += (spec.off_scale * spec.epsilon / norm) * dir;
  out.on_manifold = false;
  return out;
}

}  // namespace wav
