#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "wav/core/gaussian.hpp"
#include "wav/core/parallel.hpp"
#include "wav/core/rng.hpp"

using namespace wav;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Stream, SamePathSameDraws) {
  SeededStream a(7), b(7);
  auto ea = a.derive("x").engine();
  auto eb = b.derive("x").engine();
  for (int i = 0; i < 100; ++i) EXPECT_EQ(ea(), eb());
}

TEST(Stream, SiblingsDiffer) {
  SeededStream s(7);
  auto ea = s.derive("a").engine();
  auto eb = s.derive("b").engine();
  int same = 0;
  for (int i = 0; i < 100; ++i) same += ea() == eb();
  EXPECT_EQ(same, 0);
}

TEST(Stream, PathComposition) {
  SeededStream s(3);
  const auto chained = s.derive("iter=1").derive("sample=3");
  const SeededStream direct(3, {"iter=1", "sample=3"});
  EXPECT_EQ(chained, direct);
  EXPECT_EQ(chained.path_string(), "iter=1/sample=3");
}

TEST(Stream, EmptyLabelRejected) { EXPECT_THROW(SeededStream(1).derive(""), ContractError); }

TEST(Stream, Indexed) { EXPECT_EQ(indexed("sample", 12), "sample=12"); }

TEST(Stream, MasterSeedMatters) {
  EXPECT_NE(SeededStream(1).derive("a").key(), SeededStream(2).derive("a").key());
}

TEST(Sample, ShapeAndDeterminism) {
  const auto g = DiagonalGaussian::standard(2);
  SeededStream s(5);
  const auto a = gaussian_sample(g, s, 3);
  const auto b = gaussian_sample(g, s, 3);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].size(), 2);
    EXPECT_EQ(a[i], b[i]);
  }
}

TEST(Sample, ShiftByMean) {
  SeededStream s(9);
  const auto base = gaussian_sample(DiagonalGaussian::make(vec({0, 0}), vec({1, 1})), s, 4);
  const auto shifted = gaussian_sample(DiagonalGaussian::make(vec({5, 5}), vec({1, 1})), s, 4);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(shifted[i][0] - base[i][0], 5.0, 1e-12);
    EXPECT_NEAR(shifted[i][1] - base[i][1], 5.0, 1e-12);
  }
}

TEST(Sample, MomentsOfLargeDraw) {
  const auto xs = gaussian_sample(DiagonalGaussian::standard(3), SeededStream(2024), 100000);
  for (int d = 0; d < 3; ++d) {
    double m = 0, v = 0;
    for (const auto& x : xs) m += x[d];
    m /= static_cast<double>(xs.size());
    for (const auto& x : xs) v += (x[d] - m) * (x[d] - m);
    v /= static_cast<double>(xs.size());
    EXPECT_NEAR(m, 0.0, 0.02);
    EXPECT_NEAR(std::sqrt(v), 1.0, 0.02);
  }
}

TEST(Sample, InvalidDistribution) {
  DiagonalGaussian g{vec({0.0}), vec({0.0})};
  EXPECT_THROW(gaussian_sample(g, SeededStream(1), 1), ContractError);
  EXPECT_THROW(gaussian_sample(DiagonalGaussian::standard(1), SeededStream(1), 0), ContractError);
  EXPECT_THROW(DiagonalGaussian::make(vec({0.0}), vec({-1.0})), ContractError);
}

TEST(Fit, TwoPoints) {
  const auto g = gaussian_fit(std::vector<Vector>{vec({1, 1}), vec({3, 3})});
  EXPECT_NEAR(g.mean[0], 2.0, 1e-12);
  EXPECT_NEAR(g.mean[1], 2.0, 1e-12);
  EXPECT_NEAR(g.std[0], 1.0, 1e-12);
  EXPECT_NEAR(g.std[1], 1.0, 1e-12);
}

TEST(Fit, SingleSample) {
  const auto g = gaussian_fit(std::vector<Vector>{vec({4, -1})});
  EXPECT_EQ(g.mean, vec({4, -1}));
  EXPECT_EQ(g.std, vec({0, 0}));
}

TEST(Fit, ConstantSamples) {
  const auto g = gaussian_fit(std::vector<Vector>(5, vec({0.3, -2.5})));
  EXPECT_NEAR(g.mean[0], 0.3, 1e-15);
  EXPECT_NEAR(g.mean[1], -2.5, 1e-15);
  EXPECT_EQ(g.std, vec({0, 0}));
}

TEST(Fit, Errors) {
  EXPECT_THROW(gaussian_fit(std::vector<Vector>{}), ContractError);
  EXPECT_THROW(gaussian_fit(std::vector<Vector>{vec({1, 2}), vec({1})}), ContractError);
}

TEST(Fit, PermutationInvariant) {
  auto xs = gaussian_sample(DiagonalGaussian::standard(4), SeededStream(11), 7);
  const auto a = gaussian_fit(xs);
  std::reverse(xs.begin(), xs.end());
  std::rotate(xs.begin(), xs.begin() + 3, xs.end());
  const auto b = gaussian_fit(xs);
  EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((a.std - b.std).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Fit, PopulationStdOracle) {
  const auto xs = gaussian_sample(DiagonalGaussian::standard(1), SeededStream(12), 9);
  long double s = 0, s2 = 0;
  for (const auto& x : xs) s += x[0];
  const long double m = s / 9;
  for (const auto& x : xs) s2 += (x[0] - m) * (x[0] - m);
  const auto g = gaussian_fit(xs);
  EXPECT_NEAR(g.mean[0], static_cast<double>(m), 1e-14);
  EXPECT_NEAR(g.std[0], static_cast<double>(std::sqrt(s2 / 9)), 1e-14);
}

TEST(Blend, Identity) {
  const auto cur = DiagonalGaussian::make(vec({1, 2}), vec({0.5, 0.25}));
  const auto prev = DiagonalGaussian::make(vec({-3, 7}), vec({2, 3}));
  EXPECT_EQ(gaussian_blend(cur, prev, 1.0, 1.0), cur);
  EXPECT_EQ(gaussian_blend(cur, prev, 0.0, 0.0), prev);
}

TEST(Blend, Midpoint) {
  const auto cur = DiagonalGaussian::make(vec({2}), vec({1}));
  const auto prev = DiagonalGaussian::make(vec({0}), vec({3}));
  const auto g = gaussian_blend(cur, prev, 0.5, 0.25);
  EXPECT_DOUBLE_EQ(g.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(g.std[0], 0.25 * 1 + 0.75 * 3);
}

TEST(Blend, Errors) {
  const auto a = DiagonalGaussian::standard(2);
  const auto b = DiagonalGaussian::standard(3);
  EXPECT_THROW(gaussian_blend(a, a, 1.5, 0.5), ContractError);
  EXPECT_THROW(gaussian_blend(a, a, 0.5, -0.1), ContractError);
  EXPECT_THROW(gaussian_blend(a, b, 0.5, 0.5), ContractError);
}

TEST(Blend, FitThenIdentityIsIdempotent) {
  const auto xs = gaussian_sample(DiagonalGaussian::standard(3), SeededStream(4), 10);
  const auto g = gaussian_fit(xs);
  EXPECT_EQ(gaussian_blend(g, DiagonalGaussian::standard(3), 1.0, 1.0), g);
}

TEST(Floor, ClampsSmallStd) {
  const auto g = floor_std(DiagonalGaussian{vec({0, 0, 0}), vec({0, 0.001, 2})}, 0.01);
  EXPECT_EQ(g.std, vec({0.01, 0.01, 2}));
}

TEST(Parallel, VisitsEveryIndexOnce) {
  for (std::size_t workers : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(50, 4,
                            [](std::size_t i) {
                              if (i == 17) throw std::runtime_error("boom");
                            }),
               std::runtime_error);
}
