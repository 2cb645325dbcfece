#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "wav/planner/planner.hpp"
#include "wav/worldgen/point_mass.hpp"

using namespace wav;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct IdentityGenerator {
  using output_type = Vector;
  Eigen::Index dim = 3;
  [[nodiscard]] Eigen::Index latent_dim() const { return dim; }
  [[nodiscard]] Vector decode(const Vector& z) const { return z; }
  [[nodiscard]] Matrix action_chunk(const Vector& out, int n) const { return out.head(n).transpose(); }
};

// Value vector (s - 1 + 0.1 z0, s + 1 + 0.1 z1, ...) around a score s(x).
struct QuadraticEvaluator {
  using features_type = Vector;
  Eigen::Index dim = 2;
  double scale = 1.0;
  double nan_below = -std::numeric_limits<double>::infinity();
  [[nodiscard]] Eigen::Index latent_dim() const { return dim; }
  [[nodiscard]] Vector features(const Vector& x) const { return x; }
  [[nodiscard]] ValueSample evaluate(const Vector& x, const Vector& z) const {
    if (x[0] < nan_below) return {Vector::Constant(dim, std::numeric_limits<double>::quiet_NaN())};
    const double s = 5.0 - (x.array() - 0.5).square().sum();
    Vector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = s + (i % 2 ? 1.0 : -1.0) + 0.1 * z[i];
    return {scale * v};
  }
};

// SNR of the pair is looked up from the decoded latent; values (s-1, s+1).
struct LookupEvaluator {
  using features_type = Vector;
  std::vector<std::pair<Vector, double>> table;
  [[nodiscard]] Eigen::Index latent_dim() const { return 2; }
  [[nodiscard]] Vector features(const Vector& x) const { return x; }
  [[nodiscard]] ValueSample evaluate(const Vector& x, const Vector&) const {
    for (const auto& [z, s] : table) {
      if (z == x) return {vec({s - 1.0, s + 1.0})};
    }
    return {vec({-101.0, -99.0})};
  }
};

// Decodes a sampled latent to a preset knot latent.
struct MappedKnotGenerator {
  using output_type = Trajectory;
  PointMassWorld world;
  std::vector<std::pair<Vector, Vector>> map;
  [[nodiscard]] Eigen::Index latent_dim() const { return world.latent_dim(); }
  [[nodiscard]] Trajectory decode(const Vector& z) const {
    for (const auto& [from, to] : map) {
      if (from == z) return decode_knots(to, world);
    }
    return decode_knots(z, world);
  }
  [[nodiscard]] Matrix action_chunk(const Trajectory& t, int n) const { return extract_action_chunk(t, n); }
};

PlannerConfig small_config() {
  PlannerConfig c;
  c.K = 4;
  c.M = 12;
  c.N = 4;
  c.K1 = 3;
  c.K2 = 8;
  c.d_vid = 3;
  c.d_val = 2;
  c.chunk_len = 2;
  c.eps = 0.0;
  return c;
}

std::vector<Vector> sampled_video_latents(const PlannerConfig& cfg, const SeededStream& s, int k = 1) {
  std::vector<Vector> out;
  const auto f = DiagonalGaussian::standard(cfg.d_vid);
  for (int m = 0; m < cfg.M; ++m) out.push_back(gaussian_sample_one(f, s.derive(indexed("iter", k)).derive(indexed("vid", m))));
  return out;
}

}  // namespace

TEST(SelectElites, Examples) {
  const std::vector<double> a{3, 1, 2}, b{1, 1}, c{0.5, -1, 7, 7};
  EXPECT_EQ(select_elites(a, 2), (std::vector<int>{0, 2}));
  EXPECT_EQ(select_elites(b, 1), (std::vector<int>{0}));
  EXPECT_EQ(select_elites(c, 4), (std::vector<int>{2, 3, 0, 1}));
  EXPECT_THROW(select_elites(a, 4), ContractError);
  EXPECT_THROW(select_elites(a, 0), ContractError);
}

TEST(Iterate, RiggedThreeSamples) {
  PlannerConfig cfg = small_config();
  cfg.M = 3;
  cfg.N = 1;
  cfg.K1 = 2;
  cfg.K2 = 1;
  cfg.d_vid = 2;
  cfg.alpha = cfg.beta = 1.0;
  cfg.sigma_decay = 1.0;
  const SeededStream s(21);
  const auto z = sampled_video_latents(cfg, s);
  const LookupEvaluator eval{{{z[0], 3.0}, {z[1], 1.0}, {z[2], 2.0}}};
  const auto [next, rec] = iterate(PlannerState::initial(cfg), IdentityGenerator{2}, eval, cfg, s);
  EXPECT_EQ(rec.phi, (std::vector<double>{3.0, 1.0, 2.0}));
  EXPECT_EQ(rec.elite_vid, (std::vector<int>{0, 2}));
  EXPECT_LT((next.f_vid.mean - 0.5 * (z[0] + z[2])).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(next.best_score, 3.0);
  EXPECT_EQ(next.best_latents->first, z[0]);
}

TEST(Iterate, RiggedGoalReachingSample) {
  auto world = PointMassWorld::default_world();
  world.obstacles.clear();
  PlannerConfig cfg;
  cfg.K = 1;
  cfg.M = 2;
  cfg.N = 2;
  cfg.K1 = 1;
  cfg.K2 = 1;
  cfg.alpha = 0.7;
  cfg.d_vid = world.latent_dim();
  const SeededStream s(22);
  const auto z = sampled_video_latents(cfg, s);
  const double knot = std::atanh(0.7 / 1.44 / world.accel_limit);
  const Vector a_knots = vec({knot, knot, knot, knot, -knot, -knot, -knot, -knot});
  const MappedKnotGenerator gen{world, {{z[0], Vector::Zero(8)}, {z[1], a_knots}}};
  const AnalyticValueEvaluator eval{world, ReturnSpec{0.99, world.horizon}, RewardWeights{}, 0.0, 8};

  const auto reach = decode_knots(a_knots, world);
  ASSERT_LT((Vec2(reach.states.row(world.horizon - 1).head(2).transpose()) - world.goal).norm(),
            0.05 * world.diagonal());
  const double snr_a = snr(eval.evaluate(eval.features(reach), Vector::Zero(8)), cfg.eps);
  const double snr_b =
      snr(eval.evaluate(eval.features(decode_knots(Vector::Zero(8), world)), Vector::Zero(8)), cfg.eps);
  ASSERT_GT(snr_a, snr_b);

  const auto [next, rec] = iterate(PlannerState::initial(cfg), gen, eval, cfg, s);
  EXPECT_EQ(rec.elite_vid, (std::vector<int>{1}));
  EXPECT_LT((next.f_vid.mean - 0.7 * z[1]).cwiseAbs().maxCoeff(), 1e-15);
  const auto result = plan(gen, eval, cfg, s);
  EXPECT_EQ(result.history.front().elite_vid, (std::vector<int>{1}));
}

TEST(Iterate, NoSelectionPressureIsPlainFit) {
  PlannerConfig cfg = small_config();
  cfg.K1 = cfg.M;
  cfg.K2 = cfg.M * cfg.N;
  cfg.alpha = cfg.beta = 1.0;
  cfg.sigma_decay = 1.0;
  PlannerState state = PlannerState::initial(cfg);
  for (int k = 0; k < 3; ++k) {
    auto [next, rec] = iterate(state, IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(23));
    const auto fit = gaussian_fit(rec.z_vid);
    EXPECT_EQ(next.f_vid.mean, fit.mean);
    EXPECT_EQ(next.f_vid.std, fit.std.cwiseMax(cfg.sigma_min));
    std::vector<Vector> all_val;
    for (const auto& row : rec.z_val) all_val.insert(all_val.end(), row.begin(), row.end());
    const auto fit_val = gaussian_fit(all_val);
    EXPECT_EQ(next.f_val.mean, fit_val.mean);
    EXPECT_EQ(next.f_val.std, fit_val.std.cwiseMax(cfg.sigma_min));
    state = next;
  }
}

TEST(Iterate, FrozenSmoothing) {
  PlannerConfig cfg = small_config();
  cfg.alpha = cfg.beta = 0.0;
  cfg.sigma_decay = 0.5;
  PlannerState state = PlannerState::initial(cfg);
  const PlannerState first = state;
  for (int k = 0; k < 5; ++k) state = iterate(state, IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(24)).first;
  EXPECT_EQ(state.f_vid, first.f_vid);
  EXPECT_EQ(state.f_val, first.f_val);
  EXPECT_EQ(state.k, 5);
}

TEST(Iterate, StdFloorAndRunningBest) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PlannerConfig cfg = small_config();
    cfg.K = 12;
    cfg.sigma_decay = 0.3;
    cfg.sigma_min = 0.05;
    const auto r = plan(IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(seed));
    ASSERT_EQ(r.history.size(), 12u);
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& rec : r.history) {
      EXPECT_GE(rec.f_vid.std.minCoeff(), cfg.sigma_min);
      EXPECT_GE(rec.f_val.std.minCoeff(), cfg.sigma_min);
      EXPECT_GE(rec.best_phi, prev);
      prev = rec.best_phi;
    }
    EXPECT_EQ(r.history.back().f_vid.std.minCoeff(), cfg.sigma_min);
  }
}

TEST(Plan, DeterministicAcrossWorkers) {
  const auto world = PointMassWorld::default_world();
  const KnotGenerator gen(world);
  const AnalyticValueEvaluator eval{world, ReturnSpec{0.99, world.horizon}, RewardWeights{}, 0.05, 8};
  PlannerConfig cfg;
  cfg.workers = 1;
  const auto a = plan(gen, eval, cfg, SeededStream(25));
  const auto b = plan(gen, eval, cfg, SeededStream(25));
  cfg.workers = 4;
  const auto c = plan(gen, eval, cfg, SeededStream(25));
  for (const auto* r : {&b, &c}) {
    EXPECT_EQ(r->action_chunk, a.action_chunk);
    EXPECT_EQ(r->z_vid, a.z_vid);
    EXPECT_EQ(r->z_val, a.z_val);
    EXPECT_EQ(r->chosen_score, a.chosen_score);
    ASSERT_EQ(r->history.size(), a.history.size());
    for (std::size_t k = 0; k < a.history.size(); ++k) {
      EXPECT_EQ(r->history[k].phi, a.history[k].phi);
      EXPECT_EQ(r->history[k].elite_vid, a.history[k].elite_vid);
      EXPECT_EQ(r->history[k].elite_val, a.history[k].elite_val);
      EXPECT_EQ(r->history[k].f_vid, a.history[k].f_vid);
      EXPECT_EQ(r->history[k].f_val, a.history[k].f_val);
    }
  }
}

TEST(Plan, ZeroIterationsDecodesPriorDraw) {
  const auto world = PointMassWorld::default_world();
  const KnotGenerator gen(world);
  const AnalyticValueEvaluator eval{world, ReturnSpec{0.99, world.horizon}, RewardWeights{}, 0.05, 8};
  PlannerConfig cfg;
  cfg.K = 0;
  const SeededStream s(26);
  const auto r = plan(gen, eval, cfg, s);
  EXPECT_TRUE(r.history.empty());
  EXPECT_FALSE(r.used_best_fallback);
  const Vector z = gaussian_sample_one(DiagonalGaussian::standard(8), s.derive("final").derive("vid"));
  EXPECT_EQ(r.z_vid, z);
  EXPECT_EQ(r.action_chunk, extract_action_chunk(decode_knots(z, world), cfg.chunk_len));
}

TEST(Plan, ChunkOfFullHorizon) {
  const auto world = PointMassWorld::default_world();
  const AnalyticValueEvaluator eval{world, ReturnSpec{0.99, world.horizon}, RewardWeights{}, 0.05, 8};
  PlannerConfig cfg;
  cfg.K = 2;
  cfg.chunk_len = world.horizon;
  const auto r = plan(KnotGenerator(world), eval, cfg, SeededStream(27));
  EXPECT_EQ(r.action_chunk, r.chosen.actions);
  EXPECT_EQ(r.action_chunk, decode_knots(r.z_vid, world).actions);
}

TEST(Plan, DimensionChecks) {
  PlannerConfig cfg = small_config();
  cfg.d_vid = 4;
  EXPECT_THROW(plan(IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(1)), ContractError);
  cfg = small_config();
  cfg.d_val = 1;
  EXPECT_THROW(plan(IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(1)), ContractError);
  cfg = small_config();
  cfg.K1 = cfg.M + 1;
  EXPECT_THROW(plan(IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(1)), ContractError);
}

TEST(FinalDecode, FallsBackToRunningBest) {
  PlannerConfig cfg = small_config();
  PlannerState state = PlannerState::initial(cfg);
  state.best_score = 1e9;
  state.best_latents = std::make_pair(vec({0.5, 0.5, 0.5}), vec({0.0, 0.0}));
  const auto r = final_decode(state, IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(28));
  EXPECT_TRUE(r.used_best_fallback);
  EXPECT_EQ(r.z_vid, vec({0.5, 0.5, 0.5}));
  EXPECT_EQ(r.action_chunk, vec({0.5, 0.5}).transpose());
  cfg.final_draw = FinalDraw::kSample;
  const auto s = final_decode(state, IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(28));
  EXPECT_FALSE(s.used_best_fallback);
  EXPECT_NE(s.z_vid, vec({0.5, 0.5, 0.5}));
}

TEST(FinalDecode, ConcentratedDistributionReturnsBest) {
  PlannerConfig cfg = small_config();
  cfg.final_draw = FinalDraw::kSample;
  PlannerState state = PlannerState::initial(cfg);
  const Vector best = vec({0.3, -0.2, 1.1});
  state.f_vid = DiagonalGaussian::make(best, Vector::Constant(3, cfg.sigma_min));
  const auto r = final_decode(state, IdentityGenerator{}, QuadraticEvaluator{}, cfg, SeededStream(29));
  EXPECT_LT((r.chosen - best).cwiseAbs().maxCoeff(), 6.0 * cfg.sigma_min);
}

TEST(Iterate, NonFiniteScoresExcluded) {
  PlannerConfig cfg = small_config();
  QuadraticEvaluator eval;
  eval.nan_below = 0.0;
  const auto [next, rec] = iterate(PlannerState::initial(cfg), IdentityGenerator{}, eval, cfg, SeededStream(30));
  EXPECT_GT(rec.excluded, 0);
  for (int m : rec.elite_vid) EXPECT_GE(rec.z_vid[static_cast<std::size_t>(m)][0], 0.0);
  for (const auto& p : rec.elite_val) {
    EXPECT_TRUE(std::isfinite(rec.snr[static_cast<std::size_t>(p.video)][static_cast<std::size_t>(p.value)]));
  }
  EXPECT_TRUE(next.f_vid.valid());
  eval.nan_below = 1e9;
  EXPECT_THROW(iterate(PlannerState::initial(cfg), IdentityGenerator{}, eval, cfg, SeededStream(30)), NumericError);
}

TEST(Iterate, EliteSetsScaleInvariantAtZeroEps) {
  PlannerConfig cfg = small_config();
  cfg.eps = 0.0;
  auto engine = SeededStream(31).engine();
  for (int trial = 0; trial < 1000; ++trial) {
    QuadraticEvaluator scaled;
    scaled.scale = std::exp(3.0 * engine.normal());
    const SeededStream s(1000 + static_cast<std::uint64_t>(trial));
    const auto a = iterate(PlannerState::initial(cfg), IdentityGenerator{}, QuadraticEvaluator{}, cfg, s).second;
    const auto b = iterate(PlannerState::initial(cfg), IdentityGenerator{}, scaled, cfg, s).second;
    ASSERT_EQ(a.elite_vid, b.elite_vid) << "trial " << trial;
    ASSERT_EQ(a.elite_val, b.elite_val) << "trial " << trial;
  }
}

TEST(Plan, MeanEliteScoreImprovesOnPointMass) {
  const auto world = PointMassWorld::default_world();
  const KnotGenerator gen(world);
  const AnalyticValueEvaluator eval{world, ReturnSpec{0.99, world.horizon}, RewardWeights{}, 0.0, 8};
  PlannerConfig cfg;
  cfg.K = 2;
  int improved = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const auto r = plan(gen, eval, cfg, SeededStream(5000 + static_cast<std::uint64_t>(t)));
    improved += r.history[1].mean_elite_phi >= r.history[0].mean_elite_phi;
  }
  RecordProperty("improved", improved);
  EXPECT_GE(improved, 9 * trials / 10) << improved << " of " << trials << " trials improved";
}
