#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "wav/flowmatch/flow.hpp"
#include "wav/flowmatch/io.hpp"
#include "wav/flowmatch/mlp.hpp"
#include "wav/flowmatch/staged.hpp"

using namespace wav;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

constexpr Gaussian1 kBase{0.0, 1.0};
constexpr Gaussian1 kTarget{1.0, 1.5};

FlowBatch gaussian_batch(const SeededStream& s, int batch, Gaussian1 base, Gaussian1 target) {
  auto engine = s.engine();
  Matrix x0(1, batch), x1(1, batch);
  for (int b = 0; b < batch; ++b) {
    x0(0, b) = base.mean + base.std * engine.normal();
    x1(0, b) = target.mean + target.std * engine.normal();
  }
  return FlowBatch::with_uniform_times(std::move(x0), std::move(x1), Matrix(0, batch), s.derive("t"));
}

FlowBatch random_batch(SplitMix64& engine, int dim_cond, int dim_x, int batch) {
  Matrix x0(dim_x, batch), x1(dim_x, batch), c(dim_cond, batch);
  Vector t(batch);
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < dim_x; ++i) {
      x0(i, b) = engine.normal();
      x1(i, b) = 2.0 * engine.normal() + 1.0;
    }
    for (int i = 0; i < dim_cond; ++i) c(i, b) = engine.normal();
    t[b] = engine.uniform();
  }
  return {x0, x1, c, t};
}

struct OracleField {
  Gaussian1 base, target;
  Vector operator()(double t, const Vector&, const Vector& x) const {
    return Vector::Constant(1, gaussian_oracle_velocity(t, x[0], base, target));
  }
};

const MlpField& trained_gaussian_field() {
  static const MlpField field = [] {
    MlpField f = MlpField::initialised({0, 1, 64}, SeededStream(77).derive("init"));
    TrainConfig cfg;
    cfg.steps = 4000;
    cfg.batch = 512;
    cfg.learning_rate = 3e-3;
    cfg.final_lr_fraction = 0.02;
    const BatchSampler sampler = [](const SeededStream& s, int b) { return gaussian_batch(s, b, kBase, kTarget); };
    fit_field(f, sampler, cfg, SeededStream(77).derive("fit"));
    return f;
  }();
  return field;
}

}  // namespace

TEST(Interpolate, Examples) {
  const Vector x0 = vec({0.5, -1}), x1 = vec({3, 2});
  EXPECT_EQ(interpolate(x0, x1, 0.0).x_t, x0);
  EXPECT_EQ(interpolate(x0, x1, 1.0).x_t, x1);
  const auto mid = interpolate(vec({0, 0}), vec({2, 4}), 0.5);
  EXPECT_EQ(mid.x_t, vec({1, 2}));
  EXPECT_EQ(mid.target, vec({2, 4}));
  EXPECT_THROW(interpolate(x0, x1, 1.5), ContractError);
  EXPECT_THROW(interpolate(x0, x1, -0.1), ContractError);
  EXPECT_THROW(interpolate(x0, vec({1}), 0.5), ContractError);
}

TEST(Loss, Examples) {
  const FlowBatch one{vec({0, 0}), vec({1, 1}), Matrix(0, 1), vec({0.3})};
  const auto zero = [](double, const Vector&, const Vector& x) { return Vector(Vector::Zero(x.size())); };
  EXPECT_DOUBLE_EQ(fm_loss(zero, one), 2.0);
  const auto perfect = [](double, const Vector&, const Vector&) { return Vector(vec({1, 1})); };
  EXPECT_EQ(fm_loss(perfect, one), 0.0);
  const FlowBatch empty{Matrix(2, 0), Matrix(2, 0), Matrix(0, 0), Vector(0)};
  EXPECT_THROW(fm_loss(zero, empty), ContractError);
  auto engine = SeededStream(1).engine();
  const auto field = MlpField::initialised({2, 3, 8}, SeededStream(2));
  for (int i = 0; i < 10; ++i) EXPECT_GE(fm_loss(field, random_batch(engine, 2, 3, 16)), 0.0);
}

TEST(Loss, BatchedMatchesGeneric) {
  auto engine = SeededStream(3).engine();
  const auto field = MlpField::initialised({2, 3, 8}, SeededStream(4));
  const auto batch = random_batch(engine, 2, 3, 32);
  EXPECT_NEAR(fm_loss_and_gradient(field, batch).loss, fm_loss(field, batch), 1e-12);
}

TEST(Gradient, MatchesCentralDifferences) {
  auto engine = SeededStream(5).engine();
  const double h = 1e-5;
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    const MlpShape shape{2, 2, 6};
    MlpField field = MlpField::initialised(shape, SeededStream(5).derive(indexed("draw", draw)));
    for (Eigen::Index i = 0; i < field.params().size(); ++i) field.params()[i] += 0.3 * engine.normal();
    const auto batch = random_batch(engine, 2, 2, 8);
    const Vector grad = fm_loss_and_gradient(field, batch).grad;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      MlpField plus = field, minus = field;
      plus.params()[i] += h;
      minus.params()[i] -= h;
      const double fd = (fm_loss(plus, batch) - fm_loss(minus, batch)) / (2.0 * h);
      const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Train, TinyRateLeavesParameters) {
  auto engine = SeededStream(6).engine();
  MlpField field = MlpField::initialised({1, 2, 8}, SeededStream(7));
  const MlpField before = field;
  AdamState adam;
  train_step(field, adam, random_batch(engine, 1, 2, 16), 1e-15);
  EXPECT_LE((field.params() - before.params()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(train_step(field, adam, random_batch(engine, 1, 2, 16), 0.0), ContractError);
}

TEST(Train, FixedBatchLossDecreasesOverWindows) {
  MlpField field = MlpField::initialised({0, 1, 16}, SeededStream(8));
  const auto batch = gaussian_batch(SeededStream(9), 256, kBase, kTarget);
  AdamState adam;
  std::vector<double> losses;
  for (int i = 0; i < 500; ++i) losses.push_back(train_step(field, adam, batch, 1e-3));
  for (std::size_t i = 0; i + 100 < losses.size(); ++i) EXPECT_LT(losses[i + 100], losses[i]) << "step " << i;
}

TEST(Train, NonFiniteGradientRaises) {
  MlpField field = MlpField::initialised({0, 1, 4}, SeededStream(10));
  field.params()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState adam;
  EXPECT_THROW(train_step(field, adam, gaussian_batch(SeededStream(1), 4, kBase, kTarget), 1e-3), NumericError);
}

TEST(Euler, ConstantAndZeroFields) {
  const Vector z0 = vec({0.5, -2});
  const Vector c = vec({1.25, 3});
  const auto constant = [&](double, const Vector&, const Vector&) { return c; };
  const auto zero = [](double, const Vector&, const Vector& x) { return Vector(Vector::Zero(x.size())); };
  for (int steps : {1, 3, 7, 64}) {
    EXPECT_LT((euler_sample(constant, z0, Vector(), steps) - (z0 + c)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(euler_sample(zero, z0, Vector(), steps), z0);
  }
  EXPECT_THROW(euler_sample(zero, z0, Vector(), 0), ContractError);
}

TEST(Euler, PointMassOracle) {
  const Gaussian1 target{0.7, 0.0};
  const OracleField oracle{kBase, target};
  for (double z : {-2.0, -0.3, 0.0, 1.1, 2.5}) {
    EXPECT_NEAR(euler_sample(oracle, vec({z}), Vector(), 100)[0], 0.7, 1e-3);
  }
}

TEST(Euler, GaussianOracleConvergesFirstOrder) {
  const OracleField oracle{kBase, kTarget};
  const double z = 0.8;
  const double exact = euler_sample(oracle, vec({z}), Vector(), 20000)[0];
  const double e1 = std::abs(euler_sample(oracle, vec({z}), Vector(), 50)[0] - exact);
  const double e2 = std::abs(euler_sample(oracle, vec({z}), Vector(), 100)[0] - exact);
  EXPECT_NEAR(e1 / e2, 2.0, 0.2);
}

TEST(Euler, NonFiniteState) {
  const auto blowup = [](double, const Vector&, const Vector& x) {
    return Vector(Vector::Constant(x.size(), std::numeric_limits<double>::infinity()));
  };
  EXPECT_THROW(euler_sample(blowup, vec({0}), Vector(), 4), NumericError);
}

TEST(Oracle, Examples) {
  for (double x : {-3.0, -0.5, 0.0, 2.0}) {
    EXPECT_NEAR(gaussian_oracle_velocity(0.5, x, {0, 1}, {0, 1}), 0.0, 1e-15);
    EXPECT_NEAR(gaussian_oracle_velocity(0.0, x, {0, 1}, {0, 1}), -x, 1e-15);
    for (double t : {0.0, 0.25, 0.9}) {
      EXPECT_NEAR(gaussian_oracle_velocity(t, x, {0, 1}, {1.5, 0}), (1.5 - x) / (1.0 - t), 1e-12);
    }
  }
  EXPECT_THROW(gaussian_oracle_velocity(1.0, 0.0, {0, 1}, {1, 0}), ContractError);
  EXPECT_THROW(gaussian_oracle_velocity(0.5, 0.0, {0, 0}, {1, 1}), ContractError);
}

TEST(Oracle, MonteCarloConditionalMean) {
  auto engine = SeededStream(11).engine();
  const double t = 0.3, x = 0.6, width = 0.02;
  double sum = 0;
  long n = 0;
  for (int i = 0; i < 4000000; ++i) {
    const double x0 = engine.normal();
    const double x1 = kTarget.mean + kTarget.std * engine.normal();
    if (std::abs((1 - t) * x0 + t * x1 - x) < width) {
      sum += x1 - x0;
      ++n;
    }
  }
  ASSERT_GT(n, 10000);
  EXPECT_NEAR(sum / n, gaussian_oracle_velocity(t, x, kBase, kTarget), 0.03);
}

TEST(Oracle, MinimalLossInFamily) {
  const auto batch = gaussian_batch(SeededStream(12), 100000, kBase, kTarget);
  const OracleField oracle{kBase, kTarget};
  const double best = fm_loss(oracle, batch);
  auto engine = SeededStream(13).engine();
  for (int k = 0; k < 20; ++k) {
    const double a = 0.1 + 0.3 * engine.uniform(), b = 0.1 + 0.3 * engine.uniform();
    const double sign = engine.bernoulli(0.5) ? 1.0 : -1.0;
    const auto perturbed = [&](double t, const Vector& c, const Vector& x) {
      return Vector(oracle(t, c, x).array() + sign * (a * x.array() * t + b));
    };
    EXPECT_GT(fm_loss(perturbed, batch), best);
  }
  const auto linear = [](double, const Vector&, const Vector& x) { return Vector(x.array() * 0.0 + 1.0); };
  EXPECT_GT(fm_loss(linear, batch), best);
}

TEST(Trained, MatchesOracleOnGrid) {
  const auto& field = trained_gaussian_field();
  double se = 0;
  int n = 0;
  for (int ti = 1; ti <= 9; ++ti) {
    const double t = 0.1 * ti;
    for (int xi = 0; xi <= 40; ++xi) {
      const double x = -2.0 + 0.1 * xi;
      const double d = field(t, Vector(), vec({x}))[0] - gaussian_oracle_velocity(t, x, kBase, kTarget);
      se += d * d;
      ++n;
    }
  }
  const double rmse = std::sqrt(se / n);
  RecordProperty("rmse", std::to_string(rmse));
  EXPECT_LE(rmse, 0.05);
}

TEST(Trained, TransportsMoments) {
  const auto& field = trained_gaussian_field();
  auto engine = SeededStream(14).engine();
  const int n = 10000;
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = euler_sample(field, vec({engine.normal()}), Vector(), 200)[0];
  double m = 0, v = 0;
  for (double x : out) m += x;
  m /= n;
  for (double x : out) v += (x - m) * (x - m);
  v /= n;
  EXPECT_NEAR(m, kTarget.mean, 0.05 * kTarget.std);
  EXPECT_NEAR(v / (kTarget.std * kTarget.std), 1.0, 0.05);
}

TEST(Io, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "wav_io_test";
  std::filesystem::create_directories(dir);
  const auto field = MlpField::initialised({3, 2, 5}, SeededStream(15));
  save_field(field, dir / "f", 0xdeadbeefcafeULL);
  const auto loaded = load_field(dir / "f");
  EXPECT_EQ(loaded.field, field);
  EXPECT_EQ(loaded.config_hash, 0xdeadbeefcafeULL);
  std::filesystem::resize_file(dir / "f.bin", 16);
  EXPECT_THROW(load_field(dir / "f"), std::runtime_error);
  EXPECT_THROW(load_field(dir / "missing"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Mlp, ShapeChecks) {
  const MlpShape s{2, 3, 4};
  EXPECT_EQ(s.param_count(), 4 * 6 + 4 + 16 + 4 + 3 * 4 + 3);
  EXPECT_THROW(MlpField(s, Vector::Zero(5)), ContractError);
  const auto f = MlpField::initialised(s, SeededStream(1));
  EXPECT_THROW(f(0.1, vec({1}), vec({1, 2, 3})), ContractError);
  EXPECT_EQ(f(0.1, vec({1, 2}), vec({1, 2, 3})).size(), 3);
  EXPECT_EQ(f(0.1, vec({1, 2}), vec({1, 2, 3})), f(0.1, vec({1, 2}), vec({1, 2, 3})));
}

TEST(Staged, StagesAreIndependentAndDeterministic) {
  const auto w = PointMassWorld::default_world();
  const AnalyticValueEvaluator eval{w, ReturnSpec{0.95, w.horizon}, RewardWeights{}, 0.05, 8};
  StagedFlowConfig cfg;
  cfg.dataset = 64;
  cfg.hidden = 8;
  cfg.train.steps = 20;
  cfg.train.batch = 16;
  const SeededStream root(16);
  const auto data = make_flow_dataset(w, eval, cfg, root.derive("data"));
  ASSERT_EQ(data.size(), 64u);
  for (const auto& s : data) EXPECT_FALSE(w.in_obstacle(s.start.head<2>()));
  EXPECT_EQ(data[3].summary.size(), 16);
  EXPECT_EQ(data[3].values.size(), 8);
  EXPECT_EQ(data[3].actions.size(), 12);

  const auto staged = train_staged(data, cfg, root.derive("train"));
  const auto again = train_staged(data, cfg, root.derive("train"));
  for (FlowStage s : {FlowStage::kVideo, FlowStage::kValue, FlowStage::kAction}) {
    EXPECT_EQ(staged.field(s), again.field(s));
    std::vector<double> losses;
    const auto alone =
        train_stage(data, s, cfg, root.derive("train").derive(std::string("stage=") + stage_name(s)), losses);
    EXPECT_EQ(alone, staged.field(s));
  }
  EXPECT_EQ(staged.field(FlowStage::kVideo).dim_cond(), 4);
  EXPECT_EQ(staged.field(FlowStage::kValue).dim_cond(), 20);
  EXPECT_EQ(staged.field(FlowStage::kAction).dim_cond(), 28);

  const FlowValueEvaluator fv{staged.field(FlowStage::kValue), w, cfg.summary_points, cfg.euler_steps};
  const auto traj = decode_knots(Vector::Zero(w.latent_dim()), w);
  EXPECT_EQ(fv.evaluate(fv.features(traj), Vector::Zero(8)).values.size(), 8);
}
