#pragma once

// Experiment configuration: a YAML mapping with sections run, world,
// planner, valuation, flow and geolab. Every key is optional and falls back
// to its default; unknown keys are rejected. Schema (defaults in brackets):
//
//   run:       seed [7], out [runs/latest], episodes [200], workers [1],
//              max_steps [48], stride [planner.chunk_len], success_fraction [0.05]
//   world:     dt, horizon, knots, accel_limit, image_size, agent_radius,
//              goal_radius, start [x,y,vx,vy], goal [x,y],
//              obstacles [{center: [x,y], radius: r}, ...], workspace {lo: [..], hi: [..]}
//   planner:   K, M, N, K1, K2, alpha, beta, eps, sigma_min, sigma_decay,
//              chunk_len, final_draw (best_fallback | sample), warm_start, workers
//   valuation: gamma, segments, noise_scale,
//              weights {img_mse, img_ssim, state_prox, vel, acc, act_vel, act_acc, time, collision}
//   flow:      steps, batch, learning_rate, final_lr_fraction, hidden,
//              summary_points, euler_steps, dataset
//   geolab:    horizons, dim_state, dim_action, side, epsilon, delta,
//              off_scale, n_uniform, n_latent, landscape_p, landscape_dim,
//              repetitions
//
// planner.d_vid and planner.d_val follow from world.knots and
// valuation.segments.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "wav/core/error.hpp"
#include "wav/flowmatch/staged.hpp"
#include "wav/geolab/decay.hpp"
#include "wav/geolab/landscape.hpp"
#include "wav/harness/episode.hpp"
#include "wav/planner/planner.hpp"
#include "wav/valuation/value.hpp"
#include "wav/worldgen/point_mass.hpp"

namespace wav {

inline constexpr int kConfigSchemaVersion = 1;

class ConfigError : public ContractError {
 public:
  ConfigError(std::string key, const std::string& what) : ContractError(what), key_(std::move(key)) {}
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string out = "runs/latest";
  int episodes = 200;
  int workers = 1;
  EpisodeConfig episode;
};

struct ValuationConfig {
  double gamma = 0.99;
  int segments = 8;
  double noise_scale = 0.05;
  RewardWeights weights;
};

struct LandscapeConfig {
  double p = 0.001;
  int dim = 2;
  long long repetitions = 2000;
};

struct ExperimentConfig {
  RunConfig run;
  PointMassWorld world = PointMassWorld::default_world();
  PlannerConfig planner;
  ValuationConfig valuation;
  StagedFlowConfig flow;
  GeolabConfig geolab;
  LandscapeConfig landscape;

  [[nodiscard]] AnalyticValueEvaluator evaluator() const {
    return {world, ReturnSpec{valuation.gamma, world.horizon}, valuation.weights, valuation.noise_scale,
            valuation.segments};
  }

  /// Cross-field checks; throws ConfigError naming the fields involved.
  void validate() const {
    auto check = [](const std::string& key, auto&& fn) {
      try {
        fn();
      } catch (const ConfigError&) {
        throw;
      } catch (const ContractError& e) {
        throw ConfigError(key, e.what());
      }
    };
    check("world", [&] { world.validate(); });
    check("planner", [&] { planner.validate(); });
    check("flow", [&] { flow.validate(); });
    check("geolab", [&] { geolab.validate(); });
    auto need = [](bool ok, const std::string& key, const std::string& msg) {
      if (!ok) throw ConfigError(key, msg);
    };
    need(planner.d_vid == world.latent_dim(), "planner.d_vid", "planner.d_vid must equal 2 * world.knots");
    need(planner.d_val >= valuation.segments, "planner.d_val", "planner.d_val must be >= valuation.segments");
    need(planner.chunk_len <= world.horizon, "planner.chunk_len", "planner.chunk_len must be <= world.horizon");
    need(valuation.gamma > 0.0 && valuation.gamma <= 1.0, "valuation.gamma", "valuation.gamma must lie in (0,1]");
    need(valuation.segments >= 2 && valuation.segments <= world.horizon, "valuation.segments",
         "valuation.segments must satisfy 2 <= valuation.segments <= world.horizon");
    need(valuation.noise_scale >= 0.0, "valuation.noise_scale", "valuation.noise_scale must be >= 0");
    need(run.episodes >= 1, "run.episodes", "run.episodes must be >= 1");
    need(run.workers >= 1, "run.workers", "run.workers must be >= 1");
    need(run.episode.max_steps >= 1, "run.max_steps", "run.max_steps must be >= 1");
    need(run.episode.stride >= 1 && run.episode.stride <= planner.chunk_len, "run.stride",
         "run.stride must satisfy 1 <= run.stride <= planner.chunk_len");
    need(run.episode.success_fraction > 0.0, "run.success_fraction", "run.success_fraction must be > 0");
    need(flow.summary_points <= world.horizon, "flow.summary_points",
         "flow.summary_points must be <= world.horizon");
    need(flow.chunk_len == planner.chunk_len, "flow.chunk_len", "flow.chunk_len must equal planner.chunk_len");
    need(landscape.p > 0.0 && landscape.p <= 1.0, "geolab.landscape_p", "geolab.landscape_p must lie in (0,1]");
    need(landscape.dim >= 1, "geolab.landscape_dim", "geolab.landscape_dim must be >= 1");
    need(landscape.repetitions >= 1, "geolab.repetitions", "geolab.repetitions must be >= 1");
  }
};

namespace detail {

class SectionReader {
 public:
  SectionReader(const YAML::Node& node, std::string prefix) : node_(node), prefix_(std::move(prefix)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "config: '" + prefix_ + "' must be a mapping");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(full(key), "config: cannot read '" + full(key) + "' as the expected type");
    }
  }

  YAML::Node child(const std::string& key) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    return node_[key];
  }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto name = kv.first.as<std::string>();
      if (!seen_.count(name)) throw ConfigError(full(name), "config: unknown key '" + full(name) + "'");
    }
  }

  [[nodiscard]] std::string full(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

 private:
  const YAML::Node node_;
  std::string prefix_;
  std::set<std::string> seen_;
};

inline Vector read_vector(const YAML::Node& n, const std::string& key, Eigen::Index size) {
  std::vector<double> v;
  try {
    v = n.as<std::vector<double>>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key, "config: '" + key + "' must be a list of numbers");
  }
  if (static_cast<Eigen::Index>(v.size()) != size) {
    throw ConfigError(key, "config: '" + key + "' must have " + std::to_string(size) + " entries");
  }
  return Eigen::Map<const Vector>(v.data(), size);
}

}  // namespace detail

inline ExperimentConfig config_from_yaml(const YAML::Node& root) {
  ExperimentConfig c;
  detail::SectionReader top(root, "");
  bool stride_given = false;
  {
    detail::SectionReader r(top.child("run"), "run");
    r.get("seed", c.run.seed);
    r.get("out", c.run.out);
    r.get("episodes", c.run.episodes);
    r.get("workers", c.run.workers);
    r.get("max_steps", c.run.episode.max_steps);
    const YAML::Node run_node = top.child("run");
    stride_given = run_node && run_node.IsMap() && run_node["stride"];
    r.get("stride", c.run.episode.stride);
    r.get("success_fraction", c.run.episode.success_fraction);
    r.finish();
  }
  {
    detail::SectionReader r(top.child("world"), "world");
    auto& w = c.world;
    r.get("dt", w.dt);
    r.get("horizon", w.horizon);
    r.get("knots", w.knots);
    r.get("accel_limit", w.accel_limit);
    r.get("image_size", w.image_size);
    r.get("agent_radius", w.agent_radius);
    r.get("goal_radius", w.goal_radius);
    if (auto n = r.child("start")) w.start = detail::read_vector(n, "world.start", 4);
    if (auto n = r.child("goal")) w.goal = detail::read_vector(n, "world.goal", 2);
    if (auto n = r.child("obstacles")) {
      if (!n.IsSequence() && !n.IsNull()) throw ConfigError("world.obstacles", "config: 'world.obstacles' must be a list");
      w.obstacles.clear();
      for (std::size_t i = 0; i < n.size(); ++i) {
        const std::string key = "world.obstacles[" + std::to_string(i) + "]";
        detail::SectionReader o(n[i], key);
        Circle circle;
        if (auto cn = o.child("center")) circle.center = detail::read_vector(cn, key + ".center", 2);
        o.get("radius", circle.radius);
        o.finish();
        w.obstacles.push_back(circle);
      }
    }
    if (auto n = r.child("workspace")) {
      detail::SectionReader ws(n, "world.workspace");
      if (auto lo = ws.child("lo")) w.workspace_lo = detail::read_vector(lo, "world.workspace.lo", 2);
      if (auto hi = ws.child("hi")) w.workspace_hi = detail::read_vector(hi, "world.workspace.hi", 2);
      ws.finish();
    }
    r.finish();
  }
  {
    detail::SectionReader r(top.child("planner"), "planner");
    auto& p = c.planner;
    r.get("K", p.K);
    r.get("M", p.M);
    r.get("N", p.N);
    r.get("K1", p.K1);
    r.get("K2", p.K2);
    r.get("alpha", p.alpha);
    r.get("beta", p.beta);
    r.get("eps", p.eps);
    r.get("sigma_min", p.sigma_min);
    r.get("sigma_decay", p.sigma_decay);
    r.get("chunk_len", p.chunk_len);
    std::string draw = p.final_draw == FinalDraw::kSample ? "sample" : "best_fallback";
    r.get("final_draw", draw);
    if (draw == "sample") p.final_draw = FinalDraw::kSample;
    else if (draw == "best_fallback") p.final_draw = FinalDraw::kBestFallback;
    else throw ConfigError("planner.final_draw", "config: 'planner.final_draw' must be best_fallback or sample");
    r.get("warm_start", p.warm_start);
    r.get("workers", p.workers);
    r.finish();
  }
  {
    detail::SectionReader r(top.child("valuation"), "valuation");
    auto& v = c.valuation;
    r.get("gamma", v.gamma);
    r.get("segments", v.segments);
    r.get("noise_scale", v.noise_scale);
    detail::SectionReader wr(r.child("weights"), "valuation.weights");
    auto& w = v.weights;
    wr.get("img_mse", w.w_img_mse);
    wr.get("img_ssim", w.w_img_ssim);
    wr.get("state_prox", w.w_state_prox);
    wr.get("vel", w.w_vel);
    wr.get("acc", w.w_acc);
    wr.get("act_vel", w.w_act_vel);
    wr.get("act_acc", w.w_act_acc);
    wr.get("time", w.w_time);
    wr.get("collision", w.w_collision);
    wr.finish();
    r.finish();
  }
  {
    detail::SectionReader r(top.child("flow"), "flow");
    auto& f = c.flow;
    r.get("steps", f.train.steps);
    r.get("batch", f.train.batch);
    r.get("learning_rate", f.train.learning_rate);
    r.get("final_lr_fraction", f.train.final_lr_fraction);
    r.get("hidden", f.hidden);
    r.get("summary_points", f.summary_points);
    r.get("euler_steps", f.euler_steps);
    r.get("dataset", f.dataset);
    r.finish();
  }
  {
    detail::SectionReader r(top.child("geolab"), "geolab");
    auto& g = c.geolab;
    r.get("horizons", g.horizons);
    r.get("dim_state", g.dim_state);
    r.get("dim_action", g.dim_action);
    r.get("side", g.side);
    r.get("epsilon", g.epsilon);
    r.get("delta", g.delta);
    r.get("off_scale", g.off_scale);
    r.get("n_uniform", g.n_uniform);
    r.get("n_latent", g.n_latent);
    r.get("landscape_p", c.landscape.p);
    r.get("landscape_dim", c.landscape.dim);
    r.get("repetitions", c.landscape.repetitions);
    r.finish();
  }
  top.finish();

  if (!stride_given) c.run.episode.stride = c.planner.chunk_len;
  c.planner.d_vid = c.world.latent_dim();
  c.planner.d_val = c.valuation.segments;
  c.flow.chunk_len = c.planner.chunk_len;
  c.geolab.workers = c.run.workers;
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("<file>", std::string("config: parse error: ") + e.what());
  }
  return config_from_yaml(root);
}

inline YAML::Node load_config_node(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return YAML::Load(ss.str());
  } catch (const YAML::Exception& e) {
    throw ConfigError("<file>", "config: parse error in " + path.string() + ": " + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_yaml(load_config_node(path));
}

namespace detail {

inline void emit_vector(YAML::Emitter& e, const Vector& v) {
  e << YAML::Flow << YAML::BeginSeq;
  for (double x : v) e << x;
  e << YAML::EndSeq;
}

}  // namespace detail

/// Full YAML rendering of every field; parse_config of the result gives
/// back an equal configuration.
inline std::string serialize_config(const ExperimentConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::Comment("wav experiment config, schema " + std::to_string(kConfigSchemaVersion));
  e << YAML::BeginMap;
  e << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "seed" << YAML::Value << c.run.seed;
  e << YAML::Key << "out" << YAML::Value << c.run.out;
  e << YAML::Key << "episodes" << YAML::Value << c.run.episodes;
  e << YAML::Key << "workers" << YAML::Value << c.run.workers;
  e << YAML::Key << "max_steps" << YAML::Value << c.run.episode.max_steps;
  e << YAML::Key << "stride" << YAML::Value << c.run.episode.stride;
  e << YAML::Key << "success_fraction" << YAML::Value << c.run.episode.success_fraction;
  e << YAML::EndMap;

  const auto& w = c.world;
  e << YAML::Key << "world" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "dt" << YAML::Value << w.dt;
  e << YAML::Key << "horizon" << YAML::Value << w.horizon;
  e << YAML::Key << "knots" << YAML::Value << w.knots;
  e << YAML::Key << "accel_limit" << YAML::Value << w.accel_limit;
  e << YAML::Key << "image_size" << YAML::Value << w.image_size;
  e << YAML::Key << "agent_radius" << YAML::Value << w.agent_radius;
  e << YAML::Key << "goal_radius" << YAML::Value << w.goal_radius;
  e << YAML::Key << "start" << YAML::Value;
  detail::emit_vector(e, w.start);
  e << YAML::Key << "goal" << YAML::Value;
  detail::emit_vector(e, w.goal);
  e << YAML::Key << "obstacles" << YAML::Value << YAML::BeginSeq;
  for (const auto& o : w.obstacles) {
    e << YAML::Flow << YAML::BeginMap << YAML::Key << "center" << YAML::Value;
    detail::emit_vector(e, o.center);
    e << YAML::Key << "radius" << YAML::Value << o.radius << YAML::EndMap;
  }
  e << YAML::EndSeq;
  e << YAML::Key << "workspace" << YAML::Value << YAML::BeginMap << YAML::Key << "lo" << YAML::Value;
  detail::emit_vector(e, w.workspace_lo);
  e << YAML::Key << "hi" << YAML::Value;
  detail::emit_vector(e, w.workspace_hi);
  e << YAML::EndMap << YAML::EndMap;

  const auto& p = c.planner;
  e << YAML::Key << "planner" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "K" << YAML::Value << p.K;
  e << YAML::Key << "M" << YAML::Value << p.M;
  e << YAML::Key << "N" << YAML::Value << p.N;
  e << YAML::Key << "K1" << YAML::Value << p.K1;
  e << YAML::Key << "K2" << YAML::Value << p.K2;
  e << YAML::Key << "alpha" << YAML::Value << p.alpha;
  e << YAML::Key << "beta" << YAML::Value << p.beta;
  e << YAML::Key << "eps" << YAML::Value << p.eps;
  e << YAML::Key << "sigma_min" << YAML::Value << p.sigma_min;
  e << YAML::Key << "sigma_decay" << YAML::Value << p.sigma_decay;
  e << YAML::Key << "chunk_len" << YAML::Value << p.chunk_len;
  e << YAML::Key << "final_draw" << YAML::Value
    << (p.final_draw == FinalDraw::kSample ? "sample" : "best_fallback");
  e << YAML::Key << "warm_start" << YAML::Value << p.warm_start;
  e << YAML::Key << "workers" << YAML::Value << p.workers;
  e << YAML::EndMap;

  const auto& v = c.valuation;
  e << YAML::Key << "valuation" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "gamma" << YAML::Value << v.gamma;
  e << YAML::Key << "segments" << YAML::Value << v.segments;
  e << YAML::Key << "noise_scale" << YAML::Value << v.noise_scale;
  e << YAML::Key << "weights" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "img_mse" << YAML::Value << v.weights.w_img_mse;
  e << YAML::Key << "img_ssim" << YAML::Value << v.weights.w_img_ssim;
  e << YAML::Key << "state_prox" << YAML::Value << v.weights.w_state_prox;
  e << YAML::Key << "vel" << YAML::Value << v.weights.w_vel;
  e << YAML::Key << "acc" << YAML::Value << v.weights.w_acc;
  e << YAML::Key << "act_vel" << YAML::Value << v.weights.w_act_vel;
  e << YAML::Key << "act_acc" << YAML::Value << v.weights.w_act_acc;
  e << YAML::Key << "time" << YAML::Value << v.weights.w_time;
  e << YAML::Key << "collision" << YAML::Value << v.weights.w_collision;
  e << YAML::EndMap << YAML::EndMap;

  const auto& f = c.flow;
  e << YAML::Key << "flow" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "steps" << YAML::Value << f.train.steps;
  e << YAML::Key << "batch" << YAML::Value << f.train.batch;
  e << YAML::Key << "learning_rate" << YAML::Value << f.train.learning_rate;
  e << YAML::Key << "final_lr_fraction" << YAML::Value << f.train.final_lr_fraction;
  e << YAML::Key << "hidden" << YAML::Value << f.hidden;
  e << YAML::Key << "summary_points" << YAML::Value << f.summary_points;
  e << YAML::Key << "euler_steps" << YAML::Value << f.euler_steps;
  e << YAML::Key << "dataset" << YAML::Value << f.dataset;
  e << YAML::EndMap;

  const auto& g = c.geolab;
  e << YAML::Key << "geolab" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "horizons" << YAML::Value << YAML::Flow << g.horizons;
  e << YAML::Key << "dim_state" << YAML::Value << g.dim_state;
  e << YAML::Key << "dim_action" << YAML::Value << g.dim_action;
  e << YAML::Key << "side" << YAML::Value << g.side;
  e << YAML::Key << "epsilon" << YAML::Value << g.epsilon;
  e << YAML::Key << "delta" << YAML::Value << g.delta;
  e << YAML::Key << "off_scale" << YAML::Value << g.off_scale;
  e << YAML::Key << "n_uniform" << YAML::Value << g.n_uniform;
  e << YAML::Key << "n_latent" << YAML::Value << g.n_latent;
  e << YAML::Key << "landscape_p" << YAML::Value << c.landscape.p;
  e << YAML::Key << "landscape_dim" << YAML::Value << c.landscape.dim;
  e << YAML::Key << "repetitions" << YAML::Value << c.landscape.repetitions;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  const auto& wa = a.world;
  const auto& wb = b.world;
  const bool obstacles_equal =
      wa.obstacles.size() == wb.obstacles.size() &&
      std::equal(wa.obstacles.begin(), wa.obstacles.end(), wb.obstacles.begin(),
                 [](const Circle& x, const Circle& y) { return x.center == y.center && x.radius == y.radius; });
  const bool world_equal = wa.dt == wb.dt && wa.start == wb.start && wa.goal == wb.goal && obstacles_equal &&
                           wa.workspace_lo == wb.workspace_lo && wa.workspace_hi == wb.workspace_hi &&
                           wa.horizon == wb.horizon && wa.knots == wb.knots && wa.accel_limit == wb.accel_limit &&
                           wa.image_size == wb.image_size && wa.agent_radius == wb.agent_radius &&
                           wa.goal_radius == wb.goal_radius && wa.start_action == wb.start_action;
  const auto& pa = a.planner;
  const auto& pb = b.planner;
  const bool planner_equal = pa.K == pb.K && pa.M == pb.M && pa.N == pb.N && pa.K1 == pb.K1 && pa.K2 == pb.K2 &&
                             pa.alpha == pb.alpha && pa.beta == pb.beta && pa.eps == pb.eps &&
                             pa.sigma_min == pb.sigma_min && pa.sigma_decay == pb.sigma_decay &&
                             pa.chunk_len == pb.chunk_len && pa.d_vid == pb.d_vid && pa.d_val == pb.d_val &&
                             pa.final_draw == pb.final_draw && pa.warm_start == pb.warm_start &&
                             pa.workers == pb.workers;
  const auto& ra = a.run;
  const auto& rb = b.run;
  const bool run_equal = ra.seed == rb.seed && ra.out == rb.out && ra.episodes == rb.episodes &&
                         ra.workers == rb.workers && ra.episode.max_steps == rb.episode.max_steps &&
                         ra.episode.stride == rb.episode.stride &&
                         ra.episode.success_fraction == rb.episode.success_fraction;
  const auto& va = a.valuation;
  const auto& vb = b.valuation;
  const bool valuation_equal = va.gamma == vb.gamma && va.segments == vb.segments &&
                               va.noise_scale == vb.noise_scale && va.weights == vb.weights;
  const auto& fa = a.flow;
  const auto& fb = b.flow;
  const bool flow_equal = fa.train.steps == fb.train.steps && fa.train.batch == fb.train.batch &&
                          fa.train.learning_rate == fb.train.learning_rate &&
                          fa.train.final_lr_fraction == fb.train.final_lr_fraction && fa.hidden == fb.hidden &&
                          fa.summary_points == fb.summary_points && fa.euler_steps == fb.euler_steps &&
                          fa.dataset == fb.dataset && fa.chunk_len == fb.chunk_len;
  const auto& ga = a.geolab;
  const auto& gb = b.geolab;
  const bool geolab_equal = ga.horizons == gb.horizons && ga.dim_state == gb.dim_state &&
                            ga.dim_action == gb.dim_action && ga.intrinsic_dim == gb.intrinsic_dim &&
                            ga.side == gb.side && ga.epsilon == gb.epsilon && ga.delta == gb.delta &&
                            ga.off_scale == gb.off_scale && ga.n_uniform == gb.n_uniform &&
                            ga.n_latent == gb.n_latent && ga.workers == gb.workers &&
                            a.landscape.p == b.landscape.p && a.landscape.dim == b.landscape.dim &&
                            a.landscape.repetitions == b.landscape.repetitions;
  return world_equal && planner_equal && run_equal && valuation_equal && flow_equal && geolab_equal;
}

}  // namespace wav
