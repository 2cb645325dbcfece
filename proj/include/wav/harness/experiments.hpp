#pragma once

// Experiment runners behind the wavctl subcommands. Each writes its
// artifacts into a StagedOutput and returns the in-memory results.
//
// Stream layout under the master seed: "episode=e/replan=r/..." for
// planning, "geometry/decay", "geometry/landscape", "flow/data",
// "flow/train", "reward-check".

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "wav/core/parallel.hpp"
#include "wav/core/rng.hpp"
#include "wav/flowmatch/io.hpp"
#include "wav/flowmatch/staged.hpp"
#include "wav/geolab/decay.hpp"
#include "wav/geolab/landscape.hpp"
#include "wav/harness/config.hpp"
#include "wav/harness/episode.hpp"
#include "wav/harness/output.hpp"

namespace wav {

inline std::vector<EpisodeOutcome> run_episodes(const ExperimentConfig& cfg, const SeededStream& root) {
  std::vector<EpisodeOutcome> out(static_cast<std::size_t>(cfg.run.episodes));
  const AnalyticValueEvaluator evaluator = cfg.evaluator();
  parallel_for(out.size(), static_cast<std::size_t>(cfg.run.workers), [&](std::size_t e) {
    const int idx = static_cast<int>(e);
    out[e] = run_episode(cfg.world, evaluator, cfg.planner, cfg.run.episode, root.derive(indexed("episode", idx)), idx);
  });
  return out;
}

inline CsvSchema episode_schema() {
  return {{"episode", ColumnType::kInt},        {"success", ColumnType::kInt},
          {"reached", ColumnType::kInt},        {"collided", ColumnType::kInt},
          {"steps", ColumnType::kInt},          {"plans", ColumnType::kInt},
          {"final_distance", ColumnType::kReal}, {"mean_best_phi", ColumnType::kReal}};
}

inline CsvRow episode_row(const EpisodeOutcome& o) {
  return {static_cast<long long>(o.episode), static_cast<long long>(o.success), static_cast<long long>(o.reached),
          static_cast<long long>(o.collided), static_cast<long long>(o.steps),    static_cast<long long>(o.plans),
          o.final_distance,                 o.mean_best_phi};
}

inline CsvSchema timing_schema() {
  return {{"episode", ColumnType::kInt}, {"plans", ColumnType::kInt}, {"plan_ms_total", ColumnType::kReal},
          {"plan_ms_mean", ColumnType::kReal}};
}

inline CsvRow timing_row(const EpisodeOutcome& o) {
  return {static_cast<long long>(o.episode), static_cast<long long>(o.plans), o.plan_ms_total,
          o.plans > 0 ? o.plan_ms_total / o.plans : 0.0};
}

inline CsvSchema history_schema() {
  return {{"episode", ColumnType::kInt},         {"plan", ColumnType::kInt},
          {"iter", ColumnType::kInt},            {"mean_elite_phi", ColumnType::kReal},
          {"best_phi", ColumnType::kReal},       {"mean_sigma_vid", ColumnType::kReal},
          {"mean_sigma_val", ColumnType::kReal}, {"wall_ms", ColumnType::kReal}};
}

struct EpisodeSummary {
  int episodes = 0;
  double success_rate = 0.0;
  double reached_rate = 0.0;
  double collided_rate = 0.0;
  double mean_plan_ms = 0.0;  // per plan() call, averaged over episodes
};

inline EpisodeSummary summarize(const std::vector<EpisodeOutcome>& outcomes) {
  EpisodeSummary s;
  s.episodes = static_cast<int>(outcomes.size());
  if (outcomes.empty()) return s;
  for (const auto& o : outcomes) {
    s.success_rate += o.success;
    s.reached_rate += o.reached;
    s.collided_rate += o.collided;
    s.mean_plan_ms += o.plans > 0 ? o.plan_ms_total / o.plans : 0.0;
  }
  const double n = static_cast<double>(outcomes.size());
  s.success_rate /= n;
  s.reached_rate /= n;
  s.collided_rate /= n;
  s.mean_plan_ms /= n;
  return s;
}

inline nlohmann::json base_manifest(const std::string& command, const ExperimentConfig& cfg,
                                    const std::string& started) {
  return {{"command", command},
          {"config", serialize_config(cfg)},
          {"seed", cfg.run.seed},
          {"code_version", code_version()},
          {"config_schema", kConfigSchemaVersion},
          {"started", started}};
}

inline void finish_manifest(StagedOutput& out, nlohmann::json manifest) {
  manifest["finished"] = utc_timestamp();
  write_text(out.path("manifest.json"), manifest.dump(2) + "\n");
  out.commit();
}

// ---------------------------------------------------------------- plan

inline EpisodeSummary run_plan_command(const ExperimentConfig& cfg) {
  const std::string started = utc_timestamp();
  StagedOutput out(cfg.run.out);
  const auto outcomes = run_episodes(cfg, SeededStream(cfg.run.seed));
  std::vector<CsvRow> rows, timing, history;
  for (const auto& o : outcomes) {
    rows.push_back(episode_row(o));
    timing.push_back(timing_row(o));
    for (const auto& h : o.history) {
      history.push_back({static_cast<long long>(o.episode), static_cast<long long>(h.plan),
                         static_cast<long long>(h.k), h.mean_elite_phi, h.best_phi, h.mean_sigma_vid,
                         h.mean_sigma_val, h.wall_ms});
    }
  }
  write_metrics(rows, episode_schema(), out.path("metrics.csv"));
  write_metrics(timing, timing_schema(), out.path("timing.csv"));
  write_metrics(history, history_schema(), out.path("history.csv"));
  write_text(out.path("config.yaml"), serialize_config(cfg));
  const EpisodeSummary s = summarize(outcomes);
  auto manifest = base_manifest("plan", cfg, started);
  manifest["episodes"] = csv_table_json(rows, episode_schema());
  manifest["success_rate"] = s.success_rate;
  manifest["reached_rate"] = s.reached_rate;
  manifest["collided_rate"] = s.collided_rate;
  finish_manifest(out, std::move(manifest));
  return s;
}

// ---------------------------------------------------------------- ablate

struct SweepAxis {
  std::string key;  // dotted config key, e.g. planner.K
  std::vector<std::string> values;
};

/// Parses KEY=V1,V2,...
inline SweepAxis parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= text.size()) {
    throw ConfigError("--sweep", "sweep must look like KEY=V1,V2,... (got '" + text + "')");
  }
  SweepAxis axis;
  axis.key = text.substr(0, eq);
  if (axis.key.find('.') == std::string::npos) axis.key = "planner." + axis.key;
  std::string rest = text.substr(eq + 1);
  std::size_t start = 0;
  while (start <= rest.size()) {
    const auto comma = rest.find(',', start);
    const std::string v = rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (v.empty()) throw ConfigError("--sweep", "sweep value list for '" + axis.key + "' has an empty entry");
    axis.values.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return axis;
}

/// Copy of `root` with the dotted `key` set to the YAML scalar `value`.
inline YAML::Node with_override(const YAML::Node& root, const std::string& key, const std::string& value) {
  YAML::Node copy = root && root.IsMap() ? YAML::Clone(root) : YAML::Node(YAML::NodeType::Map);
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  YAML::Node node = copy;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node[parts[i]] || !node[parts[i]].IsMap()) node[parts[i]] = YAML::Node(YAML::NodeType::Map);
    node.reset(node[parts[i]]);
  }
  node[parts.back()] = YAML::Load(value);
  return copy;
}

struct AblationCell {
  std::vector<std::string> values;  // one per axis
  ExperimentConfig config;
  std::vector<EpisodeOutcome> outcomes;
  EpisodeSummary summary;
};

/// Cartesian product of the axes; every cell reuses the same episode
/// streams so cells differ only in the swept settings.
inline std::vector<AblationCell> run_ablation(const YAML::Node& root, const std::vector<SweepAxis>& axes,
                                              const std::map<std::string, std::string>& overrides = {}) {
  require(!axes.empty(), "ablate: at least one --sweep axis is required");
  YAML::Node base = root;
  for (const auto& [k, v] : overrides) base = with_override(base, k, v);
  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : combos) {
      for (const auto& v : axis.values) {
        auto n = c;
        n.push_back(v);
        next.push_back(std::move(n));
      }
    }
    combos = std::move(next);
  }
  std::vector<AblationCell> cells;
  for (const auto& combo : combos) {
    YAML::Node node = base;
    for (std::size_t i = 0; i < axes.size(); ++i) node = with_override(node, axes[i].key, combo[i]);
    AblationCell cell;
    cell.values = combo;
    cell.config = config_from_yaml(node);
    cells.push_back(std::move(cell));
  }
  for (auto& cell : cells) {
    cell.outcomes = run_episodes(cell.config, SeededStream(cell.config.run.seed));
    cell.summary = summarize(cell.outcomes);
  }
  return cells;
}

inline std::vector<AblationCell> run_ablate_command(const YAML::Node& root, const std::vector<SweepAxis>& axes,
                                                    const std::map<std::string, std::string>& overrides = {}) {
  const std::string started = utc_timestamp();
  auto cells = run_ablation(root, axes, overrides);
  const ExperimentConfig& first = cells.front().config;
  StagedOutput out(first.run.out);

  CsvSchema schema{{"cell", ColumnType::kInt}};
  for (const auto& a : axes) schema.push_back({a.key, ColumnType::kText});
  const auto ep = episode_schema();
  schema.insert(schema.end(), ep.begin(), ep.end());
  CsvSchema tschema{{"cell", ColumnType::kInt}};
  for (const auto& a : axes) tschema.push_back({a.key, ColumnType::kText});
  const auto ts = timing_schema();
  tschema.insert(tschema.end(), ts.begin(), ts.end());
  CsvSchema aschema{{"cell", ColumnType::kInt}};
  for (const auto& a : axes) aschema.push_back({a.key, ColumnType::kText});
  for (const char* c : {"episodes"}) aschema.push_back({c, ColumnType::kInt});
  for (const char* c : {"success_rate", "reached_rate", "collided_rate", "mean_plan_ms"}) {
    aschema.push_back({c, ColumnType::kReal});
  }

  std::vector<CsvRow> rows, timing, aggregate;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CsvRow prefix{static_cast<long long>(i)};
    for (const auto& v : cells[i].values) prefix.emplace_back(v);
    for (const auto& o : cells[i].outcomes) {
      CsvRow r = prefix;
      for (auto& c : episode_row(o)) r.push_back(std::move(c));
      rows.push_back(std::move(r));
      CsvRow t = prefix;
      for (auto& c : timing_row(o)) t.push_back(std::move(c));
      timing.push_back(std::move(t));
    }
    CsvRow a = prefix;
    const auto& s = cells[i].summary;
    a.emplace_back(static_cast<long long>(s.episodes));
    a.emplace_back(s.success_rate);
    a.emplace_back(s.reached_rate);
    a.emplace_back(s.collided_rate);
    a.emplace_back(s.mean_plan_ms);
    aggregate.push_back(std::move(a));
  }
  write_metrics(rows, schema, out.path("metrics.csv"));
  write_metrics(timing, tschema, out.path("timing.csv"));
  write_metrics(aggregate, aschema, out.path("aggregate.csv"));
  write_text(out.path("config.yaml"), serialize_config(first));

  auto manifest = base_manifest("ablate", first, started);
  nlohmann::json sweep = nlohmann::json::array();
  for (const auto& a : axes) sweep.push_back({{"key", a.key}, {"values", a.values}});
  manifest["sweep"] = sweep;
  manifest["aggregate"] = csv_table_json(aggregate, aschema);
  finish_manifest(out, std::move(manifest));
  return cells;
}

// ---------------------------------------------------------------- geometry

inline PlannerConfig landscape_planner(const ExperimentConfig& cfg, const LandscapeSpec& spec) {
  PlannerConfig p = cfg.planner;
  p.d_vid = spec.dim;
  p.d_val = spec.segments;
  return p;
}

struct GeometryResult {
  DecayCurve curve;
  LandscapeComparison landscape;
};

inline GeometryResult run_geometry(const ExperimentConfig& cfg) {
  const SeededStream root = SeededStream(cfg.run.seed).derive("geometry");
  GeometryResult r;
  r.curve = decay_curve(cfg.geolab, root.derive("decay"));
  const LandscapeSpec spec{cfg.landscape.p, cfg.landscape.dim, 8, 0.0};
  const PlannerConfig p = landscape_planner(cfg, spec);
  r.landscape = one_shot_vs_iterative(spec, static_cast<long long>(p.K) * p.M * p.N, p, cfg.landscape.repetitions,
                                      root.derive("landscape"));
  return r;
}

inline GeometryResult run_geometry_command(const ExperimentConfig& cfg) {
  const std::string started = utc_timestamp();
  StagedOutput out(cfg.run.out);
  GeometryResult r = run_geometry(cfg);

  const CsvSchema decay_schema{{"H", ColumnType::kInt},         {"D", ColumnType::kInt},
                               {"n", ColumnType::kInt},         {"hits", ColumnType::kInt},
                               {"ratio", ColumnType::kReal},    {"ci_low", ColumnType::kReal},
                               {"ci_high", ColumnType::kReal},  {"log_ratio", ColumnType::kReal}};
  const CsvSchema reweight_schema{{"H", ColumnType::kInt},
                                  {"closed_form", ColumnType::kReal},
                                  {"latent_ratio", ColumnType::kReal},
                                  {"latent_ci_low", ColumnType::kReal},
                                  {"latent_ci_high", ColumnType::kReal},
                                  {"reweight", ColumnType::kReal},
                                  {"reweight_is_bound", ColumnType::kInt},
                                  {"reweight_closed_form", ColumnType::kReal}};
  std::vector<CsvRow> decay_rows, reweight_rows;
  nlohmann::json ratio_curve = nlohmann::json::array();
  for (const auto& p : r.curve.points) {
    decay_rows.push_back({static_cast<long long>(p.H), static_cast<long long>(p.D), p.uniform.samples_used,
                          p.uniform.hits, p.uniform.ratio, p.uniform.ci_low, p.uniform.ci_high, p.log_ratio});
    reweight_rows.push_back({static_cast<long long>(p.H), p.closed_form, p.latent.ratio, p.latent.ci_low,
                             p.latent.ci_high, p.reweight, static_cast<long long>(p.reweight_is_bound),
                             p.reweight_closed_form});
    ratio_curve.push_back({{"H", p.H}, {"reweight", p.reweight}, {"is_bound", p.reweight_is_bound}});
  }
  write_metrics(decay_rows, decay_schema, out.path("decay.csv"));
  write_metrics(reweight_rows, reweight_schema, out.path("reweight.csv"));
  const nlohmann::json summary{{"slope", r.curve.fit.slope},
                               {"intercept", r.curve.fit.intercept},
                               {"r_squared", r.curve.fit.r_squared},
                               {"fitted_points", r.curve.fitted_points},
                               {"ratio_curve", ratio_curve}};
  write_text(out.path("decay_summary.json"), summary.dump(2) + "\n");
  const auto& L = r.landscape;
  const nlohmann::json land{{"p", cfg.landscape.p},
                            {"threshold", L.threshold},
                            {"budget", L.budget},
                            {"repetitions", cfg.landscape.repetitions},
                            {"analytic_one_shot", L.analytic_one_shot},
                            {"one_shot", {{"hits", L.one_shot.hits}, {"rate", L.one_shot.rate},
                                          {"ci_low", L.one_shot.ci.low}, {"ci_high", L.one_shot.ci.high}}},
                            {"iterative", {{"hits", L.iterative.hits}, {"rate", L.iterative.rate},
                                           {"ci_low", L.iterative.ci.low}, {"ci_high", L.iterative.ci.high}}}};
  write_text(out.path("landscape.json"), land.dump(2) + "\n");
  write_text(out.path("config.yaml"), serialize_config(cfg));
  auto manifest = base_manifest("geometry", cfg, started);
  manifest["decay"] = summary;
  manifest["landscape"] = land;
  finish_manifest(out, std::move(manifest));
  return r;
}

// ---------------------------------------------------------------- train-flow

inline StagedFlow run_train_flow_command(const ExperimentConfig& cfg) {
  const std::string started = utc_timestamp();
  StagedOutput out(cfg.run.out);
  const SeededStream root = SeededStream(cfg.run.seed).derive("flow");
  const auto data = make_flow_dataset(cfg.world, cfg.evaluator(), cfg.flow, root.derive("data"));
  StagedFlow flow = train_staged(data, cfg.flow, root.derive("train"));
  const std::uint64_t hash = fnv1a64(serialize_config(cfg));
  std::vector<CsvRow> rows;
  nlohmann::json stages = nlohmann::json::array();
  for (FlowStage s : {FlowStage::kVideo, FlowStage::kValue, FlowStage::kAction}) {
    const auto i = static_cast<std::size_t>(s);
    save_field(flow.fields[i], out.path(stage_name(s)), hash);
    const auto& losses = flow.losses[i];
    for (std::size_t k = 0; k < losses.size(); ++k) {
      rows.push_back({std::string(stage_name(s)), static_cast<long long>(k), losses[k]});
    }
    stages.push_back({{"stage", stage_name(s)},
                      {"first_loss", losses.front()},
                      {"last_loss", losses.back()},
                      {"dim_cond", flow.fields[i].dim_cond()},
                      {"dim_x", flow.fields[i].dim_x()}});
  }
  write_metrics(rows, {{"stage", ColumnType::kText}, {"step", ColumnType::kInt}, {"loss", ColumnType::kReal}},
                out.path("losses.csv"));
  write_text(out.path("config.yaml"), serialize_config(cfg));
  auto manifest = base_manifest("train-flow", cfg, started);
  manifest["stages"] = stages;
  manifest["config_hash"] = hash;
  finish_manifest(out, std::move(manifest));
  return flow;
}

// ---------------------------------------------------------------- reward-check

inline CsvSchema reward_schema() {
  CsvSchema s{{"t", ColumnType::kInt}};
  for (int i = 1; i <= 9; ++i) s.push_back({"c" + std::to_string(i), ColumnType::kReal});
  for (int i = 1; i <= 9; ++i) s.push_back({"w" + std::to_string(i), ColumnType::kReal});
  s.push_back({"table_total", ColumnType::kReal});
  s.push_back({"collision", ColumnType::kInt});
  s.push_back({"shaped_total", ColumnType::kReal});
  return s;
}

/// Per-step reward table for one prior trajectory (stream "reward-check").
inline std::vector<CsvRow> reward_rows(const ExperimentConfig& cfg) {
  const Vector z = gaussian_sample_one(DiagonalGaussian::standard(cfg.world.latent_dim()),
                                       SeededStream(cfg.run.seed).derive("reward-check"));
  const Trajectory traj = decode_knots(z, cfg.world);
  const auto steps = step_rewards(traj, cfg.world, cfg.valuation.weights);
  std::vector<CsvRow> rows;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    CsvRow r{static_cast<long long>(t)};
    for (double c : steps[t].breakdown.terms) r.emplace_back(c);
    for (double w : steps[t].breakdown.weighted) r.emplace_back(w);
    r.emplace_back(steps[t].breakdown.total);
    r.emplace_back(static_cast<long long>(steps[t].collision));
    r.emplace_back(steps[t].total);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<CsvRow> run_reward_check_command(const ExperimentConfig& cfg) {
  const std::string started = utc_timestamp();
  StagedOutput out(cfg.run.out);
  auto rows = reward_rows(cfg);
  write_metrics(rows, reward_schema(), out.path("rewards.csv"));
  write_text(out.path("config.yaml"), serialize_config(cfg));
  finish_manifest(out, base_manifest("reward-check", cfg, started));
  return rows;
}

}  // namespace wav
