// wavctl: planning episodes, ablation sweeps, geometry experiments, staged
// flow training and reward dumps.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wav/harness/experiments.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "YAML config file (missing keys take defaults)");
  cmd->add_option("--seed", f.seed, "master seed (overrides run.seed)");
  cmd->add_option("--out", f.out, "output directory (overrides run.out)");
  cmd->add_option("--workers", f.workers, "worker threads (overrides run.workers)")->check(CLI::PositiveNumber);
}

YAML::Node config_node(const CommonFlags& f) {
  YAML::Node node = f.config.empty() ? YAML::Node(YAML::NodeType::Map) : wav::load_config_node(f.config);
  if (f.seed) node = wav::with_override(node, "run.seed", std::to_string(*f.seed));
  if (f.out) node = wav::with_override(node, "run.out", "'" + *f.out + "'");
  if (f.workers) node = wav::with_override(node, "run.workers", std::to_string(*f.workers));
  return node;
}

void print_summary(const std::string& label, const wav::EpisodeSummary& s) {
  std::cout << label << "episodes=" << s.episodes << " success=" << s.success_rate << " reached=" << s.reached_rate
            << " collided=" << s.collided_rate << " plan_ms=" << s.mean_plan_ms << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent trajectory planning experiments"};
  app.require_subcommand(1);

  CommonFlags plan_f, ablate_f, geo_f, flow_f, reward_f;
  std::vector<std::string> sweeps;
  auto* plan = app.add_subcommand("plan", "run seeded planning episodes on the point-mass world");
  add_common(plan, plan_f);
  auto* ablate = app.add_subcommand("ablate", "sweep planner settings over seeded episodes");
  add_common(ablate, ablate_f);
  ablate->add_option("--sweep", sweeps, "KEY=V1,V2,... (repeatable; KEY defaults to the planner section)")
      ->required();
  auto* geometry = app.add_subcommand("geometry", "feasible-mass decay and one-shot vs iterative search");
  add_common(geometry, geo_f);
  auto* train = app.add_subcommand("train-flow", "train the video, value and action fields in order");
  add_common(train, flow_f);
  auto* reward = app.add_subcommand("reward-check", "dump per-step reward terms for one prior trajectory");
  add_common(reward, reward_f);

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) {
      const auto cfg = wav::config_from_yaml(config_node(plan_f));
      print_summary("plan: ", wav::run_plan_command(cfg));
      std::cout << "wrote " << cfg.run.out << '\n';
    } else if (ablate->parsed()) {
      std::vector<wav::SweepAxis> axes;
      for (const auto& s : sweeps) axes.push_back(wav::parse_sweep(s));
      const auto cells = wav::run_ablate_command(config_node(ablate_f), axes);
      for (const auto& c : cells) {
        std::string label;
        for (std::size_t i = 0; i < axes.size(); ++i) label += axes[i].key + "=" + c.values[i] + " ";
        print_summary(label, c.summary);
      }
      std::cout << "wrote " << cells.front().config.run.out << '\n';
    } else if (geometry->parsed()) {
      const auto cfg = wav::config_from_yaml(config_node(geo_f));
      const auto r = wav::run_geometry_command(cfg);
      for (const auto& p : r.curve.points) {
        std::cout << "H=" << p.H << " D=" << p.D << " ratio=" << p.uniform.ratio << " closed_form=" << p.closed_form
                  << " reweight=" << (p.reweight_is_bound ? ">=" : "") << p.reweight << '\n';
      }
      std::cout << "slope=" << r.curve.fit.slope << " r_squared=" << r.curve.fit.r_squared << '\n';
      std::cout << "one_shot=" << r.landscape.one_shot.rate << " (analytic " << r.landscape.analytic_one_shot
                << ") iterative=" << r.landscape.iterative.rate << '\n';
      std::cout << "wrote " << cfg.run.out << '\n';
    } else if (train->parsed()) {
      const auto cfg = wav::config_from_yaml(config_node(flow_f));
      const auto flow = wav::run_train_flow_command(cfg);
      for (wav::FlowStage s : {wav::FlowStage::kVideo, wav::FlowStage::kValue, wav::FlowStage::kAction}) {
        const auto& l = flow.losses[static_cast<std::size_t>(s)];
        std::cout << wav::stage_name(s) << ": loss " << l.front() << " -> " << l.back() << '\n';
      }
      std::cout << "wrote " << cfg.run.out << '\n';
    } else if (reward->parsed()) {
      const auto cfg = wav::config_from_yaml(config_node(reward_f));
      const auto rows = wav::run_reward_check_command(cfg);
      std::cout << "steps=" << rows.size() << '\n' << "wrote " << cfg.run.out << '\n';
    }
  } catch (const wav::ConfigError& e) {
    std::cerr << "config error [" << e.key() << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
