#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "svl/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> maze;
  std::optional<std::string> estimator;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run configuration file");
  cmd->add_option("--seed", o.seed, "override run.seed");
  cmd->add_option("--out", o.out, "override run.out_dir");
  cmd->add_option("--maze", o.maze, "override run.maze");
  cmd->add_option("--estimator", o.estimator, "override run.estimator")
      ->check(CLI::IsMember({"finite", "pch", "pcs"}));
}

svl::RunConfig resolve(const Overrides& o) {
  svl::RunConfig cfg = o.config.empty() ? svl::RunConfig{} : svl::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.maze) cfg.maze = *o.maze;
  if (o.estimator) cfg.estimator = svl::parse_estimator(*o.estimator);
  cfg.validate();
  return cfg;
}

void print_eval(const svl::EvalSummary& s) {
  std::cout << svl::to_string(s.estimator) << ": mean relative value error " << s.mean_relative_error
            << ", behavior success " << s.behavior_success << ", policy success " << s.policy_success
            << " over " << s.episodes << " episodes\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survival value learning experiments"};
  app.require_subcommand(1);
  Overrides o;
  auto* generate = app.add_subcommand("generate", "write a relabeled tuple dataset and manifest");
  auto* train = app.add_subcommand("train", "fit the hazard model to the dataset");
  auto* evaluate = app.add_subcommand("evaluate", "value error and policy success of a checkpoint");
  auto* scaling = app.add_subcommand("scaling", "MLE error versus sample size sweep");
  auto* end2end = app.add_subcommand("end2end", "generate, train and evaluate in one run");
  auto* print = app.add_subcommand("print-config", "print the resolved configuration");
  for (auto* cmd : {generate, train, evaluate, scaling, end2end, print}) add_common(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  svl::RunConfig cfg;
  try {
    cfg = resolve(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*print) {
      std::cout << svl::serialize_config(cfg);
    } else if (*generate) {
      const auto s = svl::cmd_generate(cfg);
      std::cout << "wrote " << s.tuples << " tuples from " << s.trajectories << " trajectories to "
                << cfg.out_dir << "\n";
    } else if (*train) {
      const auto s = svl::cmd_train(cfg, cfg.estimator);
      std::cout << "final train nll " << s.trace.back().train_nll << "\n";
    } else if (*evaluate) {
      print_eval(svl::cmd_evaluate(cfg, cfg.estimator));
    } else if (*scaling) {
      const auto s = svl::cmd_scaling(cfg);
      std::cout << "log-log slope " << s.slope << " (censoring ignored: " << s.ignored_slope << ")\n";
    } else if (*end2end) {
      for (const auto& e : svl::cmd_end2end(cfg).evaluations) print_eval(e);
    }
  } catch (const svl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
