// Command-line entry point: preprocess, train, evaluate, analyze.
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "nri/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string log_level = "info";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config (JSON)")->required();
  cmd->add_option("-s,--set", c.overrides, "override a config key, e.g. --set train.epochs=10")->take_all();
  cmd->add_option("--log-level", c.log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
}

std::vector<std::size_t> parse_horizons(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw nri::ConfigError("bad horizon '" + part + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural relational inference for spatio-temporal forecasting"};
  app.require_subcommand(1);

  Common common;
  bool resume = false;
  nri::EvaluateOptions eval;
  std::string eval_checkpoint, horizons;
  nri::AnalyzeOptions analyze;
  std::string analyze_checkpoint, focal;

  auto* pre = app.add_subcommand("preprocess", "build the dataset container and adjacency files");
  add_common(pre, common);

  auto* tr = app.add_subcommand("train", "pretrain the encoder, train, keep the best checkpoint");
  add_common(tr, common);
  tr->add_flag("--resume", resume, "continue from the last checkpoint of this config");

  auto* ev = app.add_subcommand("evaluate", "per-horizon metrics in original units");
  add_common(ev, common);
  ev->add_option("--split", eval.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--horizons", horizons, "comma-separated 1-based steps, default 1..Q");
  ev->add_option("--checkpoint", eval_checkpoint, "checkpoint file, default the run's best");
  ev->add_flag("--force", eval.force, "load a checkpoint written for a different config");

  auto* an = app.add_subcommand("analyze", "learned-graph analytics over every window");
  add_common(an, common);
  an->add_option("--theta", analyze.theta, "edge probability threshold");
  an->add_option("--focal", focal, "node id to tag edges in/out against");
  an->add_option("--clusters", analyze.clusters, "number of clusters");
  an->add_option("--checkpoint", analyze_checkpoint, "checkpoint file, default the run's best");
  an->add_flag("--force", analyze.force, "load a checkpoint written for a different config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(common.log_level));
    const nri::ExperimentConfig config = nri::load_config(common.config, common.overrides);
    if (pre->parsed()) {
      nri::run_preprocess(config, std::cout);
    } else if (tr->parsed()) {
      nri::run_train(config, resume, std::cout);
    } else if (ev->parsed()) {
      if (!eval_checkpoint.empty()) eval.checkpoint = eval_checkpoint;
      if (!horizons.empty()) eval.horizons = parse_horizons(horizons);
      nri::run_evaluate(config, eval, std::cout);
    } else if (an->parsed()) {
      if (!analyze_checkpoint.empty()) analyze.checkpoint = analyze_checkpoint;
      if (!focal.empty()) analyze.focal = focal;
      nri::run_analyze(config, analyze, std::cout);
    }
  } catch (const nri::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const nri::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const nri::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}
