#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "rfmia/errors.hpp"
#include "rfmia/experiment.hpp"

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  bool force = false;
  bool smoke = false;
};

rfmia::ExperimentConfig build_config(const Options& o) {
  nlohmann::json tree;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw rfmia::ConfigError("cannot open config " + o.config_path);
    tree = nlohmann::json::parse(in, nullptr, false);
    if (tree.is_discarded()) throw rfmia::ConfigError("config " + o.config_path + " is not valid JSON");
  } else {
    tree = (o.smoke ? rfmia::smoke_config() : rfmia::ExperimentConfig{}).to_json();
  }
  for (const auto& kv : o.overrides) rfmia::apply_override(tree, kv);
  if (!o.output_dir.empty()) tree["output_dir"] = o.output_dir;
  return rfmia::ExperimentConfig::from_json(tree);
}

int run_stage(const Options& o, rfmia::Stage stage) {
  rfmia::ExperimentConfig cfg;
  try {
    cfg = build_config(o);
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return 2;
  }
  rfmia::RunOptions opts;
  opts.until = stage;
  opts.force = o.force;
  try {
    const auto report = rfmia::run_experiment(cfg, opts);
    for (const auto& s : report.stages) {
      std::cout << s.name << ": " << s.status;
      if (!s.error.empty()) std::cout << " (" << s.error << ")";
      std::cout << "\n";
    }
    std::cout << "summary: " << (report.dir / "summary.json").string() << "\n";
    if (!report.ok()) {
      std::cerr << "stage " << *report.failed_stage << " failed\n";
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "stage " << rfmia::stage_name(stage) << " failed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rectified-flow membership inference toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rfmia::kToolkitVersion));

  Options opts;
  bool show_config = false;
  struct Command {
    const char* name;
    const char* help;
    rfmia::Stage stage;
  };
  const Command commands[] = {
      {"gen-data", "Generate and save the member/nonmember dataset", rfmia::Stage::Data},
      {"train", "Train one model per sampler variant", rfmia::Stage::Train},
      {"attack", "Score the dataset with every configured attack", rfmia::Stage::Attack},
      {"sweep-t", "AUC and TPR@1%FPR over the t grid per statistic", rfmia::Stage::SweepT},
      {"sweep-nmc", "AUC of T_mc and T_mc_cal for each Monte Carlo count", rfmia::Stage::SweepNmc},
      {"lmmse-gap", "Linearity gap against the LMMSE baseline over t", rfmia::Stage::LmmseGap},
      {"likelihood", "Log-likelihood versus complexity on nonmembers", rfmia::Stage::Likelihood},
      {"compare-samplers", "Peak AUC and MMD over checkpoints per sampler", rfmia::Stage::CompareSamplers},
      {"report", "Run every stage and write the summary", rfmia::Stage::Report},
  };
  std::vector<std::pair<CLI::App*, rfmia::Stage>> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", opts.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", opts.overrides, "Override a config key, e.g. training.steps=500");
    sub->add_option("-o,--out", opts.output_dir, "Output directory (relative paths go under $RFMIA_OUTPUT_ROOT)");
    sub->add_flag("--force", opts.force, "Recompute stages whose artifacts already exist");
    sub->add_flag("--smoke", opts.smoke, "Start from the small smoke-test config instead of the benchmark");
    subs.emplace_back(sub, c.stage);
  }
  CLI::App* print = app.add_subcommand("print-config", "Print the resolved config and its hash");
  print->add_option("-c,--config", opts.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  print->add_option("-s,--set", opts.overrides, "Override a config key");
  print->add_flag("--smoke", opts.smoke, "Start from the smoke-test config");
  print->callback([&] { show_config = true; });

  CLI11_PARSE(app, argc, argv);

  if (show_config) {
    try {
      const auto cfg = build_config(opts);
      std::cout << cfg.to_json().dump(2) << "\nhash " << cfg.hash() << "\n";
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "config: " << e.what() << "\n";
      return 2;
    }
  }
  for (const auto& [sub, stage] : subs) {
    if (sub->parsed()) return run_stage(opts, stage);
  }
  return 2;
}
