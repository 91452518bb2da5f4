#include <gtu/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Worst-case option pricing under volatility and correlation bands"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_path, format;
  std::string seed, jobs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Configuration file (key = value lines)");
    cmd->add_option("--set", overrides, "Override one key, e.g. --set algo.N=32")
        ->take_all()
        ->expected(-1);
    cmd->add_option("--out", out_path, "Output file path (default: standard output)");
    cmd->add_option("--format", format, "Output format: csv or json");
    cmd->add_option("--seed", seed, "Random seed for branch subsampling and path states");
    cmd->add_option("--jobs", jobs, "Worker threads for the per-slice state loop");
  };
  CLI::App* price = app.add_subcommand("price", "Price one configuration");
  CLI::App* sweep = app.add_subcommand("sweep", "Price a grid of N and P values");
  CLI::App* bench = app.add_subcommand("bench", "Price and compare against the benchmark");
  add_common(price);
  add_common(sweep);
  add_common(bench);

  CLI11_PARSE(app, argc, argv);
  const std::string mode = app.get_subcommands().front()->get_name();

  gtu::ConfigMap cfg;
  try {
    if (!config_path.empty()) cfg = gtu::parse_config_file(config_path);
    for (const std::string& spec : overrides) gtu::apply_override(cfg, spec);
    if (!out_path.empty()) cfg["output.path"] = out_path;
    if (!format.empty()) cfg["output.format"] = format;
    if (!seed.empty()) gtu::apply_override(cfg, "algo.seed=" + seed);
    if (!jobs.empty()) gtu::apply_override(cfg, "algo.threads=" + jobs);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  return gtu::run_command(mode, cfg, std::cerr);
}
