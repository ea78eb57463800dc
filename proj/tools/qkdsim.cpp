// qkdsim — seeded Monte-Carlo QKD session simulator.
//
// Subcommands:
//   run      execute an experiment config (trials of bb84/sarg04/e91/agm06)
//   replay   run a BB84 walkthrough from explicit bit/basis sequences
//   validate parse a config and echo its canonical form
//
// Exit status: 0 key established, 2 aborted (eavesdropping suspected),
// 1 usage or config error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qkd/config.hpp"
#include "qkd/experiment.hpp"
#include "qkd/report.hpp"
#include "qkd/version.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw qkd::ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

qkd::ReportFormat parse_format(const std::string& name) {
  if (name == "json-lines") return qkd::ReportFormat::json_lines;
  if (name == "csv") return qkd::ReportFormat::csv;
  if (name == "human") return qkd::ReportFormat::human;
  throw qkd::ConfigError("format: expected json-lines, csv or human");
}

int write_output(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write output file: " << out_path << "\n";
    return 1;
  }
  out << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seeded Monte-Carlo simulator for QKD sessions"};
  app.set_version_flag("--version", std::string("qkdsim ") + qkd::kVersion);
  app.require_subcommand(1);

  std::string config_path, out_path, format_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> trials_override;
  std::size_t jobs = 1;

  CLI::App* run = app.add_subcommand("run", "execute an experiment config");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed_override, "override the config seed");
  run->add_option("--trials", trials_override, "override the trial count");
  run->add_option("--format", format_override, "json-lines | csv | human");
  run->add_option("--out", out_path, "output path (default stdout)");
  run->add_option("--jobs", jobs, "worker threads for trials")->check(CLI::PositiveNumber);

  CLI::App* replay = app.add_subcommand("replay", "replay explicit bb84 sequences");
  replay->add_option("--config", config_path, "replay script (JSON)")->required();
  replay->add_option("--format", format_override, "json-lines | csv | human");
  replay->add_option("--out", out_path, "output path (default stdout)");

  CLI::App* validate = app.add_subcommand("validate", "check a config and echo it");
  validate->add_option("--config", config_path, "experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      qkd::ExperimentConfig cfg = qkd::parse_config_text(read_file(config_path));
      if (seed_override) cfg.seed = *seed_override;
      if (trials_override) cfg.trials = *trials_override;
      if (!format_override.empty()) cfg.format = parse_format(format_override);
      cfg.validate();
      const qkd::RunReport report = qkd::run_experiment(cfg, jobs);
      const std::string text = qkd::emit_report_string(report, cfg.format);
      const int io_status = write_output(text, out_path);
      if (io_status != 0) return io_status;
      return qkd::report_exit_code(report);
    }
    if (replay->parsed()) {
      const qkd::ReplayFile file = qkd::parse_replay(
          nlohmann::json::parse(read_file(config_path)));
      qkd::ReportFormat format = qkd::ReportFormat::human;
      if (!format_override.empty()) format = parse_format(format_override);
      const qkd::TrialOutcome outcome = qkd::run_replay(file);
      std::ostringstream ss;
      qkd::emit_replay(outcome.record, outcome.decision, format, ss);
      const int io_status = write_output(ss.str(), out_path);
      if (io_status != 0) return io_status;
      return outcome.decision == qkd::Decision::proceed ? 0 : 2;
    }
    if (validate->parsed()) {
      const qkd::ExperimentConfig cfg = qkd::parse_config_text(read_file(config_path));
      std::cout << qkd::config_echo(cfg).dump(2) << "\n";
      return 0;
    }
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
