#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cotdr/report.hpp"
#include "cotdr/runner.hpp"
#include "cotdr/scenario.hpp"

namespace {

int report_load_error(const std::string& path, const cotdr::ScenarioError& e) {
  std::cerr << "cotdr: " << path << ": " << e.what() << '\n';
  return e.kind() == cotdr::ScenarioError::Kind::io ? cotdr::exit_io : cotdr::exit_validation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlation-OTDR link delay simulator and measurement runner"};
  app.require_subcommand(1);

  std::vector<std::string> run_paths;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  bool emit_traces = false;
  std::string format;
  unsigned jobs = 1;
  auto* run = app.add_subcommand("run", "simulate and measure one or more scenarios");
  run->add_option("scenario", run_paths, "scenario JSON file(s)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "override the scenario's measurement seed");
  run->add_flag("--emit-traces", emit_traces, "write correlation traces and fitted curves as CSV");
  run->add_option("--format", format, "report format")->check(CLI::IsMember({"json", "csv"}));
  run->add_option("--jobs", jobs, "scenarios to run concurrently")->check(CLI::PositiveNumber);

  std::string validate_path;
  bool print_resolved = false;
  auto* validate = app.add_subcommand("validate", "load and check a scenario");
  validate->add_option("scenario", validate_path, "scenario JSON file")->required();
  validate->add_flag("--resolved", print_resolved, "print the scenario with every default filled in");

  std::string budget_path;
  std::string budget_format = "json";
  auto* budget = app.add_subcommand("budget", "closed-form error budget, no simulation");
  budget->add_option("scenario", budget_path, "scenario JSON file")->required();
  budget->add_option("--format", budget_format, "output format")->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cotdr::exit_ok : cotdr::exit_validation;
  }

  if (*run) {
    cotdr::RunOptions options;
    options.out_dir = out_dir;
    options.seed_override = seed;
    if (emit_traces) options.emit_traces = true;
    if (!format.empty()) options.format = format == "csv" ? cotdr::ReportFormat::csv : cotdr::ReportFormat::json;
    std::vector<std::filesystem::path> paths(run_paths.begin(), run_paths.end());
    const auto results = cotdr::run_batch(paths, options, jobs);
    int status = cotdr::exit_ok;
    for (const auto& r : results) {
      if (r.exit_code == cotdr::exit_ok) {
        std::cout << r.message << " -> " << r.report_path.string() << '\n';
      } else {
        std::cerr << "cotdr: " << r.message << '\n';
        status = std::max(status, r.exit_code);
      }
    }
    return status;
  }

  if (*validate) {
    try {
      const auto sc = cotdr::load_scenario(validate_path);
      if (print_resolved) {
        std::cout << cotdr::serialize(sc);
      } else {
        std::cout << validate_path << ": ok (" << cotdr::to_string(sc.campaign) << ", " << sc.topology.sections.size()
                  << " sections)\n";
      }
      return cotdr::exit_ok;
    } catch (const cotdr::ScenarioError& e) {
      return report_load_error(validate_path, e);
    }
  }

  try {
    const auto sc = cotdr::load_scenario(budget_path);
    const auto estimate = cotdr::closed_form_budget(sc);
    if (budget_format == "csv") {
      std::cout << cotdr::budget_csv(estimate);
    } else {
      const cotdr::ReportContext ctx{sc.name, sc.campaign, sc.measurement.seed, sc.clock, {}, {}, {}};
      std::cout << cotdr::budget_json(estimate, ctx);
    }
    return cotdr::exit_ok;
  } catch (const cotdr::ScenarioError& e) {
    return report_load_error(budget_path, e);
  }
}
