#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cotdr/delay_protocol.hpp"
#include "cotdr/report.hpp"
#include "cotdr/scenario.hpp"

namespace cotdr {

enum ExitCode : int {
  exit_ok = 0,
  exit_validation = 2,
  exit_measurement = 3,
  exit_io = 4,
};

struct RunOptions {
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  std::optional<bool> emit_traces;
  std::optional<ReportFormat> format;
};

struct RunResult {
  int exit_code = exit_ok;
  std::filesystem::path report_path;
  std::string message;  // summary on success, diagnostic otherwise
};

struct CampaignOutcome {
  MeasurementReport report;
  ReportContext context;
};

/// Closed-form terms for the scenario's target quantity.
BudgetEstimate closed_form_budget(const Scenario& scenario);

/// Simulates and measures the scenario's campaign. Throws MeasurementError.
/// Not for error_budget campaigns.
CampaignOutcome execute(const Scenario& scenario, bool keep_traces = false);

/// Runs one scenario and writes `<name>.report.<format>` (plus
/// `<name>.traces/` when traces are requested) under out_dir.
RunResult run(Scenario scenario, const RunOptions& options);
RunResult run_file(const std::filesystem::path& path, const RunOptions& options);

/// Independent scenarios on up to `jobs` threads. Results in input order.
std::vector<RunResult> run_batch(const std::vector<std::filesystem::path>& paths, const RunOptions& options,
                                 unsigned jobs);

}  // namespace cotdr
