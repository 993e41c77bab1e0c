#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cotdr/correlator.hpp"
#include "cotdr/delay_protocol.hpp"
#include "cotdr/error_budget.hpp"
#include "cotdr/scenario.hpp"

namespace cotdr {

/// Scenario-side facts written next to a measurement.
struct ReportContext {
  std::string scenario;
  Campaign campaign = Campaign::link;
  std::uint64_t seed = 0;
  ClockSettings clock;
  /// Simulation ground truth in true seconds.
  std::optional<double> truth_total;
  std::optional<double> truth_asymmetry;
  std::optional<double> asymmetry_bound;
};

/// Closed-form budget for a scenario, no simulation.
struct BudgetEstimate {
  double delay = 0.0;  // nominal one-way delay the terms scale with
  ErrorBudget budget;
  std::optional<double> asymmetry;
  std::optional<double> asymmetry_bound;
};

/// Nearest integer number of femtoseconds.
std::int64_t to_femtoseconds(double seconds);

/// Report JSON: sections[], totals, clock, error_budget, steps[]. Times
/// are integer femtoseconds. The total is written as the sum of the
/// written section values so the identity holds on the file itself.
std::string report_json(const MeasurementReport& report, const ReportContext& context);
std::string report_csv(const MeasurementReport& report, const ReportContext& context);

std::string budget_json(const BudgetEstimate& estimate, const ReportContext& context);
std::string budget_csv(const BudgetEstimate& estimate);

/// Two columns, lag_ps and value. Lags are exact integers when the sample
/// period is a whole number of picoseconds.
std::string trace_csv(const CorrelationTrace& trace);

/// The fitted lobe sampled `upsample` times finer than the trace over the
/// fit window, same columns as trace_csv.
std::string fitted_curve_csv(const CorrelationTrace& trace, const PeakFit& fit, int upsample = 10);

/// Filesystem-safe name for a step/echo pair.
std::string trace_file_stem(const std::string& step, const std::string& echo);

}  // namespace cotdr
