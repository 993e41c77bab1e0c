#include "cotdr/report.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace cotdr {

namespace {

using json = nlohmann::ordered_json;

// Shortest representation that reads back to the same double.
std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Sample period in whole picoseconds, if it is one.
std::optional<std::int64_t> whole_picoseconds(double period) {
  const double ps = period * 1e12;
  const double rounded = std::round(ps);
  if (rounded >= 1.0 && std::abs(ps - rounded) <= 1e-9 * rounded) return static_cast<std::int64_t>(rounded);
  return std::nullopt;
}

// numerator / 10^digits as an exact decimal.
std::string decimal(std::int64_t numerator, int digits) {
  if (digits == 0) return std::to_string(numerator);
  std::int64_t scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  const bool negative = numerator < 0;
  const std::int64_t magnitude = negative ? -numerator : numerator;
  std::string frac = std::to_string(magnitude % scale);
  frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
  return (negative ? "-" : "") + std::to_string(magnitude / scale) + "." + frac;
}

int decimal_digits(int n) {
  int digits = 0;
  while (n > 1 && n % 10 == 0) {
    n /= 10;
    ++digits;
  }
  return n == 1 ? digits : -1;
}

json clock_json(const ClockSettings& clock) {
  std::ostringstream d;
  d << "receiver clock offset " << clock.offset_ppb << " ppb, jitter " << to_femtoseconds(clock.jitter_rms)
    << " fs rms; measured delays are in receiver-clock seconds";
  return {{"offset_ppb", clock.offset_ppb},
          {"fractional_offset", clock.model().fractional_offset},
          {"jitter_rms_fs", to_femtoseconds(clock.jitter_rms)},
          {"seed", clock.seed},
          {"description", d.str()}};
}

json budget_terms(const ErrorBudget& b) {
  return {{"combination", "rss of independent terms, a bound"},
          {"clock_term_fs", to_femtoseconds(b.clock_term)},
          {"temperature_term_fs", to_femtoseconds(b.temperature_term)},
          {"fit_term_fs", to_femtoseconds(b.fit_term)},
          {"total_rss_fs", to_femtoseconds(b.total_rss)}};
}

json header(const ReportContext& context) {
  json out;
  out["scenario"] = context.scenario;
  out["campaign"] = to_string(context.campaign);
  out["seed"] = context.seed;
  out["clock"] = clock_json(context.clock);
  return out;
}

std::int64_t written_total(const MeasurementReport& report) {
  if (report.sections.empty()) return to_femtoseconds(report.total_one_way);
  std::int64_t sum = 0;
  for (const auto& s : report.sections) sum += to_femtoseconds(s.one_way_delay);
  return sum;
}

}  // namespace

std::int64_t to_femtoseconds(double seconds) { return std::llround(seconds * 1e15); }

std::string report_json(const MeasurementReport& report, const ReportContext& context) {
  json out = header(context);
  json sections = json::array();
  for (const auto& s : report.sections) {
    sections.push_back({{"section_id", s.section_id},
                        {"kind", to_string(s.kind)},
                        {"source", to_string(s.source)},
                        {"one_way_delay_fs", to_femtoseconds(s.one_way_delay)},
                        {"uncertainty_fs", to_femtoseconds(s.uncertainty)}});
  }
  out["sections"] = std::move(sections);
  json totals;
  totals["total_one_way_fs"] = written_total(report);
  totals["asymmetry_fs"] = report.asymmetry ? json(to_femtoseconds(*report.asymmetry)) : json(nullptr);
  if (context.asymmetry_bound) totals["asymmetry_bound_fs"] = to_femtoseconds(*context.asymmetry_bound);
  out["totals"] = std::move(totals);
  out["error_budget"] = budget_terms(report.error_budget);
  json truth;
  if (context.truth_total) truth["total_one_way_fs"] = to_femtoseconds(*context.truth_total);
  if (context.truth_asymmetry) truth["asymmetry_fs"] = to_femtoseconds(*context.truth_asymmetry);
  out["truth"] = truth.is_null() ? json::object() : truth;

  json steps = json::array();
  for (const auto& step : report.steps) {
    json echoes = json::array();
    for (const auto& e : step.echoes) {
      echoes.push_back({{"label", e.label},
                        {"delay_fs", to_femtoseconds(e.estimate.delay)},
                        {"uncertainty_fs", to_femtoseconds(e.estimate.uncertainty)},
                        {"width_fs", to_femtoseconds(e.estimate.width)},
                        {"amplitude", e.estimate.amplitude},
                        {"fit_residual", e.estimate.fit_residual},
                        {"iterations", e.fit.iterations}});
    }
    steps.push_back({{"name", step.name},
                     {"site", step.site},
                     {"sw1", step.switches.sw1},
                     {"sw2", step.switches.sw2},
                     {"echoes", std::move(echoes)}});
  }
  out["steps"] = std::move(steps);
  return out.dump(2) + "\n";
}

std::string report_csv(const MeasurementReport& report, const ReportContext& context) {
  std::ostringstream out;
  out << "item,kind,source,value_fs,uncertainty_fs\n";
  for (const auto& s : report.sections) {
    out << "section" << s.section_id << ',' << to_string(s.kind) << ',' << to_string(s.source) << ','
        << to_femtoseconds(s.one_way_delay) << ',' << to_femtoseconds(s.uncertainty) << '\n';
  }
  out << "total_one_way,,," << written_total(report) << ",\n";
  if (report.asymmetry) out << "asymmetry,,," << to_femtoseconds(*report.asymmetry) << ",\n";
  if (context.asymmetry_bound) out << "asymmetry_bound,,," << to_femtoseconds(*context.asymmetry_bound) << ",\n";
  const auto& b = report.error_budget;
  out << "clock_term,,," << to_femtoseconds(b.clock_term) << ",\n";
  out << "temperature_term,,," << to_femtoseconds(b.temperature_term) << ",\n";
  out << "fit_term,,," << to_femtoseconds(b.fit_term) << ",\n";
  out << "total_rss,,," << to_femtoseconds(b.total_rss) << ",\n";
  return out.str();
}

std::string budget_json(const BudgetEstimate& estimate, const ReportContext& context) {
  json out = header(context);
  out["nominal_delay_fs"] = to_femtoseconds(estimate.delay);
  out["error_budget"] = budget_terms(estimate.budget);
  if (estimate.asymmetry) out["nominal_asymmetry_fs"] = to_femtoseconds(*estimate.asymmetry);
  if (estimate.asymmetry_bound) out["asymmetry_bound_fs"] = to_femtoseconds(*estimate.asymmetry_bound);
  return out.dump(2) + "\n";
}

std::string budget_csv(const BudgetEstimate& estimate) {
  std::ostringstream out;
  out << "item,value_fs\n";
  out << "nominal_delay," << to_femtoseconds(estimate.delay) << '\n';
  if (estimate.asymmetry) out << "nominal_asymmetry," << to_femtoseconds(*estimate.asymmetry) << '\n';
  if (estimate.asymmetry_bound) out << "asymmetry_bound," << to_femtoseconds(*estimate.asymmetry_bound) << '\n';
  out << "clock_term," << to_femtoseconds(estimate.budget.clock_term) << '\n';
  out << "temperature_term," << to_femtoseconds(estimate.budget.temperature_term) << '\n';
  out << "fit_term," << to_femtoseconds(estimate.budget.fit_term) << '\n';
  out << "total_rss," << to_femtoseconds(estimate.budget.total_rss) << '\n';
  return out.str();
}

std::string trace_csv(const CorrelationTrace& trace) {
  std::ostringstream out;
  out << "lag_ps,value\n";
  const auto ps = whole_picoseconds(trace.sample_period);
  for (Eigen::Index k = 0; k < trace.size(); ++k) {
    const std::int64_t n = trace.first_lag_index + k;
    out << (ps ? std::to_string(n * *ps) : shortest(trace.lag(k) * 1e12)) << ',' << shortest(trace.values[k]) << '\n';
  }
  return out.str();
}

std::string fitted_curve_csv(const CorrelationTrace& trace, const PeakFit& fit, int upsample) {
  if (upsample < 1) throw std::invalid_argument("upsample must be >= 1");
  std::ostringstream out;
  out << "lag_ps,value\n";
  const auto ps = whole_picoseconds(trace.sample_period);
  const int digits = decimal_digits(upsample);
  const std::int64_t base = trace.first_lag_index + fit.candidate;
  const int hw = fit.window_halfwidth;
  for (int j = -hw * upsample; j <= hw * upsample; ++j) {
    const double x = static_cast<double>(j) / upsample;
    std::string lag;
    if (ps && digits >= 0) {
      lag = decimal((base * upsample + j) * *ps, digits);
    } else {
      lag = shortest((static_cast<double>(base) + x) * trace.sample_period * 1e12);
    }
    out << lag << ',' << shortest(fit.lobe(x)) << '\n';
  }
  return out.str();
}

std::string trace_file_stem(const std::string& step, const std::string& echo) {
  std::string out = step + "." + echo;
  for (auto& c : out) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                      c == '-' || c == '_';
    if (!safe) c = '_';
  }
  return out;
}

}  // namespace cotdr
