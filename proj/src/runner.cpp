#include "cotdr/runner.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>
#include <thread>

namespace cotdr {

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write to " + path.string() + " failed");
}

void make_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string format_ns(double seconds) {
  std::ostringstream s;
  s.precision(6);
  s << std::fixed << seconds * 1e9 << " ns";
  return s.str();
}

MeasurementReport single_section(MeasurementSession& session, const SectionDelay& d, const char* campaign) {
  MeasurementReport report;
  report.campaign = campaign;
  report.clock = session.clock();
  report.sections = {d};
  report.total_one_way = d.one_way_delay;
  report.error_budget = session.budget_for(d.one_way_delay, d.uncertainty);
  report.steps = session.steps();
  return report;
}

}  // namespace

BudgetEstimate closed_form_budget(const Scenario& sc) {
  const ClockModel clock = sc.clock.model();
  const auto& m = sc.measurement;
  BudgetEstimate out;
  if (sc.campaign == Campaign::span || sc.campaign == Campaign::node) {
    out.delay = sc.topology.section_delay(*sc.target_section);
  } else {
    out.delay = sc.topology.total_one_way_delay();
  }
  if (sc.campaign == Campaign::asymmetry) {
    const double asym = out.delay - sc.reverse_topology->total_one_way_delay();
    out.asymmetry = asym;
    out.asymmetry_bound = asymmetry_error_bound(std::abs(asym), std::abs(clock.fractional_offset), sc.fit_tolerance);
    out.budget = combine(clock_error(std::abs(asym), clock.fractional_offset),
                         temperature_error(std::abs(asym), m.temperature_uncertainty_k, m.temp_coeff_ppm_per_k),
                         std::sqrt(2.0) * sc.fit_tolerance);
  } else {
    out.budget = combine(clock_error(out.delay, clock.fractional_offset),
                         temperature_error(out.delay, m.temperature_uncertainty_k, m.temp_coeff_ppm_per_k),
                         sc.fit_tolerance);
  }
  return out;
}

CampaignOutcome execute(const Scenario& sc, bool keep_traces) {
  if (sc.campaign == Campaign::error_budget) throw std::invalid_argument("error_budget campaigns do not simulate");
  MeasurementConfig config = sc.measurement;
  config.keep_traces = keep_traces;
  const ClockModel clock = sc.clock.model();

  CampaignOutcome out;
  auto& ctx = out.context;
  ctx.scenario = sc.name;
  ctx.campaign = sc.campaign;
  ctx.seed = config.seed;
  ctx.clock = sc.clock;

  switch (sc.campaign) {
    case Campaign::span: {
      MeasurementSession session(sc.topology, clock, config);
      const auto d = session.measure_span(*sc.target_section);
      out.report = single_section(session, d, "span");
      ctx.truth_total = sc.topology.section_delay(*sc.target_section);
      break;
    }
    case Campaign::node: {
      const std::size_t k = *sc.target_section;
      MeasurementSession session(sc.topology, clock, config);
      session.record_input_reflector(k);
      session.record_output_reflector(k);
      const auto d = session.measure_node(k);
      out.report = single_section(session, d, "node");
      ctx.truth_total = sc.topology.section_delay(k);
      break;
    }
    case Campaign::link: {
      MeasurementSession session(sc.topology, clock, config);
      out.report = session.measure_link();
      ctx.truth_total = sc.topology.total_one_way_delay();
      break;
    }
    case Campaign::asymmetry: {
      const auto result = measure_asymmetry(sc.topology, *sc.reverse_topology, clock, clock, config);
      out.report = result.combined;
      ctx.truth_total = sc.topology.total_one_way_delay();
      ctx.truth_asymmetry = sc.topology.total_one_way_delay() - sc.reverse_topology->total_one_way_delay();
      const double fit_tol = std::max(sc.fit_tolerance, result.combined.error_budget.fit_term);
      ctx.asymmetry_bound =
          asymmetry_error_bound(std::abs(result.asymmetry), std::abs(clock.fractional_offset), fit_tol);
      break;
    }
    case Campaign::error_budget:
      break;
  }
  return out;
}

RunResult run(Scenario sc, const RunOptions& options) {
  if (options.seed_override) sc.measurement.seed = *options.seed_override;
  if (options.emit_traces) sc.output.emit_traces = *options.emit_traces;
  if (options.format) sc.output.format = *options.format;
  const bool csv = sc.output.format == ReportFormat::csv;

  RunResult result;
  result.report_path = options.out_dir / (sc.name + ".report." + (csv ? "csv" : "json"));
  try {
    if (sc.campaign == Campaign::error_budget) {
      const auto estimate = closed_form_budget(sc);
      ReportContext ctx{sc.name, sc.campaign, sc.measurement.seed, sc.clock, {}, {}, {}};
      make_directory(options.out_dir);
      write_file(result.report_path, csv ? budget_csv(estimate) : budget_json(estimate, ctx));
      result.message = sc.name + ": closed-form total_rss " + format_ns(estimate.budget.total_rss);
      return result;
    }

    const auto outcome = execute(sc, sc.output.emit_traces);
    make_directory(options.out_dir);
    write_file(result.report_path,
               csv ? report_csv(outcome.report, outcome.context) : report_json(outcome.report, outcome.context));
    if (sc.output.emit_traces) {
      const auto dir = options.out_dir / (sc.name + ".traces");
      make_directory(dir);
      for (const auto& step : outcome.report.steps) {
        for (const auto& echo : step.echoes) {
          const auto stem = trace_file_stem(step.name, echo.label);
          write_file(dir / (stem + ".csv"), trace_csv(echo.trace));
          write_file(dir / (stem + ".fit.csv"), fitted_curve_csv(echo.trace, echo.fit));
        }
      }
    }
    std::ostringstream msg;
    msg << sc.name << ": total one-way " << format_ns(outcome.report.total_one_way);
    if (outcome.report.asymmetry) msg << ", asymmetry " << format_ns(*outcome.report.asymmetry);
    result.message = msg.str();
  } catch (const MeasurementError& e) {
    result.exit_code = exit_measurement;
    result.message = sc.name + ": measurement failed: " + e.what();
  } catch (const IoError& e) {
    result.exit_code = exit_io;
    result.message = sc.name + ": " + e.what();
  } catch (const std::exception& e) {
    result.exit_code = exit_measurement;
    result.message = sc.name + ": measurement failed: " + e.what();
  }
  return result;
}

RunResult run_file(const std::filesystem::path& path, const RunOptions& options) {
  Scenario sc;
  try {
    sc = load_scenario(path);
  } catch (const ScenarioError& e) {
    RunResult r;
    r.exit_code = e.kind() == ScenarioError::Kind::io ? exit_io : exit_validation;
    r.message = path.string() + ": " + e.what();
    return r;
  }
  return run(std::move(sc), options);
}

std::vector<RunResult> run_batch(const std::vector<std::filesystem::path>& paths, const RunOptions& options,
                                 unsigned jobs) {
  std::vector<RunResult> results(paths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < paths.size(); i = next++) results[i] = run_file(paths[i], options);
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(paths.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace cotdr
