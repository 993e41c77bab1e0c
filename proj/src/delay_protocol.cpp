#include "cotdr/delay_protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cotdr {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Streams are keyed by what is being acquired, not by call order, so a
// section's result does not depend on which steps ran before it.
std::uint64_t stream_seed(std::uint64_t seed, std::size_t site, SwitchState sw, std::size_t sub) {
  const std::uint64_t key = (static_cast<std::uint64_t>(site) << 8) | (sw.sw1 ? 2u : 0u) | (sw.sw2 ? 1u : 0u);
  return mix64(seed ^ mix64(key ^ mix64(sub + 0x51ed)));
}

std::string step_label(std::size_t site, SwitchState sw) {
  std::ostringstream s;
  s << "site" << site << (sw.sw1 && sw.sw2 ? ".sw1+sw2" : sw.sw1 ? ".sw1" : ".sw2");
  return s.str();
}

std::string echo_label(const Echo& e) {
  switch (e.path) {
    case EchoPath::reflector:
      return "reflector" + std::to_string(e.element);
    case EchoPath::connector:
      return "section" + std::to_string(e.element) + ".connector" + std::to_string(e.sub_index);
    case EchoPath::transmissive:
      return "node" + std::to_string(e.element) + ".transmission";
  }
  return "echo";
}

}  // namespace

MeasurementError::MeasurementError(std::optional<std::size_t> section, const std::string& what)
    : std::runtime_error(section ? "section " + std::to_string(*section) + ": " + what : what), section_(section) {}

void MeasurementConfig::validate() const {
  if (length_bits < 64) throw std::invalid_argument("probe.length_bits must be >= 64");
  if (!(bit_rate > 0.0)) throw std::invalid_argument("probe.bit_rate_hz must be positive");
  if (oversampling < 1) throw std::invalid_argument("probe.oversampling must be >= 1");
  if (!(rolloff >= 0.0 && rolloff <= 1.0)) throw std::invalid_argument("probe.rolloff must lie in [0, 1]");
  if (!(threshold_factor > 0.0)) throw std::invalid_argument("measurement.threshold_factor must be positive");
  if (window_halfwidth != 0 && window_halfwidth < 2) {
    throw std::invalid_argument("measurement.window_halfwidth_samples must be 0 (auto) or >= 2");
  }
  if (!(sidelobe_ratio >= 0.0 && sidelobe_ratio < 1.0)) {
    throw std::invalid_argument("measurement.sidelobe_ratio must lie in [0, 1)");
  }
  if (!(gate_rel_tol >= 0.0)) throw std::invalid_argument("measurement.gate_rel_tol must be >= 0");
  if (!(gate_abs_tol > 0.0)) throw std::invalid_argument("measurement.gate_abs_tol_s must be positive");
  if (!(temp_coeff_ppm_per_k >= 0.0)) throw std::invalid_argument("budget.temp_coeff_ppm_per_k must be >= 0");
  if (temperature_uncertainty_k < 0.0) throw std::invalid_argument("budget.temperature_uncertainty_k must be >= 0");
}

MeasurementSession::MeasurementSession(LinkTopology link, ClockModel clock, MeasurementConfig config)
    : link_(std::move(link)), clock_(clock), config_(config) {
  link_.validate();
  config_.validate();
  nominal_ = link_.at_reference_temperature();
  probe_ = generate_probe(config_.probe_seed, config_.length_bits, config_.bit_rate);
}

std::optional<double> MeasurementSession::input_round_trip(std::size_t site) const {
  const auto it = input_rtt_.find(site);
  return it == input_rtt_.end() ? std::nullopt : std::optional<double>(it->second.delay);
}

std::optional<double> MeasurementSession::output_round_trip(std::size_t section) const {
  const auto it = output_rtt_.find(section);
  return it == output_rtt_.end() ? std::nullopt : std::optional<double>(it->second.delay);
}

std::size_t MeasurementSession::find_reflector(const EchoList& table, std::size_t reflector,
                                               std::optional<std::size_t> section,
                                               const std::string& step_name) const {
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].path == EchoPath::reflector && table[i].element == reflector) return i;
  }
  throw MeasurementError(section, step_name + ": reflector " + std::to_string(reflector) + " is not reachable");
}

std::vector<DelayEstimate> MeasurementSession::acquire(std::size_t site, SwitchState switches,
                                                       const std::vector<std::size_t>& targets,
                                                       const EchoList& table, std::optional<std::size_t> section,
                                                       const std::string& step_name) {
  const EchoList truth = enumerate_echoes(link_, site, switches);
  const double bit = probe_.bit_duration();
  const double burst = probe_.burst_duration();
  const int os = config_.oversampling;
  const int hw = config_.effective_halfwidth();
  const ProbeSignal signal(probe_, config_.rolloff);

  ClockModel clock = clock_;
  clock.seed = stream_seed(clock_.seed, site, switches, 0xc10c);

  // Coarse pass over the full range at one sample per bit.
  double horizon = 0.0;
  for (const auto& e : table) horizon = std::max(horizon, e.delay);
  horizon += config_.gate_rel_tol * horizon + config_.gate_abs_tol + burst + 8.0 * bit;
  const ReceiverSettings coarse_rx{config_.bit_rate, link_.noise_std, stream_seed(config_.seed, site, switches, 0)};
  const SampledWaveform coarse =
      synthesize_received(truth, signal, clock, coarse_rx, AcquisitionWindow{-4.0 * bit, horizon});
  const SampledWaveform coarse_ref = shape_waveform(probe_, 1, config_.rolloff);
  const CorrelationTrace coarse_trace = cross_correlate(coarse, coarse_ref, CorrelationMethod::fft);
  const SidelobeMask mask{static_cast<Eigen::Index>(config_.length_bits) + 2, config_.sidelobe_ratio};
  const auto candidates = detect_peaks(coarse_trace, config_.threshold_factor, 2, mask);

  // Every candidate belongs to the nearest event-table entry.
  std::vector<std::size_t> owner(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double lag = coarse_trace.lag(candidates[c].index);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < table.size(); ++e) {
      const double d = std::abs(lag - table[e].delay);
      if (d < best) {
        best = d;
        owner[c] = e;
      }
    }
  }

  StepRecord record{step_name, site, switches, {}};
  std::vector<DelayEstimate> out;
  const SampledWaveform fine_ref = shape_waveform(probe_, os, config_.rolloff);
  const double fine_period = fine_ref.sample_period();

  for (std::size_t t = 0; t < targets.size(); ++t) {
    const Echo& target = table[targets[t]];
    const double gate = config_.gate_rel_tol * target.delay + config_.gate_abs_tol;
    std::optional<std::size_t> pick;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (owner[c] != targets[t]) continue;
      if (std::abs(coarse_trace.lag(candidates[c].index) - target.delay) > gate) continue;
      if (!pick || candidates[c].value > candidates[*pick].value) pick = c;
    }
    if (!pick) {
      throw MeasurementError(section, step_name + ": no correlation peak found for " + describe(target));
    }
    const double coarse_lag = coarse_trace.lag(candidates[*pick].index);

    // Gated window around the peak, widened until no detected echo burst
    // straddles its edges.
    double begin = coarse_lag - 4.0 * bit;
    double end = coarse_lag + burst + 4.0 * bit;
    for (bool grown = true; grown;) {
      grown = false;
      for (const auto& c : candidates) {
        const double lo = coarse_trace.lag(c.index) - 2.0 * bit;
        const double hi = coarse_trace.lag(c.index) + burst + 2.0 * bit;
        if (hi < begin || lo > end) continue;
        if (lo < begin) {
          begin = lo - 2.0 * bit;
          grown = true;
        }
        if (hi > end) {
          end = hi + 2.0 * bit;
          grown = true;
        }
      }
    }
    const ReceiverSettings fine_rx{config_.bit_rate * os, link_.noise_std,
                                   stream_seed(config_.seed, site, switches, 1 + t)};
    SampledWaveform fine;
    try {
      fine = synthesize_received(truth, signal, clock, fine_rx, AcquisitionWindow{begin, end});
    } catch (const std::invalid_argument& e) {
      throw MeasurementError(section, step_name + ": " + e.what());
    }

    const auto centre = static_cast<std::int64_t>(std::llround(coarse_lag / fine_period));
    const std::int64_t search = 2 * os;
    const std::int64_t first = centre - search - hw - 1;
    const Eigen::Index count = 2 * (search + hw + 1) + 1;
    CorrelationTrace trace = cross_correlate_lags(fine, fine_ref, first, count);
    const Eigen::Index peak = argmax(trace, hw + 1, count - hw - 1);
    PeakFit fit = fit_peak(trace, peak, hw);
    if (!fit.ok) {
      throw MeasurementError(section, step_name + ": peak fit failed for " + describe(target) + ": " + fit.failure);
    }
    out.push_back(fit.estimate);
    EchoFit ef{echo_label(target), fit.estimate, {}, fit};
    if (config_.keep_traces) ef.trace = std::move(trace);
    record.echoes.push_back(std::move(ef));
  }
  steps_.push_back(std::move(record));
  return out;
}

SectionDelay MeasurementSession::measure_span(std::size_t section) {
  if (section >= link_.sections.size() || !link_.is_fiber(section)) {
    throw MeasurementError(section, "not a fiber span");
  }
  const std::size_t site = section + 1;
  const SwitchState sw{true, false};
  const std::string name = "span" + std::to_string(section) + ".step1." + step_label(site, sw);
  const EchoList table = enumerate_echoes(nominal_, site, sw);
  const std::size_t near = find_reflector(table, site, section, name);
  const std::size_t far = find_reflector(table, section, section, name);
  const auto fits = acquire(site, sw, {near, far}, table, section, name);

  input_rtt_[site] = fits[0];
  // Calibration constants are held on the instrument's own time base.
  const double calibration = clock_.apparent(link_.reflectors[section].line_side_offset());
  SectionDelay d;
  d.section_id = section;
  d.kind = SectionKind::fiber;
  d.source = DelaySource::reflective;
  d.one_way_delay = 0.5 * (fits[1].delay - calibration - fits[0].delay);
  d.uncertainty = 0.5 * std::hypot(fits[0].uncertainty, fits[1].uncertainty);
  return d;
}

double MeasurementSession::record_input_reflector(std::size_t site) {
  const SwitchState sw{true, false};
  const std::optional<std::size_t> section =
      site < link_.sections.size() ? std::optional<std::size_t>(site) : std::nullopt;
  const std::string name = "site" + std::to_string(site) + ".step1." + step_label(site, sw);
  const EchoList table = enumerate_echoes(nominal_, site, sw);
  const auto fits = acquire(site, sw, {find_reflector(table, site, section, name)}, table, section, name);
  input_rtt_[site] = fits[0];
  return fits[0].delay;
}

double MeasurementSession::record_output_reflector(std::size_t section) {
  if (section >= link_.sections.size() || !link_.is_node(section)) {
    throw MeasurementError(section, "not a node");
  }
  const SwitchState sw{false, true};
  const std::string name = "node" + std::to_string(section) + ".step2." + step_label(section, sw);
  const EchoList table = enumerate_echoes(nominal_, section, sw);
  const auto fits = acquire(section, sw, {find_reflector(table, section + 1, section, name)}, table, section, name);
  output_rtt_[section] = fits[0];
  return fits[0].delay;
}

SectionDelay MeasurementSession::measure_node(std::size_t section) {
  if (section >= link_.sections.size() || !link_.is_node(section)) {
    throw MeasurementError(section, "not a node");
  }
  const auto rtt_in = input_round_trip(section);
  const auto rtt_out = output_round_trip(section);
  if (!rtt_in || !rtt_out) {
    throw MeasurementError(section, std::string("missing prerequisite: round trip to the node ") +
                                        (!rtt_in ? "input" : "output") + " reflector was not measured");
  }
  const SwitchState sw{true, true};
  const std::string name = "node" + std::to_string(section) + ".step3." + step_label(section, sw);
  const EchoList table = enumerate_echoes(nominal_, section, sw);
  const auto fits = acquire(section, sw, {0}, table, section, name);

  SectionDelay d;
  d.section_id = section;
  d.kind = SectionKind::node;
  d.source = DelaySource::transmissive;
  d.one_way_delay = node_delay_from_steps(fits[0].delay, *rtt_in, *rtt_out);
  const double u_in = 0.5 * input_rtt_.at(section).uncertainty;
  const double u_out = 0.5 * output_rtt_.at(section).uncertainty;
  d.uncertainty = std::sqrt(fits[0].uncertainty * fits[0].uncertainty + u_in * u_in + u_out * u_out);
  return d;
}

ErrorBudget MeasurementSession::budget_for(double delay, double fit_term) const {
  return combine(clock_error(std::abs(delay), clock_.fractional_offset),
                 temperature_error(std::abs(delay), config_.temperature_uncertainty_k, config_.temp_coeff_ppm_per_k),
                 fit_term);
}

MeasurementReport MeasurementSession::measure_link() {
  MeasurementReport report;
  report.campaign = "link";
  report.clock = clock_;
  for (std::size_t k = 0; k < link_.sections.size(); ++k) {
    try {
      if (link_.is_fiber(k)) {
        report.sections.push_back(measure_span(k));
      } else {
        if (!input_round_trip(k)) record_input_reflector(k);
        record_output_reflector(k);
        report.sections.push_back(measure_node(k));
      }
    } catch (const MeasurementError&) {
      throw;
    } catch (const std::exception& e) {
      throw MeasurementError(k, e.what());
    }
  }
  double fit_var = 0.0;
  for (const auto& s : report.sections) {
    report.total_one_way += s.one_way_delay;
    fit_var += s.uncertainty * s.uncertainty;
  }
  report.error_budget = budget_for(report.total_one_way, std::sqrt(fit_var));
  report.steps = steps_;
  return report;
}

AsymmetryResult measure_asymmetry(const LinkTopology& link_ab, const LinkTopology& link_ba, const ClockModel& clock_ab,
                                  const ClockModel& clock_ba, const MeasurementConfig& config) {
  if (!(clock_ab == clock_ba)) {
    throw std::invalid_argument("asymmetry needs both directions measured with the same clock");
  }
  MeasurementConfig reverse_config = config;
  reverse_config.seed = config.seed ^ 0xba5eba11ULL;
  MeasurementSession forward(link_ab, clock_ab, config);
  MeasurementSession reverse(link_ba, clock_ab, reverse_config);

  AsymmetryResult result;
  result.forward = forward.measure_link();
  result.reverse = reverse.measure_link();
  result.asymmetry = result.forward.total_one_way - result.reverse.total_one_way;

  auto& c = result.combined;
  c.campaign = "asymmetry";
  c.clock = clock_ab;
  c.total_one_way = result.forward.total_one_way;
  c.asymmetry = result.asymmetry;
  c.sections = result.forward.sections;
  for (auto step : result.forward.steps) {
    step.name = "ab." + step.name;
    c.steps.push_back(std::move(step));
  }
  for (auto step : result.reverse.steps) {
    step.name = "ba." + step.name;
    c.steps.push_back(std::move(step));
  }
  const double fit = std::hypot(result.forward.error_budget.fit_term, result.reverse.error_budget.fit_term);
  c.error_budget = combine(clock_error(std::abs(result.asymmetry), clock_ab.fractional_offset),
                           // a common temperature change scales both directions alike
                           temperature_error(std::abs(result.asymmetry), config.temperature_uncertainty_k,
                                             config.temp_coeff_ppm_per_k),
                           fit);
  return result;
}

double weakest_target_amplitude(const LinkTopology& link) {
  link.validate();
  double weakest = std::numeric_limits<double>::infinity();
  auto consider = [&](std::size_t site, SwitchState sw, auto&& wanted) {
    for (const auto& e : enumerate_echoes(link, site, sw)) {
      if (wanted(e)) weakest = std::min(weakest, e.amplitude);
    }
  };
  for (std::size_t k = 0; k < link.sections.size(); ++k) {
    if (link.is_fiber(k)) {
      consider(k + 1, {true, false}, [k](const Echo& e) {
        return e.path == EchoPath::reflector && (e.element == k || e.element == k + 1);
      });
    } else {
      consider(k, {true, false}, [k](const Echo& e) { return e.path == EchoPath::reflector && e.element == k; });
      consider(k, {false, true}, [](const Echo&) { return true; });
      consider(k, {true, true}, [](const Echo&) { return true; });
    }
  }
  return weakest;
}

double noise_std_for_snr(const LinkTopology& link, double snr_db) {
  return weakest_target_amplitude(link) * std::pow(10.0, -snr_db / 20.0);
}

std::string to_string(SectionKind kind) { return kind == SectionKind::fiber ? "fiber" : "node"; }
std::string to_string(DelaySource source) { return source == DelaySource::reflective ? "reflective" : "transmissive"; }

}  // namespace cotdr
