#include "cotdr/link_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cotdr {

namespace {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

std::string section_name(std::size_t i) { return "sections[" + std::to_string(i) + "]"; }
std::string reflector_name(std::size_t i) { return "reflectors[" + std::to_string(i) + "]"; }

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// splitmix64 finaliser; keyed per sample so a sample's jitter does not depend
// on which window it was synthesised in.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double keyed_gaussian(std::uint64_t seed, std::int64_t index) {
  const std::uint64_t a = mix64(seed ^ mix64(static_cast<std::uint64_t>(index)));
  const std::uint64_t b = mix64(a);
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  const double u1 = (static_cast<double>(a >> 11) + 0.5) * scale;
  const double u2 = static_cast<double>(b >> 11) * scale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// [support_begin, support_end] bounds where the probe is non-zero;
// [burst_begin, burst_end] is the nominal burst a window must not cut.
template <typename ValueFn>
SampledWaveform synthesize(const EchoList& echoes, ValueFn&& value, double support_begin, double support_end,
                           double burst_begin, double burst_end, const ClockModel& clock, double sample_rate,
                           double noise_std, std::uint64_t noise_seed,
                           const std::optional<AcquisitionWindow>& window) {
  require(sample_rate > 0.0, "receiver sample_rate must be positive");
  require(noise_std >= 0.0, "receiver noise_std must be >= 0");
  require(clock.fractional_offset > -1.0, "clock fractional_offset must exceed -1");
  require(clock.jitter_rms >= 0.0, "clock jitter_rms must be >= 0");
  const double period = 1.0 / sample_rate;
  const double scale = 1.0 + clock.fractional_offset;

  std::int64_t first = 0;
  std::int64_t last = 0;
  if (window) {
    require(window->t_end > window->t_start, "acquisition window must have t_end > t_start");
    first = static_cast<std::int64_t>(std::ceil(window->t_start / period - 0.5));
    last = static_cast<std::int64_t>(std::floor(window->t_end / period - 0.5));
    require(last >= first, "acquisition window holds no samples");
  } else {
    double horizon = 0.0;
    for (const auto& e : echoes) horizon = std::max(horizon, e.delay / scale);
    last = static_cast<std::int64_t>(std::ceil((horizon + support_end) / period)) + 4;
  }
  const double t_first = (static_cast<double>(first) + 0.5) * period;
  const double t_last = (static_cast<double>(last) + 0.5) * period;

  SampledWaveform out;
  out.sample_rate = sample_rate;
  out.start_time = t_first;
  out.samples = Eigen::VectorXd::Zero(last - first + 1);

  const double jitter = clock.jitter_rms / scale;
  const double spread = 6.0 * jitter;
  for (const auto& e : echoes) {
    const double shift = e.delay / scale;
    const double begin = shift + support_begin;
    const double end = shift + support_end;
    const double slack = 0.5 * period * (1.0 + 1e-9);
    const double burst_lo = shift + burst_begin;
    const double burst_hi = shift + burst_end;
    if (window && burst_hi >= t_first - slack && burst_lo <= t_last + slack &&
        (burst_lo < t_first - slack || burst_hi > t_last + slack)) {
      std::ostringstream msg;
      msg << "acquisition window [" << window->t_start << ", " << window->t_end << "] s clips " << describe(e);
      throw std::invalid_argument(msg.str());
    }
    const auto lo = std::max(first, static_cast<std::int64_t>(std::ceil((begin - spread) / period - 0.5)));
    const auto hi = std::min(last, static_cast<std::int64_t>(std::floor((end + spread) / period - 0.5)));
    for (std::int64_t n = lo; n <= hi; ++n) {
      double t = (static_cast<double>(n) + 0.5) * period - shift;
      if (jitter > 0.0) t += jitter * keyed_gaussian(clock.seed, n);
      out.samples[n - first] += e.amplitude * value(t);
    }
  }

  if (noise_std > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> gauss(0.0, noise_std);
    for (Eigen::Index k = 0; k < out.samples.size(); ++k) out.samples[k] += gauss(rng);
  }
  return out;
}

}  // namespace

double DelimitingReflector::reflectance() const { return db_to_linear(probe_reflectance_db); }
double DelimitingReflector::transmission() const { return db_to_linear(-probe_insertion_loss_db); }

double FiberSpan::transmission_over(double meters) const {
  return db_to_linear(-attenuation_db_per_km * meters * 1e-3);
}

bool LinkTopology::is_fiber(std::size_t section) const {
  return std::holds_alternative<FiberSpan>(sections.at(section));
}

bool LinkTopology::is_node(std::size_t section) const {
  return std::holds_alternative<NodeDevice>(sections.at(section));
}

void LinkTopology::validate() const {
  require(!sections.empty(), "link needs at least one section");
  require(reflectors.size() == sections.size() + 1,
          "link needs exactly one more reflector than sections (got " + std::to_string(reflectors.size()) +
              " reflectors for " + std::to_string(sections.size()) + " sections)");
  require(noise_std >= 0.0 && std::isfinite(noise_std), "noise_std must be finite and >= 0");
  require(jumper_unit_delay > 0.0, "jumper_unit_delay must be positive");
  for (std::size_t i = 0; i < reflectors.size(); ++i) {
    const auto& r = reflectors[i];
    const auto name = reflector_name(i);
    require(r.probe_reflectance_db < 0.0, name + ".reflectance_db must be < 0 dB");
    require(r.probe_insertion_loss_db >= 0.0, name + ".insertion_loss_db must be >= 0 dB");
    require(r.jumper_length_m >= 0.0, name + ".jumper_length_m must be >= 0");
    require(r.calibration_offset >= 0.0, name + ".calibration_offset_s must be >= 0");
    require(r.kind == ReflectorKind::tff || r.calibration_offset == 0.0,
            name + ".calibration_offset_s must be 0 for a coupler");
  }
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto name = section_name(i);
    if (const auto* span = std::get_if<FiberSpan>(&sections[i])) {
      require(span->length_m >= 0.0 && std::isfinite(span->length_m), name + ".length_m must be >= 0");
      require(span->unit_delay > 0.0, name + ".unit_delay_s_per_m must be positive");
      require(span->attenuation_db_per_km >= 0.0, name + ".attenuation_db_per_km must be >= 0");
      require(span->thermal_scale() > 0.0, name + ".temperature_offset_k gives non-positive delay");
      double previous = 0.0;
      for (std::size_t c = 0; c < span->connectors.size(); ++c) {
        const auto& ev = span->connectors[c];
        const auto cname = name + ".connectors[" + std::to_string(c) + "]";
        require(ev.position_m > previous && ev.position_m < span->length_m,
                cname + ".position_m must be strictly increasing and inside the span");
        require(ev.reflectance_db < 0.0, cname + ".reflectance_db must be < 0 dB");
        previous = ev.position_m;
      }
    } else {
      const auto& node = std::get<NodeDevice>(sections[i]);
      require(node.internal_delay >= 0.0 && std::isfinite(node.internal_delay),
              name + ".internal_delay_s must be >= 0");
    }
  }
}

double LinkTopology::jumper_delay(std::size_t site) const {
  return reflectors.at(site).jumper_length_m * jumper_unit_delay;
}

double LinkTopology::section_delay(std::size_t section) const {
  return std::visit(
      [](const auto& s) {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, FiberSpan>) {
          return s.one_way_delay();
        } else {
          return s.internal_delay;
        }
      },
      sections.at(section));
}

double LinkTopology::total_one_way_delay() const {
  double total = 0.0;
  for (std::size_t i = 0; i < sections.size(); ++i) total += section_delay(i);
  return total;
}

LinkTopology LinkTopology::reversed() const {
  LinkTopology r = *this;
  std::reverse(r.sections.begin(), r.sections.end());
  std::reverse(r.reflectors.begin(), r.reflectors.end());
  for (auto& s : r.sections) {
    if (auto* span = std::get_if<FiberSpan>(&s)) {
      for (auto& c : span->connectors) c.position_m = span->length_m - c.position_m;
      std::reverse(span->connectors.begin(), span->connectors.end());
    }
  }
  return r;
}

LinkTopology LinkTopology::at_reference_temperature() const {
  LinkTopology r = *this;
  for (auto& s : r.sections) {
    if (auto* span = std::get_if<FiberSpan>(&s)) span->temperature_offset_k = 0.0;
  }
  return r;
}

EchoList enumerate_echoes(const LinkTopology& link, std::size_t site, SwitchState state) {
  link.validate();
  require(site < link.site_count(), "instrument site " + std::to_string(site) + " is outside the link");
  require(state.sw1 || state.sw2, "switch state with both switches off has no path to the receiver");
  EchoList echoes;

  if (state.sw2) {
    require(site < link.sections.size() && link.is_node(site),
            "switch 2 needs a node at " + section_name(site));
    const auto& node = std::get<NodeDevice>(link.sections[site]);
    const auto& in = link.reflectors[site];
    const auto& out = link.reflectors[site + 1];
    if (state.sw1) {
      echoes.push_back({link.jumper_delay(site) + node.internal_delay + link.jumper_delay(site + 1),
                        in.transmission() * db_to_linear(node.gain_db) * out.transmission(), EchoPath::transmissive,
                        site, 0});
    } else {
      echoes.push_back({2.0 * link.jumper_delay(site + 1), out.reflectance(), EchoPath::reflector, site + 1, 0});
    }
    return echoes;
  }

  const auto& near = link.reflectors[site];
  const double jumper = link.jumper_delay(site);
  echoes.push_back({2.0 * jumper, near.reflectance(), EchoPath::reflector, site, 0});

  // One-way delay and power transmission from the near reference plane.
  double delay = 0.0;
  double gain = near.transmission();
  for (std::size_t k = site; k-- > 0;) {
    if (const auto* span = std::get_if<FiberSpan>(&link.sections[k])) {
      for (std::size_t c = span->connectors.size(); c-- > 0;) {
        const auto& ev = span->connectors[c];
        const double from_far_end = span->length_m - ev.position_m;
        const double t = gain * span->transmission_over(from_far_end);
        echoes.push_back({2.0 * (jumper + delay + span->delay_over(from_far_end)),
                          t * t * db_to_linear(ev.reflectance_db), EchoPath::connector, k, c});
      }
      delay += span->one_way_delay();
      gain *= span->transmission_over(span->length_m);
    } else {
      const auto& node = std::get<NodeDevice>(link.sections[k]);
      if (node.unidirectional) break;
      delay += node.internal_delay;
      gain *= db_to_linear(node.gain_db);
    }
    const auto& far = link.reflectors[k];
    echoes.push_back({2.0 * (jumper + delay) + far.line_side_offset(), gain * gain * far.reflectance(),
                      EchoPath::reflector, k, 0});
    gain *= far.transmission();
  }

  std::stable_sort(echoes.begin(), echoes.end(), [](const Echo& a, const Echo& b) { return a.delay < b.delay; });
  return echoes;
}

SampledWaveform synthesize_received(const EchoList& echoes, const ProbeSignal& probe, const ClockModel& clock,
                                    const ReceiverSettings& receiver, std::optional<AcquisitionWindow> window) {
  return synthesize(
      echoes, [&probe](double t) { return probe.value_at(t); }, probe.support_begin(), probe.support_end(), 0.0,
      probe.probe().burst_duration(), clock, receiver.sample_rate, receiver.noise_std, receiver.noise_seed, window);
}

SampledWaveform synthesize_received(const EchoList& echoes, const SampledWaveform& probe, const ClockModel& clock,
                                    double noise_std, std::uint64_t noise_seed,
                                    std::optional<AcquisitionWindow> window) {
  require(probe.size() > 0 && probe.sample_rate > 0.0, "probe waveform is empty");
  const double period = probe.sample_period();
  const auto n = probe.size();
  auto interp = [&probe, period, n](double t) {
    const double x = (t - probe.start_time) / period;
    const double base = std::floor(x);
    const auto k = static_cast<Eigen::Index>(base);
    const double f = x - base;
    const double left = (k >= 0 && k < n) ? probe.samples[k] : 0.0;
    const double right = (k + 1 >= 0 && k + 1 < n) ? probe.samples[k + 1] : 0.0;
    return (1.0 - f) * left + f * right;
  };
  return synthesize(echoes, interp, probe.start_time - period, probe.time_at(n), probe.start_time - 0.5 * period,
                    probe.time_at(n - 1) + 0.5 * period, clock, probe.sample_rate, noise_std, noise_seed, window);
}

std::string describe(const Echo& echo) {
  std::ostringstream s;
  switch (echo.path) {
    case EchoPath::reflector:
      s << "echo from " << reflector_name(echo.element);
      break;
    case EchoPath::connector:
      s << "echo from " << section_name(echo.element) << ".connectors[" << echo.sub_index << "]";
      break;
    case EchoPath::transmissive:
      s << "transmission through " << section_name(echo.element);
      break;
  }
  s << " at " << echo.delay << " s";
  return s.str();
}

}  // namespace cotdr
