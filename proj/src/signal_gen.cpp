#include "cotdr/signal_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace cotdr {

ProbeSequence generate_probe(std::uint64_t seed, std::size_t length_bits, double bit_rate) {
  if (length_bits < 64) {
    throw std::invalid_argument("probe length_bits must be >= 64, got " + std::to_string(length_bits));
  }
  if (!(bit_rate > 0.0) || !std::isfinite(bit_rate)) {
    throw std::invalid_argument("probe bit_rate must be positive");
  }
  // mt19937_64 output is fully specified by the standard, unlike the
  // distributions, so raw top bits give the same burst on every platform.
  std::mt19937_64 rng(seed);
  ProbeSequence probe;
  probe.bits.resize(length_bits);
  for (auto& b : probe.bits) {
    b = static_cast<std::uint8_t>(rng() >> 63);
  }
  probe.bit_rate = bit_rate;
  probe.seed = seed;
  probe.length_bits = length_bits;
  return probe;
}

ProbeSignal::ProbeSignal(ProbeSequence probe, double rolloff) : probe_(std::move(probe)), rolloff_(rolloff) {
  if (!(rolloff >= 0.0 && rolloff <= 1.0)) {
    throw std::invalid_argument("rolloff must lie in [0, 1]");
  }
  if (probe_.bits.size() != probe_.length_bits || probe_.length_bits == 0) {
    throw std::invalid_argument("probe bit count does not match length_bits");
  }
}

double ProbeSignal::support_begin() const { return -0.5 * rolloff_ * bit_duration(); }

double ProbeSignal::support_end() const {
  return probe_.burst_duration() + 0.5 * rolloff_ * bit_duration();
}

double ProbeSignal::edge(double x) const {
  const double width = rolloff_ * bit_duration();
  if (width <= 0.0) {
    return x >= 0.0 ? 1.0 : 0.0;
  }
  if (x <= -0.5 * width) return 0.0;
  if (x >= 0.5 * width) return 1.0;
  return 0.5 * (1.0 + std::sin(std::numbers::pi * x / width));
}

double ProbeSignal::value_at(double t) const {
  const double period = bit_duration();
  const auto n = static_cast<std::int64_t>(probe_.length_bits);
  const auto k = static_cast<std::int64_t>(std::floor(t / period));
  double v = 0.0;
  for (std::int64_t j = k - 1; j <= k + 1; ++j) {
    if (j < 0 || j >= n || probe_.bits[static_cast<std::size_t>(j)] == 0) continue;
    const double lead = t - static_cast<double>(j) * period;
    v += edge(lead) - edge(lead - period);
  }
  return std::clamp(v, 0.0, 1.0);
}

SampledWaveform shape_waveform(const ProbeSequence& probe, int oversampling, double rolloff) {
  if (oversampling < 1) {
    throw std::invalid_argument("oversampling must be >= 1");
  }
  const ProbeSignal signal(probe, rolloff);
  SampledWaveform w;
  w.sample_rate = probe.bit_rate * oversampling;
  w.start_time = 0.5 / w.sample_rate;
  const auto count = static_cast<Eigen::Index>(probe.length_bits) * oversampling;
  w.samples.resize(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    w.samples[k] = signal.value_at(w.time_at(k));
  }
  return w;
}

}  // namespace cotdr
