#pragma once

#include <cmath>
#include <cstdint>

#include "cotdr/correlator.hpp"
#include "cotdr/link_sim.hpp"
#include "cotdr/signal_gen.hpp"

namespace fixture {

/// Gated acquisition of one echo and its correlation around the true lag.
struct EchoShot {
  cotdr::CorrelationTrace trace;
  cotdr::PeakFit fit;
};

inline EchoShot single_echo(double delay, double amplitude, double noise_std, std::uint64_t seed, int oversampling = 4,
                            double rolloff = 1.0, std::size_t bits = 1024, double fractional_offset = 0.0) {
  using namespace cotdr;
  const auto probe = generate_probe(1, bits, 10e9);
  const ProbeSignal signal(probe, rolloff);
  const auto ref = shape_waveform(probe, oversampling, rolloff);
  const double ts = ref.sample_period();
  ClockModel clock;
  clock.fractional_offset = fractional_offset;
  const double apparent = clock.apparent(delay);
  const EchoList echoes{{delay, amplitude}};
  const auto rx = synthesize_received(echoes, signal, clock, {ref.sample_rate, noise_std, seed},
                                      AcquisitionWindow{apparent - 1e-9, apparent + probe.burst_duration() + 1e-9});
  const int hw = 2 * oversampling;
  const auto centre = static_cast<std::int64_t>(std::llround(apparent / ts));
  const std::int64_t reach = 2 * oversampling + hw + 1;
  EchoShot shot;
  shot.trace = cross_correlate_lags(rx, ref, centre - reach, 2 * reach + 1);
  const auto peak = argmax(shot.trace, hw + 1, shot.trace.size() - hw - 1);
  shot.fit = fit_peak(shot.trace, peak, hw);
  return shot;
}

}  // namespace fixture
