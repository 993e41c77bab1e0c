#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace cotdr {

/// Pseudo-random probe burst transmitted into the fiber under test.
struct ProbeSequence {
  std::vector<std::uint8_t> bits;
  double bit_rate = 10e9;  // bit/s
  std::uint64_t seed = 0;
  std::size_t length_bits = 0;

  double bit_duration() const { return 1.0 / bit_rate; }
  double burst_duration() const { return static_cast<double>(length_bits) / bit_rate; }
};

/// Uniformly spaced record of optical amplitude.
///
/// Sample k sits at time `start_time + k / sample_rate`. Waveforms produced by
/// the instrument models put sample k of a record at (index + 0.5) sample
/// periods, so lags between two records are whole multiples of the period.
struct SampledWaveform {
  Eigen::VectorXd samples;
  double sample_rate = 0.0;  // samples/s
  double start_time = 0.0;   // s, relative to burst launch

  double sample_period() const { return 1.0 / sample_rate; }
  Eigen::Index size() const { return samples.size(); }
  double time_at(Eigen::Index k) const { return start_time + static_cast<double>(k) / sample_rate; }
};

/// Seeded uniform random bits. Throws std::invalid_argument for bursts
/// shorter than 64 bits or a non-positive bit rate.
ProbeSequence generate_probe(std::uint64_t seed, std::size_t length_bits, double bit_rate);

/// Continuous-time on/off keyed rendering of a probe burst.
///
/// Bit k occupies [kT, (k+1)T). Each bit boundary is a raised-cosine
/// transition of width rolloff*T centred on the boundary, so consecutive
/// ones sum to exactly 1 and the amplitude stays in [0, 1]. The signal is
/// zero outside [-rolloff*T/2, L*T + rolloff*T/2].
class ProbeSignal {
 public:
  ProbeSignal(ProbeSequence probe, double rolloff);

  const ProbeSequence& probe() const { return probe_; }
  double rolloff() const { return rolloff_; }
  double bit_duration() const { return probe_.bit_duration(); }

  /// Support of the signal, in seconds relative to launch.
  double support_begin() const;
  double support_end() const;

  double value_at(double t) const;

 private:
  double edge(double x) const;

  ProbeSequence probe_;
  double rolloff_;
};

/// Samples the shaped burst at `oversampling` samples per bit, sample k at
/// (k + 0.5) / (oversampling * bit_rate). With oversampling 1 and roll-off 0
/// this is the plain NRZ bit pattern.
SampledWaveform shape_waveform(const ProbeSequence& probe, int oversampling, double rolloff);

}  // namespace cotdr
