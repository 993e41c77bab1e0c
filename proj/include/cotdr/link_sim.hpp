#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cotdr/signal_gen.hpp"

namespace cotdr {

inline constexpr double kStandardFiberDelay = 5e-9;  // s/m
inline constexpr double kFiberTempCoeffPpmPerK = 7.0;

enum class ReflectorKind { coupler, tff };

/// Partial probe reflector marking a section boundary.
///
/// The reference plane is the coupler (or the thin-film filter). Light
/// arriving from the co-located instrument port is partially reflected at
/// that plane. Light arriving over the line is reflected by the strong
/// reflector behind a TFF, which adds `calibration_offset` (round trip).
struct DelimitingReflector {
  ReflectorKind kind = ReflectorKind::coupler;
  double probe_reflectance_db = -7.0;
  double probe_insertion_loss_db = 1.0;
  double calibration_offset = 0.0;  // s, round trip; zero for couplers
  double jumper_length_m = 2.0;     // instrument to reference plane

  double reflectance() const;
  double transmission() const;
  /// Extra round-trip delay seen by light arriving over the line.
  double line_side_offset() const { return kind == ReflectorKind::tff ? calibration_offset : 0.0; }
  bool operator==(const DelimitingReflector&) const = default;
};

struct ConnectorEvent {
  double position_m = 0.0;  // from the upstream end of the span
  double reflectance_db = -45.0;
  bool operator==(const ConnectorEvent&) const = default;
};

struct FiberSpan {
  double length_m = 0.0;
  double unit_delay = kStandardFiberDelay;  // s/m
  double attenuation_db_per_km = 0.2;
  double temp_coeff_ppm_per_k = kFiberTempCoeffPpmPerK;
  double temperature_offset_k = 0.0;
  std::vector<ConnectorEvent> connectors;

  double thermal_scale() const { return 1.0 + temp_coeff_ppm_per_k * 1e-6 * temperature_offset_k; }
  double one_way_delay() const { return length_m * unit_delay * thermal_scale(); }
  double round_trip_delay() const { return 2.0 * one_way_delay(); }
  double delay_over(double meters) const { return meters * unit_delay * thermal_scale(); }
  /// Linear power transmission over `meters` of this fiber.
  double transmission_over(double meters) const;
  bool operator==(const FiberSpan&) const = default;
};

struct NodeDevice {
  double internal_delay = 0.0;  // s, reference plane to reference plane
  double gain_db = 0.0;
  bool unidirectional = true;
  bool operator==(const NodeDevice&) const = default;
};

using Section = std::variant<FiberSpan, NodeDevice>;

/// A link laid out in data direction. Reflector i bounds section i on the
/// upstream side, so there is one more reflector than sections. An
/// instrument site sits at every reflector.
struct LinkTopology {
  std::vector<Section> sections;
  std::vector<DelimitingReflector> reflectors;
  double noise_std = 0.0;                       // receiver noise, linear amplitude
  double jumper_unit_delay = kStandardFiberDelay;  // s/m

  std::size_t site_count() const { return reflectors.size(); }
  bool is_fiber(std::size_t section) const;
  bool is_node(std::size_t section) const;

  /// Throws std::invalid_argument naming the offending element.
  void validate() const;

  double jumper_delay(std::size_t site) const;
  double section_delay(std::size_t section) const;
  double total_one_way_delay() const;

  /// Same sections and reflectors in the opposite order.
  LinkTopology reversed() const;
  /// Copy with all temperature offsets set to zero.
  LinkTopology at_reference_temperature() const;
  bool operator==(const LinkTopology&) const = default;
};

struct SwitchState {
  bool sw1 = false;
  bool sw2 = false;
  bool operator==(const SwitchState&) const = default;
};

/// Receiver time base.
///
/// Sample n is taken at true time n * Ts * (1 + fractional_offset) plus
/// jitter and is labelled n * Ts, so a true delay d reads as
/// d / (1 + fractional_offset). The probe bit clock derives from the same
/// oscillator.
struct ClockModel {
  double fractional_offset = 0.0;
  double jitter_rms = 0.0;  // s
  std::uint64_t seed = 0;

  double apparent(double true_delay) const { return true_delay / (1.0 + fractional_offset); }
  bool operator==(const ClockModel&) const = default;
};

enum class EchoPath { reflector, connector, transmissive };

struct Echo {
  double delay = 0.0;      // s, true time
  double amplitude = 0.0;  // linear
  EchoPath path = EchoPath::reflector;
  std::size_t element = 0;  // reflector index, or section index for connectors and transmission
  std::size_t sub_index = 0;  // connector index within its span
};

using EchoList = std::vector<Echo>;

/// Every first-order path from the instrument at `site` back to its
/// receiver for the given switch state, sorted by delay.
///
/// sw1 launches the probe through the jumper to reflector `site` and on
/// upstream into section site-1; echoes continue upstream until a
/// unidirectional node blocks the reverse path. sw2 reaches only reflector
/// site+1 at the output of node `site`. Both switches select the single
/// forward path through node `site`.
EchoList enumerate_echoes(const LinkTopology& link, std::size_t site, SwitchState state);

struct AcquisitionWindow {
  double t_start = 0.0;  // s, receiver time
  double t_end = 0.0;
};

struct ReceiverSettings {
  double sample_rate = 40e9;
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Received waveform for `echoes` on the receiver grid of `clock`.
///
/// Receiver samples sit at (n + 0.5) / sample_rate, n an integer. The record
/// covers `window` or, when none is given, runs from 0 to just past the last
/// echo. Throws std::invalid_argument when the window cuts through an echo's
/// burst.
SampledWaveform synthesize_received(const EchoList& echoes, const ProbeSignal& probe, const ClockModel& clock,
                                    const ReceiverSettings& receiver,
                                    std::optional<AcquisitionWindow> window = std::nullopt);

/// Same, for a probe known only by its samples; the probe is reconstructed
/// by linear interpolation and the receiver runs at the probe's sample rate.
SampledWaveform synthesize_received(const EchoList& echoes, const SampledWaveform& probe, const ClockModel& clock,
                                    double noise_std, std::uint64_t noise_seed,
                                    std::optional<AcquisitionWindow> window = std::nullopt);

std::string describe(const Echo& echo);

}  // namespace cotdr
