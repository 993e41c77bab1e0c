#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotdr/correlator.hpp"
#include "cotdr/error_budget.hpp"
#include "cotdr/link_sim.hpp"
#include "cotdr/signal_gen.hpp"

namespace cotdr {

struct MeasurementConfig {
  std::uint64_t probe_seed = 1;
  std::size_t length_bits = 1024;
  double bit_rate = 10e9;
  int oversampling = 4;
  double rolloff = 1.0;
  double threshold_factor = 8.0;
  double sidelobe_ratio = 0.3;  // see SidelobeMask
  int window_halfwidth = 0;  // samples; 0 selects 2 * oversampling
  // Peaks are looked for within rel * expected + abs of the event table.
  double gate_rel_tol = 0.02;
  double gate_abs_tol = 20e-9;
  std::uint64_t seed = 0;  // acquisition noise and jitter streams
  double temperature_uncertainty_k = 0.0;
  double temp_coeff_ppm_per_k = kFiberTempCoeffPpmPerK;
  bool keep_traces = false;

  int effective_halfwidth() const { return window_halfwidth > 0 ? window_halfwidth : 2 * oversampling; }
  void validate() const;
  bool operator==(const MeasurementConfig&) const = default;
};

enum class SectionKind { fiber, node };
enum class DelaySource { reflective, transmissive };

struct SectionDelay {
  std::size_t section_id = 0;
  SectionKind kind = SectionKind::fiber;
  double one_way_delay = 0.0;  // receiver-clock seconds
  DelaySource source = DelaySource::reflective;
  double uncertainty = 0.0;
};

/// One fitted correlation peak of an acquisition.
struct EchoFit {
  std::string label;
  DelayEstimate estimate;
  CorrelationTrace trace;  // fine trace around the peak, kept on request
  PeakFit fit;
};

/// One switch setting at one instrument site.
struct StepRecord {
  std::string name;
  std::size_t site = 0;
  SwitchState switches;
  std::vector<EchoFit> echoes;
};

struct MeasurementReport {
  std::string campaign;
  std::vector<SectionDelay> sections;
  double total_one_way = 0.0;
  std::optional<double> asymmetry;
  ClockModel clock;
  ErrorBudget error_budget;
  std::vector<StepRecord> steps;
};

/// A measurement step that could not produce a delay.
class MeasurementError : public std::runtime_error {
 public:
  MeasurementError(std::optional<std::size_t> section, const std::string& what);
  std::optional<std::size_t> section() const { return section_; }

 private:
  std::optional<std::size_t> section_;
};

/// Node single-pass delay from the transmissive delay and the round trips
/// to its input and output reflectors.
inline double node_delay_from_steps(double transmissive, double rtt_input, double rtt_output) {
  return transmissive - 0.5 * rtt_input - 0.5 * rtt_output;
}

/// Switched measurement campaign on one link with one receiver clock.
///
/// The instrument at site k serves the span ending at reflector k (switch 1)
/// and, when section k is a node, the node itself (switch 2 and both
/// switches). Each acquisition is a coarse full-range pass at one sample per
/// bit followed by gated, oversampled acquisitions around each expected
/// reflector. Round trips are kept in receiver-clock units.
class MeasurementSession {
 public:
  MeasurementSession(LinkTopology link, ClockModel clock, MeasurementConfig config);

  const LinkTopology& link() const { return link_; }
  const ClockModel& clock() const { return clock_; }
  const MeasurementConfig& config() const { return config_; }

  /// Switch 1 at site section+1: one-way span delay from the near and far
  /// reflector round trips. Also records the near round trip for the node
  /// at that site.
  SectionDelay measure_span(std::size_t section);

  /// Switch 1 at `site`, near reflector only. Needed before measuring a
  /// node that has no span measured into its input.
  double record_input_reflector(std::size_t site);

  /// Switch 2 at node `section`: round trip to the node's output reflector.
  double record_output_reflector(std::size_t section);

  /// Both switches at node `section`. Requires the input and output round
  /// trips from the two calls above.
  SectionDelay measure_node(std::size_t section);

  /// All sections in link order.
  MeasurementReport measure_link();

  std::optional<double> input_round_trip(std::size_t site) const;
  std::optional<double> output_round_trip(std::size_t section) const;
  const std::vector<StepRecord>& steps() const { return steps_; }

  ErrorBudget budget_for(double delay, double fit_term) const;

 private:
  std::vector<DelayEstimate> acquire(std::size_t site, SwitchState switches,
                                     const std::vector<std::size_t>& targets, const EchoList& table,
                                     std::optional<std::size_t> section, const std::string& step_name);
  std::size_t find_reflector(const EchoList& table, std::size_t reflector, std::optional<std::size_t> section,
                             const std::string& step_name) const;

  LinkTopology link_;
  LinkTopology nominal_;
  ClockModel clock_;
  MeasurementConfig config_;
  ProbeSequence probe_;
  std::map<std::size_t, DelayEstimate> input_rtt_;
  std::map<std::size_t, DelayEstimate> output_rtt_;
  std::vector<StepRecord> steps_;
};

/// Both directions of a link pair, back to back on the same clock.
struct AsymmetryResult {
  MeasurementReport forward;  // A to B
  MeasurementReport reverse;  // B to A
  double asymmetry = 0.0;     // forward total minus reverse total
  MeasurementReport combined;
};

/// Throws std::invalid_argument if the two clocks differ.
AsymmetryResult measure_asymmetry(const LinkTopology& link_ab, const LinkTopology& link_ba, const ClockModel& clock_ab,
                                  const ClockModel& clock_ba, const MeasurementConfig& config);

/// Smallest echo amplitude among the reflectors and transmissions that
/// measure_link() fits on `link`.
double weakest_target_amplitude(const LinkTopology& link);

/// Receiver noise sigma giving `snr_db` = 20 log10(A / sigma) for the
/// weakest target echo amplitude A.
double noise_std_for_snr(const LinkTopology& link, double snr_db);

std::string to_string(SectionKind kind);
std::string to_string(DelaySource source);

}  // namespace cotdr
