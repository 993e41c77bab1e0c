#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "cotdr/delay_protocol.hpp"
#include "cotdr/link_sim.hpp"

namespace cotdr {

enum class Campaign { span, node, link, asymmetry, error_budget };
enum class ReportFormat { json, csv };

struct ClockSettings {
  double offset_ppb = 0.0;
  double jitter_rms = 0.0;  // s
  std::uint64_t seed = 0;

  ClockModel model() const { return {offset_ppb / 1e9, jitter_rms, seed}; }
  bool operator==(const ClockSettings&) const = default;
};

struct OutputOptions {
  ReportFormat format = ReportFormat::json;
  bool emit_traces = false;
  bool operator==(const OutputOptions&) const = default;
};

/// A fully resolved scenario file.
///
/// Keys carry their unit (length_m, bit_rate_hz, offset_ppb, ...). Every
/// value is explicit after loading; serialize() writes all of them.
struct Scenario {
  std::string name = "scenario";
  Campaign campaign = Campaign::link;
  /// Section for span and node campaigns.
  std::optional<std::size_t> target_section;
  LinkTopology topology;
  /// Reverse direction for asymmetry campaigns; the mirrored topology when
  /// the file leaves it out.
  std::optional<LinkTopology> reverse_topology;
  /// When set, receiver noise is derived per direction from this SNR
  /// against the weakest target echo; otherwise noise_std is used as is.
  std::optional<double> snr_db;
  ClockSettings clock;
  MeasurementConfig measurement;
  double fit_tolerance = 5e-12;  // s, closed-form budget only
  OutputOptions output;

  bool operator==(const Scenario&) const = default;
};

/// Loading error; key() is the dotted path of the offending entry.
class ScenarioError : public std::runtime_error {
 public:
  enum class Kind { io, parse, unknown_key, constraint };
  ScenarioError(Kind kind, std::string key, const std::string& what);
  Kind kind() const { return kind_; }
  const std::string& key() const { return key_; }

 private:
  Kind kind_;
  std::string key_;
};

Scenario parse_scenario(const std::string& text, const std::string& default_name = "scenario");
/// Scenario name defaults to the file stem.
Scenario load_scenario(const std::filesystem::path& path);
std::string serialize(const Scenario& scenario);

std::string to_string(Campaign campaign);
std::string to_string(ReportFormat format);

}  // namespace cotdr
