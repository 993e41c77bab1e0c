#include "cotdr/scenario.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cotdr {

namespace {

using json = nlohmann::ordered_json;
using Kind = ScenarioError::Kind;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

[[noreturn]] void constraint(const std::string& key, const std::string& what) {
  throw ScenarioError(Kind::constraint, key, key + ": " + what);
}

// Reads one JSON object, remembering which keys were consumed so that
// anything left over is reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) constraint(path_.empty() ? "<root>" : path_, "must be an object");
  }

  const json* find(const std::string& k) {
    seen_.insert(k);
    const auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  double number(const std::string& k, double fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_number()) constraint(join(path_, k), "must be a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) constraint(join(path_, k), "must be finite");
    return x;
  }

  std::optional<double> optional_number(const std::string& k) {
    if (!j_.contains(k)) {
      seen_.insert(k);
      return std::nullopt;
    }
    return number(k, 0.0);
  }

  std::uint64_t unsigned_integer(const std::string& k, std::uint64_t fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_number_unsigned()) constraint(join(path_, k), "must be a non-negative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& k, bool fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_boolean()) constraint(join(path_, k), "must be true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& k, const std::string& fallback) {
    const json* v = find(k);
    if (!v) return fallback;
    if (!v->is_string()) constraint(join(path_, k), "must be a string");
    return v->get<std::string>();
  }

  const json* array(const std::string& k) {
    const json* v = find(k);
    if (v && !v->is_array()) constraint(join(path_, k), "must be an array");
    return v;
  }

  const std::string& path() const { return path_; }
  std::string key(const std::string& k) const { return join(path_, k); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        throw ScenarioError(Kind::unknown_key, join(path_, k), "unknown key '" + join(path_, k) + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum>
Enum choose(Reader& r, const std::string& k, Enum fallback, std::initializer_list<std::pair<const char*, Enum>> names) {
  const json* v = r.find(k);
  if (!v) return fallback;
  if (v->is_string()) {
    for (const auto& [name, value] : names) {
      if (v->get<std::string>() == name) return value;
    }
  }
  std::string allowed;
  for (const auto& [name, value] : names) allowed += std::string(allowed.empty() ? "" : ", ") + name;
  constraint(r.key(k), "must be one of " + allowed);
}

FiberSpan read_fiber(Reader& r) {
  FiberSpan s;
  s.length_m = r.number("length_m", s.length_m);
  if (!r.find("length_m")) constraint(r.key("length_m"), "is required for a fiber section");
  s.unit_delay = r.number("unit_delay_s_per_m", s.unit_delay);
  s.attenuation_db_per_km = r.number("attenuation_db_per_km", s.attenuation_db_per_km);
  s.temp_coeff_ppm_per_k = r.number("temp_coeff_ppm_per_k", s.temp_coeff_ppm_per_k);
  s.temperature_offset_k = r.number("temperature_offset_k", s.temperature_offset_k);
  if (const json* list = r.array("connectors")) {
    for (std::size_t i = 0; i < list->size(); ++i) {
      Reader c((*list)[i], index(r.key("connectors"), i));
      ConnectorEvent ev;
      ev.position_m = c.number("position_m", ev.position_m);
      ev.reflectance_db = c.number("reflectance_db", ev.reflectance_db);
      c.finish();
      s.connectors.push_back(ev);
    }
  }
  return s;
}

NodeDevice read_node(Reader& r) {
  NodeDevice n;
  n.internal_delay = r.number("internal_delay_s", n.internal_delay);
  if (!r.find("internal_delay_s")) constraint(r.key("internal_delay_s"), "is required for a node section");
  n.gain_db = r.number("gain_db", n.gain_db);
  n.unidirectional = r.boolean("unidirectional", n.unidirectional);
  return n;
}

DelimitingReflector read_reflector(Reader& r) {
  DelimitingReflector d;
  d.kind = choose(r, "kind", d.kind, {{"coupler", ReflectorKind::coupler}, {"tff", ReflectorKind::tff}});
  d.probe_reflectance_db = r.number("reflectance_db", d.probe_reflectance_db);
  d.probe_insertion_loss_db = r.number("insertion_loss_db", d.probe_insertion_loss_db);
  d.calibration_offset = r.number("calibration_offset_s", d.calibration_offset);
  d.jumper_length_m = r.number("jumper_length_m", d.jumper_length_m);
  return d;
}

LinkTopology read_topology(const json& j, const std::string& path) {
  Reader r(j, path);
  LinkTopology link;
  link.jumper_unit_delay = r.number("jumper_unit_delay_s_per_m", link.jumper_unit_delay);
  const json* sections = r.array("sections");
  if (!sections || sections->empty()) constraint(r.key("sections"), "needs at least one section");
  for (std::size_t i = 0; i < sections->size(); ++i) {
    Reader s((*sections)[i], index(r.key("sections"), i));
    const std::string type = s.text("type", "");
    if (type == "fiber") {
      link.sections.emplace_back(read_fiber(s));
    } else if (type == "node") {
      link.sections.emplace_back(read_node(s));
    } else {
      constraint(s.key("type"), "must be \"fiber\" or \"node\"");
    }
    s.finish();
  }
  if (const json* reflectors = r.array("reflectors")) {
    for (std::size_t i = 0; i < reflectors->size(); ++i) {
      Reader d((*reflectors)[i], index(r.key("reflectors"), i));
      link.reflectors.push_back(read_reflector(d));
      d.finish();
    }
  } else {
    link.reflectors.assign(link.sections.size() + 1, DelimitingReflector{});
  }
  r.finish();
  return link;
}

// Turns a validate() message into a ScenarioError naming the key under
// `root`.
[[noreturn]] void rethrow_constraint(const std::invalid_argument& e, const std::string& root) {
  const std::string what = e.what();
  const std::string first = what.substr(0, what.find(' '));
  const bool keyed = first.find('.') != std::string::npos || first.find('[') != std::string::npos;
  const std::string key = keyed ? join(root, first) : root;
  throw ScenarioError(Kind::constraint, key, root.empty() || !keyed ? what : root + "." + what);
}

void validate_topology(LinkTopology& link, const std::string& root) {
  try {
    link.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_constraint(e, root);
  }
}

void resolve_noise(LinkTopology& link, std::optional<double> snr_db) {
  if (snr_db) link.noise_std = noise_std_for_snr(link, *snr_db);
}

json write_topology(const LinkTopology& link) {
  json sections = json::array();
  for (const auto& section : link.sections) {
    json s;
    if (const auto* f = std::get_if<FiberSpan>(&section)) {
      s["type"] = "fiber";
      s["length_m"] = f->length_m;
      s["unit_delay_s_per_m"] = f->unit_delay;
      s["attenuation_db_per_km"] = f->attenuation_db_per_km;
      s["temp_coeff_ppm_per_k"] = f->temp_coeff_ppm_per_k;
      s["temperature_offset_k"] = f->temperature_offset_k;
      json connectors = json::array();
      for (const auto& c : f->connectors) connectors.push_back({{"position_m", c.position_m}, {"reflectance_db", c.reflectance_db}});
      s["connectors"] = std::move(connectors);
    } else {
      const auto& n = std::get<NodeDevice>(section);
      s["type"] = "node";
      s["internal_delay_s"] = n.internal_delay;
      s["gain_db"] = n.gain_db;
      s["unidirectional"] = n.unidirectional;
    }
    sections.push_back(std::move(s));
  }
  json reflectors = json::array();
  for (const auto& d : link.reflectors) {
    reflectors.push_back({{"kind", d.kind == ReflectorKind::tff ? "tff" : "coupler"},
                          {"reflectance_db", d.probe_reflectance_db},
                          {"insertion_loss_db", d.probe_insertion_loss_db},
                          {"calibration_offset_s", d.calibration_offset},
                          {"jumper_length_m", d.jumper_length_m}});
  }
  json out;
  out["jumper_unit_delay_s_per_m"] = link.jumper_unit_delay;
  out["sections"] = std::move(sections);
  out["reflectors"] = std::move(reflectors);
  return out;
}

}  // namespace

ScenarioError::ScenarioError(Kind kind, std::string key, const std::string& what)
    : std::runtime_error(what), kind_(kind), key_(std::move(key)) {}

Scenario parse_scenario(const std::string& text, const std::string& default_name) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(Kind::parse, "", std::string("parse error: ") + e.what());
  }

  Scenario sc;
  Reader r(root, "");
  sc.name = r.text("name", default_name);
  sc.campaign = choose(r, "campaign", sc.campaign,
                       {{"span", Campaign::span},
                        {"node", Campaign::node},
                        {"link", Campaign::link},
                        {"asymmetry", Campaign::asymmetry},
                        {"error_budget", Campaign::error_budget}});
  if (const json* t = r.find("target_section")) {
    if (!t->is_number_unsigned()) constraint("target_section", "must be a non-negative integer");
    sc.target_section = t->get<std::size_t>();
  }
  auto& m = sc.measurement;
  m.seed = r.unsigned_integer("seed", m.seed);

  if (const json* probe = r.find("probe")) {
    Reader p(*probe, "probe");
    m.probe_seed = p.unsigned_integer("seed", m.probe_seed);
    m.length_bits = p.unsigned_integer("length_bits", m.length_bits);
    m.bit_rate = p.number("bit_rate_hz", m.bit_rate);
    const auto os = p.unsigned_integer("oversampling", static_cast<std::uint64_t>(m.oversampling));
    if (os > 1024) constraint("probe.oversampling", "must be <= 1024");
    m.oversampling = static_cast<int>(os);
    m.rolloff = p.number("rolloff", m.rolloff);
    p.finish();
  }
  if (const json* clock = r.find("clock")) {
    Reader c(*clock, "clock");
    sc.clock.offset_ppb = c.number("offset_ppb", sc.clock.offset_ppb);
    sc.clock.jitter_rms = c.number("jitter_rms_s", sc.clock.jitter_rms);
    sc.clock.seed = c.unsigned_integer("seed", sc.clock.seed);
    c.finish();
  }
  double noise_std = 0.0;
  if (const json* receiver = r.find("receiver")) {
    Reader c(*receiver, "receiver");
    const auto std_given = c.optional_number("noise_std");
    sc.snr_db = c.optional_number("snr_db");
    if (std_given && sc.snr_db) constraint("receiver", "give either noise_std or snr_db, not both");
    noise_std = std_given.value_or(0.0);
    if (noise_std < 0.0) constraint("receiver.noise_std", "must be >= 0");
    c.finish();
  }
  if (const json* meas = r.find("measurement")) {
    Reader c(*meas, "measurement");
    m.threshold_factor = c.number("threshold_factor", m.threshold_factor);
    m.sidelobe_ratio = c.number("sidelobe_ratio", m.sidelobe_ratio);
    const auto hw = c.unsigned_integer("window_halfwidth_samples", static_cast<std::uint64_t>(m.window_halfwidth));
    if (hw > 4096) constraint("measurement.window_halfwidth_samples", "must be <= 4096");
    m.window_halfwidth = static_cast<int>(hw);
    m.gate_rel_tol = c.number("gate_rel_tol", m.gate_rel_tol);
    m.gate_abs_tol = c.number("gate_abs_tol_s", m.gate_abs_tol);
    c.finish();
  }
  if (const json* budget = r.find("budget")) {
    Reader c(*budget, "budget");
    m.temperature_uncertainty_k = c.number("temperature_uncertainty_k", m.temperature_uncertainty_k);
    m.temp_coeff_ppm_per_k = c.number("temp_coeff_ppm_per_k", m.temp_coeff_ppm_per_k);
    sc.fit_tolerance = c.number("fit_tolerance_s", sc.fit_tolerance);
    if (sc.fit_tolerance < 0.0) constraint("budget.fit_tolerance_s", "must be >= 0");
    c.finish();
  }
  if (const json* output = r.find("output")) {
    Reader c(*output, "output");
    sc.output.format = choose(c, "format", sc.output.format, {{"json", ReportFormat::json}, {"csv", ReportFormat::csv}});
    sc.output.emit_traces = c.boolean("emit_traces", sc.output.emit_traces);
    c.finish();
  }
  const json* topology = r.find("topology");
  if (!topology) constraint("topology", "is required");
  sc.topology = read_topology(*topology, "topology");
  if (const json* reverse = r.find("reverse_topology")) sc.reverse_topology = read_topology(*reverse, "reverse_topology");
  r.finish();

  // Constraints, once every key is known to be legitimate.
  if (sc.clock.offset_ppb <= -1e9) constraint("clock.offset_ppb", "must exceed -1e9");
  if (sc.clock.jitter_rms < 0.0) constraint("clock.jitter_rms_s", "must be >= 0");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_constraint(e, "");
  }
  sc.topology.noise_std = noise_std;
  validate_topology(sc.topology, "topology");
  resolve_noise(sc.topology, sc.snr_db);

  if (sc.campaign == Campaign::asymmetry) {
    if (!sc.reverse_topology) {
      sc.reverse_topology = sc.topology.reversed();
    } else {
      sc.reverse_topology->noise_std = noise_std;
      validate_topology(*sc.reverse_topology, "reverse_topology");
    }
    resolve_noise(*sc.reverse_topology, sc.snr_db);
  } else if (sc.reverse_topology) {
    constraint("reverse_topology", "only applies to the asymmetry campaign");
  }

  if (sc.campaign == Campaign::span || sc.campaign == Campaign::node) {
    const bool want_fiber = sc.campaign == Campaign::span;
    if (!sc.target_section) {
      for (std::size_t k = 0; k < sc.topology.sections.size(); ++k) {
        if (sc.topology.is_fiber(k) == want_fiber) {
          sc.target_section = k;
          break;
        }
      }
      if (!sc.target_section) {
        constraint("target_section", std::string("topology has no ") + (want_fiber ? "fiber" : "node") + " section");
      }
    }
    if (*sc.target_section >= sc.topology.sections.size()) constraint("target_section", "is past the last section");
    if (sc.topology.is_fiber(*sc.target_section) != want_fiber) {
      constraint("target_section", std::string("must name a ") + (want_fiber ? "fiber" : "node") + " section");
    }
  } else if (sc.target_section) {
    constraint("target_section", "only applies to span and node campaigns");
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(Kind::io, "", "cannot open scenario file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw ScenarioError(Kind::io, "", "cannot read scenario file " + path.string());
  return parse_scenario(buffer.str(), path.stem().string());
}

std::string serialize(const Scenario& sc) {
  const auto& m = sc.measurement;
  json out;
  out["name"] = sc.name;
  out["campaign"] = to_string(sc.campaign);
  if (sc.target_section) out["target_section"] = *sc.target_section;
  out["seed"] = m.seed;
  out["probe"] = {{"seed", m.probe_seed},
                  {"length_bits", m.length_bits},
                  {"bit_rate_hz", m.bit_rate},
                  {"oversampling", m.oversampling},
                  {"rolloff", m.rolloff}};
  out["clock"] = {{"offset_ppb", sc.clock.offset_ppb}, {"jitter_rms_s", sc.clock.jitter_rms}, {"seed", sc.clock.seed}};
  if (sc.snr_db) {
    out["receiver"] = {{"snr_db", *sc.snr_db}};
  } else {
    out["receiver"] = {{"noise_std", sc.topology.noise_std}};
  }
  out["measurement"] = {{"threshold_factor", m.threshold_factor},
                        {"sidelobe_ratio", m.sidelobe_ratio},
                        {"window_halfwidth_samples", m.window_halfwidth},
                        {"gate_rel_tol", m.gate_rel_tol},
                        {"gate_abs_tol_s", m.gate_abs_tol}};
  out["budget"] = {{"temperature_uncertainty_k", m.temperature_uncertainty_k},
                   {"temp_coeff_ppm_per_k", m.temp_coeff_ppm_per_k},
                   {"fit_tolerance_s", sc.fit_tolerance}};
  out["output"] = {{"format", to_string(sc.output.format)}, {"emit_traces", sc.output.emit_traces}};
  out["topology"] = write_topology(sc.topology);
  if (sc.reverse_topology) out["reverse_topology"] = write_topology(*sc.reverse_topology);
  return out.dump(2) + "\n";
}

std::string to_string(Campaign campaign) {
  switch (campaign) {
    case Campaign::span:
      return "span";
    case Campaign::node:
      return "node";
    case Campaign::link:
      return "link";
    case Campaign::asymmetry:
      return "asymmetry";
    case Campaign::error_budget:
      return "error_budget";
  }
  return "link";
}

std::string to_string(ReportFormat format) { return format == ReportFormat::json ? "json" : "csv"; }

}  // namespace cotdr
