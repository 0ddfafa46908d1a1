// INI experiment configuration, canonical serialization and run manifests.
#pragma once

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pdc/io.hpp"
#include "pdc/system_sim.hpp"

namespace pdc {

inline constexpr const char* kToolVersion = "0.3.0";

/// An experiment together with the scenario label used in output names.
struct RunConfig {
  std::string scenario = "pr3";
  ExperimentConfig experiment;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw config_error("config key '" + key + "': cannot parse '" + raw + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw config_error("config key '" + key + "': expected a boolean, got '" + raw + "'");
}

inline std::string fmt(double v) { return io::format_double(v); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }
template <class T>
  requires std::is_integral_v<T>
std::string fmt(T v) {
  return std::to_string(v);
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Field number(std::string section, std::string key, T ExperimentConfig::*member) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key), [member](const RunConfig& c) { return fmt(c.experiment.*member); },
          [member, name](RunConfig& c, const std::string& s) { c.experiment.*member = parse_number<T>(name, s); }};
}

template <class T, class Getter>
Field nested(std::string section, std::string key, Getter ref) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key),
          [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, const std::string& s) {
            if constexpr (std::is_same_v<T, bool>) ref(c) = parse_bool(name, s);
            else ref(c) = parse_number<T>(name, s);
          }};
}

/// Optional double; "auto" leaves it unset.
template <class Getter>
Field optional_number(std::string section, std::string key, Getter ref) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key),
          [ref](const RunConfig& c) {
            const auto& v = ref(const_cast<RunConfig&>(c));
            return v ? fmt(*v) : std::string("auto");
          },
          [ref, name](RunConfig& c, const std::string& s) {
            if (trim(s) == "auto") ref(c).reset();
            else ref(c) = parse_number<double>(name, s);
          }};
}

template <class E>
Field enumeration(std::string section, std::string key, std::function<E&(RunConfig&)> ref,
                  std::vector<std::pair<std::string, E>> names) {
  const std::string name = section + "." + key;
  return {std::move(section), std::move(key),
          [ref, names](const RunConfig& c) {
            const E v = ref(const_cast<RunConfig&>(c));
            for (const auto& [n, e] : names)
              if (e == v) return n;
            return std::string("?");
          },
          [ref, names, name](RunConfig& c, const std::string& s) {
            for (const auto& [n, e] : names)
              if (n == trim(s)) {
                ref(c) = e;
                return;
              }
            throw config_error("config key '" + name + "': unknown value '" + s + "'");
          }};
}

inline const std::vector<Field>& fields() {
  using EC = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(nested<int>("array", "num_antennas", [](RunConfig& c) -> int& { return c.experiment.array.num_antennas; }));
    f.push_back(nested<double>("array", "max_aoa", [](RunConfig& c) -> double& { return c.experiment.array.max_aoa; }));
    f.push_back(number("array", "angle_oversampling", &EC::angle_oversampling));

    auto ofdm = [](auto member) { return [member](RunConfig& c) -> auto& { return c.experiment.ofdm.*member; }; };
    f.push_back(nested<int>("ofdm", "num_subcarriers", ofdm(&OfdmConfig::num_subcarriers)));
    f.push_back(nested<double>("ofdm", "subcarrier_spacing", ofdm(&OfdmConfig::subcarrier_spacing)));
    f.push_back(nested<double>("ofdm", "max_delay", ofdm(&OfdmConfig::max_delay)));
    f.push_back(nested<int>("ofdm", "coherence_block_subcarriers", ofdm(&OfdmConfig::coherence_block_subcarriers)));
    f.push_back(nested<int>("ofdm", "symbols_per_slot", ofdm(&OfdmConfig::symbols_per_slot)));
    f.push_back(nested<double>("ofdm", "slot_duration", ofdm(&OfdmConfig::slot_duration)));
    f.push_back(number("ofdm", "delay_oversampling", &EC::delay_oversampling));

    f.push_back(nested<double>("cells", "cell_radius", [](RunConfig& c) -> double& { return c.experiment.layout.cell_radius; }));
    f.push_back(enumeration<PilotReuse>("cells", "reuse", [](RunConfig& c) -> PilotReuse& { return c.experiment.layout.reuse; },
                                        {{"pr1", PilotReuse::pr1}, {"pr3", PilotReuse::pr3}}));
    f.push_back(nested<int>("cells", "interferer_sectors",
                            [](RunConfig& c) -> int& { return c.experiment.layout.interferer_sectors; }));
    auto place = [](auto member) { return [member](RunConfig& c) -> auto& { return c.experiment.placement.*member; }; };
    f.push_back(nested<int>("cells", "users_per_sector", place(&PlacementConfig::users_per_sector)));
    f.push_back(nested<int>("cells", "pilot_symbols", place(&PlacementConfig::pilot_symbols)));
    f.push_back(nested<double>("cells", "ring_radius", place(&PlacementConfig::ring_radius)));
    f.push_back(nested<int>("cells", "num_mpcs", place(&PlacementConfig::num_mpcs)));
    f.push_back(nested<double>("cells", "min_distance", place(&PlacementConfig::min_distance)));
    f.push_back(nested<bool>("cells", "edge_users", place(&PlacementConfig::edge_users)));
    f.push_back(number("cells", "snr_min_db", &EC::snr_min_db));
    f.push_back(number("cells", "r0", &EC::r0));
    f.push_back(number("cells", "eta", &EC::eta));
    f.push_back(number("cells", "reference_eta", &EC::reference_eta));
    f.push_back(number("cells", "snr_anchor", &EC::snr_anchor));
    f.push_back(number("cells", "copilot_scale", &EC::copilot_scale));

    auto solver = [](auto member) { return [member](RunConfig& c) -> auto& { return c.experiment.solver.*member; }; };
    f.push_back(nested<int>("solver", "max_iterations", solver(&SolverConfig::max_iterations)));
    f.push_back(nested<double>("solver", "objective_tolerance", solver(&SolverConfig::objective_tolerance)));
    f.push_back(nested<int>("solver", "patience", solver(&SolverConfig::patience)));
    f.push_back(optional_number("solver", "lipschitz", solver(&SolverConfig::lipschitz_override)));
    f.push_back(optional_number("solver", "regularization_weight", solver(&SolverConfig::regularization_weight)));
    f.push_back(nested<bool>("solver", "approximate_lipschitz", solver(&SolverConfig::approximate_lipschitz)));
    f.push_back(nested<int>("solver", "power_iterations", solver(&SolverConfig::power_iterations)));

    auto admm = [](auto member) { return [member](RunConfig& c) -> auto& { return c.experiment.admm.*member; }; };
    f.push_back(nested<double>("admm", "upsilon", admm(&AdmmConfig::upsilon)));
    f.push_back(nested<int>("admm", "max_iterations", admm(&AdmmConfig::max_iterations)));
    f.push_back(nested<double>("admm", "tolerance", admm(&AdmmConfig::tolerance)));

    f.push_back({"experiment", "scenario", [](const RunConfig& c) { return c.scenario; },
                 [](RunConfig& c, const std::string& s) {
                   const std::string v = trim(s);
                   if (v.empty() || v.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_.-") != std::string::npos)
                     throw config_error("config key 'experiment.scenario': use [a-z0-9_.-] only");
                   c.scenario = v;
                 }});
    f.push_back(number("experiment", "seed", &EC::seed));
    f.push_back(number("experiment", "window", &EC::window));
    f.push_back(number("experiment", "trials", &EC::trials));
    f.push_back(number("experiment", "geometries", &EC::geometries));
    f.push_back(number("experiment", "antenna_ratio", &EC::antenna_ratio));
    f.push_back(optional_number("experiment", "tau0", [](RunConfig& c) -> auto& { return c.experiment.tau0; }));
    f.push_back(enumeration<ClusteringMode>(
        "experiment", "clustering", [](RunConfig& c) -> ClusteringMode& { return c.experiment.clustering; },
        {{"delay", ClusteringMode::delay}, {"supervised", ClusteringMode::supervised}}));
    f.push_back(number("experiment", "cluster_count", &EC::cluster_count));
    f.push_back(number("experiment", "oracle_target", &EC::oracle_target));
    f.push_back(enumeration<BeamformerKind>(
        "experiment", "beamformer", [](RunConfig& c) -> BeamformerKind& { return c.experiment.beamformer; },
        {{"mmse", BeamformerKind::mmse}, {"conjugate", BeamformerKind::conjugate}}));
    f.push_back(number("experiment", "baseline_delay_taps", &EC::baseline_delay_taps));
    return f;
  }();
  return table;
}

inline const std::vector<std::string>& section_order() {
  static const std::vector<std::string> s{"array", "ofdm", "cells", "solver", "admm", "experiment"};
  return s;
}

}  // namespace config_detail

/// Parses INI text. Unknown sections or keys are rejected; `array.max_aoa_deg`
/// is accepted as an alternative to `array.max_aoa` in radians.
inline RunConfig parse_config(std::istream& is) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  std::map<std::string, const config_detail::Field*> lookup;
  for (const auto& f : config_detail::fields()) lookup[f.section + "." + f.key] = &f;

  RunConfig cfg;
  const std::set<std::string> sections(config_detail::section_order().begin(), config_detail::section_order().end());
  for (const auto& [section, body] : tree) {
    if (!sections.count(section)) throw config_error("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw config_error("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      if (name == "array.max_aoa_deg") {
        if (body.count("max_aoa")) throw config_error("config: give either array.max_aoa or array.max_aoa_deg");
        cfg.experiment.array.max_aoa = config_detail::parse_number<double>(name, value.data()) * kPi / 180.0;
        continue;
      }
      const auto it = lookup.find(name);
      if (it == lookup.end()) throw config_error("config: unknown key '" + name + "'");
      it->second->set(cfg, value.data());
    }
  }
  try {
    cfg.experiment.validate();
    AngleDelayGrid(cfg.experiment.array, cfg.experiment.ofdm, cfg.experiment.angle_oversampling,
                   cfg.experiment.delay_oversampling);
  } catch (const std::logic_error& e) {
    throw config_error(std::string("config: ") + e.what());
  }
  return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  return parse_config(in);
}

/// Every key in fixed section order, sorted within a section, shortest
/// round-trip values. Equal configs serialize identically.
inline std::string canonical_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& section : config_detail::section_order()) {
    std::map<std::string, std::string> kv;
    for (const auto& f : config_detail::fields())
      if (f.section == section) kv[f.key] = f.get(cfg);
    os << '[' << section << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  }
  return os.str();
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

inline std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_config(cfg)); }

struct ExperimentManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  double wall_time = 0.0;
  std::vector<std::string> outputs;
  std::string canonical_config;  ///< full text, so a manifest can drive a re-run
};

}  // namespace pdc
