#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "entente/dataset.hpp"
#include "entente/federation.hpp"
#include "entente/hash.hpp"

namespace entente {

namespace detail {

inline std::string trim(std::string_view v) {
  std::size_t a = 0, b = v.size();
  while (a < b && std::isspace(static_cast<unsigned char>(v[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(v[b - 1]))) --b;
  return std::string(v.substr(a, b - a));
}

}  // namespace detail

// Line-oriented config: [section] headers, key = value pairs, full-line
// comments starting with # or ;. Later duplicates win.
struct IniFile {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::string origin = "<config>";

  bool has_section(const std::string& s) const { return sections.count(s) > 0; }

  const std::string* find(const std::string& s, const std::string& k) const {
    auto sit = sections.find(s);
    if (sit == sections.end()) return nullptr;
    auto kit = sit->second.find(k);
    return kit == sit->second.end() ? nullptr : &kit->second;
  }

  std::string get(const std::string& s, const std::string& k,
                  const std::string& def) const {
    const auto* v = find(s, k);
    return v ? *v : def;
  }

  std::string require(const std::string& s, const std::string& k) const {
    const auto* v = find(s, k);
    if (!v) throw std::invalid_argument(origin + ": missing key " + s + "." + k);
    return *v;
  }

  double get_double(const std::string& s, const std::string& k, double def) const {
    const auto* v = find(s, k);
    if (!v) return def;
    try {
      std::size_t used = 0;
      double x = std::stod(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin + ": " + s + "." + k + " is not a number: " + *v);
    }
  }

  std::int64_t get_i64(const std::string& s, const std::string& k, std::int64_t def) const {
    const auto* v = find(s, k);
    if (!v) return def;
    std::int64_t x;
    if (!detail::parse_i64(*v, x))
      throw std::invalid_argument(origin + ": " + s + "." + k + " is not an integer: " + *v);
    return x;
  }

  int get_int(const std::string& s, const std::string& k, int def) const {
    return static_cast<int>(get_i64(s, k, def));
  }

  std::uint64_t get_u64(const std::string& s, const std::string& k, std::uint64_t def) const {
    const auto* v = find(s, k);
    if (!v) return def;
    try {
      std::size_t used = 0;
      auto x = std::stoull(*v, &used);
      if (used != v->size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw std::invalid_argument(origin + ": " + s + "." + k +
                                  " is not an unsigned integer: " + *v);
    }
  }

  bool get_bool(const std::string& s, const std::string& k, bool def) const {
    const auto* v = find(s, k);
    if (!v) return def;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw std::invalid_argument(origin + ": " + s + "." + k + " is not a boolean: " + *v);
  }
};

inline IniFile parse_ini(std::istream& in, const std::string& origin = "<config>") {
  IniFile ini;
  ini.origin = origin;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                    ": unterminated section header");
      section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
      if (section.empty())
        throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                    ": empty section name");
      ini.sections[section];
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": expected key = value");
    auto key = detail::trim(std::string_view(t).substr(0, eq));
    auto value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": empty key");
    if (section.empty())
      throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                  ": key outside any section");
    ini.sections[section][key] = value;
  }
  return ini;
}

inline IniFile parse_ini_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  return parse_ini(in, path);
}

inline PartitionStrategy partition_strategy_from_string(const std::string& s) {
  if (s == "hash") return PartitionStrategy::hash;
  if (s == "degree_balanced") return PartitionStrategy::degree_balanced;
  if (s == "community") return PartitionStrategy::community;
  throw std::invalid_argument("unknown partition strategy: " + s);
}

inline FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "degree") return FeatureMode::degree;
  if (s == "role") return FeatureMode::role;
  throw std::invalid_argument("unknown feature mode: " + s);
}

struct ExperimentConfig {
  // data source: exactly one of csv_path or synth
  std::string csv_path;
  std::string roles_csv;
  bool use_synth = false;
  SynthSpec synth;
  std::int64_t window_seconds = 100;
  std::int64_t anchor = -1;  // -1 anchors the grid at the first event
  // split: snapshot-index fractions or absolute timestamps
  bool split_by_time = false;
  double train_frac = 0.70;
  double val_frac = 0.15;
  std::int64_t train_end_ts = 0;
  std::int64_t val_end_ts = 0;
  bool clean_training = true;
  FeatureMode feature_mode = FeatureMode::degree;
  double neg_ratio = 1.0;
  int offset = 0;
  int wl_iters = 3;
  PartitionStrategy partition = PartitionStrategy::community;
  std::string partition_csv;
  int d_h = 32;
  int d_z = 16;
  FederationConfig fed;
  std::optional<AttackConfig> attack;
  std::string out_dir = "out";
  std::uint64_t seed_master = 1;
  std::uint64_t seed_data = 0;
  std::uint64_t seed_partition = 0;
  std::uint64_t seed_eval = 0;
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&] {
    auto t = trim(cur);
    cur.clear();
    if (t.empty()) return;
    std::int64_t x;
    if (!parse_i64(t, x)) throw std::invalid_argument("not an integer list entry: " + t);
    out.push_back(static_cast<int>(x));
  };
  for (char c : s) {
    if (c == ',')
      flush();
    else
      cur += c;
  }
  flush();
  return out;
}

}  // namespace detail

// Reads an experiment file. Every random stream gets its own seed: explicit
// [seeds] keys win, everything else derives from the master seed (which the
// CLI --seed flag can replace).
inline ExperimentConfig load_experiment(const IniFile& ini,
                                        std::optional<std::uint64_t> master_override = {}) {
  ExperimentConfig cfg;
  cfg.seed_master = master_override ? *master_override : ini.get_u64("seeds", "master", 1);
  auto seed_for = [&](const std::string& name) {
    const auto* v = ini.find("seeds", name);
    return v ? ini.get_u64("seeds", name, 0) : derive_seed(cfg.seed_master, name);
  };
  cfg.seed_data = seed_for("data");
  cfg.seed_partition = seed_for("partition");
  cfg.seed_eval = seed_for("eval");

  cfg.csv_path = ini.get("data", "csv", "");
  cfg.use_synth = ini.has_section("synth");
  if (cfg.csv_path.empty() && !cfg.use_synth)
    throw std::invalid_argument(ini.origin + ": need data.csv or a [synth] section");
  if (!cfg.csv_path.empty() && cfg.use_synth)
    throw std::invalid_argument(ini.origin + ": data.csv and [synth] are exclusive");
  if (!cfg.csv_path.empty() && !std::filesystem::exists(cfg.csv_path))
    throw std::invalid_argument(ini.origin + ": data.csv not found: " + cfg.csv_path);
  cfg.roles_csv = ini.get("data", "roles_csv", "");
  if (!cfg.roles_csv.empty() && !std::filesystem::exists(cfg.roles_csv))
    throw std::invalid_argument(ini.origin + ": roles_csv not found: " + cfg.roles_csv);

  cfg.window_seconds = ini.get_i64("data", "window_seconds", 100);
  if (cfg.window_seconds <= 0)
    throw std::invalid_argument(ini.origin + ": window_seconds must be positive");
  cfg.anchor = ini.get_i64("data", "anchor", cfg.use_synth ? 0 : -1);
  cfg.clean_training = ini.get_bool("data", "clean_training", true);
  cfg.feature_mode = feature_mode_from_string(
      ini.get("data", "feature_mode", cfg.use_synth ? "role" : "degree"));
  cfg.neg_ratio = ini.get_double("data", "neg_ratio", 1.0);
  if (cfg.neg_ratio < 0) throw std::invalid_argument(ini.origin + ": neg_ratio must be >= 0");
  cfg.offset = ini.get_int("data", "offset", 0);
  if (cfg.offset != 0 && cfg.offset != 1)
    throw std::invalid_argument(ini.origin + ": offset must be 0 or 1");
  cfg.wl_iters = ini.get_int("data", "wl_iters", 3);
  if (cfg.wl_iters < 0) throw std::invalid_argument(ini.origin + ": wl_iters must be >= 0");
  cfg.partition = partition_strategy_from_string(ini.get("data", "partition", "community"));
  cfg.partition_csv = ini.get("data", "partition_csv", "");
  if (!cfg.partition_csv.empty() && !std::filesystem::exists(cfg.partition_csv))
    throw std::invalid_argument(ini.origin + ": partition_csv not found: " + cfg.partition_csv);

  bool has_ts = ini.find("data", "train_end") || ini.find("data", "val_end");
  bool has_frac = ini.find("data", "train_frac") || ini.find("data", "val_frac");
  if (has_ts && has_frac)
    throw std::invalid_argument(ini.origin + ": give either fractions or timestamps, not both");
  if (has_ts) {
    cfg.split_by_time = true;
    cfg.train_end_ts = ini.get_i64("data", "train_end", 0);
    cfg.val_end_ts = ini.get_i64("data", "val_end", 0);
    if (!ini.find("data", "train_end") || !ini.find("data", "val_end"))
      throw std::invalid_argument(ini.origin + ": time split needs both train_end and val_end");
    if (cfg.val_end_ts <= cfg.train_end_ts)
      throw std::invalid_argument(ini.origin + ": val_end must be after train_end");
  } else {
    cfg.train_frac = ini.get_double("data", "train_frac", 0.70);
    cfg.val_frac = ini.get_double("data", "val_frac", 0.15);
    if (cfg.train_frac <= 0 || cfg.val_frac < 0 || cfg.train_frac + cfg.val_frac >= 1)
      throw std::invalid_argument(ini.origin + ": fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  }

  if (cfg.use_synth) {
    cfg.synth.nodes = ini.get_int("synth", "nodes", 200);
    cfg.synth.blocks = ini.get_int("synth", "blocks", 4);
    cfg.synth.snapshots = ini.get_int("synth", "snapshots", 20);
    cfg.synth.window_seconds = cfg.window_seconds;
    cfg.synth.intra_prob = ini.get_double("synth", "intra_prob", 0.05);
    cfg.synth.inter_prob = ini.get_double("synth", "inter_prob", 0.005);
    cfg.synth.anomaly_count = ini.get_int("synth", "anomaly_count", 40);
    cfg.synth.anomaly_start = ini.get_int("synth", "anomaly_start", 18);
    cfg.synth.anomaly_end = ini.get_int("synth", "anomaly_end", cfg.synth.snapshots);
    cfg.synth.seed = cfg.seed_data;
    validate_synth(cfg.synth);
  }

  cfg.d_h = ini.get_int("model", "d_h", 32);
  cfg.d_z = ini.get_int("model", "d_z", 16);
  if (cfg.d_h < 1 || cfg.d_z < 1)
    throw std::invalid_argument(ini.origin + ": model dims must be >= 1");

  cfg.fed.scheme = scheme_from_string(ini.get("federation", "scheme", "entente"));
  cfg.fed.clients = ini.get_int("federation", "clients", 4);
  cfg.fed.max_iterations = ini.get_int("federation", "max_iterations", 30);
  cfg.fed.local_epochs = ini.get_int("federation", "local_epochs", 1);
  cfg.fed.eta = ini.get_double("federation", "eta", 0.01);
  cfg.fed.c1 = ini.get_double("federation", "c1", 0.8);
  cfg.fed.c2 = ini.get_double("federation", "c2", 0.2);
  cfg.fed.omega = ini.get_double("federation", "omega", 5.0);
  cfg.fed.norm_cap = ini.get_double("federation", "norm_cap", 5.0);
  cfg.fed.ba_m = ini.get_int("federation", "ba_m", 5);
  cfg.fed.stop_tol = ini.get_double("federation", "stop_tol", 1e-4);
  cfg.fed.stop_patience = ini.get_int("federation", "stop_patience", 3);
  cfg.fed.prox_mu = ini.get_double("federation", "prox_mu", 0.05);
  cfg.fed.workers = ini.get_int("federation", "workers", 1);
  cfg.fed.seed = seed_for("federation");
  if (cfg.fed.scheme == Scheme::entente_dp) {
    DpParams dp;
    dp.sigma = ini.get_double("federation", "dp_sigma", 1.0);
    dp.m_qs = ini.get_double("federation", "dp_m_qs", cfg.fed.norm_cap);
    cfg.fed.dp = dp;
  }
  validate_config(cfg.fed);

  if (ini.has_section("attack")) {
    AttackConfig atk;
    for (int k : detail::parse_int_list(ini.require("attack", "malicious_clients")))
      atk.malicious_clients.insert(k);
    atk.p = ini.get_double("attack", "p", 1.0);
    atk.gamma = ini.get_double("attack", "gamma", 1.0);
    atk.seed = seed_for("attack");
    validate_attack(atk, cfg.fed.clients);
    cfg.attack = atk;
  }

  cfg.out_dir = ini.get("output", "dir", "out");
  return cfg;
}

inline ExperimentConfig load_experiment_file(const std::string& path,
                                             std::optional<std::uint64_t> master_override = {}) {
  return load_experiment(parse_ini_file(path), master_override);
}

}  // namespace entente
