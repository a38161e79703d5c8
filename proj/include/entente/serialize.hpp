#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "entente/federation.hpp"
#include "entente/metrics.hpp"
#include "entente/model.hpp"

namespace entente {

// Shortest exact decimal form; the same value always prints the same bytes,
// which the reproducibility checks on emitted CSV/JSON rely on.
inline std::string fmt_double(double x) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
    double back = 0.0;
    if (std::sscanf(buf, "%lf", &back) == 1 && back == x) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << content;
  if (!out) throw std::runtime_error(path + ": write failed");
}

// Model artifact: raw float64 blob next to a JSON manifest describing dims
// and the flat-layout segments, so the blob stays loadable without the code.
inline void save_model(const std::string& dir, const ModelParams& p) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream blob(dir + "/model.bin", std::ios::binary);
  if (!blob) throw std::runtime_error(dir + "/model.bin: cannot open for writing");
  blob.write(reinterpret_cast<const char*>(p.flat.data()),
             static_cast<std::streamsize>(p.flat.size() * sizeof(double)));
  if (!blob) throw std::runtime_error(dir + "/model.bin: write failed");
  blob.close();

  nlohmann::json j;
  j["dtype"] = "float64";
  j["byte_order"] = "little";
  j["d_x"] = p.dims.d_x;
  j["d_h"] = p.dims.d_h;
  j["d_z"] = p.dims.d_z;
  j["param_count"] = p.flat.size();
  auto segs = nlohmann::json::array();
  for (const auto& s : param_segments(p.dims))
    segs.push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}});
  j["segments"] = segs;
  write_text_file(dir + "/model.json", j.dump(2) + "\n");
}

inline ModelParams load_model(const std::string& dir) {
  auto j = nlohmann::json::parse(read_text_file(dir + "/model.json"));
  ModelParams p;
  p.dims.d_x = j.at("d_x").get<int>();
  p.dims.d_h = j.at("d_h").get<int>();
  p.dims.d_z = j.at("d_z").get<int>();
  validate_dims(p.dims);
  auto count = j.at("param_count").get<std::size_t>();
  if (count != param_size(p.dims))
    throw std::runtime_error(dir + "/model.json: param_count does not match dims");
  std::ifstream blob(dir + "/model.bin", std::ios::binary | std::ios::ate);
  if (!blob) throw std::runtime_error(dir + "/model.bin: cannot open");
  auto bytes = static_cast<std::size_t>(blob.tellg());
  if (bytes != count * sizeof(double))
    throw std::runtime_error(dir + "/model.bin: size does not match manifest");
  blob.seekg(0);
  p.flat.resize(count);
  blob.read(reinterpret_cast<char*>(p.flat.data()), static_cast<std::streamsize>(bytes));
  if (!blob) throw std::runtime_error(dir + "/model.bin: read failed");
  return p;
}

inline std::string render_trajectory_csv(const FederationState& st) {
  std::string out = "iteration,client,r,s_jac,s,d\n";
  for (const auto& rec : st.history) {
    for (std::size_t k = 0; k < rec.weights.size(); ++k) {
      const auto& w = rec.weights[k];
      out += std::to_string(rec.iteration);
      out += ',';
      out += std::to_string(k + 1);
      out += ',';
      out += fmt_double(w.r);
      out += ',';
      out += fmt_double(w.s_jac);
      out += ',';
      out += fmt_double(w.s);
      out += ',';
      out += fmt_double(w.d);
      out += '\n';
    }
  }
  return out;
}

// Full run record. Worker count is deliberately not echoed: runs that differ
// only in parallelism must emit identical bytes.
inline std::string render_history_json(const FederationConfig& cfg,
                                       const FederationState& st,
                                       std::optional<double> epm) {
  nlohmann::json j;
  j["scheme"] = to_string(cfg.scheme);
  j["clients"] = cfg.clients;
  j["max_iterations"] = cfg.max_iterations;
  j["local_epochs"] = cfg.local_epochs;
  j["eta"] = cfg.eta;
  j["c1"] = cfg.c1;
  j["c2"] = cfg.c2;
  j["omega"] = cfg.omega;
  j["norm_cap"] = cfg.norm_cap;
  j["ba_m"] = cfg.ba_m;
  if (cfg.dp) j["dp"] = {{"m_qs", cfg.dp->m_qs}, {"sigma", cfg.dp->sigma}};
  j["s_jac"] = st.s_jac;
  j["aborted"] = st.aborted;
  j["diagnosis"] = st.diagnosis;
  j["stopped_early"] = st.stopped_early;
  j["iterations_run"] = st.history.size();
  if (epm) j["epm"] = *epm;
  auto rounds = nlohmann::json::array();
  for (const auto& rec : st.history) {
    nlohmann::json r;
    r["iteration"] = rec.iteration;
    r["train_loss"] = rec.train_loss;
    if (std::isnan(rec.val_loss))
      r["val_loss"] = nullptr;
    else
      r["val_loss"] = rec.val_loss;
    r["delta_norm"] = rec.delta_norm;
    r["rel_change"] = rec.rel_change;
    auto clients = nlohmann::json::array();
    for (std::size_t k = 0; k < rec.weights.size(); ++k) {
      const auto& w = rec.weights[k];
      clients.push_back({{"client", k + 1},
                         {"r", w.r},
                         {"s_jac", w.s_jac},
                         {"s", w.s},
                         {"d", w.d}});
    }
    r["clients"] = clients;
    rounds.push_back(r);
  }
  j["rounds"] = rounds;
  return j.dump(2) + "\n";
}

struct HistorySummary {
  std::string scheme;
  bool aborted = false;
  std::string diagnosis;
  std::optional<double> epm;
};

inline HistorySummary parse_history_summary(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  HistorySummary h;
  h.scheme = j.at("scheme").get<std::string>();
  h.aborted = j.at("aborted").get<bool>();
  h.diagnosis = j.at("diagnosis").get<std::string>();
  if (j.contains("epm") && !j["epm"].is_null()) h.epm = j["epm"].get<double>();
  return h;
}

struct MetricsReport {
  double ap = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double precision = std::numeric_limits<double>::quiet_NaN();
  double recall = std::numeric_limits<double>::quiet_NaN();
  double fpr_printed = std::numeric_limits<double>::quiet_NaN();
  double fpr_conventional = std::numeric_limits<double>::quiet_NaN();
  double tau = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> sr;
  std::optional<double> epm;
};

inline std::string render_metrics_json(const MetricsReport& m) {
  nlohmann::json j;
  auto put = [&](const char* key, double v) {
    if (std::isnan(v))
      j[key] = nullptr;
    else
      j[key] = v;
  };
  put("ap", m.ap);
  put("auc", m.auc);
  put("precision", m.precision);
  put("recall", m.recall);
  put("fpr_printed", m.fpr_printed);
  put("fpr_conventional", m.fpr_conventional);
  put("tau", m.tau);
  if (m.sr) put("sr", *m.sr);
  if (m.epm) put("epm", *m.epm);
  return j.dump(2) + "\n";
}

inline MetricsReport parse_metrics_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  MetricsReport m;
  auto take = [&](const char* key, double& dst) {
    if (j.contains(key) && !j[key].is_null()) dst = j[key].get<double>();
  };
  take("ap", m.ap);
  take("auc", m.auc);
  take("precision", m.precision);
  take("recall", m.recall);
  take("fpr_printed", m.fpr_printed);
  take("fpr_conventional", m.fpr_conventional);
  take("tau", m.tau);
  if (j.contains("sr") && !j["sr"].is_null()) m.sr = j["sr"].get<double>();
  if (j.contains("epm") && !j["epm"].is_null()) m.epm = j["epm"].get<double>();
  return m;
}

inline std::string render_pr_csv(const std::vector<PrPoint>& pts) {
  std::string out = "threshold,recall,precision\n";
  for (const auto& p : pts) {
    out += fmt_double(p.threshold);
    out += ',';
    out += fmt_double(p.recall);
    out += ',';
    out += fmt_double(p.precision);
    out += '\n';
  }
  return out;
}

}  // namespace entente
