#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "entente/config.hpp"
#include "entente/dataset.hpp"
#include "entente/experiment.hpp"
#include "entente/serialize.hpp"

namespace fs = std::filesystem;
using namespace entente;

namespace {

std::string pct(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * x);
  return buf;
}

std::string raw2(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

int run_synth(const std::string& spec_path, std::string out_dir,
              std::optional<std::uint64_t> seed) {
  auto cfg = load_experiment_file(spec_path, seed);
  if (!cfg.use_synth)
    throw std::invalid_argument(spec_path + ": synth needs a [synth] section");
  auto r = synth_dataset(cfg.synth);
  if (out_dir.empty()) out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  write_edge_csv(out_dir + "/events.csv", r.events);
  write_node_map_csv(out_dir + "/blocks.csv", "node,block", r.block_of);
  std::size_t malicious = 0;
  for (const auto& e : r.events) malicious += static_cast<std::size_t>(e.label);
  std::printf("wrote %zu events (%zu malicious) and %zu blocks to %s\n",
              r.events.size(), malicious, r.block_of.size(), out_dir.c_str());
  return 0;
}

int run_partition(const std::string& config_path, std::string out_path,
                  std::optional<std::uint64_t> seed) {
  auto cfg = load_experiment_file(config_path, seed);
  auto data = load_dataset(cfg);
  auto g = build_graph(data.events, cfg.feature_mode, data.roles);
  auto pm = partition_nodes(g, cfg.fed.clients, cfg.partition, cfg.seed_partition);
  if (out_path.empty()) out_path = cfg.out_dir + "/partition.csv";
  if (auto parent = fs::path(out_path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  write_partition_csv(out_path, pm);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(pm.clients) + 1, 0);
  for (const auto& [node, client] : pm.assignment)
    ++sizes[static_cast<std::size_t>(client)];
  std::printf("wrote %s:", out_path.c_str());
  for (int k = 1; k <= pm.clients; ++k)
    std::printf(" client%d=%zu", k, sizes[static_cast<std::size_t>(k)]);
  std::printf("\n");
  return 0;
}

int run_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, std::optional<int> workers,
              bool enable_attack) {
  auto cfg = load_experiment_file(config_path, seed);
  if (workers) cfg.fed.workers = *workers;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  auto t = train_experiment(cfg, enable_attack);
  write_train_artifacts(cfg.out_dir, t);
  const auto& st = t.run.state;
  double last_loss = st.history.empty() ? std::numeric_limits<double>::quiet_NaN()
                                        : st.history.back().train_loss;
  std::printf("scheme=%s iterations=%zu stopped_early=%s train_loss=%s out=%s\n",
              to_string(cfg.fed.scheme).c_str(), st.history.size(),
              st.stopped_early ? "true" : "false", fmt_double(last_loss).c_str(),
              cfg.out_dir.c_str());
  if (t.epm) std::printf("poisoning epm=%s\n", fmt_double(*t.epm).c_str());
  if (st.aborted)
    std::printf("aborted after iteration %d: %s parameters detected\n", st.iteration,
                st.diagnosis.c_str());
  return 0;
}

int run_eval(const std::string& config_path, std::string model_dir, std::string out_dir,
             std::optional<std::uint64_t> seed) {
  auto cfg = load_experiment_file(config_path, seed);
  if (model_dir.empty()) model_dir = cfg.out_dir;
  if (out_dir.empty()) out_dir = cfg.out_dir;
  std::optional<double> epm;
  auto hist_path = model_dir + "/history.json";
  if (fs::exists(hist_path)) {
    auto h = parse_history_summary(read_text_file(hist_path));
    if (h.aborted) {
      std::fprintf(stderr, "error: run in %s aborted (%s); nothing to evaluate\n",
                   model_dir.c_str(), h.diagnosis.c_str());
      return 1;
    }
    epm = h.epm;
  }
  auto params = load_model(model_dir);
  auto ev = evaluate_model(cfg, params, epm);
  write_eval_artifacts(out_dir, ev);
  const auto& m = ev.metrics;
  std::printf("ap=%s auc=%s precision=%s recall=%s fpr=%s tau=%s", pct(m.ap).c_str(),
              pct(m.auc).c_str(), pct(m.precision).c_str(), pct(m.recall).c_str(),
              pct(m.fpr_conventional).c_str(), fmt_double(m.tau).c_str());
  if (m.sr) std::printf(" sr=%s", pct(*m.sr).c_str());
  if (m.epm) std::printf(" epm=%s", raw2(*m.epm).c_str());
  std::printf("\n");
  if (ev.threshold.degenerate)
    std::printf("warning: degenerate validation threshold\n");
  return 0;
}

int run_report(const std::vector<std::string>& dirs) {
  std::printf("%-12s %8s %8s %10s %8s %8s %8s %8s\n", "scheme", "ap", "auc",
              "precision", "recall", "fpr", "sr", "epm");
  for (const auto& dir : dirs) {
    auto h = parse_history_summary(read_text_file(dir + "/history.json"));
    MetricsReport m;
    if (!h.aborted && fs::exists(dir + "/metrics.json"))
      m = parse_metrics_json(read_text_file(dir + "/metrics.json"));
    if (h.epm && !m.epm) m.epm = h.epm;
    std::string sr = m.sr ? pct(*m.sr) : "nan";
    std::string epm = m.epm ? raw2(*m.epm) : "nan";
    std::printf("%-12s %8s %8s %10s %8s %8s %8s %8s%s\n", h.scheme.c_str(),
                pct(m.ap).c_str(), pct(m.auc).c_str(), pct(m.precision).c_str(),
                pct(m.recall).c_str(), pct(m.fpr_conventional).c_str(), sr.c_str(),
                epm.c_str(), h.aborted ? ("  aborted: " + h.diagnosis).c_str() : "");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated graph anomaly detection simulator"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string spec_path, config_path, out_path, model_dir;
  std::vector<std::string> report_dirs;

  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth->add_option("--spec", spec_path, "experiment file with a [synth] section")
      ->required();
  synth->add_option("--out", out_path, "output directory");
  synth->add_option("--seed", seed, "master seed override");

  auto* partition = app.add_subcommand("partition", "assign nodes to client silos");
  partition->add_option("--config", config_path, "experiment file")->required();
  partition->add_option("--out", out_path, "partition csv path");
  partition->add_option("--seed", seed, "master seed override");

  auto* train = app.add_subcommand("train", "run federated training");
  train->add_option("--config", config_path, "experiment file")->required();
  train->add_option("--out", out_path, "output directory");
  train->add_option("--seed", seed, "master seed override");
  train->add_option("--workers", workers, "worker thread count");

  auto* attack = app.add_subcommand("attack", "run federated training under attack");
  attack->add_option("--config", config_path, "experiment file with an [attack] section")
      ->required();
  attack->add_option("--out", out_path, "output directory");
  attack->add_option("--seed", seed, "master seed override");
  attack->add_option("--workers", workers, "worker thread count");

  auto* eval = app.add_subcommand("eval", "score the test split with a trained model");
  eval->add_option("--config", config_path, "experiment file")->required();
  eval->add_option("--model", model_dir, "directory holding model.bin and model.json");
  eval->add_option("--out", out_path, "output directory");
  eval->add_option("--seed", seed, "master seed override");

  auto* report = app.add_subcommand("report", "tabulate metrics from run directories");
  report->add_option("dirs", report_dirs, "run output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "run '" << (argc > 0 ? argv[0] : "entente")
              << " --help' for usage\n";
    return 2;
  }

  try {
    if (*synth) return run_synth(spec_path, out_path, seed);
    if (*partition) return run_partition(config_path, out_path, seed);
    if (*train) return run_train(config_path, out_path, seed, workers, false);
    if (*attack) return run_train(config_path, out_path, seed, workers, true);
    if (*eval) return run_eval(config_path, model_dir, out_path, seed);
    if (*report) return run_report(report_dirs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
