#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qgcn/dataset.hpp"
#include "qgcn/graph.hpp"
#include "qgcn/metrics.hpp"
#include "qgcn/model.hpp"
#include "qgcn/rng.hpp"
#include "qgcn/train.hpp"

namespace qgcn {

// Fixed-format double rendering so output files are byte-stable across runs.
inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string fmt_g(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

struct RunConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path out_dir;
  std::filesystem::path checkpoint;  // input for evaluation-only runs
  ModelConfig model;
  TrainConfig train;
  std::vector<int> topk = {20};
  int eval_interval = 10;
  // Early stop after this many validation evaluations without a recall
  // improvement at the primary K; 0 disables.
  int patience = 0;

  int primary_k() const { return topk.empty() ? 20 : topk.front(); }

  void validate() const {
    model.validate();
    train.validate();
    if (topk.empty()) throw std::invalid_argument("run config: topk list is empty");
    for (int k : topk)
      if (k < 1) throw std::invalid_argument("run config: topk entries must be >= 1");
    if (eval_interval < 1)
      throw std::invalid_argument("run config: eval_interval must be >= 1");
    if (patience < 0) throw std::invalid_argument("run config: patience must be >= 0");
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& t) {
  return nlohmann::json{{"lr", t.lr},         {"batch_size", t.batch_size},
                        {"reg", t.reg},       {"epochs", t.epochs},
                        {"seed", t.seed},     {"reg_scope", reg_scope_name(t.reg_scope)}};
}

inline std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.view());
}

// ---- prepare ----

inline Manifest run_prepare(const std::filesystem::path& input,
                            const std::filesystem::path& out_dir, int k,
                            double val_ratio, double test_ratio, std::uint64_t seed) {
  const RawDataset raw = load_raw(input);
  const RawDataset filtered = kcore_filter(raw, k);
  const SplitDataset split = split_per_user(filtered, val_ratio, test_ratio, seed);
  save_split(out_dir, split, seed, k);
  return load_manifest(out_dir);
}

// Imports a pre-made train/test pair sharing one external id space. Users
// with no training interactions are dropped (nothing to rank them by);
// items seen only in the test file are kept as cold items. No k-core, no
// validation split.
inline Manifest run_prepare_import(const std::filesystem::path& train_path,
                                   const std::filesystem::path& test_path,
                                   const std::filesystem::path& out_dir) {
  DenseIdMapper ids;
  std::ifstream train_in(train_path);
  if (!train_in) throw std::runtime_error("cannot open " + train_path.string());
  const auto train_pairs = parse_pairs(train_in, ids);
  std::ifstream test_in(test_path);
  if (!test_in) throw std::runtime_error("cannot open " + test_path.string());
  const auto test_pairs = parse_pairs(test_in, ids);
  if (train_pairs.empty()) throw EmptyDatasetError("no training interactions parsed");

  std::vector<char> has_train(ids.user_ids.size(), 0);
  for (auto [u, i] : train_pairs) has_train[std::size_t(u)] = 1;
  std::vector<int> user_map(ids.user_ids.size(), -1);
  int kept = 0;
  for (std::size_t u = 0; u < has_train.size(); ++u)
    if (has_train[u]) user_map[u] = kept++;
  const int N = int(ids.item_ids.size());

  auto remap = [&](const std::vector<std::pair<int, int>>& pairs) {
    std::vector<std::pair<int, int>> out;
    out.reserve(pairs.size());
    for (auto [u, i] : pairs)
      if (user_map[std::size_t(u)] >= 0) out.emplace_back(user_map[std::size_t(u)], i);
    return out;
  };
  SplitDataset split;
  split.train = build_interactions(kept, N, remap(train_pairs));
  split.val = build_interactions(kept, N, {});
  split.test = build_interactions(kept, N, remap(test_pairs));
  save_split(out_dir, split, 0, 0);
  return load_manifest(out_dir);
}

// ---- train ----

struct EpochRecord {
  int epoch;
  double loss;
  double wall_ms;
};

struct EvalRecord {
  int epoch;
  std::string split;
  int k;
  double recall;
  double ndcg;
  double loss;  // training loss at that epoch
};

struct TrainOutcome {
  ModelParams final_params;
  ModelParams best_params;
  int best_epoch = 0;
  double best_val_recall = -1.0;
  std::vector<EpochRecord> epochs;
  std::vector<EvalRecord> evals;
};

inline std::vector<MetricReport> evaluate_multi(const ModelConfig& cfg,
                                                const ModelParams& params,
                                                const NormalizedAdjacency& adj,
                                                const SplitDataset& split,
                                                EvalSplit which,
                                                const std::vector<int>& ks) {
  const RealMatrix final_table = forward(cfg, params, adj, Mode::eval, 0).final;
  const int M = split.train.num_users;
  const int N = split.train.num_items;
  std::vector<MetricReport> reports;
  reports.reserve(ks.size());
  for (int k : ks) {
    if (which == EvalSplit::val)
      reports.push_back(evaluate_table(final_table, M, N, split.val, {&split.train}, k));
    else
      reports.push_back(
          evaluate_table(final_table, M, N, split.test, {&split.train, &split.val}, k));
  }
  return reports;
}

// Epoch loop with periodic validation, best-on-validation tracking (primary
// K recall), optional patience, and a final test evaluation of the best
// parameters. The training graph may differ from the evaluation graph
// (robustness runs); evaluation always uses eval_adj and the original
// split's exclusions.
inline TrainOutcome train_model(const SplitDataset& split,
                                const InteractionSet& train_graph,
                                const NormalizedAdjacency& train_adj,
                                const NormalizedAdjacency& eval_adj,
                                const RunConfig& cfg) {
  cfg.validate();
  const int M = split.train.num_users;
  const int N = split.train.num_items;
  TrainOutcome out;
  ModelParams params = init_params(cfg.model, M, N, cfg.train.seed);
  AdamState state = init_adam(params);
  out.best_params = params;
  const bool has_val = split.val.num_edges > 0;
  int stale_evals = 0;
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double loss =
        train_epoch(train_graph, train_adj, cfg.model, cfg.train, params, state, epoch);
    const auto t1 = std::chrono::steady_clock::now();
    out.epochs.push_back(
        {epoch, loss, std::chrono::duration<double, std::milli>(t1 - t0).count()});
    const bool eval_now = (epoch % cfg.eval_interval == 0) || epoch == cfg.train.epochs;
    if (!eval_now || !has_val) continue;
    const auto reports =
        evaluate_multi(cfg.model, params, eval_adj, split, EvalSplit::val, cfg.topk);
    for (const auto& r : reports)
      out.evals.push_back({epoch, "val", r.k, r.recall, r.ndcg, loss});
    const double primary = reports.front().recall;
    if (primary > out.best_val_recall) {
      out.best_val_recall = primary;
      out.best_epoch = epoch;
      out.best_params = params;
      stale_evals = 0;
    } else if (cfg.patience > 0 && ++stale_evals >= cfg.patience) {
      break;
    }
  }
  if (out.best_val_recall < 0.0) {
    // no validation evals happened; the final parameters stand in
    out.best_params = params;
    out.best_epoch = cfg.train.epochs;
  }
  out.final_params = std::move(params);
  if (cfg.train.epochs > 0 && split.test.num_edges > 0) {
    const double best_loss = [&] {
      for (const auto& e : out.epochs)
        if (e.epoch == out.best_epoch) return e.loss;
      return 0.0;
    }();
    const auto reports = evaluate_multi(cfg.model, out.best_params, eval_adj, split,
                                        EvalSplit::test, cfg.topk);
    for (const auto& r : reports)
      out.evals.push_back({out.best_epoch, "test", r.k, r.recall, r.ndcg, best_loss});
  }
  return out;
}

namespace detail {

inline void write_run_config(const RunConfig& cfg, const std::string& kind) {
  nlohmann::json j = {
      {"kind", kind},
      {"dataset", cfg.dataset_dir.string()},
      {"out", cfg.out_dir.string()},
      {"model", config_to_json(cfg.model)},
      {"train", train_config_to_json(cfg.train)},
      {"topk", cfg.topk},
      {"eval_interval", cfg.eval_interval},
      {"patience", cfg.patience},
  };
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                (unsigned long long)file_hash(cfg.dataset_dir / "manifest.json"));
  j["manifest_fnv1a64"] = hex;
  j["seed_streams"] = {{"master", cfg.train.seed},
                       {"init", derive_seed(cfg.train.seed, "init", 0)},
                       {"sample", derive_seed(cfg.train.seed, "sample")},
                       {"dropout", derive_seed(cfg.train.seed, "dropout")},
                       {"perturb", derive_seed(cfg.train.seed, "perturb")}};
  std::ofstream out(cfg.out_dir / "run_config.json");
  if (!out) throw std::runtime_error("cannot write run_config.json");
  out << j.dump(2) << '\n';
}

inline void write_metrics_csv(const RunConfig& cfg, const TrainOutcome& outcome) {
  const int k0 = cfg.primary_k();
  std::ofstream csv(cfg.out_dir / "metrics.csv");
  if (!csv) throw std::runtime_error("cannot write metrics.csv");
  csv << "epoch,loss,split,recall@" << k0 << ",ndcg@" << k0 << "\n";
  for (const auto& e : outcome.evals) {
    if (e.k != k0) continue;
    csv << e.epoch << ',' << fmt_g17(e.loss) << ',' << e.split << ','
        << fmt_g17(e.recall) << ',' << fmt_g17(e.ndcg) << "\n";
  }
  std::ofstream per_k(cfg.out_dir / "metrics_by_k.csv");
  if (!per_k) throw std::runtime_error("cannot write metrics_by_k.csv");
  per_k << "epoch,split,K,recall,ndcg\n";
  for (const auto& e : outcome.evals)
    per_k << e.epoch << ',' << e.split << ',' << e.k << ',' << fmt_g17(e.recall)
          << ',' << fmt_g17(e.ndcg) << "\n";
}

inline void write_run_log(const RunConfig& cfg, const TrainOutcome& outcome) {
  std::ofstream log(cfg.out_dir / "run.log");
  if (!log) throw std::runtime_error("cannot write run.log");
  for (const auto& e : outcome.epochs)
    log << "epoch=" << e.epoch << " loss=" << fmt_g17(e.loss)
        << " wall_ms=" << fmt_g(e.wall_ms) << "\n";
}

}  // namespace detail

inline TrainOutcome run_train(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const LoadedSplit loaded = load_split(cfg.dataset_dir);
  const NormalizedAdjacency adj = build_normalized_adjacency(loaded.split.train);
  detail::write_run_config(cfg, "train");
  const TrainOutcome outcome =
      train_model(loaded.split, loaded.split.train, adj, adj, cfg);
  detail::write_metrics_csv(cfg, outcome);
  detail::write_run_log(cfg, outcome);
  save_checkpoint(cfg.out_dir / "checkpoint.bin", cfg.model,
                  loaded.split.train.num_users, loaded.split.train.num_items,
                  outcome.best_epoch, outcome.best_params);
  return outcome;
}

inline nlohmann::json run_eval(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const LoadedSplit loaded = load_split(cfg.dataset_dir);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  if (ckpt.num_users != loaded.split.train.num_users ||
      ckpt.num_items != loaded.split.train.num_items)
    throw std::runtime_error("checkpoint shape does not match dataset");
  const NormalizedAdjacency adj = build_normalized_adjacency(loaded.split.train);
  nlohmann::json result = {{"checkpoint", cfg.checkpoint.string()},
                           {"epoch", ckpt.epoch},
                           {"val", nlohmann::json::array()},
                           {"test", nlohmann::json::array()}};
  if (loaded.split.val.num_edges > 0)
    for (const auto& r : evaluate_multi(ckpt.cfg, ckpt.params, adj, loaded.split,
                                        EvalSplit::val, cfg.topk))
      result["val"].push_back(r.to_json());
  if (loaded.split.test.num_edges > 0)
    for (const auto& r : evaluate_multi(ckpt.cfg, ckpt.params, adj, loaded.split,
                                        EvalSplit::test, cfg.topk))
      result["test"].push_back(r.to_json());
  std::ofstream out(cfg.out_dir / "eval.json");
  if (!out) throw std::runtime_error("cannot write eval.json");
  out << result.dump(2) << '\n';
  return result;
}

// ---- robustness ----

enum class PerturbMode { inject, discard };

inline const char* perturb_mode_name(PerturbMode m) {
  return m == PerturbMode::inject ? "inject" : "discard";
}

inline PerturbMode parse_perturb_mode(std::string_view s) {
  if (s == "inject") return PerturbMode::inject;
  if (s == "discard") return PerturbMode::discard;
  throw std::invalid_argument("unknown perturbation mode '" + std::string(s) + "'");
}

struct RobustnessRow {
  std::string mode;
  double ratio;
  std::string metric;
  double value;
  double relative_change_pct;
};

// Trains one model per noise ratio on a perturbed copy of the training
// graph (ratio 0 is the clean baseline and is prepended when missing) and
// evaluates every model on the original graph. The perturbation seed is
// derived from the ratio itself, so a ratio's graph is stable regardless of
// list order. Reported change is relative to the ratio-0 value.
inline std::vector<RobustnessRow> run_robustness(const RunConfig& cfg,
                                                 PerturbMode mode,
                                                 std::vector<double> ratios) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  std::sort(ratios.begin(), ratios.end());
  if (ratios.empty() || ratios.front() != 0.0) ratios.insert(ratios.begin(), 0.0);
  const LoadedSplit loaded = load_split(cfg.dataset_dir);
  const NormalizedAdjacency eval_adj = build_normalized_adjacency(loaded.split.train);
  detail::write_run_config(cfg, std::string("robustness-") + perturb_mode_name(mode));

  std::vector<RobustnessRow> rows;
  double base_recall = 0.0, base_ndcg = 0.0;
  for (double ratio : ratios) {
    InteractionSet train_graph = loaded.split.train;
    if (ratio > 0.0) {
      const std::uint64_t seed = derive_seed(
          cfg.train.seed, "perturb", std::uint64_t(std::llround(ratio * 1e6)));
      train_graph = mode == PerturbMode::inject
                        ? inject_edges(loaded.split.train, ratio, seed)
                        : discard_edges(loaded.split.train, ratio, seed);
    }
    const NormalizedAdjacency train_adj = build_normalized_adjacency(train_graph);
    RunConfig cell = cfg;
    cell.patience = 0;  // fixed-epoch cells keep ratios comparable
    const TrainOutcome outcome =
        train_model(loaded.split, train_graph, train_adj, eval_adj, cell);
    const auto reports = evaluate_multi(cfg.model, outcome.final_params, eval_adj,
                                        loaded.split, EvalSplit::test,
                                        {cfg.primary_k()});
    const double recall = reports.front().recall;
    const double ndcg = reports.front().ndcg;
    if (ratio == 0.0) {
      base_recall = recall;
      base_ndcg = ndcg;
    }
    auto pct = [](double v, double base) {
      return base == 0.0 ? 0.0 : (v - base) / base * 100.0;
    };
    rows.push_back({perturb_mode_name(mode), ratio, "recall", recall,
                    pct(recall, base_recall)});
    rows.push_back({perturb_mode_name(mode), ratio, "ndcg", ndcg, pct(ndcg, base_ndcg)});
  }
  std::ofstream csv(cfg.out_dir / "robustness.csv");
  if (!csv) throw std::runtime_error("cannot write robustness.csv");
  csv << "mode,ratio,metric,value,relative_change_pct\n";
  for (const auto& r : rows)
    csv << r.mode << ',' << fmt_g(r.ratio) << ',' << r.metric << ','
        << fmt_g17(r.value) << ',' << fmt_g17(r.relative_change_pct) << "\n";
  return rows;
}

// ---- ablation ----

struct AblationRow {
  std::string variant;
  std::string readout;
  int k;
  double recall;
  double ndcg;
};

// One trained cell per model variant at the configured readout, plus one
// per readout for the full model; all cells share the master seed so only
// the varied factor differs.
inline std::vector<AblationRow> run_ablation(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const LoadedSplit loaded = load_split(cfg.dataset_dir);
  const NormalizedAdjacency adj = build_normalized_adjacency(loaded.split.train);
  detail::write_run_config(cfg, "ablation");

  std::vector<std::pair<Variant, Readout>> cells;
  for (Variant v : {Variant::qgcn, Variant::qgcn_q, Variant::qgcn_w})
    cells.emplace_back(v, cfg.model.readout);
  for (Readout r : {Readout::max, Readout::sum, Readout::concat, Readout::mean})
    cells.emplace_back(Variant::qgcn, r);

  // drop duplicate cells while keeping first-seen order
  std::vector<std::pair<Variant, Readout>> unique_cells;
  for (auto c : cells)
    if (std::find(unique_cells.begin(), unique_cells.end(), c) == unique_cells.end())
      unique_cells.push_back(c);

  std::vector<AblationRow> rows;
  for (auto [variant, readout] : unique_cells) {
    RunConfig cell = cfg;
    cell.model.variant = variant;
    cell.model.readout = readout;
    cell.model.validate();
    const TrainOutcome outcome =
        train_model(loaded.split, loaded.split.train, adj, adj, cell);
    const auto reports = evaluate_multi(cell.model, outcome.best_params, adj,
                                        loaded.split, EvalSplit::test, cfg.topk);
    for (const auto& r : reports)
      rows.push_back({variant_name(variant), readout_name(readout), r.k, r.recall,
                      r.ndcg});
  }
  std::ofstream csv(cfg.out_dir / "ablation.csv");
  if (!csv) throw std::runtime_error("cannot write ablation.csv");
  csv << "variant,readout,K,recall,ndcg\n";
  for (const auto& r : rows)
    csv << r.variant << ',' << r.readout << ',' << r.k << ',' << fmt_g17(r.recall)
        << ',' << fmt_g17(r.ndcg) << "\n";
  return rows;
}

// ---- hyper-parameter sweep ----

struct SweepRow {
  double dropout;
  double reg;
  std::string split;
  int k;
  double recall;
  double ndcg;
};

inline std::vector<SweepRow> run_sweep(const RunConfig& cfg,
                                       const std::vector<double>& dropouts,
                                       const std::vector<double>& regs) {
  cfg.validate();
  if (dropouts.empty() || regs.empty())
    throw std::invalid_argument("sweep: empty grid");
  std::filesystem::create_directories(cfg.out_dir);
  const LoadedSplit loaded = load_split(cfg.dataset_dir);
  const NormalizedAdjacency adj = build_normalized_adjacency(loaded.split.train);
  detail::write_run_config(cfg, "sweep");

  std::vector<SweepRow> rows;
  for (double p : dropouts)
    for (double reg : regs) {
      RunConfig cell = cfg;
      cell.model.dropout = p;
      cell.train.reg = reg;
      cell.validate();
      const TrainOutcome outcome =
          train_model(loaded.split, loaded.split.train, adj, adj, cell);
      for (EvalSplit which : {EvalSplit::val, EvalSplit::test}) {
        const auto& target =
            which == EvalSplit::val ? loaded.split.val : loaded.split.test;
        if (target.num_edges == 0) continue;
        const auto reports = evaluate_multi(cell.model, outcome.best_params, adj,
                                            loaded.split, which, cfg.topk);
        for (const auto& r : reports)
          rows.push_back({p, reg, which == EvalSplit::val ? "val" : "test", r.k,
                          r.recall, r.ndcg});
      }
    }
  std::ofstream csv(cfg.out_dir / "sweep.csv");
  if (!csv) throw std::runtime_error("cannot write sweep.csv");
  csv << "dropout,reg,split,K,recall,ndcg\n";
  for (const auto& r : rows)
    csv << fmt_g(r.dropout) << ',' << fmt_g(r.reg) << ',' << r.split << ',' << r.k
        << ',' << fmt_g17(r.recall) << ',' << fmt_g17(r.ndcg) << "\n";
  return rows;
}

}  // namespace qgcn
