// Standalone acceptance gate: one PASS/FAIL line per criterion, nonzero
// exit iff a blocking criterion fails. Tolerances are pinned inline.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "qgcn/runner.hpp"

using namespace qgcn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

template <class Fn>
void criterion(int n, const char* what, double max_seconds, bool blocking, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (max_seconds > 0.0 && secs >= max_seconds) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + std::string("over the ") +
                std::to_string(max_seconds) + " s budget";
  }
  std::printf("%s criterion %d: %s (%.2f s)%s%s\n", o.pass ? "PASS" : "FAIL", n, what,
              secs, o.detail.empty() ? "" : " -- ", o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass && blocking) ++g_failures;
}

Quaternion random_q(Rng& rng) {
  return {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2),
          rng.uniform(-2, 2)};
}

bool q_equals(const Quaternion& a, double r, double i, double j, double k) {
  return a.r == r && a.i == i && a.j == j && a.k == k;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "qgcn_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// interactions clustered so that ranking within a user's cluster is learnable
void write_clustered_raw(const fs::path& path, int clusters, int users_per_cluster,
                         int items_per_cluster, int degree, std::uint64_t seed) {
  // Each user consumes `degree` distinct items from its own cluster, drawn
  // with a 1/rank popularity skew.  Cluster membership plus item popularity
  // is then the recoverable structure, which keeps ranking quality off its
  // ceiling and gives injected noise something to corrupt.
  Rng rng(seed);
  std::ofstream out(path);
  std::vector<double> cum(static_cast<std::size_t>(items_per_cluster));
  double total = 0.0;
  for (int i = 0; i < items_per_cluster; ++i) {
    total += 1.0 / double(i + 1);
    cum[std::size_t(i)] = total;
  }
  std::vector<char> taken(static_cast<std::size_t>(items_per_cluster));
  for (int c = 0; c < clusters; ++c)
    for (int t = 0; t < users_per_cluster; ++t) {
      std::fill(taken.begin(), taken.end(), 0);
      out << (c * users_per_cluster + t);
      for (int s = 0; s < degree; ++s) {
        int pick;
        do {
          const double r = rng.uniform(0.0, total);
          pick = int(std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
        } while (taken[std::size_t(pick)]);
        taken[std::size_t(pick)] = 1;
        out << ' ' << (c * items_per_cluster + pick);
      }
      out << '\n';
    }
}

Outcome check_quaternion_algebra() {
  const Quaternion one{1, 0, 0, 0};
  const Quaternion qi{0, 1, 0, 0}, qj{0, 0, 1, 0}, qk{0, 0, 0, 1};
  bool ok = q_equals(hamilton(qi, qi), -1, 0, 0, 0) &&
            q_equals(hamilton(qj, qj), -1, 0, 0, 0) &&
            q_equals(hamilton(qk, qk), -1, 0, 0, 0) &&
            q_equals(hamilton(hamilton(qi, qj), qk), -1, 0, 0, 0) &&
            q_equals(hamilton(qi, qj), 0, 0, 0, 1) &&
            q_equals(hamilton(qj, qi), 0, 0, 0, -1) &&
            q_equals(hamilton(qj, qk), 0, 1, 0, 0) &&
            q_equals(hamilton(qk, qj), 0, -1, 0, 0) &&
            q_equals(hamilton(qk, qi), 0, 0, 1, 0) &&
            q_equals(hamilton(qi, qk), 0, 0, -1, 0) &&
            q_equals(hamilton(one, qk), 0, 0, 0, 1);
  if (!ok) return {false, "basis identities broke"};
  Rng rng(derive_seed(101, "c1"));
  double worst_form = 0.0, worst_norm = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Quaternion q = random_q(rng), p = random_q(rng);
    const Quaternion a = hamilton(q, p);
    const Quaternion b = oracle::apply_q_matrix(q, p);
    worst_form = std::max({worst_form, std::abs(a.r - b.r), std::abs(a.i - b.i),
                           std::abs(a.j - b.j), std::abs(a.k - b.k)});
    worst_norm = std::max(worst_norm, std::abs(norm(a) - norm(q) * norm(p)));
  }
  if (worst_form > 1e-12)
    return {false, "bilinear vs matrix form gap " + std::to_string(worst_form)};
  if (worst_norm > 1e-9)
    return {false, "norm multiplicativity gap " + std::to_string(worst_norm)};
  return {true, ""};
}

Outcome check_block_transform() {
  Rng rng(derive_seed(101, "c2"));
  double worst = 0.0;
  for (int d : {1, 2, 4, 8}) {
    for (int trial = 0; trial < 100; ++trial) {
      QuaternionMatrix w(d);
      for (auto* blk : {&w.r, &w.i, &w.j, &w.k})
        for (double& x : blk->data()) x = rng.uniform(-1, 1);
      QuaternionVector v(d);
      for (auto* comp : {&v.r, &v.i, &v.j, &v.k})
        for (double& x : *comp) x = rng.uniform(-1, 1);
      const QuaternionVector got = hamilton_matvec(w, v);
      std::vector<double> flat(std::size_t(4) * d);
      for (int t = 0; t < d; ++t) {
        flat[std::size_t(t)] = v.r[std::size_t(t)];
        flat[std::size_t(d + t)] = v.i[std::size_t(t)];
        flat[std::size_t(2 * d + t)] = v.j[std::size_t(t)];
        flat[std::size_t(3 * d + t)] = v.k[std::size_t(t)];
      }
      const auto want = oracle::dense_matvec(oracle::dense_block_matrix(w), flat);
      for (int t = 0; t < d; ++t) {
        worst = std::max(worst, std::abs(got.r[std::size_t(t)] - want[std::size_t(t)]));
        worst = std::max(worst,
                         std::abs(got.i[std::size_t(t)] - want[std::size_t(d + t)]));
        worst = std::max(
            worst, std::abs(got.j[std::size_t(t)] - want[std::size_t(2 * d + t)]));
        worst = std::max(
            worst, std::abs(got.k[std::size_t(t)] - want[std::size_t(3 * d + t)]));
      }
    }
  }
  if (worst > 1e-10) return {false, "matvec vs dense gap " + std::to_string(worst)};
  return {true, ""};
}

Outcome check_parameter_sharing() {
  ModelConfig shared;
  shared.variant = Variant::qgcn;
  shared.embed_dim = 64;
  ModelConfig full = shared;
  full.variant = Variant::qgcn_q;
  if (shared.transform_params_per_layer() != 1024)
    return {false, "shared layer stores " +
                       std::to_string(shared.transform_params_per_layer())};
  if (full.transform_params_per_layer() != 4096)
    return {false, "unconstrained layer stores " +
                       std::to_string(full.transform_params_per_layer())};
  if (QuaternionMatrix(16).param_count() != 1024)
    return {false, "QuaternionMatrix(16) param_count off"};
  return {true, "1024 vs 4096 free reals at width 64"};
}

Outcome check_adjacency() {
  Rng rng(derive_seed(101, "c4"));
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + int(rng.next_below(10));
    const int n = 1 + int(rng.next_below(10));
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < m; ++u)
      for (int i = 0; i < n; ++i)
        if (rng.bernoulli(0.3)) edges.emplace_back(u, i);
    const InteractionSet g = build_interactions(m, n, edges);
    const RealMatrix got = oracle::csr_to_dense(build_normalized_adjacency(g));
    const RealMatrix want = oracle::dense_normalized_adjacency(g);
    for (int a = 0; a < got.rows(); ++a)
      for (int b = 0; b < got.cols(); ++b) {
        worst = std::max(worst, std::abs(got(a, b) - want(a, b)));
        if (got(a, b) != got(b, a))
          return {false, "asymmetric entry at (" + std::to_string(a) + "," +
                             std::to_string(b) + ")"};
      }
  }
  if (worst > 1e-12) return {false, "dense oracle gap " + std::to_string(worst)};
  return {true, ""};
}

Outcome check_gradients() {
  const InteractionSet train =
      build_interactions(3, 4, {{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 3}, {2, 0}});
  const NormalizedAdjacency adj = build_normalized_adjacency(train);
  const std::vector<Triple> batch = {{0, 0, 2}, {1, 2, 3}, {2, 3, 1}, {0, 1, 3}};
  const int num_users = 3;
  double worst = 0.0;
  std::string worst_case;
  for (const Variant variant :
       {Variant::qgcn, Variant::qgcn_q, Variant::qgcn_w, Variant::lightgcn}) {
    for (const Readout readout :
         {Readout::mean, Readout::sum, Readout::concat, Readout::max}) {
      for (const int layers : {1, 2}) {
        ModelConfig cfg;
        cfg.variant = variant;
        cfg.readout = readout;
        cfg.layers = layers;
        cfg.embed_dim = 8;  // four quaternion components of width 2
        cfg.dropout = 0.0;
        const ModelParams params = init_params(cfg, 3, 4, 131);
        const ForwardResult fwd = forward(cfg, params, adj, Mode::train, 0);
        const ModelParams analytic =
            backward(cfg, params, adj, fwd, batch, num_users, 0.0, RegScope::ego);
        auto loss_fn = [&](const ModelParams& p) {
          const ForwardResult f = forward(cfg, p, adj, Mode::train, 0);
          std::vector<double> pos, neg;
          score_batch(f.final, num_users, batch, pos, neg);
          return bpr_loss(pos, neg, p, num_users, batch, 0.0, RegScope::ego);
        };
        const ModelParams numeric = oracle::fd_gradients(params, loss_fn, 1e-5);
        const double gap = oracle::max_rel_error(analytic, numeric);
        if (gap > worst) {
          worst = gap;
          worst_case = std::string(variant_name(variant)) + "/" +
                       readout_name(readout) + "/L" + std::to_string(layers);
        }
      }
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max relative error %.2e at %s", worst,
                worst_case.c_str());
  return {worst <= 1e-4, buf};
}

Outcome check_memorization() {
  const InteractionSet train =
      build_interactions(4, 4, {{0, 0}, {1, 1}, {2, 2}, {3, 3}});
  const NormalizedAdjacency adj = build_normalized_adjacency(train);
  ModelConfig mcfg;
  mcfg.variant = Variant::qgcn;
  mcfg.layers = 1;
  mcfg.embed_dim = 16;  // quaternion width 4
  // Per-layer normalization bounds every score to [-1, 1], which puts a
  // positive floor (~0.23 here) under the pairwise loss no matter how well
  // the instance is memorized.  Run with the normalization switch off so the
  // loss can actually vanish and the stability window below measures the
  // optimizer instead of that floor.
  mcfg.l2_normalize = false;
  TrainConfig tcfg;
  tcfg.lr = 1e-2;
  tcfg.reg = 0.0;
  tcfg.batch_size = 1;
  tcfg.seed = 42;
  ModelParams params = init_params(mcfg, 4, 4, tcfg.seed);
  AdamState state = init_adam(params);
  const InteractionSet nothing = build_interactions(4, 4, {});
  std::vector<double> losses;
  int solved_at = -1;
  for (int epoch = 1; epoch <= 500; ++epoch) {
    losses.push_back(train_epoch(train, adj, mcfg, tcfg, params, state, epoch));
    if (solved_at < 0) {
      const RealMatrix final_table = forward(mcfg, params, adj, Mode::eval, 0).final;
      if (evaluate_table(final_table, 4, 4, train, {&nothing}, 1).recall == 1.0)
        solved_at = epoch;
    }
  }
  if (solved_at < 0) return {false, "top-1 recall on the positives never hit 1.0"};
  for (std::size_t e = 50; e + 50 <= losses.size(); ++e)
    if (losses[e + 50 - 1] > losses[e - 1] + 1e-3)
      return {false, "loss rose over the window starting at epoch " +
                         std::to_string(e) + " (" + std::to_string(losses[e - 1]) +
                         " -> " + std::to_string(losses[e + 50 - 1]) + ")"};
  return {true, "memorized at epoch " + std::to_string(solved_at)};
}

Outcome check_metric_oracles() {
  const std::vector<double> base = {0.9, 0.7, 0.5, 0.3};
  std::vector<int> perm = {0, 1, 2, 3};
  do {
    std::vector<double> scores(4);
    for (int i = 0; i < 4; ++i)
      scores[std::size_t(perm[std::size_t(i)])] = base[std::size_t(i)];
    RealMatrix table(5, 1);
    table(0, 0) = 1.0;
    for (int i = 0; i < 4; ++i) table(i + 1, 0) = scores[std::size_t(i)];
    for (int mask = 1; mask < 16; ++mask) {
      std::vector<int> relevant;
      std::set<int> rel_set;
      for (int i = 0; i < 4; ++i)
        if (mask & (1 << i)) {
          relevant.push_back(i);
          rel_set.insert(i);
        }
      for (int k = 1; k <= 3; ++k) {
        const RankedList ranked =
            rank_topk(table, 1, 0, k, std::vector<char>(4, 0));
        if (recall_at_k(ranked, relevant) != oracle::recall(ranked.items, rel_set))
          return {false, "recall mismatch at mask " + std::to_string(mask) + " K=" +
                             std::to_string(k)};
        if (ndcg_at_k(ranked, relevant, k) != oracle::ndcg(ranked.items, rel_set, k))
          return {false, "ndcg mismatch at mask " + std::to_string(mask) + " K=" +
                             std::to_string(k)};
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {true, "exact over every list and target set"};
}

Outcome check_perturbation_contract() {
  Rng rng(derive_seed(101, "c8"));
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < 12; ++u)
    for (int i = 0; i < 15; ++i)
      if (rng.bernoulli(0.3)) edges.emplace_back(u, i);
  const InteractionSet g = build_interactions(12, 15, edges);
  const auto baseline = g.edge_list();

  for (const double ratio : {0.1, 0.25}) {
    const auto grown = inject_edges(g, ratio, 55);
    const auto grown2 = inject_edges(g, ratio, 55);
    const std::int64_t want = g.num_edges + std::int64_t(ratio * double(g.num_edges));
    if (grown.num_edges != want)
      return {false, "inject count " + std::to_string(grown.num_edges) + " != " +
                         std::to_string(want)};
    if (grown.edge_list() != grown2.edge_list())
      return {false, "inject is not seed-deterministic"};
    const auto after = grown.edge_list();
    const std::set<std::pair<int, int>> after_set(after.begin(), after.end());
    for (const auto& e : baseline)
      if (!after_set.count(e)) return {false, "inject dropped an original edge"};

    const auto thinned = discard_edges(g, ratio, 56);
    const auto thinned2 = discard_edges(g, ratio, 56);
    if (thinned.num_edges != g.num_edges - std::int64_t(ratio * double(g.num_edges)))
      return {false, "discard count off"};
    if (thinned.edge_list() != thinned2.edge_list())
      return {false, "discard is not seed-deterministic"};
    const std::set<std::pair<int, int>> base_set(baseline.begin(), baseline.end());
    for (const auto& e : thinned.edge_list())
      if (!base_set.count(e)) return {false, "discard invented an edge"};
  }
  if (g.edge_list() != baseline)
    return {false, "perturbation mutated the source graph"};
  return {true, ""};
}

Outcome check_run_determinism() {
  const fs::path dir = work_dir() / "determinism";
  fs::create_directories(dir);
  write_clustered_raw(dir / "raw.txt", 2, 15, 10, 6, 9);
  run_prepare(dir / "raw.txt", dir / "data", 3, 0.1, 0.1, 42);
  RunConfig cfg;
  cfg.dataset_dir = dir / "data";
  cfg.model.embed_dim = 8;
  cfg.model.dropout = 0.3;
  cfg.train.lr = 0.01;
  cfg.train.batch_size = 32;
  cfg.train.epochs = 4;
  cfg.train.seed = 42;
  cfg.eval_interval = 2;
  cfg.topk = {5};
  cfg.out_dir = dir / "run1";
  run_train(cfg);
  cfg.out_dir = dir / "run2";
  run_train(cfg);
  const std::string a = read_file(dir / "run1" / "metrics.csv");
  const std::string b = read_file(dir / "run2" / "metrics.csv");
  if (a.empty() || a != b) return {false, "metrics.csv differs between runs"};
  return {true, "metrics.csv byte-identical across runs"};
}

Outcome check_robustness_trend() {
  const fs::path dir = work_dir() / "trend";
  fs::create_directories(dir);
  write_clustered_raw(dir / "raw.txt", 4, 250, 100, 12, 9);
  run_prepare(dir / "raw.txt", dir / "data", 3, 0.0, 0.2, 42);

  auto change_at_25 = [&](Variant variant) {
    RunConfig cfg;
    cfg.dataset_dir = dir / "data";
    cfg.out_dir = dir / (std::string("robust_") + variant_name(variant));
    cfg.model.variant = variant;
    cfg.model.embed_dim = 64;
    cfg.model.layers = 1;
    cfg.train.lr = 5e-3;
    cfg.train.batch_size = 2048;
    cfg.train.epochs = 80;
    cfg.train.seed = 42;
    cfg.eval_interval = 100;
    cfg.topk = {20};
    const auto rows = run_robustness(cfg, PerturbMode::inject, {0.25});
    // rows: ratio 0 recall, ratio 0 ndcg, ratio 0.25 recall, ratio 0.25 ndcg
    return std::tuple<double, double, double>(rows[0].value, rows[2].value,
                                              rows[2].relative_change_pct);
  };
  const auto [q_base, q_pert, q_pct] = change_at_25(Variant::qgcn);
  const auto [l_base, l_pert, l_pct] = change_at_25(Variant::lightgcn);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "recall@20 under 25%% injected noise: shared-transform %.4f -> %.4f "
                "(%+.1f%%), plain propagation %.4f -> %.4f (%+.1f%%)",
                q_base, q_pert, q_pct, l_base, l_pert, l_pct);
  const bool steadier = std::abs(q_pct) <= std::abs(l_pct);
  return {true, std::string(buf) + (steadier ? "; trend holds" : "; trend reversed")};
}

}  // namespace

int main() {
  criterion(1, "quaternion algebra identities and matrix-form equivalence", 1.0, true,
            check_quaternion_algebra);
  criterion(2, "block transform equals the realized dense product", 5.0, true,
            check_block_transform);
  criterion(3, "shared transform parameter count", 0.0, true, check_parameter_sharing);
  criterion(4, "normalized adjacency matches the dense oracle", 0.0, true,
            check_adjacency);
  criterion(5, "analytic gradients match finite differences", 60.0, true,
            check_gradients);
  criterion(6, "one-positive-per-user memorization", 30.0, true, check_memorization);
  criterion(7, "ranking metrics match exhaustive recomputation", 0.0, true,
            check_metric_oracles);
  criterion(8, "graph perturbation count and set semantics", 0.0, true,
            check_perturbation_contract);
  criterion(9, "byte-identical metrics across repeated runs", 0.0, true,
            check_run_determinism);
  criterion(10, "desk-scale noise-robustness trend (informative)", 0.0, false,
            check_robustness_trend);
  if (g_failures > 0) {
    std::printf("%d blocking criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all blocking criteria passed\n");
  return 0;
}
