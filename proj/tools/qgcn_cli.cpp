#include <cctype>
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qgcn/runner.hpp"

namespace {

// QGCN_<FLAG> environment variables override any flag not given explicitly.
std::string env_name(const std::string& flag) {
  std::string out = "QGCN_";
  for (char c : flag) {
    if (c == '-') {
      if (!out.ends_with('_')) out.push_back('_');
    } else {
      out.push_back(char(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

CLI::Option* opt(CLI::App* app, const std::string& flag, auto& var,
                 const std::string& help) {
  auto* o = app->add_option(flag, var, help);
  o->capture_default_str();
  o->envname(env_name(flag.substr(flag.find_first_not_of('-'))));
  return o;
}

CLI::Option* flag(CLI::App* app, const std::string& name, bool& var,
                  const std::string& help) {
  auto* o = app->add_flag(name, var, help);
  o->envname(env_name(name.substr(name.find_first_not_of('-'))));
  return o;
}

struct CommonOpts {
  std::string dataset;
  std::string out;
  std::string variant = "qgcn";
  std::string readout = "mean";
  std::string reg_scope = "ego";
  int layers = 1;
  int embed_dim = 64;
  int batch_size = 2048;
  int epochs = 100;
  int eval_interval = 10;
  int patience = 0;
  double dropout = 0.0;
  double lr = 1e-4;
  double reg = 0.0;
  bool include_layer0 = false;
  std::vector<int> topk = {20};
  std::vector<double> layer_weights;
  std::uint64_t seed = 42;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  opt(sub, "--dataset", o.dataset, "prepared dataset directory")->required();
  opt(sub, "--out", o.out, "output directory for this run")->required();
  opt(sub, "--variant", o.variant, "model variant")
      ->check(CLI::IsMember({"qgcn", "qgcn-q", "qgcn-w", "lightgcn"}));
  opt(sub, "--layers", o.layers, "propagation layers");
  opt(sub, "--embed-dim", o.embed_dim, "total real embedding width D");
  opt(sub, "--dropout", o.dropout, "message dropout rate");
  opt(sub, "--readout", o.readout, "layer aggregation")
      ->check(CLI::IsMember({"max", "sum", "concat", "mean"}));
  flag(sub, "--include-layer0", o.include_layer0,
       "aggregate the ego embeddings alongside the propagated layers");
  opt(sub, "--layer-weights", o.layer_weights,
      "lightgcn per-layer weights (layers+1 values)")
      ->delimiter(',');
  opt(sub, "--lr", o.lr, "Adam learning rate");
  opt(sub, "--batch-size", o.batch_size, "BPR triples per batch");
  opt(sub, "--epochs", o.epochs, "training epochs");
  opt(sub, "--reg", o.reg, "L2 coefficient");
  opt(sub, "--reg-scope", o.reg_scope, "ego: batch layer-0 rows; all: every parameter")
      ->check(CLI::IsMember({"ego", "all"}));
  opt(sub, "--seed", o.seed, "master seed; all streams derive from it");
  opt(sub, "--topk", o.topk, "evaluation cutoffs; first is primary")->delimiter(',');
  opt(sub, "--eval-interval", o.eval_interval, "epochs between validation passes");
  opt(sub, "--patience", o.patience,
      "stop after this many validation passes without recall improvement (0 = off)");
}

qgcn::RunConfig to_run_config(const CommonOpts& o) {
  qgcn::RunConfig cfg;
  cfg.dataset_dir = o.dataset;
  cfg.out_dir = o.out;
  cfg.model.variant = qgcn::parse_variant(o.variant);
  cfg.model.layers = o.layers;
  cfg.model.embed_dim = o.embed_dim;
  cfg.model.dropout = o.dropout;
  cfg.model.readout = qgcn::parse_readout(o.readout);
  cfg.model.include_layer0 = o.include_layer0;
  cfg.model.layer_weights = o.layer_weights;
  cfg.train.lr = o.lr;
  cfg.train.batch_size = o.batch_size;
  cfg.train.epochs = o.epochs;
  cfg.train.reg = o.reg;
  cfg.train.reg_scope = qgcn::parse_reg_scope(o.reg_scope);
  cfg.train.seed = o.seed;
  cfg.topk = o.topk;
  cfg.eval_interval = o.eval_interval;
  cfg.patience = o.patience;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quaternion graph convolution recommender"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "filter, split, and index a dataset");
  std::string prep_input, prep_out, import_train, import_test;
  int k_core = 10;
  double val_ratio = 0.1, test_ratio = 0.1;
  std::uint64_t prep_seed = 42;
  opt(prepare, "--input", prep_input, "raw interaction file");
  opt(prepare, "--out", prep_out, "output directory")->required();
  opt(prepare, "--k-core", k_core, "minimum interactions per user and item");
  opt(prepare, "--val-ratio", val_ratio, "per-user validation share");
  opt(prepare, "--test-ratio", test_ratio, "per-user test share");
  opt(prepare, "--seed", prep_seed, "split seed");
  opt(prepare, "--import-train", import_train,
      "pre-made training file; skips k-core and splitting");
  opt(prepare, "--import-test", import_test, "pre-made test file (with --import-train)");
  prepare->callback([&] {
    qgcn::Manifest m;
    if (!import_train.empty()) {
      if (import_test.empty())
        throw CLI::ValidationError("--import-train requires --import-test");
      m = qgcn::run_prepare_import(import_train, import_test, prep_out);
    } else {
      if (prep_input.empty())
        throw CLI::ValidationError("prepare needs --input or --import-train");
      m = qgcn::run_prepare(prep_input, prep_out, k_core, val_ratio, test_ratio,
                            prep_seed);
    }
    std::cout << "prepared " << prep_out << ": M=" << m.num_users
              << " N=" << m.num_items << " train=" << m.train_edges
              << " val=" << m.val_edges << " test=" << m.test_edges << "\n";
  });

  // train
  auto* train = app.add_subcommand("train", "train a model and write checkpoints");
  CommonOpts train_opts;
  add_common(train, train_opts);
  train->callback([&] {
    const auto cfg = to_run_config(train_opts);
    const auto outcome = qgcn::run_train(cfg);
    std::cout << "trained " << cfg.train.epochs << " epochs";
    if (outcome.best_val_recall >= 0.0)
      std::cout << "; best val recall@" << cfg.primary_k() << " = "
                << qgcn::fmt_g(outcome.best_val_recall) << " at epoch "
                << outcome.best_epoch;
    std::cout << "\noutputs in " << cfg.out_dir.string() << "\n";
  });

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_dataset, eval_out, eval_ckpt;
  std::vector<int> eval_topk = {20};
  opt(eval, "--dataset", eval_dataset, "prepared dataset directory")->required();
  opt(eval, "--checkpoint", eval_ckpt, "checkpoint file")->required();
  opt(eval, "--out", eval_out, "output directory")->required();
  opt(eval, "--topk", eval_topk, "evaluation cutoffs")->delimiter(',');
  eval->callback([&] {
    qgcn::RunConfig cfg;
    cfg.dataset_dir = eval_dataset;
    cfg.out_dir = eval_out;
    cfg.checkpoint = eval_ckpt;
    cfg.topk = eval_topk;
    std::cout << qgcn::run_eval(cfg).dump(2) << "\n";
  });

  // robustness
  auto* robust = app.add_subcommand(
      "robustness", "train under graph perturbation, evaluate on the clean graph");
  CommonOpts robust_opts;
  add_common(robust, robust_opts);
  std::string perturb_mode = "inject";
  std::vector<double> ratios = {0.05, 0.10, 0.15, 0.20, 0.25};
  opt(robust, "--mode", perturb_mode, "perturbation kind")
      ->check(CLI::IsMember({"inject", "discard"}));
  opt(robust, "--ratios", ratios, "noise ratios (0 baseline added if missing)")
      ->delimiter(',');
  robust->callback([&] {
    const auto cfg = to_run_config(robust_opts);
    const auto rows =
        qgcn::run_robustness(cfg, qgcn::parse_perturb_mode(perturb_mode), ratios);
    for (const auto& r : rows)
      std::cout << r.mode << " ratio=" << qgcn::fmt_g(r.ratio) << " " << r.metric
                << "=" << qgcn::fmt_g(r.value) << " ("
                << qgcn::fmt_g(r.relative_change_pct) << "%)\n";
  });

  // ablation
  auto* ablation =
      app.add_subcommand("ablation", "variant and readout grid with shared seeds");
  CommonOpts ablation_opts;
  add_common(ablation, ablation_opts);
  ablation->callback([&] {
    const auto cfg = to_run_config(ablation_opts);
    const auto rows = qgcn::run_ablation(cfg);
    for (const auto& r : rows)
      std::cout << r.variant << "/" << r.readout << " recall@" << r.k << "="
                << qgcn::fmt_g(r.recall) << " ndcg@" << r.k << "="
                << qgcn::fmt_g(r.ndcg) << "\n";
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "dropout and L2 grid search");
  CommonOpts sweep_opts;
  add_common(sweep, sweep_opts);
  std::vector<double> sweep_dropouts = {0.0};
  std::vector<double> sweep_regs = {0.0};
  opt(sweep, "--dropouts", sweep_dropouts, "dropout grid")->delimiter(',');
  opt(sweep, "--regs", sweep_regs, "L2 coefficient grid")->delimiter(',');
  sweep->callback([&] {
    const auto cfg = to_run_config(sweep_opts);
    const auto rows = qgcn::run_sweep(cfg, sweep_dropouts, sweep_regs);
    for (const auto& r : rows)
      std::cout << "dropout=" << qgcn::fmt_g(r.dropout) << " reg=" << qgcn::fmt_g(r.reg)
                << " " << r.split << " recall@" << r.k << "=" << qgcn::fmt_g(r.recall)
                << " ndcg@" << r.k << "=" << qgcn::fmt_g(r.ndcg) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
