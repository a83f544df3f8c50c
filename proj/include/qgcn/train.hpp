#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "qgcn/graph.hpp"
#include "qgcn/matrix.hpp"
#include "qgcn/model.hpp"
#include "qgcn/rng.hpp"

namespace qgcn {

struct Triple {
  int u;  // user
  int i;  // positive item, from the user's training set
  int j;  // negative item, outside that set
};

enum class RegScope { ego, all };

inline const char* reg_scope_name(RegScope s) {
  return s == RegScope::ego ? "ego" : "all";
}

inline RegScope parse_reg_scope(std::string_view s) {
  if (s == "ego") return RegScope::ego;
  if (s == "all") return RegScope::all;
  throw std::invalid_argument("unknown reg scope '" + std::string(s) + "'");
}

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 2048;
  double reg = 0.0;
  int epochs = 100;
  std::uint64_t seed = 42;
  RegScope reg_scope = RegScope::ego;

  void validate() const {
    if (lr < 0.0) throw std::invalid_argument("train config: lr must be >= 0");
    if (batch_size < 1)
      throw std::invalid_argument("train config: batch_size must be >= 1");
    if (reg < 0.0) throw std::invalid_argument("train config: reg must be >= 0");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
  }
};

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow for large |x|
inline double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Positives uniform over training edges (via per-user degree prefix sums),
// negatives by rejection against the user's training set. A user whose
// training set covers every item cannot yield a negative, so their edge
// draws are rejected and resampled.
class TripleSampler {
 public:
  explicit TripleSampler(const InteractionSet& train) : g_(&train) {
    if (train.num_edges <= 0)
      throw std::invalid_argument("sampler: no training edges");
    prefix_.resize(std::size_t(train.num_users) + 1, 0);
    bool any_negative = false;
    for (int u = 0; u < train.num_users; ++u) {
      const auto deg = std::int64_t(train.items_of_user[std::size_t(u)].size());
      prefix_[std::size_t(u) + 1] = prefix_[std::size_t(u)] + deg;
      if (deg > 0 && deg < train.num_items) any_negative = true;
    }
    if (!any_negative)
      throw std::invalid_argument("sampler: no user has an unconsumed item");
  }

  Triple one(Rng& rng) const {
    for (;;) {
      const auto e = std::int64_t(rng.next_below(std::uint64_t(g_->num_edges)));
      const int u =
          int(std::upper_bound(prefix_.begin(), prefix_.end(), e) - prefix_.begin()) - 1;
      const auto& items = g_->items_of_user[std::size_t(u)];
      if (int(items.size()) == g_->num_items) continue;
      const int i = items[std::size_t(e - prefix_[std::size_t(u)])];
      for (;;) {
        const int j = int(rng.next_below(std::uint64_t(g_->num_items)));
        if (!g_->has_edge(u, j)) return {u, i, j};
      }
    }
  }

  std::vector<Triple> sample(int size, Rng& rng) const {
    std::vector<Triple> batch;
    batch.reserve(std::size_t(size));
    for (int t = 0; t < size; ++t) batch.push_back(one(rng));
    return batch;
  }

 private:
  const InteractionSet* g_;
  std::vector<std::int64_t> prefix_;
};

inline std::vector<Triple> sample_batch(const InteractionSet& train, int size,
                                        Rng& rng) {
  return TripleSampler(train).sample(size, rng);
}

inline void score_batch(const RealMatrix& final_table, int num_users,
                        const std::vector<Triple>& batch, std::vector<double>& pos,
                        std::vector<double>& neg) {
  pos.resize(batch.size());
  neg.resize(batch.size());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    pos[t] = predict(final_table, num_users, batch[t].u, batch[t].i);
    neg[t] = predict(final_table, num_users, batch[t].u, batch[t].j);
  }
}

// Mean over the batch of -ln sigma(pos - neg), plus the regularizer. Scope
// ego charges the layer-0 embeddings of each sampled (u, i, j) occurrence,
// averaged like the ranking term; scope all charges lambda * ||Theta||^2
// over every parameter block, unaveraged.
inline double bpr_loss(const std::vector<double>& pos, const std::vector<double>& neg,
                       const ModelParams& params, int num_users,
                       const std::vector<Triple>& batch, double reg, RegScope scope) {
  if (pos.size() != neg.size() || pos.size() != batch.size())
    throw std::invalid_argument("bpr_loss: score/batch length mismatch");
  if (batch.empty()) throw std::invalid_argument("bpr_loss: empty batch");
  double loss = 0.0;
  for (std::size_t t = 0; t < pos.size(); ++t)
    loss += stable_softplus(-(pos[t] - neg[t]));
  loss /= double(batch.size());
  if (reg > 0.0) {
    if (scope == RegScope::ego) {
      double s = 0.0;
      for (const Triple& t : batch) {
        s += squared_norm(params.embeddings.row_span(t.u));
        s += squared_norm(params.embeddings.row_span(num_users + t.i));
        s += squared_norm(params.embeddings.row_span(num_users + t.j));
      }
      loss += reg * s / double(batch.size());
    } else {
      double s = 0.0;
      for_each_block(params, [&](const std::string&, const RealMatrix& blk) {
        s += frobenius_squared(blk);
      });
      loss += reg * s;
    }
  }
  return loss;
}

namespace detail {

// out_row += (g_row - <g_row, unit_row> unit_row) / norm, the Jacobian of
// x -> x/||x|| applied to g; rows normalized from exact zero stay zero.
inline void l2norm_backward_add(const RealMatrix& normalized,
                                const std::vector<double>& norms, const RealMatrix& g,
                                RealMatrix& out) {
  for (int r = 0; r < g.rows(); ++r) {
    const double n = norms[std::size_t(r)];
    if (n == 0.0) continue;
    const auto unit = normalized.row_span(r);
    const auto grow = g.row_span(r);
    const double proj = dot(grow, unit);
    double* o = out.row(r);
    for (int c = 0; c < g.cols(); ++c) o[c] += (grow[c] - proj * unit[c]) / n;
  }
}

}  // namespace detail

// Exact reverse-mode gradients of the batch BPR loss with respect to every
// parameter entry, replayed from the forward trace. Chains the score
// gradients through the readout adjoint, the per-layer normalization
// Jacobian, the dropout masks, the transform adjoint (accumulating the
// shared-block gradients), and the symmetric adjacency back to the
// embedding table, then adds the regularizer's contribution.
inline ModelParams backward(const ModelConfig& cfg, const ModelParams& params,
                            const NormalizedAdjacency& adj, const ForwardResult& fwd,
                            const std::vector<Triple>& batch, int num_users,
                            double reg, RegScope scope) {
  const ForwardTrace& tr = fwd.trace;
  if (tr.mode != Mode::train)
    throw std::logic_error("backward: trace was not produced in train mode");
  if (tr.variant != cfg.variant || tr.layers != cfg.layers ||
      tr.nodes != params.embeddings.rows() || tr.width != params.embeddings.cols() ||
      int(tr.outputs.size()) != cfg.layers ||
      (cfg.has_transform() && int(tr.aggregated.size()) != cfg.layers))
    throw std::logic_error("backward: trace does not match config and params");
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");

  const RealMatrix& final_table = fwd.final;
  const int nodes = params.embeddings.rows();
  const int width = params.embeddings.cols();
  ModelParams grads = zeros_like(params);

  RealMatrix g_final(final_table.rows(), final_table.cols());
  const double inv_b = 1.0 / double(batch.size());
  for (const Triple& t : batch) {
    const double s = predict(final_table, num_users, t.u, t.i) -
                     predict(final_table, num_users, t.u, t.j);
    const double coeff = -stable_sigmoid(-s) * inv_b;
    const double* fu = final_table.row(t.u);
    const double* fi = final_table.row(num_users + t.i);
    const double* fj = final_table.row(num_users + t.j);
    double* gu = g_final.row(t.u);
    double* gi = g_final.row(num_users + t.i);
    double* gj = g_final.row(num_users + t.j);
    for (int c = 0; c < final_table.cols(); ++c) {
      gu[c] += coeff * (fi[c] - fj[c]);
      gi[c] += coeff * fu[c];
      gj[c] -= coeff * fu[c];
    }
  }

  if (cfg.variant == Variant::lightgcn) {
    const auto weights = cfg.resolved_layer_weights();
    RealMatrix g_layer = g_final;
    for (double& x : g_layer.data()) x *= weights[std::size_t(cfg.layers)];
    for (int l = cfg.layers; l >= 1; --l) {
      RealMatrix down = spmv(adj, g_layer);
      if (l >= 2) {
        g_layer = std::move(down);
        axpy(weights[std::size_t(l - 1)], g_final.data(),
             std::span<double>(g_layer.data()));
      } else {
        add_inplace(grads.embeddings, down);
        axpy(weights[0], g_final.data(), std::span<double>(grads.embeddings.data()));
      }
    }
  } else {
    const int slots = cfg.layers + (cfg.include_layer0 ? 1 : 0);
    const RealMatrix& layer0_table =
        cfg.normalizes() ? tr.layer0_normalized : params.embeddings;
    auto slot_table = [&](int s) -> const RealMatrix& {
      if (cfg.include_layer0) return s == 0 ? layer0_table : tr.outputs[std::size_t(s - 1)];
      return tr.outputs[std::size_t(s)];
    };

    std::vector<RealMatrix> g_slot(static_cast<std::size_t>(slots));
    switch (cfg.readout) {
      case Readout::sum:
        for (int s = 0; s < slots; ++s) g_slot[std::size_t(s)] = g_final;
        break;
      case Readout::mean: {
        const double inv = 1.0 / double(slots);
        for (int s = 0; s < slots; ++s) {
          g_slot[std::size_t(s)] = g_final;
          for (double& x : g_slot[std::size_t(s)].data()) x *= inv;
        }
        break;
      }
      case Readout::concat:
        for (int s = 0; s < slots; ++s) {
          RealMatrix slice(nodes, width);
          for (int r = 0; r < nodes; ++r) {
            const double* src = g_final.row(r) + std::size_t(s) * width;
            std::copy(src, src + width, slice.row(r));
          }
          g_slot[std::size_t(s)] = std::move(slice);
        }
        break;
      case Readout::max:
        // the max is reproduced from the stored tables; the first slot
        // attaining it takes the whole gradient (fixed tie order)
        for (int s = 0; s < slots; ++s) g_slot[std::size_t(s)] = RealMatrix(nodes, width);
        for (int r = 0; r < nodes; ++r)
          for (int c = 0; c < width; ++c) {
            const double m = final_table(r, c);
            for (int s = 0; s < slots; ++s)
              if (slot_table(s)(r, c) == m) {
                g_slot[std::size_t(s)](r, c) = g_final(r, c);
                break;
              }
          }
        break;
    }

    const int base = cfg.include_layer0 ? 1 : 0;
    RealMatrix g_out = std::move(g_slot[std::size_t(base + cfg.layers - 1)]);
    for (int l = cfg.layers; l >= 1; --l) {
      RealMatrix g_pre;
      if (cfg.normalizes()) {
        g_pre = RealMatrix(nodes, width);
        detail::l2norm_backward_add(tr.outputs[std::size_t(l - 1)],
                                    tr.norms[std::size_t(l - 1)], g_out, g_pre);
      } else {
        g_pre = std::move(g_out);
      }
      if (!tr.masks[std::size_t(l - 1)].empty())
        hadamard_inplace(g_pre, tr.masks[std::size_t(l - 1)]);
      RealMatrix g_agg;
      if (cfg.variant == Variant::qgcn) {
        const auto& w = params.transforms[std::size_t(l - 1)];
        g_agg = hamilton_transform_rows_adjoint(w, g_pre);
        hamilton_transform_grad(grads.transforms[std::size_t(l - 1)], g_pre,
                                tr.aggregated[std::size_t(l - 1)]);
      } else if (cfg.variant == Variant::qgcn_q) {
        const auto& w = params.real_transforms[std::size_t(l - 1)];
        g_agg = real_transform_rows_adjoint(w, g_pre);
        real_transform_grad(grads.real_transforms[std::size_t(l - 1)], g_pre,
                            tr.aggregated[std::size_t(l - 1)]);
      } else {
        g_agg = std::move(g_pre);
      }
      RealMatrix down = spmv(adj, g_agg);  // the adjacency is symmetric
      if (l >= 2) {
        g_out = std::move(g_slot[std::size_t(base + l - 2)]);
        add_inplace(g_out, down);
      } else {
        add_inplace(grads.embeddings, down);
      }
    }
    if (cfg.include_layer0) {
      if (cfg.normalizes())
        detail::l2norm_backward_add(tr.layer0_normalized, tr.layer0_norms, g_slot[0],
                                    grads.embeddings);
      else
        add_inplace(grads.embeddings, g_slot[0]);
    }
  }

  if (reg > 0.0) {
    if (scope == RegScope::ego) {
      const double c = 2.0 * reg * inv_b;
      for (const Triple& t : batch) {
        axpy(c, params.embeddings.row_span(t.u), grads.embeddings.row_span(t.u));
        axpy(c, params.embeddings.row_span(num_users + t.i),
             grads.embeddings.row_span(num_users + t.i));
        axpy(c, params.embeddings.row_span(num_users + t.j),
             grads.embeddings.row_span(num_users + t.j));
      }
    } else {
      std::vector<const RealMatrix*> src;
      for_each_block(params, [&](const std::string&, const RealMatrix& b) {
        src.push_back(&b);
      });
      std::size_t idx = 0;
      for_each_block(grads, [&](const std::string&, RealMatrix& b) {
        axpy(2.0 * reg, src[idx++]->data(), std::span<double>(b.data()));
      });
    }
  }
  return grads;
}

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::int64_t step = 0;
};

inline AdamState init_adam(const ModelParams& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(beta2, double(state.step));
  std::vector<RealMatrix*> pb, mb, vb;
  std::vector<const RealMatrix*> gb;
  for_each_block(params, [&](const std::string&, RealMatrix& b) { pb.push_back(&b); });
  for_each_block(grads, [&](const std::string&, const RealMatrix& b) { gb.push_back(&b); });
  for_each_block(state.m, [&](const std::string&, RealMatrix& b) { mb.push_back(&b); });
  for_each_block(state.v, [&](const std::string&, RealMatrix& b) { vb.push_back(&b); });
  for (std::size_t k = 0; k < pb.size(); ++k) {
    auto& p = pb[k]->data();
    const auto& g = gb[k]->data();
    auto& m = mb[k]->data();
    auto& v = vb[k]->data();
    for (std::size_t t = 0; t < p.size(); ++t) {
      m[t] = beta1 * m[t] + (1.0 - beta1) * g[t];
      v[t] = beta2 * v[t] + (1.0 - beta2) * g[t] * g[t];
      p[t] -= lr * (m[t] / bc1) / (std::sqrt(v[t] / bc2) + eps);
    }
  }
}

// One pass worth of sampled triples, ceil(E/batch) batches with the ragged
// remainder in the last one. Sampling draws from (seed, "sample", epoch),
// each batch's dropout masks from (seed, "dropout", epoch, batch).
inline double train_epoch(const InteractionSet& train, const NormalizedAdjacency& adj,
                          const ModelConfig& mcfg, const TrainConfig& tcfg,
                          ModelParams& params, AdamState& state, int epoch) {
  tcfg.validate();
  const std::int64_t total = train.num_edges;
  const int batches = int((total + tcfg.batch_size - 1) / tcfg.batch_size);
  TripleSampler sampler(train);
  Rng sample_rng(derive_seed(tcfg.seed, "sample", std::uint64_t(epoch)));
  double loss_sum = 0.0;
  std::vector<double> pos, neg;
  for (int b = 0; b < batches; ++b) {
    const int size = int(std::min<std::int64_t>(tcfg.batch_size,
                                                total - std::int64_t(b) * tcfg.batch_size));
    const auto batch = sampler.sample(size, sample_rng);
    const std::uint64_t mask_seed =
        derive_seed(tcfg.seed, "dropout", std::uint64_t(epoch), std::uint64_t(b));
    const ForwardResult fwd = forward(mcfg, params, adj, Mode::train, mask_seed);
    score_batch(fwd.final, train.num_users, batch, pos, neg);
    loss_sum += bpr_loss(pos, neg, params, train.num_users, batch, tcfg.reg,
                         tcfg.reg_scope);
    const ModelParams grads = backward(mcfg, params, adj, fwd, batch,
                                       train.num_users, tcfg.reg, tcfg.reg_scope);
    adam_step(params, grads, state, tcfg.lr);
  }
  return loss_sum / double(batches);
}

}  // namespace qgcn
