#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qgcn/graph.hpp"
#include "qgcn/matrix.hpp"
#include "qgcn/quaternion.hpp"
#include "qgcn/rng.hpp"

namespace qgcn {

enum class Variant { qgcn, qgcn_q, qgcn_w, lightgcn };
enum class Readout { max, sum, concat, mean };
enum class Mode { train, eval };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::qgcn: return "qgcn";
    case Variant::qgcn_q: return "qgcn_q";
    case Variant::qgcn_w: return "qgcn_w";
    case Variant::lightgcn: return "lightgcn";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  std::string t(s);
  std::replace(t.begin(), t.end(), '-', '_');
  if (t == "qgcn") return Variant::qgcn;
  if (t == "qgcn_q") return Variant::qgcn_q;
  if (t == "qgcn_w") return Variant::qgcn_w;
  if (t == "lightgcn") return Variant::lightgcn;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

inline const char* readout_name(Readout r) {
  switch (r) {
    case Readout::max: return "max";
    case Readout::sum: return "sum";
    case Readout::concat: return "concat";
    case Readout::mean: return "mean";
  }
  return "?";
}

inline Readout parse_readout(std::string_view s) {
  if (s == "max") return Readout::max;
  if (s == "sum") return Readout::sum;
  if (s == "concat") return Readout::concat;
  if (s == "mean") return Readout::mean;
  throw std::invalid_argument("unknown readout '" + std::string(s) + "'");
}

struct ModelConfig {
  int layers = 1;
  int embed_dim = 64;  // total real dimension D; quaternion dim is D/4
  double dropout = 0.0;
  Readout readout = Readout::mean;
  bool include_layer0 = false;
  Variant variant = Variant::qgcn;
  std::vector<double> layer_weights;  // lightgcn only; empty means uniform
  // Test hook: turning this off skips the per-layer L2 normalization so the
  // propagation can be compared against the lightgcn recursion directly.
  bool l2_normalize = true;

  bool quaternion_embeddings() const {
    return variant == Variant::qgcn || variant == Variant::qgcn_w;
  }
  bool has_transform() const {
    return variant == Variant::qgcn || variant == Variant::qgcn_q;
  }
  bool uses_dropout() const { return variant != Variant::lightgcn; }
  bool normalizes() const { return variant != Variant::lightgcn && l2_normalize; }
  int quat_dim() const { return embed_dim / 4; }

  std::vector<double> resolved_layer_weights() const {
    if (!layer_weights.empty()) return layer_weights;
    return std::vector<double>(std::size_t(layers) + 1, 1.0 / (layers + 1));
  }

  // Free reals in one propagation layer's transform. The quaternion form
  // shares its four d x d blocks across a 4d x 4d action, a quarter of the
  // unconstrained count.
  std::int64_t transform_params_per_layer() const {
    if (variant == Variant::qgcn) return 4LL * quat_dim() * quat_dim();
    if (variant == Variant::qgcn_q) return std::int64_t(embed_dim) * embed_dim;
    return 0;
  }

  void validate() const {
    if (layers < 1) throw std::invalid_argument("config: layers must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("config: embed_dim must be >= 1");
    if (quaternion_embeddings() && embed_dim % 4 != 0)
      throw std::invalid_argument(
          "config: embed_dim must be divisible by 4 for quaternion variants");
    if (dropout < 0.0 || dropout > 0.8)
      throw std::invalid_argument("config: dropout must be in [0, 0.8]");
    if (!layer_weights.empty()) {
      if (variant != Variant::lightgcn)
        throw std::invalid_argument("config: layer_weights apply to lightgcn only");
      if (int(layer_weights.size()) != layers + 1)
        throw std::invalid_argument("config: layer_weights needs layers+1 entries");
      for (double w : layer_weights)
        if (w < 0.0) throw std::invalid_argument("config: layer_weights must be >= 0");
    }
  }
};

// Embedding rows pack quaternion components as [r | i | j | k] blocks of
// quat_dim each; real variants use the full row directly.
struct ModelParams {
  RealMatrix embeddings;                     // (M+N) x D
  std::vector<QuaternionMatrix> transforms;  // variant qgcn, one per layer
  std::vector<RealMatrix> real_transforms;   // variant qgcn_q, one per layer
};

// Canonical block order: embeddings, then per layer either the four shared
// quaternion blocks (r, i, j, k) or the one unconstrained matrix. Adam
// state, regularization, checkpoints, and finite-difference sweeps all walk
// this same order.
template <class Params, class Fn>
void for_each_block(Params& p, Fn&& fn) {
  fn(std::string("embeddings"), p.embeddings);
  for (std::size_t l = 0; l < p.transforms.size(); ++l) {
    const std::string base = "W" + std::to_string(l);
    fn(base + ".r", p.transforms[l].r);
    fn(base + ".i", p.transforms[l].i);
    fn(base + ".j", p.transforms[l].j);
    fn(base + ".k", p.transforms[l].k);
  }
  for (std::size_t l = 0; l < p.real_transforms.size(); ++l)
    fn("W" + std::to_string(l), p.real_transforms[l]);
}

inline ModelParams allocate_params(const ModelConfig& cfg, int num_users, int num_items) {
  cfg.validate();
  ModelParams p;
  p.embeddings = RealMatrix(num_users + num_items, cfg.embed_dim);
  if (cfg.variant == Variant::qgcn)
    for (int l = 0; l < cfg.layers; ++l) p.transforms.emplace_back(cfg.quat_dim());
  else if (cfg.variant == Variant::qgcn_q)
    for (int l = 0; l < cfg.layers; ++l)
      p.real_transforms.emplace_back(cfg.embed_dim, cfg.embed_dim);
  return p;
}

inline ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.embeddings = RealMatrix(p.embeddings.rows(), p.embeddings.cols());
  for (const auto& w : p.transforms) z.transforms.emplace_back(w.dim());
  for (const auto& w : p.real_transforms) z.real_transforms.emplace_back(w.rows(), w.cols());
  return z;
}

// Xavier-uniform per block, bound sqrt(6 / (fan_in + fan_out)) of that
// block. Each tensor draws from its own stream: embeddings from
// derive_seed(seed, "init", 0), layer l's transform from
// derive_seed(seed, "init", 1 + l); quaternion blocks fill in r, i, j, k
// order, row-major.
inline ModelParams init_params(const ModelConfig& cfg, int num_users, int num_items,
                               std::uint64_t seed) {
  ModelParams p = allocate_params(cfg, num_users, num_items);
  const int nodes = num_users + num_items;
  const int D = cfg.embed_dim;
  {
    Rng rng(derive_seed(seed, "init", 0));
    if (cfg.quaternion_embeddings()) {
      const int d = cfg.quat_dim();
      const double bound = std::sqrt(6.0 / (nodes + d));
      for (int b = 0; b < 4; ++b)
        for (int r = 0; r < nodes; ++r)
          for (int c = 0; c < d; ++c)
            p.embeddings(r, b * d + c) = rng.uniform(-bound, bound);
    } else {
      const double bound = std::sqrt(6.0 / (nodes + D));
      for (int r = 0; r < nodes; ++r)
        for (int c = 0; c < D; ++c) p.embeddings(r, c) = rng.uniform(-bound, bound);
    }
  }
  if (cfg.variant == Variant::qgcn) {
    const int d = cfg.quat_dim();
    const double bound = std::sqrt(6.0 / (d + d));
    for (int l = 0; l < cfg.layers; ++l) {
      Rng rng(derive_seed(seed, "init", std::uint64_t(1 + l)));
      for (RealMatrix* blk : {&p.transforms[std::size_t(l)].r, &p.transforms[std::size_t(l)].i,
                              &p.transforms[std::size_t(l)].j, &p.transforms[std::size_t(l)].k})
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) (*blk)(r, c) = rng.uniform(-bound, bound);
    }
  } else if (cfg.variant == Variant::qgcn_q) {
    const double bound = std::sqrt(6.0 / (D + D));
    for (int l = 0; l < cfg.layers; ++l) {
      Rng rng(derive_seed(seed, "init", std::uint64_t(1 + l)));
      auto& w = p.real_transforms[std::size_t(l)];
      for (int r = 0; r < D; ++r)
        for (int c = 0; c < D; ++c) w(r, c) = rng.uniform(-bound, bound);
    }
  }
  return p;
}

// Applies the shared quaternion transform to every row of a packed table.
inline RealMatrix hamilton_transform_rows(const QuaternionMatrix& w,
                                          const RealMatrix& table) {
  const int d = w.dim();
  if (table.cols() != 4 * d)
    throw std::invalid_argument("hamilton_transform_rows: table width != 4d");
  RealMatrix out(table.rows(), table.cols());
  for (int r = 0; r < table.rows(); ++r) {
    const double* v = table.row(r);
    double* o = out.row(r);
    hamilton_block_apply(w, v, v + d, v + 2 * d, v + 3 * d, o, o + d, o + 2 * d,
                         o + 3 * d);
  }
  return out;
}

inline RealMatrix hamilton_transform_rows_adjoint(const QuaternionMatrix& w,
                                                  const RealMatrix& grad) {
  const int d = w.dim();
  if (grad.cols() != 4 * d)
    throw std::invalid_argument("hamilton_transform_rows_adjoint: width != 4d");
  RealMatrix out(grad.rows(), grad.cols());
  for (int r = 0; r < grad.rows(); ++r) {
    const double* g = grad.row(r);
    double* o = out.row(r);
    hamilton_block_apply_adjoint(w, g, g + d, g + 2 * d, g + 3 * d, o, o + d,
                                 o + 2 * d, o + 3 * d);
  }
  return out;
}

inline void hamilton_transform_grad(QuaternionMatrix& gw, const RealMatrix& grad,
                                    const RealMatrix& input) {
  const int d = gw.dim();
  for (int r = 0; r < grad.rows(); ++r) {
    const double* g = grad.row(r);
    const double* v = input.row(r);
    hamilton_block_grad_accumulate(gw, g, g + d, g + 2 * d, g + 3 * d, v, v + d,
                                   v + 2 * d, v + 3 * d);
  }
}

// out_row = w * row, treating rows as column vectors.
inline RealMatrix real_transform_rows(const RealMatrix& w, const RealMatrix& table) {
  if (table.cols() != w.cols())
    throw std::invalid_argument("real_transform_rows: width mismatch");
  RealMatrix out(table.rows(), w.rows());
  for (int r = 0; r < table.rows(); ++r) {
    const double* v = table.row(r);
    double* o = out.row(r);
    for (int a = 0; a < w.rows(); ++a) o[a] = dot({w.row(a), std::size_t(w.cols())},
                                                  {v, std::size_t(w.cols())});
  }
  return out;
}

inline RealMatrix real_transform_rows_adjoint(const RealMatrix& w,
                                              const RealMatrix& grad) {
  if (grad.cols() != w.rows())
    throw std::invalid_argument("real_transform_rows_adjoint: width mismatch");
  RealMatrix out(grad.rows(), w.cols());
  for (int r = 0; r < grad.rows(); ++r) {
    const double* g = grad.row(r);
    double* o = out.row(r);
    for (int a = 0; a < w.rows(); ++a) axpy(g[a], {w.row(a), std::size_t(w.cols())},
                                            {o, std::size_t(w.cols())});
  }
  return out;
}

inline void real_transform_grad(RealMatrix& gw, const RealMatrix& grad,
                                const RealMatrix& input) {
  for (int r = 0; r < grad.rows(); ++r) {
    const double* g = grad.row(r);
    const double* v = input.row(r);
    for (int a = 0; a < gw.rows(); ++a)
      axpy(g[a], {v, std::size_t(gw.cols())}, {gw.row(a), std::size_t(gw.cols())});
  }
}

struct DropoutNormResult {
  RealMatrix table;
  RealMatrix mask;            // empty unless train-mode dropout was applied
  std::vector<double> norms;  // pre-normalization row norms; empty if skipped
};

// Inverted dropout (train mode only) followed by per-row L2 normalization.
// Mask entries are drawn row-major, one per element, and already carry the
// 1/(1-p) survivor scale so backward is a plain elementwise product. Rows
// with exact zero norm pass through unchanged.
inline DropoutNormResult dropout_l2norm(const RealMatrix& in, double p, Mode mode,
                                        std::uint64_t seed, bool normalize = true) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout_l2norm: p must be in [0, 1)");
  DropoutNormResult res;
  res.table = in;
  if (mode == Mode::train && p > 0.0) {
    res.mask = RealMatrix(in.rows(), in.cols());
    Rng rng(seed);
    const double scale = 1.0 / (1.0 - p);
    for (int r = 0; r < in.rows(); ++r) {
      double* mrow = res.mask.row(r);
      double* trow = res.table.row(r);
      for (int c = 0; c < in.cols(); ++c) {
        const double m = rng.bernoulli(p) ? 0.0 : scale;
        mrow[c] = m;
        trow[c] *= m;
      }
    }
  }
  if (normalize) {
    res.norms.resize(std::size_t(in.rows()));
    for (int r = 0; r < in.rows(); ++r) {
      auto row = res.table.row_span(r);
      const double n = std::sqrt(squared_norm(row));
      res.norms[std::size_t(r)] = n;
      if (n > 0.0)
        for (double& x : row) x /= n;
    }
  }
  return res;
}

// One propagation step: neighborhood aggregation with symmetric-normalized
// coefficients, then the shared quaternion transform. The two stages commute
// because the transform is linear and identical for every node.
inline RealMatrix propagate_layer(const NormalizedAdjacency& adj,
                                  const RealMatrix& table,
                                  const QuaternionMatrix& w) {
  return hamilton_transform_rows(w, spmv(adj, table));
}

inline RealMatrix readout(const std::vector<RealMatrix>& layers, Readout kind) {
  if (layers.empty()) throw std::invalid_argument("readout: empty layer set");
  const int rows = layers.front().rows();
  for (const auto& t : layers) {
    if (t.rows() != rows) throw std::invalid_argument("readout: row count mismatch");
    if (kind != Readout::concat && t.cols() != layers.front().cols())
      throw std::invalid_argument("readout: width mismatch");
  }
  if (kind == Readout::concat) {
    int width = 0;
    for (const auto& t : layers) width += t.cols();
    RealMatrix out(rows, width);
    for (int r = 0; r < rows; ++r) {
      double* o = out.row(r);
      for (const auto& t : layers) {
        const double* src = t.row(r);
        o = std::copy(src, src + t.cols(), o);
      }
    }
    return out;
  }
  RealMatrix out = layers.front();
  for (std::size_t l = 1; l < layers.size(); ++l) {
    const auto& t = layers[l];
    for (std::size_t e = 0; e < out.size(); ++e) {
      if (kind == Readout::max)
        out.data()[e] = std::max(out.data()[e], t.data()[e]);
      else
        out.data()[e] += t.data()[e];
    }
  }
  if (kind == Readout::mean) {
    const double inv = 1.0 / double(layers.size());
    for (double& x : out.data()) x *= inv;
  }
  return out;
}

// Everything the backward pass replays: per-layer aggregation results (for
// transform gradients), dropout masks, pre-normalization norms, and the
// normalized layer outputs. Populated only in train mode.
struct ForwardTrace {
  Mode mode = Mode::eval;
  Variant variant = Variant::qgcn;
  int layers = 0;
  int nodes = 0;
  int width = 0;
  std::vector<RealMatrix> aggregated;
  std::vector<RealMatrix> masks;
  std::vector<std::vector<double>> norms;
  std::vector<RealMatrix> outputs;
  RealMatrix layer0_normalized;  // only when include_layer0 with normalization
  std::vector<double> layer0_norms;
};

struct ForwardResult {
  RealMatrix final;
  ForwardTrace trace;
};

// Runs the L-layer propagation for the configured variant and aggregates
// the layer set with the readout. The seed scopes this call's dropout
// masks; layer l draws from derive_seed(seed, "mask", l). Eval mode ignores
// it and retains no trace.
inline ForwardResult forward(const ModelConfig& cfg, const ModelParams& params,
                             const NormalizedAdjacency& adj, Mode mode,
                             std::uint64_t seed) {
  cfg.validate();
  if (params.embeddings.rows() != adj.num_nodes)
    throw std::invalid_argument("forward: embedding rows != node count");
  if (params.embeddings.cols() != cfg.embed_dim)
    throw std::invalid_argument("forward: embedding width != embed_dim");
  if (cfg.variant == Variant::qgcn && int(params.transforms.size()) != cfg.layers)
    throw std::invalid_argument("forward: expected one quaternion transform per layer");
  if (cfg.variant == Variant::qgcn_q &&
      int(params.real_transforms.size()) != cfg.layers)
    throw std::invalid_argument("forward: expected one real transform per layer");

  ForwardResult res;
  ForwardTrace& tr = res.trace;
  tr.mode = mode;
  tr.variant = cfg.variant;
  tr.layers = cfg.layers;
  tr.nodes = params.embeddings.rows();
  tr.width = params.embeddings.cols();
  const bool keep = (mode == Mode::train);

  if (cfg.variant == Variant::lightgcn) {
    const auto weights = cfg.resolved_layer_weights();
    RealMatrix final(params.embeddings.rows(), params.embeddings.cols());
    axpy(weights[0], params.embeddings.data(), std::span<double>(final.data()));
    const RealMatrix* prev = &params.embeddings;
    for (int l = 1; l <= cfg.layers; ++l) {
      RealMatrix cur = spmv(adj, *prev);
      axpy(weights[std::size_t(l)], cur.data(), std::span<double>(final.data()));
      tr.outputs.push_back(std::move(cur));
      prev = &tr.outputs.back();
    }
    if (!keep) tr.outputs.clear();
    res.final = std::move(final);
    return res;
  }

  std::vector<RealMatrix> collected;
  if (cfg.include_layer0) {
    if (cfg.normalizes()) {
      auto n0 = dropout_l2norm(params.embeddings, 0.0, Mode::eval, 0, true);
      if (keep) {
        tr.layer0_normalized = n0.table;
        tr.layer0_norms = std::move(n0.norms);
      }
      collected.push_back(std::move(n0.table));
    } else {
      collected.push_back(params.embeddings);
    }
  }
  const RealMatrix* cur = &params.embeddings;
  for (int l = 1; l <= cfg.layers; ++l) {
    RealMatrix agg = spmv(adj, *cur);
    RealMatrix pre;
    if (cfg.variant == Variant::qgcn)
      pre = hamilton_transform_rows(params.transforms[std::size_t(l - 1)], agg);
    else if (cfg.variant == Variant::qgcn_q)
      pre = real_transform_rows(params.real_transforms[std::size_t(l - 1)], agg);
    else
      pre = std::move(agg);
    if (keep && cfg.has_transform()) tr.aggregated.push_back(std::move(agg));
    auto dn = dropout_l2norm(pre, cfg.uses_dropout() ? cfg.dropout : 0.0, mode,
                             derive_seed(seed, "mask", std::uint64_t(l)),
                             cfg.normalizes());
    if (keep) {
      tr.masks.push_back(std::move(dn.mask));
      tr.norms.push_back(std::move(dn.norms));
      tr.outputs.push_back(dn.table);
    }
    collected.push_back(std::move(dn.table));
    cur = &collected.back();
  }
  res.final = readout(collected, cfg.readout);
  return res;
}

inline double predict(const RealMatrix& final_table, int num_users, int u, int i) {
  const int num_items = final_table.rows() - num_users;
  if (u < 0 || u >= num_users || i < 0 || i >= num_items)
    throw std::out_of_range("predict: index out of range");
  return dot(final_table.row_span(u), final_table.row_span(num_users + i));
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"variant", variant_name(cfg.variant)},
                        {"layers", cfg.layers},
                        {"embed_dim", cfg.embed_dim},
                        {"dropout", cfg.dropout},
                        {"readout", readout_name(cfg.readout)},
                        {"include_layer0", cfg.include_layer0},
                        {"layer_weights", cfg.layer_weights},
                        {"l2_normalize", cfg.l2_normalize}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.variant = parse_variant(j.at("variant").get<std::string>());
  cfg.layers = j.at("layers").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.readout = parse_readout(j.at("readout").get<std::string>());
  cfg.include_layer0 = j.at("include_layer0").get<bool>();
  cfg.layer_weights = j.at("layer_weights").get<std::vector<double>>();
  cfg.l2_normalize = j.value("l2_normalize", true);
  return cfg;
}

struct Checkpoint {
  ModelConfig cfg;
  int num_users = 0;
  int num_items = 0;
  int epoch = 0;
  ModelParams params;
};

// Binary container: 8-byte magic, u32 format version, u64 JSON header
// length, the header (config, M, N, epoch, block shapes in canonical
// order), then each block's doubles raw in host byte order. Round trips are
// bit-exact on the same platform.
inline constexpr char kCheckpointMagic[8] = {'Q', 'G', 'C', 'N', 'C', 'K', 'P', '1'};

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                            int num_users, int num_items, int epoch,
                            const ModelParams& params) {
  nlohmann::json blocks = nlohmann::json::array();
  for_each_block(params, [&](const std::string& name, const RealMatrix& blk) {
    blocks.push_back({{"name", name}, {"rows", blk.rows()}, {"cols", blk.cols()}});
  });
  nlohmann::json header = {{"config", config_to_json(cfg)},
                           {"M", num_users},
                           {"N", num_items},
                           {"epoch", epoch},
                           {"blocks", blocks}};
  const std::string header_bytes = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t header_len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header_bytes.data(), std::streamsize(header_bytes.size()));
  for_each_block(params, [&](const std::string&, const RealMatrix& blk) {
    out.write(reinterpret_cast<const char*>(blk.data().data()),
              std::streamsize(blk.size() * sizeof(double)));
  });
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw std::runtime_error(path.string() + ": not a checkpoint file");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != 1)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), std::streamsize(header_len));
  if (!in) throw std::runtime_error(path.string() + ": truncated header");
  const nlohmann::json header = nlohmann::json::parse(header_bytes);

  Checkpoint ckpt;
  ckpt.cfg = config_from_json(header.at("config"));
  ckpt.num_users = header.at("M").get<int>();
  ckpt.num_items = header.at("N").get<int>();
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.params = allocate_params(ckpt.cfg, ckpt.num_users, ckpt.num_items);

  const auto& blocks = header.at("blocks");
  std::size_t idx = 0;
  bool ok = true;
  for_each_block(ckpt.params, [&](const std::string& name, RealMatrix& blk) {
    if (!ok) return;
    if (idx >= blocks.size()) {
      ok = false;
      return;
    }
    const auto& meta = blocks[idx++];
    if (meta.at("name").get<std::string>() != name ||
        meta.at("rows").get<int>() != blk.rows() ||
        meta.at("cols").get<int>() != blk.cols()) {
      ok = false;
      return;
    }
    in.read(reinterpret_cast<char*>(blk.data().data()),
            std::streamsize(blk.size() * sizeof(double)));
  });
  if (!ok || idx != blocks.size() || !in)
    throw std::runtime_error(path.string() + ": block layout mismatch");
  return ckpt;
}

}  // namespace qgcn
