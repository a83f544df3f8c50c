#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "qgcn/graph.hpp"
#include "qgcn/rng.hpp"

namespace qgcn {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Interactions with their original ids still attached. Dense indices are
// assigned by first appearance in the input stream.
struct RawDataset {
  std::vector<std::int64_t> user_ids;  // dense user index -> external id
  std::vector<std::int64_t> item_ids;  // dense item index -> external id
  std::vector<std::vector<int>> items_of_user;  // sorted, deduplicated
  std::int64_t num_edges = 0;

  int num_users() const { return int(user_ids.size()); }
  int num_items() const { return int(item_ids.size()); }
};

namespace detail {

inline std::int64_t parse_id_token(const std::string& tok, std::size_t line_no) {
  std::int64_t value = 0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || value < 0)
    throw ParseError(line_no, "expected a non-negative integer, got '" + tok + "'");
  return value;
}

}  // namespace detail

// External-to-dense id assignment by first appearance. Shared across files
// when several inputs must agree on one id space.
struct DenseIdMapper {
  std::unordered_map<std::int64_t, int> user_index;
  std::unordered_map<std::int64_t, int> item_index;
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;

  int user(std::int64_t ext) {
    auto [it, fresh] = user_index.try_emplace(ext, int(user_ids.size()));
    if (fresh) user_ids.push_back(ext);
    return it->second;
  }
  int item(std::int64_t ext) {
    auto [it, fresh] = item_index.try_emplace(ext, int(item_ids.size()));
    if (fresh) item_ids.push_back(ext);
    return it->second;
  }
};

// One user per line: the first token is the user id, the rest are item ids.
// Blank lines are skipped. Returns dense (user, item) pairs, duplicates and
// repeated user lines included as written.
inline std::vector<std::pair<int, int>> parse_pairs(std::istream& in,
                                                    DenseIdMapper& ids) {
  std::vector<std::pair<int, int>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok)) continue;
    const int u = ids.user(detail::parse_id_token(tok, line_no));
    while (tokens >> tok)
      pairs.emplace_back(u, ids.item(detail::parse_id_token(tok, line_no)));
  }
  return pairs;
}

inline RawDataset parse_interactions(std::istream& in) {
  DenseIdMapper ids;
  const auto pairs = parse_pairs(in, ids);
  RawDataset data;
  data.user_ids = std::move(ids.user_ids);
  data.item_ids = std::move(ids.item_ids);
  data.items_of_user.assign(data.user_ids.size(), {});
  for (auto [u, i] : pairs) data.items_of_user[std::size_t(u)].push_back(i);
  data.num_edges = 0;
  for (auto& v : data.items_of_user) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    data.num_edges += std::int64_t(v.size());
  }
  if (data.num_edges == 0) throw EmptyDatasetError("no interactions parsed");
  return data;
}

inline RawDataset load_raw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_interactions(in);
}

// Iteratively peels users and items with fewer than k interactions until
// every survivor has at least k, then re-densifies indices. Survivors keep
// their relative order, so the result does not depend on peel order.
inline RawDataset kcore_filter(const RawDataset& data, int k) {
  if (k < 0) throw std::invalid_argument("kcore_filter: k must be >= 0");
  const int M = data.num_users();
  const int N = data.num_items();
  std::vector<std::vector<int>> users_of_item(static_cast<std::size_t>(N));
  for (int u = 0; u < M; ++u)
    for (int i : data.items_of_user[std::size_t(u)])
      users_of_item[std::size_t(i)].push_back(u);

  std::vector<std::int64_t> udeg(static_cast<std::size_t>(M));
  std::vector<std::int64_t> ideg(static_cast<std::size_t>(N));
  for (int u = 0; u < M; ++u) udeg[std::size_t(u)] = std::int64_t(data.items_of_user[std::size_t(u)].size());
  for (int i = 0; i < N; ++i) ideg[std::size_t(i)] = std::int64_t(users_of_item[std::size_t(i)].size());

  std::vector<char> user_dead(std::size_t(M), 0), item_dead(std::size_t(N), 0);
  // nodes: users as u, items as M + i
  std::queue<int> pending;
  for (int u = 0; u < M; ++u)
    if (udeg[std::size_t(u)] < k) pending.push(u);
  for (int i = 0; i < N; ++i)
    if (ideg[std::size_t(i)] < k) pending.push(M + i);
  while (!pending.empty()) {
    const int node = pending.front();
    pending.pop();
    if (node < M) {
      const int u = node;
      if (user_dead[std::size_t(u)]) continue;
      user_dead[std::size_t(u)] = 1;
      for (int i : data.items_of_user[std::size_t(u)]) {
        if (item_dead[std::size_t(i)]) continue;
        if (--ideg[std::size_t(i)] < k) pending.push(M + i);
      }
    } else {
      const int i = node - M;
      if (item_dead[std::size_t(i)]) continue;
      item_dead[std::size_t(i)] = 1;
      for (int u : users_of_item[std::size_t(i)]) {
        if (user_dead[std::size_t(u)]) continue;
        if (--udeg[std::size_t(u)] < k) pending.push(u);
      }
    }
  }

  std::vector<int> user_map(std::size_t(M), -1), item_map(std::size_t(N), -1);
  RawDataset out;
  for (int u = 0; u < M; ++u)
    if (!user_dead[std::size_t(u)]) {
      user_map[std::size_t(u)] = out.num_users();
      out.user_ids.push_back(data.user_ids[std::size_t(u)]);
    }
  for (int i = 0; i < N; ++i)
    if (!item_dead[std::size_t(i)]) {
      item_map[std::size_t(i)] = out.num_items();
      out.item_ids.push_back(data.item_ids[std::size_t(i)]);
    }
  if (out.num_users() == 0 || out.num_items() == 0)
    throw EmptyDatasetError("k-core filter with k=" + std::to_string(k) +
                            " removed every node");
  out.items_of_user.assign(std::size_t(out.num_users()), {});
  out.num_edges = 0;
  for (int u = 0; u < M; ++u) {
    if (user_dead[std::size_t(u)]) continue;
    auto& dst = out.items_of_user[std::size_t(user_map[std::size_t(u)])];
    for (int i : data.items_of_user[std::size_t(u)])
      if (!item_dead[std::size_t(i)]) dst.push_back(item_map[std::size_t(i)]);
    out.num_edges += std::int64_t(dst.size());  // stays sorted: item_map is increasing
  }
  return out;
}

struct SplitDataset {
  InteractionSet train;
  InteractionSet val;
  InteractionSet test;
};

namespace detail {

struct SplitCounts {
  int n_train, n_val, n_test;
};

// Floor both held-out shares, then guarantee a test (and, when there is
// room, a validation) interaction for users whose history is too short for
// the floors to bite. Training always keeps at least one interaction.
inline SplitCounts split_counts(int n, double val_ratio, double test_ratio) {
  int n_val = int(val_ratio * n);
  int n_test = int(test_ratio * n);
  if (test_ratio > 0.0 && n_test == 0 && n >= 2) n_test = 1;
  if (val_ratio > 0.0 && n_val == 0 && n >= 3) n_val = 1;
  return {n - n_val - n_test, n_val, n_test};
}

}  // namespace detail

// Per-user holdout. Each user's items are shuffled by a stream seeded from
// (seed, "split", user), so the split of one user never depends on another.
inline SplitDataset split_per_user(const RawDataset& data, double val_ratio,
                                   double test_ratio, std::uint64_t seed) {
  if (val_ratio < 0.0 || test_ratio < 0.0 || val_ratio + test_ratio >= 1.0)
    throw std::invalid_argument(
        "split_per_user: ratios must be >= 0 and sum below 1");
  const int M = data.num_users();
  const int N = data.num_items();
  std::vector<std::pair<int, int>> train_edges, val_edges, test_edges;
  for (int u = 0; u < M; ++u) {
    std::vector<int> items = data.items_of_user[std::size_t(u)];
    Rng rng(derive_seed(seed, "split", std::uint64_t(u)));
    rng.shuffle(items);
    const auto c = detail::split_counts(int(items.size()), val_ratio, test_ratio);
    for (int t = 0; t < c.n_train; ++t) train_edges.emplace_back(u, items[std::size_t(t)]);
    for (int t = c.n_train; t < c.n_train + c.n_val; ++t)
      val_edges.emplace_back(u, items[std::size_t(t)]);
    for (int t = c.n_train + c.n_val; t < int(items.size()); ++t)
      test_edges.emplace_back(u, items[std::size_t(t)]);
  }
  SplitDataset split;
  split.train = build_interactions(M, N, train_edges);
  split.val = build_interactions(M, N, val_edges);
  split.test = build_interactions(M, N, test_edges);
  return split;
}

struct Manifest {
  int num_users = 0;
  int num_items = 0;
  std::int64_t train_edges = 0;
  std::int64_t val_edges = 0;
  std::int64_t test_edges = 0;
  std::uint64_t seed = 0;
  int k = 0;
};

// Dense-id interaction file: ids must already lie in [0, M) x [0, N).
inline InteractionSet load_interactions_dense(const std::filesystem::path& path,
                                              int num_users, int num_items) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::pair<int, int>> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok)) continue;
    const std::int64_t u = detail::parse_id_token(tok, line_no);
    if (u >= num_users)
      throw ParseError(line_no, "user id " + std::to_string(u) + " out of range");
    while (tokens >> tok) {
      const std::int64_t i = detail::parse_id_token(tok, line_no);
      if (i >= num_items)
        throw ParseError(line_no, "item id " + std::to_string(i) + " out of range");
      edges.emplace_back(int(u), int(i));
    }
  }
  return build_interactions(num_users, num_items, edges);
}

namespace detail {

inline void save_interactions(const std::filesystem::path& path,
                              const InteractionSet& g) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (int u = 0; u < g.num_users; ++u) {
    if (g.items_of_user[std::size_t(u)].empty()) continue;
    out << u;
    for (int i : g.items_of_user[std::size_t(u)]) out << ' ' << i;
    out << '\n';
  }
}

}  // namespace detail

inline void save_split(const std::filesystem::path& dir, const SplitDataset& split,
                       std::uint64_t seed, int k) {
  std::filesystem::create_directories(dir);
  detail::save_interactions(dir / "train.txt", split.train);
  detail::save_interactions(dir / "val.txt", split.val);
  detail::save_interactions(dir / "test.txt", split.test);
  nlohmann::json manifest = {
      {"M", split.train.num_users},     {"N", split.train.num_items},
      {"E_train", split.train.num_edges}, {"E_val", split.val.num_edges},
      {"E_test", split.test.num_edges},   {"seed", seed},
      {"k", k}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest.json");
  out << manifest.dump(2) << '\n';
}

inline Manifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  nlohmann::json j = nlohmann::json::parse(in);
  Manifest m;
  m.num_users = j.at("M").get<int>();
  m.num_items = j.at("N").get<int>();
  m.train_edges = j.at("E_train").get<std::int64_t>();
  m.val_edges = j.at("E_val").get<std::int64_t>();
  m.test_edges = j.at("E_test").get<std::int64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.k = j.at("k").get<int>();
  return m;
}

struct LoadedSplit {
  SplitDataset split;
  Manifest manifest;
};

inline LoadedSplit load_split(const std::filesystem::path& dir) {
  LoadedSplit loaded;
  loaded.manifest = load_manifest(dir);
  const int M = loaded.manifest.num_users;
  const int N = loaded.manifest.num_items;
  loaded.split.train = load_interactions_dense(dir / "train.txt", M, N);
  loaded.split.val = load_interactions_dense(dir / "val.txt", M, N);
  loaded.split.test = load_interactions_dense(dir / "test.txt", M, N);
  if (loaded.split.train.num_edges != loaded.manifest.train_edges ||
      loaded.split.val.num_edges != loaded.manifest.val_edges ||
      loaded.split.test.num_edges != loaded.manifest.test_edges)
    throw std::runtime_error("split files disagree with manifest edge counts");
  return loaded;
}

}  // namespace qgcn
