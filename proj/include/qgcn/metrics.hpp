#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "qgcn/dataset.hpp"
#include "qgcn/graph.hpp"
#include "qgcn/matrix.hpp"
#include "qgcn/model.hpp"

namespace qgcn {

struct RankedList {
  int user = 0;
  std::vector<int> items;      // top-K item indices, best first
  std::vector<double> scores;  // parallel to items, non-increasing
};

struct MetricReport {
  int k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::vector<int> users;  // users that entered the average
  std::vector<double> user_recall;
  std::vector<double> user_ndcg;

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"K", k}, {"recall", recall}, {"ndcg", ndcg}, {"users", users.size()}};
  }
};

// Top-K items for one user by final-table inner product, skipping flagged
// items. Ties break toward the lower item index; fewer than K candidates
// return them all.
inline RankedList rank_topk(const RealMatrix& final_table, int num_users, int user,
                            int k, const std::vector<char>& excluded) {
  if (k < 1) throw std::invalid_argument("rank_topk: K must be >= 1");
  const int num_items = final_table.rows() - num_users;
  if (int(excluded.size()) != num_items)
    throw std::invalid_argument("rank_topk: exclusion flags must cover all items");
  RankedList out;
  out.user = user;
  std::vector<std::pair<double, int>> cand;
  cand.reserve(std::size_t(num_items));
  for (int i = 0; i < num_items; ++i) {
    if (excluded[std::size_t(i)]) continue;
    cand.emplace_back(predict(final_table, num_users, user, i), i);
  }
  const std::size_t take = std::min<std::size_t>(std::size_t(k), cand.size());
  auto better = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::partial_sort(cand.begin(), cand.begin() + std::ptrdiff_t(take), cand.end(),
                    better);
  out.items.reserve(take);
  out.scores.reserve(take);
  for (std::size_t t = 0; t < take; ++t) {
    out.scores.push_back(cand[t].first);
    out.items.push_back(cand[t].second);
  }
  return out;
}

// |T ∩ R_K| / |T| for a sorted relevant set.
inline double recall_at_k(const RankedList& ranked, const std::vector<int>& relevant) {
  if (relevant.empty()) throw std::invalid_argument("recall_at_k: empty relevant set");
  int hits = 0;
  for (int item : ranked.items)
    if (std::binary_search(relevant.begin(), relevant.end(), item)) ++hits;
  return double(hits) / double(relevant.size());
}

// Binary-relevance NDCG. The ideal DCG puts one relevant item in each of the
// first min(K, |T|) positions, which caps the numerator exactly.
inline double ndcg_at_k(const RankedList& ranked, const std::vector<int>& relevant,
                        int k) {
  if (relevant.empty()) throw std::invalid_argument("ndcg_at_k: empty relevant set");
  double dcg = 0.0;
  for (std::size_t pos = 0; pos < ranked.items.size(); ++pos)
    if (std::binary_search(relevant.begin(), relevant.end(), ranked.items[pos]))
      dcg += 1.0 / std::log2(double(pos) + 2.0);
  const int ideal = std::min<int>(k, int(relevant.size()));
  double idcg = 0.0;
  for (int pos = 0; pos < ideal; ++pos) idcg += 1.0 / std::log2(double(pos) + 2.0);
  return dcg / idcg;
}

// Per-user metrics over users with a nonempty target set, averaged
// arithmetically. Items interacted with in any excluded set never enter a
// user's candidate list.
inline MetricReport evaluate_table(const RealMatrix& final_table, int num_users,
                                   int num_items, const InteractionSet& target,
                                   const std::vector<const InteractionSet*>& excluded,
                                   int k) {
  MetricReport report;
  report.k = k;
  std::vector<char> flags(std::size_t(num_items), 0);
  for (int u = 0; u < num_users; ++u) {
    const auto& relevant = target.items_of_user[std::size_t(u)];
    if (relevant.empty()) continue;
    std::fill(flags.begin(), flags.end(), 0);
    for (const InteractionSet* ex : excluded)
      for (int i : ex->items_of_user[std::size_t(u)]) flags[std::size_t(i)] = 1;
    const RankedList ranked = rank_topk(final_table, num_users, u, k, flags);
    report.users.push_back(u);
    report.user_recall.push_back(recall_at_k(ranked, relevant));
    report.user_ndcg.push_back(ndcg_at_k(ranked, relevant, k));
  }
  if (!report.users.empty()) {
    report.recall =
        std::accumulate(report.user_recall.begin(), report.user_recall.end(), 0.0) /
        double(report.users.size());
    report.ndcg =
        std::accumulate(report.user_ndcg.begin(), report.user_ndcg.end(), 0.0) /
        double(report.users.size());
  }
  return report;
}

enum class EvalSplit { val, test };

// Full-ranking evaluation on one held-out split. Validation excludes the
// training items; test additionally excludes validation items.
inline MetricReport evaluate(const ModelConfig& cfg, const ModelParams& params,
                             const NormalizedAdjacency& adj, const SplitDataset& split,
                             EvalSplit which, int k) {
  const RealMatrix final_table = forward(cfg, params, adj, Mode::eval, 0).final;
  const int M = split.train.num_users;
  const int N = split.train.num_items;
  if (which == EvalSplit::val)
    return evaluate_table(final_table, M, N, split.val, {&split.train}, k);
  return evaluate_table(final_table, M, N, split.test, {&split.train, &split.val}, k);
}

}  // namespace qgcn
