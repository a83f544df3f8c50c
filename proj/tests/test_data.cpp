#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "qgcn/dataset.hpp"
#include "qgcn/rng.hpp"

using namespace qgcn;
namespace fs = std::filesystem;

namespace {

RawDataset parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in);
}

RawDataset random_raw(Rng& rng, int max_users, int max_items, double density) {
  RawDataset data;
  const int m = 2 + int(rng.next_below(std::uint64_t(max_users - 1)));
  const int n = 2 + int(rng.next_below(std::uint64_t(max_items - 1)));
  for (int u = 0; u < m; ++u) data.user_ids.push_back(u * 10);
  for (int i = 0; i < n; ++i) data.item_ids.push_back(i * 10 + 1);
  data.items_of_user.assign(std::size_t(m), {});
  for (int u = 0; u < m; ++u)
    for (int i = 0; i < n; ++i)
      if (rng.bernoulli(density)) {
        data.items_of_user[std::size_t(u)].push_back(i);
        ++data.num_edges;
      }
  return data;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("qgcn_data_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::set<std::pair<int, int>> edge_set(const InteractionSet& g) {
  auto edges = g.edge_list();
  return {edges.begin(), edges.end()};
}

}  // namespace

TEST_CASE("parser merges repeated users and drops duplicates", "[data]") {
  const RawDataset data = parse(
      "10 100 101\n"
      "\n"
      "20 101\n"
      "10 101 102\n");
  REQUIRE(data.num_users() == 2);
  REQUIRE(data.num_items() == 3);
  CHECK(data.user_ids == std::vector<std::int64_t>{10, 20});
  CHECK(data.item_ids == std::vector<std::int64_t>{100, 101, 102});
  CHECK(data.items_of_user[0] == std::vector<int>{0, 1, 2});
  CHECK(data.items_of_user[1] == std::vector<int>{1});
  CHECK(data.num_edges == 4);
}

TEST_CASE("parser keeps first-seen id order for dense indices", "[data]") {
  const RawDataset data = parse("7 5\n3 9 5\n");
  CHECK(data.user_ids == std::vector<std::int64_t>{7, 3});
  CHECK(data.item_ids == std::vector<std::int64_t>{5, 9});
}

TEST_CASE("parser reports the offending line", "[data]") {
  try {
    parse("1 2\n3 x\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  try {
    parse("1 2\n\n\n4 -3\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(parse("12x 3\n"), ParseError);
}

TEST_CASE("empty input is rejected", "[data]") {
  CHECK_THROWS_AS(parse(""), EmptyDatasetError);
  CHECK_THROWS_AS(parse("\n\n"), EmptyDatasetError);
  // a user id with no items contributes nothing
  CHECK_THROWS_AS(parse("5\n"), EmptyDatasetError);
}

TEST_CASE("k-core keeps exactly the fixpoint survivors", "[data]") {
  Rng rng(derive_seed(13, "kcore"));
  for (int trial = 0; trial < 30; ++trial) {
    const RawDataset data = random_raw(rng, 12, 12, 0.35);
    const int k = 1 + int(rng.next_below(3));
    const auto [users, items] =
        oracle::kcore_survivors(data.items_of_user, data.num_items(), k);
    if (users.empty()) {
      CHECK_THROWS_AS(kcore_filter(data, k), EmptyDatasetError);
      continue;
    }
    const RawDataset filtered = kcore_filter(data, k);
    REQUIRE(filtered.num_users() == int(users.size()));
    REQUIRE(filtered.num_items() == int(items.size()));
    for (std::size_t t = 0; t < users.size(); ++t)
      CHECK(filtered.user_ids[t] == data.user_ids[std::size_t(users[t])]);
    for (std::size_t t = 0; t < items.size(); ++t)
      CHECK(filtered.item_ids[t] == data.item_ids[std::size_t(items[t])]);
    for (int u = 0; u < filtered.num_users(); ++u)
      CHECK(int(filtered.items_of_user[std::size_t(u)].size()) >= k);
    // item degrees must clear the threshold too
    std::vector<int> ideg(std::size_t(filtered.num_items()), 0);
    for (const auto& v : filtered.items_of_user)
      for (int i : v) ++ideg[std::size_t(i)];
    for (int deg : ideg) CHECK(deg >= k);
  }
}

TEST_CASE("k-core is the identity when everything qualifies", "[data]") {
  const RawDataset data = parse("1 10 11\n2 10 11\n");
  const RawDataset filtered = kcore_filter(data, 2);
  CHECK(filtered.user_ids == data.user_ids);
  CHECK(filtered.item_ids == data.item_ids);
  CHECK(filtered.items_of_user == data.items_of_user);
}

TEST_CASE("k-core rejects an empty survivor set", "[data]") {
  const RawDataset data = parse("1 10\n2 11\n");
  CHECK_THROWS_AS(kcore_filter(data, 3), EmptyDatasetError);
}

TEST_CASE("holdout counts follow the floor-then-guarantee rule", "[data]") {
  using qgcn::detail::split_counts;
  auto c = split_counts(10, 0.1, 0.1);
  CHECK(c.n_train == 8);
  CHECK(c.n_val == 1);
  CHECK(c.n_test == 1);
  c = split_counts(3, 0.1, 0.1);
  CHECK(c.n_train == 1);
  CHECK(c.n_val == 1);
  CHECK(c.n_test == 1);
  c = split_counts(2, 0.1, 0.1);
  CHECK(c.n_train == 1);
  CHECK(c.n_val == 0);
  CHECK(c.n_test == 1);
  c = split_counts(1, 0.1, 0.1);
  CHECK(c.n_train == 1);
  CHECK(c.n_val == 0);
  CHECK(c.n_test == 0);
  c = split_counts(10, 0.0, 0.2);
  CHECK(c.n_train == 8);
  CHECK(c.n_val == 0);
  CHECK(c.n_test == 2);
}

TEST_CASE("per-user split partitions each history", "[data]") {
  Rng rng(derive_seed(13, "split"));
  const RawDataset data = random_raw(rng, 10, 14, 0.5);
  const SplitDataset split = split_per_user(data, 0.1, 0.1, 42);
  const auto tr = edge_set(split.train);
  const auto va = edge_set(split.val);
  const auto te = edge_set(split.test);
  for (const auto& e : va) CHECK(tr.count(e) == 0);
  for (const auto& e : te) {
    CHECK(tr.count(e) == 0);
    CHECK(va.count(e) == 0);
  }
  std::set<std::pair<int, int>> all;
  for (int u = 0; u < data.num_users(); ++u)
    for (int i : data.items_of_user[std::size_t(u)]) all.emplace(u, i);
  std::set<std::pair<int, int>> merged = tr;
  merged.insert(va.begin(), va.end());
  merged.insert(te.begin(), te.end());
  CHECK(merged == all);
  for (int u = 0; u < data.num_users(); ++u) {
    const int n = int(data.items_of_user[std::size_t(u)].size());
    if (n > 0) CHECK(int(split.train.items_of_user[std::size_t(u)].size()) >= 1);
  }
}

TEST_CASE("split is deterministic and user-local", "[data]") {
  Rng rng(derive_seed(13, "split-det"));
  const RawDataset data = random_raw(rng, 8, 10, 0.5);
  const SplitDataset a = split_per_user(data, 0.1, 0.1, 42);
  const SplitDataset b = split_per_user(data, 0.1, 0.1, 42);
  CHECK(edge_set(a.train) == edge_set(b.train));
  CHECK(edge_set(a.val) == edge_set(b.val));
  CHECK(edge_set(a.test) == edge_set(b.test));

  // adding a new user leaves existing users' assignments unchanged
  RawDataset extended = data;
  extended.user_ids.push_back(9999);
  extended.items_of_user.push_back({0, 1});
  extended.num_edges += 2;
  const SplitDataset c = split_per_user(extended, 0.1, 0.1, 42);
  for (int u = 0; u < data.num_users(); ++u) {
    CHECK(c.train.items_of_user[std::size_t(u)] ==
          a.train.items_of_user[std::size_t(u)]);
    CHECK(c.test.items_of_user[std::size_t(u)] ==
          a.test.items_of_user[std::size_t(u)]);
  }
}

TEST_CASE("split validates ratio arguments", "[data]") {
  const RawDataset data = parse("1 10 11\n");
  CHECK_THROWS_AS(split_per_user(data, -0.1, 0.1, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_per_user(data, 0.5, 0.5, 1), std::invalid_argument);
}

TEST_CASE("saved splits load back verbatim", "[data]") {
  Rng rng(derive_seed(13, "roundtrip"));
  const RawDataset data = random_raw(rng, 9, 11, 0.45);
  const SplitDataset split = split_per_user(data, 0.1, 0.1, 42);

  const fs::path dir = fresh_dir("roundtrip");
  save_split(dir, split, 42, 1);
  CHECK(fs::exists(dir / "train.txt"));
  CHECK(fs::exists(dir / "val.txt"));
  CHECK(fs::exists(dir / "test.txt"));
  CHECK(fs::exists(dir / "manifest.json"));

  const LoadedSplit loaded = load_split(dir);
  CHECK(edge_set(loaded.split.train) == edge_set(split.train));
  CHECK(edge_set(loaded.split.val) == edge_set(split.val));
  CHECK(edge_set(loaded.split.test) == edge_set(split.test));
  CHECK(loaded.manifest.num_users == data.num_users());
  CHECK(loaded.manifest.num_items == data.num_items());
  CHECK(loaded.manifest.train_edges == split.train.num_edges);
  CHECK(loaded.manifest.val_edges == split.val.num_edges);
  CHECK(loaded.manifest.test_edges == split.test.num_edges);
  CHECK(loaded.manifest.seed == 42);
  CHECK(loaded.manifest.k == 1);
  fs::remove_all(dir);
}

TEST_CASE("dense loader range-checks ids", "[data]") {
  const fs::path dir = fresh_dir("dense");
  {
    std::ofstream out(dir / "bad.txt");
    out << "0 1\n3 0\n";
  }
  CHECK_THROWS_AS(load_interactions_dense(dir / "bad.txt", 3, 2), ParseError);
  const InteractionSet ok = load_interactions_dense(dir / "bad.txt", 4, 2);
  CHECK(ok.num_edges == 2);
  CHECK_THROWS_AS(load_interactions_dense(dir / "missing.txt", 4, 2),
                  std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("manifest mismatches are detected on load", "[data]") {
  Rng rng(derive_seed(13, "mismatch"));
  const RawDataset data = random_raw(rng, 6, 8, 0.5);
  const SplitDataset split = split_per_user(data, 0.1, 0.1, 42);
  const fs::path dir = fresh_dir("mismatch");
  save_split(dir, split, 42, 1);
  {
    std::ifstream in(dir / "manifest.json");
    nlohmann::json j = nlohmann::json::parse(in);
    in.close();
    j["E_train"] = j["E_train"].get<std::int64_t>() + 1;
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << '\n';
  }
  CHECK_THROWS_AS(load_split(dir), std::runtime_error);
  fs::remove_all(dir);
}
