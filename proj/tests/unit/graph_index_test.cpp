#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "hyq/error.hpp"
#include "hyq/graph_index.hpp"
#include "test_data.hpp"

namespace hyq {
namespace {

using testing::overlap_recall;
using testing::reference_knn;

std::vector<float> random_vector(Rng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

std::vector<TupleId> ids_of(const std::vector<Neighbor>& ns) {
  std::vector<TupleId> out;
  for (const auto& n : ns) out.push_back(n.id);
  return out;
}

const Table& table_10k() {
  static const Table t = testing::random_table({.rows = 10000, .dims = {32}, .seed = 99});
  return t;
}

const GraphIndex& index_10k() {
  static const GraphIndex g = GraphIndex::build(table_10k(), 0);
  return g;
}

TEST(GraphBuild, SingletonIndexAnswersEverything) {
  const Table t = testing::random_table({.rows = 1, .dims = {8}, .seed = 1});
  const GraphIndex g = GraphIndex::build(t, "v0");
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const auto res = g.search(random_vector(rng, 8), 3, {});
    ASSERT_EQ(res.size(), 1u);
    EXPECT_EQ(res[0].id, 0u);
  }
  g.validate();
}

TEST(GraphBuild, ErrorsOnEmptyTableAndUnknownColumn) {
  Table empty(testing::random_schema({8}));
  EXPECT_THROW(GraphIndex::build(empty, 0), Error);
  try {
    GraphIndex::build(empty, 0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTable);
  }
  const Table t = testing::random_table({.rows = 10, .dims = {8}, .seed = 1});
  try {
    GraphIndex::build(t, "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownColumn);
  }
}

TEST(GraphBuild, RecallAgainstBruteForceOn1000Vectors) {
  const Table t = testing::random_table({.rows = 1000, .dims = {32}, .seed = 7});
  const GraphIndex g = GraphIndex::build(t, 0, {.m = 16, .ef_construction = 200});
  g.validate();
  Rng rng(11);
  double total = 0.0;
  for (int q = 0; q < 100; ++q) {
    const auto query = random_vector(rng, 32);
    const auto got = g.search(query, 10, {.ef_search = 200});
    total += overlap_recall(ids_of(got), reference_knn(t.vector_column(0), 32, query, 10));
  }
  EXPECT_GE(total / 100.0, 0.95);
}

TEST(GraphBuild, StructuralInvariantsHold) {
  const GraphIndex& g = index_10k();
  EXPECT_EQ(g.reachable_count(), g.size());
  for (std::uint32_t node = 0; node < g.size(); ++node) {
    for (int level = 0; level <= g.level_of(node); ++level) {
      EXPECT_LE(g.links(node, level).size(), g.max_degree(level));
      for (auto nb : g.links(node, level)) EXPECT_GE(g.level_of(nb), level);
    }
  }
  EXPECT_EQ(g.level_of(g.entry_point()), g.max_level());
}

TEST(GraphSearch, ExhaustiveWhenKExceedsSize) {
  const Table t = testing::random_table({.rows = 40, .dims = {6}, .seed = 9});
  const GraphIndex g = GraphIndex::build(t, 0);
  Rng rng(1);
  const auto q = random_vector(rng, 6);
  const auto res = g.search(q, 100, {.ef_search = 10});
  ASSERT_EQ(res.size(), 40u);
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto row = *t.row_of(res[i].id);
    EXPECT_EQ(res[i].distance, distance(Metric::L2, q, t.vector(0, row)));
    if (i > 0) EXPECT_LE(res[i - 1].distance, res[i].distance);
  }
}

TEST(GraphSearch, StoredVectorIsFirstWithZeroDistance) {
  const GraphIndex& g = index_10k();
  for (std::size_t row : {0u, 17u, 9999u}) {
    const auto v = table_10k().vector(0, row);
    const auto res = g.search(v, 5, {.ef_search = 64});
    ASSERT_FALSE(res.empty());
    EXPECT_EQ(res[0].id, table_10k().id_at(row));
    EXPECT_EQ(res[0].distance, 0.0);
  }
}

TEST(GraphSearch, LargerBeamNeverLowersAverageRecall) {
  const GraphIndex& g = index_10k();
  Rng rng(5);
  double narrow = 0.0;
  double wide = 0.0;
  for (int q = 0; q < 100; ++q) {
    const auto query = random_vector(rng, 32);
    const auto truth = reference_knn(table_10k().vector_column(0), 32, query, 10);
    narrow += overlap_recall(ids_of(g.search(query, 10, {.ef_search = 10})), truth);
    wide += overlap_recall(ids_of(g.search(query, 10, {.ef_search = 400})), truth);
  }
  EXPECT_GE(wide, narrow);
  EXPECT_GE(wide / 100.0, 0.95);
}

TEST(GraphSearch, DeterministicForFixedSeed) {
  const Table t = testing::random_table({.rows = 2000, .dims = {16}, .seed = 4});
  const GraphIndex a = GraphIndex::build(t, 0, {.seed = 77});
  const GraphIndex b = GraphIndex::build(t, 0, {.seed = 77});
  Rng rng(8);
  for (int q = 0; q < 20; ++q) {
    const auto query = random_vector(rng, 16);
    EXPECT_EQ(a.search(query, 10, {.ef_search = 32}), b.search(query, 10, {.ef_search = 32}));
  }
}

TEST(GraphInsert, SelfRetrievalAndDimensionCheck) {
  Table t = testing::random_table({.rows = 500, .dims = {16}, .seed = 12});
  GraphIndex g = GraphIndex::build(t, 0);
  Rng rng(3);
  auto extra = testing::random_tuples(t.schema(), 1, 500, rng);
  t.insert_batch(extra);
  g.insert(500, extra[0].vectors[0]);
  const auto res = g.search(extra[0].vectors[0], 1, {.ef_search = 1});
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].id, 500u);
  try {
    g.insert(501, std::vector<float>(15));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  try {
    g.insert(500, extra[0].vectors[0]);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
  }
}

TEST(GraphInsert, IncrementalMatchesBatchRecall) {
  Table t = testing::random_table({.rows = 2000, .dims = {32}, .seed = 31});
  GraphIndex g = GraphIndex::build(t, 0);
  Rng rng(6);
  auto extra = testing::random_tuples(t.schema(), 100, 2000, rng);
  t.insert_batch(extra);
  EXPECT_EQ(g.sync_with(t), 100u);
  g.validate();
  const GraphIndex batch = GraphIndex::build(t, 0);
  double inc = 0.0;
  double full = 0.0;
  for (int q = 0; q < 50; ++q) {
    const auto query = random_vector(rng, 32);
    const auto truth = reference_knn(t.vector_column(0), 32, query, 10);
    inc += overlap_recall(ids_of(g.search(query, 10, {.ef_search = 64})), truth);
    full += overlap_recall(ids_of(batch.search(query, 10, {.ef_search = 64})), truth);
  }
  EXPECT_NEAR(inc / 50.0, full / 50.0, 0.05);
}

TEST(FilteredSearch, AlwaysTrueEqualsPlainSearch) {
  const GraphIndex& g = index_10k();
  Rng rng(15);
  for (auto mode : {IterativeScan::Off, IterativeScan::Relaxed, IterativeScan::Strict}) {
    for (int q = 0; q < 10; ++q) {
      const auto query = random_vector(rng, 32);
      const SearchParams p{.ef_search = 50, .iterative_scan = mode};
      const auto plain = g.search(query, 10, p);
      const auto filtered = g.filtered_search(query, 10, p, [](TupleId) { return true; });
      EXPECT_EQ(plain, filtered.results);
      EXPECT_TRUE(filtered.converged);
    }
  }
}

TEST(FilteredSearch, AlwaysFalseReturnsNothingWithinBudget) {
  const GraphIndex& g = index_10k();
  Rng rng(16);
  for (auto mode : {IterativeScan::Off, IterativeScan::Relaxed, IterativeScan::Strict}) {
    const SearchParams p{.ef_search = 40, .max_scan_tuples = 300, .iterative_scan = mode};
    const auto r = g.filtered_search(random_vector(rng, 32), 10, p, [](TupleId) { return false; });
    EXPECT_TRUE(r.results.empty());
    EXPECT_FALSE(r.converged);
    EXPECT_LE(r.scanned_count, 300u);
  }
  const auto unbounded = g.filtered_search(random_vector(rng, 32), 10, {.ef_search = 40},
                                           [](TupleId) { return false; });
  EXPECT_EQ(unbounded.scanned_count, g.size());  // Relaxed exhausts the graph
}

TEST(FilteredSearch, HalfSelectivityRecallAndSoundness) {
  const GraphIndex& g = index_10k();
  const Table& t = table_10k();
  Rng rng(21);
  std::vector<char> qualifies(t.row_count());
  for (auto& q : qualifies) q = rng.uniform() < 0.5;
  std::vector<float> subset;
  std::vector<TupleId> subset_ids;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    if (!qualifies[r]) continue;
    const auto v = t.vector(0, r);
    subset.insert(subset.end(), v.begin(), v.end());
    subset_ids.push_back(t.id_at(r));
  }
  const IdPredicate pred = [&](TupleId id) { return qualifies[id] != 0; };
  double relaxed = 0.0;
  double strict = 0.0;
  for (int q = 0; q < 100; ++q) {
    const auto query = random_vector(rng, 32);
    std::vector<TupleId> truth;
    for (auto local : reference_knn(subset, 32, query, 10)) truth.push_back(subset_ids[local]);
    for (auto mode : {IterativeScan::Relaxed, IterativeScan::Strict}) {
      const SearchParams p{.ef_search = 40, .max_scan_tuples = 2000, .iterative_scan = mode};
      const auto r = g.filtered_search(query, 10, p, pred);
      EXPECT_LE(r.scanned_count, 2000u);
      for (const auto& n : r.results) EXPECT_TRUE(pred(n.id));
      EXPECT_TRUE(std::is_sorted(r.results.begin(), r.results.end(),
                                 [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; }));
      (mode == IterativeScan::Relaxed ? relaxed : strict) += overlap_recall(ids_of(r.results), truth);
    }
  }
  EXPECT_GE(relaxed / 100.0, 0.8);
  EXPECT_GE(strict / 100.0, 0.8);
}

TEST(FilteredSearch, OffModeStopsAfterOneBeam) {
  const GraphIndex& g = index_10k();
  Rng rng(23);
  // 1% selectivity: one beam of width 16 rarely finds 10 matches.
  const IdPredicate pred = [](TupleId id) { return id % 100 == 0; };
  std::size_t off_found = 0;
  std::size_t relaxed_found = 0;
  for (int q = 0; q < 20; ++q) {
    const auto query = random_vector(rng, 32);
    const auto off = g.filtered_search(query, 10, {.ef_search = 16, .iterative_scan = IterativeScan::Off}, pred);
    const auto rel = g.filtered_search(query, 10, {.ef_search = 16, .iterative_scan = IterativeScan::Relaxed}, pred);
    off_found += off.results.size();
    relaxed_found += rel.results.size();
    EXPECT_TRUE(rel.converged);
    EXPECT_EQ(off.converged, off.results.size() == 10);
  }
  EXPECT_LT(off_found, relaxed_found);
}

TEST(Persistence, SaveLoadPreservesSearchResults) {
  const Table t = testing::random_table({.rows = 1500, .dims = {12}, .seed = 44});
  const GraphIndex g = GraphIndex::build(t, 0);
  const auto path = std::filesystem::temp_directory_path() / "hyq_graph_test.bin";
  g.save(path);
  const GraphIndex back = GraphIndex::load(path, t);
  Rng rng(9);
  for (int q = 0; q < 20; ++q) {
    const auto query = random_vector(rng, 12);
    EXPECT_EQ(g.search(query, 10, {}), back.search(query, 10, {}));
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace hyq
