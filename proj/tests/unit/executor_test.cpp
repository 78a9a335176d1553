#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "hyq/error.hpp"
#include "hyq/executor.hpp"
#include "test_data.hpp"

namespace hyq {
namespace {

using testing::overlap_recall;
using testing::reference_matches;
using testing::reference_score;
using testing::reference_topk;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

void expect_matches_reference(const Table& t, const HybridQuery& q, const ResultSet& rs) {
  const auto ref = reference_topk(t, q);
  ASSERT_EQ(rs.results.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_EQ(rs.results[i].id, ref[i].id) << "rank " << i;
    EXPECT_DOUBLE_EQ(rs.results[i].distance, ref[i].score) << "rank " << i;
  }
}

ColumnParams exhaustive(std::size_t rows) { return {rows, rows, IterativeScan::Strict, rows}; }

TEST(Sequential, EqualsBruteForce) {
  const Table t = testing::random_table({.rows = 1000, .dims = {8, 4}, .seed = 3});
  Rng rng(5);
  for (int i = 0; i < 60; ++i) {
    const auto q = testing::random_query(t, rng, 1 + rng.below(30), 3);
    expect_matches_reference(t, q, exec_sequential(t, q));
  }
}

TEST(Sequential, NoQualifyingRows) {
  const Table t = testing::random_table({.rows = 200});
  Rng rng(1);
  auto q = testing::random_query(t, rng, 10, 0);
  q.predicates = {Predicate::cmp("price", CompareOp::Lt, -1.0)};
  const auto rs = exec_sequential(t, q);
  EXPECT_TRUE(rs.results.empty());
  EXPECT_EQ(rs.scanned_count, 200u);
}

TEST(Sequential, ShortListWhenKExceedsQualifying) {
  const Table t = testing::random_table({.rows = 300});
  Rng rng(2);
  auto q = testing::random_query(t, rng, 300, 0);
  q.predicates = {Predicate::eq("cat", std::string("C"))};
  const auto rs = exec_sequential(t, q);
  EXPECT_EQ(rs.results.size(), testing::reference_count(t, q.predicates));
  EXPECT_TRUE(std::is_sorted(rs.results.begin(), rs.results.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  }));
  expect_matches_reference(t, q, rs);
}

class IndexPaths : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    engine_ = new Engine(testing::random_table({.rows = 800, .dims = {6, 6}, .seed = 9}));
    engine_->build_stats();
    engine_->build_indexes();
  }
  static void TearDownTestSuite() {
    delete engine_;
    engine_ = nullptr;
  }
  static const Table& table() { return engine_->table(); }
  static std::vector<const GraphIndex*> indexes() { return engine_->index_pointers(); }
  static Engine* engine_;
};
Engine* IndexPaths::engine_ = nullptr;

TEST_F(IndexPaths, ExhaustiveParamsReproduceSequential) {
  Rng rng(4);
  const std::size_t n = table().row_count();
  for (int i = 0; i < 30; ++i) {
    const auto q = testing::random_query(table(), rng, 1 + rng.below(20), 2);
    const SubqueryParams p{{exhaustive(n), exhaustive(n)}};
    expect_matches_reference(table(), q, exec_decomposed(table(), indexes(), q, p));
    expect_matches_reference(table(), q, exec_single_index(table(), *indexes()[i % 2], q, p.columns[i % 2]));
  }
}

TEST_F(IndexPaths, SingleIndexReducesToColumnSearch) {
  Rng rng(6);
  const ColumnParams p{10, 64, IterativeScan::Relaxed, 800};
  for (int i = 0; i < 20; ++i) {
    auto q = testing::random_query(table(), rng, 10, 0);
    q.predicates.clear();
    q.weights = {1.0, 0.0};
    const auto rs = exec_single_index(table(), *indexes()[0], q, p);
    const auto direct = run_subquery(*indexes()[0], RowFilter(table(), q.predicates), q, p);
    ASSERT_EQ(rs.results.size(), direct.results.size());
    for (std::size_t j = 0; j < rs.results.size(); ++j) {
      EXPECT_EQ(rs.results[j].id, direct.results[j].id);
      const auto row = *table().row_of(rs.results[j].id);
      EXPECT_DOUBLE_EQ(rs.results[j].distance, table().composite_distance(row, q));
    }
  }
}

TEST_F(IndexPaths, NoFalsePositivesAndExactScores) {
  Rng rng(7);
  const SubqueryParams p{{{10, 16, IterativeScan::Relaxed, 40}, {20, 16, IterativeScan::Strict, 60}}};
  for (int i = 0; i < 100; ++i) {
    const auto q = testing::random_query(table(), rng, 10, 3);
    for (const auto& plan : {PlanChoice::decomposed(), PlanChoice::single(0), PlanChoice::single(1)}) {
      const auto rs = exec_plan(table(), indexes(), q, plan, p);
      EXPECT_LE(rs.results.size(), q.k);
      std::set<TupleId> seen;
      for (const auto& r : rs.results) {
        const auto tuple = table().tuple_at(*table().row_of(r.id));
        EXPECT_TRUE(reference_matches(tuple, table().schema(), q.predicates));
        EXPECT_NEAR(r.distance, reference_score(tuple, table().schema(), q), 1e-9);
        EXPECT_TRUE(seen.insert(r.id).second);
      }
      if (rs.results.size() < q.k) EXPECT_FALSE(rs.converged);
    }
  }
}

TEST_F(IndexPaths, ScanBudgetRespected) {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const auto q = testing::random_query(table(), rng, 10, 2);
    const ColumnParams p{20, 32, i % 2 ? IterativeScan::Strict : IterativeScan::Relaxed, 20 + rng.below(200)};
    const auto r = run_subquery(*indexes()[1], RowFilter(table(), q.predicates), q, p);
    EXPECT_LE(r.scanned_count, p.max_scan_tuples);
    EXPECT_LE(r.results.size(), p.k);
  }
}

TEST_F(IndexPaths, UnionCountsDistinctCandidates) {
  Rng rng(10);
  const SubqueryParams p{{{30, 64, IterativeScan::Relaxed, 300}, {30, 64, IterativeScan::Relaxed, 300}}};
  for (int i = 0; i < 20; ++i) {
    const auto q = testing::random_query(table(), rng, 10, 1);
    const RowFilter f(table(), q.predicates);
    std::set<TupleId> expect;
    for (std::size_t c = 0; c < 2; ++c) {
      for (const auto& n : run_subquery(*indexes()[c], f, q, p.columns[c]).results) expect.insert(n.id);
    }
    EXPECT_EQ(exec_decomposed(table(), indexes(), q, p).candidates, expect.size());
  }
}

TEST_F(IndexPaths, MissingIndexRejected) {
  Rng rng(11);
  const auto q = testing::random_query(table(), rng, 10, 0);
  std::vector<const GraphIndex*> partial{indexes()[0], nullptr};
  const SubqueryParams p{{exhaustive(10), exhaustive(10)}};
  EXPECT_EQ(code_of([&] { exec_decomposed(table(), partial, q, p); }), ErrorCode::IndexMissing);
  EXPECT_EQ(code_of([&] { exec_plan(table(), partial, q, PlanChoice::single(1), p); }), ErrorCode::IndexMissing);
}

TEST_F(IndexPaths, LargerCandidateListsNeverLoseRecall) {
  Rng rng(12);
  for (int i = 0; i < 40; ++i) {
    const auto q = testing::random_query(table(), rng, 10, 1);
    const auto truth = exec_sequential(table(), q).ids();
    double prev = -1.0;
    for (std::size_t ki : {10, 20, 40, 80}) {
      const ColumnParams c{ki, 128, IterativeScan::Relaxed, 800};
      const double r = overlap_recall(exec_decomposed(table(), indexes(), q, {{c, c}}).ids(), truth);
      EXPECT_GE(r, prev) << "k_i " << ki;
      prev = r;
    }
  }
}

// Two identical vector columns: both subqueries return the same ids.
TEST(Decomposed, SharedCandidatesScoredOnce) {
  const auto schema = testing::random_schema({4, 4});
  Rng rng(13);
  auto tuples = testing::random_tuples(schema, 400, 1, rng);
  for (auto& t : tuples) t.vectors[1] = t.vectors[0];
  Table table(schema);
  table.insert_batch(tuples);
  Engine engine(std::move(table));
  engine.build_indexes();
  for (int i = 0; i < 20; ++i) {
    auto q = testing::random_query(engine.table(), rng, 10, 0);
    q.query_vectors[1] = q.query_vectors[0];
    const ColumnParams c{25, 64, IterativeScan::Relaxed, 400};
    const auto rs = exec_decomposed(engine.table(), engine.index_pointers(), q, {{c, c}});
    EXPECT_EQ(rs.candidates, 25u);
    std::set<TupleId> ids;
    for (const auto& r : rs.results) ids.insert(r.id);
    EXPECT_EQ(ids.size(), rs.results.size());
  }
}

class DeskScale : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    engine_ = new Engine(testing::random_table({.rows = 10000, .dims = {8, 8}, .seed = 21}));
    engine_->build_indexes();
  }
  static void TearDownTestSuite() {
    delete engine_;
    engine_ = nullptr;
  }
  static Engine* engine_;
};
Engine* DeskScale::engine_ = nullptr;

TEST_F(DeskScale, DominantColumnSingleIndexRecall) {
  const Table& t = engine_->table();
  Rng rng(22);
  double sum = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto q = testing::random_query(t, rng, 10, 0);
    q.predicates.clear();
    q.weights = {0.9, 0.1};
    const ColumnParams c{40, 64, IterativeScan::Relaxed, 10000};
    sum += overlap_recall(exec_single_index(t, engine_->index(0), q, c).ids(), exec_sequential(t, q).ids());
  }
  EXPECT_GE(sum / 100, 0.8);
}

TEST_F(DeskScale, DecomposedRecallAtHalfSelectivity) {
  const Table& t = engine_->table();
  Rng rng(23);
  double sum = 0.0;
  for (int i = 0; i < 100; ++i) {
    auto q = testing::random_query(t, rng, 10, 0);
    q.predicates = {Predicate::cmp("price", CompareOp::Lt, 50.0)};
    const ColumnParams c{80, 256, IterativeScan::Strict, 10000};
    sum += overlap_recall(exec_decomposed(t, engine_->index_pointers(), q, {{c, c}}).ids(),
                          exec_sequential(t, q).ids());
  }
  EXPECT_GE(sum / 100, 0.9);
}

TEST(EngineDispatch, ForcedSequentialIsTheOracle) {
  Engine engine = testing::built_engine({.rows = 600, .dims = {5, 5}, .seed = 30});
  Rng rng(31);
  const auto q = testing::random_query(engine.table(), rng, 10, 2);
  EXPECT_EQ(code_of([&] { engine.execute(q); }), ErrorCode::EngineNotReady);
  engine.force_plan(PlanChoice::sequential());
  for (int i = 0; i < 30; ++i) {
    const auto qi = testing::random_query(engine.table(), rng, 1 + rng.below(20), 2);
    const auto a = engine.execute(qi);
    const auto b = exec_sequential(engine.table(), qi);
    EXPECT_EQ(a.plan, PlanChoice::sequential());
    EXPECT_EQ(a.results, b.results);
    EXPECT_EQ(engine.execute(qi).results, a.results);
  }
}

TEST(EngineDispatch, ForcedPlanAndParamsAreUsed) {
  Engine engine(testing::random_table({.rows = 500, .dims = {4, 4}, .seed = 32}));
  engine.build_indexes();
  const SubqueryParams p{{{15, 32, IterativeScan::Strict, 100}, {10, 32, IterativeScan::Relaxed, 50}}};
  engine.force_plan(PlanChoice::single(0));
  engine.force_params(p);
  ASSERT_TRUE(engine.ready());
  Rng rng(33);
  for (int i = 0; i < 10; ++i) {
    const auto q = testing::random_query(engine.table(), rng, 10, 1);
    const auto rs = engine.execute(q);
    EXPECT_EQ(rs.plan, PlanChoice::single(0));
    EXPECT_EQ(rs.params, p);
    EXPECT_EQ(rs.results, exec_single_index(engine.table(), engine.index(0), q, p.columns[0]).results);
  }
}

}  // namespace
}  // namespace hyq
