#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "hyq/error.hpp"
#include "hyq/harness.hpp"
#include "test_data.hpp"

namespace hyq {
namespace {

std::vector<TupleId> ids(std::initializer_list<TupleId> v) { return v; }

TEST(Recall, Examples) {
  const auto truth = ids({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  EXPECT_EQ(compute_recall(truth, truth), 1.0);
  EXPECT_EQ(compute_recall(ids({11, 12, 13, 14, 15, 16, 17, 18, 19, 20}), truth), 0.0);
  EXPECT_DOUBLE_EQ(compute_recall(ids({1, 2, 3, 4, 5, 6, 7, 40, 41, 42}), truth), 0.7);
  EXPECT_EQ(compute_recall(ids({}), ids({})), 1.0);
  EXPECT_EQ(compute_recall(ids({3}), ids({})), 1.0);
  EXPECT_EQ(compute_recall(ids({3, 3, 3}), ids({3, 4})), 0.5);  // duplicates count once
}

TEST(Percentile, NearestRank) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(101 - i);
  EXPECT_EQ(percentile(v, 50), 50.0);
  EXPECT_EQ(percentile(v, 95), 95.0);
  EXPECT_EQ(percentile(v, 99), 99.0);
  EXPECT_EQ(percentile(v, 100), 100.0);
  EXPECT_EQ(percentile({7.0}, 99), 7.0);
  EXPECT_EQ(percentile({}, 50), 0.0);
}

class Eval : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    engine_ = new Engine(testing::built_engine({.rows = 1000, .dims = {6, 6}, .seed = 40}));
    Rng rng(41);
    queries_ = new std::vector<HybridQuery>;
    for (int i = 0; i < 40; ++i) queries_->push_back(testing::random_query(engine_->table(), rng, 10, 2));
    (*queries_)[0].predicates = {Predicate::cmp("price", CompareOp::Lt, -5.0)};
    truth_ = new GroundTruth(gen_ground_truth(engine_->table(), *queries_));
  }
  static void TearDownTestSuite() {
    delete engine_;
    delete queries_;
    delete truth_;
  }
  static Engine* engine_;
  static std::vector<HybridQuery>* queries_;
  static GroundTruth* truth_;
};
Engine* Eval::engine_ = nullptr;
std::vector<HybridQuery>* Eval::queries_ = nullptr;
GroundTruth* Eval::truth_ = nullptr;

TEST_F(Eval, SequentialOracleScoresPerfectly) {
  Engine e = *engine_;
  e.force_plan(PlanChoice::sequential());
  const auto report = run_eval(e, *queries_, *truth_, std::nullopt, {.repetitions = 2});
  ASSERT_EQ(report.rows.size(), queries_->size());
  EXPECT_EQ(report.mean_recall, 1.0);
  EXPECT_EQ(report.target_met_fraction, 1.0);
  EXPECT_TRUE(report.rows[0].empty_truth);
  EXPECT_GT(report.qps, 0.0);
  EXPECT_LE(report.p50, report.p95);
  EXPECT_LE(report.p95, report.p99);
  EXPECT_EQ(report.plan_counts.at("sequential"), queries_->size());
  double sum = 0.0;
  for (const auto& r : report.rows) sum += r.latency;
  EXPECT_LE(sum, report.total_seconds);
}

TEST_F(Eval, BaselineAndRecallsReproduce) {
  Engine e = *engine_;
  e.force_plan(PlanChoice::decomposed());
  e.force_params(SubqueryParams{{{20, 32, IterativeScan::Relaxed, 200}, {20, 32, IterativeScan::Relaxed, 200}}});
  GridConfig base;
  base.plan = PlanChoice::sequential();
  const auto a = run_eval(e, *queries_, *truth_, base);
  const auto b = run_eval(e, *queries_, *truth_, base);
  EXPECT_EQ(a.baseline_mean_recall, 1.0);
  EXPECT_TRUE(a.baseline_name.has_value());
  EXPECT_GT(a.mean_speedup, 0.0);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].recall, b.rows[i].recall);
    EXPECT_GE(a.rows[i].recall, 0.0);
    EXPECT_LE(a.rows[i].recall, 1.0);
    ASSERT_TRUE(a.rows[i].baseline_latency.has_value());
  }
  const auto summary = format_summary(a);
  EXPECT_NE(summary.find("mean speedup"), std::string::npos);
}

TEST_F(Eval, MisalignedTruthAndUnreadyEngine) {
  GroundTruth short_truth(truth_->begin(), truth_->begin() + 5);
  Engine e = *engine_;
  e.force_plan(PlanChoice::sequential());
  try {
    run_eval(e, *queries_, short_truth);
    ADD_FAILURE() << "no error";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::MisalignedGroundTruth);
  }
  try {
    run_eval(*engine_, *queries_, *truth_);
    ADD_FAILURE() << "no error";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::EngineNotReady);
  }
}

TEST_F(Eval, CsvHasOneRowPerQuery) {
  Engine e = *engine_;
  e.force_plan(PlanChoice::sequential());
  const auto report = run_eval(e, *queries_, *truth_);
  const auto path = std::filesystem::temp_directory_path() / "hyq_report_test.csv";
  write_report_csv(path, report);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("query,recall,latency_seconds,plan", 0), 0u);
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, queries_->size());
  std::filesystem::remove(path);
}

TEST_F(Eval, StaticGridIncludesTheOracle) {
  GridSpec s;
  s.ef_search = {16};
  s.iterative_scan = {IterativeScan::Relaxed};
  s.lambda = {1};
  s.max_scan = {0.05};
  const auto grid = build_grid(s, 2);
  const auto results = evaluate_static_grid(*engine_, *queries_, *truth_, grid);
  ASSERT_EQ(results.size(), grid.size());
  EXPECT_EQ(results[0].mean_recall, 1.0);
  EXPECT_EQ(results[0].target_met_fraction, 1.0);
  const auto best = best_static(results, 1.0);
  ASSERT_TRUE(best.has_value());
  EXPECT_EQ(best->target_met_fraction, 1.0);
  EXPECT_FALSE(best_static(std::vector<StaticResult>{}, 0.9).has_value());
}

}  // namespace
}  // namespace hyq
