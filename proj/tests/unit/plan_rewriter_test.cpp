#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "hyq/error.hpp"
#include "hyq/plan_rewriter.hpp"
#include "hyq/training.hpp"
#include "test_data.hpp"

namespace hyq {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::IoError;
}

TEST(PlanChoice, ClassIndexRoundTrip) {
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(PlanChoice::from_class(c, 3).class_index(), c);
  EXPECT_EQ(PlanChoice::from_class(0, 3), PlanChoice::sequential());
  EXPECT_EQ(PlanChoice::from_class(1, 3), PlanChoice::decomposed());
  EXPECT_EQ(PlanChoice::from_class(4, 3), PlanChoice::single(2));
  EXPECT_EQ(code_of([] { PlanChoice::from_class(5, 3); }), ErrorCode::InvalidPlan);
  for (const auto& p : {PlanChoice::sequential(), PlanChoice::decomposed(), PlanChoice::single(1)}) {
    EXPECT_EQ(parse_plan(to_string(p), 2), p);
  }
  EXPECT_EQ(code_of([] { parse_plan("single:2", 2); }), ErrorCode::InvalidPlan);
  EXPECT_EQ(code_of([] { parse_plan("hash_join", 2); }), ErrorCode::InvalidPlan);
}

TEST(CheckParams, RejectsInvariantViolations) {
  const ColumnParams ok{10, 64, IterativeScan::Strict, 100};
  EXPECT_NO_THROW(check_params({{ok, ok}}, 10));
  auto bad = ok;
  bad.k = 5;
  EXPECT_THROW(check_params({{bad}}, 10), Error);
  bad = ok;
  bad.max_scan_tuples = 9;
  EXPECT_THROW(check_params({{bad}}, 10), Error);
  bad = ok;
  bad.ef_search = 8;
  EXPECT_THROW(check_params({{bad}}, 10), Error);
  bad.iterative_scan = IterativeScan::Relaxed;
  EXPECT_NO_THROW(check_params({{bad}}, 10));
  bad.ef_search = 0;
  EXPECT_THROW(check_params({{bad}}, 10), Error);
}

TEST(Grid, ResolveRules) {
  GridConfig g;
  g.plan = PlanChoice::decomposed();
  g.ef_search = 32;
  g.iterative_scan = IterativeScan::Strict;
  g.lambda = 4;
  g.max_scan_k_multiple = 2;
  auto p = g.resolve(10, 10000, 2);
  ASSERT_EQ(p.columns.size(), 2u);
  EXPECT_EQ(p.columns[0].k, 40u);
  EXPECT_EQ(p.columns[0].ef_search, 40u);  // strict mode lifts ef to k_i
  EXPECT_EQ(p.columns[0].max_scan_tuples, 80u);
  EXPECT_EQ(p.columns[1], p.columns[0]);

  g.iterative_scan = IterativeScan::Relaxed;
  g.max_scan_k_multiple = 0;
  g.max_scan_row_fraction = 0.01;
  p = g.resolve(10, 10000, 2);
  EXPECT_EQ(p.columns[0].ef_search, 32u);
  EXPECT_EQ(p.columns[0].max_scan_tuples, 100u);

  g.plan = PlanChoice::single(1);
  g.lambda = 8;
  p = g.resolve(10, 50, 2);
  EXPECT_EQ(p.columns[1].k, 50u);  // clamped to the row count
  EXPECT_EQ(p.columns[1].max_scan_tuples, 50u);
  EXPECT_EQ(p.columns[0].k, 10u);  // non-participating
  EXPECT_EQ(p.columns[0].max_scan_tuples, 10u);
  EXPECT_NO_THROW(check_params(p, 10));
}

TEST(Grid, DefaultShapeAndOrder) {
  const auto grid = build_grid(GridSpec{}, 2);
  ASSERT_EQ(grid.size(), 1u + 5 * 2 * 4 * 3 * 3);
  EXPECT_EQ(grid[0].plan, PlanChoice::sequential());
  EXPECT_EQ(grid[1].plan, PlanChoice::decomposed());
  EXPECT_EQ(grid[2].plan, PlanChoice::single(0));
  EXPECT_EQ(grid[3].plan, PlanChoice::single(1));
  EXPECT_EQ(grid[4].plan, PlanChoice::decomposed());
  GridSpec no_single;
  no_single.include_single_index = false;
  EXPECT_EQ(build_grid(no_single, 2).size(), 1u + 5 * 2 * 4 * 3);
}

TEST(Grid, ParseSpec) {
  const auto spec = parse_grid_spec(
      "# small grid\nef_search = 16, 32\niterative_scan = strict_order\nlambda = 1\nmax_scan = 2k, 0.5\n"
      "single_index = false\n");
  EXPECT_EQ(spec.ef_search, (std::vector<std::size_t>{16, 32}));
  EXPECT_EQ(spec.iterative_scan, (std::vector<IterativeScan>{IterativeScan::Strict}));
  EXPECT_EQ(spec.max_scan, (std::vector<double>{2.0, 0.5}));
  EXPECT_FALSE(spec.include_single_index);
  EXPECT_EQ(build_grid(spec, 2).size(), 1u + 2 * 2);
  EXPECT_EQ(code_of([] { parse_grid_spec("ef_search 16"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_grid_spec("max_scan = 3"); }), ErrorCode::ParseError);
  EXPECT_EQ(code_of([] { parse_grid_spec("max_scan = 0.5k"); }), ErrorCode::ParseError);
}

TEST(DecodeParams, AlwaysValidAfterClamping) {
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 1 + rng.below(100);
    const std::size_t rows = rng.below(5000);
    std::vector<std::vector<double>> raw;
    std::vector<std::vector<double>> modes;
    for (int c = 0; c < 2; ++c) {
      raw.push_back({rng.uniform(-20, 30), rng.uniform(-20, 30), rng.uniform(-20, 30)});
      modes.push_back({rng.normal(), rng.normal(), rng.normal()});
    }
    const auto p = decode_params(raw, modes, rng.uniform(0, 2), k, rows);
    ASSERT_NO_THROW(check_params(p, k));
    for (const auto& c : p.columns) {
      EXPECT_GE(c.k, k);
      EXPECT_LE(c.k, std::max(k, rows));
      EXPECT_GE(c.ef_search, c.k);
      EXPECT_LE(c.ef_search, std::max<std::size_t>(4096, c.k));
      EXPECT_GE(c.max_scan_tuples, c.k);
      EXPECT_LE(c.max_scan_tuples, std::max(c.k, rows));
    }
  }
}

HybridQuery sample_query() {
  HybridQuery q;
  q.query_vectors = {{1.0f, 2.0f}, {0.5f, -1.0f, 0.25f}};
  q.weights = {0.3, 0.7};
  q.k = 7;
  q.predicates = {Predicate::cmp("price", CompareOp::Lt, 50.0), Predicate::eq("cat", std::string("B"))};
  return q;
}

TEST(Rewrite, DecomposedKeepsPredicatesOnEverySubquery) {
  const auto schema = testing::random_schema({2, 3});
  const auto q = sample_query();
  const SubqueryParams params{{{14, 32, IterativeScan::Relaxed, 70}, {28, 64, IterativeScan::Strict, 100}}};
  const auto rw = rewrite(q, schema, PlanChoice::decomposed(), params);
  ASSERT_EQ(rw.subqueries.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(rw.subqueries[i].column, i);
    EXPECT_EQ(rw.subqueries[i].column_name, "v" + std::to_string(i));
    EXPECT_EQ(rw.subqueries[i].predicates, q.predicates);
    EXPECT_EQ(rw.subqueries[i].query_vector, q.query_vectors[i]);
    EXPECT_EQ(rw.subqueries[i].params, params.columns[i]);
    EXPECT_EQ(rw.subqueries[i].k, params.columns[i].k);
  }
  EXPECT_EQ(rw.merge.k, 7u);
  EXPECT_EQ(rw.merge.weights, q.weights);
}

TEST(Rewrite, SingleIndexHasOneSubquery) {
  const auto schema = testing::random_schema({2, 3});
  const SubqueryParams params{{{7, 32, IterativeScan::Relaxed, 70}, {21, 64, IterativeScan::Relaxed, 100}}};
  const auto rw = rewrite(sample_query(), schema, PlanChoice::single(1), params);
  ASSERT_EQ(rw.subqueries.size(), 1u);
  EXPECT_EQ(rw.subqueries[0].column, 1u);
  EXPECT_EQ(rw.subqueries[0].k, 21u);
  EXPECT_EQ(code_of([&] { rewrite(sample_query(), schema, PlanChoice::sequential(), params); }), ErrorCode::InvalidPlan);
  EXPECT_EQ(code_of([&] { rewrite(sample_query(), schema, PlanChoice::single(2), params); }), ErrorCode::InvalidPlan);
}

TEST(Rewrite, SubqueryTextRoundTrip) {
  const auto schema = testing::random_schema({2, 3});
  const SubqueryParams params{{{14, 32, IterativeScan::Relaxed, 70}, {28, 64, IterativeScan::Strict, 100}}};
  const auto rw = rewrite(sample_query(), schema, PlanChoice::decomposed(), params);
  for (const auto& sub : rw.subqueries) {
    const auto text = format_subquery(sub);
    EXPECT_NE(text.find("SET hnsw.ef_search"), std::string::npos);
    EXPECT_EQ(from_statement(parse_statement(text), schema), sub);
  }
}

TEST(PickLabel, CheapestQualifyingThenFallback) {
  const std::vector<double> cost{10, 3, 3, 1};
  EXPECT_EQ(pick_label(cost, std::vector<double>{1.0, 0.9, 0.9, 0.5}, 0.9), 1u);  // tie keeps grid order
  EXPECT_EQ(pick_label(cost, std::vector<double>{1.0, 0.9, 0.95, 0.95}, 0.95), 3u);
  EXPECT_EQ(pick_label(cost, std::vector<double>{0.5, 0.7, 0.7, 0.2}, 0.9), 1u);  // max recall, then cost
  EXPECT_THROW(pick_label(cost, std::vector<double>{1.0}, 0.9), Error);
}

class Training : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { engine_ = new Engine(testing::built_engine({.rows = 1500, .dims = {6, 6}, .seed = 4})); }
  static void TearDownTestSuite() {
    delete engine_;
    engine_ = nullptr;
  }
  static std::vector<GridConfig> small_grid() {
    GridSpec s;
    s.ef_search = {32};
    s.iterative_scan = {IterativeScan::Relaxed};
    s.lambda = {1, 4};
    s.max_scan = {0.1};
    return build_grid(s, 2);
  }
  static std::vector<HybridQuery> queries(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<HybridQuery> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_query(engine_->table(), rng, 10, 2));
    return out;
  }
  static Engine* engine_;
};
Engine* Training::engine_ = nullptr;

TEST_F(Training, OracleAlwaysQualifies) {
  const auto grid = small_grid();
  const auto qs = queries(30, 1);
  const auto ex = generate_training_data(*engine_, qs, grid);
  ASSERT_EQ(ex.size(), qs.size());
  for (const auto& e : ex) {
    ASSERT_EQ(e.recall.size(), grid.size());
    ASSERT_EQ(e.cost.size(), grid.size());
    EXPECT_EQ(e.recall[0], 1.0);
    EXPECT_TRUE(e.target_met);
    for (double r : e.recall) {
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
    EXPECT_EQ(e.label_plan, grid[e.label_config].plan);
    EXPECT_EQ(e.features.values.size(), engine_->layout().width());
  }
}

TEST_F(Training, DuplicateConfigsTieToFirst) {
  auto grid = small_grid();
  const std::size_t n = grid.size();
  grid.insert(grid.end(), grid.begin() + 1, grid.end());
  const auto ex = generate_training_data(*engine_, queries(20, 2), grid);
  for (const auto& e : ex) {
    for (std::size_t j = 1; j < n; ++j) {
      EXPECT_EQ(e.recall[j], e.recall[j + n - 1]);
      EXPECT_EQ(e.cost[j], e.cost[j + n - 1]);
    }
    EXPECT_LT(e.label_config, n);
  }
}

TEST_F(Training, LabelsReproduceOnReexecution) {
  const auto grid = small_grid();
  const auto qs = queries(20, 3);
  const auto ex = generate_training_data(*engine_, qs, grid);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto truth = exec_sequential(engine_->table(), qs[i]).ids();
    const auto rs = engine_->execute_with(qs[i], ex[i].label_plan, ex[i].label_params);
    const double r = testing::overlap_recall(rs.ids(), truth);
    EXPECT_EQ(r, ex[i].recall[ex[i].label_config]);
    if (ex[i].target_met) EXPECT_GE(r, qs[i].target_recall);
  }
}

TEST_F(Training, HeadroomRaisesTheBar) {
  const auto grid = small_grid();
  const auto qs = queries(20, 4);
  LabelConfig strict;
  strict.recall_headroom = 1.0;
  const auto ex = generate_training_data(*engine_, qs, grid, strict);
  for (const auto& e : ex) EXPECT_EQ(e.recall[e.label_config], 1.0);
  strict.recall_headroom = -0.1;
  EXPECT_THROW(generate_training_data(*engine_, qs, grid, strict), Error);
}

TEST_F(Training, NotReadyEngineRejected) {
  Engine bare(testing::random_table({.rows = 50, .dims = {3}}));
  EXPECT_EQ(code_of([&] { generate_training_data(bare, queries(1, 5), small_grid()); }), ErrorCode::EngineNotReady);
  EXPECT_EQ(code_of([&] { generate_training_data(*engine_, queries(1, 5), std::vector<GridConfig>{}); }),
            ErrorCode::InvalidConfig);
}

TEST_F(Training, TooFewExamples) {
  const auto ex = generate_training_data(*engine_, queries(10, 6), small_grid());
  EXPECT_EQ(code_of([&] { train_models(ex); }), ErrorCode::InsufficientData);
}

TEST_F(Training, ConstantSequentialLabelsAreLearned) {
  const std::vector<GridConfig> seq_only{GridConfig{.plan = PlanChoice::sequential()}};
  const auto qs = queries(80, 7);
  const auto ex = generate_training_data(*engine_, qs, seq_only);
  ModelTrainConfig cfg;
  cfg.plan_train.epochs = 40;
  const auto trained = train_models(ex, cfg);
  EXPECT_TRUE(trained.models.ready());
  EXPECT_TRUE(trained.models.params.is_constant());
  EXPECT_GE(trained.metrics.plan_accuracy, 0.95);
  std::size_t seq = 0;
  for (const auto& q : queries(50, 8)) {
    seq += select_plan(trained.models.plan, engine_->features(q).values) == PlanChoice::sequential();
  }
  EXPECT_GE(seq, 48u);
}

TEST_F(Training, ModelsPersistAndPredictIdentically) {
  const auto ex = generate_training_data(*engine_, queries(60, 9), small_grid());
  ModelTrainConfig cfg;
  cfg.plan_train.epochs = 20;
  cfg.param_train.epochs = 20;
  const auto trained = train_models(ex, cfg);
  const auto dir = std::filesystem::temp_directory_path() / "hyq_models_test";
  std::filesystem::remove_all(dir);
  trained.models.save(dir);
  const auto loaded = OptimizerModels::load(dir);
  EXPECT_EQ(loaded.feature_names, trained.models.feature_names);
  for (const auto& q : queries(20, 10)) {
    const auto f = engine_->features(q).values;
    EXPECT_EQ(select_plan(loaded.plan, f), select_plan(trained.models.plan, f));
    EXPECT_EQ(recommend_params(loaded.params, f, q.k, 1500), recommend_params(trained.models.params, f, q.k, 1500));
    EXPECT_EQ(loaded.plan.class_scores(f), trained.models.plan.class_scores(f));
  }
  std::filesystem::remove_all(dir);
}

TEST_F(Training, DeterministicUnderSeed) {
  const auto grid = small_grid();
  const auto a = generate_training_data(*engine_, queries(60, 11), grid);
  const auto b = generate_training_data(*engine_, queries(60, 11), grid);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].features.values, b[i].features.values);
    EXPECT_EQ(a[i].label_config, b[i].label_config);
    EXPECT_EQ(a[i].cost, b[i].cost);
  }
  ModelTrainConfig cfg;
  cfg.plan_train.epochs = 10;
  cfg.param_train.epochs = 10;
  const auto ma = train_models(a, cfg);
  const auto mb = train_models(b, cfg);
  const auto& la = ma.models.plan.net().layers();
  const auto& lb = mb.models.plan.net().layers();
  for (std::size_t l = 0; l < la.size(); ++l) {
    EXPECT_TRUE(la[l].weights == lb[l].weights);
    EXPECT_TRUE(la[l].bias == lb[l].bias);
  }
}

TEST_F(Training, RecommendationsValidForRandomFeatures) {
  const auto ex = generate_training_data(*engine_, queries(60, 12), small_grid());
  ModelTrainConfig cfg;
  cfg.plan_train.epochs = 10;
  cfg.param_train.epochs = 10;
  const auto trained = train_models(ex, cfg);
  Rng rng(13);
  std::vector<double> f(engine_->layout().width());
  for (int i = 0; i < 1000; ++i) {
    for (auto& x : f) x = rng.uniform(-50, 50);
    const std::size_t k = 1 + rng.below(40);
    ASSERT_NO_THROW(check_params(recommend_params(trained.models.params, f, k, 1500), k));
  }
}

TEST_F(Training, FeatureNamesMustMatchLayout) {
  const auto ex = generate_training_data(*engine_, queries(60, 14), small_grid());
  ModelTrainConfig cfg;
  cfg.plan_train.epochs = 5;
  cfg.param_train.epochs = 5;
  auto models = train_models(ex, cfg).models;
  models.feature_names.back() = "something_else";
  Engine copy = *engine_;
  EXPECT_EQ(code_of([&] { copy.set_models(models); }), ErrorCode::LayoutMismatch);
}

TEST(ModelsMissing, SelectPlanNeedsTraining) {
  EXPECT_EQ(code_of([] { select_plan(PlanModel{}, std::vector<double>{1.0}); }), ErrorCode::ModelMissing);
  EXPECT_EQ(code_of([] { recommend_params(ParamModel{}, std::vector<double>{1.0}, 10, 100); }), ErrorCode::ModelMissing);
}

// 200 queries on a 10k-row synthetic table over a 12-point grid.
TEST(TrainingScale, TwoHundredQueriesTwelvePointGrid) {
  SyntheticTableSpec ts;
  ts.rows = 10000;
  ts.dimensions = {8, 8};
  Engine engine(gen_synthetic_table(ts));
  engine.build_stats();
  engine.build_indexes();
  engine.fit_encoder(testing::fast_encoder_config());
  GridSpec s;
  s.ef_search = {32, 64};
  s.iterative_scan = {IterativeScan::Relaxed};
  s.lambda = {1};
  s.max_scan = {2.0, 0.1};
  s.include_single_index = true;
  auto grid = build_grid(s, 2);
  grid.resize(12, grid.back());
  ASSERT_EQ(grid.size(), 12u);
  WorkloadSpec ws;
  ws.num_queries = 200;
  ws.stratum_cap = 20;
  const auto ex = generate_training_data(engine, 200, grid, 17, ws);
  ASSERT_EQ(ex.size(), 200u);
  for (const auto& e : ex) {
    for (double r : e.recall) {
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
  }
}

}  // namespace
}  // namespace hyq
