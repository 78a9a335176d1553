#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include "hyq/error.hpp"
#include "hyq/query_features.hpp"
#include "test_data.hpp"

namespace hyq {
namespace {

using testing::TableShape;

std::vector<const GraphIndex*> pointers(const std::vector<GraphIndex>& v) {
  std::vector<const GraphIndex*> out;
  for (const auto& g : v) out.push_back(&g);
  return out;
}

TEST(Preprobe, NoPredicatesMeansFullRate) {
  const Table t = testing::random_table({.rows = 600, .dims = {6, 6}});
  const std::vector<GraphIndex> idx{GraphIndex::build(t, 0), GraphIndex::build(t, 1)};
  Rng rng(3);
  HybridQuery q = testing::random_query(t, rng, 10, 0);
  const auto ptrs = pointers(idx);
  const ProbeResult r = preprobe(t, ptrs, q, {.probe_k = 32, .ef_search = 32});
  ASSERT_EQ(r.local_rate.size(), 2u);
  EXPECT_EQ(r.local_rate[0], 1.0);
  EXPECT_EQ(r.local_rate[1], 1.0);
  EXPECT_EQ(r.probed_count, 32u);
}

TEST(Preprobe, UnsatisfiablePredicateMeansZero) {
  const Table t = testing::random_table({.rows = 600, .dims = {6, 6}});
  const std::vector<GraphIndex> idx{GraphIndex::build(t, 0), GraphIndex::build(t, 1)};
  Rng rng(4);
  HybridQuery q = testing::random_query(t, rng, 10, 0);
  q.predicates = {Predicate::cmp("price", CompareOp::Gt, 1000.0)};
  const auto ptrs = pointers(idx);
  const ProbeResult r = preprobe(t, ptrs, q, {});
  EXPECT_EQ(r.local_rate[0], 0.0);
  EXPECT_EQ(r.local_rate[1], 0.0);
  EXPECT_EQ(r.qualifying[0], 0u);
}

TEST(Preprobe, RateIsExactCountRatio) {
  const Table t = testing::random_table({.rows = 800, .dims = {6, 6}});
  const std::vector<GraphIndex> idx{GraphIndex::build(t, 0), GraphIndex::build(t, 1)};
  const auto ptrs = pointers(idx);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    HybridQuery q = testing::random_query(t, rng, 10, 2);
    const ProbeResult r = preprobe(t, ptrs, q, {.probe_k = 40, .ef_search = 64});
    for (std::size_t c = 0; c < 2; ++c) {
      ASSERT_GT(r.probed_per_column[c], 0u);
      EXPECT_DOUBLE_EQ(r.local_rate[c],
                       static_cast<double>(r.qualifying[c]) / static_cast<double>(r.probed_per_column[c]));
    }
  }
}

// Qualifying rows are exactly the 50 true nearest neighbours of the query,
// and the probe looks at 100.
TEST(Preprobe, PlantedNeighbourhoodRateNearHalf) {
  TableSchema s;
  s.vector_columns = {{"v", 8, Metric::L2}};
  s.scalar_columns = {{"flag", ScalarKind::Numeric}};
  Rng rng(11);
  std::vector<float> data(2000 * 8);
  for (auto& x : data) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<float> query(8);
  for (auto& x : query) x = static_cast<float>(rng.uniform(-0.5, 0.5));
  const auto near = testing::reference_knn(data, 8, query, 50);
  std::vector<Tuple> tuples;
  for (std::size_t r = 0; r < 2000; ++r) {
    const bool in = std::find(near.begin(), near.end(), r) != near.end();
    tuples.push_back({r, {std::vector<float>(data.begin() + r * 8, data.begin() + (r + 1) * 8)}, {in ? 1.0 : 0.0}});
  }
  Table t(s);
  t.insert_batch(tuples);
  const GraphIndex g = GraphIndex::build(t, 0);
  const GraphIndex* ptr = &g;
  HybridQuery q;
  q.query_vectors = {query};
  q.weights = {1.0};
  q.predicates = {Predicate::cmp("flag", CompareOp::Ge, 0.5)};
  const ProbeResult r = preprobe(t, std::span<const GraphIndex* const>(&ptr, 1), q, {.probe_k = 100, .ef_search = 128});
  EXPECT_GE(r.local_rate[0], 0.4);
  EXPECT_LE(r.local_rate[0], 0.6);
}

TEST(Preprobe, MissingIndexThrows) {
  const Table t = testing::random_table({.rows = 100, .dims = {4, 4}});
  const GraphIndex g = GraphIndex::build(t, 0);
  const std::vector<const GraphIndex*> ptrs{&g, nullptr};
  Rng rng(1);
  const HybridQuery q = testing::random_query(t, rng);
  try {
    preprobe(t, ptrs, q, {});
    FAIL() << "expected IndexMissing";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexMissing);
  }
}

TEST(Preprobe, ZeroProbeWidthRejected) {
  EXPECT_THROW((ProbeConfig{.probe_k = 0, .ef_search = 10}.validate()), Error);
}

class ScalarEncoding : public ::testing::Test {
 protected:
  void SetUp() override {
    TableSchema s;
    s.vector_columns = {{"v", 1, Metric::L2}};
    s.scalar_columns = {{"price", ScalarKind::Numeric}, {"cat", ScalarKind::Categorical}};
    table_.emplace(s);
    std::vector<Tuple> tuples;
    for (std::size_t i = 0; i <= 100; ++i) {
      tuples.push_back({i, {{0.0f}}, {static_cast<double>(i), std::string(i < 75 ? "a" : "b")}});
    }
    table_->insert_batch(tuples);
    stats_ = StatsCatalog::build(*table_, 10);
  }
  std::vector<double> encode(const std::vector<Predicate>& p) const {
    return encode_query_scalars(table_->schema(), stats_, p);
  }
  std::optional<Table> table_;
  StatsCatalog stats_;
};

TEST_F(ScalarEncoding, NoPredicatesAllZero) {
  const auto v = encode({});
  ASSERT_EQ(v.size(), 2 * kScalarSlotWidth);
  for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST_F(ScalarEncoding, PriceBelowFiftyIsHalfOperand) {
  const auto v = encode({Predicate::cmp("price", CompareOp::Lt, 50.0)});
  EXPECT_EQ(v[0], 1.0);
  for (std::size_t op = 0; op < kCompareOpCount; ++op) {
    EXPECT_EQ(v[1 + op], op == static_cast<std::size_t>(CompareOp::Lt) ? 1.0 : 0.0);
  }
  EXPECT_DOUBLE_EQ(v[1 + kCompareOpCount], 0.5);
  for (std::size_t i = kScalarSlotWidth; i < v.size(); ++i) EXPECT_EQ(v[i], 0.0);
}

TEST_F(ScalarEncoding, TwoColumnsBothPopulated) {
  const auto v = encode({Predicate::between("price", 10.0, 30.0), Predicate::eq("cat", std::string("a"))});
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[1 + static_cast<std::size_t>(CompareOp::Between)], 1.0);
  EXPECT_DOUBLE_EQ(v[1 + kCompareOpCount], 0.1);
  EXPECT_DOUBLE_EQ(v[2 + kCompareOpCount], 0.3);
  EXPECT_EQ(v[kScalarSlotWidth], 1.0);
  EXPECT_EQ(v[kScalarSlotWidth + 1 + static_cast<std::size_t>(CompareOp::Eq)], 1.0);
  // operand of a categorical Eq is the category's share of rows
  EXPECT_NEAR(v[kScalarSlotWidth + 1 + kCompareOpCount], 75.0 / 101.0, 1e-12);
}

TEST_F(ScalarEncoding, UnknownColumnRejected) {
  try {
    encode({Predicate::cmp("nope", CompareOp::Lt, 1.0)});
    FAIL() << "expected UnknownColumn";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownColumn);
  }
}

TEST_F(ScalarEncoding, OperandsClippedToUnitRange) {
  const auto v = encode({Predicate::cmp("price", CompareOp::Gt, 500.0)});
  EXPECT_EQ(v[1 + kCompareOpCount], 1.0);
}

TEST(FeatureLayout, SegmentsInOrderAndContiguous) {
  const auto schema = testing::random_schema({4, 4, 4});
  const auto layout = FeatureLayout::for_schema(schema);
  const std::vector<std::string> names{"recon", "scalars", "target_recall", "probe", "selectivity", "weights", "k_norm"};
  ASSERT_EQ(layout.segments().size(), names.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    EXPECT_EQ(layout.segments()[i].name, names[i]);
    EXPECT_EQ(layout.segments()[i].offset, offset);
    offset += layout.segments()[i].width;
  }
  EXPECT_EQ(offset, layout.width());
  EXPECT_EQ(layout.segment("recon").width, 3u);
  EXPECT_EQ(layout.segment("scalars").width, 3 * kScalarSlotWidth);
  EXPECT_EQ(layout.segment("probe").width, 4u);
  EXPECT_EQ(layout.slot_names().size(), layout.width());
  EXPECT_THROW(layout.segment("bogus"), Error);
}

class Assembly : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    engine_ = new Engine(testing::built_engine({.rows = 800, .dims = {6, 6}, .seed = 2}));
  }
  static void TearDownTestSuite() {
    delete engine_;
    engine_ = nullptr;
  }
  static Engine* engine_;
};
Engine* Assembly::engine_ = nullptr;

TEST_F(Assembly, SegmentsHoldInsertedValues) {
  Rng rng(8);
  HybridQuery q = testing::random_query(engine_->table(), rng, 10, 2);
  q.target_recall = 0.9;
  q.weights = {3.0, 1.0};
  const auto& layout = engine_->layout();
  const ReconstructionScore recon{{0.25, 0.75}};
  ProbeResult probe;
  probe.local_rate = {0.5, 0.125};
  probe.probed_count = 64;
  const auto fv = assemble_features(layout, engine_->table().schema(), 800, recon, engine_->stats(), probe, q);
  ASSERT_EQ(fv.values.size(), layout.width());
  EXPECT_EQ(fv.segment("recon")[0], 0.25);
  EXPECT_EQ(fv.segment("recon")[1], 0.75);
  EXPECT_EQ(fv.segment("target_recall")[0], 0.9);
  EXPECT_EQ(fv.segment("probe")[0], 0.5);
  EXPECT_EQ(fv.segment("probe")[1], 0.125);
  EXPECT_EQ(fv.segment("probe")[2], 6.4);
  EXPECT_DOUBLE_EQ(fv.segment("weights")[0], 0.75);
  EXPECT_DOUBLE_EQ(fv.segment("weights")[1], 0.25);
  EXPECT_DOUBLE_EQ(fv.segment("k_norm")[0], 10.0 / 800.0);
  const double sigma = estimate_conjunction(engine_->stats(), q.predicates);
  EXPECT_EQ(fv.segment("selectivity")[0], sigma);
  const auto scal = encode_query_scalars(engine_->table().schema(), engine_->stats(), q.predicates);
  EXPECT_TRUE(std::equal(scal.begin(), scal.end(), fv.segment("scalars").begin()));
}

TEST_F(Assembly, WidthFixedAndFiniteOverRandomQueries) {
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const HybridQuery q = testing::random_query(engine_->table(), rng, 1 + rng.below(20), 3);
    const auto fv = engine_->features(q);
    ASSERT_EQ(fv.values.size(), engine_->layout().width());
    for (double x : fv.values) ASSERT_TRUE(std::isfinite(x));
  }
}

TEST_F(Assembly, PureFunctionOfInputs) {
  Rng rng(10);
  const HybridQuery q = testing::random_query(engine_->table(), rng, 10, 2);
  EXPECT_EQ(engine_->features(q).values, engine_->features(q).values);
}

TEST_F(Assembly, WeightRescalingLeavesFeaturesUnchanged) {
  Rng rng(12);
  HybridQuery q = testing::random_query(engine_->table(), rng, 10, 2);
  HybridQuery scaled = q;
  for (auto& w : scaled.weights) w *= 7.5;
  const auto a = engine_->features(q).segment("weights");
  const auto b = engine_->features(scaled).segment("weights");
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST_F(Assembly, NonFiniteInputRejected) {
  Rng rng(13);
  const HybridQuery q = testing::random_query(engine_->table(), rng);
  ProbeResult probe;
  probe.local_rate = {0.5, 0.5};
  probe.probed_count = 10;
  const ReconstructionScore bad{{std::nan(""), 0.1}};
  EXPECT_THROW(assemble_features(engine_->layout(), engine_->table().schema(), 800, bad, engine_->stats(), probe, q),
               Error);
  const ReconstructionScore narrow{{0.1}};
  try {
    assemble_features(engine_->layout(), engine_->table().schema(), 800, narrow, engine_->stats(), probe, q);
    FAIL() << "expected LayoutMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LayoutMismatch);
  }
}

TEST_F(Assembly, CsvHeaderNamesEverySlot) {
  Rng rng(14);
  std::vector<FeatureVector> rows;
  for (int i = 0; i < 3; ++i) rows.push_back(engine_->features(testing::random_query(engine_->table(), rng)));
  const auto path = std::filesystem::temp_directory_path() / "hyq_features_test.csv";
  write_feature_csv(path, engine_->layout(), rows);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1, engine_->layout().width());
  EXPECT_NE(header.find("local_rate_v0"), std::string::npos);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 3u);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace hyq
