#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "hyq/benchgen.hpp"
#include "hyq/error.hpp"
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

double l2(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s);
}

TEST(ClusterLabels, SingleClusterIsConstant) {
  const auto v = gen_blob_vectors(300, 4, 3, 0.2, 1);
  const auto labels = gen_cluster_labels({v, 4}, 1, 2);
  EXPECT_EQ(std::set<std::string>(labels.begin(), labels.end()).size(), 1u);
}

TEST(ClusterLabels, RecoversPlantedBlobs) {
  // Two blobs placed far apart by hand.
  Rng rng(3);
  std::vector<float> v;
  std::vector<int> blob;
  for (int i = 0; i < 1000; ++i) {
    const int b = static_cast<int>(rng.below(2));
    for (int d = 0; d < 6; ++d) v.push_back(static_cast<float>((b ? 3.0 : -3.0) + rng.normal() * 0.5));
    blob.push_back(b);
  }
  const auto labels = gen_cluster_labels({v, 6}, 2, 4);
  std::map<std::pair<int, std::string>, int> joint;
  for (std::size_t i = 0; i < labels.size(); ++i) ++joint[{blob[i], labels[i]}];
  int agree = 0;
  for (const auto& [key, count] : joint) {
    int best = 0;
    for (const auto& [k2, c2] : joint) {
      if (k2.first == key.first) best = std::max(best, c2);
    }
    if (count == best) agree += count;
  }
  EXPECT_GE(agree, 990);
  EXPECT_EQ(gen_cluster_labels({v, 6}, 2, 4), labels);
  EXPECT_EQ(code_of([] { gen_cluster_labels({}, 2, 1); }), ErrorCode::EmptyInput);
}

TEST(HyperplaneLabels, Basics) {
  const auto v = gen_blob_vectors(2000, 5, 6, 0.3, 5);
  const VectorView view{v, 5};
  const auto one = gen_hyperplane_labels(view, 1, 6);
  EXPECT_LE(std::set<std::string>(one.begin(), one.end()).size(), 2u);

  const auto three = gen_hyperplane_labels(view, 3, 7);
  EXPECT_LE(std::set<std::string>(three.begin(), three.end()).size(), 8u);
  for (std::size_t b = 0; b < 3; ++b) {
    std::set<char> sides;
    for (const auto& l : three) sides.insert(l.at(b));
    EXPECT_EQ(sides.size(), 2u) << "plane " << b;
  }
  EXPECT_EQ(gen_hyperplane_labels(view, 3, 7), three);
  EXPECT_EQ(code_of([&] { gen_hyperplane_labels(view, 17, 1); }), ErrorCode::TooManyPlanes);
  EXPECT_EQ(code_of([&] { gen_hyperplane_labels(view, 0, 1); }), ErrorCode::TooManyPlanes);
}

TEST(HyperplaneLabels, CopiesShareLabels) {
  auto v = gen_blob_vectors(200, 3, 2, 0.3, 8);
  v.insert(v.end(), v.begin(), v.end());
  const auto labels = gen_hyperplane_labels({v, 3}, 4, 9);
  for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(labels[i], labels[i + 200]);
}

TEST(DistanceSum, ZeroAtTheReference) {
  const std::vector<float> v{0.5f, -1.5f, 2.0f};
  const auto d = gen_distance_sum({v, 3}, 1, 10);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(code_of([] { gen_distance_sum({}, 1, 1); }), ErrorCode::EmptyInput);
}

TEST(DistanceSum, LipschitzAndCorrelated) {
  const std::size_t dim = 6;
  const std::size_t refs = 4;
  const auto v = gen_blob_vectors(1500, dim, 5, 0.25, 11);
  const VectorView view{v, dim};
  const auto f = gen_distance_sum(view, refs, 12);
  Rng rng(13);
  std::vector<double> dist, delta;
  for (int i = 0; i < 3000; ++i) {
    const auto a = rng.below(1500), b = rng.below(1500);
    const double d = l2(view.row(a), view.row(b));
    EXPECT_LE(std::abs(f[a] - f[b]), refs * d + 1e-4);
    dist.push_back(d);
    delta.push_back(std::abs(f[a] - f[b]));
  }
  const auto mean = [](const std::vector<double>& x) {
    double s = 0;
    for (double y : x) s += y;
    return s / x.size();
  };
  const double md = mean(dist), mv = mean(delta);
  double cov = 0, vd = 0, vv = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    cov += (dist[i] - md) * (delta[i] - mv);
    vd += (dist[i] - md) * (dist[i] - md);
    vv += (delta[i] - mv) * (delta[i] - mv);
  }
  EXPECT_GT(cov / std::sqrt(vd * vv), 0.0);
}

TEST(SyntheticTable, ColumnsAndDeterminism) {
  SyntheticTableSpec s;
  s.rows = 500;
  s.dimensions = {4, 6};
  const Table a = gen_synthetic_table(s);
  const Table b = gen_synthetic_table(s);
  EXPECT_EQ(a.row_count(), 500u);
  EXPECT_EQ(a.schema().vector_columns.size(), 2u);
  EXPECT_TRUE(a.schema().find_scalar_column("cluster").has_value());
  EXPECT_TRUE(a.schema().find_scalar_column("region").has_value());
  EXPECT_TRUE(a.schema().find_scalar_column("dsum").has_value());
  EXPECT_TRUE(a.schema().find_scalar_column("price").has_value());
  for (std::size_t r = 0; r < 500; r += 37) {
    EXPECT_EQ(a.vector(1, r)[0], b.vector(1, r)[0]);
    EXPECT_EQ(a.scalar(0, r), b.scalar(0, r));
  }
}

class Queries : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticTableSpec s;
    s.rows = 2000;
    s.dimensions = {4, 4};
    engine_ = new Engine(gen_synthetic_table(s));
    engine_->build_stats();
    engine_->build_indexes();
  }
  static void TearDownTestSuite() {
    delete engine_;
    engine_ = nullptr;
  }
  static Workload generate(const WorkloadSpec& spec) {
    return gen_queries(engine_->table(), engine_->stats(), spec);
  }
  static Engine* engine_;
};
Engine* Queries::engine_ = nullptr;

TEST_F(Queries, StratifiedAndWeighted) {
  WorkloadSpec spec;
  spec.num_queries = 300;
  spec.seed = 14;
  const auto w = generate(spec);
  ASSERT_EQ(w.queries.size(), 300u);
  std::vector<std::size_t> occ(100, 0);
  for (const auto& wq : w.queries) {
    const auto& q = wq.query;
    ASSERT_EQ(q.weights.size(), 2u);
    EXPECT_EQ(q.weights[0] + q.weights[1], 1.0);
    const double sel = double(testing::reference_count(engine_->table(), q.predicates)) / 2000.0;
    EXPECT_EQ(sel, wq.selectivity);
    EXPECT_EQ(spec.stratum_of(sel), wq.stratum);
    EXPECT_GE(sel, wq.stratum / 100.0 - 1e-12);
    EXPECT_LE(sel, (wq.stratum + 1) / 100.0 + 1e-12);
    EXPECT_GE(q.predicates.size(), spec.min_predicates);
    EXPECT_LE(q.predicates.size(), spec.max_predicates);
    ++occ[wq.stratum];
  }
  for (std::size_t s = 0; s < 100; ++s) EXPECT_LE(occ[s], 20u);
  EXPECT_EQ(occ, w.occupancy);
}

TEST_F(Queries, DeterministicUnderSeed) {
  WorkloadSpec spec;
  spec.num_queries = 50;
  spec.seed = 15;
  const auto a = generate(spec);
  const auto b = generate(spec);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(a.queries[i].query.predicates, b.queries[i].query.predicates);
    EXPECT_EQ(a.queries[i].query.query_vectors, b.queries[i].query.query_vectors);
    EXPECT_EQ(a.queries[i].query.weights, b.queries[i].query.weights);
  }
  spec.seed = 16;
  EXPECT_NE(generate(spec).queries[0].query.query_vectors, a.queries[0].query.query_vectors);
}

TEST_F(Queries, SkewedWeightsComeFromTheFixedSet) {
  WorkloadSpec spec;
  spec.num_queries = 60;
  spec.weight_mode = WeightMode::Skewed;
  for (const auto& wq : generate(spec).queries) {
    EXPECT_NE(std::find(std::begin(kSkewedWeights), std::end(kSkewedWeights), wq.query.weights[0]),
              std::end(kSkewedWeights));
  }
}

TEST_F(Queries, InfeasibleStrataReported) {
  WorkloadSpec spec;
  spec.num_queries = 100;
  spec.selectivity_ranges = {{0.0, 0.005}};
  spec.stratum_cap = 1;
  spec.retries_per_slot = 5;
  EXPECT_EQ(code_of([&] { generate(spec); }), ErrorCode::StratumInfeasible);
  spec.stratum_cap = 0;
  EXPECT_EQ(code_of([&] { generate(spec); }), ErrorCode::InvalidConfig);
}

TEST_F(Queries, LocalRateStratifier) {
  WorkloadSpec spec;
  spec.num_queries = 60;
  spec.local_rate_strata = 10;
  spec.local_rate_cap = 10;
  spec.seed = 17;
  const auto idx = engine_->index_pointers();
  const auto w = gen_queries(engine_->table(), engine_->stats(), spec, idx);
  ASSERT_EQ(w.local_occupancy.size(), 10u);
  std::vector<std::size_t> occ(10, 0);
  for (const auto& wq : w.queries) {
    ASSERT_TRUE(wq.local_rate.has_value());
    EXPECT_GE(*wq.local_rate, 0.0);
    EXPECT_LE(*wq.local_rate, 1.0);
    ++occ[wq.local_stratum];
  }
  EXPECT_EQ(occ, w.local_occupancy);
  for (auto c : occ) EXPECT_LE(c, 10u);
  EXPECT_EQ(code_of([&] { gen_queries(engine_->table(), engine_->stats(), spec); }), ErrorCode::IndexMissing);
}

TEST(GroundTruth, EmptyShortAndOrderInvariant) {
  const auto schema = testing::random_schema({3});
  Rng rng(18);
  const auto tuples = testing::random_tuples(schema, 300, 100, rng);
  Table forward(schema), backward(schema);
  forward.insert_batch(tuples);
  std::vector<Tuple> rev(tuples.rbegin(), tuples.rend());
  backward.insert_batch(rev);

  std::vector<HybridQuery> qs;
  for (int i = 0; i < 20; ++i) qs.push_back(testing::random_query(forward, rng, 10, 2));
  qs[0].predicates = {Predicate::cmp("price", CompareOp::Gt, 1000.0)};
  qs[1].predicates = {Predicate::eq("cat", std::string("A")), Predicate::cmp("qty", CompareOp::Lt, 2.0)};
  qs[1].k = 300;
  const auto a = gen_ground_truth(forward, qs);
  const auto b = gen_ground_truth(backward, qs);
  EXPECT_TRUE(a[0].empty());
  EXPECT_EQ(a[1].size(), testing::reference_count(forward, qs[1].predicates));
  EXPECT_EQ(a, b);
}

TEST(WorkloadIo, RoundTrip) {
  SyntheticTableSpec s;
  s.rows = 800;
  s.dimensions = {3, 5};
  Engine engine(gen_synthetic_table(s));
  engine.build_stats();
  engine.build_indexes();
  WorkloadSpec spec;
  spec.num_queries = 30;
  spec.local_rate_strata = 5;
  spec.local_rate_cap = 10;
  const auto w = gen_queries(engine.table(), engine.stats(), spec, engine.index_pointers());
  const auto dir = std::filesystem::temp_directory_path() / "hyq_workload_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_workload(dir / "w.jsonl", engine.table().schema(), w.queries);
  const auto back = read_workload(dir / "w.jsonl", engine.table().schema());
  ASSERT_EQ(back.size(), w.queries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].query.predicates, w.queries[i].query.predicates);
    EXPECT_EQ(back[i].query.query_vectors, w.queries[i].query.query_vectors);
    EXPECT_EQ(back[i].query.weights, w.queries[i].query.weights);
    EXPECT_EQ(back[i].query.k, w.queries[i].query.k);
    EXPECT_EQ(back[i].selectivity, w.queries[i].selectivity);
    EXPECT_EQ(back[i].local_rate, w.queries[i].local_rate);
    EXPECT_EQ(back[i].local_stratum, w.queries[i].local_stratum);
  }
  const auto truth = gen_ground_truth(engine.table(), std::span<const WorkloadQuery>(w.queries));
  write_ground_truth(dir / "gt.csv", truth);
  EXPECT_EQ(read_ground_truth(dir / "gt.csv", truth.size()), truth);
  EXPECT_THROW(read_workload(dir / "missing.jsonl", engine.table().schema()), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace hyq
