#include <benchmark/benchmark.h>

#include <memory>

#include "hyq/benchgen.hpp"
#include "hyq/executor.hpp"
#include "hyq/neural.hpp"

using namespace hyq;

namespace {

struct Setup {
  std::unique_ptr<Engine> engine;
  std::vector<HybridQuery> queries;
};

// Built once and shared; the encoder fit dominates startup.
const Setup& setup() {
  static const Setup s = [] {
    Setup out;
    SyntheticTableSpec spec;
    spec.rows = 10000;
    spec.dimensions = {16, 16};
    spec.blobs = 32;
    spec.seed = 5;
    out.engine = std::make_unique<Engine>(gen_synthetic_table(spec));
    out.engine->build_stats();
    out.engine->build_indexes();
    out.engine->fit_encoder(EncoderConfig{});
    WorkloadSpec w;
    w.num_queries = 64;
    w.stratum_cap = 64;
    w.selectivity_ranges = {{0.05, 0.5}};
    w.seed = 9;
    for (auto& q : gen_queries(out.engine->table(), out.engine->stats(), w).queries) {
      out.queries.push_back(std::move(q.query));
    }
    return out;
  }();
  return s;
}

SubqueryParams params_for(std::size_t columns, std::size_t k_i) {
  ColumnParams c{k_i, std::max<std::size_t>(k_i, 64), IterativeScan::Strict, 20 * k_i};
  return SubqueryParams{std::vector<ColumnParams>(columns, c)};
}

void BM_GraphSearch(benchmark::State& state) {
  const auto& s = setup();
  const auto& index = s.engine->index(0);
  const SearchParams params{static_cast<std::size_t>(state.range(0)), 0, IterativeScan::Off};
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = s.queries[i++ % s.queries.size()];
    benchmark::DoNotOptimize(index.search(q.query_vectors[0], 10, params));
  }
}
BENCHMARK(BM_GraphSearch)->Arg(32)->Arg(128)->Arg(512);

void BM_FilteredSearch(benchmark::State& state) {
  const auto& s = setup();
  const auto& table = s.engine->table();
  const auto& index = s.engine->index(0);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = s.queries[i++ % s.queries.size()];
    const RowFilter filter(table, q.predicates);
    ColumnParams p{40, 64, IterativeScan::Strict, 2000};
    benchmark::DoNotOptimize(run_subquery(index, filter, q, p));
  }
}
BENCHMARK(BM_FilteredSearch);

void BM_ExecSequential(benchmark::State& state) {
  const auto& s = setup();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(exec_sequential(s.engine->table(), s.queries[i++ % s.queries.size()]));
  }
}
BENCHMARK(BM_ExecSequential);

void BM_ExecDecomposed(benchmark::State& state) {
  const auto& s = setup();
  const auto indexes = s.engine->index_pointers();
  const auto params = params_for(indexes.size(), static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(exec_decomposed(s.engine->table(), indexes, s.queries[i++ % s.queries.size()], params));
  }
}
BENCHMARK(BM_ExecDecomposed)->Arg(10)->Arg(40)->Arg(160);

void BM_ExecSingleIndex(benchmark::State& state) {
  const auto& s = setup();
  const ColumnParams params{40, 64, IterativeScan::Strict, 800};
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = s.queries[i++ % s.queries.size()];
    benchmark::DoNotOptimize(exec_single_index(s.engine->table(), s.engine->index(0), q, params));
  }
}
BENCHMARK(BM_ExecSingleIndex);

void BM_HistogramEstimate(benchmark::State& state) {
  const auto& s = setup();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = s.queries[i++ % s.queries.size()];
    benchmark::DoNotOptimize(estimate_conjunction(s.engine->stats(), q.predicates));
  }
}
BENCHMARK(BM_HistogramEstimate);

void BM_Features(benchmark::State& state) {
  const auto& s = setup();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(s.engine->features(s.queries[i++ % s.queries.size()]));
  }
}
BENCHMARK(BM_Features);

void BM_NetForward(benchmark::State& state) {
  const auto net = FeedForwardNet::mlp(static_cast<std::size_t>(state.range(0)), {64, 32}, 4, 1);
  const std::vector<double> input(net.input_size(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(input));
}
BENCHMARK(BM_NetForward)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
