#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hyq/correlation_encoder.hpp"
#include "hyq/graph_index.hpp"
#include "hyq/plan_rewriter.hpp"
#include "hyq/query_features.hpp"
#include "hyq/scalar_stats.hpp"
#include "hyq/store.hpp"

namespace hyq {

// Deterministic cost proxy: one unit per float touched by a distance, plus
// fixed per-node overheads for graph traversal and predicate checks.
struct CostModel {
  double graph_node_overhead = 24.0;
  double predicate_base = 2.0;
  double predicate_per_term = 4.0;
  double candidate_overhead = 8.0;
};

struct PhaseTimings {
  double features = 0.0;  // pre-probe + encoder + assembly
  double planning = 0.0;
  double search = 0.0;
  double merge = 0.0;
  double total = 0.0;
};

struct ResultSet {
  std::vector<Neighbor> results;  // distance holds the composite score
  PlanChoice plan;
  SubqueryParams params;
  PhaseTimings timings;
  std::vector<double> subquery_seconds;
  std::size_t scanned_count = 0;  // tuples whose predicates were evaluated
  std::size_t distance_computations = 0;
  std::size_t candidates = 0;     // distinct ids re-ranked
  double work_units = 0.0;
  bool converged = true;

  std::vector<TupleId> ids() const;
};

// Exact top-k: filter every row, score qualifying rows, sort by (score, id).
ResultSet exec_sequential(const Table& table, const HybridQuery& query, const CostModel& cost = {});

// Filtered index search on one column for params.k qualifying candidates.
FilteredResult run_subquery(const GraphIndex& index, const RowFilter& filter, const HybridQuery& query,
                            const ColumnParams& params);
double subquery_work(const Table& table, std::size_t column, const FilteredResult& result, std::size_t predicate_terms,
                     const CostModel& cost = {});

// Union of candidate ids, rescored with the full composite score, top-k.
ResultSet merge_candidates(const Table& table, const HybridQuery& query,
                           std::span<const FilteredResult* const> subresults, const CostModel& cost = {});

ResultSet exec_single_index(const Table& table, const GraphIndex& index, const HybridQuery& query,
                            const ColumnParams& params, const CostModel& cost = {});
// One entry per vector column; null entries raise IndexMissing.
ResultSet exec_decomposed(const Table& table, std::span<const GraphIndex* const> indexes, const HybridQuery& query,
                          const SubqueryParams& params, const CostModel& cost = {});

ResultSet exec_plan(const Table& table, std::span<const GraphIndex* const> indexes, const HybridQuery& query,
                    const PlanChoice& plan, const SubqueryParams& params, const CostModel& cost = {});

struct EngineConfig {
  ProbeConfig probe;
  BuildParams index;
  std::size_t histogram_bins = kDefaultHistogramBins;
  CostModel cost;
};

struct PlanDecision {
  FeatureVector features;
  ProbeResult probe;
  PlanChoice plan;
  SubqueryParams params;
  double feature_seconds = 0.0;
  double planning_seconds = 0.0;
};

// Owns one table with its statistics, per-column indexes, encoder bundle and
// optimizer models.
class Engine {
 public:
  explicit Engine(Table table, EngineConfig config = {});

  const Table& table() const noexcept { return table_; }
  Table& mutable_table() noexcept { return table_; }
  const EngineConfig& config() const noexcept { return config_; }
  const FeatureLayout& layout() const noexcept { return layout_; }

  void build_stats();
  void build_indexes();
  void fit_encoder(const EncoderConfig& config);

  void set_stats(StatsCatalog stats);
  void set_index(std::size_t column, GraphIndex index);
  void set_encoder(EncoderBundle bundle);
  void set_models(OptimizerModels models);  // throws LayoutMismatch
  void force_plan(std::optional<PlanChoice> plan) { forced_plan_ = plan; }
  void force_params(std::optional<SubqueryParams> params) { forced_params_ = std::move(params); }

  bool has_stats() const noexcept { return stats_.has_value(); }
  bool has_indexes() const;
  bool has_encoder() const noexcept { return encoder_ != nullptr; }
  bool has_models() const noexcept { return models_.has_value(); }
  // Everything execute() needs except the optimizer models.
  bool features_ready() const { return has_stats() && has_indexes() && has_encoder(); }
  bool ready() const;

  const StatsCatalog& stats() const;
  const GraphIndex& index(std::size_t column) const;  // throws IndexMissing
  std::vector<const GraphIndex*> index_pointers() const;
  const EncoderBundle& encoder() const;
  const OptimizerModels& models() const;

  FeatureVector features(const HybridQuery& query, ProbeResult* probe = nullptr) const;
  PlanDecision plan(const HybridQuery& query) const;
  ResultSet execute(const HybridQuery& query) const;  // throws EngineNotReady
  ResultSet execute_with(const HybridQuery& query, const PlanChoice& plan, const SubqueryParams& params) const;

  // Keeps indexes and statistics in step with rows inserted after they were
  // built; returns the number of rows newly indexed.
  std::size_t sync();

 private:
  void require_features() const;

  Table table_;
  EngineConfig config_;
  FeatureLayout layout_;
  std::optional<StatsCatalog> stats_;
  std::vector<std::optional<GraphIndex>> indexes_;
  std::shared_ptr<const EncoderBundle> encoder_;
  std::optional<OptimizerModels> models_;
  std::optional<PlanChoice> forced_plan_;
  std::optional<SubqueryParams> forced_params_;
};

}  // namespace hyq
