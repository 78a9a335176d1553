#include "hyq/executor.hpp"

#include <algorithm>
#include <chrono>

#include "hyq/error.hpp"

namespace hyq {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

bool score_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

void keep_top_k(std::vector<Neighbor>& v, std::size_t k) {
  if (v.size() > k) {
    std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), score_less);
    v.resize(k);
  } else {
    std::sort(v.begin(), v.end(), score_less);
  }
}

// Floats touched by one composite score.
double composite_width(const Table& table, const HybridQuery& query) {
  double w = 0.0;
  for (std::size_t i = 0; i < query.weights.size(); ++i) {
    if (query.weights[i] != 0.0) w += static_cast<double>(table.schema().vector_columns[i].dimension);
  }
  return w;
}

double predicate_cost(const CostModel& cost, std::size_t terms) {
  return cost.predicate_base + cost.predicate_per_term * static_cast<double>(terms);
}

}  // namespace

std::vector<TupleId> ResultSet::ids() const {
  std::vector<TupleId> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(r.id);
  return out;
}

ResultSet exec_sequential(const Table& table, const HybridQuery& query, const CostModel& cost) {
  query.validate(table.schema());
  const auto start = Clock::now();
  const RowFilter filter(table, query.predicates);
  ResultSet out;
  out.plan = PlanChoice::sequential();
  std::vector<Neighbor> hits;
  for (std::size_t row = 0; row < table.row_count(); ++row) {
    if (!filter.matches(row)) continue;
    hits.push_back({table.id_at(row), table.composite_distance(row, query)});
  }
  out.scanned_count = table.row_count();
  out.distance_computations = hits.size();
  out.candidates = hits.size();
  keep_top_k(hits, query.k);
  out.results = std::move(hits);
  out.work_units = static_cast<double>(table.row_count()) * predicate_cost(cost, filter.term_count()) +
                   static_cast<double>(out.distance_computations) * composite_width(table, query);
  out.timings.search = seconds_since(start);
  out.timings.total = out.timings.search;
  return out;
}

FilteredResult run_subquery(const GraphIndex& index, const RowFilter& filter, const HybridQuery& query,
                            const ColumnParams& params) {
  const std::size_t col = index.column();
  if (filter.empty()) {
    return index.filtered_search(query.query_vectors[col], params.k, params.search(), [](TupleId) { return true; });
  }
  return index.filtered_search(query.query_vectors[col], params.k, params.search(),
                               [&filter](TupleId id) { return filter.matches_id(id); });
}

double subquery_work(const Table& table, std::size_t column, const FilteredResult& result, std::size_t predicate_terms,
                     const CostModel& cost) {
  const double dim = static_cast<double>(table.schema().vector_columns[column].dimension);
  return static_cast<double>(result.distance_computations) * (dim + cost.graph_node_overhead) +
         static_cast<double>(result.scanned_count) * predicate_cost(cost, predicate_terms);
}

ResultSet merge_candidates(const Table& table, const HybridQuery& query,
                           std::span<const FilteredResult* const> subresults, const CostModel& cost) {
  ResultSet out;
  std::vector<TupleId> ids;
  for (const auto* sub : subresults) {
    for (const auto& n : sub->results) ids.push_back(n.id);
    out.scanned_count += sub->scanned_count;
    out.distance_computations += sub->distance_computations;
    out.converged = out.converged && sub->converged;
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<Neighbor> scored;
  scored.reserve(ids.size());
  for (TupleId id : ids) {
    const auto row = table.row_of(id);
    if (!row) fail(ErrorCode::UnknownId, "index returned an id missing from the table");
    scored.push_back({id, table.composite_distance(*row, query)});
  }
  out.candidates = scored.size();
  keep_top_k(scored, query.k);
  out.results = std::move(scored);
  out.work_units = static_cast<double>(out.candidates) * (composite_width(table, query) + cost.candidate_overhead);
  return out;
}

ResultSet exec_single_index(const Table& table, const GraphIndex& index, const HybridQuery& query,
                            const ColumnParams& params, const CostModel& cost) {
  query.validate(table.schema());
  if (index.column() >= table.schema().vector_columns.size()) fail(ErrorCode::IndexMissing, "index column out of range");
  const auto start = Clock::now();
  const RowFilter filter(table, query.predicates);
  const FilteredResult sub = run_subquery(index, filter, query, params);
  const double search = seconds_since(start);
  const auto merge_start = Clock::now();
  const FilteredResult* subs[] = {&sub};
  ResultSet out = merge_candidates(table, query, subs, cost);
  out.work_units += subquery_work(table, index.column(), sub, filter.term_count(), cost);
  out.plan = PlanChoice::single(index.column());
  out.subquery_seconds = {search};
  out.timings.search = search;
  out.timings.merge = seconds_since(merge_start);
  out.timings.total = seconds_since(start);
  return out;
}

ResultSet exec_decomposed(const Table& table, std::span<const GraphIndex* const> indexes, const HybridQuery& query,
                          const SubqueryParams& params, const CostModel& cost) {
  query.validate(table.schema());
  const std::size_t n = table.schema().vector_columns.size();
  if (indexes.size() < n) fail(ErrorCode::IndexMissing, "decomposed scan needs an index per vector column");
  if (params.columns.size() != n) fail(ErrorCode::InvalidPlan, "parameters do not cover every vector column");
  const auto start = Clock::now();
  const RowFilter filter(table, query.predicates);
  std::vector<FilteredResult> subs(n);
  std::vector<double> sub_seconds(n);
  double work = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!indexes[i]) fail(ErrorCode::IndexMissing, table.schema().vector_columns[i].name);
    const auto t = Clock::now();
    subs[i] = run_subquery(*indexes[i], filter, query, params.columns[i]);
    sub_seconds[i] = seconds_since(t);
    work += subquery_work(table, i, subs[i], filter.term_count(), cost);
  }
  const double search = seconds_since(start);
  const auto merge_start = Clock::now();
  std::vector<const FilteredResult*> ptrs;
  for (const auto& s : subs) ptrs.push_back(&s);
  ResultSet out = merge_candidates(table, query, ptrs, cost);
  out.work_units += work;
  out.plan = PlanChoice::decomposed();
  out.subquery_seconds = std::move(sub_seconds);
  out.timings.search = search;
  out.timings.merge = seconds_since(merge_start);
  out.timings.total = seconds_since(start);
  return out;
}

ResultSet exec_plan(const Table& table, std::span<const GraphIndex* const> indexes, const HybridQuery& query,
                    const PlanChoice& plan, const SubqueryParams& params, const CostModel& cost) {
  switch (plan.kind) {
    case PlanKind::SequentialScan: return exec_sequential(table, query, cost);
    case PlanKind::DecomposedIndexScan: return exec_decomposed(table, indexes, query, params, cost);
    case PlanKind::SingleIndexScan:
      if (plan.column >= indexes.size() || !indexes[plan.column]) {
        fail(ErrorCode::IndexMissing, "no index on column " + std::to_string(plan.column));
      }
      if (plan.column >= params.columns.size()) fail(ErrorCode::InvalidPlan, "parameters missing for column");
      return exec_single_index(table, *indexes[plan.column], query, params.columns[plan.column], cost);
  }
  fail(ErrorCode::InvalidPlan, "unknown plan kind");
}

Engine::Engine(Table table, EngineConfig config)
    : table_(std::move(table)),
      config_(std::move(config)),
      layout_(FeatureLayout::for_schema(table_.schema())),
      indexes_(table_.schema().vector_columns.size()) {
  config_.probe.validate();
}

void Engine::build_stats() { stats_ = StatsCatalog::build(table_, config_.histogram_bins); }

void Engine::build_indexes() {
  for (std::size_t i = 0; i < indexes_.size(); ++i) indexes_[i] = GraphIndex::build(table_, i, config_.index);
}

void Engine::fit_encoder(const EncoderConfig& config) {
  encoder_ = std::make_shared<const EncoderBundle>(EncoderBundle::fit(table_, config));
}

void Engine::set_stats(StatsCatalog stats) { stats_ = std::move(stats); }

void Engine::set_index(std::size_t column, GraphIndex index) {
  if (column >= indexes_.size() || index.column() != column) fail(ErrorCode::IndexMissing, "index/column mismatch");
  if (index.dimension() != table_.schema().vector_columns[column].dimension) {
    fail(ErrorCode::DimensionMismatch, "index dimension differs from column");
  }
  indexes_[column] = std::move(index);
}

void Engine::set_encoder(EncoderBundle bundle) {
  if (bundle.vector_columns() != indexes_.size()) fail(ErrorCode::DimensionMismatch, "encoder built for another schema");
  encoder_ = std::make_shared<const EncoderBundle>(std::move(bundle));
}

void Engine::set_models(OptimizerModels models) {
  if (models.feature_names != layout_.slot_names()) {
    fail(ErrorCode::LayoutMismatch, "optimizer models were trained on a different feature layout");
  }
  if (models.plan.vector_columns() != indexes_.size()) fail(ErrorCode::LayoutMismatch, "plan model column count");
  models_ = std::move(models);
}

bool Engine::ready() const {
  if (forced_plan_ && forced_params_) return true;
  const bool forced_sequential = forced_plan_ && forced_plan_->kind == PlanKind::SequentialScan;
  return features_ready() && (has_models() || forced_sequential);
}

bool Engine::has_indexes() const {
  return std::all_of(indexes_.begin(), indexes_.end(), [](const auto& i) { return i.has_value(); });
}

const StatsCatalog& Engine::stats() const {
  if (!stats_) fail(ErrorCode::EngineNotReady, "statistics not built");
  return *stats_;
}

const GraphIndex& Engine::index(std::size_t column) const {
  if (column >= indexes_.size() || !indexes_[column]) fail(ErrorCode::IndexMissing, "no index on column " + std::to_string(column));
  return *indexes_[column];
}

std::vector<const GraphIndex*> Engine::index_pointers() const {
  std::vector<const GraphIndex*> out;
  for (const auto& i : indexes_) out.push_back(i ? &*i : nullptr);
  return out;
}

const EncoderBundle& Engine::encoder() const {
  if (!encoder_) fail(ErrorCode::EngineNotReady, "encoder not trained");
  return *encoder_;
}

const OptimizerModels& Engine::models() const {
  if (!models_) fail(ErrorCode::ModelMissing, "optimizer models not trained");
  return *models_;
}

void Engine::require_features() const {
  if (!has_stats()) fail(ErrorCode::EngineNotReady, "statistics not built");
  if (!has_indexes()) fail(ErrorCode::EngineNotReady, "indexes not built");
  if (!has_encoder()) fail(ErrorCode::EngineNotReady, "encoder not trained");
}

FeatureVector Engine::features(const HybridQuery& query, ProbeResult* probe_out) const {
  require_features();
  query.validate(table_.schema());
  const auto ptrs = index_pointers();
  ProbeResult probe = preprobe(table_, ptrs, query, config_.probe);
  const ReconstructionScore recon = encoder_->score(query);
  FeatureVector fv = assemble_features(layout_, table_.schema(), table_.row_count(), recon, *stats_, probe, query);
  if (probe_out) *probe_out = std::move(probe);
  return fv;
}

PlanDecision Engine::plan(const HybridQuery& query) const {
  if (!ready()) fail(ErrorCode::EngineNotReady, "engine needs statistics, indexes, encoder and optimizer models");
  PlanDecision d;
  if (forced_plan_ && forced_params_) {
    d.plan = *forced_plan_;
    d.params = *forced_params_;
    return d;
  }
  const auto t0 = Clock::now();
  d.features = features(query, &d.probe);
  d.feature_seconds = seconds_since(t0);
  const auto t1 = Clock::now();
  d.plan = forced_plan_ ? *forced_plan_ : select_plan(models_->plan, d.features.values);
  if (forced_params_) {
    d.params = *forced_params_;
  } else if (models_) {
    d.params = recommend_params(models_->params, d.features.values, query.k, table_.row_count());
  }
  d.planning_seconds = seconds_since(t1);
  return d;
}

ResultSet Engine::execute(const HybridQuery& query) const {
  const auto start = Clock::now();
  PlanDecision d = plan(query);
  ResultSet out = execute_with(query, d.plan, d.params);
  out.timings.features = d.feature_seconds;
  out.timings.planning = d.planning_seconds;
  out.timings.total = seconds_since(start);
  return out;
}

ResultSet Engine::execute_with(const HybridQuery& query, const PlanChoice& plan, const SubqueryParams& params) const {
  if (plan.kind != PlanKind::SequentialScan) {
    check_params(params, query.k);
  }
  const auto ptrs = index_pointers();
  ResultSet out = exec_plan(table_, ptrs, query, plan, params, config_.cost);
  out.params = params;
  return out;
}

std::size_t Engine::sync() {
  std::size_t added = 0;
  for (auto& idx : indexes_) {
    if (idx) added = std::max(added, idx->sync_with(table_));
  }
  if (stats_) stats_->refresh_if_stale(table_);
  return added;
}

}  // namespace hyq
