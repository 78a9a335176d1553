#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyq/graph_index.hpp"
#include "hyq/neural.hpp"
#include "hyq/query_features.hpp"
#include "hyq/query_text.hpp"

namespace hyq {

enum class PlanKind : std::uint8_t { SequentialScan, DecomposedIndexScan, SingleIndexScan };

struct PlanChoice {
  PlanKind kind = PlanKind::SequentialScan;
  std::size_t column = 0;  // SingleIndexScan only

  static PlanChoice sequential() { return {PlanKind::SequentialScan, 0}; }
  static PlanChoice decomposed() { return {PlanKind::DecomposedIndexScan, 0}; }
  static PlanChoice single(std::size_t column) { return {PlanKind::SingleIndexScan, column}; }

  // Class index: 0 sequential, 1 decomposed, 2 + column single-index.
  std::size_t class_index() const;
  static PlanChoice from_class(std::size_t index, std::size_t vector_columns);  // throws InvalidPlan
  bool operator==(const PlanChoice& o) const {
    return kind == o.kind && (kind != PlanKind::SingleIndexScan || column == o.column);
  }
};

std::string to_string(const PlanChoice& plan);
PlanChoice parse_plan(std::string_view text, std::size_t vector_columns);  // inverse of to_string

struct ColumnParams {
  std::size_t k = 10;
  std::size_t ef_search = 64;
  IterativeScan iterative_scan = IterativeScan::Strict;
  std::size_t max_scan_tuples = 1000;

  SearchParams search() const { return {ef_search, max_scan_tuples, iterative_scan}; }
  bool operator==(const ColumnParams&) const = default;
};

struct SubqueryParams {
  std::vector<ColumnParams> columns;

  bool operator==(const SubqueryParams&) const = default;
};

// Throws InvalidConfig unless k_i >= k, max_scan_tuples >= k_i, ef_search >=
// k_i in Strict mode, and every value is positive.
void check_params(const SubqueryParams& params, std::size_t k);

// One point of the static configuration grid. Search parameters are shared
// by every participating column; k_i = lambda * k.
struct GridConfig {
  PlanChoice plan;
  std::size_t ef_search = 64;
  IterativeScan iterative_scan = IterativeScan::Strict;
  double lambda = 1.0;
  double max_scan_k_multiple = 0.0;   // max_scan = multiple * k_i when > 0
  double max_scan_row_fraction = 0.1;  // otherwise fraction of table rows

  // Non-participating columns (single-index plans) resolve to k_i = k.
  SubqueryParams resolve(std::size_t k, std::size_t table_rows, std::size_t vector_columns) const;
  std::string describe() const;
  bool operator==(const GridConfig&) const = default;
};

struct GridSpec {
  std::vector<std::size_t> ef_search{32, 64, 128, 256, 512};
  std::vector<IterativeScan> iterative_scan{IterativeScan::Relaxed, IterativeScan::Strict};
  std::vector<double> lambda{1, 2, 4, 8};
  // Entries >= 1 are multiples of k_i ("2k"), entries < 1 fractions of rows.
  std::vector<double> max_scan{2.0, 0.01, 0.1};
  bool include_single_index = true;

  void validate() const;
};

// Sequential scan first, then for every parameter point the decomposed plan
// followed by each single-index plan.
std::vector<GridConfig> build_grid(const GridSpec& spec, std::size_t vector_columns);
// Key-value text: ef_search = 32,64 / iterative_scan = relaxed_order /
// lambda = 1,2 / max_scan = 2k,0.01 / single_index = true.
GridSpec parse_grid_spec(std::string_view text);
GridSpec load_grid_spec(const std::filesystem::path& path);

struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static FeatureScaler fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
  std::vector<double> apply(std::span<const double> x) const;
};

struct ModelTrainConfig {
  std::vector<std::size_t> plan_hidden{64, 32};
  std::vector<std::size_t> param_hidden{64, 32};
  TrainConfig plan_train{.loss = Loss::CrossEntropy, .learning_rate = 0.01, .batch_size = 32, .epochs = 150,
                         .seed = 21, .momentum = 0.9, .weight_decay = 1e-3};
  TrainConfig param_train{.loss = Loss::MeanSquaredError, .learning_rate = 0.005, .batch_size = 32, .epochs = 150,
                          .seed = 22, .momentum = 0.9, .weight_decay = 1e-3};
  double validation_fraction = 0.2;
  std::size_t min_examples = 50;
  // Added to predicted log2 k_i and log2 ef_search at decode time.
  double safety_margin_log2 = 1.0;
  std::uint64_t seed = 5;

  void validate() const;
};

// Phase 1: classifier over the N + 2 plan classes.
class PlanModel {
 public:
  PlanModel() = default;
  PlanModel(FeatureScaler scaler, FeedForwardNet net, std::size_t vector_columns);

  bool trained() const noexcept { return trained_; }
  std::size_t vector_columns() const noexcept { return columns_; }
  std::vector<double> class_scores(std::span<const double> features) const;
  const FeedForwardNet& net() const { return net_; }
  const FeatureScaler& scaler() const { return scaler_; }

 private:
  FeatureScaler scaler_;
  FeedForwardNet net_;
  std::size_t columns_ = 0;
  bool trained_ = false;
};

// Phase 2: per column, a regressor over (log2 k_i, log2 ef_search,
// log2 max_scan_tuples) and a classifier over the iterative-scan modes.
class ParamModel {
 public:
  struct Column {
    FeedForwardNet regressor;
    FeedForwardNet mode;
    std::vector<double> target_mean;
    std::vector<double> target_scale;
  };

  ParamModel() = default;
  ParamModel(FeatureScaler scaler, std::vector<Column> columns, double safety_margin_log2);
  // Constant model used when no training example labels an index plan.
  static ParamModel constant(ColumnParams params, std::size_t vector_columns);

  bool trained() const noexcept { return trained_; }
  bool is_constant() const noexcept { return constant_.has_value(); }
  std::size_t vector_columns() const noexcept { return is_constant() ? constant_columns_ : columns_.size(); }
  double safety_margin_log2() const noexcept { return margin_; }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  const std::optional<ColumnParams>& constant_params() const noexcept { return constant_; }
  const FeatureScaler& scaler() const { return scaler_; }

  // Raw, undecoded outputs: [log2 k, log2 ef, log2 max_scan] per column.
  std::vector<std::vector<double>> raw(std::span<const double> features) const;
  std::vector<std::vector<double>> mode_scores(std::span<const double> features) const;

 private:
  FeatureScaler scaler_;
  std::vector<Column> columns_;
  std::optional<ColumnParams> constant_;
  std::size_t constant_columns_ = 0;
  double margin_ = 0.0;
  bool trained_ = false;
};

struct ValidationMetrics {
  std::size_t train_examples = 0;
  std::size_t validation_examples = 0;
  double plan_accuracy = 0.0;        // held-out
  double plan_train_accuracy = 0.0;
  double param_log2_mae = 0.0;       // held-out, index-labelled examples only
  double mode_accuracy = 0.0;
  std::vector<double> plan_loss_curve;
};

struct OptimizerModels {
  std::vector<std::string> feature_names;  // FeatureLayout::slot_names() at training time
  PlanModel plan;
  ParamModel params;

  bool ready() const { return plan.trained() && params.trained(); }
  void save(const std::filesystem::path& dir) const;
  static OptimizerModels load(const std::filesystem::path& dir);
};

PlanChoice select_plan(const PlanModel& model, std::span<const double> features);  // throws ModelMissing
// Decoded and clamped: k_i in [k, rows], ef_search in [k_i, 4096],
// max_scan_tuples in [k_i, rows].
SubqueryParams recommend_params(const ParamModel& model, std::span<const double> features, std::size_t k,
                                std::size_t table_rows);
SubqueryParams decode_params(std::span<const std::vector<double>> raw, std::span<const std::vector<double>> modes,
                             double margin_log2, std::size_t k, std::size_t table_rows);

struct SubqueryDescriptor {
  std::size_t column = 0;
  std::string column_name;
  std::vector<float> query_vector;
  std::size_t k = 10;
  ColumnParams params;
  std::vector<Predicate> predicates;

  bool operator==(const SubqueryDescriptor&) const = default;
};

struct MergeInstruction {
  std::size_t k = 10;
  std::vector<double> weights;
  std::vector<std::vector<float>> query_vectors;
  bool operator==(const MergeInstruction&) const = default;
};

struct RewrittenQuery {
  PlanChoice plan;
  std::vector<SubqueryDescriptor> subqueries;
  MergeInstruction merge;
};

// Throws InvalidPlan for SequentialScan or an out-of-range column.
RewrittenQuery rewrite(const HybridQuery& query, const TableSchema& schema, const PlanChoice& plan,
                       const SubqueryParams& params);

// SET hnsw.ef_search / hnsw.iterative_scan / hnsw.max_scan_tuples lines
// followed by the single-column SELECT.
Statement to_statement(const SubqueryDescriptor& sub, std::string table = "items");
SubqueryDescriptor from_statement(const Statement& statement, const TableSchema& schema);
std::string format_subquery(const SubqueryDescriptor& sub, std::string table = "items");

}  // namespace hyq
