#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hyq/benchgen.hpp"
#include "hyq/executor.hpp"
#include "hyq/plan_rewriter.hpp"

namespace hyq {

// WorkUnits labels configurations by the executor's deterministic cost
// proxy; Measured by median wall time of `repetitions` runs after `warmup`.
enum class CostMode : std::uint8_t { WorkUnits, Measured };
std::string_view to_string(CostMode mode);
CostMode parse_cost_mode(std::string_view text);

struct LabelConfig {
  CostMode cost_mode = CostMode::WorkUnits;
  std::size_t repetitions = 3;
  std::size_t warmup = 1;
  // Labels must clear target_recall + headroom (capped at 1).
  double recall_headroom = 0.0;
};

struct TrainingExample {
  HybridQuery query;
  FeatureVector features;
  std::size_t table_rows = 0;
  std::size_t label_config = 0;  // index into the grid
  PlanChoice label_plan;
  SubqueryParams label_params;
  bool target_met = false;       // false when the label is the max-recall fallback
  std::vector<double> cost;      // per grid configuration
  std::vector<double> recall;    // per grid configuration
};

// Minimum cost among configurations with recall >= target; ties go to the
// earlier grid entry. Without any, the highest recall (then lowest cost).
std::size_t pick_label(std::span<const double> cost, std::span<const double> recall, double target_recall);

std::vector<TrainingExample> generate_training_data(const Engine& engine, std::span<const HybridQuery> queries,
                                                    std::span<const GridConfig> grid, const LabelConfig& labels = {});
// Draws `num_queries` queries with gen_queries(spec) under `seed` first.
std::vector<TrainingExample> generate_training_data(const Engine& engine, std::size_t num_queries,
                                                    std::span<const GridConfig> grid, std::uint64_t seed,
                                                    WorkloadSpec spec = {}, const LabelConfig& labels = {});

struct TrainedOptimizer {
  OptimizerModels models;
  ValidationMetrics metrics;
};

TrainedOptimizer train_models(std::span<const TrainingExample> examples, const ModelTrainConfig& config = {});

// Feature slots, labels, then cost_<j> and recall_<j> for every grid entry.
void write_training_csv(const std::filesystem::path& path, std::span<const TrainingExample> examples,
                        std::span<const GridConfig> grid);

}  // namespace hyq
