#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hyq/benchgen.hpp"
#include "hyq/executor.hpp"

namespace hyq {

// |retrieved ∩ truth| / |truth|; an empty truth set scores 1.0.
double compute_recall(std::span<const TupleId> retrieved, std::span<const TupleId> truth);
double compute_recall(std::span<const Neighbor> retrieved, std::span<const Neighbor> truth);

struct QueryReport {
  std::size_t query = 0;
  double recall = 0.0;
  double latency = 0.0;  // seconds, median over repetitions
  PlanChoice plan;
  bool converged = true;
  bool empty_truth = false;
  double target_recall = 0.0;
  double work_units = 0.0;
  std::optional<double> baseline_latency;
  std::optional<double> baseline_recall;
};

struct EvalReport {
  std::vector<QueryReport> rows;
  double mean_recall = 0.0;
  double target_met_fraction = 0.0;
  double total_seconds = 0.0;
  double qps = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  std::map<std::string, std::size_t> plan_counts;
  std::optional<std::string> baseline_name;
  double baseline_mean_recall = 0.0;
  double baseline_total_seconds = 0.0;
  double baseline_qps = 0.0;
  double mean_speedup = 0.0;  // mean over queries of baseline / engine latency
};

struct EvalConfig {
  std::size_t repetitions = 1;
};

// Serial execution; timing covers execute() only.
EvalReport run_eval(const Engine& engine, std::span<const HybridQuery> queries, const GroundTruth& truth,
                    const std::optional<GridConfig>& baseline = std::nullopt, const EvalConfig& config = {});

void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
std::string format_summary(const EvalReport& report);

// Percentile by nearest rank over a copy of `values`.
double percentile(std::vector<double> values, double p);

struct StaticResult {
  std::size_t config = 0;
  double target_met_fraction = 0.0;
  double mean_recall = 0.0;
  double total_seconds = 0.0;
  double total_work_units = 0.0;
};

// Runs every grid configuration uniformly over the queries.
std::vector<StaticResult> evaluate_static_grid(const Engine& engine, std::span<const HybridQuery> queries,
                                               const GroundTruth& truth, std::span<const GridConfig> grid);
// Fastest configuration meeting its targets on >= min_fraction of queries.
std::optional<StaticResult> best_static(std::span<const StaticResult> results, double min_fraction = 0.9);

}  // namespace hyq
