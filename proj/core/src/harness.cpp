#include "hyq/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "hyq/error.hpp"
#include "hyq/text_util.hpp"

namespace hyq {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::vector<TupleId> ids_of(std::span<const Neighbor> v) {
  std::vector<TupleId> out;
  out.reserve(v.size());
  for (const auto& n : v) out.push_back(n.id);
  return out;
}

void check_alignment(std::size_t queries, const GroundTruth& truth) {
  if (truth.size() != queries) {
    fail(ErrorCode::MisalignedGroundTruth, "ground truth has " + std::to_string(truth.size()) + " rows for " +
                                               std::to_string(queries) + " queries");
  }
}

}  // namespace

double compute_recall(std::span<const TupleId> retrieved, std::span<const TupleId> truth) {
  if (truth.empty()) return 1.0;
  const std::unordered_set<TupleId> want(truth.begin(), truth.end());
  std::unordered_set<TupleId> hit;
  for (TupleId id : retrieved) {
    if (want.count(id)) hit.insert(id);
  }
  return static_cast<double>(hit.size()) / static_cast<double>(want.size());
}

double compute_recall(std::span<const Neighbor> retrieved, std::span<const Neighbor> truth) {
  const auto a = ids_of(retrieved);
  const auto b = ids_of(truth);
  return compute_recall(std::span<const TupleId>(a), std::span<const TupleId>(b));
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[idx];
}

EvalReport run_eval(const Engine& engine, std::span<const HybridQuery> queries, const GroundTruth& truth,
                    const std::optional<GridConfig>& baseline, const EvalConfig& config) {
  check_alignment(queries.size(), truth);
  if (!engine.ready()) fail(ErrorCode::EngineNotReady, "engine is not ready for evaluation");
  const std::size_t reps = std::max<std::size_t>(config.repetitions, 1);
  const std::size_t n = engine.table().schema().vector_columns.size();

  EvalReport report;
  report.rows.resize(queries.size());
  std::vector<std::vector<double>> latencies(queries.size());
  std::vector<ResultSet> first(queries.size());
  std::vector<std::vector<double>> base_lat(queries.size());
  std::vector<double> base_recall(queries.size(), 0.0);
  std::vector<SubqueryParams> base_params;
  if (baseline) {
    for (const auto& q : queries) base_params.push_back(baseline->resolve(q.k, engine.table().row_count(), n));
  }
  // Engine and baseline passes alternate so machine drift hits both alike.
  double engine_wall = 0.0, base_wall = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto start = Clock::now();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      ResultSet rs = engine.execute(queries[i]);
      latencies[i].push_back(rs.timings.total);
      if (r == 0) first[i] = std::move(rs);
    }
    engine_wall += seconds_since(start);
    if (!baseline) continue;
    const auto bstart = Clock::now();
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const ResultSet rs = engine.execute_with(queries[i], baseline->plan, base_params[i]);
      base_lat[i].push_back(rs.timings.total);
      if (r == 0) base_recall[i] = compute_recall(rs.results, truth[i]);
    }
    base_wall += seconds_since(bstart);
  }
  report.total_seconds = engine_wall;

  std::vector<double> medians;
  double recall_sum = 0.0;
  std::size_t met = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto& row = report.rows[i];
    row.query = i;
    row.recall = compute_recall(first[i].results, truth[i]);
    row.latency = median(latencies[i]);
    row.plan = first[i].plan;
    row.converged = first[i].converged;
    row.empty_truth = truth[i].empty();
    row.target_recall = queries[i].target_recall;
    row.work_units = first[i].work_units;
    recall_sum += row.recall;
    met += row.recall >= row.target_recall;
    medians.push_back(row.latency);
    ++report.plan_counts[to_string(row.plan)];
  }
  if (!queries.empty()) {
    report.mean_recall = recall_sum / static_cast<double>(queries.size());
    report.target_met_fraction = static_cast<double>(met) / static_cast<double>(queries.size());
    report.qps = report.total_seconds > 0.0
                     ? static_cast<double>(queries.size() * reps) / report.total_seconds
                     : 0.0;
  }
  report.p50 = percentile(medians, 50);
  report.p95 = percentile(medians, 95);
  report.p99 = percentile(medians, 99);

  if (baseline) {
    report.baseline_name = baseline->describe();
    report.baseline_total_seconds = base_wall;
    double speedup = 0.0;
    double brecall = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const double bl = median(base_lat[i]);
      report.rows[i].baseline_latency = bl;
      report.rows[i].baseline_recall = base_recall[i];
      brecall += base_recall[i];
      speedup += report.rows[i].latency > 0.0 ? bl / report.rows[i].latency : 1.0;
    }
    if (!queries.empty()) {
      report.baseline_mean_recall = brecall / static_cast<double>(queries.size());
      report.mean_speedup = speedup / static_cast<double>(queries.size());
      report.baseline_qps = report.baseline_total_seconds > 0.0
                                ? static_cast<double>(queries.size() * reps) / report.baseline_total_seconds
                                : 0.0;
    }
  }
  return report;
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "query,recall,latency_seconds,plan,converged,empty_truth,target_recall,work_units,baseline_latency_seconds,"
         "baseline_recall\n";
  for (const auto& r : report.rows) {
    out << r.query << ',' << format_double(r.recall) << ',' << format_double(r.latency) << ',' << to_string(r.plan)
        << ',' << (r.converged ? 1 : 0) << ',' << (r.empty_truth ? 1 : 0) << ',' << format_double(r.target_recall) << ','
        << format_double(r.work_units) << ',' << (r.baseline_latency ? format_double(*r.baseline_latency) : "") << ','
        << (r.baseline_recall ? format_double(*r.baseline_recall) : "") << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

std::string format_summary(const EvalReport& report) {
  std::ostringstream os;
  os << "queries:             " << report.rows.size() << '\n'
     << "mean recall:         " << report.mean_recall << '\n'
     << "target met:          " << report.target_met_fraction << '\n'
     << "total seconds:       " << report.total_seconds << '\n'
     << "qps:                 " << report.qps << '\n'
     << "latency p50/p95/p99: " << report.p50 << " / " << report.p95 << " / " << report.p99 << '\n';
  os << "plans:              ";
  for (const auto& [plan, count] : report.plan_counts) os << ' ' << plan << '=' << count;
  os << '\n';
  if (report.baseline_name) {
    os << "baseline:            " << *report.baseline_name << '\n'
       << "baseline recall:     " << report.baseline_mean_recall << '\n'
       << "baseline qps:        " << report.baseline_qps << '\n'
       << "mean speedup:        " << report.mean_speedup << '\n';
  }
  return os.str();
}

std::vector<StaticResult> evaluate_static_grid(const Engine& engine, std::span<const HybridQuery> queries,
                                               const GroundTruth& truth, std::span<const GridConfig> grid) {
  check_alignment(queries.size(), truth);
  const std::size_t n = engine.table().schema().vector_columns.size();
  std::vector<StaticResult> out;
  for (std::size_t c = 0; c < grid.size(); ++c) {
    StaticResult s;
    s.config = c;
    std::size_t met = 0;
    double recall = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const auto params = grid[c].resolve(queries[i].k, engine.table().row_count(), n);
      const ResultSet rs = engine.execute_with(queries[i], grid[c].plan, params);
      const double r = compute_recall(rs.results, truth[i]);
      s.total_seconds += rs.timings.total;
      s.total_work_units += rs.work_units;
      recall += r;
      met += r >= queries[i].target_recall;
    }
    if (!queries.empty()) {
      s.target_met_fraction = static_cast<double>(met) / static_cast<double>(queries.size());
      s.mean_recall = recall / static_cast<double>(queries.size());
    }
    out.push_back(s);
  }
  return out;
}

std::optional<StaticResult> best_static(std::span<const StaticResult> results, double min_fraction) {
  std::optional<StaticResult> best;
  for (const auto& r : results) {
    if (r.target_met_fraction < min_fraction) continue;
    if (!best || r.total_seconds < best->total_seconds) best = r;
  }
  return best;
}

}  // namespace hyq
