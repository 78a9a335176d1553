#include "hyq/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "hyq/error.hpp"
#include "hyq/harness.hpp"
#include "hyq/random.hpp"
#include "hyq/text_util.hpp"

namespace hyq {
namespace {

using Clock = std::chrono::steady_clock;

struct SubKey {
  std::size_t column;
  ColumnParams params;
  bool operator<(const SubKey& o) const {
    return std::tie(column, params.k, params.ef_search, params.iterative_scan, params.max_scan_tuples) <
           std::tie(o.column, o.params.k, o.params.ef_search, o.params.iterative_scan, o.params.max_scan_tuples);
  }
};

struct SubRun {
  FilteredResult result;
  double work = 0.0;
};

double median_seconds(const Engine& engine, const HybridQuery& q, const GridConfig& g, const SubqueryParams& params,
                      const LabelConfig& labels, ResultSet& first) {
  for (std::size_t w = 0; w < labels.warmup; ++w) engine.execute_with(q, g.plan, params);
  std::vector<double> t;
  const std::size_t reps = std::max<std::size_t>(labels.repetitions, 1);
  for (std::size_t r = 0; r < reps; ++r) {
    ResultSet rs = engine.execute_with(q, g.plan, params);
    t.push_back(rs.timings.total);
    if (r == 0) first = std::move(rs);
  }
  std::sort(t.begin(), t.end());
  return t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
}

Matrix rows_to_matrix(const std::vector<const std::vector<double>*>& rows, std::size_t width) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = (*rows[r])[c];
  }
  return m;
}

std::size_t argmax_row(const Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  m.row(r).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

std::array<double, 3> log_targets(const ColumnParams& c) {
  return {std::log2(static_cast<double>(c.k)), std::log2(static_cast<double>(c.ef_search)),
          std::log2(static_cast<double>(c.max_scan_tuples))};
}

}  // namespace

std::string_view to_string(CostMode mode) { return mode == CostMode::WorkUnits ? "work_units" : "measured"; }

CostMode parse_cost_mode(std::string_view text) {
  if (text == "work_units") return CostMode::WorkUnits;
  if (text == "measured") return CostMode::Measured;
  fail(ErrorCode::ParseError, "unknown cost mode '" + std::string(text) + "'");
}

std::size_t pick_label(std::span<const double> cost, std::span<const double> recall, double target_recall) {
  if (cost.empty() || cost.size() != recall.size()) fail(ErrorCode::InvalidConfig, "empty or misaligned grid results");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cost.size(); ++i) {
    if (recall[i] >= target_recall && (!best || cost[i] < cost[*best])) best = i;
  }
  if (best) return *best;
  std::size_t fallback = 0;
  for (std::size_t i = 1; i < cost.size(); ++i) {
    if (recall[i] > recall[fallback] || (recall[i] == recall[fallback] && cost[i] < cost[fallback])) fallback = i;
  }
  return fallback;
}

std::vector<TrainingExample> generate_training_data(const Engine& engine, std::span<const HybridQuery> queries,
                                                    std::span<const GridConfig> grid, const LabelConfig& labels) {
  if (!engine.features_ready()) fail(ErrorCode::EngineNotReady, "training data needs statistics, indexes and encoder");
  if (grid.empty()) fail(ErrorCode::InvalidConfig, "configuration grid is empty");
  if (!(labels.recall_headroom >= 0.0 && labels.recall_headroom <= 1.0)) {
    fail(ErrorCode::InvalidConfig, "recall headroom must lie in [0, 1]");
  }
  const Table& table = engine.table();
  const std::size_t n = table.schema().vector_columns.size();
  const std::size_t rows = table.row_count();
  const auto ptrs = engine.index_pointers();
  const CostModel& cm = engine.config().cost;

  std::vector<TrainingExample> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    TrainingExample ex;
    ex.query = q;
    ex.table_rows = rows;
    ex.features = engine.features(q);
    const ResultSet oracle = exec_sequential(table, q, cm);
    const RowFilter filter(table, q.predicates);
    std::map<SubKey, SubRun> cache;
    auto sub = [&](std::size_t column, const ColumnParams& p) -> const SubRun& {
      auto [it, inserted] = cache.try_emplace(SubKey{column, p});
      if (inserted) {
        it->second.result = run_subquery(*ptrs[column], filter, q, p);
        it->second.work = subquery_work(table, column, it->second.result, filter.term_count(), cm);
      }
      return it->second;
    };

    for (const auto& g : grid) {
      const SubqueryParams params = g.resolve(q.k, rows, n);
      double cost = 0.0;
      double recall = 0.0;
      if (labels.cost_mode == CostMode::Measured) {
        ResultSet first;
        cost = median_seconds(engine, q, g, params, labels, first);
        recall = compute_recall(first.results, oracle.results);
      } else if (g.plan.kind == PlanKind::SequentialScan) {
        cost = oracle.work_units;
        recall = 1.0;
      } else {
        std::vector<const FilteredResult*> parts;
        double work = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (g.plan.kind == PlanKind::SingleIndexScan && g.plan.column != i) continue;
          const SubRun& s = sub(i, params.columns[i]);
          parts.push_back(&s.result);
          work += s.work;
        }
        const ResultSet merged = merge_candidates(table, q, parts, cm);
        cost = work + merged.work_units;
        recall = compute_recall(merged.results, oracle.results);
      }
      ex.cost.push_back(cost);
      ex.recall.push_back(recall);
    }
    ex.label_config = pick_label(ex.cost, ex.recall, std::min(1.0, q.target_recall + labels.recall_headroom));
    ex.target_met = ex.recall[ex.label_config] >= q.target_recall;
    ex.label_plan = grid[ex.label_config].plan;
    ex.label_params = grid[ex.label_config].resolve(q.k, rows, n);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> generate_training_data(const Engine& engine, std::size_t num_queries,
                                                    std::span<const GridConfig> grid, std::uint64_t seed,
                                                    WorkloadSpec spec, const LabelConfig& labels) {
  if (!engine.features_ready()) fail(ErrorCode::EngineNotReady, "training data needs statistics, indexes and encoder");
  spec.num_queries = num_queries;
  spec.seed = seed;
  const Workload w = gen_queries(engine.table(), engine.stats(), spec);
  std::vector<HybridQuery> queries;
  for (const auto& wq : w.queries) queries.push_back(wq.query);
  return generate_training_data(engine, queries, grid, labels);
}

TrainedOptimizer train_models(std::span<const TrainingExample> examples, const ModelTrainConfig& config) {
  config.validate();
  if (examples.size() < std::max<std::size_t>(config.min_examples, 2)) {
    fail(ErrorCode::InsufficientData, "need at least " + std::to_string(config.min_examples) + " examples, got " +
                                          std::to_string(examples.size()));
  }
  const FeatureLayout& layout = examples.front().features.layout;
  const std::size_t width = layout.width();
  const std::size_t n = layout.segment("weights").width;
  for (const auto& e : examples) {
    if (!(e.features.layout == layout)) fail(ErrorCode::LayoutMismatch, "training examples mix feature layouts");
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(config.seed, 1, 0, 0));
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(examples.size())));
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train.begin(), train.end());

  auto features_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<const std::vector<double>*> rows;
    for (auto i : idx) rows.push_back(&examples[i].features.values);
    return rows_to_matrix(rows, width);
  };

  TrainedOptimizer out;
  out.metrics.train_examples = train.size();
  out.metrics.validation_examples = val.size();
  out.models.feature_names = layout.slot_names();

  // Phase 1.
  const Matrix x_train_raw = features_of(train);
  const FeatureScaler scaler = FeatureScaler::fit(x_train_raw);
  const Matrix x_train = scaler.apply(x_train_raw);
  const std::size_t classes = n + 2;
  Matrix y_plan = Matrix::Zero(x_train.rows(), static_cast<Eigen::Index>(classes));
  for (std::size_t r = 0; r < train.size(); ++r) {
    y_plan(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(examples[train[r]].label_plan.class_index())) = 1.0;
  }
  FeedForwardNet plan_net = FeedForwardNet::mlp(width, config.plan_hidden, classes, mix_seed(config.seed, 2, 0, 0));
  TrainConfig ptc = config.plan_train;
  ptc.loss = Loss::CrossEntropy;
  out.metrics.plan_loss_curve = hyq::train(plan_net, x_train, y_plan, ptc);
  plan_net.freeze();

  auto plan_accuracy = [&](const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    const Matrix pred = plan_net.forward(scaler.apply(features_of(idx)));
    std::size_t ok = 0;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      ok += argmax_row(pred, static_cast<Eigen::Index>(r)) == examples[idx[r]].label_plan.class_index();
    }
    return static_cast<double>(ok) / static_cast<double>(idx.size());
  };
  out.metrics.plan_train_accuracy = plan_accuracy(train);
  out.metrics.plan_accuracy = plan_accuracy(val);
  out.models.plan = PlanModel(scaler, std::move(plan_net), n);

  // Phase 2, on examples whose label is an index plan.
  auto index_subset = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> keep;
    for (auto i : idx) {
      if (examples[i].label_plan.kind != PlanKind::SequentialScan) keep.push_back(i);
    }
    return keep;
  };
  const auto ptrain = index_subset(train);
  const auto pval = index_subset(val);
  if (ptrain.empty()) {
    const std::size_t rows = examples.front().table_rows;
    ColumnParams c{1, 128, IterativeScan::Strict, std::max<std::size_t>(rows / 10, 1)};
    out.models.params = ParamModel::constant(c, n);
    return out;
  }

  const Matrix xp = scaler.apply(features_of(ptrain));
  std::vector<ParamModel::Column> columns;
  for (std::size_t i = 0; i < n; ++i) {
    ParamModel::Column col;
    Matrix targets(xp.rows(), 3);
    Matrix modes = Matrix::Zero(xp.rows(), static_cast<Eigen::Index>(kIterativeScanCount));
    for (std::size_t r = 0; r < ptrain.size(); ++r) {
      const auto& cp = examples[ptrain[r]].label_params.columns[i];
      const auto t = log_targets(cp);
      for (int j = 0; j < 3; ++j) targets(static_cast<Eigen::Index>(r), j) = t[static_cast<std::size_t>(j)];
      modes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cp.iterative_scan)) = 1.0;
    }
    for (int j = 0; j < 3; ++j) {
      const double mean = targets.col(j).mean();
      const double sd = std::sqrt((targets.col(j).array() - mean).square().mean());
      col.target_mean.push_back(mean);
      col.target_scale.push_back(sd > 1e-9 ? sd : 1.0);
      targets.col(j) = (targets.col(j).array() - mean) / col.target_scale.back();
    }
    col.regressor = FeedForwardNet::mlp(width, config.param_hidden, 3, mix_seed(config.seed, 3, i, 0));
    TrainConfig rtc = config.param_train;
    rtc.loss = Loss::MeanSquaredError;
    rtc.seed = mix_seed(config.param_train.seed, 4, i, 0);
    hyq::train(col.regressor, xp, targets, rtc);
    col.regressor.freeze();
    col.mode = FeedForwardNet::mlp(width, config.param_hidden, kIterativeScanCount, mix_seed(config.seed, 5, i, 0));
    TrainConfig mtc = config.param_train;
    mtc.loss = Loss::CrossEntropy;
    mtc.seed = mix_seed(config.param_train.seed, 6, i, 0);
    hyq::train(col.mode, xp, modes, mtc);
    col.mode.freeze();
    columns.push_back(std::move(col));
  }
  out.models.params = ParamModel(scaler, std::move(columns), config.safety_margin_log2);

  if (!pval.empty()) {
    double err = 0.0;
    std::size_t mode_ok = 0;
    for (auto idx : pval) {
      const auto raw = out.models.params.raw(examples[idx].features.values);
      const auto ms = out.models.params.mode_scores(examples[idx].features.values);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& cp = examples[idx].label_params.columns[i];
        const auto t = log_targets(cp);
        for (std::size_t j = 0; j < 3; ++j) err += std::abs(raw[i][j] - t[j]);
        mode_ok += static_cast<std::size_t>(std::max_element(ms[i].begin(), ms[i].end()) - ms[i].begin()) ==
                   static_cast<std::size_t>(cp.iterative_scan);
      }
    }
    out.metrics.param_log2_mae = err / static_cast<double>(pval.size() * n * 3);
    out.metrics.mode_accuracy = static_cast<double>(mode_ok) / static_cast<double>(pval.size() * n);
  }
  return out;
}

void write_training_csv(const std::filesystem::path& path, std::span<const TrainingExample> examples,
                        std::span<const GridConfig> grid) {
  std::vector<std::string> names{"label_config", "label_plan", "target_met"};
  if (!examples.empty()) {
    const std::size_t n = examples.front().label_params.columns.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::string c = std::to_string(i);
      for (const char* f : {"k_", "ef_search_", "iterative_scan_", "max_scan_tuples_"}) names.push_back(f + c);
    }
  }
  for (std::size_t j = 0; j < grid.size(); ++j) {
    names.push_back("cost_" + std::to_string(j));
    names.push_back("recall_" + std::to_string(j));
  }
  std::vector<FeatureVector> rows;
  std::vector<std::vector<std::string>> extra;
  for (const auto& e : examples) {
    rows.push_back(e.features);
    std::vector<std::string> v{std::to_string(e.label_config), to_string(e.label_plan), e.target_met ? "1" : "0"};
    for (const auto& c : e.label_params.columns) {
      v.push_back(std::to_string(c.k));
      v.push_back(std::to_string(c.ef_search));
      v.emplace_back(to_string(c.iterative_scan));
      v.push_back(std::to_string(c.max_scan_tuples));
    }
    for (std::size_t j = 0; j < e.cost.size(); ++j) {
      v.push_back(format_double(e.cost[j]));
      v.push_back(format_double(e.recall[j]));
    }
    extra.push_back(std::move(v));
  }
  if (examples.empty()) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    return;
  }
  write_feature_csv(path, examples.front().features.layout, rows, names, extra);
}

}  // namespace hyq
