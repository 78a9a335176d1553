#include "hyq/plan_rewriter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hyq/error.hpp"
#include "hyq/text_util.hpp"

namespace hyq {

using nlohmann::json;

namespace {

constexpr int kModelVersion = 1;
constexpr std::size_t kMaxEfSearch = 4096;

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::size_t pow2_round(double log2_value) {
  if (!std::isfinite(log2_value)) log2_value = 0.0;
  log2_value = std::clamp(log2_value, 0.0, 62.0);
  return static_cast<std::size_t>(std::llround(std::exp2(log2_value)));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

json scaler_to_json(const FeatureScaler& s) { return {{"mean", s.mean}, {"scale", s.scale}}; }
FeatureScaler scaler_from_json(const json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>()};
}

}  // namespace

std::size_t PlanChoice::class_index() const {
  switch (kind) {
    case PlanKind::SequentialScan: return 0;
    case PlanKind::DecomposedIndexScan: return 1;
    case PlanKind::SingleIndexScan: return 2 + column;
  }
  return 0;
}

PlanChoice PlanChoice::from_class(std::size_t index, std::size_t vector_columns) {
  if (index == 0) return sequential();
  if (index == 1) return decomposed();
  if (index - 2 < vector_columns) return single(index - 2);
  fail(ErrorCode::InvalidPlan, "plan class " + std::to_string(index) + " out of range");
}

std::string to_string(const PlanChoice& plan) {
  switch (plan.kind) {
    case PlanKind::SequentialScan: return "sequential";
    case PlanKind::DecomposedIndexScan: return "decomposed";
    case PlanKind::SingleIndexScan: return "single:" + std::to_string(plan.column);
  }
  return "?";
}

PlanChoice parse_plan(std::string_view text, std::size_t vector_columns) {
  const std::string t = lower(trim(text));
  if (t == "sequential" || t == "seq") return PlanChoice::sequential();
  if (t == "decomposed") return PlanChoice::decomposed();
  if (t.rfind("single:", 0) == 0) {
    const auto col = parse_u64(std::string_view(t).substr(7));
    if (col >= vector_columns) fail(ErrorCode::InvalidPlan, "single-index column out of range");
    return PlanChoice::single(col);
  }
  fail(ErrorCode::InvalidPlan, "unknown plan '" + std::string(text) + "'");
}

void check_params(const SubqueryParams& params, std::size_t k) {
  for (std::size_t i = 0; i < params.columns.size(); ++i) {
    const auto& c = params.columns[i];
    const std::string where = "column " + std::to_string(i);
    if (c.k == 0 || c.ef_search == 0 || c.max_scan_tuples == 0) fail(ErrorCode::InvalidConfig, where + ": zero parameter");
    if (c.k < k) fail(ErrorCode::InvalidConfig, where + ": k_i below k");
    if (c.max_scan_tuples < c.k) fail(ErrorCode::InvalidConfig, where + ": max_scan_tuples below k_i");
    if (c.iterative_scan == IterativeScan::Strict && c.ef_search < c.k) {
      fail(ErrorCode::InvalidConfig, where + ": ef_search below k_i in strict mode");
    }
  }
}

SubqueryParams GridConfig::resolve(std::size_t k, std::size_t table_rows, std::size_t vector_columns) const {
  const std::size_t upper = std::max(k, table_rows);
  SubqueryParams out;
  out.columns.resize(vector_columns);
  for (std::size_t i = 0; i < vector_columns; ++i) {
    ColumnParams& c = out.columns[i];
    const bool participates = plan.kind == PlanKind::DecomposedIndexScan ||
                              (plan.kind == PlanKind::SingleIndexScan && plan.column == i);
    if (!participates) {
      c = {k, k, iterative_scan, k};
      continue;
    }
    c.k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(lambda * static_cast<double>(k))), k, upper);
    c.iterative_scan = iterative_scan;
    c.ef_search = ef_search;
    if (iterative_scan == IterativeScan::Strict) c.ef_search = std::max(c.ef_search, c.k);
    const double scan = max_scan_k_multiple > 0.0 ? max_scan_k_multiple * static_cast<double>(c.k)
                                                  : max_scan_row_fraction * static_cast<double>(table_rows);
    c.max_scan_tuples = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(scan)), c.k, std::max(upper, c.k));
  }
  return out;
}

std::string GridConfig::describe() const {
  if (plan.kind == PlanKind::SequentialScan) return "sequential";
  std::ostringstream os;
  os << to_string(plan) << " ef=" << ef_search << " mode=" << to_string(iterative_scan)
     << " lambda=" << format_double(lambda) << " max_scan=";
  if (max_scan_k_multiple > 0.0) {
    os << format_double(max_scan_k_multiple) << 'k';
  } else {
    os << format_double(max_scan_row_fraction) << "rows";
  }
  return os.str();
}

void GridSpec::validate() const {
  if (ef_search.empty() || iterative_scan.empty() || lambda.empty() || max_scan.empty()) {
    fail(ErrorCode::InvalidConfig, "every grid dimension needs at least one value");
  }
  for (auto ef : ef_search) {
    if (ef == 0) fail(ErrorCode::InvalidConfig, "grid ef_search must be positive");
  }
  for (double l : lambda) {
    if (!(l >= 1.0)) fail(ErrorCode::InvalidConfig, "grid lambda must be >= 1");
  }
  for (double m : max_scan) {
    if (!(m > 0.0)) fail(ErrorCode::InvalidConfig, "grid max_scan entries must be positive");
  }
}

std::vector<GridConfig> build_grid(const GridSpec& spec, std::size_t vector_columns) {
  spec.validate();
  std::vector<GridConfig> grid;
  grid.push_back(GridConfig{.plan = PlanChoice::sequential()});
  for (double lambda : spec.lambda) {
    for (std::size_t ef : spec.ef_search) {
      for (IterativeScan mode : spec.iterative_scan) {
        for (double scan : spec.max_scan) {
          GridConfig g;
          g.ef_search = ef;
          g.iterative_scan = mode;
          g.lambda = lambda;
          g.max_scan_k_multiple = scan >= 1.0 ? scan : 0.0;
          g.max_scan_row_fraction = scan < 1.0 ? scan : 0.0;
          g.plan = PlanChoice::decomposed();
          grid.push_back(g);
          if (spec.include_single_index) {
            for (std::size_t c = 0; c < vector_columns; ++c) {
              g.plan = PlanChoice::single(c);
              grid.push_back(g);
            }
          }
        }
      }
    }
  }
  return grid;
}

GridSpec parse_grid_spec(std::string_view text) {
  GridSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::ParseError, "grid line without '=': " + std::string(body));
    const std::string key = lower(trim(body.substr(0, eq)));
    std::vector<std::string> values;
    for (const auto& v : split(body.substr(eq + 1), ',')) {
      if (!trim(v).empty()) values.emplace_back(trim(v));
    }
    if (key == "ef_search") {
      spec.ef_search.clear();
      for (const auto& v : values) spec.ef_search.push_back(parse_u64(v));
    } else if (key == "iterative_scan") {
      spec.iterative_scan.clear();
      for (const auto& v : values) spec.iterative_scan.push_back(parse_iterative_scan(v));
    } else if (key == "lambda") {
      spec.lambda.clear();
      for (const auto& v : values) spec.lambda.push_back(parse_double(v));
    } else if (key == "max_scan") {
      spec.max_scan.clear();
      for (const auto& v : values) {
        if (!v.empty() && (v.back() == 'k' || v.back() == 'K')) {
          const double m = parse_double(std::string_view(v).substr(0, v.size() - 1));
          if (m < 1.0) fail(ErrorCode::ParseError, "k multiples must be >= 1: " + v);
          spec.max_scan.push_back(m);
        } else {
          const double f = parse_double(v);
          if (f >= 1.0) fail(ErrorCode::ParseError, "row fractions must be < 1 (use a k suffix for multiples): " + v);
          spec.max_scan.push_back(f);
        }
      }
    } else if (key == "single_index") {
      if (values.size() != 1) fail(ErrorCode::ParseError, "single_index takes one value");
      const std::string v = lower(values[0]);
      if (v != "true" && v != "false") fail(ErrorCode::ParseError, "single_index must be true or false");
      spec.include_single_index = v == "true";
    } else {
      fail(ErrorCode::ParseError, "unknown grid key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

GridSpec load_grid_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid_spec(ss.str());
}

FeatureScaler FeatureScaler::fit(const Matrix& x) {
  FeatureScaler s;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.rows() ? x.col(c).sum() / n : 0.0;
    const double var = x.rows() ? (x.col(c).array() - mean).square().sum() / n : 0.0;
    const double sd = std::sqrt(var);
    s.mean.push_back(mean);
    s.scale.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return s;
}

Matrix FeatureScaler::apply(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != mean.size()) fail(ErrorCode::ShapeMismatch, "feature width differs from scaler");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    out.col(c) = (x.col(c).array() - mean[static_cast<std::size_t>(c)]) / scale[static_cast<std::size_t>(c)];
  }
  return out;
}

std::vector<double> FeatureScaler::apply(std::span<const double> x) const {
  if (x.size() != mean.size()) fail(ErrorCode::ShapeMismatch, "feature width differs from scaler");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / scale[i];
  return out;
}

void ModelTrainConfig::validate() const {
  plan_train.validate();
  param_train.validate();
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail(ErrorCode::InvalidConfig, "validation_fraction must lie in [0, 1)");
  }
  if (!std::isfinite(safety_margin_log2)) fail(ErrorCode::InvalidConfig, "safety margin must be finite");
}

PlanModel::PlanModel(FeatureScaler scaler, FeedForwardNet net, std::size_t vector_columns)
    : scaler_(std::move(scaler)), net_(std::move(net)), columns_(vector_columns), trained_(true) {
  if (net_.output_size() != vector_columns + 2) fail(ErrorCode::ShapeMismatch, "plan classifier needs N + 2 outputs");
  if (net_.input_size() != scaler_.mean.size()) fail(ErrorCode::ShapeMismatch, "plan classifier input width");
}

std::vector<double> PlanModel::class_scores(std::span<const double> features) const {
  if (!trained_) fail(ErrorCode::ModelMissing, "plan model not trained");
  return net_.forward(scaler_.apply(features));
}

ParamModel::ParamModel(FeatureScaler scaler, std::vector<Column> columns, double safety_margin_log2)
    : scaler_(std::move(scaler)), columns_(std::move(columns)), margin_(safety_margin_log2), trained_(true) {
  for (const auto& c : columns_) {
    if (c.regressor.output_size() != 3 || c.mode.output_size() != kIterativeScanCount) {
      fail(ErrorCode::ShapeMismatch, "parameter heads have the wrong width");
    }
  }
}

ParamModel ParamModel::constant(ColumnParams params, std::size_t vector_columns) {
  ParamModel m;
  m.constant_ = params;
  m.constant_columns_ = vector_columns;
  m.trained_ = true;
  return m;
}

std::vector<std::vector<double>> ParamModel::raw(std::span<const double> features) const {
  if (!trained_) fail(ErrorCode::ModelMissing, "parameter model not trained");
  std::vector<std::vector<double>> out;
  if (constant_) {
    const double v[3] = {std::log2(static_cast<double>(constant_->k)), std::log2(static_cast<double>(constant_->ef_search)),
                         std::log2(static_cast<double>(constant_->max_scan_tuples))};
    out.assign(constant_columns_, std::vector<double>(v, v + 3));
    return out;
  }
  const auto x = scaler_.apply(features);
  for (const auto& c : columns_) {
    auto y = c.regressor.forward(x);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = y[j] * c.target_scale[j] + c.target_mean[j];
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<std::vector<double>> ParamModel::mode_scores(std::span<const double> features) const {
  if (!trained_) fail(ErrorCode::ModelMissing, "parameter model not trained");
  std::vector<std::vector<double>> out;
  if (constant_) {
    std::vector<double> one_hot(kIterativeScanCount, 0.0);
    one_hot[static_cast<std::size_t>(constant_->iterative_scan)] = 1.0;
    out.assign(constant_columns_, one_hot);
    return out;
  }
  const auto x = scaler_.apply(features);
  for (const auto& c : columns_) out.push_back(c.mode.forward(x));
  return out;
}

PlanChoice select_plan(const PlanModel& model, std::span<const double> features) {
  if (!model.trained()) fail(ErrorCode::ModelMissing, "plan model not trained");
  return PlanChoice::from_class(argmax(model.class_scores(features)), model.vector_columns());
}

SubqueryParams decode_params(std::span<const std::vector<double>> raw, std::span<const std::vector<double>> modes,
                             double margin_log2, std::size_t k, std::size_t table_rows) {
  if (raw.size() != modes.size()) fail(ErrorCode::ShapeMismatch, "parameter heads disagree on column count");
  const std::size_t upper = std::max(k, table_rows);
  SubqueryParams out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    ColumnParams c;
    c.k = std::clamp(pow2_round(raw[i][0] + margin_log2), k, upper);
    c.ef_search = std::clamp(pow2_round(raw[i][1] + margin_log2), std::min(c.k, kMaxEfSearch), kMaxEfSearch);
    c.ef_search = std::max(c.ef_search, c.k);
    c.max_scan_tuples = std::clamp(pow2_round(raw[i][2]), c.k, std::max(upper, c.k));
    c.iterative_scan = static_cast<IterativeScan>(argmax(modes[i]));
    out.columns.push_back(c);
  }
  return out;
}

SubqueryParams recommend_params(const ParamModel& model, std::span<const double> features, std::size_t k,
                                std::size_t table_rows) {
  if (!model.trained()) fail(ErrorCode::ModelMissing, "parameter model not trained");
  if (model.is_constant()) {
    SubqueryParams out;
    ColumnParams c = *model.constant_params();
    c.k = std::max(c.k, k);
    c.ef_search = std::max(c.ef_search, c.k);
    c.max_scan_tuples = std::max(c.max_scan_tuples, c.k);
    out.columns.assign(model.vector_columns(), c);
    return out;
  }
  const auto raw = model.raw(features);
  const auto modes = model.mode_scores(features);
  return decode_params(raw, modes, model.safety_margin_log2(), k, table_rows);
}

void OptimizerModels::save(const std::filesystem::path& dir) const {
  if (!ready()) fail(ErrorCode::ModelMissing, "cannot save untrained optimizer models");
  std::filesystem::create_directories(dir);
  plan.net().save(dir / "plan.net");
  json cols = json::array();
  for (std::size_t i = 0; i < params.columns().size(); ++i) {
    const auto& c = params.columns()[i];
    c.regressor.save(dir / ("param_regressor_" + std::to_string(i) + ".net"));
    c.mode.save(dir / ("param_mode_" + std::to_string(i) + ".net"));
    cols.push_back({{"target_mean", c.target_mean}, {"target_scale", c.target_scale}});
  }
  json manifest{{"format", "hyq-optimizer"},
                {"version", kModelVersion},
                {"vector_columns", plan.vector_columns()},
                {"feature_names", feature_names},
                {"plan_scaler", scaler_to_json(plan.scaler())},
                {"param_margin_log2", params.safety_margin_log2()},
                {"param_columns", cols}};
  if (params.is_constant()) {
    const auto& c = *params.constant_params();
    manifest["param_constant"] = {{"k", c.k},
                                  {"ef_search", c.ef_search},
                                  {"iterative_scan", std::string(to_string(c.iterative_scan))},
                                  {"max_scan_tuples", c.max_scan_tuples}};
  } else {
    manifest["param_scaler"] = scaler_to_json(params.scaler());
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorCode::IoError, "failed writing optimizer manifest");
}

OptimizerModels OptimizerModels::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorCode::IoError, "cannot read " + (dir / "manifest.json").string());
  try {
    const json m = json::parse(in);
    if (m.at("format") != "hyq-optimizer") fail(ErrorCode::FormatError, "not an optimizer manifest");
    if (m.at("version") != kModelVersion) fail(ErrorCode::FormatError, "unsupported optimizer model version");
    OptimizerModels out;
    const std::size_t n = m.at("vector_columns").get<std::size_t>();
    out.feature_names = m.at("feature_names").get<std::vector<std::string>>();
    out.plan = PlanModel(scaler_from_json(m.at("plan_scaler")), FeedForwardNet::load(dir / "plan.net"), n);
    if (m.contains("param_constant")) {
      const auto& c = m.at("param_constant");
      out.params = ParamModel::constant({c.at("k").get<std::size_t>(), c.at("ef_search").get<std::size_t>(),
                                         parse_iterative_scan(c.at("iterative_scan").get<std::string>()),
                                         c.at("max_scan_tuples").get<std::size_t>()},
                                        n);
    } else {
      std::vector<ParamModel::Column> cols;
      const auto& jc = m.at("param_columns");
      for (std::size_t i = 0; i < jc.size(); ++i) {
        ParamModel::Column c;
        c.regressor = FeedForwardNet::load(dir / ("param_regressor_" + std::to_string(i) + ".net"));
        c.mode = FeedForwardNet::load(dir / ("param_mode_" + std::to_string(i) + ".net"));
        c.target_mean = jc[i].at("target_mean").get<std::vector<double>>();
        c.target_scale = jc[i].at("target_scale").get<std::vector<double>>();
        cols.push_back(std::move(c));
      }
      out.params = ParamModel(scaler_from_json(m.at("param_scaler")), std::move(cols),
                              m.at("param_margin_log2").get<double>());
    }
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, std::string("malformed optimizer manifest: ") + e.what());
  }
}

RewrittenQuery rewrite(const HybridQuery& query, const TableSchema& schema, const PlanChoice& plan,
                       const SubqueryParams& params) {
  const std::size_t n = schema.vector_columns.size();
  if (plan.kind == PlanKind::SequentialScan) fail(ErrorCode::InvalidPlan, "sequential scans are not decomposed");
  if (plan.kind == PlanKind::SingleIndexScan && plan.column >= n) fail(ErrorCode::InvalidPlan, "column out of range");
  if (params.columns.size() != n) fail(ErrorCode::InvalidPlan, "parameters do not cover every vector column");
  query.validate(schema);
  RewrittenQuery out;
  out.plan = plan;
  for (std::size_t i = 0; i < n; ++i) {
    if (plan.kind == PlanKind::SingleIndexScan && plan.column != i) continue;
    SubqueryDescriptor d;
    d.column = i;
    d.column_name = schema.vector_columns[i].name;
    d.query_vector = query.query_vectors[i];
    d.k = params.columns[i].k;
    d.params = params.columns[i];
    d.predicates = query.predicates;
    out.subqueries.push_back(std::move(d));
  }
  out.merge = {query.k, query.weights, query.query_vectors};
  return out;
}

Statement to_statement(const SubqueryDescriptor& sub, std::string table) {
  Statement st;
  st.settings = {{"hnsw.ef_search", std::to_string(sub.params.ef_search)},
                 {"hnsw.iterative_scan", std::string(to_string(sub.params.iterative_scan))},
                 {"hnsw.max_scan_tuples", std::to_string(sub.params.max_scan_tuples)}};
  st.table = std::move(table);
  st.predicates = sub.predicates;
  st.order.push_back({sub.column_name, std::nullopt, sub.query_vector});
  st.limit = sub.k;
  return st;
}

SubqueryDescriptor from_statement(const Statement& st, const TableSchema& schema) {
  if (st.order.size() != 1 || st.order[0].weight) {
    fail(ErrorCode::ParseError, "a subquery orders by exactly one unweighted distance");
  }
  SubqueryDescriptor d;
  const auto col = schema.find_vector_column(st.order[0].column);
  if (!col) fail(ErrorCode::UnknownColumn, st.order[0].column);
  d.column = *col;
  d.column_name = st.order[0].column;
  d.query_vector = st.order[0].vector;
  d.k = st.limit;
  d.params.k = st.limit;
  d.predicates = st.predicates;
  for (const auto& [name, value] : st.settings) {
    if (name == "hnsw.ef_search") {
      d.params.ef_search = parse_u64(value);
    } else if (name == "hnsw.iterative_scan") {
      d.params.iterative_scan = parse_iterative_scan(value);
    } else if (name == "hnsw.max_scan_tuples") {
      d.params.max_scan_tuples = parse_u64(value);
    } else {
      fail(ErrorCode::ParseError, "unknown setting " + name);
    }
  }
  return d;
}

std::string format_subquery(const SubqueryDescriptor& sub, std::string table) {
  return format_statement(to_statement(sub, std::move(table)));
}

}  // namespace hyq
