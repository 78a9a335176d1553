#include "hyq/query_features.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "hyq/error.hpp"
#include "hyq/text_util.hpp"

namespace hyq {
namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double normalize(const Histogram* hist, double x) {
  if (!hist || hist->edges.empty()) return 0.0;
  const double lo = hist->min();
  const double hi = hist->max();
  if (hi <= lo) return x >= lo ? 1.0 : 0.0;
  return clamp01((x - lo) / (hi - lo));
}

double category_share(const Histogram* hist, const std::string& value) {
  if (!hist || hist->total_count == 0) return 0.0;
  auto it = hist->frequencies.find(value);
  if (it == hist->frequencies.end()) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(hist->total_count);
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::LayoutMismatch, "non-finite value in feature segment " + std::string(what));
  }
}

}  // namespace

void ProbeConfig::validate() const {
  if (probe_k == 0) fail(ErrorCode::InvalidConfig, "probe_k must be at least 1");
  if (ef_search == 0) fail(ErrorCode::InvalidConfig, "probe ef_search must be at least 1");
}

ProbeResult preprobe(const Table& table, std::span<const GraphIndex* const> indexes, const HybridQuery& query,
                     const ProbeConfig& config) {
  config.validate();
  const std::size_t n = table.schema().vector_columns.size();
  if (indexes.size() < n) fail(ErrorCode::IndexMissing, "pre-probe needs one index per vector column");
  const auto start = std::chrono::steady_clock::now();
  const RowFilter filter(table, query.predicates);
  const SearchParams params{.ef_search = std::max(config.ef_search, config.probe_k),
                            .max_scan_tuples = std::nullopt,
                            .iterative_scan = IterativeScan::Off};
  ProbeResult out;
  out.local_rate.resize(n, 1.0);
  out.qualifying.resize(n, 0);
  out.probed_per_column.resize(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!indexes[i]) fail(ErrorCode::IndexMissing, table.schema().vector_columns[i].name);
    std::size_t dc = 0;
    const auto hits = indexes[i]->search(query.query_vectors[i], config.probe_k, params, &dc);
    out.distance_computations += dc;
    std::size_t ok = 0;
    for (const auto& h : hits) ok += filter.matches_id(h.id);
    out.predicate_evaluations += hits.size();
    out.qualifying[i] = ok;
    out.probed_per_column[i] = hits.size();
    out.probed_count = std::max(out.probed_count, hits.size());
    out.local_rate[i] = hits.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(hits.size());
  }
  out.probe_latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<double> encode_query_scalars(const TableSchema& schema, const StatsCatalog& stats,
                                         std::span<const Predicate> predicates) {
  const std::size_t m = schema.scalar_columns.size();
  std::vector<double> out(m * kScalarSlotWidth, 0.0);
  std::vector<int> seen(m, 0);
  for (const auto& p : predicates) {
    const std::size_t col = schema.scalar_column_index(p.column);
    double* slot = out.data() + col * kScalarSlotWidth;
    slot[0] = 1.0;
    slot[1 + static_cast<std::size_t>(p.op)] = 1.0;
    const Histogram* hist = stats.find(p.column);
    double a = 0.0;
    double b = 0.0;
    if (schema.scalar_columns[col].kind == ScalarKind::Categorical) {
      if (const auto* s = std::get_if<std::string>(&p.operand)) a = category_share(hist, *s);
    } else {
      if (const auto* x = std::get_if<double>(&p.operand)) a = normalize(hist, *x);
      if (p.op == CompareOp::Between) {
        if (const auto* y = std::get_if<double>(&p.upper)) b = normalize(hist, *y);
      }
    }
    // A second predicate on the same column fills the free operand slot.
    double* operands = slot + 1 + kCompareOpCount;
    if (seen[col] == 0) {
      operands[0] = a;
      operands[1] = b;
    } else if (seen[col] == 1 && p.op != CompareOp::Between && operands[1] == 0.0) {
      operands[1] = a;
    }
    ++seen[col];
  }
  return out;
}

void FeatureLayout::add(std::string name, std::size_t width) {
  segments_.push_back({std::move(name), width_, width});
  width_ += width;
}

FeatureLayout FeatureLayout::for_schema(const TableSchema& schema) {
  FeatureLayout layout;
  const std::size_t n = schema.vector_columns.size();
  for (const auto& v : schema.vector_columns) layout.vector_names_.push_back(v.name);
  for (const auto& s : schema.scalar_columns) layout.scalar_names_.push_back(s.name);
  layout.add("recon", n);
  layout.add("scalars", schema.scalar_columns.size() * kScalarSlotWidth);
  layout.add("target_recall", 1);
  layout.add("probe", n + 1);
  layout.add("selectivity", 2);
  layout.add("weights", n);
  layout.add("k_norm", 1);
  return layout;
}

const FeatureSegment& FeatureLayout::segment(std::string_view name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::LayoutMismatch, "no feature segment named " + std::string(name));
}

std::vector<std::string> FeatureLayout::slot_names() const {
  static constexpr const char* kOpNames[] = {"eq", "lt", "le", "gt", "ge", "between"};
  std::vector<std::string> names;
  names.reserve(width_);
  for (const auto& v : vector_names_) names.push_back("recon_" + v);
  for (const auto& s : scalar_names_) {
    names.push_back(s + "_present");
    for (const char* op : kOpNames) names.push_back(s + "_" + op);
    names.push_back(s + "_operand");
    names.push_back(s + "_operand2");
  }
  names.push_back("target_recall");
  for (const auto& v : vector_names_) names.push_back("local_rate_" + v);
  names.push_back("probed_over_k");
  names.push_back("selectivity");
  names.push_back("selectivity_log");
  for (const auto& v : vector_names_) names.push_back("weight_" + v);
  names.push_back("k_norm");
  return names;
}

std::span<const double> FeatureVector::segment(std::string_view name) const {
  const auto& s = layout.segment(name);
  return std::span<const double>(values).subspan(s.offset, s.width);
}

FeatureVector assemble_features(const FeatureLayout& layout, const TableSchema& schema, std::size_t table_rows,
                                const ReconstructionScore& recon, const StatsCatalog& stats,
                                const ProbeResult& probe, const HybridQuery& query) {
  const std::size_t n = schema.vector_columns.size();
  if (!(layout == FeatureLayout::for_schema(schema))) fail(ErrorCode::LayoutMismatch, "layout built for another schema");
  if (recon.per_column.size() != n) fail(ErrorCode::LayoutMismatch, "reconstruction score width");
  if (probe.local_rate.size() != n) fail(ErrorCode::LayoutMismatch, "probe result width");
  if (query.weights.size() != n) fail(ErrorCode::LayoutMismatch, "query weight count");

  FeatureVector fv{layout, std::vector<double>(layout.width(), 0.0)};
  auto put = [&](std::string_view name, std::span<const double> values) {
    const auto& seg = layout.segment(name);
    if (values.size() != seg.width) fail(ErrorCode::LayoutMismatch, "segment " + seg.name + " width");
    require_finite(values, name);
    std::copy(values.begin(), values.end(), fv.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
  };

  put("recon", recon.per_column);
  put("scalars", encode_query_scalars(schema, stats, query.predicates));
  const double target = query.target_recall;
  put("target_recall", std::span<const double>(&target, 1));

  std::vector<double> probe_slots(probe.local_rate);
  probe_slots.push_back(static_cast<double>(probe.probed_count) / static_cast<double>(std::max<std::size_t>(query.k, 1)));
  put("probe", probe_slots);

  const double sigma = estimate_conjunction(stats, query.predicates);
  const double sigma_log = (std::log10(std::max(sigma, 1e-6)) + 6.0) / 6.0;
  const double sel[2] = {sigma, sigma_log};
  put("selectivity", sel);

  std::vector<double> w(query.weights);
  double total = 0.0;
  for (double x : w) total += std::abs(x);
  for (double& x : w) x = total > 0.0 ? std::abs(x) / total : 1.0 / static_cast<double>(n);
  put("weights", w);

  const double k_norm = table_rows == 0 ? 0.0 : static_cast<double>(query.k) / static_cast<double>(table_rows);
  put("k_norm", std::span<const double>(&k_norm, 1));
  return fv;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureLayout& layout,
                       std::span<const FeatureVector> rows, std::span<const std::string> extra_names,
                       std::span<const std::vector<std::string>> extra_values) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  bool first = true;
  for (const auto& name : layout.slot_names()) {
    out << (first ? "" : ",") << quote_csv(name);
    first = false;
  }
  for (const auto& name : extra_names) out << ',' << quote_csv(name);
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!(rows[r].layout == layout)) fail(ErrorCode::LayoutMismatch, "feature row with a different layout");
    for (std::size_t i = 0; i < rows[r].values.size(); ++i) out << (i ? "," : "") << format_double(rows[r].values[i]);
    if (r < extra_values.size()) {
      for (const auto& v : extra_values[r]) out << ',' << quote_csv(v);
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace hyq
