#include "hyq/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hyq/error.hpp"
#include "hyq/executor.hpp"
#include "hyq/random.hpp"
#include "hyq/text_util.hpp"

namespace hyq {

using nlohmann::json;

namespace {

constexpr std::size_t kKMeansIterations = 25;

void require_rows(VectorView v) {
  if (v.dimension == 0 || v.rows() == 0) fail(ErrorCode::EmptyInput, "no vectors");
}

double squared_l2(std::span<const float> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

std::vector<float> blob_vectors(std::size_t dimension, std::size_t blobs, double spread,
                                std::span<const std::size_t> membership, Rng& rng) {
  std::vector<double> centres(blobs * dimension);
  for (auto& c : centres) c = rng.uniform(-1.0, 1.0);
  std::vector<float> out(membership.size() * dimension);
  for (std::size_t r = 0; r < membership.size(); ++r) {
    const double* c = centres.data() + membership[r] * dimension;
    for (std::size_t d = 0; d < dimension; ++d) out[r * dimension + d] = static_cast<float>(c[d] + spread * rng.normal());
  }
  return out;
}

struct BoundingBox {
  std::vector<double> lo;
  std::vector<double> hi;
};

BoundingBox bounding_box(VectorView v) {
  BoundingBox b{std::vector<double>(v.dimension, std::numeric_limits<double>::infinity()),
                std::vector<double>(v.dimension, -std::numeric_limits<double>::infinity())};
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const auto row = v.row(r);
    for (std::size_t d = 0; d < v.dimension; ++d) {
      b.lo[d] = std::min(b.lo[d], static_cast<double>(row[d]));
      b.hi[d] = std::max(b.hi[d], static_cast<double>(row[d]));
    }
  }
  return b;
}

VectorView column_view(const Table& table, std::size_t column) {
  return {table.vector_column(column), table.schema().vector_columns[column].dimension};
}

std::string_view op_name(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "eq";
    case CompareOp::Lt: return "lt";
    case CompareOp::Le: return "le";
    case CompareOp::Gt: return "gt";
    case CompareOp::Ge: return "ge";
    case CompareOp::Between: return "between";
  }
  return "?";
}

CompareOp parse_op(std::string_view s) {
  for (std::size_t i = 0; i < kCompareOpCount; ++i) {
    if (op_name(static_cast<CompareOp>(i)) == s) return static_cast<CompareOp>(i);
  }
  fail(ErrorCode::FormatError, "unknown operator '" + std::string(s) + "'");
}

json value_to_json(const ScalarValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

ScalarValue value_from_json(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  return j.get<double>();
}

std::filesystem::path sidecar_path(const std::filesystem::path& path, const std::string& column) {
  auto p = path;
  p.replace_extension("." + column + ".fvecs");
  return p;
}

std::vector<double> draw_weights(std::size_t n, WeightMode mode, double skew_fraction, Rng& rng) {
  if (n == 1) return {1.0};
  const bool skewed = mode == WeightMode::Skewed || (mode == WeightMode::Mixed && rng.uniform() < skew_fraction);
  std::vector<double> w(n, 0.0);
  if (n == 2) {
    w[0] = skewed ? kSkewedWeights[rng.below(std::size(kSkewedWeights))] : rng.uniform();
    w[1] = 1.0 - w[0];
    return w;
  }
  if (skewed) {
    const std::size_t lead = rng.below(n);
    const double s = kSkewedWeights[rng.below(std::size(kSkewedWeights))];
    w[lead] = s;
    std::vector<double> rest(n - 1);
    double total = 0.0;
    for (auto& r : rest) total += (r = rng.uniform());
    for (std::size_t i = 0, j = 0; i < n; ++i) {
      if (i != lead) w[i] = total > 0.0 ? (1.0 - s) * rest[j++] / total : (1.0 - s) / static_cast<double>(n - 1);
    }
    return w;
  }
  double total = 0.0;
  for (auto& x : w) total += (x = rng.uniform());
  for (auto& x : w) x = total > 0.0 ? x / total : 1.0 / static_cast<double>(n);
  return w;
}

}  // namespace

std::vector<float> gen_blob_vectors(std::size_t rows, std::size_t dimension, std::size_t blobs, double spread,
                                    std::uint64_t seed, std::vector<std::size_t>* membership) {
  if (rows == 0 || dimension == 0) fail(ErrorCode::EmptyInput, "blob generator needs rows and a dimension");
  if (blobs == 0) fail(ErrorCode::InvalidConfig, "at least one blob");
  Rng rng(seed);
  std::vector<std::size_t> member(rows);
  for (auto& m : member) m = rng.below(blobs);
  auto out = blob_vectors(dimension, blobs, spread, member, rng);
  if (membership) *membership = std::move(member);
  return out;
}

std::vector<std::string> gen_cluster_labels(VectorView vectors, std::size_t num_clusters, std::uint64_t seed) {
  require_rows(vectors);
  if (num_clusters == 0) fail(ErrorCode::InvalidConfig, "num_clusters must be at least 1");
  const std::size_t n = vectors.rows();
  const std::size_t dim = vectors.dimension;
  const std::size_t k = std::min(num_clusters, n);
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<double> centroids(k * dim);
  for (std::size_t c = 0; c < k; ++c) {
    const auto row = vectors.row(order[c]);
    for (std::size_t d = 0; d < dim; ++d) centroids[c * dim + d] = row[d];
  }
  std::vector<std::size_t> assign(n, 0);
  auto assign_all = [&] {
    for (std::size_t r = 0; r < n; ++r) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_l2(vectors.row(r), std::span<const double>(centroids.data() + c * dim, dim));
        if (d < best) {
          best = d;
          assign[r] = c;
        }
      }
    }
  };
  for (std::size_t it = 0; it < kKMeansIterations; ++it) {
    assign_all();
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = vectors.row(r);
      ++counts[assign[r]];
      for (std::size_t d = 0; d < dim; ++d) sums[assign[r] * dim + d] += row[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) centroids[c * dim + d] = sums[c * dim + d] / static_cast<double>(counts[c]);
    }
  }
  assign_all();
  std::vector<std::string> labels(n);
  for (std::size_t r = 0; r < n; ++r) labels[r] = "c" + std::to_string(assign[r]);
  return labels;
}

std::vector<std::string> gen_hyperplane_labels(VectorView vectors, std::size_t num_planes, std::uint64_t seed) {
  if (num_planes == 0 || num_planes > 16) fail(ErrorCode::TooManyPlanes, "num_planes must lie in [1, 16]");
  require_rows(vectors);
  const std::size_t n = vectors.rows();
  const std::size_t dim = vectors.dimension;
  std::vector<double> centroid(dim, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = vectors.row(r);
    for (std::size_t d = 0; d < dim; ++d) centroid[d] += row[d];
  }
  for (auto& c : centroid) c /= static_cast<double>(n);
  Rng rng(seed);
  std::vector<double> normals(num_planes * dim);
  for (auto& x : normals) x = rng.normal();
  std::vector<std::string> labels(n, std::string(num_planes, '0'));
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = vectors.row(r);
    for (std::size_t p = 0; p < num_planes; ++p) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) s += normals[p * dim + d] * (static_cast<double>(row[d]) - centroid[d]);
      if (s >= 0.0) labels[r][p] = '1';
    }
  }
  return labels;
}

std::vector<double> gen_distance_sum(VectorView vectors, std::size_t num_refs, std::uint64_t seed) {
  require_rows(vectors);
  if (num_refs == 0) fail(ErrorCode::InvalidConfig, "num_refs must be at least 1");
  const std::size_t dim = vectors.dimension;
  const BoundingBox box = bounding_box(vectors);
  Rng rng(seed);
  std::vector<double> refs(num_refs * dim);
  for (std::size_t r = 0; r < num_refs; ++r) {
    for (std::size_t d = 0; d < dim; ++d) refs[r * dim + d] = rng.uniform(box.lo[d], box.hi[d]);
  }
  std::vector<double> out(vectors.rows(), 0.0);
  for (std::size_t i = 0; i < vectors.rows(); ++i) {
    for (std::size_t r = 0; r < num_refs; ++r) {
      out[i] += std::sqrt(squared_l2(vectors.row(i), std::span<const double>(refs.data() + r * dim, dim)));
    }
  }
  return out;
}

void SyntheticTableSpec::validate() const {
  if (rows == 0 || dimensions.empty()) fail(ErrorCode::EmptyInput, "synthetic table needs rows and vector columns");
  for (auto d : dimensions) {
    if (d == 0) fail(ErrorCode::ZeroDimension, "synthetic vector dimension");
  }
  if (blobs == 0) fail(ErrorCode::InvalidConfig, "at least one blob");
  if (planes > 16) fail(ErrorCode::TooManyPlanes, "num_planes must lie in [1, 16]");
  if (!(spread >= 0.0)) fail(ErrorCode::InvalidConfig, "spread must be non-negative");
}

Table gen_synthetic_table(const SyntheticTableSpec& spec) {
  spec.validate();
  const std::size_t n = spec.dimensions.size();
  TableSchema schema;
  for (std::size_t i = 0; i < n; ++i) schema.vector_columns.push_back({"v" + std::to_string(i), spec.dimensions[i], Metric::L2});
  Rng rng(spec.seed);
  std::vector<std::size_t> member(spec.rows);
  for (auto& m : member) m = rng.below(spec.blobs);
  std::vector<std::vector<float>> columns;
  for (std::size_t i = 0; i < n; ++i) {
    Rng col_rng(mix_seed(spec.seed, 1, i, 0));
    columns.push_back(blob_vectors(spec.dimensions[i], spec.blobs, spec.spread, member, col_rng));
  }
  const VectorView first{columns.front(), spec.dimensions.front()};
  const VectorView last{columns.back(), spec.dimensions.back()};

  std::vector<std::vector<ScalarValue>> scalars(spec.rows);
  auto add_categorical = [&](const std::string& name, const std::vector<std::string>& values) {
    schema.scalar_columns.push_back({name, ScalarKind::Categorical});
    for (std::size_t r = 0; r < spec.rows; ++r) scalars[r].emplace_back(values[r]);
  };
  auto add_numeric = [&](const std::string& name, const std::vector<double>& values) {
    schema.scalar_columns.push_back({name, ScalarKind::Numeric});
    for (std::size_t r = 0; r < spec.rows; ++r) scalars[r].emplace_back(values[r]);
  };
  if (spec.clusters > 0) add_categorical("cluster", gen_cluster_labels(first, spec.clusters, mix_seed(spec.seed, 2, 0, 0)));
  if (spec.planes > 0) add_categorical("region", gen_hyperplane_labels(last, spec.planes, mix_seed(spec.seed, 3, 0, 0)));
  if (spec.refs > 0) add_numeric("dsum", gen_distance_sum(first, spec.refs, mix_seed(spec.seed, 4, 0, 0)));
  if (spec.uniform_column) {
    Rng u(mix_seed(spec.seed, 5, 0, 0));
    std::vector<double> price(spec.rows);
    for (auto& p : price) p = u.uniform(0.0, 100.0);
    add_numeric("price", price);
  }

  Table table(schema);
  std::vector<Tuple> tuples(spec.rows);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    tuples[r].id = r;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t d = spec.dimensions[i];
      tuples[r].vectors.emplace_back(columns[i].begin() + static_cast<std::ptrdiff_t>(r * d),
                                     columns[i].begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    }
    tuples[r].scalars = std::move(scalars[r]);
  }
  table.insert_batch(tuples);
  table.take_pending_updates();
  return table;
}

std::string_view to_string(WeightMode mode) {
  switch (mode) {
    case WeightMode::Uniform: return "uniform";
    case WeightMode::Skewed: return "skewed";
    case WeightMode::Mixed: return "mixed";
  }
  return "?";
}

WeightMode parse_weight_mode(std::string_view text) {
  if (text == "uniform") return WeightMode::Uniform;
  if (text == "skewed") return WeightMode::Skewed;
  if (text == "mixed") return WeightMode::Mixed;
  fail(ErrorCode::ParseError, "unknown weight mode '" + std::string(text) + "'");
}

void WorkloadSpec::validate() const {
  if (num_queries == 0 || k == 0) fail(ErrorCode::InvalidConfig, "workload needs queries and k >= 1");
  if (strata == 0 || stratum_cap == 0) fail(ErrorCode::InvalidConfig, "strata and stratum cap must be at least 1");
  if (min_predicates > max_predicates) fail(ErrorCode::InvalidConfig, "min_predicates > max_predicates");
  if (retries_per_slot == 0) fail(ErrorCode::InvalidConfig, "retries_per_slot must be at least 1");
  if (local_rate_strata > 0 && local_rate_cap == 0) fail(ErrorCode::InvalidConfig, "local-rate cap must be at least 1");
  if (target_recalls.empty()) fail(ErrorCode::InvalidConfig, "at least one target recall");
  for (double r : target_recalls) {
    if (!(r > 0.0 && r <= 1.0)) fail(ErrorCode::InvalidConfig, "target recall must lie in (0, 1]");
  }
  for (const auto& [lo, hi] : selectivity_ranges) {
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) fail(ErrorCode::InvalidConfig, "selectivity range outside [0, 1]");
  }
  if (!(skew_fraction >= 0.0 && skew_fraction <= 1.0)) fail(ErrorCode::InvalidConfig, "skew_fraction outside [0, 1]");
}

std::size_t WorkloadSpec::stratum_of(double selectivity) const {
  const auto s = static_cast<std::size_t>(std::floor(std::clamp(selectivity, 0.0, 1.0) * static_cast<double>(strata)));
  return std::min(s, strata - 1);
}

bool WorkloadSpec::accepts(double selectivity) const {
  if (selectivity_ranges.empty()) return true;
  return std::any_of(selectivity_ranges.begin(), selectivity_ranges.end(),
                     [&](const auto& r) { return selectivity >= r.first && selectivity <= r.second; });
}

double exact_selectivity(const Table& table, std::span<const Predicate> predicates) {
  if (table.empty()) return 0.0;
  const RowFilter filter(table, predicates);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < table.row_count(); ++r) hits += filter.matches(r);
  return static_cast<double>(hits) / static_cast<double>(table.row_count());
}

Workload gen_queries(const Table& table, const StatsCatalog& stats, const WorkloadSpec& spec) {
  return gen_queries(table, stats, spec, {}, ProbeConfig{});
}

Workload gen_queries(const Table& table, const StatsCatalog& stats, const WorkloadSpec& spec,
                     std::span<const GraphIndex* const> indexes, const ProbeConfig& probe) {
  spec.validate();
  const bool local = spec.local_rate_strata > 0;
  if (local && indexes.size() != table.schema().vector_columns.size()) {
    fail(ErrorCode::IndexMissing, "local-rate stratification needs one index per vector column");
  }
  if (local && spec.local_rate_strata * spec.local_rate_cap < spec.num_queries) {
    fail(ErrorCode::StratumInfeasible, "local-rate strata capacity is below the requested queries");
  }
  if (table.empty()) fail(ErrorCode::EmptyTable, "cannot generate queries over an empty table");
  const auto& schema = table.schema();
  const std::size_t n = schema.vector_columns.size();
  const std::size_t m = schema.scalar_columns.size();

  // Strata that can hold an accepted selectivity.
  std::vector<bool> usable(spec.strata, spec.selectivity_ranges.empty());
  for (const auto& [lo, hi] : spec.selectivity_ranges) {
    for (std::size_t s = spec.stratum_of(lo); s <= spec.stratum_of(hi); ++s) usable[s] = true;
  }
  const auto usable_count = static_cast<std::size_t>(std::count(usable.begin(), usable.end(), true));
  if (usable_count * spec.stratum_cap < spec.num_queries) {
    fail(ErrorCode::StratumInfeasible, "strata capacity " + std::to_string(usable_count * spec.stratum_cap) +
                                           " is below the requested " + std::to_string(spec.num_queries) + " queries");
  }

  std::vector<BoundingBox> boxes;
  for (std::size_t i = 0; i < n; ++i) boxes.push_back(bounding_box(column_view(table, i)));

  Rng rng(spec.seed);
  Workload out;
  out.occupancy.assign(spec.strata, 0);
  if (local) out.local_occupancy.assign(spec.local_rate_strata, 0);
  const std::size_t budget = spec.retries_per_slot * spec.num_queries;
  const std::size_t max_preds = std::min(spec.max_predicates, m);
  const std::size_t min_preds = std::min(spec.min_predicates, max_preds);

  while (out.queries.size() < spec.num_queries) {
    if (out.attempts >= budget) {
      std::ostringstream msg;
      msg << "retry budget exhausted after " << out.attempts << " attempts with " << out.queries.size() << " of "
          << spec.num_queries << " queries; unfilled strata:";
      for (std::size_t s = 0; s < spec.strata; ++s) {
        if (usable[s] && out.occupancy[s] < spec.stratum_cap) msg << ' ' << s;
      }
      if (local) {
        msg << "; unfilled local-rate strata:";
        for (std::size_t s = 0; s < spec.local_rate_strata; ++s) {
          if (out.local_occupancy[s] < spec.local_rate_cap) msg << ' ' << s;
        }
      }
      fail(ErrorCode::StratumInfeasible, msg.str());
    }
    ++out.attempts;

    HybridQuery q;
    q.k = spec.k;
    q.target_recall = spec.target_recalls[rng.below(spec.target_recalls.size())];
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(boxes[i].lo.size());
      for (std::size_t d = 0; d < v.size(); ++d) v[d] = static_cast<float>(rng.uniform(boxes[i].lo[d], boxes[i].hi[d]));
      q.query_vectors.push_back(std::move(v));
    }
    q.weights = draw_weights(n, spec.weight_mode, spec.skew_fraction, rng);

    std::vector<std::size_t> cols(m);
    std::iota(cols.begin(), cols.end(), 0);
    rng.shuffle(std::span<std::size_t>(cols));
    const std::size_t count = min_preds + (max_preds > min_preds ? rng.below(max_preds - min_preds + 1) : 0);
    std::sort(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(count));
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t col = cols[c];
      const auto& name = schema.scalar_columns[col].name;
      if (schema.scalar_columns[col].kind == ScalarKind::Categorical) {
        const auto& dict = table.dictionary(col);
        if (dict.empty()) continue;
        q.predicates.push_back(Predicate::eq(name, dict[rng.below(dict.size())]));
        continue;
      }
      const Histogram& h = stats.at(name);
      const double a = rng.uniform(h.min(), h.max());
      static constexpr CompareOp kRangeOps[] = {CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge,
                                                CompareOp::Between};
      const CompareOp op = kRangeOps[rng.below(std::size(kRangeOps))];
      if (op == CompareOp::Between) {
        const double b = rng.uniform(h.min(), h.max());
        q.predicates.push_back(Predicate::between(name, std::min(a, b), std::max(a, b)));
      } else {
        q.predicates.push_back(Predicate::cmp(name, op, a));
      }
    }

    const double sel = exact_selectivity(table, q.predicates);
    if (!spec.accepts(sel)) continue;
    const std::size_t stratum = spec.stratum_of(sel);
    if (out.occupancy[stratum] >= spec.stratum_cap) continue;
    WorkloadQuery wq;
    wq.query = std::move(q);
    wq.selectivity = sel;
    wq.stratum = stratum;
    if (local) {
      const ProbeResult pr = preprobe(table, indexes, wq.query, probe);
      double total = 0.0;
      double rate = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        rate += wq.query.weights[i] * pr.local_rate[i];
        total += wq.query.weights[i];
      }
      rate = total > 0.0 ? rate / total : 0.0;
      const auto ls = std::min(spec.local_rate_strata - 1,
                               static_cast<std::size_t>(rate * static_cast<double>(spec.local_rate_strata)));
      if (out.local_occupancy[ls] >= spec.local_rate_cap) continue;
      ++out.local_occupancy[ls];
      wq.local_rate = rate;
      wq.local_stratum = ls;
    }
    ++out.occupancy[stratum];
    out.queries.push_back(std::move(wq));
  }
  return out;
}

GroundTruth gen_ground_truth(const Table& table, std::span<const HybridQuery> queries) {
  GroundTruth out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(exec_sequential(table, q).results);
  return out;
}

GroundTruth gen_ground_truth(const Table& table, std::span<const WorkloadQuery> workload) {
  GroundTruth out;
  out.reserve(workload.size());
  for (const auto& w : workload) out.push_back(exec_sequential(table, w.query).results);
  return out;
}

void write_workload(const std::filesystem::path& path, const TableSchema& schema, std::span<const WorkloadQuery> workload) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i = 0; i < workload.size(); ++i) {
    const auto& w = workload[i];
    json preds = json::array();
    for (const auto& p : w.query.predicates) {
      json jp{{"column", p.column}, {"op", op_name(p.op)}, {"value", value_to_json(p.operand)}};
      if (p.op == CompareOp::Between) jp["upper"] = value_to_json(p.upper);
      preds.push_back(std::move(jp));
    }
    const json line{{"query", i},
                    {"k", w.query.k},
                    {"target_recall", w.query.target_recall},
                    {"weights", w.query.weights},
                    {"predicates", preds},
                    {"selectivity", w.selectivity},
                    {"stratum", w.stratum}};
    json full = line;
    if (w.local_rate) {
      full["local_rate"] = *w.local_rate;
      full["local_stratum"] = w.local_stratum;
    }
    out << full.dump() << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
  for (std::size_t c = 0; c < schema.vector_columns.size(); ++c) {
    const std::size_t dim = schema.vector_columns[c].dimension;
    std::vector<float> values;
    values.reserve(workload.size() * dim);
    for (const auto& w : workload) values.insert(values.end(), w.query.query_vectors[c].begin(), w.query.query_vectors[c].end());
    write_fvecs(sidecar_path(path, schema.vector_columns[c].name), dim, values);
  }
}

std::vector<WorkloadQuery> read_workload(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::vector<WorkloadQuery> out;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const json j = json::parse(line);
      WorkloadQuery w;
      w.query.k = j.at("k").get<std::size_t>();
      w.query.target_recall = j.at("target_recall").get<double>();
      w.query.weights = j.at("weights").get<std::vector<double>>();
      for (const auto& jp : j.at("predicates")) {
        Predicate p;
        p.column = jp.at("column").get<std::string>();
        p.op = parse_op(jp.at("op").get<std::string>());
        p.operand = value_from_json(jp.at("value"));
        if (jp.contains("upper")) p.upper = value_from_json(jp.at("upper"));
        w.query.predicates.push_back(std::move(p));
      }
      w.selectivity = j.value("selectivity", 0.0);
      w.stratum = j.value("stratum", std::size_t{0});
      if (j.contains("local_rate")) {
        w.local_rate = j.at("local_rate").get<double>();
        w.local_stratum = j.value("local_stratum", std::size_t{0});
      }
      if (j.contains("vectors")) w.query.query_vectors = j.at("vectors").get<std::vector<std::vector<float>>>();
      out.push_back(std::move(w));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, "malformed workload line: " + std::string(e.what()));
  }
  for (std::size_t c = 0; c < schema.vector_columns.size(); ++c) {
    const auto side = sidecar_path(path, schema.vector_columns[c].name);
    if (!std::filesystem::exists(side)) {
      if (std::all_of(out.begin(), out.end(), [](const auto& w) { return !w.query.query_vectors.empty(); })) continue;
      fail(ErrorCode::IoError, "missing vector sidecar " + side.string());
    }
    const VectorFile vf = read_fvecs(side);
    if (vf.rows() != out.size() || vf.dimension != schema.vector_columns[c].dimension) {
      fail(ErrorCode::FormatError, "vector sidecar " + side.string() + " does not match the workload");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto& qv = out[i].query.query_vectors;
      if (qv.size() < schema.vector_columns.size()) qv.resize(schema.vector_columns.size());
      const auto row = vf.row(i);
      qv[c].assign(row.begin(), row.end());
    }
  }
  for (const auto& w : out) w.query.validate(schema);
  return out;
}

void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "query,rank,id,score\n";
  for (std::size_t q = 0; q < truth.size(); ++q) {
    for (std::size_t r = 0; r < truth[q].size(); ++r) {
      out << q << ',' << r << ',' << truth[q][r].id << ',' << format_double(truth[q][r].distance) << '\n';
    }
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

GroundTruth read_ground_truth(const std::filesystem::path& path, std::size_t num_queries) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  GroundTruth out(num_queries);
  std::string line;
  std::getline(in, line);
  if (trim(line) != "query,rank,id,score") fail(ErrorCode::FormatError, "unexpected ground-truth header");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) fail(ErrorCode::FormatError, "ground-truth rows have four fields");
    const auto q = parse_u64(f[0]);
    const auto rank = parse_u64(f[1]);
    if (q >= num_queries) fail(ErrorCode::MisalignedGroundTruth, "ground truth names query " + f[0]);
    if (rank != out[q].size()) fail(ErrorCode::FormatError, "ground-truth ranks must be consecutive");
    out[q].push_back({parse_u64(f[2]), parse_double(f[3])});
  }
  return out;
}

}  // namespace hyq
