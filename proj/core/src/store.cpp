#include "hyq/store.hpp"

#include <cmath>
#include <set>

#include "hyq/error.hpp"

namespace hyq {

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
    case CompareOp::Between: return "BETWEEN";
  }
  return "?";
}

void TableSchema::validate() const {
  if (vector_columns.empty() || scalar_columns.empty()) {
    fail(ErrorCode::InvalidSchema, "schema needs at least one vector column and one scalar column");
  }
  std::set<std::string> names;
  auto claim = [&](const std::string& name) {
    if (name.empty()) fail(ErrorCode::InvalidSchema, "empty column name");
    if (name == "id") fail(ErrorCode::DuplicateColumnName, "column name 'id' is reserved");
    if (!names.insert(name).second) fail(ErrorCode::DuplicateColumnName, name);
  };
  for (const auto& c : vector_columns) {
    claim(c.name);
    if (c.dimension == 0) fail(ErrorCode::ZeroDimension, c.name);
  }
  for (const auto& c : scalar_columns) claim(c.name);
}

std::optional<std::size_t> TableSchema::find_vector_column(std::string_view name) const {
  for (std::size_t i = 0; i < vector_columns.size(); ++i) {
    if (vector_columns[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> TableSchema::find_scalar_column(std::string_view name) const {
  for (std::size_t i = 0; i < scalar_columns.size(); ++i) {
    if (scalar_columns[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t TableSchema::scalar_column_index(std::string_view name) const {
  auto idx = find_scalar_column(name);
  if (!idx) fail(ErrorCode::UnknownColumn, std::string(name));
  return *idx;
}

Predicate Predicate::eq(std::string column, ScalarValue value) {
  return Predicate{std::move(column), CompareOp::Eq, std::move(value), 0.0};
}

Predicate Predicate::cmp(std::string column, CompareOp op, double value) {
  return Predicate{std::move(column), op, value, 0.0};
}

Predicate Predicate::between(std::string column, double low, double high) {
  return Predicate{std::move(column), CompareOp::Between, low, high};
}

namespace {

void check_predicate(const TableSchema& schema, const Predicate& p) {
  const std::size_t col = schema.scalar_column_index(p.column);
  const ScalarKind kind = schema.scalar_columns[col].kind;
  if (kind == ScalarKind::Categorical) {
    if (p.op != CompareOp::Eq) {
      fail(ErrorCode::KindMismatch, "only equality is defined on categorical column " + p.column);
    }
    if (!std::holds_alternative<std::string>(p.operand)) {
      fail(ErrorCode::KindMismatch, "categorical column " + p.column + " needs a string operand");
    }
    return;
  }
  if (!std::holds_alternative<double>(p.operand)) {
    fail(ErrorCode::KindMismatch, "numeric column " + p.column + " needs a numeric operand");
  }
  if (p.op == CompareOp::Between) {
    if (!std::holds_alternative<double>(p.upper)) {
      fail(ErrorCode::KindMismatch, "numeric column " + p.column + " needs a numeric upper bound");
    }
    if (std::get<double>(p.operand) > std::get<double>(p.upper)) {
      fail(ErrorCode::InvalidQuery, "BETWEEN with low > high on " + p.column);
    }
  }
}

bool numeric_matches(CompareOp op, double x, double a, double b) {
  switch (op) {
    case CompareOp::Eq: return x == a;
    case CompareOp::Lt: return x < a;
    case CompareOp::Le: return x <= a;
    case CompareOp::Gt: return x > a;
    case CompareOp::Ge: return x >= a;
    case CompareOp::Between: return a <= x && x <= b;
  }
  return false;
}

}  // namespace

void HybridQuery::validate(const TableSchema& schema) const {
  const std::size_t n = schema.vector_columns.size();
  if (query_vectors.size() != n) fail(ErrorCode::InvalidQuery, "expected one query vector per vector column");
  if (weights.size() != n) fail(ErrorCode::InvalidQuery, "expected one weight per vector column");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (query_vectors[i].size() != schema.vector_columns[i].dimension) {
      fail(ErrorCode::DimensionMismatch, "query vector for " + schema.vector_columns[i].name);
    }
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) fail(ErrorCode::InvalidQuery, "weights must be >= 0");
    sum += weights[i];
  }
  if (!(sum > 0.0)) fail(ErrorCode::InvalidQuery, "weights must sum to a positive value");
  if (k == 0) fail(ErrorCode::InvalidQuery, "k must be positive");
  if (!(target_recall > 0.0 && target_recall <= 1.0)) fail(ErrorCode::InvalidQuery, "target_recall must be in (0,1]");
  for (const auto& p : predicates) check_predicate(schema, p);
}

double distance(Metric metric, std::span<const float> a, std::span<const float> b) {
  const std::size_t n = a.size();
  if (metric == Metric::L2) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return -dot;
}

bool evaluate_predicates(const TableSchema& schema, const Tuple& tuple, std::span<const Predicate> predicates) {
  for (const auto& p : predicates) {
    check_predicate(schema, p);
    const std::size_t col = schema.scalar_column_index(p.column);
    const ScalarValue& v = tuple.scalars.at(col);
    if (schema.scalar_columns[col].kind == ScalarKind::Categorical) {
      if (std::get<std::string>(v) != std::get<std::string>(p.operand)) return false;
    } else {
      const double hi = p.op == CompareOp::Between ? std::get<double>(p.upper) : 0.0;
      if (!numeric_matches(p.op, std::get<double>(v), std::get<double>(p.operand), hi)) return false;
    }
  }
  return true;
}

double composite_distance(const TableSchema& schema, const Tuple& tuple, const HybridQuery& query) {
  const std::size_t n = schema.vector_columns.size();
  if (query.query_vectors.size() != n || tuple.vectors.size() != n || query.weights.size() != n) {
    fail(ErrorCode::DimensionMismatch, "query/tuple do not match schema");
  }
  double score = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& spec = schema.vector_columns[i];
    if (query.query_vectors[i].size() != spec.dimension || tuple.vectors[i].size() != spec.dimension) {
      fail(ErrorCode::DimensionMismatch, spec.name);
    }
    if (query.weights[i] == 0.0) continue;
    score += query.weights[i] * distance(spec.metric, query.query_vectors[i], tuple.vectors[i]);
  }
  return score;
}

Table::Table(TableSchema schema) : schema_(std::move(schema)) {
  schema_.validate();
  vectors_.resize(schema_.vector_columns.size());
  scalars_.resize(schema_.scalar_columns.size());
}

void Table::check_tuple(const Tuple& t) const {
  if (t.vectors.size() != schema_.vector_columns.size()) {
    fail(ErrorCode::DimensionMismatch, "tuple " + std::to_string(t.id) + " has wrong number of vectors");
  }
  for (std::size_t i = 0; i < t.vectors.size(); ++i) {
    if (t.vectors[i].size() != schema_.vector_columns[i].dimension) {
      fail(ErrorCode::DimensionMismatch, "tuple " + std::to_string(t.id) + " column " + schema_.vector_columns[i].name +
                                             ": got " + std::to_string(t.vectors[i].size()) + ", expected " +
                                             std::to_string(schema_.vector_columns[i].dimension));
    }
  }
  if (t.scalars.size() != schema_.scalar_columns.size()) {
    fail(ErrorCode::KindMismatch, "tuple " + std::to_string(t.id) + " has wrong number of scalars");
  }
  for (std::size_t j = 0; j < t.scalars.size(); ++j) {
    const bool is_text = std::holds_alternative<std::string>(t.scalars[j]);
    const bool want_text = schema_.scalar_columns[j].kind == ScalarKind::Categorical;
    if (is_text != want_text) fail(ErrorCode::KindMismatch, "column " + schema_.scalar_columns[j].name);
  }
}

void Table::append(const Tuple& t) {
  const std::size_t row = ids_.size();
  if (t.id != row) dense_ids_ = false;
  ids_.push_back(t.id);
  row_by_id_.emplace(t.id, row);
  for (std::size_t i = 0; i < t.vectors.size(); ++i) {
    vectors_[i].insert(vectors_[i].end(), t.vectors[i].begin(), t.vectors[i].end());
  }
  for (std::size_t j = 0; j < t.scalars.size(); ++j) {
    auto& col = scalars_[j];
    if (schema_.scalar_columns[j].kind == ScalarKind::Numeric) {
      col.numeric.push_back(std::get<double>(t.scalars[j]));
    } else {
      const auto& s = std::get<std::string>(t.scalars[j]);
      auto [it, inserted] = col.lookup.emplace(s, static_cast<std::int32_t>(col.dictionary.size()));
      if (inserted) col.dictionary.push_back(s);
      col.codes.push_back(it->second);
    }
  }
  pending_.push_back(t.id);
}

std::size_t Table::insert_batch(std::span<const Tuple> tuples) {
  std::set<TupleId> batch_ids;
  for (const auto& t : tuples) {
    check_tuple(t);
    if (row_by_id_.count(t.id) || !batch_ids.insert(t.id).second) {
      fail(ErrorCode::DuplicateId, std::to_string(t.id));
    }
  }
  for (const auto& t : tuples) append(t);
  return tuples.size();
}

std::optional<std::size_t> Table::row_of(TupleId id) const {
  if (dense_ids_) {
    if (id < ids_.size()) return static_cast<std::size_t>(id);
    return std::nullopt;
  }
  auto it = row_by_id_.find(id);
  if (it == row_by_id_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Table::lookup_category(std::size_t scalar_column, const std::string& value) const {
  const auto& lookup = scalars_[scalar_column].lookup;
  auto it = lookup.find(value);
  return it == lookup.end() ? -1 : it->second;
}

ScalarValue Table::scalar(std::size_t scalar_column, std::size_t row) const {
  if (schema_.scalar_columns[scalar_column].kind == ScalarKind::Numeric) {
    return scalars_[scalar_column].numeric[row];
  }
  const auto& col = scalars_[scalar_column];
  return col.dictionary[static_cast<std::size_t>(col.codes[row])];
}

Tuple Table::tuple_at(std::size_t row) const {
  Tuple t;
  t.id = ids_[row];
  for (std::size_t i = 0; i < vectors_.size(); ++i) {
    auto v = vector(i, row);
    t.vectors.emplace_back(v.begin(), v.end());
  }
  for (std::size_t j = 0; j < scalars_.size(); ++j) t.scalars.push_back(scalar(j, row));
  return t;
}

double Table::composite_distance(std::size_t row, const HybridQuery& query) const {
  double score = 0.0;
  for (std::size_t i = 0; i < vectors_.size(); ++i) {
    if (query.weights[i] == 0.0) continue;
    score += query.weights[i] * distance(schema_.vector_columns[i].metric, query.query_vectors[i], vector(i, row));
  }
  return score;
}

std::vector<TupleId> Table::take_pending_updates() {
  std::vector<TupleId> out;
  out.swap(pending_);
  return out;
}

RowFilter::RowFilter(const Table& table, std::span<const Predicate> predicates) : table_(&table) {
  const auto& schema = table.schema();
  for (const auto& p : predicates) {
    check_predicate(schema, p);
    Term term{};
    term.column = schema.scalar_column_index(p.column);
    term.op = p.op;
    term.categorical = schema.scalar_columns[term.column].kind == ScalarKind::Categorical;
    if (term.categorical) {
      term.code = table.lookup_category(term.column, std::get<std::string>(p.operand));
      if (term.code < 0) never_ = true;
    } else {
      term.low = std::get<double>(p.operand);
      term.high = p.op == CompareOp::Between ? std::get<double>(p.upper) : term.low;
    }
    terms_.push_back(term);
  }
}

bool RowFilter::matches(std::size_t row) const {
  if (never_) return false;
  for (const auto& t : terms_) {
    if (t.categorical) {
      if (table_->category_code(t.column, row) != t.code) return false;
    } else if (!numeric_matches(t.op, table_->numeric(t.column, row), t.low, t.high)) {
      return false;
    }
  }
  return true;
}

bool RowFilter::matches_id(TupleId id) const {
  auto row = table_->row_of(id);
  return row && matches(*row);
}

TableHandle Catalog::create_table(TableSchema schema) {
  tables_.emplace_back(std::move(schema));
  return TableHandle{static_cast<std::uint32_t>(tables_.size() - 1)};
}

Table& Catalog::table(TableHandle handle) {
  if (handle.value >= tables_.size()) fail(ErrorCode::UnknownTable, std::to_string(handle.value));
  return tables_[handle.value];
}

const Table& Catalog::table(TableHandle handle) const {
  if (handle.value >= tables_.size()) fail(ErrorCode::UnknownTable, std::to_string(handle.value));
  return tables_[handle.value];
}

}  // namespace hyq
