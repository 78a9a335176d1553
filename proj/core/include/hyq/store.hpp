#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace hyq {

using TupleId = std::uint64_t;

enum class Metric : std::uint8_t { L2, InnerProduct };
enum class ScalarKind : std::uint8_t { Numeric, Categorical };

struct VectorColumnSpec {
  std::string name;
  std::size_t dimension = 0;
  Metric metric = Metric::L2;

  bool operator==(const VectorColumnSpec&) const = default;
};

struct ScalarColumnSpec {
  std::string name;
  ScalarKind kind = ScalarKind::Numeric;

  bool operator==(const ScalarColumnSpec&) const = default;
};

struct TableSchema {
  std::vector<VectorColumnSpec> vector_columns;
  std::vector<ScalarColumnSpec> scalar_columns;

  // Throws DuplicateColumnName, ZeroDimension or InvalidSchema.
  void validate() const;

  std::optional<std::size_t> find_vector_column(std::string_view name) const;
  std::optional<std::size_t> find_scalar_column(std::string_view name) const;
  std::size_t scalar_column_index(std::string_view name) const;  // throws UnknownColumn

  bool operator==(const TableSchema&) const = default;
};

// Numeric values are doubles; categorical values are dictionary strings.
using ScalarValue = std::variant<double, std::string>;

struct Tuple {
  TupleId id = 0;
  std::vector<std::vector<float>> vectors;
  std::vector<ScalarValue> scalars;
};

enum class CompareOp : std::uint8_t { Eq, Lt, Le, Gt, Ge, Between };
inline constexpr std::size_t kCompareOpCount = 6;

std::string_view to_string(CompareOp op);

struct Predicate {
  std::string column;
  CompareOp op = CompareOp::Eq;
  ScalarValue operand = 0.0;
  ScalarValue upper = 0.0;  // only meaningful for Between: operand <= x <= upper

  static Predicate eq(std::string column, ScalarValue value);
  static Predicate cmp(std::string column, CompareOp op, double value);
  static Predicate between(std::string column, double low, double high);

  bool operator==(const Predicate&) const = default;
};

// A weighted multi-vector hybrid query: conjunctive predicates plus one
// query vector and weight per vector column, ranked by ascending
// sum_i weights[i] * dist_i(query_vectors[i], v_i).
struct HybridQuery {
  std::vector<Predicate> predicates;
  std::vector<std::vector<float>> query_vectors;
  std::vector<double> weights;
  std::size_t k = 10;
  double target_recall = 0.9;

  // Throws InvalidQuery / DimensionMismatch / UnknownColumn.
  void validate(const TableSchema& schema) const;
};

// Distance under a column metric; smaller is better. InnerProduct is the
// negated dot product.
double distance(Metric metric, std::span<const float> a, std::span<const float> b);

bool evaluate_predicates(const TableSchema& schema, const Tuple& tuple, std::span<const Predicate> predicates);
double composite_distance(const TableSchema& schema, const Tuple& tuple, const HybridQuery& query);

class Table {
 public:
  explicit Table(TableSchema schema);

  const TableSchema& schema() const noexcept { return schema_; }
  std::size_t row_count() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  // All-or-nothing: validates the whole batch before touching storage.
  std::size_t insert_batch(std::span<const Tuple> tuples);

  TupleId id_at(std::size_t row) const { return ids_[row]; }
  const std::vector<TupleId>& ids() const noexcept { return ids_; }
  std::optional<std::size_t> row_of(TupleId id) const;

  std::span<const float> vector(std::size_t column, std::size_t row) const {
    const std::size_t dim = schema_.vector_columns[column].dimension;
    return {vectors_[column].data() + row * dim, dim};
  }
  const std::vector<float>& vector_column(std::size_t column) const { return vectors_[column]; }

  double numeric(std::size_t scalar_column, std::size_t row) const { return scalars_[scalar_column].numeric[row]; }
  std::int32_t category_code(std::size_t scalar_column, std::size_t row) const {
    return scalars_[scalar_column].codes[row];
  }
  // -1 when the category never occurred.
  std::int32_t lookup_category(std::size_t scalar_column, const std::string& value) const;
  const std::vector<std::string>& dictionary(std::size_t scalar_column) const {
    return scalars_[scalar_column].dictionary;
  }
  ScalarValue scalar(std::size_t scalar_column, std::size_t row) const;
  Tuple tuple_at(std::size_t row) const;

  double composite_distance(std::size_t row, const HybridQuery& query) const;

  // Ids inserted since the last take; consumed by incremental encoder updates.
  const std::vector<TupleId>& pending_updates() const noexcept { return pending_; }
  std::vector<TupleId> take_pending_updates();

  void save(const std::filesystem::path& path) const;
  static Table load(const std::filesystem::path& path);

 private:
  struct ScalarColumnData {
    std::vector<double> numeric;
    std::vector<std::int32_t> codes;
    std::vector<std::string> dictionary;
    std::unordered_map<std::string, std::int32_t> lookup;
  };

  void check_tuple(const Tuple& t) const;
  void append(const Tuple& t);

  TableSchema schema_;
  std::vector<TupleId> ids_;
  std::unordered_map<TupleId, std::size_t> row_by_id_;
  bool dense_ids_ = true;  // ids_[r] == r for all rows
  std::vector<std::vector<float>> vectors_;
  std::vector<ScalarColumnData> scalars_;
  std::vector<TupleId> pending_;
};

// Predicates resolved against a table's column indexes and dictionaries.
class RowFilter {
 public:
  RowFilter(const Table& table, std::span<const Predicate> predicates);

  bool matches(std::size_t row) const;
  bool matches_id(TupleId id) const;
  bool empty() const noexcept { return terms_.empty(); }
  std::size_t term_count() const noexcept { return terms_.size(); }

 private:
  struct Term {
    std::size_t column;
    bool categorical;
    CompareOp op;
    double low;
    double high;
    std::int32_t code;
  };

  const Table* table_;
  std::vector<Term> terms_;
  bool never_ = false;
};

struct TableHandle {
  std::uint32_t value = 0;
  bool operator==(const TableHandle&) const = default;
};

class Catalog {
 public:
  TableHandle create_table(TableSchema schema);
  Table& table(TableHandle handle);
  const Table& table(TableHandle handle) const;
  std::size_t size() const noexcept { return tables_.size(); }

 private:
  std::vector<Table> tables_;
};

// fvecs: per record a 4-byte little-endian dimension followed by that many
// little-endian float32 values.
struct VectorFile {
  std::size_t dimension = 0;
  std::vector<float> values;  // row-major

  std::size_t rows() const { return dimension == 0 ? 0 : values.size() / dimension; }
  std::span<const float> row(std::size_t r) const { return {values.data() + r * dimension, dimension}; }
};

VectorFile read_fvecs(const std::filesystem::path& path);
void write_fvecs(const std::filesystem::path& path, std::size_t dimension, std::span<const float> values);

// CSV with a header row whose first column is `id`; remaining header names
// must match the schema's scalar columns (any order).
struct ScalarRow {
  TupleId id = 0;
  std::vector<ScalarValue> scalars;  // schema order
};
std::vector<ScalarRow> read_scalar_csv(const std::filesystem::path& path, const TableSchema& schema);
void write_scalar_csv(const std::filesystem::path& path, const Table& table);

// Zips per-column vector files with the scalar CSV (row i of every file is
// the same tuple).
std::vector<Tuple> assemble_tuples(const TableSchema& schema, std::span<const VectorFile> vectors,
                                   std::span<const ScalarRow> scalars);

}  // namespace hyq
