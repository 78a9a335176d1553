#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include "hyq/binary_io.hpp"
#include "hyq/error.hpp"
#include "hyq/store.hpp"
#include "hyq/text_util.hpp"

namespace hyq {

namespace {
constexpr std::string_view kTableMagic = "HYQTBL";
constexpr std::uint32_t kTableVersion = 1;
}  // namespace

void Table::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.magic(kTableMagic);
  w.u32(kTableVersion);
  w.u32(static_cast<std::uint32_t>(schema_.vector_columns.size()));
  for (const auto& c : schema_.vector_columns) {
    w.str(c.name);
    w.u64(c.dimension);
    w.u8(static_cast<std::uint8_t>(c.metric));
  }
  w.u32(static_cast<std::uint32_t>(schema_.scalar_columns.size()));
  for (const auto& c : schema_.scalar_columns) {
    w.str(c.name);
    w.u8(static_cast<std::uint8_t>(c.kind));
  }
  w.u64s(ids_);
  for (const auto& col : vectors_) w.f32s(col);
  for (std::size_t j = 0; j < scalars_.size(); ++j) {
    const auto& col = scalars_[j];
    if (schema_.scalar_columns[j].kind == ScalarKind::Numeric) {
      w.f64s(col.numeric);
    } else {
      w.u64(col.dictionary.size());
      for (const auto& s : col.dictionary) w.str(s);
      w.u64(col.codes.size());
      for (auto c : col.codes) w.u32(static_cast<std::uint32_t>(c));
    }
  }
  w.u64s(pending_);
  w.close();
}

Table Table::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kTableMagic);
  if (r.u32() != kTableVersion) fail(ErrorCode::FormatError, "unsupported table version");
  TableSchema schema;
  const std::uint32_t nv = r.u32();
  for (std::uint32_t i = 0; i < nv; ++i) {
    VectorColumnSpec c;
    c.name = r.str();
    c.dimension = r.u64();
    c.metric = static_cast<Metric>(r.u8());
    schema.vector_columns.push_back(std::move(c));
  }
  const std::uint32_t ns = r.u32();
  for (std::uint32_t j = 0; j < ns; ++j) {
    ScalarColumnSpec c;
    c.name = r.str();
    c.kind = static_cast<ScalarKind>(r.u8());
    schema.scalar_columns.push_back(std::move(c));
  }
  Table t(std::move(schema));
  t.ids_ = r.u64s();
  const std::size_t rows = t.ids_.size();
  for (std::size_t row = 0; row < rows; ++row) {
    if (t.ids_[row] != row) t.dense_ids_ = false;
    t.row_by_id_.emplace(t.ids_[row], row);
  }
  for (std::size_t i = 0; i < nv; ++i) {
    t.vectors_[i] = r.f32s();
    if (t.vectors_[i].size() != rows * t.schema_.vector_columns[i].dimension) {
      fail(ErrorCode::FormatError, "vector column size mismatch");
    }
  }
  for (std::size_t j = 0; j < ns; ++j) {
    auto& col = t.scalars_[j];
    if (t.schema_.scalar_columns[j].kind == ScalarKind::Numeric) {
      col.numeric = r.f64s();
      if (col.numeric.size() != rows) fail(ErrorCode::FormatError, "scalar column size mismatch");
    } else {
      const std::uint64_t nd = r.u64();
      for (std::uint64_t d = 0; d < nd; ++d) {
        col.dictionary.push_back(r.str());
        col.lookup.emplace(col.dictionary.back(), static_cast<std::int32_t>(d));
      }
      const std::uint64_t nc = r.u64();
      if (nc != rows) fail(ErrorCode::FormatError, "scalar column size mismatch");
      col.codes.resize(nc);
      for (auto& c : col.codes) {
        c = static_cast<std::int32_t>(r.u32());
        if (c < 0 || static_cast<std::uint64_t>(c) >= nd) fail(ErrorCode::FormatError, "category code out of range");
      }
    }
  }
  t.pending_ = r.u64s();
  return t;
}

VectorFile read_fvecs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  VectorFile file;
  unsigned char header[4];
  while (in.read(reinterpret_cast<char*>(header), 4)) {
    const std::uint32_t dim = static_cast<std::uint32_t>(header[0]) | (static_cast<std::uint32_t>(header[1]) << 8) |
                              (static_cast<std::uint32_t>(header[2]) << 16) |
                              (static_cast<std::uint32_t>(header[3]) << 24);
    if (dim == 0) fail(ErrorCode::FormatError, "zero-dimension record in " + path.string());
    if (file.dimension == 0) file.dimension = dim;
    if (dim != file.dimension) fail(ErrorCode::FormatError, "inconsistent record dimension in " + path.string());
    std::vector<unsigned char> buf(4 * static_cast<std::size_t>(dim));
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      fail(ErrorCode::FormatError, "truncated record in " + path.string());
    }
    for (std::uint32_t d = 0; d < dim; ++d) {
      const unsigned char* p = buf.data() + 4 * d;
      const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                 (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
      file.values.push_back(std::bit_cast<float>(bits));
    }
  }
  if (in.gcount() != 0) fail(ErrorCode::FormatError, "trailing bytes in " + path.string());
  return file;
}

void write_fvecs(const std::filesystem::path& path, std::size_t dimension, std::span<const float> values) {
  if (dimension == 0 || values.size() % dimension != 0) fail(ErrorCode::FormatError, "bad fvecs payload");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  auto put32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>((v >> 8) & 0xFF),
                                static_cast<unsigned char>((v >> 16) & 0xFF),
                                static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  for (std::size_t r = 0; r < values.size() / dimension; ++r) {
    put32(static_cast<std::uint32_t>(dimension));
    for (std::size_t d = 0; d < dimension; ++d) put32(std::bit_cast<std::uint32_t>(values[r * dimension + d]));
  }
  if (!out) fail(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<ScalarRow> read_scalar_csv(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::FormatError, "missing CSV header in " + path.string());
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "id") fail(ErrorCode::FormatError, "first CSV column must be 'id'");
  // position in CSV -> schema index
  std::vector<std::size_t> mapping;
  std::vector<bool> seen(schema.scalar_columns.size(), false);
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::size_t idx = schema.scalar_column_index(header[c]);
    if (seen[idx]) fail(ErrorCode::FormatError, "duplicate CSV column " + header[c]);
    seen[idx] = true;
    mapping.push_back(idx);
  }
  for (std::size_t j = 0; j < seen.size(); ++j) {
    if (!seen[j]) fail(ErrorCode::FormatError, "CSV lacks column " + schema.scalar_columns[j].name);
  }
  std::vector<ScalarRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": wrong field count");
    }
    ScalarRow row;
    row.id = parse_u64(fields[0]);
    row.scalars.resize(schema.scalar_columns.size());
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const std::size_t idx = mapping[c - 1];
      if (schema.scalar_columns[idx].kind == ScalarKind::Numeric) {
        row.scalars[idx] = parse_double(fields[c]);
      } else {
        row.scalars[idx] = fields[c];
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_scalar_csv(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  const auto& schema = table.schema();
  out << "id";
  for (const auto& c : schema.scalar_columns) out << ',' << quote_csv(c.name);
  out << '\n';
  for (std::size_t row = 0; row < table.row_count(); ++row) {
    out << table.id_at(row);
    for (std::size_t j = 0; j < schema.scalar_columns.size(); ++j) {
      out << ',';
      const auto v = table.scalar(j, row);
      if (const double* d = std::get_if<double>(&v)) {
        out << format_double(*d);
      } else {
        out << quote_csv(std::get<std::string>(v));
      }
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<Tuple> assemble_tuples(const TableSchema& schema, std::span<const VectorFile> vectors,
                                   std::span<const ScalarRow> scalars) {
  if (vectors.size() != schema.vector_columns.size()) {
    fail(ErrorCode::InvalidSchema, "need one vector file per vector column");
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].rows() != scalars.size()) {
      fail(ErrorCode::FormatError, "row count mismatch between vector file for " + schema.vector_columns[i].name +
                                       " and scalar CSV");
    }
  }
  std::vector<Tuple> tuples(scalars.size());
  for (std::size_t r = 0; r < scalars.size(); ++r) {
    auto& t = tuples[r];
    t.id = scalars[r].id;
    t.scalars = scalars[r].scalars;
    for (const auto& vf : vectors) {
      auto row = vf.row(r);
      t.vectors.emplace_back(row.begin(), row.end());
    }
  }
  return tuples;
}

}  // namespace hyq
