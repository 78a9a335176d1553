#include "hyq/scalar_stats.hpp"

#include <algorithm>

#include "hyq/binary_io.hpp"
#include "hyq/error.hpp"

namespace hyq {

namespace {
constexpr std::string_view kStatsMagic = "HYQSTAT";
constexpr std::uint32_t kStatsVersion = 2;
}  // namespace

std::size_t Histogram::bin_of(double value) const {
  if (degenerate() || value <= edges.front()) return 0;
  auto it = std::upper_bound(edges.begin(), edges.end(), value);
  const auto b = static_cast<std::size_t>(it - edges.begin()) - 1;
  return std::min(b, bins() - 1);
}

std::uint64_t Histogram::max_bin_count() const {
  if (kind == ScalarKind::Categorical) {
    std::uint64_t m = 0;
    for (const auto& [_, c] : frequencies) m = std::max(m, c);
    return m;
  }
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

double Histogram::estimate_below(double x) const {
  if (total_count == 0) return 0.0;
  if (degenerate()) return x > edges.front() ? static_cast<double>(total_count) : 0.0;
  if (x <= edges.front()) return 0.0;
  if (x > edges.back()) return static_cast<double>(total_count);
  if (x == edges.back()) return static_cast<double>(total_count - max_count);
  const std::size_t b = bin_of(x);
  const double lo = edges[b];
  const double hi = edges[b + 1];
  const double before = static_cast<double>(prefix[b] - counts[b]);
  const double frac = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  return before + frac * static_cast<double>(counts[b]);
}

Histogram build_histogram(const Table& table, std::string_view column, std::size_t num_bins) {
  const auto& schema = table.schema();
  const std::size_t col = schema.scalar_column_index(column);
  if (table.empty()) fail(ErrorCode::EmptyTable, "cannot build a histogram over an empty table");
  Histogram h;
  h.column = std::string(column);
  h.kind = schema.scalar_columns[col].kind;
  h.total_count = table.row_count();

  if (h.kind == ScalarKind::Categorical) {
    const auto& dict = table.dictionary(col);
    std::vector<std::uint64_t> by_code(dict.size(), 0);
    for (std::size_t row = 0; row < table.row_count(); ++row) ++by_code[static_cast<std::size_t>(table.category_code(col, row))];
    for (std::size_t c = 0; c < dict.size(); ++c) {
      if (by_code[c]) h.frequencies[dict[c]] = by_code[c];
    }
    return h;
  }

  if (num_bins == 0) fail(ErrorCode::InvalidConfig, "num_bins must be >= 1");
  std::vector<double> values(table.row_count());
  for (std::size_t row = 0; row < table.row_count(); ++row) values[row] = table.numeric(col, row);
  std::sort(values.begin(), values.end());
  const double lo = values.front();
  const double hi = values.back();
  if (lo == hi) {
    h.edges = {lo, hi};
    h.counts = {h.total_count};
    h.prefix = {h.total_count};
    h.distinct = {1};
    h.max_count = h.total_count;
    return h;
  }
  h.edges.resize(num_bins + 1);
  for (std::size_t i = 0; i <= num_bins; ++i) {
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(num_bins);
  }
  h.edges.back() = hi;
  h.counts.assign(num_bins, 0);
  h.distinct.assign(num_bins, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t b = h.bin_of(values[i]);
    ++h.counts[b];
    if (i == 0 || values[i] != values[i - 1]) ++h.distinct[b];
  }
  h.max_count = static_cast<std::uint64_t>(values.end() - std::lower_bound(values.begin(), values.end(), hi));
  h.prefix.resize(num_bins);
  std::uint64_t run = 0;
  for (std::size_t b = 0; b < num_bins; ++b) {
    run += h.counts[b];
    h.prefix[b] = run;
  }
  return h;
}

double estimate_predicate(const Histogram& hist, const Predicate& predicate) {
  if (predicate.column != hist.column) {
    fail(ErrorCode::ColumnMismatch, "predicate on " + predicate.column + " vs histogram on " + hist.column);
  }
  if (hist.total_count == 0) return 0.0;
  const double total = static_cast<double>(hist.total_count);

  if (hist.kind == ScalarKind::Categorical) {
    const auto* value = std::get_if<std::string>(&predicate.operand);
    if (predicate.op != CompareOp::Eq || value == nullptr) {
      fail(ErrorCode::KindMismatch, "categorical histogram supports string equality only");
    }
    auto it = hist.frequencies.find(*value);
    return it == hist.frequencies.end() ? 0.0 : static_cast<double>(it->second) / total;
  }

  const auto* operand = std::get_if<double>(&predicate.operand);
  if (operand == nullptr) fail(ErrorCode::KindMismatch, "numeric histogram needs a numeric operand");
  const double x = *operand;
  double sel = 0.0;
  switch (predicate.op) {
    case CompareOp::Lt:
    case CompareOp::Le:
      if (hist.degenerate()) {
        sel = (predicate.op == CompareOp::Lt ? x > hist.min() : x >= hist.min()) ? 1.0 : 0.0;
      } else {
        sel = (x >= hist.max() && predicate.op == CompareOp::Le) ? 1.0 : hist.estimate_below(x) / total;
      }
      break;
    case CompareOp::Gt:
    case CompareOp::Ge: {
      const CompareOp complement = predicate.op == CompareOp::Gt ? CompareOp::Le : CompareOp::Lt;
      sel = 1.0 - estimate_predicate(hist, Predicate::cmp(hist.column, complement, x));
      break;
    }
    case CompareOp::Between: {
      const double hi = std::get<double>(predicate.upper);
      sel = estimate_predicate(hist, Predicate::cmp(hist.column, CompareOp::Le, hi)) -
            estimate_predicate(hist, Predicate::cmp(hist.column, CompareOp::Lt, x));
      break;
    }
    case CompareOp::Eq: {
      if (x < hist.min() || x > hist.max()) return 0.0;
      if (hist.degenerate()) return x == hist.min() ? 1.0 : 0.0;
      const std::size_t b = hist.bin_of(x);
      if (hist.counts[b] == 0) return 0.0;
      sel = static_cast<double>(hist.counts[b]) / (total * static_cast<double>(std::max<std::uint64_t>(1, hist.distinct[b])));
      break;
    }
  }
  return std::clamp(sel, 0.0, 1.0);
}

StatsCatalog StatsCatalog::build(const Table& table, std::size_t num_bins) {
  StatsCatalog stats;
  stats.num_bins_ = num_bins;
  stats.rows_at_build_ = table.row_count();
  for (const auto& c : table.schema().scalar_columns) stats.insert(build_histogram(table, c.name, num_bins));
  return stats;
}

bool StatsCatalog::is_stale(const Table& table) const {
  const std::size_t now = table.row_count();
  if (now <= rows_at_build_) return false;
  return static_cast<double>(now - rows_at_build_) > 0.1 * static_cast<double>(rows_at_build_);
}

bool StatsCatalog::refresh_if_stale(const Table& table) {
  if (!is_stale(table)) return false;
  *this = build(table, num_bins_);
  return true;
}

const Histogram* StatsCatalog::find(std::string_view column) const {
  auto it = histograms_.find(column);
  return it == histograms_.end() ? nullptr : &it->second;
}

const Histogram& StatsCatalog::at(std::string_view column) const {
  const Histogram* h = find(column);
  if (h == nullptr) fail(ErrorCode::MissingHistogram, std::string(column));
  return *h;
}

void StatsCatalog::insert(Histogram hist) {
  auto name = hist.column;
  histograms_.insert_or_assign(std::move(name), std::move(hist));
}

double estimate_conjunction(const StatsCatalog& stats, std::span<const Predicate> predicates) {
  double sel = 1.0;
  for (const auto& p : predicates) sel *= estimate_predicate(stats.at(p.column), p);
  return sel;
}

void StatsCatalog::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.magic(kStatsMagic);
  w.u32(kStatsVersion);
  w.u64(num_bins_);
  w.u64(rows_at_build_);
  w.u64(histograms_.size());
  for (const auto& [name, h] : histograms_) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(h.kind));
    w.u64(h.total_count);
    w.f64s(h.edges);
    w.u64s(h.counts);
    w.u64s(h.prefix);
    w.u64s(h.distinct);
    w.u64(h.max_count);
    w.u64(h.frequencies.size());
    for (const auto& [cat, c] : h.frequencies) {
      w.str(cat);
      w.u64(c);
    }
  }
  w.close();
}

StatsCatalog StatsCatalog::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kStatsMagic);
  if (r.u32() != kStatsVersion) fail(ErrorCode::FormatError, "unsupported stats version");
  StatsCatalog stats;
  stats.num_bins_ = r.u64();
  stats.rows_at_build_ = r.u64();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    Histogram h;
    h.column = r.str();
    h.kind = static_cast<ScalarKind>(r.u8());
    h.total_count = r.u64();
    h.edges = r.f64s();
    h.counts = r.u64s();
    h.prefix = r.u64s();
    h.distinct = r.u64s();
    h.max_count = r.u64();
    const std::uint64_t nf = r.u64();
    for (std::uint64_t f = 0; f < nf; ++f) {
      auto cat = r.str();
      h.frequencies[cat] = r.u64();
    }
    if (h.kind == ScalarKind::Numeric &&
        (h.counts.size() != h.prefix.size() || h.edges.size() != h.counts.size() + 1)) {
      fail(ErrorCode::FormatError, "inconsistent histogram for " + h.column);
    }
    stats.insert(std::move(h));
  }
  return stats;
}

}  // namespace hyq
