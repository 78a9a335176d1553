#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hyq/store.hpp"

namespace hyq {

inline constexpr std::size_t kDefaultHistogramBins = 100;

// Equi-width histogram with prefix sums (Numeric) or a frequency map
// (Categorical).
struct Histogram {
  std::string column;
  ScalarKind kind = ScalarKind::Numeric;
  std::uint64_t total_count = 0;

  std::vector<double> edges;            // bins + 1 ascending edges; {v, v} for a constant column
  std::vector<std::uint64_t> counts;    // per bin
  std::vector<std::uint64_t> prefix;    // prefix[i] = counts[0] + ... + counts[i]
  std::vector<std::uint64_t> distinct;  // distinct values per bin, used for equality estimates
  std::uint64_t max_count = 0;          // rows equal to the top edge

  std::map<std::string, std::uint64_t> frequencies;

  std::size_t bins() const noexcept { return counts.size(); }
  bool degenerate() const noexcept { return kind == ScalarKind::Numeric && edges.size() == 2 && edges[0] == edges[1]; }
  double min() const { return edges.front(); }
  double max() const { return edges.back(); }
  std::size_t bin_of(double value) const;
  std::uint64_t max_bin_count() const;

  // Estimated number of rows with value < x (interpolated inside the bin).
  double estimate_below(double x) const;
};

Histogram build_histogram(const Table& table, std::string_view column, std::size_t num_bins = kDefaultHistogramBins);

double estimate_predicate(const Histogram& hist, const Predicate& predicate);

// Per-column histograms for one table, rebuilt lazily once more than 10% of
// the rows present at build time have been inserted since.
class StatsCatalog {
 public:
  StatsCatalog() = default;
  static StatsCatalog build(const Table& table, std::size_t num_bins = kDefaultHistogramBins);

  bool refresh_if_stale(const Table& table);
  bool is_stale(const Table& table) const;

  const Histogram* find(std::string_view column) const;
  const Histogram& at(std::string_view column) const;  // throws MissingHistogram
  std::size_t num_bins() const noexcept { return num_bins_; }
  std::size_t rows_at_build() const noexcept { return rows_at_build_; }
  std::size_t size() const noexcept { return histograms_.size(); }
  void insert(Histogram hist);

  void save(const std::filesystem::path& path) const;
  static StatsCatalog load(const std::filesystem::path& path);

 private:
  std::map<std::string, Histogram, std::less<>> histograms_;
  std::size_t num_bins_ = kDefaultHistogramBins;
  std::size_t rows_at_build_ = 0;
};

// Product of per-predicate estimates (attribute independence); 1.0 when empty.
double estimate_conjunction(const StatsCatalog& stats, std::span<const Predicate> predicates);

}  // namespace hyq
