#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyq/correlation_encoder.hpp"
#include "hyq/graph_index.hpp"
#include "hyq/scalar_stats.hpp"
#include "hyq/store.hpp"

namespace hyq {

struct ProbeConfig {
  std::size_t probe_k = 64;
  std::size_t ef_search = 64;

  void validate() const;
};

struct ProbeResult {
  std::vector<double> local_rate;            // per vector column
  std::vector<std::size_t> qualifying;       // per vector column
  std::vector<std::size_t> probed_per_column;
  std::size_t probed_count = 0;              // neighbors returned per column (max over columns)
  std::size_t distance_computations = 0;
  std::size_t predicate_evaluations = 0;
  double probe_latency = 0.0;                // seconds
};

// One unfiltered search of width probe_k per vector column, then an exact
// predicate count over each probed set. Null entries raise IndexMissing.
ProbeResult preprobe(const Table& table, std::span<const GraphIndex* const> indexes, const HybridQuery& query,
                     const ProbeConfig& config);

// Slots per scalar column: presence flag, one-hot over the six operators,
// two normalized operands.
inline constexpr std::size_t kScalarSlotWidth = 3 + kCompareOpCount;

std::vector<double> encode_query_scalars(const TableSchema& schema, const StatsCatalog& stats,
                                         std::span<const Predicate> predicates);

struct FeatureSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t width = 0;

  bool operator==(const FeatureSegment&) const = default;
};

// Segments in order: recon, scalars, target_recall, probe, selectivity,
// weights, k_norm.
class FeatureLayout {
 public:
  FeatureLayout() = default;
  static FeatureLayout for_schema(const TableSchema& schema);

  std::size_t width() const noexcept { return width_; }
  const std::vector<FeatureSegment>& segments() const noexcept { return segments_; }
  const FeatureSegment& segment(std::string_view name) const;  // throws LayoutMismatch
  std::vector<std::string> slot_names() const;

  bool operator==(const FeatureLayout&) const = default;

 private:
  void add(std::string name, std::size_t width);

  std::vector<FeatureSegment> segments_;
  std::size_t width_ = 0;
  std::vector<std::string> vector_names_;
  std::vector<std::string> scalar_names_;
};

struct FeatureVector {
  FeatureLayout layout;
  std::vector<double> values;

  std::span<const double> segment(std::string_view name) const;
};

FeatureVector assemble_features(const FeatureLayout& layout, const TableSchema& schema, std::size_t table_rows,
                                const ReconstructionScore& recon, const StatsCatalog& stats,
                                const ProbeResult& probe, const HybridQuery& query);

// Header: one column per slot, then the extra column names.
void write_feature_csv(const std::filesystem::path& path, const FeatureLayout& layout,
                       std::span<const FeatureVector> rows, std::span<const std::string> extra_names = {},
                       std::span<const std::vector<std::string>> extra_values = {});

}  // namespace hyq
