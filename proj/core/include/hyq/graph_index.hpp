#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hyq/store.hpp"

namespace hyq {

enum class IterativeScan : std::uint8_t { Off, Relaxed, Strict };
inline constexpr std::size_t kIterativeScanCount = 3;
std::string_view to_string(IterativeScan mode);
IterativeScan parse_iterative_scan(std::string_view text);

struct BuildParams {
  std::size_t m = 16;
  std::size_t ef_construction = 200;
  double level_factor = 0.0;  // 0 selects 1/ln(m)
  std::uint64_t seed = 0x5eed;
};

struct SearchParams {
  std::size_t ef_search = 40;
  std::optional<std::size_t> max_scan_tuples;  // nullopt = unbounded
  IterativeScan iterative_scan = IterativeScan::Relaxed;

  bool operator==(const SearchParams&) const = default;
};

struct Neighbor {
  TupleId id = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

struct FilteredResult {
  std::vector<Neighbor> results;
  std::size_t scanned_count = 0;  // layer-0 nodes whose predicate was evaluated
  bool converged = false;         // false iff fewer than k results
  std::size_t distance_computations = 0;
};

using IdPredicate = std::function<bool(TupleId)>;

// Hierarchical navigable small-world graph over one vector column.
// The index keeps its own copy of the vectors; ids are the table's tuple ids.
class GraphIndex {
 public:
  static GraphIndex build(const Table& table, std::size_t column, const BuildParams& params = {});
  static GraphIndex build(const Table& table, std::string_view column, const BuildParams& params = {});

  // Adds one vector. Guarantees the new node has a layer-0 in-link; call
  // repair_connectivity() after a batch to re-establish full reachability.
  void insert(TupleId id, std::span<const float> vector);

  // Inserts every row of `table` not yet indexed, then repairs connectivity.
  std::size_t sync_with(const Table& table);

  std::vector<Neighbor> search(std::span<const float> query, std::size_t k, const SearchParams& params,
                               std::size_t* distance_computations = nullptr) const;

  // Post-filter during traversal. Results contain only ids accepted by
  // `predicate`, sorted by exact distance then id.
  FilteredResult filtered_search(std::span<const float> query, std::size_t k, const SearchParams& params,
                                 const IdPredicate& predicate) const;

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t column() const noexcept { return column_; }
  Metric metric() const noexcept { return metric_; }
  const BuildParams& build_params() const noexcept { return params_; }
  bool contains(TupleId id) const;

  // Introspection for invariant checks.
  int max_level() const noexcept { return max_level_; }
  std::uint32_t entry_point() const noexcept { return entry_; }
  int level_of(std::uint32_t node) const { return static_cast<int>(links_[node].size()) - 1; }
  std::span<const std::uint32_t> links(std::uint32_t node, int level) const { return links_[node][level]; }
  TupleId id_of(std::uint32_t node) const { return ids_[node]; }
  std::size_t max_degree(int level) const { return level == 0 ? 2 * params_.m : params_.m; }

  // Number of layer-0 nodes reachable from the entry point.
  std::size_t reachable_count() const;
  // Throws CorruptIndex when a structural invariant is violated.
  void validate() const;
  // Links unreachable nodes back into layer 0; returns how many were fixed.
  std::size_t repair_connectivity();

  void save(const std::filesystem::path& path) const;
  static GraphIndex load(const std::filesystem::path& path, const Table& table);

 private:
  GraphIndex(std::size_t column, std::size_t dimension, Metric metric, const BuildParams& params);

  using Candidate = std::pair<float, std::uint32_t>;

  float fast_distance(std::span<const float> a, std::uint32_t node) const;
  float fast_distance(std::uint32_t a, std::uint32_t b) const;
  std::span<const float> vec(std::uint32_t node) const {
    return {vectors_.data() + static_cast<std::size_t>(node) * dimension_, dimension_};
  }
  int draw_level();
  void insert_node(std::uint32_t node);
  std::uint32_t greedy_descend(std::span<const float> query, int to_level, std::size_t& dist_count) const;
  std::vector<Candidate> search_layer(std::span<const float> query, std::span<const std::uint32_t> entries,
                                      std::size_t ef, int level) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> candidates, std::size_t m) const;
  void shrink_links(std::uint32_t node, int level);
  void add_link(std::uint32_t from, std::uint32_t to, int level);
  std::vector<bool> reachable_mask() const;
  FilteredResult run_search(std::span<const float> query, std::size_t k, const SearchParams& params,
                            const IdPredicate* predicate) const;

  std::size_t column_ = 0;
  std::size_t dimension_ = 0;
  Metric metric_ = Metric::L2;
  BuildParams params_;
  double level_mult_ = 0.0;
  std::uint64_t rng_state_ = 0;

  std::vector<float> vectors_;
  std::vector<TupleId> ids_;
  std::unordered_map<TupleId, std::uint32_t> node_of_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] -> neighbors
  std::vector<std::uint32_t> in_degree0_;
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

}  // namespace hyq
