#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hyq/graph_index.hpp"
#include "hyq/query_features.hpp"
#include "hyq/scalar_stats.hpp"
#include "hyq/store.hpp"

namespace hyq {

// Row-major vectors of one column, borrowed.
struct VectorView {
  std::span<const float> values;
  std::size_t dimension = 0;

  std::size_t rows() const { return dimension == 0 ? 0 : values.size() / dimension; }
  std::span<const float> row(std::size_t r) const { return values.subspan(r * dimension, dimension); }
};

// Gaussian blobs: centres uniform in [-1, 1]^d, points centre + N(0, spread^2).
// `membership`, when given, receives each row's blob.
std::vector<float> gen_blob_vectors(std::size_t rows, std::size_t dimension, std::size_t blobs, double spread,
                                    std::uint64_t seed, std::vector<std::size_t>* membership = nullptr);

// k-means (Lloyd, 25 iterations, centroids seeded from distinct data
// points); labels are "c<cluster>".
std::vector<std::string> gen_cluster_labels(VectorView vectors, std::size_t num_clusters, std::uint64_t seed);
// Random hyperplanes through the data centroid; label = bit string.
std::vector<std::string> gen_hyperplane_labels(VectorView vectors, std::size_t num_planes, std::uint64_t seed);
// Sum of L2 distances to num_refs points drawn inside the data bounding box.
std::vector<double> gen_distance_sum(VectorView vectors, std::size_t num_refs, std::uint64_t seed);

struct SyntheticTableSpec {
  std::size_t rows = 10000;
  std::vector<std::size_t> dimensions{32, 32};
  std::size_t blobs = 8;
  double spread = 0.15;
  std::size_t clusters = 8;   // "cluster": k-means label on the first vector column
  std::size_t planes = 3;     // "region": hyperplane label on the last vector column
  std::size_t refs = 4;       // "dsum": distance sum on the first vector column
  bool uniform_column = true; // "price": independent U[0, 100]
  std::uint64_t seed = 1;

  void validate() const;
};

// Vector columns v0..v{N-1} plus the correlated scalar columns above.
Table gen_synthetic_table(const SyntheticTableSpec& spec);

enum class WeightMode : std::uint8_t { Uniform, Skewed, Mixed };
std::string_view to_string(WeightMode mode);
WeightMode parse_weight_mode(std::string_view text);

inline constexpr double kSkewedWeights[] = {0.0, 0.02, 0.98, 1.0};

struct WorkloadSpec {
  std::size_t num_queries = 200;
  std::size_t k = 10;
  std::size_t min_predicates = 1;
  std::size_t max_predicates = 2;
  std::size_t strata = 100;
  std::size_t stratum_cap = 20;
  // Accepted exact-selectivity windows [lo, hi]; empty accepts [0, 1].
  std::vector<std::pair<double, double>> selectivity_ranges;
  WeightMode weight_mode = WeightMode::Uniform;
  double skew_fraction = 0.5;  // Mixed: share of queries with skewed weights
  std::vector<double> target_recalls{0.9};
  std::size_t retries_per_slot = 200;
  // Optional second stratifier over the probed local satisfaction rate;
  // 0 disables it. Needs indexes at generation time.
  std::size_t local_rate_strata = 0;
  std::size_t local_rate_cap = 20;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t stratum_of(double selectivity) const;
  bool accepts(double selectivity) const;
};

struct WorkloadQuery {
  HybridQuery query;
  double selectivity = 0.0;  // exact, by scan
  std::size_t stratum = 0;
  std::optional<double> local_rate;  // weight-averaged probe rate, when stratified
  std::size_t local_stratum = 0;
};

struct Workload {
  std::vector<WorkloadQuery> queries;
  std::vector<std::size_t> occupancy;  // per stratum
  std::vector<std::size_t> local_occupancy;  // per local-rate stratum, when enabled
  std::size_t attempts = 0;
};

double exact_selectivity(const Table& table, std::span<const Predicate> predicates);

// Rejection sampling into selectivity strata; throws StratumInfeasible when
// the retry budget runs out.
Workload gen_queries(const Table& table, const StatsCatalog& stats, const WorkloadSpec& spec);
// Same, with local-rate stratification from a pre-probe on `indexes`.
Workload gen_queries(const Table& table, const StatsCatalog& stats, const WorkloadSpec& spec,
                     std::span<const GraphIndex* const> indexes, const ProbeConfig& probe = {});

using GroundTruth = std::vector<std::vector<Neighbor>>;
GroundTruth gen_ground_truth(const Table& table, std::span<const WorkloadQuery> workload);
GroundTruth gen_ground_truth(const Table& table, std::span<const HybridQuery> queries);

// Workload file: one JSON object per line; query vectors live in one fvecs
// sidecar per vector column (<stem>.<column>.fvecs), row i = query i.
void write_workload(const std::filesystem::path& path, const TableSchema& schema, std::span<const WorkloadQuery> workload);
std::vector<WorkloadQuery> read_workload(const std::filesystem::path& path, const TableSchema& schema);

// CSV: query,rank,id,score
void write_ground_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_ground_truth(const std::filesystem::path& path, std::size_t num_queries);

}  // namespace hyq
