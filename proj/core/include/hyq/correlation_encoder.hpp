#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hyq/neural.hpp"
#include "hyq/store.hpp"

namespace hyq {

// One-hot encoder for a single scalar column: categories plus an OTHER slot,
// or equi-width bins for numeric values.
struct ScalarEncoderSpec {
  std::string column;
  ScalarKind kind = ScalarKind::Numeric;
  std::vector<std::string> categories;  // sorted; OTHER is the slot after the last
  std::vector<double> edges;            // bins + 1 edges

  std::size_t width() const { return kind == ScalarKind::Categorical ? categories.size() + 1 : edges.size() - 1; }
  std::size_t slot_of(const ScalarValue& value) const;
  std::size_t category_index(const std::string& value) const;  // categories.size() when unseen
  void encode_into(const ScalarValue& value, std::span<double> out) const;
  std::vector<double> encode(const ScalarValue& value) const;
  double min() const { return edges.front(); }
  double max() const { return edges.back(); }
};

std::vector<ScalarEncoderSpec> fit_scalar_encoders(const Table& table, std::size_t bins_for_numeric);

struct EncoderConfig {
  std::size_t numeric_bins = 10;
  double sample_fraction = 0.1;
  std::size_t min_sample = 2000;
  std::size_t max_sample = 50000;
  std::vector<std::size_t> predictor_hidden{64, 64};
  std::size_t projector_hidden = 64;
  std::size_t projector_width = 16;
  std::size_t autoencoder_hidden = 64;
  std::size_t min_bottleneck = 8;
  TrainConfig predictor_train{.loss = Loss::MeanSquaredError, .learning_rate = 0.01, .batch_size = 64, .epochs = 20,
                              .seed = 1, .momentum = 0.9};
  TrainConfig autoencoder_train{.loss = Loss::MeanSquaredError, .learning_rate = 0.01, .batch_size = 64,
                                .epochs = 60, .seed = 2, .momentum = 0.9};
  TrainConfig finetune_train{.loss = Loss::MeanSquaredError, .learning_rate = 0.005, .batch_size = 64, .epochs = 10,
                             .seed = 3, .momentum = 0.9};
  std::uint64_t seed = 7;

  void validate() const;
  std::size_t sample_size(std::size_t rows) const;
  // Stable hex digest over every field; stored in the bundle manifest.
  std::string hash() const;
};

struct ReconstructionScore {
  std::vector<double> per_column;
};

struct UpdateReport {
  std::vector<std::vector<double>> predictor_losses;    // [column][scalar] final fine-tune loss
  std::vector<std::vector<double>> autoencoder_curves;  // [column] per-epoch loss
};

// Joint vector-scalar model: per vector column, one frozen predictor per
// scalar column, a trainable projector and an autoencoder over
// [predictor outputs; projector output; one-hot scalars].
class EncoderBundle {
 public:
  EncoderBundle() = default;

  // fit_scalar_encoders + train_frozen_predictors + train_autoencoder for
  // every vector column.
  static EncoderBundle fit(const Table& table, const EncoderConfig& config);

  void fit_scalar_encoders(const Table& table, std::size_t bins_for_numeric);
  // Returns [vector column][scalar column] final training loss.
  std::vector<std::vector<double>> train_frozen_predictors(const Table& table, const EncoderConfig& config);
  std::vector<double> train_autoencoder(const Table& table, std::size_t column, const EncoderConfig& config);

  std::vector<double> encode_vector(std::size_t column, std::span<const float> v) const;
  std::vector<double> encode_scalars(std::span<const ScalarValue> values) const;
  // Query-side scalar encoding: Eq uses the value, ranges the clipped
  // interval midpoint, unconstrained columns a uniform spread.
  std::vector<double> encode_predicates(std::span<const Predicate> predicates) const;
  std::vector<double> joint_embedding(std::size_t column, std::span<const float> v,
                                      std::span<const double> scalar_encoding) const;

  double reconstruction_error(std::size_t column, std::span<const float> q, std::span<const Predicate> predicates) const;
  double reconstruction_error(std::size_t column, std::span<const float> v, std::span<const ScalarValue> values) const;
  ReconstructionScore score(const HybridQuery& query) const;

  // Fine-tunes predictors and autoencoders on the given rows only and clears
  // the table's pending-update buffer.
  UpdateReport incremental_update(Table& table, std::span<const TupleId> new_ids, const EncoderConfig& config);

  bool scalars_fitted() const noexcept { return !scalar_specs_.empty(); }
  bool predictors_fitted() const noexcept { return !columns_.empty() && predictors_ready_; }
  bool autoencoder_fitted(std::size_t column) const;
  bool ready() const;

  std::size_t vector_columns() const noexcept { return columns_.size(); }
  const std::vector<ScalarEncoderSpec>& scalar_encoders() const noexcept { return scalar_specs_; }
  std::size_t scalar_width() const;
  std::size_t embedding_width(std::size_t column) const;
  const FeedForwardNet& predictor(std::size_t column, std::size_t scalar) const;
  const FeedForwardNet& projector(std::size_t column) const;
  const FeedForwardNet& autoencoder(std::size_t column) const;
  const std::string& config_hash() const noexcept { return config_hash_; }

  void save(const std::filesystem::path& dir) const;
  static EncoderBundle load(const std::filesystem::path& dir);

 private:
  struct ColumnModel {
    std::size_t dimension = 0;
    std::vector<double> input_mean;
    std::vector<double> input_scale;
    std::vector<FeedForwardNet> predictors;  // one per scalar column
    std::vector<double> target_mean;         // numeric predictor targets
    std::vector<double> target_scale;
    FeedForwardNet projector;
    FeedForwardNet autoencoder;
    bool autoencoder_ready = false;
  };

  void require_scalars() const;
  void require_predictors() const;
  void check_column(std::size_t column) const;
  Matrix standardized_inputs(std::size_t column, const Table& table, std::span<const std::size_t> rows) const;
  Matrix frozen_outputs(std::size_t column, const Matrix& inputs) const;
  Matrix scalar_block(const Table& table, std::span<const std::size_t> rows) const;
  void fit_predictors(std::size_t column, const Table& table, std::span<const std::size_t> rows,
                      const TrainConfig& train_config, bool reinitialise, std::vector<double>& losses);
  std::vector<double> fit_autoencoder(std::size_t column, const Table& table, std::span<const std::size_t> rows,
                                      const TrainConfig& train_config);
  double reconstruction_error_from(std::size_t column, const std::vector<double>& embedding) const;

  EncoderConfig config_;
  std::string config_hash_;
  std::vector<ScalarEncoderSpec> scalar_specs_;
  std::vector<ColumnModel> columns_;
  bool predictors_ready_ = false;
};

}  // namespace hyq
