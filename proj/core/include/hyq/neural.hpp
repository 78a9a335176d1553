#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hyq {

enum class Activation : std::uint8_t { ReLU, Identity };
enum class Loss : std::uint8_t { MeanSquaredError, CrossEntropy };

using Matrix = Eigen::MatrixXd;  // rows are samples
using Vector = Eigen::VectorXd;

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::Identity;

  std::size_t inputs() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t outputs() const { return static_cast<std::size_t>(weights.rows()); }
};

struct TrainConfig {
  Loss loss = Loss::MeanSquaredError;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double momentum = 0.0;  // 0 = plain mini-batch gradient descent
  double weight_decay = 0.0;  // L2 on weights, not biases

  void validate() const;
};

// Dense feed-forward network with 64-bit parameters.
class FeedForwardNet {
 public:
  struct Trace {
    std::vector<Matrix> inputs;       // input to each layer
    std::vector<Matrix> activations;  // output of each layer
  };
  struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;
  };

  FeedForwardNet() = default;
  // layer_sizes = {in, h1, ..., out}; one activation per weight layer.
  // Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  FeedForwardNet(const std::vector<std::size_t>& layer_sizes, const std::vector<Activation>& activations,
                 std::uint64_t seed);
  // ReLU hidden layers, identity output.
  static FeedForwardNet mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t outputs,
                            std::uint64_t seed);

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t parameter_count() const;
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers();  // throws FrozenNetwork

  std::vector<double> forward(std::span<const double> input) const;
  Matrix forward(const Matrix& batch) const;
  Matrix forward(const Matrix& batch, Trace& trace) const;

  Gradients zero_gradients() const;
  // Accumulates parameter gradients for dL/d(output) into `grads`;
  // returns dL/d(input).
  Matrix backward(const Trace& trace, const Matrix& output_grad, Gradients& grads) const;
  // Gradient step; momentum > 0 keeps a velocity buffer across calls.
  void apply_gradients(const Gradients& grads, double learning_rate, double momentum = 0.0);
  void reset_optimizer_state();

  void freeze() noexcept { frozen_ = true; }
  void unfreeze() noexcept { frozen_ = false; }
  bool frozen() const noexcept { return frozen_; }

  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  void save(const std::filesystem::path& path) const;
  static FeedForwardNet load(const std::filesystem::path& path);

 private:
  std::vector<DenseLayer> layers_;
  bool frozen_ = false;
  std::vector<Matrix> velocity_w_;
  std::vector<Vector> velocity_b_;
};

double loss_value(Loss loss, const Matrix& output, const Matrix& target);
// dL/d(output) for the mean loss over the batch.
Matrix loss_gradient(Loss loss, const Matrix& output, const Matrix& target);
Matrix softmax_rows(const Matrix& logits);

// Mini-batch gradient descent; returns the mean training loss per epoch.
// grads.weights += decay * W, biases untouched.
void add_weight_decay(const FeedForwardNet& net, FeedForwardNet::Gradients& grads, double decay);

std::vector<double> train(FeedForwardNet& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& config);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  bool within_tolerance = true;
};

// Analytic gradients against central finite differences (step 1e-5) over
// every parameter of `net`.
GradientCheckReport gradient_check(const FeedForwardNet& net, std::span<const double> input,
                                   std::span<const double> target, Loss loss, double tolerance);

Matrix to_matrix(std::span<const double> row);

}  // namespace hyq
