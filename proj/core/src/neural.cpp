#include "hyq/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyq/binary_io.hpp"
#include "hyq/error.hpp"
#include "hyq/random.hpp"

namespace hyq {

namespace {

constexpr std::string_view kNetMagic = "HYQNET";
constexpr std::uint32_t kNetVersion = 1;
constexpr double kFiniteDifferenceStep = 1e-5;

void activate(Activation a, Matrix& z) {
  if (a == Activation::ReLU) z = z.cwiseMax(0.0);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail(ErrorCode::InvalidConfig, "learning rate must be finite and non-negative");
  }
  if (epochs == 0) fail(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorCode::InvalidConfig, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    fail(ErrorCode::InvalidConfig, "weight decay must be finite and non-negative");
  }
}

FeedForwardNet::FeedForwardNet(const std::vector<std::size_t>& layer_sizes, const std::vector<Activation>& activations,
                               std::uint64_t seed) {
  if (layer_sizes.size() < 2) fail(ErrorCode::ShapeMismatch, "a network needs at least an input and an output size");
  if (activations.size() != layer_sizes.size() - 1) {
    fail(ErrorCode::ShapeMismatch, "need one activation per weight layer");
  }
  for (auto s : layer_sizes) {
    if (s == 0) fail(ErrorCode::ShapeMismatch, "layer sizes must be positive");
  }
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_sizes[l]);
    const auto out = static_cast<Eigen::Index>(layer_sizes[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = activations[l];
    layers_.push_back(std::move(layer));
  }
}

FeedForwardNet FeedForwardNet::mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, std::size_t outputs,
                                   std::uint64_t seed) {
  std::vector<std::size_t> sizes{inputs};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(outputs);
  std::vector<Activation> acts(hidden.size(), Activation::ReLU);
  acts.push_back(Activation::Identity);
  return FeedForwardNet(sizes, acts, seed);
}

std::size_t FeedForwardNet::input_size() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
std::size_t FeedForwardNet::output_size() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

std::size_t FeedForwardNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::vector<DenseLayer>& FeedForwardNet::mutable_layers() {
  if (frozen_) fail(ErrorCode::FrozenNetwork, "network is frozen");
  return layers_;
}

std::vector<double> FeedForwardNet::forward(std::span<const double> input) const {
  const Matrix out = forward(to_matrix(input));
  return {out.data(), out.data() + out.size()};
}

Matrix FeedForwardNet::forward(const Matrix& batch) const {
  if (layers_.empty()) fail(ErrorCode::ShapeMismatch, "empty network");
  if (static_cast<std::size_t>(batch.cols()) != input_size()) {
    fail(ErrorCode::ShapeMismatch, "input width " + std::to_string(batch.cols()) + " != " +
                                       std::to_string(input_size()));
  }
  Matrix x = batch;
  for (const auto& layer : layers_) {
    Matrix z = x * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    activate(layer.activation, z);
    x = std::move(z);
  }
  return x;
}

Matrix FeedForwardNet::forward(const Matrix& batch, Trace& trace) const {
  if (layers_.empty()) fail(ErrorCode::ShapeMismatch, "empty network");
  if (static_cast<std::size_t>(batch.cols()) != input_size()) {
    fail(ErrorCode::ShapeMismatch, "input width " + std::to_string(batch.cols()) + " != " +
                                       std::to_string(input_size()));
  }
  trace.inputs.clear();
  trace.activations.clear();
  Matrix x = batch;
  for (const auto& layer : layers_) {
    trace.inputs.push_back(x);
    Matrix z = x * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    activate(layer.activation, z);
    trace.activations.push_back(z);
    x = std::move(z);
  }
  return x;
}

FeedForwardNet::Gradients FeedForwardNet::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

Matrix FeedForwardNet::backward(const Trace& trace, const Matrix& output_grad, Gradients& grads) const {
  if (trace.inputs.size() != layers_.size() || grads.weights.size() != layers_.size()) {
    fail(ErrorCode::ShapeMismatch, "trace or gradient buffers do not match the network");
  }
  Matrix delta = output_grad;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (layer.activation == Activation::ReLU) {
      delta = delta.cwiseProduct((trace.activations[l].array() > 0.0).cast<double>().matrix());
    }
    grads.weights[l].noalias() += delta.transpose() * trace.inputs[l];
    grads.bias[l].noalias() += delta.colwise().sum().transpose();
    delta = delta * layer.weights;
  }
  return delta;
}

void FeedForwardNet::apply_gradients(const Gradients& grads, double learning_rate, double momentum) {
  if (frozen_) fail(ErrorCode::FrozenNetwork, "network is frozen");
  if (grads.weights.size() != layers_.size()) fail(ErrorCode::ShapeMismatch, "gradient buffers do not match");
  if (momentum == 0.0) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weights.noalias() -= learning_rate * grads.weights[l];
      layers_[l].bias.noalias() -= learning_rate * grads.bias[l];
    }
    return;
  }
  if (velocity_w_.size() != layers_.size()) {
    velocity_w_.clear();
    velocity_b_.clear();
    for (const auto& l : layers_) {
      velocity_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      velocity_b_.push_back(Vector::Zero(l.bias.size()));
    }
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    velocity_w_[l] = momentum * velocity_w_[l] - learning_rate * grads.weights[l];
    velocity_b_[l] = momentum * velocity_b_[l] - learning_rate * grads.bias[l];
    layers_[l].weights += velocity_w_[l];
    layers_[l].bias += velocity_b_[l];
  }
}

void FeedForwardNet::reset_optimizer_state() {
  velocity_w_.clear();
  velocity_b_.clear();
}

std::vector<double> FeedForwardNet::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) p.push_back(l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) p.push_back(l.bias(r));
  }
  return p;
}

void FeedForwardNet::set_parameters(std::span<const double> values) {
  if (frozen_) fail(ErrorCode::FrozenNetwork, "network is frozen");
  if (values.size() != parameter_count()) fail(ErrorCode::ShapeMismatch, "parameter count mismatch");
  std::size_t i = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = values[i++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = values[i++];
  }
}

void FeedForwardNet::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.magic(kNetMagic);
  w.u32(kNetVersion);
  w.u8(frozen_ ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    w.u64(l.inputs());
    w.u64(l.outputs());
    w.u8(static_cast<std::uint8_t>(l.activation));
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row_major.push_back(l.weights(r, c));
    }
    w.f64s(row_major);
    w.f64s(std::span<const double>(l.bias.data(), static_cast<std::size_t>(l.bias.size())));
  }
  w.close();
}

FeedForwardNet FeedForwardNet::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kNetMagic);
  if (r.u32() != kNetVersion) fail(ErrorCode::FormatError, "unsupported network version in " + path.string());
  FeedForwardNet net;
  const bool frozen = r.u8() != 0;
  const std::uint32_t n = r.u32();
  std::size_t prev_out = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto in = r.u64();
    const auto out = r.u64();
    const auto act = r.u8();
    if (act > static_cast<std::uint8_t>(Activation::Identity)) fail(ErrorCode::FormatError, "unknown activation");
    if (in == 0 || out == 0 || (i > 0 && in != prev_out)) {
      fail(ErrorCode::FormatError, "incompatible layer shapes in " + path.string());
    }
    const auto w = r.f64s();
    const auto b = r.f64s();
    if (w.size() != in * out || b.size() != out) fail(ErrorCode::FormatError, "parameter array size mismatch");
    DenseLayer layer;
    layer.activation = static_cast<Activation>(act);
    layer.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (std::size_t rr = 0; rr < out; ++rr) {
      for (std::size_t c = 0; c < in; ++c) {
        layer.weights(static_cast<Eigen::Index>(rr), static_cast<Eigen::Index>(c)) = w[rr * in + c];
      }
    }
    layer.bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(out));
    net.layers_.push_back(std::move(layer));
    prev_out = out;
  }
  if (net.layers_.empty()) fail(ErrorCode::FormatError, "network without layers");
  net.frozen_ = frozen;
  return net;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(r).array() - m).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

double loss_value(Loss loss, const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    fail(ErrorCode::ShapeMismatch, "output and target shapes differ");
  }
  const auto n = static_cast<double>(output.rows());
  if (output.rows() == 0) return 0.0;
  if (loss == Loss::MeanSquaredError) {
    return (output - target).squaredNorm() / (n * static_cast<double>(output.cols()));
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < output.rows(); ++r) {
    const double m = output.row(r).maxCoeff();
    const double lse = m + std::log((output.row(r).array() - m).exp().sum());
    for (Eigen::Index c = 0; c < output.cols(); ++c) {
      if (target(r, c) != 0.0) total -= target(r, c) * (output(r, c) - lse);
    }
  }
  return total / n;
}

Matrix loss_gradient(Loss loss, const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    fail(ErrorCode::ShapeMismatch, "output and target shapes differ");
  }
  const auto n = static_cast<double>(std::max<Eigen::Index>(1, output.rows()));
  if (loss == Loss::MeanSquaredError) {
    return (output - target) * (2.0 / (n * static_cast<double>(output.cols())));
  }
  // Targets are distributions (usually one-hot), so the gradient of the
  // cross-entropy through the softmax is p - t.
  return (softmax_rows(output) - target) / n;
}

void add_weight_decay(const FeedForwardNet& net, FeedForwardNet::Gradients& grads, double decay) {
  if (decay == 0.0) return;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) grads.weights[l] += decay * net.layers()[l].weights;
}

std::vector<double> train(FeedForwardNet& net, const Matrix& inputs, const Matrix& targets, const TrainConfig& config) {
  config.validate();
  if (net.frozen()) fail(ErrorCode::FrozenNetwork, "cannot train a frozen network");
  if (inputs.rows() != targets.rows() || inputs.rows() == 0) {
    fail(ErrorCode::ShapeMismatch, "inputs and targets need the same positive row count");
  }
  if (static_cast<std::size_t>(inputs.cols()) != net.input_size() ||
      static_cast<std::size_t>(targets.cols()) != net.output_size()) {
    fail(ErrorCode::ShapeMismatch, "training data width does not match the network");
  }
  const auto n = static_cast<std::size_t>(inputs.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);
  std::vector<double> curve;
  curve.reserve(config.epochs);
  FeedForwardNet::Trace trace;
  net.reset_optimizer_state();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double weighted = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      const auto rows = static_cast<Eigen::Index>(end - start);
      Matrix xb(rows, inputs.cols());
      Matrix yb(rows, targets.cols());
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = inputs.row(static_cast<Eigen::Index>(order[i]));
        yb.row(static_cast<Eigen::Index>(i - start)) = targets.row(static_cast<Eigen::Index>(order[i]));
      }
      const Matrix out = net.forward(xb, trace);
      weighted += loss_value(config.loss, out, yb) * static_cast<double>(rows);
      auto grads = net.zero_gradients();
      net.backward(trace, loss_gradient(config.loss, out, yb), grads);
      add_weight_decay(net, grads, config.weight_decay);
      net.apply_gradients(grads, config.learning_rate, config.momentum);
    }
    curve.push_back(weighted / static_cast<double>(n));
  }
  return curve;
}

GradientCheckReport gradient_check(const FeedForwardNet& net, std::span<const double> input,
                                   std::span<const double> target, Loss loss, double tolerance) {
  if (!(tolerance > 0.0)) fail(ErrorCode::InvalidConfig, "tolerance must be positive");
  const Matrix x = to_matrix(input);
  const Matrix t = to_matrix(target);
  FeedForwardNet probe = net;
  probe.unfreeze();

  FeedForwardNet::Trace trace;
  const Matrix out = probe.forward(x, trace);
  auto grads = probe.zero_gradients();
  probe.backward(trace, loss_gradient(loss, out, t), grads);
  std::vector<double> analytic;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < grads.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < grads.weights[l].cols(); ++c) analytic.push_back(grads.weights[l](r, c));
    }
    for (Eigen::Index r = 0; r < grads.bias[l].size(); ++r) analytic.push_back(grads.bias[l](r));
  }

  std::vector<double> params = probe.parameters();
  GradientCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + kFiniteDifferenceStep;
    probe.set_parameters(params);
    const double up = loss_value(loss, probe.forward(x), t);
    params[i] = saved - kFiniteDifferenceStep;
    probe.set_parameters(params);
    const double down = loss_value(loss, probe.forward(x), t);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
    const double abs_err = std::abs(numeric - analytic[i]);
    // The floor keeps parameters with vanishing gradient (inactive ReLU
    // units) from dividing round-off noise by zero.
    const double rel_err = abs_err / std::max(std::abs(numeric) + std::abs(analytic[i]), 1e-6);
    report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
    report.max_relative_error = std::max(report.max_relative_error, rel_err);
  }
  report.within_tolerance = report.max_relative_error < tolerance;
  return report;
}

Matrix to_matrix(std::span<const double> row) {
  Matrix m(1, static_cast<Eigen::Index>(row.size()));
  for (std::size_t i = 0; i < row.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = row[i];
  return m;
}

}  // namespace hyq
