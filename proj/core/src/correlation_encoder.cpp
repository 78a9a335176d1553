#include "hyq/correlation_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <nlohmann/json.hpp>

#include "hyq/error.hpp"
#include "hyq/random.hpp"

namespace hyq {

using nlohmann::json;

namespace {

constexpr int kBundleVersion = 1;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json train_to_json(const TrainConfig& c) {
  return {{"loss", c.loss == Loss::CrossEntropy ? "cross_entropy" : "mse"},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.loss = j.at("loss").get<std::string>() == "cross_entropy" ? Loss::CrossEntropy : Loss::MeanSquaredError;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.value("weight_decay", 0.0);
  return c;
}

json config_to_json(const EncoderConfig& c) {
  return {{"numeric_bins", c.numeric_bins},
          {"sample_fraction", c.sample_fraction},
          {"min_sample", c.min_sample},
          {"max_sample", c.max_sample},
          {"predictor_hidden", c.predictor_hidden},
          {"projector_hidden", c.projector_hidden},
          {"projector_width", c.projector_width},
          {"autoencoder_hidden", c.autoencoder_hidden},
          {"min_bottleneck", c.min_bottleneck},
          {"predictor_train", train_to_json(c.predictor_train)},
          {"autoencoder_train", train_to_json(c.autoencoder_train)},
          {"finetune_train", train_to_json(c.finetune_train)},
          {"seed", c.seed}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.numeric_bins = j.at("numeric_bins").get<std::size_t>();
  c.sample_fraction = j.at("sample_fraction").get<double>();
  c.min_sample = j.at("min_sample").get<std::size_t>();
  c.max_sample = j.at("max_sample").get<std::size_t>();
  c.predictor_hidden = j.at("predictor_hidden").get<std::vector<std::size_t>>();
  c.projector_hidden = j.at("projector_hidden").get<std::size_t>();
  c.projector_width = j.at("projector_width").get<std::size_t>();
  c.autoencoder_hidden = j.at("autoencoder_hidden").get<std::size_t>();
  c.min_bottleneck = j.at("min_bottleneck").get<std::size_t>();
  c.predictor_train = train_from_json(j.at("predictor_train"));
  c.autoencoder_train = train_from_json(j.at("autoencoder_train"));
  c.finetune_train = train_from_json(j.at("finetune_train"));
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<std::size_t> sample_rows(std::size_t rows, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= rows) return idx;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> order, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) {
    out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(order[i]));
  }
  return out;
}

}  // namespace

std::size_t ScalarEncoderSpec::category_index(const std::string& value) const {
  auto it = std::lower_bound(categories.begin(), categories.end(), value);
  if (it == categories.end() || *it != value) return categories.size();
  return static_cast<std::size_t>(it - categories.begin());
}

std::size_t ScalarEncoderSpec::slot_of(const ScalarValue& value) const {
  if (kind == ScalarKind::Categorical) {
    const auto* s = std::get_if<std::string>(&value);
    if (s == nullptr) fail(ErrorCode::KindMismatch, "categorical encoder for " + column + " needs a string");
    return category_index(*s);
  }
  const auto* x = std::get_if<double>(&value);
  if (x == nullptr) fail(ErrorCode::KindMismatch, "numeric encoder for " + column + " needs a number");
  const std::size_t bins = width();
  if (bins == 1 || *x <= edges.front()) return 0;
  auto it = std::upper_bound(edges.begin(), edges.end(), *x);
  const auto b = static_cast<std::size_t>(it - edges.begin()) - 1;
  return std::min(b, bins - 1);
}

void ScalarEncoderSpec::encode_into(const ScalarValue& value, std::span<double> out) const {
  if (out.size() != width()) fail(ErrorCode::ShapeMismatch, "scalar encoding buffer width");
  std::fill(out.begin(), out.end(), 0.0);
  out[slot_of(value)] = 1.0;
}

std::vector<double> ScalarEncoderSpec::encode(const ScalarValue& value) const {
  std::vector<double> out(width());
  encode_into(value, out);
  return out;
}

std::vector<ScalarEncoderSpec> fit_scalar_encoders(const Table& table, std::size_t bins_for_numeric) {
  if (table.empty()) fail(ErrorCode::EmptyTable, "cannot fit scalar encoders on an empty table");
  if (bins_for_numeric == 0) fail(ErrorCode::InvalidConfig, "numeric bins must be >= 1");
  std::vector<ScalarEncoderSpec> specs;
  const auto& schema = table.schema();
  for (std::size_t j = 0; j < schema.scalar_columns.size(); ++j) {
    ScalarEncoderSpec spec;
    spec.column = schema.scalar_columns[j].name;
    spec.kind = schema.scalar_columns[j].kind;
    if (spec.kind == ScalarKind::Categorical) {
      std::set<std::string> seen;
      for (std::size_t r = 0; r < table.row_count(); ++r) seen.insert(table.dictionary(j)[table.category_code(j, r)]);
      spec.categories.assign(seen.begin(), seen.end());
    } else {
      double lo = table.numeric(j, 0);
      double hi = lo;
      for (std::size_t r = 1; r < table.row_count(); ++r) {
        lo = std::min(lo, table.numeric(j, r));
        hi = std::max(hi, table.numeric(j, r));
      }
      if (lo == hi) {
        spec.edges = {lo, hi};
      } else {
        for (std::size_t b = 0; b <= bins_for_numeric; ++b) {
          spec.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins_for_numeric));
        }
        spec.edges.back() = hi;
      }
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

void EncoderConfig::validate() const {
  if (numeric_bins == 0) fail(ErrorCode::InvalidConfig, "numeric_bins must be >= 1");
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) fail(ErrorCode::InvalidConfig, "sample_fraction in (0,1]");
  if (projector_width == 0 || projector_hidden == 0 || autoencoder_hidden == 0 || min_bottleneck == 0) {
    fail(ErrorCode::InvalidConfig, "network widths must be positive");
  }
  if (min_sample > max_sample) fail(ErrorCode::InvalidConfig, "min_sample exceeds max_sample");
  predictor_train.validate();
  autoencoder_train.validate();
  finetune_train.validate();
}

std::size_t EncoderConfig::sample_size(std::size_t rows) const {
  const auto wanted = static_cast<std::size_t>(std::ceil(sample_fraction * static_cast<double>(rows)));
  return std::clamp(wanted, std::min(rows, min_sample), std::min(rows, max_sample));
}

std::string EncoderConfig::hash() const {
  std::ostringstream os;
  os << std::hex << fnv1a(config_to_json(*this).dump());
  return os.str();
}

EncoderBundle EncoderBundle::fit(const Table& table, const EncoderConfig& config) {
  EncoderBundle b;
  b.fit_scalar_encoders(table, config.numeric_bins);
  b.train_frozen_predictors(table, config);
  for (std::size_t i = 0; i < table.schema().vector_columns.size(); ++i) b.train_autoencoder(table, i, config);
  return b;
}

void EncoderBundle::fit_scalar_encoders(const Table& table, std::size_t bins_for_numeric) {
  scalar_specs_ = hyq::fit_scalar_encoders(table, bins_for_numeric);
  columns_.clear();
  predictors_ready_ = false;
}

std::size_t EncoderBundle::scalar_width() const {
  std::size_t w = 0;
  for (const auto& s : scalar_specs_) w += s.width();
  return w;
}

void EncoderBundle::require_scalars() const {
  if (scalar_specs_.empty()) fail(ErrorCode::NotFitted, "scalar encoders are not fitted");
}

void EncoderBundle::require_predictors() const {
  require_scalars();
  if (!predictors_ready_) fail(ErrorCode::NotFitted, "frozen predictors are not trained");
}

void EncoderBundle::check_column(std::size_t column) const {
  require_predictors();
  if (column >= columns_.size()) fail(ErrorCode::UnknownColumn, "vector column " + std::to_string(column));
}

Matrix EncoderBundle::standardized_inputs(std::size_t column, const Table& table,
                                          std::span<const std::size_t> rows) const {
  const auto& cm = columns_[column];
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cm.dimension));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto v = table.vector(column, rows[r]);
    for (std::size_t d = 0; d < cm.dimension; ++d) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) =
          (static_cast<double>(v[d]) - cm.input_mean[d]) / cm.input_scale[d];
    }
  }
  return x;
}

Matrix EncoderBundle::frozen_outputs(std::size_t column, const Matrix& inputs) const {
  const auto& cm = columns_[column];
  std::vector<Matrix> parts;
  Eigen::Index width = 0;
  for (std::size_t j = 0; j < cm.predictors.size(); ++j) {
    Matrix out = cm.predictors[j].forward(inputs);
    if (scalar_specs_[j].kind == ScalarKind::Categorical) out = softmax_rows(out);
    width += out.cols();
    parts.push_back(std::move(out));
  }
  Matrix all(inputs.rows(), width);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    all.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return all;
}

Matrix EncoderBundle::scalar_block(const Table& table, std::span<const std::size_t> rows) const {
  Matrix s = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(scalar_width()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t offset = 0;
    for (std::size_t j = 0; j < scalar_specs_.size(); ++j) {
      const std::size_t slot = scalar_specs_[j].slot_of(table.scalar(j, rows[r]));
      s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset + slot)) = 1.0;
      offset += scalar_specs_[j].width();
    }
  }
  return s;
}

void EncoderBundle::fit_predictors(std::size_t column, const Table& table, std::span<const std::size_t> rows,
                                   const TrainConfig& train_config, bool reinitialise, std::vector<double>& losses) {
  auto& cm = columns_[column];
  const Matrix x = standardized_inputs(column, table, rows);
  for (std::size_t j = 0; j < scalar_specs_.size(); ++j) {
    const auto& spec = scalar_specs_[j];
    TrainConfig tc = train_config;
    tc.seed = mix_seed(train_config.seed, 11, column, j);
    std::vector<std::size_t> usable;
    Matrix y;
    if (spec.kind == ScalarKind::Categorical) {
      tc.loss = Loss::CrossEntropy;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (spec.slot_of(table.scalar(j, rows[r])) < spec.categories.size()) usable.push_back(r);
      }
      y = Matrix::Zero(static_cast<Eigen::Index>(usable.size()), static_cast<Eigen::Index>(spec.categories.size()));
      for (std::size_t u = 0; u < usable.size(); ++u) {
        y(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(spec.slot_of(table.scalar(j, rows[usable[u]])))) = 1.0;
      }
    } else {
      tc.loss = Loss::MeanSquaredError;
      usable.resize(rows.size());
      std::iota(usable.begin(), usable.end(), std::size_t{0});
      y.resize(static_cast<Eigen::Index>(rows.size()), 1);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        y(static_cast<Eigen::Index>(r), 0) = (table.numeric(j, rows[r]) - cm.target_mean[j]) / cm.target_scale[j];
      }
    }
    const std::size_t out_width = spec.kind == ScalarKind::Categorical ? std::max<std::size_t>(1, spec.categories.size()) : 1;
    if (reinitialise) {
      cm.predictors[j] =
          FeedForwardNet::mlp(cm.dimension, config_.predictor_hidden, out_width, mix_seed(config_.seed, 1, column, j));
    }
    FeedForwardNet& net = cm.predictors[j];
    net.unfreeze();
    if (!usable.empty() && y.cols() > 0) {
      Matrix xs(static_cast<Eigen::Index>(usable.size()), x.cols());
      for (std::size_t u = 0; u < usable.size(); ++u) xs.row(static_cast<Eigen::Index>(u)) = x.row(static_cast<Eigen::Index>(usable[u]));
      const auto curve = train(net, xs, y, tc);
      losses.push_back(curve.back());
    } else {
      losses.push_back(0.0);
    }
    net.freeze();
  }
}

std::vector<std::vector<double>> EncoderBundle::train_frozen_predictors(const Table& table, const EncoderConfig& config) {
  config.validate();
  if (table.empty()) fail(ErrorCode::EmptyTable, "cannot train predictors on an empty table");
  require_scalars();
  if (scalar_specs_.size() != table.schema().scalar_columns.size()) {
    fail(ErrorCode::ColumnMismatch, "scalar encoders were fitted on a different schema");
  }
  config_ = config;
  config_hash_ = config.hash();
  const auto& schema = table.schema();
  const auto rows = sample_rows(table.row_count(), config.sample_size(table.row_count()), config.seed);
  columns_.assign(schema.vector_columns.size(), ColumnModel{});
  std::vector<std::vector<double>> losses(schema.vector_columns.size());
  for (std::size_t i = 0; i < schema.vector_columns.size(); ++i) {
    auto& cm = columns_[i];
    cm.dimension = schema.vector_columns[i].dimension;
    cm.input_mean.assign(cm.dimension, 0.0);
    cm.input_scale.assign(cm.dimension, 0.0);
    for (auto r : rows) {
      const auto v = table.vector(i, r);
      for (std::size_t d = 0; d < cm.dimension; ++d) cm.input_mean[d] += v[d];
    }
    for (auto& m : cm.input_mean) m /= static_cast<double>(rows.size());
    for (auto r : rows) {
      const auto v = table.vector(i, r);
      for (std::size_t d = 0; d < cm.dimension; ++d) {
        const double diff = v[d] - cm.input_mean[d];
        cm.input_scale[d] += diff * diff;
      }
    }
    for (auto& s : cm.input_scale) {
      s = std::sqrt(s / static_cast<double>(rows.size()));
      if (s < 1e-12) s = 1.0;
    }
    cm.target_mean.assign(scalar_specs_.size(), 0.0);
    cm.target_scale.assign(scalar_specs_.size(), 1.0);
    for (std::size_t j = 0; j < scalar_specs_.size(); ++j) {
      if (scalar_specs_[j].kind != ScalarKind::Numeric) continue;
      double mean = 0.0;
      for (auto r : rows) mean += table.numeric(j, r);
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (auto r : rows) var += (table.numeric(j, r) - mean) * (table.numeric(j, r) - mean);
      const double sd = std::sqrt(var / static_cast<double>(rows.size()));
      cm.target_mean[j] = mean;
      cm.target_scale[j] = sd < 1e-12 ? 1.0 : sd;
    }
    cm.predictors.resize(scalar_specs_.size());
    fit_predictors(i, table, rows, config.predictor_train, true, losses[i]);
    cm.projector = FeedForwardNet::mlp(cm.dimension, {config.projector_hidden}, config.projector_width,
                                       mix_seed(config.seed, 2, i, 0));
    cm.autoencoder_ready = false;
  }
  predictors_ready_ = true;
  return losses;
}

std::size_t EncoderBundle::embedding_width(std::size_t column) const {
  check_column(column);
  std::size_t w = scalar_width() + columns_[column].projector.output_size();
  for (const auto& p : columns_[column].predictors) w += p.output_size();
  return w;
}

std::vector<double> EncoderBundle::fit_autoencoder(std::size_t column, const Table& table,
                                                   std::span<const std::size_t> rows, const TrainConfig& tc) {
  auto& cm = columns_[column];
  const Matrix x = standardized_inputs(column, table, rows);
  const Matrix frozen = frozen_outputs(column, x);
  const Matrix scalars = scalar_block(table, rows);
  const Eigen::Index fw = frozen.cols();
  const auto pw = static_cast<Eigen::Index>(cm.projector.output_size());
  const Eigen::Index width = fw + pw + scalars.cols();

  cm.projector.reset_optimizer_state();
  cm.autoencoder.reset_optimizer_state();
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(tc.seed, 3, column, 0));
  std::vector<double> curve;
  FeedForwardNet::Trace ptrace;
  FeedForwardNet::Trace atrace;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      const Matrix xb = gather_rows(x, order, start, end);
      const Matrix projected = cm.projector.forward(xb, ptrace);
      Matrix e(xb.rows(), width);
      e.leftCols(fw) = gather_rows(frozen, order, start, end);
      e.middleCols(fw, pw) = projected;
      e.rightCols(scalars.cols()) = gather_rows(scalars, order, start, end);
      const Matrix out = cm.autoencoder.forward(e, atrace);
      weighted += loss_value(Loss::MeanSquaredError, out, e) * static_cast<double>(xb.rows());
      const Matrix g = loss_gradient(Loss::MeanSquaredError, out, e);
      auto agrads = cm.autoencoder.zero_gradients();
      // The embedding is both the input and the reconstruction target.
      const Matrix d_embed = cm.autoencoder.backward(atrace, g, agrads) - g;
      auto pgrads = cm.projector.zero_gradients();
      cm.projector.backward(ptrace, d_embed.middleCols(fw, pw), pgrads);
      add_weight_decay(cm.autoencoder, agrads, tc.weight_decay);
      add_weight_decay(cm.projector, pgrads, tc.weight_decay);
      cm.autoencoder.apply_gradients(agrads, tc.learning_rate, tc.momentum);
      cm.projector.apply_gradients(pgrads, tc.learning_rate, tc.momentum);
    }
    curve.push_back(weighted / static_cast<double>(order.size()));
  }
  cm.autoencoder_ready = true;
  return curve;
}

std::vector<double> EncoderBundle::train_autoencoder(const Table& table, std::size_t column, const EncoderConfig& config) {
  check_column(column);
  if (table.empty()) fail(ErrorCode::EmptyTable, "cannot train an autoencoder on an empty table");
  config.autoencoder_train.validate();
  auto& cm = columns_[column];
  std::size_t width = scalar_width() + cm.projector.output_size();
  for (const auto& p : cm.predictors) width += p.output_size();
  const std::size_t bottleneck = std::max(config_.min_bottleneck, width / 4);
  const std::size_t hidden = config_.autoencoder_hidden;
  cm.autoencoder = FeedForwardNet({width, hidden, bottleneck, hidden, width},
                                  {Activation::ReLU, Activation::Identity, Activation::ReLU, Activation::Identity},
                                  mix_seed(config_.seed, 4, column, 0));
  const auto rows = sample_rows(table.row_count(), config_.sample_size(table.row_count()), config_.seed);
  return fit_autoencoder(column, table, rows, config.autoencoder_train);
}

bool EncoderBundle::autoencoder_fitted(std::size_t column) const {
  return column < columns_.size() && columns_[column].autoencoder_ready;
}

bool EncoderBundle::ready() const {
  if (!predictors_ready_ || columns_.empty()) return false;
  return std::all_of(columns_.begin(), columns_.end(), [](const ColumnModel& c) { return c.autoencoder_ready; });
}

const FeedForwardNet& EncoderBundle::predictor(std::size_t column, std::size_t scalar) const {
  check_column(column);
  return columns_[column].predictors.at(scalar);
}

const FeedForwardNet& EncoderBundle::projector(std::size_t column) const {
  check_column(column);
  return columns_[column].projector;
}

const FeedForwardNet& EncoderBundle::autoencoder(std::size_t column) const {
  check_column(column);
  if (!columns_[column].autoencoder_ready) fail(ErrorCode::NotFitted, "autoencoder not trained");
  return columns_[column].autoencoder;
}

std::vector<double> EncoderBundle::encode_vector(std::size_t column, std::span<const float> v) const {
  check_column(column);
  const auto& cm = columns_[column];
  if (v.size() != cm.dimension) {
    fail(ErrorCode::DimensionMismatch, "vector of width " + std::to_string(v.size()) + " for a column of dimension " +
                                           std::to_string(cm.dimension));
  }
  Matrix x(1, static_cast<Eigen::Index>(cm.dimension));
  for (std::size_t d = 0; d < cm.dimension; ++d) {
    x(0, static_cast<Eigen::Index>(d)) = (static_cast<double>(v[d]) - cm.input_mean[d]) / cm.input_scale[d];
  }
  const Matrix frozen = frozen_outputs(column, x);
  const Matrix projected = cm.projector.forward(x);
  std::vector<double> out(frozen.data(), frozen.data() + frozen.size());
  out.insert(out.end(), projected.data(), projected.data() + projected.size());
  return out;
}

std::vector<double> EncoderBundle::encode_scalars(std::span<const ScalarValue> values) const {
  require_scalars();
  if (values.size() != scalar_specs_.size()) fail(ErrorCode::ShapeMismatch, "one value per scalar column expected");
  std::vector<double> out(scalar_width(), 0.0);
  std::size_t offset = 0;
  for (std::size_t j = 0; j < scalar_specs_.size(); ++j) {
    out[offset + scalar_specs_[j].slot_of(values[j])] = 1.0;
    offset += scalar_specs_[j].width();
  }
  return out;
}

std::vector<double> EncoderBundle::encode_predicates(std::span<const Predicate> predicates) const {
  require_scalars();
  for (const auto& p : predicates) {
    if (std::none_of(scalar_specs_.begin(), scalar_specs_.end(),
                     [&](const ScalarEncoderSpec& s) { return s.column == p.column; })) {
      fail(ErrorCode::UnknownColumn, p.column);
    }
  }
  std::vector<double> out(scalar_width(), 0.0);
  std::size_t offset = 0;
  for (const auto& spec : scalar_specs_) {
    const std::span<double> slot(out.data() + offset, spec.width());
    offset += spec.width();
    std::optional<ScalarValue> point;
    bool constrained = false;
    double lo = spec.kind == ScalarKind::Numeric ? spec.min() : 0.0;
    double hi = spec.kind == ScalarKind::Numeric ? spec.max() : 0.0;
    for (const auto& p : predicates) {
      if (p.column != spec.column) continue;
      constrained = true;
      if (p.op == CompareOp::Eq) {
        if (!point) point = p.operand;
        continue;
      }
      const double a = std::get<double>(p.operand);
      switch (p.op) {
        case CompareOp::Lt:
        case CompareOp::Le: hi = std::min(hi, a); break;
        case CompareOp::Gt:
        case CompareOp::Ge: lo = std::max(lo, a); break;
        case CompareOp::Between:
          lo = std::max(lo, a);
          hi = std::min(hi, std::get<double>(p.upper));
          break;
        case CompareOp::Eq: break;
      }
    }
    if (!constrained) {
      std::fill(slot.begin(), slot.end(), 1.0 / static_cast<double>(spec.width()));
      continue;
    }
    if (!point) {
      const double mid = std::clamp(0.5 * (lo + hi), spec.min(), spec.max());
      point = ScalarValue(mid);
    }
    spec.encode_into(*point, slot);
  }
  return out;
}

std::vector<double> EncoderBundle::joint_embedding(std::size_t column, std::span<const float> v,
                                                   std::span<const double> scalar_encoding) const {
  if (scalar_encoding.size() != scalar_width()) fail(ErrorCode::ShapeMismatch, "scalar encoding width");
  auto e = encode_vector(column, v);
  e.insert(e.end(), scalar_encoding.begin(), scalar_encoding.end());
  return e;
}

double EncoderBundle::reconstruction_error_from(std::size_t column, const std::vector<double>& embedding) const {
  const auto& ae = autoencoder(column);
  const auto out = ae.forward(embedding);
  double sum = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) sum += (out[i] - embedding[i]) * (out[i] - embedding[i]);
  return sum / static_cast<double>(out.size());
}

double EncoderBundle::reconstruction_error(std::size_t column, std::span<const float> q,
                                           std::span<const Predicate> predicates) const {
  return reconstruction_error_from(column, joint_embedding(column, q, encode_predicates(predicates)));
}

double EncoderBundle::reconstruction_error(std::size_t column, std::span<const float> v,
                                           std::span<const ScalarValue> values) const {
  return reconstruction_error_from(column, joint_embedding(column, v, encode_scalars(values)));
}

ReconstructionScore EncoderBundle::score(const HybridQuery& query) const {
  ReconstructionScore s;
  if (query.query_vectors.size() != columns_.size()) fail(ErrorCode::InvalidQuery, "query vector count");
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    s.per_column.push_back(reconstruction_error(i, query.query_vectors[i], query.predicates));
  }
  return s;
}

UpdateReport EncoderBundle::incremental_update(Table& table, std::span<const TupleId> new_ids,
                                               const EncoderConfig& config) {
  if (new_ids.empty()) fail(ErrorCode::EmptyBatch, "incremental update needs at least one new row");
  if (!ready()) fail(ErrorCode::NotFitted, "bundle must be fully trained before incremental updates");
  config.finetune_train.validate();
  std::vector<std::size_t> rows;
  rows.reserve(new_ids.size());
  for (auto id : new_ids) {
    const auto row = table.row_of(id);
    if (!row) fail(ErrorCode::UnknownId, "id " + std::to_string(id) + " is not in the table");
    rows.push_back(*row);
  }
  UpdateReport report;
  report.predictor_losses.resize(columns_.size());
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    fit_predictors(i, table, rows, config.finetune_train, false, report.predictor_losses[i]);
  }
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    report.autoencoder_curves.push_back(fit_autoencoder(i, table, rows, config.finetune_train));
  }
  table.take_pending_updates();
  return report;
}

void EncoderBundle::save(const std::filesystem::path& dir) const {
  require_predictors();
  std::filesystem::create_directories(dir);
  json specs = json::array();
  for (const auto& s : scalar_specs_) {
    specs.push_back({{"column", s.column},
                     {"kind", s.kind == ScalarKind::Categorical ? "categorical" : "numeric"},
                     {"categories", s.categories},
                     {"edges", s.edges}});
  }
  {
    std::ofstream out(dir / "scalar_encoders.json");
    out << specs.dump(2) << '\n';
    if (!out) fail(ErrorCode::IoError, "cannot write scalar encoders to " + dir.string());
  }
  json cols = json::array();
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& cm = columns_[i];
    for (std::size_t j = 0; j < cm.predictors.size(); ++j) {
      cm.predictors[j].save(dir / ("predictor_" + std::to_string(i) + "_" + std::to_string(j) + ".net"));
    }
    cm.projector.save(dir / ("projector_" + std::to_string(i) + ".net"));
    if (cm.autoencoder_ready) cm.autoencoder.save(dir / ("autoencoder_" + std::to_string(i) + ".net"));
    cols.push_back({{"dimension", cm.dimension},
                    {"input_mean", cm.input_mean},
                    {"input_scale", cm.input_scale},
                    {"target_mean", cm.target_mean},
                    {"target_scale", cm.target_scale},
                    {"autoencoder_ready", cm.autoencoder_ready}});
  }
  const json manifest{{"format", "hyq-encoder-bundle"},
                      {"version", kBundleVersion},
                      {"config_hash", config_hash_},
                      {"config", config_to_json(config_)},
                      {"columns", cols}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) fail(ErrorCode::IoError, "cannot write manifest to " + dir.string());
}

EncoderBundle EncoderBundle::load(const std::filesystem::path& dir) {
  auto read_json = [&](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) fail(ErrorCode::IoError, "cannot open " + p.string());
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorCode::FormatError, p.string() + ": " + e.what());
    }
  };
  EncoderBundle b;
  try {
    const json manifest = read_json(dir / "manifest.json");
    if (manifest.at("format") != "hyq-encoder-bundle" || manifest.at("version") != kBundleVersion) {
      fail(ErrorCode::FormatError, "unsupported encoder bundle in " + dir.string());
    }
    b.config_ = config_from_json(manifest.at("config"));
    b.config_hash_ = manifest.at("config_hash").get<std::string>();
    if (b.config_hash_ != b.config_.hash()) fail(ErrorCode::FormatError, "config hash mismatch in " + dir.string());
    for (const auto& s : read_json(dir / "scalar_encoders.json")) {
      ScalarEncoderSpec spec;
      spec.column = s.at("column").get<std::string>();
      spec.kind = s.at("kind") == "categorical" ? ScalarKind::Categorical : ScalarKind::Numeric;
      spec.categories = s.at("categories").get<std::vector<std::string>>();
      spec.edges = s.at("edges").get<std::vector<double>>();
      if (spec.kind == ScalarKind::Numeric && spec.edges.size() < 2) fail(ErrorCode::FormatError, "bad bin edges");
      b.scalar_specs_.push_back(std::move(spec));
    }
    std::size_t i = 0;
    for (const auto& c : manifest.at("columns")) {
      ColumnModel cm;
      cm.dimension = c.at("dimension").get<std::size_t>();
      cm.input_mean = c.at("input_mean").get<std::vector<double>>();
      cm.input_scale = c.at("input_scale").get<std::vector<double>>();
      cm.target_mean = c.at("target_mean").get<std::vector<double>>();
      cm.target_scale = c.at("target_scale").get<std::vector<double>>();
      cm.autoencoder_ready = c.at("autoencoder_ready").get<bool>();
      for (std::size_t j = 0; j < b.scalar_specs_.size(); ++j) {
        cm.predictors.push_back(
            FeedForwardNet::load(dir / ("predictor_" + std::to_string(i) + "_" + std::to_string(j) + ".net")));
      }
      cm.projector = FeedForwardNet::load(dir / ("projector_" + std::to_string(i) + ".net"));
      if (cm.autoencoder_ready) cm.autoencoder = FeedForwardNet::load(dir / ("autoencoder_" + std::to_string(i) + ".net"));
      b.columns_.push_back(std::move(cm));
      ++i;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::FormatError, dir.string() + ": " + e.what());
  }
  b.predictors_ready_ = !b.columns_.empty();
  return b;
}

}  // namespace hyq
