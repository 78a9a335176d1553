#include "hyq/config.hpp"

#include <fstream>
#include <sstream>

#include "hyq/error.hpp"
#include "hyq/random.hpp"
#include "hyq/text_util.hpp"

namespace hyq {
namespace {

constexpr std::uint64_t kSeedTag = 0xC0F1;

std::vector<std::string> list_items(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& part : split(text, ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::string bad_value(std::string_view key, std::string_view value) {
  return "bad value for " + std::string(key) + ": '" + std::string(value) + "'";
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile file;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorCode::ParseError, "line " + std::to_string(number) + ": expected key = value");
    }
    std::string key(trim(body.substr(0, eq)));
    if (key.empty()) fail(ErrorCode::ParseError, "line " + std::to_string(number) + ": empty key");
    if (file.values_.count(key)) fail(ErrorCode::ParseError, "line " + std::to_string(number) + ": duplicate key " + key);
    file.values_.emplace(std::move(key), std::string(trim(body.substr(eq + 1))));
  }
  return file;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool KeyValueFile::has(std::string_view key) const { return values_.find(key) != values_.end(); }

std::optional<std::string> KeyValueFile::raw(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  read_.insert(it->first);
  return it->second;
}

void KeyValueFile::set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

std::string KeyValueFile::get_string(std::string_view key, std::string fallback) const {
  auto v = raw(key);
  return v ? *v : std::move(fallback);
}

double KeyValueFile::get_double(std::string_view key, double fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    return parse_double(*v);
  } catch (const Error&) {
    fail(ErrorCode::InvalidConfig, bad_value(key, *v));
  }
}

std::uint64_t KeyValueFile::get_u64(std::string_view key, std::uint64_t fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    return parse_u64(*v);
  } catch (const Error&) {
    fail(ErrorCode::InvalidConfig, bad_value(key, *v));
  }
}

std::size_t KeyValueFile::get_size(std::string_view key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool KeyValueFile::get_bool(std::string_view key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  fail(ErrorCode::InvalidConfig, bad_value(key, *v));
}

std::vector<std::size_t> KeyValueFile::get_sizes(std::string_view key, std::vector<std::size_t> fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  try {
    for (const auto& item : list_items(*v)) out.push_back(static_cast<std::size_t>(parse_u64(item)));
  } catch (const Error&) {
    fail(ErrorCode::InvalidConfig, bad_value(key, *v));
  }
  return out;
}

std::vector<double> KeyValueFile::get_doubles(std::string_view key, std::vector<double> fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  try {
    for (const auto& item : list_items(*v)) out.push_back(parse_double(item));
  } catch (const Error&) {
    fail(ErrorCode::InvalidConfig, bad_value(key, *v));
  }
  return out;
}

std::map<std::string, std::string> KeyValueFile::with_prefix(std::string_view prefix) const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.size() > prefix.size() && std::string_view(k).substr(0, prefix.size()) == prefix) {
      read_.insert(k);
      out.emplace(k.substr(prefix.size()), v);
    }
  }
  return out;
}

std::vector<std::string> KeyValueFile::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!read_.count(k)) out.push_back(k);
  }
  return out;
}

std::vector<std::pair<double, double>> parse_ranges(std::string_view text) {
  std::vector<std::pair<double, double>> out;
  for (const auto& item : list_items(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail(ErrorCode::ParseError, "range needs lo:hi, got '" + item + "'");
    const double lo = parse_double(trim(std::string_view(item).substr(0, colon)));
    const double hi = parse_double(trim(std::string_view(item).substr(colon + 1)));
    if (!(lo >= 0.0 && lo <= hi && hi <= 1.0)) fail(ErrorCode::ParseError, "range outside [0, 1] or reversed: " + item);
    out.emplace_back(lo, hi);
  }
  return out;
}

void PipelineConfig::reseed(std::uint64_t base) {
  seed = base;
  engine.index.seed = mix_seed(base, kSeedTag, 1, 0);
  encoder.seed = mix_seed(base, kSeedTag, 2, 0);
  encoder.predictor_train.seed = mix_seed(base, kSeedTag, 2, 1);
  encoder.autoencoder_train.seed = mix_seed(base, kSeedTag, 2, 2);
  encoder.finetune_train.seed = mix_seed(base, kSeedTag, 2, 3);
  models.seed = mix_seed(base, kSeedTag, 3, 0);
  models.plan_train.seed = mix_seed(base, kSeedTag, 3, 1);
  models.param_train.seed = mix_seed(base, kSeedTag, 3, 2);
  table.seed = mix_seed(base, kSeedTag, 4, 0);
  workload.seed = mix_seed(base, kSeedTag, 5, 0);
}

PipelineConfig PipelineConfig::from(const KeyValueFile& f) {
  PipelineConfig c;
  c.reseed(f.get_u64("seed", c.seed));

  auto& e = c.engine;
  e.index.m = f.get_size("index.m", e.index.m);
  e.index.ef_construction = f.get_size("index.ef_construction", e.index.ef_construction);
  e.index.level_factor = f.get_double("index.level_factor", e.index.level_factor);
  e.index.seed = f.get_u64("index.seed", e.index.seed);
  e.probe.probe_k = f.get_size("probe.k", e.probe.probe_k);
  e.probe.ef_search = f.get_size("probe.ef_search", e.probe.ef_search);
  e.histogram_bins = f.get_size("stats.bins", e.histogram_bins);
  e.cost.graph_node_overhead = f.get_double("cost.graph_node_overhead", e.cost.graph_node_overhead);
  e.cost.predicate_base = f.get_double("cost.predicate_base", e.cost.predicate_base);
  e.cost.predicate_per_term = f.get_double("cost.predicate_per_term", e.cost.predicate_per_term);
  e.cost.candidate_overhead = f.get_double("cost.candidate_overhead", e.cost.candidate_overhead);

  auto& en = c.encoder;
  en.numeric_bins = f.get_size("encoder.numeric_bins", en.numeric_bins);
  en.sample_fraction = f.get_double("encoder.sample_fraction", en.sample_fraction);
  en.min_sample = f.get_size("encoder.min_sample", en.min_sample);
  en.max_sample = f.get_size("encoder.max_sample", en.max_sample);
  en.predictor_hidden = f.get_sizes("encoder.predictor_hidden", en.predictor_hidden);
  en.projector_hidden = f.get_size("encoder.projector_hidden", en.projector_hidden);
  en.projector_width = f.get_size("encoder.projector_width", en.projector_width);
  en.autoencoder_hidden = f.get_size("encoder.autoencoder_hidden", en.autoencoder_hidden);
  en.predictor_train.epochs = f.get_size("encoder.predictor_epochs", en.predictor_train.epochs);
  en.autoencoder_train.epochs = f.get_size("encoder.autoencoder_epochs", en.autoencoder_train.epochs);
  en.finetune_train.epochs = f.get_size("encoder.finetune_epochs", en.finetune_train.epochs);
  en.seed = f.get_u64("encoder.seed", en.seed);

  auto& m = c.models;
  m.plan_hidden = f.get_sizes("train.plan_hidden", m.plan_hidden);
  m.param_hidden = f.get_sizes("train.param_hidden", m.param_hidden);
  m.plan_train.epochs = f.get_size("train.plan_epochs", m.plan_train.epochs);
  m.param_train.epochs = f.get_size("train.param_epochs", m.param_train.epochs);
  m.plan_train.learning_rate = f.get_double("train.plan_learning_rate", m.plan_train.learning_rate);
  m.param_train.learning_rate = f.get_double("train.param_learning_rate", m.param_train.learning_rate);
  const double decay = f.get_double("train.weight_decay", m.plan_train.weight_decay);
  m.plan_train.weight_decay = decay;
  m.param_train.weight_decay = decay;
  m.validation_fraction = f.get_double("train.validation_fraction", m.validation_fraction);
  m.min_examples = f.get_size("train.min_examples", m.min_examples);
  m.safety_margin_log2 = f.get_double("train.safety_margin_log2", m.safety_margin_log2);
  m.seed = f.get_u64("train.seed", m.seed);
  c.training_queries = f.get_size("train.queries", c.training_queries);

  if (auto mode = f.raw("labels.cost_mode")) c.labels.cost_mode = parse_cost_mode(*mode);
  c.labels.repetitions = f.get_size("labels.repetitions", c.labels.repetitions);
  c.labels.warmup = f.get_size("labels.warmup", c.labels.warmup);
  c.labels.recall_headroom = f.get_double("labels.recall_headroom", c.labels.recall_headroom);

  if (const auto grid = f.with_prefix("grid."); !grid.empty()) {
    std::string text;
    for (const auto& [k, v] : grid) text += k + " = " + v + "\n";
    c.grid = parse_grid_spec(text);
  }

  auto& t = c.table;
  t.rows = f.get_size("table.rows", t.rows);
  t.dimensions = f.get_sizes("table.dims", t.dimensions);
  t.blobs = f.get_size("table.blobs", t.blobs);
  t.spread = f.get_double("table.spread", t.spread);
  t.clusters = f.get_size("table.clusters", t.clusters);
  t.planes = f.get_size("table.planes", t.planes);
  t.refs = f.get_size("table.refs", t.refs);
  t.uniform_column = f.get_bool("table.uniform_column", t.uniform_column);
  t.seed = f.get_u64("table.seed", t.seed);

  auto& w = c.workload;
  w.num_queries = f.get_size("workload.queries", w.num_queries);
  w.k = f.get_size("workload.k", w.k);
  w.min_predicates = f.get_size("workload.min_predicates", w.min_predicates);
  w.max_predicates = f.get_size("workload.max_predicates", w.max_predicates);
  w.strata = f.get_size("workload.strata", w.strata);
  w.stratum_cap = f.get_size("workload.stratum_cap", w.stratum_cap);
  if (auto r = f.raw("workload.selectivity")) w.selectivity_ranges = parse_ranges(*r);
  if (auto mode = f.raw("workload.weights")) w.weight_mode = parse_weight_mode(*mode);
  w.skew_fraction = f.get_double("workload.skew_fraction", w.skew_fraction);
  w.target_recalls = f.get_doubles("workload.target_recall", w.target_recalls);
  w.retries_per_slot = f.get_size("workload.retries", w.retries_per_slot);
  w.local_rate_strata = f.get_size("workload.local_rate_strata", w.local_rate_strata);
  w.local_rate_cap = f.get_size("workload.local_rate_cap", w.local_rate_cap);
  w.seed = f.get_u64("workload.seed", w.seed);

  c.eval.repetitions = f.get_size("eval.repetitions", c.eval.repetitions);

  if (const auto extra = f.unused(); !extra.empty()) {
    std::string msg = "unknown configuration keys:";
    for (const auto& k : extra) msg += " " + k;
    fail(ErrorCode::InvalidConfig, msg);
  }
  c.encoder.validate();
  c.models.validate();
  c.table.validate();
  c.workload.validate();
  c.engine.probe.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) { return from(KeyValueFile::load(path)); }

}  // namespace hyq
