#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hyq/benchgen.hpp"
#include "hyq/correlation_encoder.hpp"
#include "hyq/executor.hpp"
#include "hyq/harness.hpp"
#include "hyq/plan_rewriter.hpp"
#include "hyq/training.hpp"

namespace hyq {

// `key = value` lines; '#' starts a comment. Keys are case-sensitive and
// may appear once.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text);              // throws ParseError
  static KeyValueFile load(const std::filesystem::path& path);   // throws IoError, ParseError

  bool has(std::string_view key) const;
  std::optional<std::string> raw(std::string_view key) const;
  void set(std::string key, std::string value);

  std::string get_string(std::string_view key, std::string fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<std::size_t> get_sizes(std::string_view key, std::vector<std::size_t> fallback) const;
  std::vector<double> get_doubles(std::string_view key, std::vector<double> fallback) const;

  // Keys with the given prefix, prefix stripped.
  std::map<std::string, std::string> with_prefix(std::string_view prefix) const;
  // Keys never looked up through a getter, raw() or with_prefix().
  std::vector<std::string> unused() const;
  const std::map<std::string, std::string, std::less<>>& entries() const noexcept { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
  mutable std::set<std::string, std::less<>> read_;
};

// Everything the command-line pipeline needs, with defaults.
struct PipelineConfig {
  std::uint64_t seed = 42;
  EngineConfig engine;
  EncoderConfig encoder;
  ModelTrainConfig models;
  LabelConfig labels;
  GridSpec grid;
  SyntheticTableSpec table;
  WorkloadSpec workload;
  std::size_t training_queries = 400;
  EvalConfig eval;

  // Unknown keys raise InvalidConfig so typos surface.
  static PipelineConfig from(const KeyValueFile& file);
  static PipelineConfig load(const std::filesystem::path& path);
  // Derives every component seed from one base seed.
  void reseed(std::uint64_t base);
};

// "0.001:0.01, 0.5:1" -> {{0.001, 0.01}, {0.5, 1}}.
std::vector<std::pair<double, double>> parse_ranges(std::string_view text);

}  // namespace hyq
