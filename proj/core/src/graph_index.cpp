#include "hyq/graph_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "hyq/binary_io.hpp"
#include "hyq/error.hpp"

namespace hyq {

std::string_view to_string(IterativeScan mode) {
  switch (mode) {
    case IterativeScan::Off: return "off";
    case IterativeScan::Relaxed: return "relaxed_order";
    case IterativeScan::Strict: return "strict_order";
  }
  return "?";
}

IterativeScan parse_iterative_scan(std::string_view text) {
  if (text == "off" || text == "Off") return IterativeScan::Off;
  if (text == "relaxed" || text == "relaxed_order" || text == "Relaxed") return IterativeScan::Relaxed;
  if (text == "strict" || text == "strict_order" || text == "Strict") return IterativeScan::Strict;
  fail(ErrorCode::ParseError, "unknown iterative_scan mode '" + std::string(text) + "'");
}

namespace {

constexpr std::string_view kIndexMagic = "HYQHNSW";
constexpr std::uint32_t kIndexVersion = 1;

// Epoch-tagged visited set, one per thread so const searches stay reentrant.
class VisitedSet {
 public:
  void reset(std::size_t n) {
    if (tags_.size() < n) tags_.resize(n, 0);
    if (++epoch_ == 0) {
      std::fill(tags_.begin(), tags_.end(), 0);
      epoch_ = 1;
    }
  }
  bool test_and_set(std::uint32_t node) {
    if (tags_[node] == epoch_) return true;
    tags_[node] = epoch_;
    return false;
  }

 private:
  std::vector<std::uint32_t> tags_;
  std::uint32_t epoch_ = 0;
};

VisitedSet& thread_visited() {
  thread_local VisitedSet set;
  return set;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

float l2_squared(const float* a, const float* b, std::size_t n) {
  float s0 = 0.f, s1 = 0.f, s2 = 0.f, s3 = 0.f;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float d0 = a[i] - b[i], d1 = a[i + 1] - b[i + 1], d2 = a[i + 2] - b[i + 2], d3 = a[i + 3] - b[i + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

float neg_dot(const float* a, const float* b, std::size_t n) {
  float s0 = 0.f, s1 = 0.f, s2 = 0.f, s3 = 0.f;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return -((s0 + s1) + (s2 + s3));
}

using Candidate = std::pair<float, std::uint32_t>;
using MinHeap = std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>>;
using MaxHeap = std::priority_queue<Candidate>;

}  // namespace

GraphIndex::GraphIndex(std::size_t column, std::size_t dimension, Metric metric, const BuildParams& params)
    : column_(column), dimension_(dimension), metric_(metric), params_(params), rng_state_(params.seed) {
  if (params_.m < 2) fail(ErrorCode::InvalidConfig, "HNSW m must be >= 2");
  if (params_.ef_construction < 1) fail(ErrorCode::InvalidConfig, "ef_construction must be >= 1");
  level_mult_ = params_.level_factor > 0.0 ? params_.level_factor : 1.0 / std::log(static_cast<double>(params_.m));
}

GraphIndex GraphIndex::build(const Table& table, std::size_t column, const BuildParams& params) {
  const auto& schema = table.schema();
  if (column >= schema.vector_columns.size()) fail(ErrorCode::UnknownColumn, "vector column " + std::to_string(column));
  if (table.empty()) fail(ErrorCode::EmptyTable, "cannot build an index over an empty table");
  const auto& spec = schema.vector_columns[column];
  GraphIndex index(column, spec.dimension, spec.metric, params);
  index.vectors_.reserve(table.row_count() * spec.dimension);
  for (std::size_t row = 0; row < table.row_count(); ++row) index.insert(table.id_at(row), table.vector(column, row));
  index.repair_connectivity();
  return index;
}

GraphIndex GraphIndex::build(const Table& table, std::string_view column, const BuildParams& params) {
  auto idx = table.schema().find_vector_column(column);
  if (!idx) fail(ErrorCode::UnknownColumn, std::string(column));
  return build(table, *idx, params);
}

bool GraphIndex::contains(TupleId id) const { return node_of_.count(id) != 0; }

float GraphIndex::fast_distance(std::span<const float> a, std::uint32_t node) const {
  const float* b = vectors_.data() + static_cast<std::size_t>(node) * dimension_;
  return metric_ == Metric::L2 ? l2_squared(a.data(), b, dimension_) : neg_dot(a.data(), b, dimension_);
}

float GraphIndex::fast_distance(std::uint32_t a, std::uint32_t b) const { return fast_distance(vec(a), b); }

int GraphIndex::draw_level() {
  const double u = static_cast<double>((splitmix64(rng_state_) >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  return static_cast<int>(std::floor(-std::log(u) * level_mult_));
}

void GraphIndex::insert(TupleId id, std::span<const float> vector) {
  if (vector.size() != dimension_) {
    fail(ErrorCode::DimensionMismatch,
         "got " + std::to_string(vector.size()) + ", expected " + std::to_string(dimension_));
  }
  if (node_of_.count(id)) fail(ErrorCode::DuplicateId, std::to_string(id));
  const auto node = static_cast<std::uint32_t>(ids_.size());
  vectors_.insert(vectors_.end(), vector.begin(), vector.end());
  ids_.push_back(id);
  node_of_.emplace(id, node);
  in_degree0_.push_back(0);
  links_.emplace_back();
  insert_node(node);
}

std::size_t GraphIndex::sync_with(const Table& table) {
  std::size_t added = 0;
  for (std::size_t row = 0; row < table.row_count(); ++row) {
    if (!contains(table.id_at(row))) {
      insert(table.id_at(row), table.vector(column_, row));
      ++added;
    }
  }
  if (added) repair_connectivity();
  return added;
}

std::uint32_t GraphIndex::greedy_descend(std::span<const float> query, int to_level, std::size_t& dist_count) const {
  std::uint32_t cur = entry_;
  float cur_d = fast_distance(query, cur);
  ++dist_count;
  for (int level = max_level_; level > to_level; --level) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::uint32_t nb : links_[cur][level]) {
        const float d = fast_distance(query, nb);
        ++dist_count;
        if (d < cur_d) {
          cur_d = d;
          cur = nb;
          changed = true;
        }
      }
    }
  }
  return cur;
}

std::vector<GraphIndex::Candidate> GraphIndex::search_layer(std::span<const float> query,
                                                            std::span<const std::uint32_t> entries, std::size_t ef,
                                                            int level) const {
  auto& visited = thread_visited();
  visited.reset(ids_.size());
  MinHeap candidates;
  MaxHeap best;
  for (std::uint32_t e : entries) {
    if (visited.test_and_set(e)) continue;
    const float d = fast_distance(query, e);
    candidates.push({d, e});
    best.push({d, e});
    if (best.size() > ef) best.pop();
  }
  while (!candidates.empty()) {
    const auto c = candidates.top();
    if (best.size() >= ef && c.first > best.top().first) break;
    candidates.pop();
    for (std::uint32_t nb : links_[c.second][level]) {
      if (visited.test_and_set(nb)) continue;
      const float d = fast_distance(query, nb);
      if (best.size() < ef || d < best.top().first) {
        candidates.push({d, nb});
        best.push({d, nb});
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Candidate> out(best.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = best.top();
    best.pop();
  }
  return out;
}

// Diversity heuristic: keep a candidate only if it is closer to the base than
// to every neighbor already kept.
std::vector<std::uint32_t> GraphIndex::select_neighbors(std::vector<Candidate> candidates, std::size_t m) const {
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> kept;
  kept.reserve(m);
  for (const auto& [d, node] : candidates) {
    if (kept.size() >= m) break;
    bool good = true;
    for (std::uint32_t r : kept) {
      if (fast_distance(node, r) < d) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(node);
  }
  return kept;
}

void GraphIndex::shrink_links(std::uint32_t node, int level) {
  auto& list = links_[node][level];
  std::vector<Candidate> cands;
  cands.reserve(list.size());
  for (std::uint32_t nb : list) cands.push_back({fast_distance(node, nb), nb});
  auto kept = select_neighbors(cands, max_degree(level));
  if (level == 0) {
    // Never drop the only in-link of a node when a multiply-linked neighbor
    // can give up its slot instead.
    auto is_kept = [&](std::uint32_t x) { return std::find(kept.begin(), kept.end(), x) != kept.end(); };
    std::sort(cands.begin(), cands.end());
    for (const auto& [d, x] : cands) {
      if (in_degree0_[x] > 1 || is_kept(x)) continue;
      if (kept.size() < max_degree(level)) {
        kept.push_back(x);
        continue;
      }
      for (std::size_t pos = kept.size(); pos-- > 0;) {
        if (in_degree0_[kept[pos]] > 1) {
          kept[pos] = x;
          break;
        }
      }
    }
    for (std::uint32_t nb : list) {
      if (!is_kept(nb)) --in_degree0_[nb];
    }
  }
  list = std::move(kept);
}

void GraphIndex::add_link(std::uint32_t from, std::uint32_t to, int level) {
  auto& list = links_[from][level];
  if (std::find(list.begin(), list.end(), to) != list.end()) return;
  list.push_back(to);
  if (level == 0) ++in_degree0_[to];
  if (list.size() > max_degree(level)) shrink_links(from, level);
}

void GraphIndex::insert_node(std::uint32_t node) {
  const int level = draw_level();
  links_[node].resize(static_cast<std::size_t>(level) + 1);
  if (max_level_ < 0) {
    entry_ = node;
    max_level_ = level;
    return;
  }
  std::size_t unused = 0;
  const auto query = vec(node);
  std::uint32_t cur = greedy_descend(query, level, unused);
  std::vector<std::uint32_t> entries{cur};
  for (int l = std::min(level, max_level_); l >= 0; --l) {
    auto found = search_layer(query, entries, params_.ef_construction, l);
    auto neighbors = select_neighbors(found, params_.m);
    links_[node][l] = neighbors;
    if (l == 0) {
      for (auto nb : neighbors) ++in_degree0_[nb];
    }
    for (auto nb : neighbors) add_link(nb, node, l);
    entries.clear();
    for (const auto& c : found) entries.push_back(c.second);
  }
  if (level > max_level_) {
    entry_ = node;
    max_level_ = level;
  }
  if (in_degree0_[node] == 0 && !links_[node][0].empty()) {
    // Every back-link was pruned; force one from the closest out-neighbor.
    std::uint32_t best = links_[node][0].front();
    auto& list = links_[best][0];
    if (list.size() >= max_degree(0)) {
      for (std::size_t pos = list.size(); pos-- > 0;) {
        if (in_degree0_[list[pos]] > 1) {
          --in_degree0_[list[pos]];
          list.erase(list.begin() + static_cast<std::ptrdiff_t>(pos));
          break;
        }
      }
    }
    if (list.size() < max_degree(0)) {
      list.push_back(node);
      ++in_degree0_[node];
    }
  }
}

std::vector<bool> GraphIndex::reachable_mask() const {
  std::vector<bool> seen(ids_.size(), false);
  if (ids_.empty()) return seen;
  std::vector<std::uint32_t> stack{entry_};
  seen[entry_] = true;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto nb : links_[u][0]) {
      if (!seen[nb]) {
        seen[nb] = true;
        stack.push_back(nb);
      }
    }
  }
  return seen;
}

std::size_t GraphIndex::reachable_count() const {
  const auto mask = reachable_mask();
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::size_t GraphIndex::repair_connectivity() {
  std::size_t fixed = 0;
  for (int round = 0; round < 8; ++round) {
    auto mask = reachable_mask();
    bool any = false;
    for (std::uint32_t u = 0; u < ids_.size(); ++u) {
      if (mask[u]) continue;
      any = true;
      const std::uint32_t entry = entry_;
      auto found = search_layer(vec(u), std::span<const std::uint32_t>(&entry, 1), params_.ef_construction, 0);
      std::optional<std::uint32_t> host;
      for (const auto& c : found) {
        if (c.second != u && mask[c.second] && links_[c.second][0].size() < max_degree(0)) {
          host = c.second;
          break;
        }
      }
      if (!host) {
        for (const auto& c : found) {
          if (c.second == u || !mask[c.second]) continue;
          auto& list = links_[c.second][0];
          for (std::size_t pos = list.size(); pos-- > 0;) {
            if (in_degree0_[list[pos]] > 1) {
              --in_degree0_[list[pos]];
              list.erase(list.begin() + static_cast<std::ptrdiff_t>(pos));
              host = c.second;
              break;
            }
          }
          if (host) break;
        }
      }
      if (!host) continue;
      links_[*host][0].push_back(u);
      ++in_degree0_[u];
      ++fixed;
      std::vector<std::uint32_t> stack{u};
      mask[u] = true;
      while (!stack.empty()) {
        const auto x = stack.back();
        stack.pop_back();
        for (auto nb : links_[x][0]) {
          if (!mask[nb]) {
            mask[nb] = true;
            stack.push_back(nb);
          }
        }
      }
    }
    if (!any) break;
  }
  return fixed;
}

void GraphIndex::validate() const {
  const std::size_t n = ids_.size();
  if (n == 0) return;
  if (entry_ >= n) fail(ErrorCode::CorruptIndex, "entry point out of range");
  if (level_of(entry_) != max_level_) fail(ErrorCode::CorruptIndex, "entry point is not on the top layer");
  for (std::uint32_t u = 0; u < n; ++u) {
    if (links_[u].empty()) fail(ErrorCode::CorruptIndex, "node without layer 0");
    if (level_of(u) > max_level_) fail(ErrorCode::CorruptIndex, "node above max level");
    for (int l = 0; l <= level_of(u); ++l) {
      const auto& list = links_[u][l];
      if (list.size() > max_degree(l)) fail(ErrorCode::CorruptIndex, "degree bound exceeded");
      for (auto nb : list) {
        if (nb >= n || nb == u) fail(ErrorCode::CorruptIndex, "bad neighbor id");
        if (level_of(nb) < l) fail(ErrorCode::CorruptIndex, "neighbor missing from layer");
      }
    }
  }
  if (reachable_count() != n) fail(ErrorCode::CorruptIndex, "layer 0 not fully reachable from entry point");
}

FilteredResult GraphIndex::run_search(std::span<const float> query, std::size_t k, const SearchParams& params,
                                      const IdPredicate* predicate) const {
  FilteredResult out;
  if (ids_.empty() || k == 0) {
    out.converged = k == 0;
    return out;
  }
  if (query.size() != dimension_) fail(ErrorCode::DimensionMismatch, "query dimension");
  const std::size_t ef = std::max(params.ef_search, k);
  const std::size_t cap = predicate ? params.max_scan_tuples.value_or(std::numeric_limits<std::size_t>::max())
                                    : std::numeric_limits<std::size_t>::max();
  const IterativeScan mode = predicate ? params.iterative_scan : IterativeScan::Off;

  std::size_t dist_count = 0;
  const std::uint32_t ep = greedy_descend(query, 0, dist_count);

  auto& visited = thread_visited();
  visited.reset(ids_.size());
  std::vector<Candidate> found;
  std::priority_queue<float> kbest;  // Strict: k smallest qualifying distances
  bool capped = false;

  auto evaluate = [&](std::uint32_t node, float d) {
    ++out.scanned_count;
    if (predicate == nullptr || (*predicate)(ids_[node])) {
      found.push_back({d, node});
      if (mode == IterativeScan::Strict) {
        kbest.push(d);
        if (kbest.size() > k) kbest.pop();
      }
    }
  };

  MinHeap candidates;
  MaxHeap best;
  std::vector<Candidate> overflow;
  if (cap == 0) {
    capped = true;
  } else {
    visited.test_and_set(ep);
    const float d0 = fast_distance(query, ep);
    ++dist_count;
    evaluate(ep, d0);
    candidates.push({d0, ep});
    best.push({d0, ep});
  }

  // One beam pass of width ef.
  while (!candidates.empty() && !capped) {
    const auto c = candidates.top();
    if (best.size() >= ef && c.first > best.top().first) break;
    candidates.pop();
    for (std::uint32_t nb : links_[c.second][0]) {
      if (visited.test_and_set(nb)) continue;
      if (out.scanned_count >= cap) {
        capped = true;
        break;
      }
      const float d = fast_distance(query, nb);
      ++dist_count;
      evaluate(nb, d);
      if (best.size() < ef || d < best.top().first) {
        candidates.push({d, nb});
        best.push({d, nb});
        if (best.size() > ef) best.pop();
      } else {
        overflow.push_back({d, nb});
      }
    }
  }

  // Iterative widening from every evaluated-but-unexpanded node.
  if (mode != IterativeScan::Off && !capped && found.size() < k) {
    MinHeap frontier(std::greater<>{}, std::move(overflow));
    while (!candidates.empty()) {
      frontier.push(candidates.top());
      candidates.pop();
    }
    while (!frontier.empty() && !capped) {
      if (found.size() >= k) {
        if (mode == IterativeScan::Relaxed) break;
        if (frontier.top().first >= kbest.top()) break;
      }
      const auto c = frontier.top();
      frontier.pop();
      for (std::uint32_t nb : links_[c.second][0]) {
        if (visited.test_and_set(nb)) continue;
        if (out.scanned_count >= cap) {
          capped = true;
          break;
        }
        const float d = fast_distance(query, nb);
        ++dist_count;
        evaluate(nb, d);
        frontier.push({d, nb});
        if (mode == IterativeScan::Relaxed && found.size() >= k) break;
      }
    }
  }

  // Exact re-ranking. Fast distances only pre-select a generous superset of
  // the top k so float rounding cannot change membership.
  if (found.size() > k) {
    std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(k - 1), found.end());
    const float kth = found[k - 1].first;
    const float limit = kth + 1e-4f * (std::fabs(kth) + 1.0f);
    found.erase(std::remove_if(found.begin(), found.end(), [&](const Candidate& c) { return c.first > limit; }),
                found.end());
  }
  out.results.reserve(found.size());
  for (const auto& [d, node] : found) {
    out.results.push_back({ids_[node], distance(metric_, query, vec(node))});
  }
  std::sort(out.results.begin(), out.results.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  if (out.results.size() > k) out.results.resize(k);
  out.converged = out.results.size() >= k;
  out.distance_computations = dist_count;
  return out;
}

std::vector<Neighbor> GraphIndex::search(std::span<const float> query, std::size_t k, const SearchParams& params,
                                         std::size_t* distance_computations) const {
  auto r = run_search(query, k, params, nullptr);
  if (distance_computations) *distance_computations = r.distance_computations;
  return std::move(r.results);
}

FilteredResult GraphIndex::filtered_search(std::span<const float> query, std::size_t k, const SearchParams& params,
                                           const IdPredicate& predicate) const {
  return run_search(query, k, params, &predicate);
}

void GraphIndex::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.magic(kIndexMagic);
  w.u32(kIndexVersion);
  w.u64(column_);
  w.u64(dimension_);
  w.u8(static_cast<std::uint8_t>(metric_));
  w.u64(params_.m);
  w.u64(params_.ef_construction);
  w.f64(params_.level_factor);
  w.u64(params_.seed);
  w.u64(rng_state_);
  w.u32(entry_);
  w.u32(static_cast<std::uint32_t>(max_level_ + 1));
  w.u64s(ids_);
  for (const auto& node : links_) {
    w.u32(static_cast<std::uint32_t>(node.size()));
    for (const auto& list : node) w.u32s(list);
  }
  w.close();
}

GraphIndex GraphIndex::load(const std::filesystem::path& path, const Table& table) {
  BinaryReader r(path);
  r.expect_magic(kIndexMagic);
  if (r.u32() != kIndexVersion) fail(ErrorCode::FormatError, "unsupported index version");
  const std::size_t column = r.u64();
  const std::size_t dimension = r.u64();
  const auto metric = static_cast<Metric>(r.u8());
  BuildParams params;
  params.m = r.u64();
  params.ef_construction = r.u64();
  params.level_factor = r.f64();
  params.seed = r.u64();
  const auto& schema = table.schema();
  if (column >= schema.vector_columns.size() || schema.vector_columns[column].dimension != dimension ||
      schema.vector_columns[column].metric != metric) {
    fail(ErrorCode::CorruptIndex, "index does not match table schema");
  }
  GraphIndex index(column, dimension, metric, params);
  index.rng_state_ = r.u64();
  index.entry_ = r.u32();
  index.max_level_ = static_cast<int>(r.u32()) - 1;
  index.ids_ = r.u64s();
  const std::size_t n = index.ids_.size();
  index.links_.resize(n);
  index.in_degree0_.assign(n, 0);
  index.vectors_.reserve(n * dimension);
  for (std::uint32_t u = 0; u < n; ++u) {
    const TupleId id = index.ids_[u];
    auto row = table.row_of(id);
    if (!row) fail(ErrorCode::CorruptIndex, "index references unknown id " + std::to_string(id));
    auto v = table.vector(column, *row);
    index.vectors_.insert(index.vectors_.end(), v.begin(), v.end());
    index.node_of_.emplace(id, u);
    const std::uint32_t levels = r.u32();
    if (levels == 0) fail(ErrorCode::CorruptIndex, "node without layer 0");
    for (std::uint32_t l = 0; l < levels; ++l) index.links_[u].push_back(r.u32s());
  }
  for (const auto& node : index.links_) {
    for (auto nb : node[0]) {
      if (nb >= n) fail(ErrorCode::CorruptIndex, "bad neighbor id");
      ++index.in_degree0_[nb];
    }
  }
  index.validate();
  return index;
}

}  // namespace hyq
