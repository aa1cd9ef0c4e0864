#pragma once

// Distance-weighted word-context co-occurrence counting.

#include <algorithm>
#include <numeric>
#include <cstdint>
#include <future>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "caemb/corpus.hpp"
#include "caemb/sparse_io.hpp"

namespace caemb {

enum class Weighting { harmonic, uniform };
enum class OovPolicy { remove, hold_position };

inline const char* to_string(Weighting w) { return w == Weighting::harmonic ? "harmonic" : "uniform"; }
inline const char* to_string(OovPolicy p) { return p == OovPolicy::remove ? "delete" : "hold-position"; }

inline Weighting parse_weighting(std::string_view s) {
  if (s == "harmonic") return Weighting::harmonic;
  if (s == "uniform") return Weighting::uniform;
  throw ConfigError("unknown weighting '" + std::string(s) + "'");
}

inline OovPolicy parse_oov_policy(std::string_view s) {
  if (s == "delete") return OovPolicy::remove;
  if (s == "hold-position") return OovPolicy::hold_position;
  throw ConfigError("unknown oov policy '" + std::string(s) + "'");
}

struct CountOptions {
  std::size_t window = 2;
  Weighting weighting = Weighting::harmonic;
  OovPolicy oov = OovPolicy::remove;
  // Number of worker threads; 0 picks the hardware concurrency. The result
  // does not depend on this value.
  unsigned threads = 0;
};

class CooccurrenceMatrix {
 public:
  CooccurrenceMatrix() = default;
  CooccurrenceMatrix(SparseMatrix entries, std::string vocab_hash)
      : entries_(std::move(entries)), vocab_hash_(std::move(vocab_hash)) {
    if (entries_.rows() != entries_.cols()) throw Error("co-occurrence matrix must be square");
    entries_.makeCompressed();
  }

  Eigen::Index dim() const noexcept { return entries_.rows(); }
  const SparseMatrix& entries() const noexcept { return entries_; }
  const std::string& vocab_hash() const noexcept { return vocab_hash_; }

  double at(Eigen::Index i, Eigen::Index j) const { return entries_.coeff(i, j); }
  double total() const { return entries_.sum(); }

  std::string to_triplets() const { return write_triplets(entries_, {{"vocab", vocab_hash_}}); }

  static CooccurrenceMatrix from_triplets(std::string_view text) {
    auto f = read_triplets(text);
    if (f.rows != f.cols) throw ParseError(1, "co-occurrence matrix must be square");
    const std::string* vh = f.find_meta("vocab");
    return CooccurrenceMatrix(std::move(f.matrix), vh ? *vh : std::string());
  }

 private:
  SparseMatrix entries_;
  std::string vocab_hash_;
};

namespace detail {

// Shard size in (filtered) stream positions. Fixed so that the floating-point
// summation order, and therefore the output bits, do not depend on the number
// of threads.
inline constexpr std::size_t kCountShard = std::size_t{1} << 16;

using PairAccumulator = std::unordered_map<std::uint64_t, double>;

// Harmonic weights 1/d are accumulated as the integers scale/d with
// scale = lcm(1..window), and divided by scale once at the end. Every sum is
// then exact, so the result does not depend on the order of additions.
// Windows whose lcm exceeds kMaxWeightScale fall back to adding 1/d directly.
inline constexpr std::uint64_t kMaxWeightScale = std::uint64_t{1} << 24;

inline std::uint64_t weight_scale(std::size_t window, Weighting w) {
  if (w == Weighting::uniform) return 1;
  std::uint64_t l = 1;
  for (std::uint64_t d = 2; d <= window; ++d) {
    l = std::lcm(l, d);
    if (l > kMaxWeightScale) return 0;
  }
  return l;
}

inline void count_shard(const std::vector<std::int32_t>& ids, const std::vector<std::uint32_t>& segment,
                        std::size_t begin, std::size_t end, const CountOptions& opt, std::uint64_t dim,
                        std::uint64_t scale, PairAccumulator& acc) {
  const std::size_t n = ids.size();
  for (std::size_t t = begin; t < end; ++t) {
    const std::int32_t a = ids[t];
    if (a < 0) continue;
    for (std::size_t d = 1; d <= opt.window && t + d < n; ++d) {
      if (segment[t + d] != segment[t]) break;
      const std::int32_t b = ids[t + d];
      if (b < 0) continue;
      const double w = opt.weighting == Weighting::uniform ? 1.0
                       : scale                              ? static_cast<double>(scale / d)
                                                            : 1.0 / static_cast<double>(d);
      // Both orientations receive the same sequence of additions, which
      // keeps the matrix bitwise symmetric.
      acc[static_cast<std::uint64_t>(a) * dim + static_cast<std::uint64_t>(b)] += w;
      acc[static_cast<std::uint64_t>(b) * dim + static_cast<std::uint64_t>(a)] += w;
    }
  }
}

}  // namespace detail

// Symmetric window counting: every in-vocabulary pair at distance d <= window
// within one segment adds 1/d (harmonic) or 1 (uniform) to both (a, b) and
// (b, a). Self pairs at distinct positions land on the diagonal.
inline CooccurrenceMatrix count_cooccurrences(const TokenStream& stream, const Vocabulary& vocab,
                                              const CountOptions& opt = {}) {
  if (opt.window < 1) throw ConfigError("window must be >= 1");
  if (vocab.rules_id() && *vocab.rules_id() != stream.rules.id())
    throw ConfigError("vocabulary was built with rules '" + *vocab.rules_id() + "' but the stream used '" +
                      stream.rules.id() + "'");
  for (const auto& term : vocab.terms())
    if (!stream.rules.admits(term))
      throw ConfigError("vocabulary term '" + term + "' cannot occur under the stream's tokenization rules");

  const std::uint64_t dim = vocab.size();
  std::vector<std::int32_t> ids;
  std::vector<std::uint32_t> segment;
  ids.reserve(stream.tokens.size());
  segment.reserve(stream.tokens.size());
  std::uint32_t seg = 0;
  std::size_t next_boundary = 0;
  for (std::size_t t = 0; t < stream.tokens.size(); ++t) {
    while (next_boundary < stream.segment_boundaries.size() && stream.segment_boundaries[next_boundary] <= t) {
      ++seg;
      ++next_boundary;
    }
    auto idx = vocab.find(stream.tokens[t]);
    if (!idx && opt.oov == OovPolicy::remove) continue;
    ids.push_back(idx ? static_cast<std::int32_t>(*idx) : -1);
    segment.push_back(seg);
  }

  const std::uint64_t scale = detail::weight_scale(opt.window, opt.weighting);
  const std::size_t n = ids.size();
  const std::size_t n_shards = (n + detail::kCountShard - 1) / detail::kCountShard;
  std::vector<detail::PairAccumulator> shards(n_shards);
  unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n_shards, 1)));
  auto work = [&](unsigned worker) {
    for (std::size_t s = worker; s < n_shards; s += threads)
      detail::count_shard(ids, segment, s * detail::kCountShard, std::min(n, (s + 1) * detail::kCountShard), opt,
                          dim, scale, shards[s]);
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::future<void>> jobs;
    for (unsigned w = 0; w < threads; ++w) jobs.push_back(std::async(std::launch::async, work, w));
    for (auto& j : jobs) j.get();
  }

  detail::PairAccumulator total;
  if (n_shards == 1) {
    total = std::move(shards[0]);
  } else {
    for (auto& s : shards) {
      for (const auto& [key, w] : s) total[key] += w;
      detail::PairAccumulator().swap(s);
    }
  }

  std::vector<std::pair<std::uint64_t, double>> sorted(total.begin(), total.end());
  detail::PairAccumulator().swap(total);
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sorted.size());
  const double divisor = scale > 1 ? static_cast<double>(scale) : 1.0;
  for (const auto& [key, w] : sorted)
    trips.emplace_back(static_cast<int>(key / dim), static_cast<int>(key % dim), w / divisor);
  SparseMatrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  m.setFromTriplets(trips.begin(), trips.end());
  return CooccurrenceMatrix(std::move(m), vocab.fingerprint());
}

}  // namespace caemb
