#pragma once

// Tokenization and frequency-thresholded vocabularies.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "caemb/common.hpp"

namespace caemb {

struct TokenizeRules {
  bool lowercase = true;
  bool strip_punct = true;
  bool strip_digits = true;
  // Record a segment boundary at every line break; context windows never
  // cross a boundary.
  bool segment_lines = false;

  // Identifies the rules that affect token spelling. Segmentation is not
  // part of it since it does not change which terms can occur.
  std::string id() const {
    std::string s = "lowercase=";
    s += lowercase ? '1' : '0';
    s += ";strip_punct=";
    s += strip_punct ? '1' : '0';
    s += ";strip_digits=";
    s += strip_digits ? '1' : '0';
    return s;
  }

  bool strips(unsigned char c) const {
    if (strip_digits && c >= '0' && c <= '9') return true;
    if (strip_punct && c < 0x80 && std::ispunct(c)) return true;
    return false;
  }

  // True when `term` could have been produced by tokenizing under these rules.
  bool admits(std::string_view term) const {
    if (term.empty()) return false;
    for (unsigned char c : term) {
      if (strips(c)) return false;
      if (lowercase && c >= 'A' && c <= 'Z') return false;
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return false;
    }
    return true;
  }
};

struct TokenStream {
  std::vector<std::string> tokens;
  // Positions p (0 < p < tokens.size()) such that tokens p-1 and p lie in
  // different segments. Strictly increasing.
  std::vector<std::size_t> segment_boundaries;
  TokenizeRules rules;
};

namespace detail {

inline bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Returns the byte offset of the first invalid UTF-8 sequence, or npos.
inline std::size_t find_invalid_utf8(std::string_view s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong encodings, surrogates, and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)
      return i;
    i += len;
  }
  return std::string_view::npos;
}

}  // namespace detail

// Split UTF-8 text on whitespace after lowercasing and stripping. Characters
// in the strip set are deleted, not replaced, so "b2c" becomes "bc".
inline TokenStream tokenize(std::string_view raw, const TokenizeRules& rules = {}) {
  if (auto bad = detail::find_invalid_utf8(raw); bad != std::string_view::npos)
    throw DecodeError(bad, "invalid UTF-8 sequence");

  TokenStream out;
  out.rules = rules;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (unsigned char c : raw) {
    if (detail::is_space(c)) {
      flush();
      if (c == '\n' && rules.segment_lines && !out.tokens.empty()) {
        std::size_t pos = out.tokens.size();
        if (out.segment_boundaries.empty() || out.segment_boundaries.back() != pos)
          out.segment_boundaries.push_back(pos);
      }
      continue;
    }
    if (rules.strips(c)) continue;
    if (rules.lowercase && c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    current.push_back(static_cast<char>(c));
  }
  flush();
  // A trailing newline leaves a boundary at the end of the stream.
  while (!out.segment_boundaries.empty() && out.segment_boundaries.back() >= out.tokens.size())
    out.segment_boundaries.pop_back();
  return out;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  // Terms must be distinct; order is taken as given.
  Vocabulary(std::vector<std::string> terms, std::vector<std::uint64_t> counts,
             std::optional<std::string> rules_id = std::nullopt)
      : terms_(std::move(terms)), counts_(std::move(counts)), rules_id_(std::move(rules_id)) {
    if (terms_.size() != counts_.size()) throw Error("vocabulary: terms/counts size mismatch");
    index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (terms_[i].empty()) throw Error("vocabulary: empty term at position " + std::to_string(i));
      if (!index_.emplace(terms_[i], i).second)
        throw Error("vocabulary: duplicate term '" + terms_[i] + "'");
    }
  }

  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }
  const std::string& term(std::size_t i) const { return terms_.at(i); }
  std::uint64_t count(std::size_t i) const { return counts_.at(i); }
  const std::optional<std::string>& rules_id() const noexcept { return rules_id_; }

  std::optional<std::size_t> find(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view term) const { return find(term).has_value(); }

  std::string to_tsv() const {
    std::string out;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      out += terms_[i];
      out += '\t';
      out += std::to_string(counts_[i]);
      out += '\n';
    }
    return out;
  }

  static Vocabulary from_tsv(std::string_view text) {
    std::vector<std::string> terms;
    std::vector<std::uint64_t> counts;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      auto line = text.substr(start, end - start);
      start = end + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      auto fields = split(line, '\t');
      std::uint64_t c = 0;
      if (fields.size() != 2 || fields[0].empty() || !parse_int(fields[1], c))
        throw ParseError(line_no, "expected term<TAB>count");
      terms.emplace_back(fields[0]);
      counts.push_back(c);
    }
    return Vocabulary(std::move(terms), std::move(counts));
  }

  // Content fingerprint over terms in order (counts excluded: two
  // vocabularies index a matrix identically iff their term lists agree).
  std::string fingerprint() const {
    std::string joined;
    for (const auto& t : terms_) {
      joined += t;
      joined += '\n';
    }
    return sha256_hex(joined);
  }

 private:
  std::vector<std::string> terms_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<std::string> rules_id_;
};

// Terms with frequency >= min_count, ordered by descending count and then
// lexicographically.
inline Vocabulary build_vocabulary(const TokenStream& stream, std::uint64_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::unordered_map<std::string_view, std::uint64_t> freq;
  for (const auto& t : stream.tokens) ++freq[t];

  std::vector<std::pair<std::string_view, std::uint64_t>> kept;
  for (const auto& [term, c] : freq)
    if (c >= min_count) kept.emplace_back(term, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> terms;
  std::vector<std::uint64_t> counts;
  terms.reserve(kept.size());
  counts.reserve(kept.size());
  for (const auto& [term, c] : kept) {
    terms.emplace_back(term);
    counts.push_back(c);
  }
  return Vocabulary(std::move(terms), std::move(counts), stream.rules.id());
}

}  // namespace caemb
