#pragma once

// Sparse triplet text format shared by co-occurrence and transformed matrices:
//
//   %dim <I> <J>
//   %<key> <free text>          (any number of metadata lines)
//   i<TAB>j<TAB>value           (sorted by (i, j), 17 significant digits)

#include <Eigen/SparseCore>

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "caemb/common.hpp"

namespace caemb {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct TripletFile {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  // Metadata lines in file order, without the leading '%': (key, rest).
  std::vector<std::pair<std::string, std::string>> meta;
  SparseMatrix matrix;

  const std::string* find_meta(std::string_view key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return &v;
    return nullptr;
  }
};

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line_no, line);
  }
}

// `matrix` must be compressed. Entries are written in row-major order, which
// is the (i, j) sort order.
inline std::string write_triplets(const SparseMatrix& matrix,
                                  const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  std::string out = "%dim " + std::to_string(matrix.rows()) + " " + std::to_string(matrix.cols()) + "\n";
  for (const auto& [k, v] : meta) {
    out += '%';
    out += k;
    if (!v.empty()) {
      out += ' ';
      out += v;
    }
    out += '\n';
  }
  for (Eigen::Index i = 0; i < matrix.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(matrix, i); it; ++it) {
      out += std::to_string(i);
      out += '\t';
      out += std::to_string(it.col());
      out += '\t';
      out += format_double(it.value());
      out += '\n';
    }
  }
  return out;
}

inline TripletFile read_triplets(std::string_view text) {
  TripletFile f;
  bool have_dim = false;
  std::vector<Eigen::Triplet<double>> entries;
  long long prev_i = -1, prev_j = -1;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    if (line.front() == '%') {
      line.remove_prefix(1);
      auto sp = line.find(' ');
      std::string key(line.substr(0, sp));
      std::string rest = sp == std::string_view::npos ? std::string() : std::string(line.substr(sp + 1));
      if (key == "dim") {
        auto parts = split_whitespace(rest);
        if (parts.size() != 2 || !parse_int(parts[0], f.rows) || !parse_int(parts[1], f.cols) || f.rows < 0 ||
            f.cols < 0)
          throw ParseError(line_no, "malformed %dim header");
        have_dim = true;
      } else {
        f.meta.emplace_back(std::move(key), std::move(rest));
      }
      return;
    }
    if (!have_dim) throw ParseError(line_no, "entry before %dim header");
    auto fields = split(line, '\t');
    long long i = 0, j = 0;
    double v = 0;
    if (fields.size() != 3 || !parse_int(fields[0], i) || !parse_int(fields[1], j) || !parse_double(fields[2], v))
      throw ParseError(line_no, "expected i<TAB>j<TAB>value");
    if (i < 0 || j < 0 || i >= f.rows || j >= f.cols) throw ParseError(line_no, "index out of range");
    if (i < prev_i || (i == prev_i && j <= prev_j)) throw ParseError(line_no, "entries not sorted by (i, j)");
    prev_i = i;
    prev_j = j;
    entries.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
  });
  if (!have_dim) throw ParseError(1, "missing %dim header");
  f.matrix.resize(f.rows, f.cols);
  f.matrix.setFromTriplets(entries.begin(), entries.end());
  f.matrix.makeCompressed();
  return f;
}

}  // namespace caemb
