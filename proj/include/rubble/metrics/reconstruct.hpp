// Recovers integer confusion counts from a row-percentage table and a stated accuracy.
//
// For each truth row, a sample count n is admissible when every cell
// round(pct * n / 100) re-renders to the printed percentage at one decimal and
// the cells sum to n. Among admissible per-row counts we pick the combination
// whose implied accuracy matches the stated figure, minimizing first the total,
// then the spread (max - min), then lexicographically.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rubble/metrics/confusion.hpp"

namespace rubble::metrics {

class NoConsistentCounts : public Error {
 public:
  using Error::Error;
};

struct PercentTable {
  std::vector<std::string> labels;
  bool has_uncertain = false;
  std::vector<std::vector<double>> rows;  // truth x (labels [+ uncertain]) percentages
};

struct StatedAccuracy {
  double percent = 0.0;
  int decimals = 1;
};

struct Reconstruction {
  std::vector<std::uint64_t> per_class;
  ConfusionMatrix matrix;
};

namespace detail {

/// 100 * num / den in units of 10^-decimals, rounded half-up, exact.
inline std::int64_t scaled_pct(std::uint64_t num, std::uint64_t den, int decimals) {
  std::uint64_t scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  return static_cast<std::int64_t>((200 * scale * num + den) / (2 * den));
}

struct RowCandidate {
  std::uint64_t n = 0;
  std::uint64_t diag = 0;
  std::vector<std::uint64_t> cells;
};

inline std::vector<RowCandidate> row_candidates(const std::vector<double>& pct, std::size_t diag_col, std::uint64_t n_max) {
  std::vector<std::int64_t> tenths;
  for (double p : pct) {
    if (p < 0.0) throw std::invalid_argument("negative row percentage");
    tenths.push_back(std::llround(p * 10.0));
  }
  std::vector<RowCandidate> out;
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    RowCandidate c;
    c.n = n;
    std::uint64_t sum = 0;
    bool ok = true;
    for (auto t : tenths) {
      const auto cell = (2 * static_cast<std::uint64_t>(t) * n + 1000) / 2000;
      if (scaled_pct(cell, n, 1) != t) {
        ok = false;
        break;
      }
      c.cells.push_back(cell);
      sum += cell;
    }
    if (!ok || sum != n) continue;
    c.diag = c.cells[diag_col];
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

inline Reconstruction reconstruct_counts(const PercentTable& table, StatedAccuracy accuracy, std::uint64_t n_max = 200) {
  const std::size_t k = table.labels.size();
  const std::size_t cols = k + (table.has_uncertain ? 1 : 0);
  if (table.rows.size() != k || k == 0) throw std::invalid_argument("percent table needs one row per label");
  for (const auto& r : table.rows) {
    if (r.size() != cols) throw std::invalid_argument("percent table row has the wrong width");
  }

  std::vector<std::vector<detail::RowCandidate>> cands;
  for (std::size_t i = 0; i < k; ++i) {
    cands.push_back(detail::row_candidates(table.rows[i], i, n_max));
    if (cands.back().empty()) {
      throw NoConsistentCounts("row '" + table.labels[i] + "' has no sample count <= " + std::to_string(n_max) +
                               " matching its percentages");
    }
  }

  const std::int64_t target = [&] {
    double s = 1.0;
    for (int i = 0; i < accuracy.decimals; ++i) s *= 10.0;
    return std::llround(accuracy.percent * s);
  }();
  const auto accuracy_ok = [&](std::uint64_t diag, std::uint64_t total) {
    return total > 0 && detail::scaled_pct(diag, total, accuracy.decimals) == target;
  };

  // suffix[i] = every (total, diagonal) reachable by rows i..k-1
  std::vector<std::set<std::pair<std::uint64_t, std::uint64_t>>> suffix(k + 1);
  suffix[k].insert({0, 0});
  for (std::size_t i = k; i-- > 0;) {
    for (const auto& [n, d] : suffix[i + 1]) {
      for (const auto& c : cands[i]) suffix[i].insert({n + c.n, d + c.diag});
    }
  }
  std::uint64_t best_total = std::numeric_limits<std::uint64_t>::max();
  for (const auto& [n, d] : suffix[0]) {
    if (n < best_total && accuracy_ok(d, n)) best_total = n;
  }
  if (best_total == std::numeric_limits<std::uint64_t>::max()) {
    throw NoConsistentCounts("no per-class counts reproduce the stated accuracy");
  }

  std::vector<std::size_t> choice(k), best_choice;
  std::uint64_t best_spread = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> best_counts;
  const auto visit = [&](auto&& self, std::size_t row, std::uint64_t n_sum, std::uint64_t d_sum) -> void {
    if (row == k) {
      if (n_sum != best_total || !accuracy_ok(d_sum, n_sum)) return;
      std::vector<std::uint64_t> counts;
      for (std::size_t i = 0; i < k; ++i) counts.push_back(cands[i][choice[i]].n);
      const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
      const std::uint64_t spread = *mx - *mn;
      if (spread < best_spread || (spread == best_spread && counts < best_counts)) {
        best_spread = spread;
        best_counts = counts;
        best_choice = choice;
      }
      return;
    }
    for (std::size_t j = 0; j < cands[row].size(); ++j) {
      const auto& c = cands[row][j];
      if (n_sum + c.n > best_total) break;  // candidates are ascending in n
      const std::uint64_t rest_n = best_total - n_sum - c.n;
      bool feasible = false;
      for (auto it = suffix[row + 1].lower_bound({rest_n, 0}); it != suffix[row + 1].end() && it->first == rest_n; ++it) {
        if (accuracy_ok(d_sum + c.diag + it->second, best_total)) {
          feasible = true;
          break;
        }
      }
      if (!feasible) continue;
      choice[row] = j;
      self(self, row + 1, n_sum + c.n, d_sum + c.diag);
    }
  };
  visit(visit, 0, 0, 0);

  Reconstruction out;
  out.per_class = best_counts;
  out.matrix = ConfusionMatrix(table.labels, table.has_uncertain);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& c = cands[i][best_choice[i]];
    for (std::size_t col = 0; col < cols; ++col) out.matrix.at(i, col) = c.cells[col];
  }
  return out;
}

/// Row percentages and F1 scores reported for the field-recorded validation set.
struct ReportedTable {
  PercentTable table;
  StatedAccuracy accuracy;
  std::vector<double> f1;
};

inline ReportedTable field_validation_table() {
  return {{{"breathes", "cough", "hello_help", "muffled_words", "noise"},
           false,
           {{75.0, 8.3, 0.0, 16.7, 0.0},
            {0.0, 87.5, 0.0, 12.5, 0.0},
            {6.3, 0.0, 93.8, 0.0, 0.0},
            {7.1, 14.3, 7.1, 64.3, 7.1},
            {0.0, 0.0, 0.0, 0.0, 100.0}}},
          {83.6, 1},
          {0.78, 0.78, 0.94, 0.69, 0.96}};
}

/// Row percentages and F1 scores reported for the field-recorded test set, with an uncertain column.
inline ReportedTable field_test_table() {
  return {{{"breathes", "cough", "hello_help", "muffled_words", "noise"},
           true,
           {{83.3, 0.0, 0.0, 8.3, 0.0, 8.3},
            {8.3, 83.3, 0.0, 8.3, 0.0, 0.0},
            {0.0, 0.0, 100.0, 0.0, 0.0, 0.0},
            {0.0, 0.0, 0.0, 86.7, 6.7, 6.7},
            {0.0, 0.0, 0.0, 0.0, 100.0, 0.0}}},
          {89.83, 2},
          {0.87, 0.91, 1.00, 0.87, 0.95}};
}

}  // namespace rubble::metrics
