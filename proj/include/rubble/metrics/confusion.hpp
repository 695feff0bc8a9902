// Confusion matrices with an optional "uncertain" column, per-class
// precision/recall/F1, and table/CSV rendering.
//
// Uncertain decisions are never a predicted class: they do not enter any
// precision denominator, but they count against recall and accuracy.
#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rubble/core.hpp"

namespace rubble::metrics {

inline constexpr std::string_view kUncertain = "uncertain";

class UnknownLabel : public Error {
 public:
  using Error::Error;
};

struct ConfusionMatrix {
  std::vector<std::string> labels;
  bool has_uncertain = false;
  std::vector<std::uint64_t> counts;  // rows = truth, cols = prediction (+ uncertain)

  ConfusionMatrix() = default;
  ConfusionMatrix(std::vector<std::string> names, bool uncertain_column)
      : labels(std::move(names)), has_uncertain(uncertain_column), counts(labels.size() * columns(), 0) {}

  std::size_t classes() const { return labels.size(); }
  std::size_t columns() const { return labels.size() + (has_uncertain ? 1 : 0); }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * columns() + pred]; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * columns() + pred]; }
  std::uint64_t uncertain(std::size_t truth) const { return has_uncertain ? at(truth, classes()) : 0; }

  std::uint64_t row_total(std::size_t truth) const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < columns(); ++c) s += at(truth, c);
    return s;
  }
  std::uint64_t column_total(std::size_t pred) const {
    std::uint64_t s = 0;
    for (std::size_t r = 0; r < classes(); ++r) s += at(r, pred);
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < classes(); ++k) s += at(k, k);
    return s;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline std::vector<std::string> class_labels() {
  return {kClassNames.begin(), kClassNames.end()};
}

/// Tallies (truth, prediction) label pairs. A prediction equal to "uncertain"
/// lands in the uncertain column when the matrix has one.
inline ConfusionMatrix confusion(std::span<const std::string> predictions, std::span<const std::string> truths,
                                 std::vector<std::string> labels, bool with_uncertain) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("confusion: predictions and truths differ in length");
  ConfusionMatrix m(std::move(labels), with_uncertain);
  const auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(m.labels.begin(), m.labels.end(), name);
    if (it == m.labels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - m.labels.begin());
  };
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const auto t = find(truths[i]);
    if (!t) throw UnknownLabel("truth label '" + truths[i] + "' is not in the class set");
    std::size_t col = 0;
    if (predictions[i] == kUncertain && with_uncertain) {
      col = m.classes();
    } else if (const auto p = find(predictions[i])) {
      col = *p;
    } else {
      throw UnknownLabel("predicted label '" + predictions[i] + "' is not in the class set");
    }
    ++m.at(*t, col);
  }
  return m;
}

/// Fixed five-class form; nullopt predictions are uncertain.
inline ConfusionMatrix confusion(std::span<const std::optional<SoundClass>> predictions, std::span<const SoundClass> truths,
                                 bool with_uncertain = true) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("confusion: predictions and truths differ in length");
  ConfusionMatrix m(class_labels(), with_uncertain);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (!predictions[i] && !with_uncertain) throw UnknownLabel("uncertain prediction without an uncertain column");
    ++m.at(index_of(truths[i]), predictions[i] ? index_of(*predictions[i]) : m.classes());
  }
  return m;
}

struct MetricsReport {
  std::vector<std::string> labels;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  /// Set when a metric's denominator was zero and it was reported as 0.
  std::vector<bool> precision_undefined;
  std::vector<bool> recall_undefined;
  std::vector<bool> f1_undefined;
  double accuracy = 0.0;
};

inline MetricsReport metrics_from_confusion(const ConfusionMatrix& m) {
  if (m.classes() == 0 || m.total() == 0) throw std::invalid_argument("metrics_from_confusion: empty matrix");
  MetricsReport r;
  r.labels = m.labels;
  for (std::size_t k = 0; k < m.classes(); ++k) {
    const double tp = static_cast<double>(m.at(k, k));
    const auto predicted = m.column_total(k);
    const auto actual = m.row_total(k);
    const double p = predicted ? tp / static_cast<double>(predicted) : 0.0;
    const double rc = actual ? tp / static_cast<double>(actual) : 0.0;
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.precision_undefined.push_back(predicted == 0);
    r.recall_undefined.push_back(actual == 0);
    r.f1.push_back(p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0);
    r.f1_undefined.push_back(p + rc == 0.0);
  }
  r.accuracy = static_cast<double>(m.trace()) / static_cast<double>(m.total());
  return r;
}

/// 100 * num / den rounded half-up to `decimals` places, computed exactly in integers.
inline std::string format_ratio_pct(std::uint64_t num, std::uint64_t den, int decimals = 1) {
  if (den == 0) return "n/a";
  std::uint64_t scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const std::uint64_t scaled = (200 * scale * num + den) / (2 * den);
  if (decimals == 0) return fmt::format("{}%", scaled);
  return fmt::format("{}.{:0{}}%", scaled / scale, scaled % scale, decimals);
}

/// Row-percentage table with an F1 row and overall accuracy.
inline std::string render_table(const ConfusionMatrix& m, const MetricsReport& r, std::string_view title = {}) {
  std::ostringstream out;
  if (!title.empty()) out << title << '\n';
  std::size_t w = 14;
  for (const auto& l : m.labels) w = std::max(w, l.size() + 2);
  out << fmt::format("{:<{}}", "", w);
  for (const auto& l : m.labels) out << fmt::format("{:>{}}", l, w);
  if (m.has_uncertain) out << fmt::format("{:>{}}", "Uncertain", w);
  out << '\n';
  for (std::size_t t = 0; t < m.classes(); ++t) {
    out << fmt::format("{:<{}}", m.labels[t], w);
    for (std::size_t c = 0; c < m.columns(); ++c) out << fmt::format("{:>{}}", format_ratio_pct(m.at(t, c), m.row_total(t)), w);
    out << '\n';
  }
  out << fmt::format("{:<{}}", "F1 Score", w);
  for (double f : r.f1) out << fmt::format("{:>{}.2f}", f, w);
  out << '\n';
  out << "Accuracy: " << format_ratio_pct(m.trace(), m.total(), 2) << " (" << m.trace() << "/" << m.total() << ")\n";
  return out.str();
}

/// `truth,<pred labels...>[,uncertain]` count rows, then precision/recall/f1 rows.
inline std::string to_csv(const ConfusionMatrix& m, const MetricsReport& r) {
  std::ostringstream out;
  out << "truth";
  for (const auto& l : m.labels) out << ',' << l;
  if (m.has_uncertain) out << ',' << kUncertain;
  out << '\n';
  for (std::size_t t = 0; t < m.classes(); ++t) {
    out << m.labels[t];
    for (std::size_t c = 0; c < m.columns(); ++c) out << ',' << m.at(t, c);
    out << '\n';
  }
  const auto row = [&](std::string_view name, const std::vector<double>& v) {
    out << name;
    for (double x : v) out << fmt::format(",{:.6f}", x);
    out << '\n';
  };
  row("precision", r.precision);
  row("recall", r.recall);
  row("f1", r.f1);
  out << fmt::format("accuracy,{:.6f}\n", r.accuracy);
  return out.str();
}

}  // namespace rubble::metrics
