// Sensor calibration against reference instruments: per-row percentage error,
// per-sensor averages and accuracies, and the collective accuracy.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rubble/telemetry/codec.hpp"

namespace rubble::telemetry {

enum class Denominator { reference, measured };

inline std::string_view to_string(Denominator d) { return d == Denominator::reference ? "reference" : "measured"; }

/// 100 * |measured - reference| / chosen denominator.
inline double percentage_error(double reference, double measured, Denominator denominator = Denominator::reference) {
  const double den = denominator == Denominator::reference ? reference : measured;
  if (den == 0.0) throw std::domain_error("percentage_error: zero denominator");
  return 100.0 * std::abs(measured - reference) / std::abs(den);
}

/// A number together with the decimal places it was printed with.
struct PrintedValue {
  double value = 0.0;
  int decimals = 0;

  static PrintedValue parse(std::string_view text) {
    text = detail::trim(text);
    if (!text.empty() && text.back() == '%') text.remove_suffix(1);
    const auto v = detail::parse_number(text);
    if (!v) throw ParseError("not a number: '" + std::string(text) + "'");
    const auto dot = text.find('.');
    return {*v, dot == std::string_view::npos ? 0 : static_cast<int>(text.size() - dot - 1)};
  }
  /// True when `x` rounds to this value at its printed precision.
  bool matches(double x) const { return std::abs(round_to(x, decimals) - value) < 0.5 * std::pow(10.0, -decimals - 3); }
  std::string str() const { return fmt::format("{:.{}f}", value, decimals); }

  static double round_to(double x, int decimals) {
    const double s = std::pow(10.0, decimals);
    return std::floor(x * s + 0.5 + 1e-9) / s;
  }
};

struct CalibrationRecord {
  double reference = 0.0;
  double measured = 0.0;
  std::optional<PrintedValue> printed_pct_error;

  double deviation() const { return measured - reference; }
};

struct SensorCalibration {
  std::string sensor;
  std::string unit;
  Denominator denominator = Denominator::reference;
  std::vector<CalibrationRecord> records;
  std::optional<PrintedValue> stated_average_pct;
  std::optional<PrintedValue> stated_accuracy_pct;
};

/// Absolute tolerance when comparing a recomputed row error with the printed one.
inline constexpr double kRowTolerance = 0.001;

struct RowResult {
  CalibrationRecord record;
  double pct_error = 0.0;
  /// Recomputed error agrees with the printed one: within kRowTolerance, or
  /// identical after rounding to the printed precision.
  bool matches_printed = true;
};

struct SensorSummary {
  std::string sensor;
  std::string unit;
  Denominator denominator = Denominator::reference;
  std::vector<RowResult> rows;
  double average_pct = 0.0;           // mean of tabulated row errors (printed where available)
  double computed_average_pct = 0.0;  // mean of recomputed row errors
  double accuracy_pct = 0.0;          // 100 - average_pct
  std::optional<PrintedValue> stated_average_pct;
  std::optional<PrintedValue> stated_accuracy_pct;
  bool average_discrepancy = false;
};

struct CalibrationReport {
  std::vector<SensorSummary> sensors;
  double collective_accuracy_pct = 0.0;
  bool collective_from_stated = false;
  double recomputed_collective_accuracy_pct = 0.0;
};

inline double collective_accuracy(const std::vector<double>& sensor_accuracies) {
  if (sensor_accuracies.empty()) throw std::invalid_argument("collective_accuracy: no sensors");
  double s = 0.0;
  for (double a : sensor_accuracies) s += a;
  return s / static_cast<double>(sensor_accuracies.size());
}

inline SensorSummary summarize(const SensorCalibration& cal) {
  if (cal.records.empty()) throw std::invalid_argument("sensor '" + cal.sensor + "' has no calibration records");
  SensorSummary s;
  s.sensor = cal.sensor;
  s.unit = cal.unit;
  s.denominator = cal.denominator;
  s.stated_average_pct = cal.stated_average_pct;
  s.stated_accuracy_pct = cal.stated_accuracy_pct;
  double tab = 0.0, comp = 0.0;
  for (const auto& rec : cal.records) {
    RowResult r{rec, percentage_error(rec.reference, rec.measured, cal.denominator), true};
    if (rec.printed_pct_error) {
      r.matches_printed = std::abs(r.pct_error - rec.printed_pct_error->value) <= kRowTolerance + 1e-12 ||
                          rec.printed_pct_error->matches(r.pct_error);
      tab += rec.printed_pct_error->value;
    } else {
      tab += r.pct_error;
    }
    comp += r.pct_error;
    s.rows.push_back(r);
  }
  const auto n = static_cast<double>(cal.records.size());
  s.average_pct = tab / n;
  s.computed_average_pct = comp / n;
  s.accuracy_pct = 100.0 - s.average_pct;
  if (s.stated_average_pct) s.average_discrepancy = !s.stated_average_pct->matches(s.average_pct);
  return s;
}

inline CalibrationReport calibration_report(const std::vector<SensorCalibration>& sensors) {
  if (sensors.empty()) throw std::invalid_argument("calibration_report: no sensors");
  CalibrationReport r;
  std::vector<double> recomputed, stated;
  for (const auto& cal : sensors) {
    r.sensors.push_back(summarize(cal));
    recomputed.push_back(r.sensors.back().accuracy_pct);
    if (cal.stated_accuracy_pct) stated.push_back(cal.stated_accuracy_pct->value);
  }
  r.recomputed_collective_accuracy_pct = collective_accuracy(recomputed);
  r.collective_from_stated = stated.size() == sensors.size();
  r.collective_accuracy_pct = r.collective_from_stated ? collective_accuracy(stated) : r.recomputed_collective_accuracy_pct;
  return r;
}

/// Reads a calibration CSV: `# key: value` metadata lines (sensor, unit,
/// denominator, stated_average_pct, stated_accuracy_pct), a header line, then
/// `reference,measured[,printed_pct_error]` rows.
inline SensorCalibration parse_calibration_csv(std::string_view text, std::string default_name = "sensor") {
  SensorCalibration cal;
  cal.sensor = std::move(default_name);
  bool header_seen = false;
  for (const auto& line : detail::split_lines(text)) {
    const auto s = line.text;
    if (s.empty()) continue;
    if (s.front() == '#') {
      const auto body = detail::trim(s.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string_view::npos) continue;
      const auto key = detail::trim(body.substr(0, colon));
      const auto val = detail::trim(body.substr(colon + 1));
      if (key == "sensor") {
        cal.sensor = std::string(val);
      } else if (key == "unit") {
        cal.unit = std::string(val);
      } else if (key == "denominator") {
        if (val == "reference") {
          cal.denominator = Denominator::reference;
        } else if (val == "measured") {
          cal.denominator = Denominator::measured;
        } else {
          throw ParseError("denominator must be 'reference' or 'measured'");
        }
      } else if (key == "stated_average_pct") {
        cal.stated_average_pct = PrintedValue::parse(val);
      } else if (key == "stated_accuracy_pct") {
        cal.stated_accuracy_pct = PrintedValue::parse(val);
      }
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = s.find(',', start);
      fields.push_back(detail::trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!header_seen && !detail::parse_number(fields[0])) {
      header_seen = true;
      continue;
    }
    if (fields.size() < 2) throw ParseError("calibration row needs reference and measured columns");
    const auto ref = detail::parse_number(fields[0]);
    const auto meas = detail::parse_number(fields[1]);
    if (!ref || !meas) throw ParseError("calibration row has non-numeric values: '" + std::string(s) + "'");
    CalibrationRecord rec{*ref, *meas, std::nullopt};
    if (fields.size() >= 3 && !fields[2].empty()) rec.printed_pct_error = PrintedValue::parse(fields[2]);
    cal.records.push_back(rec);
  }
  if (cal.records.empty()) throw ParseError("calibration file has no rows");
  return cal;
}

inline SensorCalibration load_calibration_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_calibration_csv(buf.str(), path.stem().string());
}

inline std::string render_report(const CalibrationReport& r) {
  std::ostringstream out;
  for (const auto& s : r.sensors) {
    out << fmt::format("{} ({}, error relative to the {} value)\n", s.sensor, s.unit.empty() ? "-" : s.unit,
                       to_string(s.denominator));
    out << fmt::format("{:>4}  {:>10}  {:>10}  {:>10}  {:>12}  {:>10}\n", "S.No", "Reference", "Measured", "Deviation",
                       "% Error", "Printed");
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      const auto& row = s.rows[i];
      out << fmt::format("{:>4}  {:>10}  {:>10}  {:>+10.3f}  {:>11.5f}%  {:>10}{}\n", i + 1, row.record.reference,
                         row.record.measured, row.record.deviation(), row.pct_error,
                         row.record.printed_pct_error ? row.record.printed_pct_error->str() + "%" : "-",
                         row.matches_printed ? "" : "  MISMATCH");
    }
    out << fmt::format("Average percentage error: {:.5f}%", s.average_pct);
    if (s.stated_average_pct) {
      out << fmt::format(" (at printed precision {:.{}f}%; stated {}%{})", s.average_pct, s.stated_average_pct->decimals,
                         s.stated_average_pct->str(), s.average_discrepancy ? ", DISCREPANCY" : ", match");
    }
    out << '\n';
    out << fmt::format("Accuracy: {:.3f}%", s.accuracy_pct);
    if (s.stated_accuracy_pct) out << fmt::format(" (stated {}%)", s.stated_accuracy_pct->str());
    out << "\n\n";
  }
  if (r.collective_from_stated) {
    out << fmt::format("Collective accuracy: {:.3f}% (mean of stated sensor accuracies)\n", r.collective_accuracy_pct);
    out << fmt::format("Collective accuracy recomputed from rows: {:.3f}%\n", r.recomputed_collective_accuracy_pct);
  } else {
    out << fmt::format("Collective accuracy: {:.3f}%\n", r.collective_accuracy_pct);
  }
  return out.str();
}

inline nlohmann::json to_json(const CalibrationReport& r) {
  nlohmann::json j;
  j["sensors"] = nlohmann::json::array();
  for (const auto& s : r.sensors) {
    nlohmann::json js{{"sensor", s.sensor},
                      {"unit", s.unit},
                      {"denominator", to_string(s.denominator)},
                      {"average_pct", s.average_pct},
                      {"computed_average_pct", s.computed_average_pct},
                      {"accuracy_pct", s.accuracy_pct},
                      {"average_discrepancy", s.average_discrepancy}};
    if (s.stated_average_pct) js["stated_average_pct"] = s.stated_average_pct->value;
    if (s.stated_accuracy_pct) js["stated_accuracy_pct"] = s.stated_accuracy_pct->value;
    js["rows"] = nlohmann::json::array();
    for (const auto& row : s.rows) {
      nlohmann::json jr{{"reference", row.record.reference},
                        {"measured", row.record.measured},
                        {"deviation", row.record.deviation()},
                        {"pct_error", row.pct_error},
                        {"matches_printed", row.matches_printed}};
      if (row.record.printed_pct_error) jr["printed_pct_error"] = row.record.printed_pct_error->value;
      js["rows"].push_back(jr);
    }
    j["sensors"].push_back(js);
  }
  j["collective_accuracy_pct"] = r.collective_accuracy_pct;
  j["collective_from_stated"] = r.collective_from_stated;
  j["recomputed_collective_accuracy_pct"] = r.recomputed_collective_accuracy_pct;
  return j;
}

}  // namespace rubble::telemetry
