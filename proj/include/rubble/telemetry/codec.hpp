// Serial-monitor text blocks emitted by the probe firmware.
//
// Sensor block:                       Prediction block:
//   GAS Sensor Reading:                 Predictions (DSP: 304 ms., Classification: 19 ms., Anomaly: 0 ms.):
//   168                                 breathes:
//   <blank>                             0.00
//   <blank>                             cough:
//   Temperature = 32.67 °C              ...
//   Humidity= 52.81 %
//   -----
//   Pressure = 0.00 kPa
//   -----
//
// Lines may carry an "HH:MM:SS.mmm -> " serial-monitor prefix; the first one
// seen becomes the block timestamp (milliseconds since midnight).
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "rubble/core.hpp"

namespace rubble::telemetry {

class ParseError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// The text ends before the block is complete.
class IncompleteBlock : public ParseError {
 public:
  using ParseError::ParseError;
};

inline constexpr int kGasMax = 1024;

struct SensorFrame {
  int gas_raw = 0;
  double temp_c = 0.0;
  double humidity_pct = 0.0;
  double pressure_kpa = 0.0;
  std::int64_t timestamp_ms = 0;

  void validate() const {
    if (gas_raw < 0 || gas_raw > kGasMax) throw std::invalid_argument("gas_raw must be in [0, 1024]");
    if (!(humidity_pct >= 0.0 && humidity_pct <= 100.0)) throw std::invalid_argument("humidity must be in [0, 100]");
    if (!std::isfinite(temp_c) || !std::isfinite(pressure_kpa)) throw std::invalid_argument("non-finite sensor value");
  }
  friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

struct PredictionBlock {
  int dsp_ms = 0;
  int classification_ms = 0;
  int anomaly_ms = 0;
  std::array<double, kNumClasses> probabilities{};
  std::int64_t timestamp_ms = 0;

  friend bool operator==(const PredictionBlock&, const PredictionBlock&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) return false;
  }
  return true;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || s.empty()) return std::nullopt;
  if (end != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Leading number of `s`, ignoring a trailing unit.
inline std::optional<double> parse_leading_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end == s.data()) return std::nullopt;
  return v;
}

struct Line {
  std::string_view text;
  std::optional<std::int64_t> timestamp_ms;
};

/// Splits on LF (dropping CR) and removes "HH:MM:SS.mmm ->" prefixes.
inline std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    Line line{raw, std::nullopt};
    const auto arrow = raw.find("->");
    if (arrow != std::string_view::npos) {
      const auto stamp = trim(raw.substr(0, arrow));
      int h = 0, m = 0, s = 0, ms = 0;
      if (stamp.size() == 12 && stamp[2] == ':' && stamp[5] == ':' && stamp[8] == '.' &&
          std::from_chars(stamp.data(), stamp.data() + 2, h).ec == std::errc{} &&
          std::from_chars(stamp.data() + 3, stamp.data() + 5, m).ec == std::errc{} &&
          std::from_chars(stamp.data() + 6, stamp.data() + 8, s).ec == std::errc{} &&
          std::from_chars(stamp.data() + 9, stamp.data() + 12, ms).ec == std::errc{}) {
        line.timestamp_ms = ((static_cast<std::int64_t>(h) * 60 + m) * 60 + s) * 1000 + ms;
        line.text = raw.substr(arrow + 2);
      }
    }
    line.text = trim(line.text);
    out.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

inline std::string stamp(std::int64_t ms) {
  ms %= 86'400'000;
  if (ms < 0) ms += 86'400'000;
  return fmt::format("{:02}:{:02}:{:02}.{:03} -> ", ms / 3'600'000, ms / 60'000 % 60, ms / 1000 % 60, ms % 1000);
}

inline std::string join(const std::vector<std::string>& lines, bool with_timestamps, std::int64_t ts) {
  std::string out;
  for (const auto& l : lines) {
    if (with_timestamps) out += stamp(ts);
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace detail

inline std::string emit_sensor_block(const SensorFrame& f, bool with_timestamps = false) {
  return detail::join({"GAS Sensor Reading:", std::to_string(f.gas_raw), "", "",
                       fmt::format("Temperature = {:.2f} °C", f.temp_c), fmt::format("Humidity= {:.2f} %", f.humidity_pct),
                       "-----", fmt::format("Pressure = {:.2f} kPa", f.pressure_kpa), "-----"},
                      with_timestamps, f.timestamp_ms);
}

inline SensorFrame parse_sensor_block(std::string_view text) {
  const auto lines = detail::split_lines(text);
  std::optional<int> gas;
  std::optional<double> temp, hum, pres;
  std::optional<std::int64_t> ts;
  bool awaiting_gas = false;
  for (const auto& line : lines) {
    if (!ts && line.timestamp_ms) ts = line.timestamp_ms;
    const auto s = line.text;
    if (s.empty()) continue;
    if (awaiting_gas) {
      const auto v = detail::parse_number(s);
      if (!v || *v != std::floor(*v)) throw ParseError("field 'gas': expected an integer reading, got '" + std::string(s) + "'");
      gas = static_cast<int>(*v);
      awaiting_gas = false;
      continue;
    }
    const auto value_after = [&](std::string_view sep) -> std::optional<double> {
      const auto p = s.find(sep);
      if (p == std::string_view::npos) return std::nullopt;
      return detail::parse_leading_number(s.substr(p + sep.size()));
    };
    if (detail::istarts_with(s, "GAS Sensor Reading")) {
      const auto rest = detail::trim(s.substr(s.find_first_of(":") == std::string_view::npos ? s.size() : s.find(':') + 1));
      if (rest.empty()) {
        awaiting_gas = true;
      } else if (const auto v = detail::parse_number(rest)) {
        gas = static_cast<int>(*v);
      } else {
        throw ParseError("field 'gas': unreadable value '" + std::string(rest) + "'");
      }
    } else if (detail::istarts_with(s, "Temperature")) {
      temp = value_after("=");
      if (!temp) throw ParseError("field 'temperature': unreadable value");
    } else if (detail::istarts_with(s, "Humidity")) {
      hum = value_after("=");
      if (!hum) throw ParseError("field 'humidity': unreadable value");
    } else if (detail::istarts_with(s, "Pressure")) {
      pres = value_after("=");
      if (!pres) throw ParseError("field 'pressure': unreadable value");
    }
  }
  if (!gas) throw IncompleteBlock("missing field 'gas'");
  if (!temp) throw IncompleteBlock("missing field 'temperature'");
  if (!hum) throw IncompleteBlock("missing field 'humidity'");
  if (!pres) throw IncompleteBlock("missing field 'pressure'");
  SensorFrame f{*gas, *temp, *hum, *pres, ts.value_or(0)};
  if (f.gas_raw < 0 || f.gas_raw > kGasMax) throw ParseError("field 'gas': reading " + std::to_string(f.gas_raw) + " outside 0-1024");
  if (f.humidity_pct < 0.0 || f.humidity_pct > 100.0) throw ParseError("field 'humidity': outside 0-100 %");
  return f;
}

inline std::string emit_prediction_block(const PredictionBlock& b, bool with_timestamps = false) {
  std::vector<std::string> lines{fmt::format("Predictions (DSP: {} ms., Classification: {} ms., Anomaly: {} ms.):", b.dsp_ms,
                                             b.classification_ms, b.anomaly_ms)};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    lines.push_back(std::string(kClassNames[k]) + ":");
    lines.push_back(fmt::format("{:.2f}", b.probabilities[k]));
  }
  return detail::join(lines, with_timestamps, b.timestamp_ms);
}

inline PredictionBlock parse_prediction_block(std::string_view text) {
  const auto lines = detail::split_lines(text);
  PredictionBlock b;
  std::size_t i = 0;
  for (; i < lines.size(); ++i) {
    if (detail::istarts_with(lines[i].text, "Predictions")) break;
  }
  if (i == lines.size()) throw IncompleteBlock("missing 'Predictions (...)' header");
  const auto header = lines[i].text;
  b.timestamp_ms = lines[i].timestamp_ms.value_or(0);
  const auto timing = [&](std::string_view key) {
    const auto p = header.find(key);
    if (p == std::string_view::npos) throw ParseError("header lacks '" + std::string(key) + "' timing");
    const auto v = detail::parse_leading_number(header.substr(p + key.size()));
    if (!v) throw ParseError("unreadable '" + std::string(key) + "' timing");
    return static_cast<int>(std::lround(*v));
  };
  b.dsp_ms = timing("DSP:");
  b.classification_ms = timing("Classification:");
  b.anomaly_ms = timing("Anomaly:");

  std::array<bool, kNumClasses> seen{};
  std::size_t n_seen = 0;
  std::size_t pending = kNumClasses;  // index of a label still waiting for its value
  for (++i; i < lines.size() && n_seen < kNumClasses; ++i) {
    const auto s = lines[i].text;
    if (s.empty()) continue;
    if (pending < kNumClasses) {
      const auto v = detail::parse_number(s);
      if (!v) throw ParseError("label '" + std::string(kClassNames[pending]) + "' has no probability value");
      b.probabilities[pending] = *v;
      seen[pending] = true;
      ++n_seen;
      pending = kNumClasses;
      continue;
    }
    // "label:" alone, or "label: value" on one line
    std::string_view label = s, value;
    if (const auto colon = s.rfind(':'); colon != std::string_view::npos && colon + 1 < s.size()) {
      if (detail::parse_number(s.substr(colon + 1))) {
        label = s.substr(0, colon);
        value = s.substr(colon + 1);
      }
    }
    const auto cls = parse_class(label);
    if (!cls) throw ParseError("unknown label line '" + std::string(s) + "'");
    if (seen[index_of(*cls)]) throw ParseError("label '" + std::string(name_of(*cls)) + "' repeated");
    if (!value.empty()) {
      b.probabilities[index_of(*cls)] = *detail::parse_number(value);
      seen[index_of(*cls)] = true;
      ++n_seen;
    } else {
      pending = index_of(*cls);
    }
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (!seen[k]) throw IncompleteBlock("missing label '" + std::string(kClassNames[k]) + "'");
  }
  double sum = 0.0;
  for (double p : b.probabilities) {
    if (p < 0.0) throw ParseError("negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 0.02 + 1e-9) throw ParseError(fmt::format("probabilities sum to {:.3f}, expected 1 +/- 0.02", sum));
  return b;
}

}  // namespace rubble::telemetry
