// Rule-table survivability assessment from one sensor frame.
//
//   air:     gas <= 400 Good, 401..700 Moderate, > 700 Poor
//   thermal: Good when 15 <= T <= 35 degC and 20 <= RH <= 80 %,
//            Moderate when within 5 degC / 10 % of those bands, else Poor
//   overall: worst component
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rubble/telemetry/codec.hpp"

namespace rubble::telemetry {

/// Ordered best to worst.
enum class Level : std::uint8_t { good = 0, moderate = 1, poor = 2 };

inline std::string_view to_string(Level l) {
  switch (l) {
    case Level::good: return "Good";
    case Level::moderate: return "Moderate";
    case Level::poor: return "Poor";
  }
  return "?";
}

inline std::optional<Level> parse_level(std::string_view s) {
  if (s == "Good") return Level::good;
  if (s == "Moderate") return Level::moderate;
  if (s == "Poor") return Level::poor;
  return std::nullopt;
}

struct SurvivabilityRules {
  int gas_good_max = 400;
  int gas_moderate_max = 700;
  double temp_lo_c = 15.0, temp_hi_c = 35.0, temp_margin_c = 5.0;
  double humidity_lo = 20.0, humidity_hi = 80.0, humidity_margin = 10.0;
};

struct SurvivabilityReport {
  Level air = Level::good;
  Level thermal = Level::good;
  Level overall = Level::good;
  std::vector<std::string> rationale;

  friend bool operator==(const SurvivabilityReport&, const SurvivabilityReport&) = default;
};

inline SurvivabilityReport survivability(const SensorFrame& f, const SurvivabilityRules& rules = {}) {
  SurvivabilityReport r;
  if (f.gas_raw <= rules.gas_good_max) {
    r.air = Level::good;
  } else if (f.gas_raw <= rules.gas_moderate_max) {
    r.air = Level::moderate;
  } else {
    r.air = Level::poor;
  }
  r.rationale.push_back(fmt::format("air {}: gas reading {} (Good <= {}, Moderate <= {})", to_string(r.air), f.gas_raw,
                                    rules.gas_good_max, rules.gas_moderate_max));

  const auto within = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  const bool temp_good = within(f.temp_c, rules.temp_lo_c, rules.temp_hi_c);
  const bool hum_good = within(f.humidity_pct, rules.humidity_lo, rules.humidity_hi);
  const bool temp_near = within(f.temp_c, rules.temp_lo_c - rules.temp_margin_c, rules.temp_hi_c + rules.temp_margin_c);
  const bool hum_near = within(f.humidity_pct, rules.humidity_lo - rules.humidity_margin, rules.humidity_hi + rules.humidity_margin);
  if (temp_good && hum_good) {
    r.thermal = Level::good;
  } else if (temp_near && hum_near) {
    r.thermal = Level::moderate;
  } else {
    r.thermal = Level::poor;
  }
  r.rationale.push_back(fmt::format("thermal {}: {:.2f} °C, {:.2f} % humidity", to_string(r.thermal), f.temp_c, f.humidity_pct));
  r.overall = std::max(r.air, r.thermal);
  return r;
}

}  // namespace rubble::telemetry
