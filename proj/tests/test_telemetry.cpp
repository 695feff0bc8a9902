#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "rubble/telemetry/calibration.hpp"
#include "rubble/telemetry/survivability.hpp"

using namespace rubble;
using namespace rubble::telemetry;

namespace {

const std::filesystem::path kFixtures = RUBBLE_FIXTURES;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<SensorCalibration> paper_tables() {
  return {load_calibration_csv(kFixtures / "calibration/table4.csv"), load_calibration_csv(kFixtures / "calibration/table5.csv"),
          load_calibration_csv(kFixtures / "calibration/table6.csv")};
}

// Inserts random spaces/tabs around tokens and random blank lines; never inside a number or word.
std::string perturb(const std::string& text, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 3);
  std::string out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (coin(rng) == 0) out += coin(rng) == 0 ? "\r\n" : "   \n";
    out += std::string(static_cast<std::size_t>(coin(rng)), coin(rng) == 0 ? '\t' : ' ');
    out += line;
    out += std::string(static_cast<std::size_t>(coin(rng)), ' ');
    out += coin(rng) == 0 ? "\r\n" : "\n";
  }
  return out;
}

}  // namespace

TEST(SensorCodec, Fig15FixtureParsesExactly) {
  const auto f = parse_sensor_block(slurp(kFixtures / "serial/fig15.txt"));
  EXPECT_EQ(f.gas_raw, 168);
  EXPECT_EQ(f.temp_c, 32.67);
  EXPECT_EQ(f.humidity_pct, 52.81);
  EXPECT_EQ(f.pressure_kpa, 0.0);
  EXPECT_EQ(f.timestamp_ms, ((22 * 60 + 56) * 60 + 18) * 1000 + 224);
}

TEST(SensorCodec, EmitsTemplate) {
  const auto text = emit_sensor_block({168, 32.67, 52.81, 0.0, 0});
  EXPECT_EQ(text,
            "GAS Sensor Reading:\n168\n\n\nTemperature = 32.67 °C\nHumidity= 52.81 %\n-----\nPressure = 0.00 kPa\n-----\n");
  const auto stamped = emit_sensor_block({168, 32.67, 52.81, 0.0, 82578224}, true);
  EXPECT_EQ(stamped.substr(0, 16), "22:56:18.224 -> ");
}

TEST(SensorCodec, RoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> gas(0, 1024), cents(0, 10000), temp(-4000, 6000);
  for (int i = 0; i < 500; ++i) {
    const SensorFrame f{gas(rng), temp(rng) / 100.0, cents(rng) / 100.0, cents(rng) / 100.0, (i % 2) ? 1000LL * i : 0};
    EXPECT_EQ(parse_sensor_block(emit_sensor_block(f, i % 2 == 1)), f);
  }
}

TEST(SensorCodec, CrlfAndBlankLines) {
  const std::string text =
      "\r\n\r\nGAS Sensor Reading:\r\n\r\n168\r\n\r\n\r\n\r\nTemperature = 32.67 °C\r\nHumidity= 52.81 %\r\n\r\n-----\r\n"
      "Pressure = 0.00 kPa\r\n-----\r\n\r\n";
  const auto f = parse_sensor_block(text);
  EXPECT_EQ(f, (SensorFrame{168, 32.67, 52.81, 0.0, 0}));
}

TEST(SensorCodec, WhitespaceFuzzNeverChangesValues) {
  std::mt19937_64 rng(11);
  const auto fig15 = slurp(kFixtures / "serial/fig15.txt");
  const auto base = parse_sensor_block(fig15);
  const auto plain = emit_sensor_block(base);
  for (int i = 0; i < 300; ++i) {
    ASSERT_EQ(parse_sensor_block(perturb(fig15, rng)), base);
    auto p = parse_sensor_block(perturb(plain, rng));
    p.timestamp_ms = base.timestamp_ms;
    ASSERT_EQ(p, base);
  }
}

TEST(SensorCodec, MissingFieldIsNamed) {
  const std::string full = emit_sensor_block({168, 32.67, 52.81, 0.0, 0});
  const std::vector<std::pair<std::string, std::string>> cases{
      {"Humidity= 52.81 %\n", "humidity"}, {"Pressure = 0.00 kPa\n", "pressure"}, {"Temperature = 32.67 °C\n", "temperature"}};
  for (const auto& [line, field] : cases) {
    auto text = full;
    text.erase(text.find(line), line.size());
    try {
      parse_sensor_block(text);
      FAIL() << field;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(parse_sensor_block("Temperature = 1 °C\nHumidity= 2 %\nPressure = 3 kPa\n"), IncompleteBlock);
  EXPECT_THROW(parse_sensor_block("GAS Sensor Reading:\n2000\nTemperature = 1\nHumidity= 2\nPressure = 3\n"), ParseError);
  EXPECT_THROW(parse_sensor_block("GAS Sensor Reading:\nabc\n"), ParseError);
}

TEST(PredictionCodec, Fig13FixtureParsesExactly) {
  const auto b = parse_prediction_block(slurp(kFixtures / "serial/fig13.txt"));
  EXPECT_EQ(b.dsp_ms, 304);
  EXPECT_EQ(b.classification_ms, 19);
  EXPECT_EQ(b.anomaly_ms, 0);
  const std::array<double, 5> expected{0.00, 0.07, 0.07, 0.65, 0.21};
  EXPECT_EQ(b.probabilities, expected);
  double sum = 0.0;
  for (double p : b.probabilities) sum += p;
  EXPECT_NEAR(sum, 1.00, 1e-12);
  EXPECT_EQ(b.timestamp_ms, ((22 * 60 + 56) * 60 + 17) * 1000 + 976);
}

TEST(PredictionCodec, NormalizedEmit) {
  PredictionBlock b{304, 19, 0, {0.0, 0.07, 0.07, 0.65, 0.21}, 0};
  EXPECT_EQ(emit_prediction_block(b),
            "Predictions (DSP: 304 ms., Classification: 19 ms., Anomaly: 0 ms.):\nbreathes:\n0.00\ncough:\n0.07\n"
            "hello_help:\n0.07\nmuffled_words:\n0.65\nnoise:\n0.21\n");
}

TEST(PredictionCodec, RoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    // five two-decimal values summing to exactly 100 hundredths
    std::array<int, 5> h{};
    int left = 100;
    for (int k = 0; k < 4; ++k) {
      h[static_cast<std::size_t>(k)] = std::uniform_int_distribution<int>(0, left)(rng);
      left -= h[static_cast<std::size_t>(k)];
    }
    h[4] = left;
    PredictionBlock b{std::uniform_int_distribution<int>(0, 999)(rng), i % 50, i % 3, {}, (i % 2) ? 5000LL * i : 0};
    for (std::size_t k = 0; k < 5; ++k) b.probabilities[k] = h[k] / 100.0;
    const auto text = emit_prediction_block(b, i % 2 == 1);
    const auto back = parse_prediction_block(text);
    ASSERT_EQ(back, b);
    ASSERT_EQ(emit_prediction_block(back, i % 2 == 1), text);
  }
}

TEST(PredictionCodec, WhitespaceFuzz) {
  std::mt19937_64 rng(13);
  const auto fig13 = slurp(kFixtures / "serial/fig13.txt");
  const auto base = parse_prediction_block(fig13);
  for (int i = 0; i < 300; ++i) ASSERT_EQ(parse_prediction_block(perturb(fig13, rng)), base);
}

TEST(PredictionCodec, Errors) {
  auto text = emit_prediction_block({1, 2, 3, {0.2, 0.2, 0.2, 0.2, 0.2}, 0});
  auto unknown = text;
  unknown.replace(unknown.find("cough:"), 6, "scream:");
  EXPECT_THROW(parse_prediction_block(unknown), ParseError);
  auto bad_sum = text;
  bad_sum.replace(bad_sum.find("0.20"), 4, "0.90");
  EXPECT_THROW(parse_prediction_block(bad_sum), ParseError);
  EXPECT_THROW(parse_prediction_block("breathes:\n1.0\n"), IncompleteBlock);
  EXPECT_THROW(parse_prediction_block(text.substr(0, text.find("noise"))), IncompleteBlock);
}

TEST(PercentageError, PrintedExamples) {
  EXPECT_NEAR(percentage_error(59.67, 59.75), 0.13407, 5e-6);
  EXPECT_NEAR(percentage_error(32.12, 32.04, Denominator::measured), 0.2497, 5e-5);
  EXPECT_EQ(percentage_error(0.010, 0.01), 0.0);
  EXPECT_THROW(percentage_error(0.0, 1.0), std::domain_error);
  EXPECT_THROW(percentage_error(1.0, 0.0, Denominator::measured), std::domain_error);
}

TEST(PercentageError, SymmetricAndScaleCovariant) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> v(0.1, 100.0), k(0.01, 1000.0);
  for (int i = 0; i < 1000; ++i) {
    const double r = v(rng), d = v(rng) / 10.0, s = k(rng);
    EXPECT_NEAR(percentage_error(r, r + d), percentage_error(r, r - d), 1e-9);
    EXPECT_NEAR(percentage_error(s * r, s * (r + d)), percentage_error(r, r + d), 1e-9 * (1 + percentage_error(r, r + d)));
  }
}

TEST(Calibration, EveryPrintedRowReproduced) {
  for (const auto& cal : paper_tables()) {
    const auto s = summarize(cal);
    for (const auto& row : s.rows) {
      ASSERT_TRUE(row.record.printed_pct_error);
      const auto& printed = *row.record.printed_pct_error;
      const bool close = std::abs(row.pct_error - printed.value) <= 0.001;
      const bool same_when_printed = PrintedValue::round_to(row.pct_error, printed.decimals) == printed.value;
      EXPECT_TRUE(close || same_when_printed) << cal.sensor << " " << row.record.reference << " -> " << row.pct_error;
      EXPECT_TRUE(row.matches_printed);
    }
  }
}

TEST(Calibration, PressureAverageAndCollective) {
  const auto r = calibration_report(paper_tables());
  ASSERT_EQ(r.sensors.size(), 3U);
  const auto& pressure = r.sensors[2];
  EXPECT_NEAR(pressure.average_pct, (9.09 + 16.67 + 9.09 + 0 + 0) / 5.0, 1e-12);
  EXPECT_EQ(fmt::format("{:.2f}", pressure.average_pct), "6.97");
  EXPECT_EQ(fmt::format("{:.2f}", pressure.accuracy_pct), "93.03");
  EXPECT_FALSE(pressure.average_discrepancy);
  EXPECT_TRUE(r.collective_from_stated);
  EXPECT_NEAR(r.collective_accuracy_pct, (99.540 + 99.798 + 93.03) / 3.0, 1e-12);
  EXPECT_EQ(fmt::format("{:.3f}", r.collective_accuracy_pct), "97.456");
}

TEST(Calibration, StatedAverageDiscrepanciesFlagged) {
  const auto r = calibration_report(paper_tables());
  const auto& temp = r.sensors[0];
  EXPECT_NEAR(temp.average_pct, (0.2497 + 1.248 + 0.2213 + 0.3461 + 0.18524) / 5.0, 1e-12);
  EXPECT_NEAR(temp.average_pct, 0.45007, 5e-6);
  EXPECT_TRUE(temp.average_discrepancy);
  const auto& hum = r.sensors[1];
  EXPECT_NEAR(hum.average_pct, 0.19707, 5e-6);
  EXPECT_TRUE(hum.average_discrepancy);
  const auto text = render_report(r);
  EXPECT_NE(text.find("DISCREPANCY"), std::string::npos);
  EXPECT_NE(text.find("97.456%"), std::string::npos);
}

TEST(Calibration, CsvAndErrors) {
  const auto cal = parse_calibration_csv("# denominator: measured\nreference,measured\n10,11\n20,19\n", "x");
  EXPECT_EQ(cal.sensor, "x");
  EXPECT_EQ(cal.denominator, Denominator::measured);
  ASSERT_EQ(cal.records.size(), 2U);
  EXPECT_EQ(cal.records[1].deviation(), -1.0);
  EXPECT_FALSE(cal.records[0].printed_pct_error);
  EXPECT_THROW(parse_calibration_csv("reference,measured\n"), ParseError);
  EXPECT_THROW(parse_calibration_csv("reference,measured\n1,abc\n"), ParseError);
  EXPECT_THROW(parse_calibration_csv("# denominator: sideways\n1,2\n"), ParseError);
  EXPECT_THROW(calibration_report({}), std::invalid_argument);
  EXPECT_THROW(summarize(SensorCalibration{}), std::invalid_argument);
}

TEST(Survivability, Fig15FrameIsGood) {
  const auto r = survivability({168, 32.67, 52.81, 0.0, 0});
  EXPECT_EQ(r.air, Level::good);
  EXPECT_EQ(r.thermal, Level::good);
  EXPECT_EQ(r.overall, Level::good);
  EXPECT_EQ(r.rationale.size(), 2U);
}

TEST(Survivability, RuleTable) {
  EXPECT_EQ(survivability({800, 25, 50, 0, 0}).overall, Level::poor);
  EXPECT_EQ(survivability({400, 25, 50, 0, 0}).air, Level::good);
  EXPECT_EQ(survivability({401, 25, 50, 0, 0}).air, Level::moderate);
  EXPECT_EQ(survivability({700, 25, 50, 0, 0}).air, Level::moderate);
  EXPECT_EQ(survivability({701, 25, 50, 0, 0}).air, Level::poor);
  EXPECT_EQ(survivability({100, 35, 80, 0, 0}).thermal, Level::good);
  EXPECT_EQ(survivability({100, 40, 50, 0, 0}).thermal, Level::moderate);
  EXPECT_EQ(survivability({100, 25, 90, 0, 0}).thermal, Level::moderate);
  EXPECT_EQ(survivability({100, 40.01, 50, 0, 0}).thermal, Level::poor);
  EXPECT_EQ(survivability({100, 25, 9.99, 0, 0}).thermal, Level::poor);
  EXPECT_EQ(survivability({500, 25, 95, 0, 0}).overall, Level::poor);
  EXPECT_EQ(survivability({500, 12, 50, 0, 0}).overall, Level::moderate);
}

TEST(Survivability, OverallIsWorstAndGasMonotone) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> t(-10, 60), h(0, 100);
  for (int i = 0; i < 200; ++i) {
    SensorFrame f{0, t(rng), h(rng), 0, 0};
    Level prev = Level::good;
    for (int g = 0; g <= kGasMax; g += 7) {
      f.gas_raw = g;
      const auto r = survivability(f);
      ASSERT_GE(r.air, prev);
      ASSERT_EQ(r.overall, std::max(r.air, r.thermal));
      prev = r.air;
    }
  }
}

TEST(Survivability, LevelNames) {
  for (auto l : {Level::good, Level::moderate, Level::poor}) EXPECT_EQ(parse_level(to_string(l)), l);
  EXPECT_FALSE(parse_level("Fine"));
}
