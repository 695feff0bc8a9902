// Gateway wire protocol: one JSON object per line, tagged by "type".
//
//   {"type":"telemetry","seq":7,"ts":2000,"gas":168,"temp_c":32.67,"humidity_pct":52.81,"pressure_kpa":0.0}
//
// Body timestamps (SensorFrame, PredictionBlock) mirror the envelope "ts".
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubble/nn/network.hpp"
#include "rubble/sim/probe.hpp"
#include "rubble/telemetry/codec.hpp"
#include "rubble/telemetry/survivability.hpp"

namespace rubble::gateway {

inline constexpr std::size_t kMaxLineBytes = 64 * 1024;

enum class ProtocolErrorCode { unknown_type, malformed_json, oversize_line, invalid_field };

inline std::string_view to_string(ProtocolErrorCode c) {
  switch (c) {
    case ProtocolErrorCode::unknown_type: return "unknown_type";
    case ProtocolErrorCode::malformed_json: return "malformed_json";
    case ProtocolErrorCode::oversize_line: return "oversize_line";
    case ProtocolErrorCode::invalid_field: return "invalid_field";
  }
  return "?";
}

class ProtocolError : public FormatError {
 public:
  ProtocolError(ProtocolErrorCode code, const std::string& what) : FormatError(std::string(to_string(code)) + ": " + what), code_(code) {}
  ProtocolErrorCode code() const { return code_; }

 private:
  ProtocolErrorCode code_;
};

struct Telemetry {
  telemetry::SensorFrame frame;
  friend bool operator==(const Telemetry&, const Telemetry&) = default;
};
struct PredictionMsg {
  telemetry::PredictionBlock block;
  friend bool operator==(const PredictionMsg&, const PredictionMsg&) = default;
};
struct Survivability {
  telemetry::SurvivabilityReport report;
  friend bool operator==(const Survivability&, const Survivability&) = default;
};
struct Drive {
  sim::DriveCommand command;
  friend bool operator==(const Drive&, const Drive&) = default;
};
struct PoseMsg {
  sim::Pose pose;
  friend bool operator==(const PoseMsg&, const PoseMsg&) = default;
};
struct Log {
  std::string level = "info";
  std::string text;
  friend bool operator==(const Log&, const Log&) = default;
};
struct ErrorMsg {
  std::string code;
  std::string text;
  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using Body = std::variant<Telemetry, PredictionMsg, Survivability, Drive, PoseMsg, Log, ErrorMsg>;

struct Message {
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  Body body;
  friend bool operator==(const Message&, const Message&) = default;
};

inline std::string_view type_name(const Body& b) {
  static constexpr std::string_view names[] = {"telemetry", "prediction", "survivability", "drive", "pose", "log", "error"};
  return names[b.index()];
}

/// Keeps embedded body timestamps equal to the envelope.
inline Message make_message(std::uint64_t seq, std::int64_t ts, Body body) {
  if (auto* t = std::get_if<Telemetry>(&body)) t->frame.timestamp_ms = ts;
  if (auto* p = std::get_if<PredictionMsg>(&body)) p->block.timestamp_ms = ts;
  return {seq, ts, std::move(body)};
}

namespace detail {

using nlohmann::json;

inline json body_json(const Telemetry& m) {
  return {{"gas", m.frame.gas_raw}, {"temp_c", m.frame.temp_c}, {"humidity_pct", m.frame.humidity_pct}, {"pressure_kpa", m.frame.pressure_kpa}};
}
inline json body_json(const PredictionMsg& m) {
  json probs = json::object();
  for (std::size_t k = 0; k < kNumClasses; ++k) probs[std::string(kClassNames[k])] = m.block.probabilities[k];
  const auto decision = nn::classify(m.block.probabilities);
  return {{"dsp_ms", m.block.dsp_ms},
          {"classification_ms", m.block.classification_ms},
          {"anomaly_ms", m.block.anomaly_ms},
          {"probabilities", probs},
          {"label", decision ? json(std::string(name_of(*decision))) : json(nullptr)}};
}
inline json body_json(const Survivability& m) {
  return {{"air", telemetry::to_string(m.report.air)},
          {"thermal", telemetry::to_string(m.report.thermal)},
          {"overall", telemetry::to_string(m.report.overall)},
          {"rationale", m.report.rationale}};
}
inline json body_json(const Drive& m) { return {{"direction", sim::to_string(m.command.direction)}, {"magnitude", m.command.magnitude}}; }
inline json body_json(const PoseMsg& m) { return {{"x", m.pose.x}, {"y", m.pose.y}, {"heading", m.pose.heading}}; }
inline json body_json(const Log& m) { return {{"level", m.level}, {"text", m.text}}; }
inline json body_json(const ErrorMsg& m) { return {{"code", m.code}, {"text", m.text}}; }

inline telemetry::Level level_field(const json& j, const char* key) {
  const auto l = telemetry::parse_level(j.at(key).get<std::string>());
  if (!l) throw ProtocolError(ProtocolErrorCode::invalid_field, std::string("'") + key + "' must be Good, Moderate or Poor");
  return *l;
}

inline Body body_from_json(std::string_view type, const json& j) {
  if (type == "telemetry") {
    Telemetry t;
    t.frame.gas_raw = j.at("gas").get<int>();
    t.frame.temp_c = j.at("temp_c").get<double>();
    t.frame.humidity_pct = j.at("humidity_pct").get<double>();
    t.frame.pressure_kpa = j.at("pressure_kpa").get<double>();
    try {
      t.frame.validate();
    } catch (const std::invalid_argument& e) {
      throw ProtocolError(ProtocolErrorCode::invalid_field, e.what());
    }
    return t;
  }
  if (type == "prediction") {
    PredictionMsg p;
    p.block.dsp_ms = j.at("dsp_ms").get<int>();
    p.block.classification_ms = j.at("classification_ms").get<int>();
    p.block.anomaly_ms = j.at("anomaly_ms").get<int>();
    const auto& probs = j.at("probabilities");
    for (std::size_t k = 0; k < kNumClasses; ++k) p.block.probabilities[k] = probs.at(std::string(kClassNames[k])).get<double>();
    return p;
  }
  if (type == "survivability") {
    Survivability s;
    s.report.air = level_field(j, "air");
    s.report.thermal = level_field(j, "thermal");
    s.report.overall = level_field(j, "overall");
    s.report.rationale = j.value("rationale", std::vector<std::string>{});
    return s;
  }
  if (type == "drive") {
    const auto dir = sim::parse_direction(j.at("direction").get<std::string>());
    if (!dir) throw ProtocolError(ProtocolErrorCode::invalid_field, "unknown drive direction");
    Drive d{{*dir, j.value("magnitude", 1.0)}};
    if (!(d.command.magnitude >= 0.0 && d.command.magnitude <= 1.0)) {
      throw ProtocolError(ProtocolErrorCode::invalid_field, "drive magnitude must be in [0, 1]");
    }
    return d;
  }
  if (type == "pose") return PoseMsg{{j.at("x").get<double>(), j.at("y").get<double>(), j.at("heading").get<double>()}};
  if (type == "log") return Log{j.at("level").get<std::string>(), j.at("text").get<std::string>()};
  if (type == "error") return ErrorMsg{j.at("code").get<std::string>(), j.at("text").get<std::string>()};
  throw ProtocolError(ProtocolErrorCode::unknown_type, "unknown message type '" + std::string(type) + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const Message& m) {
  nlohmann::json j{{"type", type_name(m.body)}, {"seq", m.seq}, {"ts", m.timestamp_ms}};
  j.update(std::visit([](const auto& b) { return detail::body_json(b); }, m.body));
  return j;
}

/// One line, without the trailing newline.
inline std::string encode(const Message& m) {
  std::string line;
  try {
    line = to_json(m).dump();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(ProtocolErrorCode::invalid_field, e.what());
  }
  if (line.size() > kMaxLineBytes) throw ProtocolError(ProtocolErrorCode::oversize_line, "encoded message exceeds 64 KiB");
  return line;
}

inline Message decode(std::string_view line) {
  if (line.size() > kMaxLineBytes) {
    throw ProtocolError(ProtocolErrorCode::oversize_line, "line of " + std::to_string(line.size()) + " bytes exceeds 64 KiB");
  }
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(ProtocolErrorCode::malformed_json, e.what());
  }
  if (!j.is_object()) throw ProtocolError(ProtocolErrorCode::malformed_json, "message must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw ProtocolError(ProtocolErrorCode::unknown_type, "missing 'type'");
  const auto type = j["type"].get<std::string>();
  try {
    auto body = detail::body_from_json(type, j);
    return make_message(j.value("seq", std::uint64_t{0}), j.value("ts", std::int64_t{0}), std::move(body));
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(ProtocolErrorCode::invalid_field, type + ": " + e.what());
  }
}

/// Messages for one simulator tick, in publish order: drive echoes, pose, telemetry, survivability, prediction.
inline std::vector<Body> tick_bodies(const sim::TickOutput& t) {
  std::vector<Body> out;
  for (const auto& c : t.drained) out.emplace_back(Drive{c.command});
  out.emplace_back(PoseMsg{t.pose});
  out.emplace_back(Telemetry{t.sensors});
  out.emplace_back(Survivability{telemetry::survivability(t.sensors)});
  if (t.prediction) out.emplace_back(PredictionMsg{*t.prediction});
  return out;
}

}  // namespace rubble::gateway
