// Incremental reader for a serial-monitor text stream carrying sensor and
// prediction blocks.
#pragma once

#include <optional>
#include <string>
#include <variant>

#include "rubble/telemetry/codec.hpp"

namespace rubble::gateway {

struct SerialError {
  std::string text;
};

using SerialEvent = std::variant<telemetry::SensorFrame, telemetry::PredictionBlock, SerialError>;

class SerialBlockReader {
 public:
  /// Feeds one line (without newline). Returns an event when a block completes or fails.
  std::optional<SerialEvent> feed(std::string_view line) {
    const auto parsed = telemetry::detail::split_lines(line);
    const auto text = parsed.empty() ? std::string_view{} : parsed.front().text;

    std::optional<SerialEvent> aborted;
    if (telemetry::detail::istarts_with(text, "GAS Sensor Reading")) {
      aborted = restart(Kind::sensor);
    } else if (telemetry::detail::istarts_with(text, "Predictions")) {
      aborted = restart(Kind::prediction);
    } else if (kind_ == Kind::none) {
      return std::nullopt;
    }
    buffer_.append(line);
    buffer_.push_back('\n');
    if (aborted) return aborted;

    try {
      if (kind_ == Kind::sensor) {
        if (!telemetry::detail::istarts_with(text, "Pressure")) return std::nullopt;
        const auto frame = telemetry::parse_sensor_block(buffer_);
        reset();
        return frame;
      }
      const auto block = telemetry::parse_prediction_block(buffer_);
      reset();
      return block;
    } catch (const telemetry::IncompleteBlock&) {
      if (kind_ == Kind::sensor) return fail("sensor block ended before all fields were read");
      return std::nullopt;
    } catch (const telemetry::ParseError& e) {
      return fail(e.what());
    }
  }

  /// Call at end of stream; reports a truncated block.
  std::optional<SerialEvent> finish() {
    if (kind_ == Kind::none) return std::nullopt;
    return fail("stream ended inside a block");
  }

 private:
  enum class Kind { none, sensor, prediction };

  std::optional<SerialEvent> restart(Kind k) {
    std::optional<SerialEvent> out;
    if (kind_ != Kind::none) out = SerialError{"block interrupted by a new block header"};
    buffer_.clear();
    kind_ = k;
    return out;
  }
  void reset() {
    buffer_.clear();
    kind_ = Kind::none;
  }
  SerialEvent fail(std::string text) {
    reset();
    return SerialError{std::move(text)};
  }

  Kind kind_ = Kind::none;
  std::string buffer_;
};

}  // namespace rubble::gateway
