// Simulated probe: skid-steer kinematics over a gridded rubble map. Each
// 2 s cycle records a 1 s clip of the current cell's ambient class,
// classifies it, and reads the cell's sensors with Gaussian noise.
#pragma once

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubble/pipeline.hpp"
#include "rubble/synth/recipes.hpp"
#include "rubble/telemetry/codec.hpp"
#include "rubble/tuner/cost.hpp"

namespace rubble::sim {

class MapError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct Cell {
  std::optional<SoundClass> ambient;  // nullopt = silent
  double temp_c = 25.0;
  double humidity_pct = 50.0;
  double pressure_kpa = 101.3;
  int gas_raw = 150;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, counter-clockwise from +x
  friend bool operator==(const Pose&, const Pose&) = default;
};

struct RubbleMap {
  std::size_t width = 0;
  std::size_t height = 0;
  double cell_size_m = 1.0;
  std::vector<Cell> cells;  // row-major, y then x
  std::optional<Pose> start;

  double width_m() const { return static_cast<double>(width) * cell_size_m; }
  double height_m() const { return static_cast<double>(height) * cell_size_m; }
  const Cell& at(std::size_t cx, std::size_t cy) const { return cells.at(cy * width + cx); }
  Cell& at(std::size_t cx, std::size_t cy) { return cells.at(cy * width + cx); }

  const Cell& cell_at(double x, double y) const {
    const auto idx = [&](double v, std::size_t n) {
      const auto i = static_cast<std::ptrdiff_t>(std::floor(v / cell_size_m));
      return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
    };
    return at(idx(x, width), idx(y, height));
  }
  Pose start_pose() const { return start.value_or(Pose{0.5 * cell_size_m, 0.5 * cell_size_m, 0.0}); }
  friend bool operator==(const RubbleMap&, const RubbleMap&) = default;
};

inline void validate_cell(const Cell& c, std::size_t index) {
  const auto fail = [&](const std::string& what) { throw MapError("cell " + std::to_string(index) + ": " + what); };
  if (c.gas_raw < 0 || c.gas_raw > telemetry::kGasMax) fail("gas_raw " + std::to_string(c.gas_raw) + " outside 0-1024");
  if (!(c.humidity_pct >= 0.0 && c.humidity_pct <= 100.0)) fail("humidity_pct outside 0-100");
  if (!(c.temp_c >= -40.0 && c.temp_c <= 120.0)) fail("temp_c outside -40..120");
  if (!(c.pressure_kpa >= 0.0 && c.pressure_kpa <= 200.0)) fail("pressure_kpa outside 0..200");
}

inline void validate_map(const RubbleMap& m) {
  if (m.width == 0 || m.height == 0) throw MapError("map needs width and height >= 1");
  if (!(m.cell_size_m > 0.0)) throw MapError("cell_size_m must be positive");
  if (m.cells.size() != m.width * m.height) {
    throw MapError("expected " + std::to_string(m.width * m.height) + " cells, found " + std::to_string(m.cells.size()));
  }
  for (std::size_t i = 0; i < m.cells.size(); ++i) validate_cell(m.cells[i], i);
  if (m.start) {
    const auto& s = *m.start;
    if (!(s.x >= 0.0 && s.x <= m.width_m() && s.y >= 0.0 && s.y <= m.height_m())) throw MapError("start pose outside map");
  }
}

inline nlohmann::json to_json(const RubbleMap& m) {
  nlohmann::json j{{"width", m.width}, {"height", m.height}, {"cell_size_m", m.cell_size_m}};
  if (m.start) j["start"] = {{"x", m.start->x}, {"y", m.start->y}, {"heading", m.start->heading}};
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const auto& c : m.cells) {
    cells.push_back({{"class", c.ambient ? std::string(name_of(*c.ambient)) : "silent"},
                     {"temp_c", c.temp_c},
                     {"humidity_pct", c.humidity_pct},
                     {"pressure_kpa", c.pressure_kpa},
                     {"gas_raw", c.gas_raw}});
  }
  return j;
}

inline RubbleMap map_from_json(const nlohmann::json& j) {
  RubbleMap m;
  try {
    m.width = j.at("width").get<std::size_t>();
    m.height = j.at("height").get<std::size_t>();
    m.cell_size_m = j.value("cell_size_m", 1.0);
    if (j.contains("start")) {
      const auto& s = j.at("start");
      m.start = Pose{s.at("x").get<double>(), s.at("y").get<double>(), s.value("heading", 0.0)};
    }
    const auto& cells = j.at("cells");
    if (!cells.is_array()) throw MapError("'cells' must be an array");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& jc = cells[i];
      if (!jc.is_object()) throw MapError("cell " + std::to_string(i) + ": malformed cell (expected an object)");
      Cell c;
      try {
        const auto name = jc.at("class").get<std::string>();
        if (name != "silent") {
          c.ambient = parse_class(name);
          if (!c.ambient) throw MapError("cell " + std::to_string(i) + ": unknown class '" + name + "'");
        }
        c.temp_c = jc.at("temp_c").get<double>();
        c.humidity_pct = jc.at("humidity_pct").get<double>();
        c.pressure_kpa = jc.at("pressure_kpa").get<double>();
        const double gas = jc.at("gas_raw").get<double>();
        if (gas != std::floor(gas)) throw MapError("cell " + std::to_string(i) + ": gas_raw must be an integer");
        if (std::abs(gas) > 1e9) throw MapError("cell " + std::to_string(i) + ": gas_raw " + jc.at("gas_raw").dump() + " outside 0-1024");
        c.gas_raw = static_cast<int>(gas);
      } catch (const nlohmann::json::exception& e) {
        throw MapError("cell " + std::to_string(i) + ": malformed cell (" + e.what() + ")");
      }
      m.cells.push_back(c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw MapError(std::string("malformed map: ") + e.what());
  }
  validate_map(m);
  return m;
}

inline RubbleMap load_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open map " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw MapError(path.string() + ": " + e.what());
  }
  return map_from_json(j);
}

inline void save_map(const RubbleMap& m, const std::filesystem::path& path) {
  validate_map(m);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

enum class Direction : std::uint8_t { forward, reverse, left, right, stop };

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::forward: return "forward";
    case Direction::reverse: return "reverse";
    case Direction::left: return "left";
    case Direction::right: return "right";
    case Direction::stop: return "stop";
  }
  return "?";
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  for (auto d : {Direction::forward, Direction::reverse, Direction::left, Direction::right, Direction::stop}) {
    if (s == to_string(d)) return d;
  }
  return std::nullopt;
}

struct DriveCommand {
  Direction direction = Direction::stop;
  double magnitude = 0.0;

  void validate() const {
    if (!(magnitude >= 0.0 && magnitude <= 1.0)) throw std::invalid_argument("drive magnitude must be in [0, 1]");
  }
  friend bool operator==(const DriveCommand&, const DriveCommand&) = default;
};

struct Kinematics {
  double max_speed_mps = 0.5;
  double max_turn_rps = 1.0;
};

struct ProbeState {
  Pose pose;
  double speed_mps = 0.0;     // signed, along heading
  double turn_rate_rps = 0.0;  // signed, counter-clockwise
  std::uint64_t cycle = 0;     // completed cycles
  friend bool operator==(const ProbeState&, const ProbeState&) = default;
};

struct Bounds {
  double width_m = 0.0;
  double height_m = 0.0;
};

/// Sets the motion from `cmd` and integrates it for dt_s. Turning is in place.
inline ProbeState apply_drive(ProbeState s, const DriveCommand& cmd, double dt_s, std::optional<Bounds> bounds = std::nullopt,
                              const Kinematics& k = {}) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("apply_drive: dt_s must be positive");
  cmd.validate();
  s.speed_mps = 0.0;
  s.turn_rate_rps = 0.0;
  switch (cmd.direction) {
    case Direction::forward: s.speed_mps = cmd.magnitude * k.max_speed_mps; break;
    case Direction::reverse: s.speed_mps = -cmd.magnitude * k.max_speed_mps; break;
    case Direction::left: s.turn_rate_rps = cmd.magnitude * k.max_turn_rps; break;
    case Direction::right: s.turn_rate_rps = -cmd.magnitude * k.max_turn_rps; break;
    case Direction::stop: break;
  }
  s.pose.heading += s.turn_rate_rps * dt_s;
  s.pose.x += s.speed_mps * std::cos(s.pose.heading) * dt_s;
  s.pose.y += s.speed_mps * std::sin(s.pose.heading) * dt_s;
  if (bounds) {
    s.pose.x = std::clamp(s.pose.x, 0.0, bounds->width_m);
    s.pose.y = std::clamp(s.pose.y, 0.0, bounds->height_m);
  }
  return s;
}

struct SensorNoise {
  double temp_c = 0.1;
  double humidity_pct = 0.2;
  double pressure_kpa = 0.001;
  double gas_raw = 5.0;
};

struct SimConfig {
  double cycle_s = 2.0;
  Kinematics kinematics{};
  SensorNoise noise{};
  double threshold = nn::kDefaultThreshold;
  tuner::DeviceBudget device{};  // clock used for reported DSP / classification times
};

struct TimedCommand {
  std::int64_t t_ms = 0;
  DriveCommand command;
};

struct TickOutput {
  std::uint64_t tick = 0;  // 1-based cycle number
  std::int64_t timestamp_ms = 0;
  std::vector<TimedCommand> drained;  // commands applied this cycle, in arrival order
  Pose pose;
  telemetry::SensorFrame sensors;
  std::optional<telemetry::PredictionBlock> prediction;
  audio::AudioClip clip;
};

/// Sensor reading for a cell: cell values plus noise drawn from `rng`, clamped to valid ranges.
inline telemetry::SensorFrame read_sensors(const Cell& c, synth::Rng& rng, const SensorNoise& n, std::int64_t ts) {
  telemetry::SensorFrame f;
  f.temp_c = c.temp_c + n.temp_c * rng.normal();
  f.humidity_pct = std::clamp(c.humidity_pct + n.humidity_pct * rng.normal(), 0.0, 100.0);
  f.pressure_kpa = std::max(0.0, c.pressure_kpa + n.pressure_kpa * rng.normal());
  f.gas_raw = static_cast<int>(std::clamp<long>(std::lround(c.gas_raw + n.gas_raw * rng.normal()), 0, telemetry::kGasMax));
  f.timestamp_ms = ts;
  return f;
}

/// Ambient clip for a cell; silence is all zeros.
inline audio::AudioClip ambient_clip(const Cell& c, std::uint64_t seed) {
  if (c.ambient) return synth::generate_clip(*c.ambient, seed);
  audio::AudioClip clip;
  clip.samples.assign(synth::kClipSamples, 0);
  return clip;
}

/// Output is a pure function of (map, model, seed, commands submitted before each tick).
class Simulator {
 public:
  Simulator(RubbleMap map, const Classifier* model, std::uint64_t seed, SimConfig cfg = {})
      : map_((validate_map(map), std::move(map))), model_(model), seed_(seed), cfg_(cfg) {
    if (!(cfg_.cycle_s > 0.0)) throw std::invalid_argument("cycle_s must be positive");
    state_.pose = map_.start_pose();
  }

  const RubbleMap& map() const { return map_; }
  const ProbeState& state() const { return state_; }
  const DriveCommand& active() const { return active_; }
  std::int64_t cycle_ms() const { return std::llround(cfg_.cycle_s * 1000.0); }
  /// Timestamp the next tick will carry.
  std::int64_t next_timestamp_ms() const {
    std::lock_guard lock(mu_);
    return static_cast<std::int64_t>(state_.cycle + 1) * cycle_ms();
  }

  /// Thread-safe; the command takes effect at the next tick.
  void submit(const DriveCommand& cmd) {
    cmd.validate();
    std::lock_guard lock(mu_);
    queue_.push_back({static_cast<std::int64_t>(state_.cycle + 1) * cycle_ms(), cmd});
  }

  TickOutput tick() {
    TickOutput out;
    {
      std::lock_guard lock(mu_);
      out.drained.assign(queue_.begin(), queue_.end());
      queue_.clear();
      out.tick = state_.cycle + 1;
    }
    out.timestamp_ms = static_cast<std::int64_t>(out.tick) * cycle_ms();
    for (auto& c : out.drained) c.t_ms = out.timestamp_ms;
    if (!out.drained.empty()) active_ = out.drained.back().command;  // latest wins

    const auto next = apply_drive(state_, active_, cfg_.cycle_s, Bounds{map_.width_m(), map_.height_m()}, cfg_.kinematics);
    {
      std::lock_guard lock(mu_);
      state_ = next;
      state_.cycle = out.tick;
    }
    out.pose = state_.pose;

    const auto& cell = map_.cell_at(state_.pose.x, state_.pose.y);
    synth::Rng sensor_rng(derive_seed(seed_, out.tick, 0x5e7));
    out.sensors = read_sensors(cell, sensor_rng, cfg_.noise, out.timestamp_ms);
    out.clip = ambient_clip(cell, derive_seed(seed_, out.tick, 0xa0d));
    if (model_) {
      telemetry::PredictionBlock b;
      b.probabilities = (*model_)(out.clip);
      b.dsp_ms = static_cast<int>(std::lround(tuner::dsp_latency_ms(model_->frontend(), cfg_.device.clock_hz)));
      b.classification_ms = static_cast<int>(std::lround(tuner::inference_latency_ms(model_->spec(), cfg_.device.clock_hz)));
      b.timestamp_ms = out.timestamp_ms;
      out.prediction = b;
    }
    return out;
  }

 private:
  RubbleMap map_;
  const Classifier* model_;
  std::uint64_t seed_;
  SimConfig cfg_;
  ProbeState state_;
  DriveCommand active_{};
  mutable std::mutex mu_;
  std::deque<TimedCommand> queue_;
};

/// Timestamped drive commands, one JSON object per line:
/// {"t_ms": 4000, "direction": "forward", "magnitude": 1.0}
inline std::vector<TimedCommand> parse_command_log(std::istream& in) {
  std::vector<TimedCommand> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto dir = parse_direction(j.at("direction").get<std::string>());
      if (!dir) throw FormatError("unknown direction");
      TimedCommand c{j.at("t_ms").get<std::int64_t>(), {*dir, j.value("magnitude", 1.0)}};
      c.command.validate();
      out.push_back(c);
    } catch (const std::exception& e) {
      throw FormatError("command log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::string command_line(const TimedCommand& c) {
  return nlohmann::json{{"t_ms", c.t_ms}, {"direction", to_string(c.command.direction)}, {"magnitude", c.command.magnitude}}.dump();
}

/// Runs `ticks` cycles, submitting each command before the first tick whose timestamp is >= its t_ms.
template <typename OnTick>
void run_with_commands(Simulator& sim, std::vector<TimedCommand> commands, std::uint64_t ticks, OnTick&& on_tick) {
  std::stable_sort(commands.begin(), commands.end(), [](const auto& a, const auto& b) { return a.t_ms < b.t_ms; });
  std::size_t next = 0;
  for (std::uint64_t i = 0; i < ticks; ++i) {
    const auto ts = sim.next_timestamp_ms();
    while (next < commands.size() && commands[next].t_ms <= ts) sim.submit(commands[next++].command);
    on_tick(sim.tick());
  }
}

}  // namespace rubble::sim
