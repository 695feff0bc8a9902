// rubble: command-line front end for data generation, training, evaluation,
// tuning, inference, simulation, the gateway, and sensor calibration.

#include <csignal>
#include <thread>
#include <pthread.h>
#include <unistd.h>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "rubble/audio/wav.hpp"
#include "rubble/experiment.hpp"
#include "rubble/gateway/server.hpp"
#include "rubble/metrics/reconstruct.hpp"
#include "rubble/nn/quantize.hpp"
#include "rubble/telemetry/calibration.hpp"
#include "rubble/tuner/tune.hpp"

using namespace rubble;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  bool json = false;
};

void emit_json(const json& j) { std::cout << j.dump(2) << '\n'; }

audio::FrontendConfig frontend_named(const std::string& name) {
  audio::FrontendConfig fe;
  if (name == "mfe") {
    fe.kind = audio::FrontendKind::mfe;
  } else if (name == "mfcc") {
    fe.kind = audio::FrontendKind::mfcc;
  } else {
    throw std::invalid_argument("unknown frontend '" + name + "' (expected mfe or mfcc)");
  }
  return fe;
}

json matrix_json(const metrics::ConfusionMatrix& m, const metrics::MetricsReport& r) {
  json rows = json::array();
  for (std::size_t t = 0; t < m.classes(); ++t) {
    json row = json::array();
    for (std::size_t c = 0; c < m.columns(); ++c) row.push_back(m.at(t, c));
    rows.push_back(row);
  }
  return {{"labels", m.labels}, {"uncertain_column", m.has_uncertain}, {"counts", rows},       {"precision", r.precision},
          {"recall", r.recall}, {"f1", r.f1},                          {"accuracy", r.accuracy}};
}

// ---- gen-data ----

struct GenDataArgs {
  std::string out;
  std::size_t per_class = 120;
  double train_fraction = 0.84;
};

int cmd_gen_data(const Globals& g, const GenDataArgs& a) {
  const auto m = synth::generate_dataset(a.per_class, g.seed, a.out, a.train_fraction);
  if (g.json) {
    emit_json({{"out", a.out}, {"seed", g.seed}, {"train", m.count(synth::Split::train)}, {"test", m.count(synth::Split::test)}});
  } else {
    fmt::print("wrote {} clips to {} ({} train / {} test, seed {})\n", m.entries.size(), a.out, m.count(synth::Split::train),
               m.count(synth::Split::test), g.seed);
  }
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string out = "model.rsnn";
  std::string frontend = "mfe";
  int epochs = 100;
  double lr = 0.0005;
  int batch = 32;
  bool int8 = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  const auto fe = frontend_named(a.frontend);
  const auto manifest = synth::load_manifest(a.data);
  const auto clips = synth::load_split(a.data, manifest, synth::Split::train);
  nn::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.rng_seed = g.seed;
  const auto model = train_model(clips, fe, cfg);
  const auto wf = nn::cast_weights<float>(model.weights);
  if (a.int8) {
    nn::save_weights(model.spec, nn::quantize(wf), a.out, fe);
  } else {
    nn::save_weights(model.spec, wf, a.out, fe);
  }
  const auto last = model.history.empty() ? nn::EpochStats{} : model.history.back();
  if (g.json) {
    json hist = json::array();
    for (const auto& h : model.history) {
      hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"train_accuracy", h.train_accuracy},
                      {"val_loss", h.val_loss}, {"val_accuracy", h.val_accuracy}});
    }
    emit_json({{"model", a.out}, {"params", nn::total_params(model.spec)}, {"int8", a.int8}, {"history", hist}});
  } else {
    for (const auto& h : model.history) {
      if (h.epoch % 10 == 0 || h.epoch == 1 || h.epoch == a.epochs) {
        fmt::print("epoch {:>3}  loss {:.4f}  acc {:.3f}  val_loss {:.4f}  val_acc {:.3f}\n", h.epoch, h.train_loss,
                   h.train_accuracy, h.val_loss, h.val_accuracy);
      }
    }
    fmt::print("saved {} ({} parameters, {}) to {}; final validation accuracy {:.3f}\n", a.frontend,
               nn::total_params(model.spec), a.int8 ? "int8" : "float32", a.out, last.val_accuracy);
  }
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string data;
  std::string model;
  double threshold = nn::kDefaultThreshold;
  bool paper_tables = false;
  std::string csv;
};

json reconstruction_report(const metrics::ReportedTable& t, const std::string& title, bool print) {
  const auto rec = metrics::reconstruct_counts(t.table, t.accuracy);
  const auto rep = metrics::metrics_from_confusion(rec.matrix);
  if (print) {
    std::cout << metrics::render_table(rec.matrix, rep, title);
    std::cout << "Samples per class:";
    for (std::size_t k = 0; k < rec.per_class.size(); ++k) std::cout << ' ' << t.table.labels[k] << '=' << rec.per_class[k];
    std::cout << "\nReported F1:";
    for (double f : t.f1) std::cout << fmt::format(" {:.2f}", f);
    std::cout << fmt::format("\nReported accuracy: {:.{}f}%\n\n", t.accuracy.percent, t.accuracy.decimals);
  }
  auto j = matrix_json(rec.matrix, rep);
  j["per_class"] = rec.per_class;
  j["reported_f1"] = t.f1;
  j["reported_accuracy_pct"] = t.accuracy.percent;
  return j;
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  json out;
  const bool show = !g.json;
  if (a.paper_tables || a.model.empty()) {
    out["validation_table"] = reconstruction_report(metrics::field_validation_table(), "Validation set (reconstructed counts)", show);
    out["test_table"] = reconstruction_report(metrics::field_test_table(), "Test set (reconstructed counts)", show);
  }
  if (!a.model.empty()) {
    if (a.data.empty()) throw std::invalid_argument("--data is required with --model");
    const auto model = Classifier::load(a.model);
    const auto manifest = synth::load_manifest(a.data);
    const auto clips = synth::load_split(a.data, manifest, synth::Split::test);
    const auto ev = evaluate_model(model, clips, a.threshold);
    const auto rep = metrics::metrics_from_confusion(ev.decisions);
    if (show) {
      std::cout << metrics::render_table(ev.decisions, rep, fmt::format("Held-out test split (threshold {:.2f})", a.threshold));
      std::cout << fmt::format("Top-1 accuracy (no threshold): {:.2f}%\n", 100.0 * ev.argmax_accuracy);
    }
    out["test"] = matrix_json(ev.decisions, rep);
    out["test"]["argmax_accuracy"] = ev.argmax_accuracy;
    if (!a.csv.empty()) {
      std::ofstream f(a.csv);
      if (!f) throw Error("cannot write " + a.csv);
      f << metrics::to_csv(ev.decisions, rep);
    }
  }
  if (g.json) emit_json(out);
  return 0;
}

// ---- tune ----

struct TuneArgs {
  std::string data;
  std::vector<std::string> frontends{"mfe", "mfcc"};
  std::vector<int> conv_widths{4, 8};
  std::vector<int> dense_widths{0, 16};
  int epochs = 20;
  std::string leaderboard;
  std::string out;
  std::uint64_t sram = 262144;
  std::uint64_t flash = 1048576;
  std::uint64_t clock = 64'000'000;
};

int cmd_tune(const Globals& g, const TuneArgs& a) {
  tuner::SearchSpace space;
  for (const auto& f : a.frontends) space.frontends.push_back(frontend_named(f));
  space.conv_widths = a.conv_widths;
  space.dense_widths = a.dense_widths;
  const auto en = tuner::enumerate_candidates(space);
  for (const auto& r : en.rejected) std::cerr << "skipped " << r << '\n';
  if (en.candidates.empty()) throw std::invalid_argument("the search space produced no valid candidates");

  const auto manifest = synth::load_manifest(a.data);
  auto clips = synth::load_split(a.data, manifest, synth::Split::train);
  std::mt19937_64 rng(derive_seed(g.seed, 0x70e));
  std::shuffle(clips.begin(), clips.end(), rng);
  const auto n_val = std::max<std::size_t>(1, clips.size() / 5);
  const std::span<const audio::AudioClip> all(clips);
  const auto train = all.first(all.size() - n_val);
  const auto val = all.last(n_val);

  tuner::TuneConfig cfg;
  cfg.epochs = a.epochs;
  cfg.seed = g.seed;
  const tuner::DeviceBudget budget{a.sram, a.flash, a.clock};
  const auto r = tuner::tune(en.candidates, train, val, budget, cfg);
  const auto csv = tuner::leaderboard_csv(r.leaderboard);
  if (!a.leaderboard.empty()) {
    std::ofstream f(a.leaderboard);
    if (!f) throw Error("cannot write " + a.leaderboard);
    f << csv;
  }
  if (!a.out.empty()) nn::save_weights(r.best.model, nn::cast_weights<float>(r.best_weights), a.out, r.best.frontend);
  if (g.json) {
    json board = json::array();
    for (const auto& e : r.leaderboard) {
      board.push_back({{"id", e.id}, {"accuracy", e.accuracy}, {"ram_bytes", e.cost.ram_bytes}, {"rom_bytes", e.cost.rom_bytes},
                       {"latency_ms", e.cost.latency_ms}, {"feasible", e.feasible}});
    }
    emit_json({{"best", r.best.id}, {"leaderboard", board}});
  } else {
    std::cout << csv;
    fmt::print("best: {} (val accuracy {:.3f}, {} B RAM, {} B ROM, {:.1f} ms)\n", r.best.id, r.best_entry.accuracy,
               r.best_entry.cost.ram_bytes, r.best_entry.cost.rom_bytes, r.best_entry.cost.latency_ms);
  }
  return 0;
}

// ---- infer ----

struct InferArgs {
  std::string wav;
  std::string model;
  double threshold = nn::kDefaultThreshold;
};

int cmd_infer(const Globals& g, const InferArgs& a) {
  const auto model = Classifier::load(a.model);
  const auto clip = leading_window(audio::read_wav(a.wav), static_cast<std::size_t>(model.frontend().clip_samples));
  const auto block = model.predict_block(clip);
  const auto decision = nn::classify(block.probabilities, a.threshold);
  if (g.json) {
    json probs = json::object();
    for (std::size_t k = 0; k < kNumClasses; ++k) probs[std::string(kClassNames[k])] = block.probabilities[k];
    emit_json({{"dsp_ms", block.dsp_ms}, {"classification_ms", block.classification_ms}, {"anomaly_ms", block.anomaly_ms},
               {"probabilities", probs}, {"label", decision ? json(std::string(name_of(*decision))) : json(nullptr)}});
  } else {
    std::cout << telemetry::emit_prediction_block(block);
  }
  return 0;
}

// ---- simulate ----

struct SimulateArgs {
  std::string map;
  std::string model;
  std::uint64_t ticks = 50;
  std::string commands;
  std::string replay;
  std::string log;
};

std::vector<sim::TimedCommand> load_commands(const SimulateArgs& a) {
  if (!a.commands.empty() && !a.replay.empty()) throw std::invalid_argument("--commands and --replay are exclusive");
  if (!a.commands.empty()) {
    std::ifstream in(a.commands);
    if (!in) throw Error("cannot open " + a.commands);
    return sim::parse_command_log(in);
  }
  if (!a.replay.empty()) {
    std::ifstream in(a.replay);
    if (!in) throw Error("cannot open " + a.replay);
    return gateway::drive_commands_from_log(in);
  }
  return {};
}

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  const auto map = sim::load_map(a.map);
  std::optional<Classifier> model;
  if (!a.model.empty()) model = Classifier::load(a.model);
  sim::Simulator simulator(map, model ? &*model : nullptr, g.seed);
  const auto commands = load_commands(a);
  if (a.log.empty() || a.log == "-") {
    gateway::record_session(simulator, commands, a.ticks, std::cout);
  } else {
    std::ofstream out(a.log, std::ios::binary);
    if (!out) throw Error("cannot write " + a.log);
    gateway::record_session(simulator, commands, a.ticks, out);
    const auto& p = simulator.state().pose;
    if (g.json) {
      emit_json({{"log", a.log}, {"ticks", a.ticks}, {"x", p.x}, {"y", p.y}, {"heading", p.heading}});
    } else {
      fmt::print("{} ticks written to {}; final pose x={:.3f} y={:.3f} heading={:.3f}\n", a.ticks, a.log, p.x, p.y, p.heading);
    }
  }
  return 0;
}

// ---- serve ----

struct ServeArgs {
  std::string map;
  std::string serial;
  std::string model;
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;
  int tick_ms = 2000;
  std::uint64_t ticks = 0;
  std::size_t wait_clients = 0;
  std::string log;
};

int cmd_serve(const Globals& g, const ServeArgs& a) {
  if (a.map.empty() == a.serial.empty()) throw std::invalid_argument("give exactly one of --map or --serial");
  std::ofstream log_file;
  std::ostream* log = nullptr;
  if (a.log == "-") {
    log = &std::cout;
  } else if (!a.log.empty()) {
    log_file.open(a.log, std::ios::binary);
    if (!log_file) throw Error("cannot write " + a.log);
    log = &log_file;
  }
  gateway::ServeOptions opts;
  opts.host = a.host;
  opts.port = a.port;
  opts.tick_interval = std::chrono::milliseconds(a.tick_ms);
  if (a.ticks > 0) opts.max_ticks = a.ticks;
  opts.wait_for_clients = a.wait_clients;
  // SIGINT/SIGTERM are taken by a dedicated thread so stop() never runs inside a handler.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  gateway::Gateway gw(opts, log);
  std::thread signal_waiter([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    gw.stop();
  });
  struct WakeWaiter {
    std::thread& t;
    ~WakeWaiter() {
      ::kill(::getpid(), SIGTERM);
      t.join();
    }
  } wake{signal_waiter};
  std::cerr << "listening on " << a.host << ':' << gw.port() << " (NDJSON, WebSocket at /stream)\n";

  if (!a.map.empty()) {
    std::optional<Classifier> model;
    if (!a.model.empty()) model = Classifier::load(a.model);
    sim::Simulator simulator(sim::load_map(a.map), model ? &*model : nullptr, g.seed);
    gw.run_simulation(simulator);
  } else if (a.serial == "-") {
    gw.run_serial(std::cin);
  } else {
    std::ifstream in(a.serial);
    if (!in) throw Error("cannot open " + a.serial);
    gw.run_serial(in);
  }
  if (g.json) emit_json({{"messages", gw.hub().last_seq()}});
  return 0;
}

// ---- calibrate ----

int cmd_calibrate(const Globals& g, const std::vector<std::string>& files) {
  std::vector<telemetry::SensorCalibration> sensors;
  for (const auto& f : files) sensors.push_back(telemetry::load_calibration_csv(f));
  const auto report = telemetry::calibration_report(sensors);
  if (g.json) {
    emit_json(telemetry::to_json(report));
  } else {
    std::cout << telemetry::render_report(report);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic survivor detection toolkit: synthetic data, tiny classifier, probe simulator and gateway"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Global RNG seed")->envname("RUBBLE_SEED")->capture_default_str();
  app.add_flag("--json", g.json, "Machine-readable JSON output");

  GenDataArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Synthesize a labelled WAV dataset");
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--per-class", gen.per_class, "Clips per class")->capture_default_str();
  c_gen->add_option("--train-fraction", gen.train_fraction, "Share of clips in the training split")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the classifier on a dataset's training split");
  c_train->add_option("--data", tr.data, "Dataset directory")->required();
  c_train->add_option("--out", tr.out, "Model file")->capture_default_str();
  c_train->add_option("--frontend", tr.frontend, "mfe or mfcc")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs)->capture_default_str();
  c_train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  c_train->add_option("--batch", tr.batch)->capture_default_str();
  c_train->add_flag("--int8", tr.int8, "Store int8-quantized weights");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Confusion matrix and F1 report; reconstructed field tables");
  c_eval->add_option("--data", ev.data, "Dataset directory (test split is scored)");
  c_eval->add_option("--model", ev.model, "Model file");
  c_eval->add_option("--threshold", ev.threshold, "Confidence threshold; below it a clip is uncertain")->capture_default_str();
  c_eval->add_flag("--paper-tables", ev.paper_tables, "Also reconstruct the field validation and test tables");
  c_eval->add_option("--csv", ev.csv, "Write the confusion matrix as CSV");

  TuneArgs tu;
  auto* c_tune = app.add_subcommand("tune", "Search frontend and model candidates under the device budget");
  c_tune->add_option("--data", tu.data, "Dataset directory")->required();
  c_tune->add_option("--frontends", tu.frontends)->delimiter(',')->capture_default_str();
  c_tune->add_option("--conv-widths", tu.conv_widths)->delimiter(',')->capture_default_str();
  c_tune->add_option("--dense-widths", tu.dense_widths, "0 = no hidden dense layer")->delimiter(',')->capture_default_str();
  c_tune->add_option("--epochs", tu.epochs)->capture_default_str();
  c_tune->add_option("--leaderboard", tu.leaderboard, "Write the leaderboard CSV here");
  c_tune->add_option("--out", tu.out, "Save the selected model here");
  c_tune->add_option("--sram", tu.sram)->capture_default_str();
  c_tune->add_option("--flash", tu.flash)->capture_default_str();
  c_tune->add_option("--clock", tu.clock)->capture_default_str();

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Classify one WAV clip and print a prediction block");
  c_infer->add_option("wav", inf.wav)->required();
  c_infer->add_option("--model", inf.model)->required();
  c_infer->add_option("--threshold", inf.threshold)->capture_default_str();

  SimulateArgs si;
  auto* c_sim = app.add_subcommand("simulate", "Run the probe simulator offline and write a session log");
  c_sim->add_option("map", si.map)->required();
  c_sim->add_option("--model", si.model, "Model file; without one no predictions are made");
  c_sim->add_option("--ticks", si.ticks)->capture_default_str();
  c_sim->add_option("--commands", si.commands, "JSONL drive commands {t_ms, direction, magnitude}");
  c_sim->add_option("--replay", si.replay, "Session log whose drive messages are replayed");
  c_sim->add_option("--log", si.log, "Session log output (default stdout)");

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Run the gateway over TCP");
  c_serve->add_option("--map", sv.map, "Simulate a probe on this map");
  c_serve->add_option("--serial", sv.serial, "Read serial-monitor text from this file ('-' for stdin)");
  c_serve->add_option("--model", sv.model);
  c_serve->add_option("--host", sv.host)->capture_default_str();
  c_serve->add_option("--port", sv.port)->capture_default_str();
  c_serve->add_option("--tick-ms", sv.tick_ms, "Wall-clock interval between simulator ticks")->capture_default_str();
  c_serve->add_option("--ticks", sv.ticks, "Stop after this many ticks (0 = run until interrupted)");
  c_serve->add_option("--wait-clients", sv.wait_clients, "Hold the first tick until this many clients connect");
  c_serve->add_option("--log", sv.log, "Session log file (- for stdout)");

  std::vector<std::string> cal_files;
  auto* c_cal = app.add_subcommand("calibrate", "Percentage-error report for sensor calibration CSVs");
  c_cal->add_option("csv", cal_files)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_gen) return cmd_gen_data(g, gen);
    if (*c_train) return cmd_train(g, tr);
    if (*c_eval) return cmd_eval(g, ev);
    if (*c_tune) return cmd_tune(g, tu);
    if (*c_infer) return cmd_infer(g, inf);
    if (*c_sim) return cmd_simulate(g, si);
    if (*c_serve) return cmd_serve(g, sv);
    if (*c_cal) return cmd_calibrate(g, cal_files);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
