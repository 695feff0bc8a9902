// Acceptance run: one PASS/FAIL line per primary criterion. Exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <fmt/core.h>

#include "rubble/experiment.hpp"
#include "rubble/gateway/server.hpp"
#include "rubble/metrics/reconstruct.hpp"
#include "rubble/nn/adam.hpp"
#include "rubble/sim/probe.hpp"
#include "rubble/synth/recipes.hpp"
#include "rubble/telemetry/calibration.hpp"
#include "rubble/telemetry/codec.hpp"
#include "rubble/tuner/tune.hpp"

using namespace rubble;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = RUBBLE_FIXTURES;

// Tolerances
constexpr double kF1Tol = 0.005;
constexpr double kAccuracyTolPp = 0.1;
constexpr double kRowTol = 0.001;
constexpr double kGradRelTol = 1e-4;
constexpr double kAdamTol = 1e-12;
constexpr double kDspIdentityTol = 1e-9;
constexpr double kMelColumnTol = 1e-6;
constexpr double kParsevalRelTol = 1e-6;
constexpr double kSyntheticMinAccuracy = 0.90;
constexpr double kHelloHelpMinHitRate = 0.80;
constexpr double kLatencyCeilingMs = 304.0;
constexpr double kLatencyTargetMs = 10.0;
constexpr double kFastRuntimeS = 1.0;
constexpr double kSyntheticRuntimeS = 300.0;

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) { return std::chrono::duration<double>(clock_type::now() - t0).count(); }

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

// Runs a criterion; an escaping exception counts as a failure.
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [pass, detail] = body();
    report(name, pass, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<audio::AudioClip> clips(std::size_t per_class, std::uint64_t seed) {
  std::vector<audio::AudioClip> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (auto c : kAllClasses) out.push_back(synth::generate_clip(c, derive_seed(seed, i, index_of(c))));
  }
  return out;
}

// ---- tables ----

std::pair<bool, std::string> tables() {
  const auto t0 = clock_type::now();
  bool ok = true;
  std::string detail;
  for (const auto& t : {metrics::field_validation_table(), metrics::field_test_table()}) {
    const auto r = metrics::reconstruct_counts(t.table, t.accuracy);
    const auto rep = metrics::metrics_from_confusion(r.matrix);
    double worst_f1 = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) worst_f1 = std::max(worst_f1, std::abs(rep.f1[k] - t.f1[k]));
    const double acc_err = std::abs(100.0 * rep.accuracy - t.accuracy.percent);
    ok = ok && worst_f1 <= kF1Tol && acc_err <= kAccuracyTolPp;
    detail += fmt::format("{}/{} correct, acc {:.2f}% (printed {}), max |dF1| {:.4f}; ", r.matrix.trace(), r.matrix.total(),
                          100.0 * rep.accuracy, t.accuracy.percent, worst_f1);
  }
  const double s = seconds_since(t0);
  return {ok && s < kFastRuntimeS, detail + fmt::format("{:.3f} s", s)};
}

// ---- calibration ----

std::pair<bool, std::string> calibration() {
  const auto t0 = clock_type::now();
  std::vector<telemetry::SensorCalibration> cals;
  for (const char* f : {"table4.csv", "table5.csv", "table6.csv"}) cals.push_back(telemetry::load_calibration_csv(kFixtures / "calibration" / f));
  const auto r = telemetry::calibration_report(cals);
  bool rows_ok = true;
  std::size_t rows = 0;
  for (const auto& s : r.sensors) {
    for (const auto& row : s.rows) {
      ++rows;
      if (!row.record.printed_pct_error) {
        rows_ok = false;
        continue;
      }
      const auto& printed = *row.record.printed_pct_error;
      const bool close = std::abs(row.pct_error - printed.value) <= kRowTol;
      const bool same_printed = telemetry::PrintedValue::round_to(row.pct_error, printed.decimals) == printed.value;
      rows_ok = rows_ok && (close || same_printed);
    }
  }
  const auto& temp = r.sensors.at(0);
  const auto& hum = r.sensors.at(1);
  const auto& pressure = r.sensors.at(2);
  const bool pressure_ok = fmt::format("{:.2f}", pressure.average_pct) == "6.97";
  const bool collective_ok = fmt::format("{:.3f}", r.collective_accuracy_pct) == "97.456";
  const bool flags_ok = temp.average_discrepancy && hum.average_discrepancy && !pressure.average_discrepancy &&
                        std::abs(temp.average_pct - 0.45007) < 5e-6 && std::abs(hum.average_pct - 0.19707) < 5e-6 &&
                        temp.stated_average_pct && temp.stated_average_pct->value == 0.4590 && hum.stated_average_pct &&
                        hum.stated_average_pct->value == 0.202;
  const double s = seconds_since(t0);
  return {rows_ok && rows == 15 && pressure_ok && collective_ok && flags_ok && s < kFastRuntimeS,
          fmt::format("{} rows {}, pressure avg {:.2f}%, collective {:.3f}%, flags temp {:.5f} vs {} / humidity {:.5f} vs {}, {:.3f} s", rows,
                      rows_ok ? "reproduced" : "MISMATCH", pressure.average_pct, r.collective_accuracy_pct, temp.average_pct,
                      temp.stated_average_pct ? temp.stated_average_pct->value : -1.0, hum.average_pct,
                      hum.stated_average_pct ? hum.stated_average_pct->value : -1.0, s)};
}

// ---- synthetic training ----

std::pair<bool, std::string> synthetic(const SyntheticRun& run, double secs) {
  const auto pair = largest_confusion_pair(run.test.argmax);
  const bool pair_ok = pair.count > 0 && pair.unique && pair.a == index_of(SoundClass::breathes) &&
                       pair.b == index_of(SoundClass::muffled_words);
  const bool ok = run.test.argmax_accuracy >= kSyntheticMinAccuracy && pair_ok && secs < kSyntheticRuntimeS;
  return {ok, fmt::format("held-out accuracy {:.4f} on {} clips, largest pair {}<->{} ({} mistakes), {:.1f} s", run.test.argmax_accuracy,
                          run.test.argmax.total(), kClassNames[pair.a], kClassNames[pair.b], pair.count, secs)};
}

// ---- numerical suite ----

nn::ModelSpec random_model(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  nn::ModelSpec s;
  s.input = {static_cast<std::size_t>(pick(6, 10)), static_cast<std::size_t>(pick(1, 4))};
  const auto act = [&] { return pick(0, 1) ? nn::Activation::relu : nn::Activation::linear; };
  s.layers.push_back(nn::LayerSpec::conv1d(pick(2, 4), pick(1, 3), act()));
  if (pick(0, 1)) s.layers.push_back(nn::LayerSpec::maxpool1d(2));
  if (pick(0, 1)) s.layers.push_back(nn::LayerSpec::conv1d(pick(2, 3), pick(1, 2), act()));
  s.layers.push_back(nn::LayerSpec::flatten());
  if (pick(0, 1)) s.layers.push_back(nn::LayerSpec::dense(pick(3, 6), act()));
  s.layers.push_back(nn::LayerSpec::dense(5));
  s.layers.push_back(nn::LayerSpec::softmax());
  return s;
}

long double batch_loss(const nn::ModelSpec& spec, const nn::Weights<long double>& w, const std::vector<nn::LabeledFeatures>& batch) {
  const auto shapes = nn::activation_shapes(spec);
  long double loss = 0.0L;
  for (const auto& ex : batch) {
    std::vector<long double> input(ex.features.values.begin(), ex.features.values.end());
    nn::ForwardCache<long double> cache;
    nn::forward_pass<long double>(spec, shapes, w, input, cache);
    loss -= std::log(cache.acts.back()[index_of(ex.label)]);
  }
  return loss / static_cast<long double>(batch.size());
}

double worst_gradient_error() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> d(0.0, 0.3), x(0.0, 1.0);
  const long double h = 1e-5L;
  double worst = 0.0;
  for (int m = 0; m < 20; ++m) {
    const auto spec = random_model(rng);
    auto w = nn::init_weights<double>(spec, static_cast<std::uint64_t>(m) + 1);
    for (auto& layer : w.layers) {
      for (auto& v : layer) v += d(rng);
    }
    std::vector<nn::LabeledFeatures> batch;
    for (int i = 0; i < 3; ++i) {
      audio::FeatureMatrix f(spec.input.rows, spec.input.cols);
      for (auto& v : f.values) v = x(rng);
      batch.push_back({f, kAllClasses[static_cast<std::size_t>(rng() % kNumClasses)]});
    }
    const auto g = nn::gradients<double>(spec, w, std::span<const nn::LabeledFeatures>(batch));
    auto wl = nn::cast_weights<long double>(w);
    for (std::size_t l = 0; l < wl.layers.size(); ++l) {
      for (std::size_t k = 0; k < wl.layers[l].size(); ++k) {
        const long double orig = wl.layers[l][k];
        wl.layers[l][k] = orig + h;
        const long double up = batch_loss(spec, wl, batch);
        wl.layers[l][k] = orig - h;
        const long double down = batch_loss(spec, wl, batch);
        wl.layers[l][k] = orig;
        const double numeric = static_cast<double>((up - down) / (2.0L * h));
        const double analytic = g.grads.layers[l][k];
        worst = std::max(worst, std::abs(analytic - numeric) / std::max(1e-6, std::abs(analytic) + std::abs(numeric)));
      }
    }
  }
  return worst;
}

std::pair<bool, std::string> numerical() {
  const double grad = worst_gradient_error();

  nn::Weights<double> w{{{1.0}}};
  auto st = nn::AdamState<double>::zeros_like(w);
  nn::adam_step(w, nn::Weights<double>{{{1.0}}}, st, 1, nn::AdamParams{0.0005});
  const double adam = std::abs(w.layers[0][0] - (1.0 - 0.0005 / (1.0 + 1e-8)));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> sig(16000), gsig(16000);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    sig[i] = u(rng);
    gsig[i] = 2.0 * sig[i];
  }
  const audio::FeatureExtractor fx(audio::FrontendConfig{});
  const auto a = fx(std::span<const double>(sig));
  const auto b = fx(std::span<const double>(gsig));
  double gain = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i] > -11.0) gain = std::max(gain, std::abs(b.values[i] - a.values[i] - 2.0 * std::log10(2.0)));
  }

  double dct = 0.0;
  for (std::size_t n : {13U, 40U}) {
    const auto m = audio::dct_matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += m[i * n + k] * m[j * n + k];
        dct = std::max(dct, std::abs(dot - (i == j ? 1.0 : 0.0)));
      }
    }
  }

  double mel = 0.0;
  const auto bank = audio::build_mel_filterbank(16000, 512, 40, 300.0, 8000.0);
  for (std::size_t k = 0; k < bank.bins(); ++k) {
    const double f = bank.bin_hz(k);
    if (f < bank.center_hz(0) || f > bank.center_hz(39)) continue;
    double sum = 0.0;
    for (int m = 0; m < 40; ++m) sum += bank.weight(m, k);
    mel = std::max(mel, std::abs(sum - 1.0));
  }

  double parseval = 0.0;
  const audio::FrameConfig fc;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> frame(static_cast<std::size_t>(fc.frame_len));
    for (auto& v : frame) v = u(rng);
    const auto p = audio::power_spectrum(frame, fc);
    const std::size_t half = static_cast<std::size_t>(fc.fft_size / 2);
    double freq = p[0] + p[half];
    for (std::size_t k = 1; k < half; ++k) freq += 2.0 * p[k];
    const auto win = audio::hamming_window(fc.frame_len);
    double time = 0.0;
    for (std::size_t n = 0; n < frame.size(); ++n) time += frame[n] * win[n] * frame[n] * win[n];
    time *= fc.fft_size;
    parseval = std::max(parseval, std::abs(freq - time) / time);
  }

  const bool ok = grad < kGradRelTol && adam < kAdamTol && gain < kDspIdentityTol && dct < kDspIdentityTol && mel <= kMelColumnTol &&
                  parseval < kParsevalRelTol;
  return {ok, fmt::format("grad rel {:.2e}, adam {:.2e}, gain shift {:.2e}, dct {:.2e}, mel columns {:.2e}, parseval {:.2e}", grad,
                          adam, gain, dct, mel, parseval)};
}

// ---- serial codec ----

std::pair<bool, std::string> serial_codec() {
  const auto fig13 = telemetry::parse_prediction_block(slurp(kFixtures / "serial/fig13.txt"));
  const auto fig15 = telemetry::parse_sensor_block(slurp(kFixtures / "serial/fig15.txt"));
  const std::array<double, 5> probs{0.00, 0.07, 0.07, 0.65, 0.21};
  const bool f13 = fig13.dsp_ms == 304 && fig13.classification_ms == 19 && fig13.anomaly_ms == 0 && fig13.probabilities == probs;
  const bool f15 = fig15.gas_raw == 168 && fig15.temp_c == 32.67 && fig15.humidity_pct == 52.81 && fig15.pressure_kpa == 0.0;

  std::mt19937_64 rng(5);
  bool trips = true;
  for (int i = 0; i < 500 && trips; ++i) {
    std::array<int, 5> h{};
    int left = 100;
    for (int k = 0; k < 4; ++k) {
      h[static_cast<std::size_t>(k)] = std::uniform_int_distribution<int>(0, left)(rng);
      left -= h[static_cast<std::size_t>(k)];
    }
    h[4] = left;
    telemetry::PredictionBlock b{std::uniform_int_distribution<int>(0, 999)(rng), i % 50, 0, {}, 0};
    for (std::size_t k = 0; k < 5; ++k) b.probabilities[k] = h[k] / 100.0;
    const auto text = telemetry::emit_prediction_block(b);
    const auto back = telemetry::parse_prediction_block(text);
    trips = back == b && telemetry::emit_prediction_block(back) == text;

    telemetry::SensorFrame s{std::uniform_int_distribution<int>(0, 1023)(rng), std::uniform_int_distribution<int>(-4000, 8500)(rng) / 100.0,
                             std::uniform_int_distribution<int>(0, 10000)(rng) / 100.0,
                             std::uniform_int_distribution<int>(0, 12000)(rng) / 100.0, 0};
    const auto stext = telemetry::emit_sensor_block(s);
    const auto sback = telemetry::parse_sensor_block(stext);
    trips = trips && sback == s && telemetry::emit_sensor_block(sback) == stext;
  }
  return {f13 && f15 && trips, fmt::format("fig13 {}, fig15 {}, 500 prediction + 500 sensor round trips {}", f13 ? "exact" : "MISMATCH",
                                           f15 ? "exact" : "MISMATCH", trips ? "bit-exact" : "DIFFER")};
}

// ---- tuner ----

std::uint64_t ram_oracle(const audio::FrontendConfig& fe, const nn::ModelSpec& spec) {
  const auto shapes = nn::activation_shapes(spec);
  std::uint64_t best = shapes[0].rows * shapes[0].cols;
  for (std::size_t i = 0; i + 1 < shapes.size(); ++i) {
    best = std::max<std::uint64_t>(best, shapes[i].rows * shapes[i].cols + shapes[i + 1].rows * shapes[i + 1].cols);
  }
  return 4 * fe.rows() * fe.cols() + 4 * best;
}

std::pair<bool, std::string> tuner_check() {
  tuner::SearchSpace space;
  space.frontends = {audio::FrontendConfig{}};
  space.filter_counts = {20, 40};
  space.conv_widths = {2, 4, 8};
  space.dense_widths = {0, 8};
  const auto cands = tuner::enumerate_candidates(space).candidates;
  const auto train = clips(8, 10), val = clips(4, 11);
  tuner::TuneConfig cfg;
  cfg.seed = 5;

  std::vector<std::uint64_t> rams;
  for (const auto& c : cands) rams.push_back(ram_oracle(c.frontend, c.model));
  std::sort(rams.begin(), rams.end());
  std::vector<double> acc;
  for (const auto& c : cands) acc.push_back(tuner::train_candidate(c, train, val, cfg).accuracy);

  bool ok = cands.size() <= 24 && !cands.empty();
  std::string detail = fmt::format("{} candidates; ", cands.size());
  for (const tuner::DeviceBudget budget : {tuner::DeviceBudget{}, tuner::DeviceBudget{rams[7], 1048576, 64'000'000}}) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      const auto rom = 4 * nn::total_params(cands[i].model) + 51200;
      if (ram_oracle(cands[i].frontend, cands[i].model) > budget.sram_bytes || rom > budget.flash_bytes) continue;
      if (!best) {
        best = i;
        continue;
      }
      const auto bi = *best;
      const double li = tuner::estimate_cost(cands[i], budget).latency_ms, lb = tuner::estimate_cost(cands[bi], budget).latency_ms;
      const auto ri = ram_oracle(cands[i].frontend, cands[i].model), rb = ram_oracle(cands[bi].frontend, cands[bi].model);
      if (acc[i] > acc[bi] || (acc[i] == acc[bi] && (li < lb || (li == lb && ri < rb)))) best = i;
    }
    const auto r = tuner::tune(cands, train, val, budget, cfg);
    const bool in_budget = r.best_entry.cost.ram_bytes <= 262144 && r.best_entry.cost.rom_bytes <= 1048576 &&
                           r.best_entry.cost.ram_bytes <= budget.sram_bytes;
    ok = ok && best && r.best.id == cands[*best].id && in_budget;
    detail += fmt::format("SRAM {} B -> {} (brute force {}), RAM {} B ROM {} B; ", budget.sram_bytes, r.best.id,
                          best ? cands[*best].id : "none", r.best_entry.cost.ram_bytes, r.best_entry.cost.rom_bytes);
  }
  bool threw = false;
  try {
    tuner::tune(cands, train, val, tuner::DeviceBudget{1000, 1048576, 64'000'000}, cfg);
  } catch (const tuner::NoFeasibleCandidate&) {
    threw = true;
  }
  return {ok && threw, detail + (threw ? "all-infeasible grid -> NoFeasibleCandidate" : "all-infeasible grid did NOT throw")};
}

// ---- end-to-end ----

std::pair<bool, std::string> end_to_end(const Classifier& model) {
  const auto map = sim::load_map(kFixtures / "maps/sample_map.json");
  std::ifstream cmds(kFixtures / "maps/sample_commands.jsonl");
  const auto commands = sim::parse_command_log(cmds);

  std::ostringstream first;
  sim::Simulator a(map, &model, 9);
  gateway::record_session(a, commands, 20, first);
  std::istringstream log(first.str());
  const auto replayed = gateway::drive_commands_from_log(log);
  std::ostringstream second;
  sim::Simulator b(map, &model, 9);
  gateway::record_session(b, replayed, 20, second);
  const bool identical = !first.str().empty() && first.str() == second.str();

  sim::Simulator hh(sim::load_map(kFixtures / "maps/hello_help_cell.json"), &model, 42);
  int hits = 0;
  constexpr int kTicks = 50;
  for (int i = 0; i < kTicks; ++i) {
    const auto t = hh.tick();
    hits += t.prediction && nn::classify(t.prediction->probabilities) == SoundClass::hello_help ? 1 : 0;
  }
  const double rate = static_cast<double>(hits) / kTicks;
  return {identical && rate >= kHelloHelpMinHitRate,
          fmt::format("replayed session log {} ({} bytes, {} commands), hello_help cell {}/{} ticks", identical ? "byte-identical" : "DIFFERS",
                      first.str().size(), replayed.size(), hits, kTicks)};
}

// ---- performance ----

std::pair<bool, std::string> performance(const Classifier& model) {
  std::vector<double> ms;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto clip = synth::generate_clip(kAllClasses[i % kNumClasses], 9000 + i);
    const auto t = model.timed(clip);
    ms.push_back(t.dsp_ms + t.classification_ms);
  }
  std::sort(ms.begin(), ms.end());
  const double median = ms[ms.size() / 2], worst = ms.back();
  return {worst < kLatencyCeilingMs, fmt::format("featurize+infer median {:.2f} ms, max {:.2f} ms over 100 clips (ceiling {} ms, target {} ms {})",
                                                 median, worst, kLatencyCeilingMs, kLatencyTargetMs,
                                                 median < kLatencyTargetMs ? "met" : "missed")};
}

}  // namespace

int main() {
  criterion("tables", tables);
  criterion("calibration", calibration);
  criterion("numerical", numerical);
  criterion("serial-codec", serial_codec);

  const auto t0 = clock_type::now();
  std::optional<SyntheticRun> run;
  try {
    run = synthetic_experiment(120, 42);
  } catch (const std::exception& e) {
    report("synthetic-training", false, std::string("exception: ") + e.what());
  }
  const double secs = seconds_since(t0);
  if (run) {
    criterion("synthetic-training", [&] { return synthetic(*run, secs); });
    const auto model = run->model.classifier();
    criterion("end-to-end", [&] { return end_to_end(model); });
    criterion("performance", [&] { return performance(model); });
  } else {
    report("end-to-end", false, "no trained model");
    report("performance", false, "no trained model");
  }
  criterion("tuner", tuner_check);

  std::cout << (failures == 0 ? "ALL PASS" : fmt::format("{} FAILED", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
