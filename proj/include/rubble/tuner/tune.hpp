// Candidate enumeration and budget-constrained selection.
#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rubble/nn/train.hpp"
#include "rubble/pipeline.hpp"
#include "rubble/tuner/cost.hpp"

namespace rubble::tuner {

class NoFeasibleCandidate : public Error {
 public:
  using Error::Error;
};

struct SearchSpace {
  std::vector<audio::FrontendConfig> frontends;
  std::vector<int> filter_counts;  // empty: keep each frontend's own
  std::vector<int> conv_widths;
  std::vector<int> dense_widths;   // 0 = no hidden dense layer; empty = {0}
  int kernel = 3;
  float dropout = 0.25F;
};

struct Enumeration {
  std::vector<CandidateConfig> candidates;
  std::vector<std::string> rejected;  // "<id>: reason"
};

/// conv(w) -> pool -> conv(2w) -> pool -> flatten -> dropout -> [dense(d, relu)] -> dense(5) -> softmax.
inline nn::ModelSpec candidate_model(nn::Shape input, int conv_width, int dense_width, int kernel = 3, float dropout = 0.25F) {
  nn::ModelSpec m{input,
                  {nn::LayerSpec::conv1d(conv_width, kernel), nn::LayerSpec::maxpool1d(2),
                   nn::LayerSpec::conv1d(2 * conv_width, kernel), nn::LayerSpec::maxpool1d(2), nn::LayerSpec::flatten(),
                   nn::LayerSpec::dropout(dropout)}};
  if (dense_width > 0) m.layers.push_back(nn::LayerSpec::dense(dense_width, nn::Activation::relu));
  m.layers.push_back(nn::LayerSpec::dense(static_cast<int>(kNumClasses)));
  m.layers.push_back(nn::LayerSpec::softmax());
  return m;
}

inline std::string candidate_id(const audio::FrontendConfig& fe, int conv_width, int dense_width) {
  auto id = fmt::format("{}-f{}", audio::to_string(fe.kind), fe.num_filters);
  if (fe.kind == audio::FrontendKind::mfcc) id += fmt::format("-k{}", fe.num_coeffs);
  return id + fmt::format("-c{}-d{}", conv_width, dense_width);
}

inline Enumeration enumerate_candidates(const SearchSpace& space) {
  Enumeration out;
  const std::vector<int> dense = space.dense_widths.empty() ? std::vector<int>{0} : space.dense_widths;
  for (const auto& base : space.frontends) {
    std::vector<audio::FrontendConfig> fes;
    if (space.filter_counts.empty()) {
      fes.push_back(base);
    } else {
      for (int f : space.filter_counts) {
        auto fe = base;
        fe.num_filters = f;
        fes.push_back(fe);
      }
    }
    for (const auto& fe : fes) {
      for (int w : space.conv_widths) {
        for (int d : dense) {
          const auto id = candidate_id(fe, w, d);
          try {
            if (fe.num_filters < 1) throw std::invalid_argument("filter count must be positive");
            if (d < 0) throw std::invalid_argument("dense width must be >= 0");
            fe.validate();
            audio::MelFilterbank probe(fe.sample_rate_hz, fe.frame.fft_size, fe.num_filters, fe.f_low_hz, fe.f_high_hz);
            CandidateConfig c{id, fe, candidate_model({fe.rows(), fe.cols()}, w, d, space.kernel, space.dropout)};
            nn::validate_classifier(c.model);
            if (!c.consistent()) throw ShapeError("frontend output does not match model input");
            out.candidates.push_back(std::move(c));
          } catch (const std::exception& e) {
            out.rejected.push_back(id + ": " + e.what());
          }
        }
      }
    }
  }
  return out;
}

struct TuneConfig {
  int epochs = 20;
  double learning_rate = 0.0005;
  int batch_size = 32;
  std::uint64_t seed = 42;
  CostModel cost_model{};
};

struct LeaderboardEntry {
  std::size_t index = 0;  // position in the input candidate list
  std::string id;
  double accuracy = 0.0;  // validation accuracy
  CostEstimate cost;
  bool feasible = false;
};

struct TuneResult {
  CandidateConfig best;
  LeaderboardEntry best_entry;
  nn::Weights<double> best_weights;
  std::vector<LeaderboardEntry> leaderboard;  // sorted best first
};

/// Strict total order: feasible first, then accuracy desc, latency asc, ram asc, input position.
inline bool ranks_before(const LeaderboardEntry& a, const LeaderboardEntry& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
  if (a.cost.latency_ms != b.cost.latency_ms) return a.cost.latency_ms < b.cost.latency_ms;
  if (a.cost.ram_bytes != b.cost.ram_bytes) return a.cost.ram_bytes < b.cost.ram_bytes;
  return a.index < b.index;
}

struct CandidateRun {
  double accuracy = 0.0;
  nn::Weights<double> weights;
};

/// Trains one candidate on the given clips and reports validation accuracy.
inline CandidateRun train_candidate(const CandidateConfig& cand, std::span<const audio::AudioClip> train,
                                    std::span<const audio::AudioClip> val, const TuneConfig& cfg) {
  const audio::FeatureExtractor fx(cand.frontend);
  const auto tr = featurize(train, fx);
  const auto va = featurize(val, fx);
  std::vector<const nn::LabeledFeatures*> tp, vp;
  for (const auto& e : tr) tp.push_back(&e);
  for (const auto& e : va) vp.push_back(&e);
  nn::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.learning_rate = cfg.learning_rate;
  tc.batch_size = cfg.batch_size;
  tc.rng_seed = cfg.seed;
  auto fitted = nn::fit(cand.model, tp, vp, tc);
  return {nn::evaluate<double>(cand.model, fitted.weights, vp).accuracy, std::move(fitted.weights)};
}

/// Throws NoFeasibleCandidate without training when nothing fits.
inline void require_feasible(const std::vector<CandidateConfig>& candidates, const DeviceBudget& budget, const CostModel& cm = {}) {
  std::uint64_t min_ram = UINT64_MAX, min_rom = UINT64_MAX;
  for (const auto& c : candidates) {
    const auto cost = estimate_cost(c, budget, cm);
    if (cost.fits(budget)) return;
    min_ram = std::min(min_ram, cost.ram_bytes);
    min_rom = std::min(min_rom, cost.rom_bytes);
  }
  throw NoFeasibleCandidate(fmt::format("none of {} candidates fits {} B SRAM / {} B flash (smallest needs {} B RAM, {} B ROM)",
                                        candidates.size(), budget.sram_bytes, budget.flash_bytes, min_ram, min_rom));
}

/// Trains every candidate with the same seed, ranks them, and returns the best feasible one.
inline TuneResult tune(const std::vector<CandidateConfig>& candidates, std::span<const audio::AudioClip> train,
                       std::span<const audio::AudioClip> val, const DeviceBudget& budget, const TuneConfig& cfg = {}) {
  if (candidates.empty()) throw std::invalid_argument("tune: no candidates");
  if (train.empty() || val.empty()) throw std::invalid_argument("tune: empty training or validation set");
  budget.validate();
  require_feasible(candidates, budget, cfg.cost_model);

  std::vector<LeaderboardEntry> board;
  std::vector<nn::Weights<double>> weights(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    LeaderboardEntry e;
    e.index = i;
    e.id = candidates[i].id;
    e.cost = estimate_cost(candidates[i], budget, cfg.cost_model);
    e.feasible = e.cost.fits(budget);
    auto run = train_candidate(candidates[i], train, val, cfg);
    e.accuracy = run.accuracy;
    weights[i] = std::move(run.weights);
    board.push_back(e);
  }
  std::sort(board.begin(), board.end(), ranks_before);
  TuneResult r;
  r.best_entry = board.front();
  r.best = candidates[r.best_entry.index];
  r.best_weights = std::move(weights[r.best_entry.index]);
  r.leaderboard = std::move(board);
  return r;
}

inline std::string leaderboard_csv(const std::vector<LeaderboardEntry>& board) {
  std::ostringstream out;
  out << "id,accuracy,ram_bytes,rom_bytes,latency_ms,feasible\n";
  for (const auto& e : board) {
    out << fmt::format("{},{:.6f},{},{},{:.3f},{}\n", e.id, e.accuracy, e.cost.ram_bytes, e.cost.rom_bytes,
                       e.cost.latency_ms, e.feasible ? "true" : "false");
  }
  return out.str();
}

}  // namespace rubble::tuner
