#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hieratt/interpretability.hpp"
#include "hieratt/metrics.hpp"
#include "hieratt/model.hpp"
#include "hieratt/optimizer.hpp"

namespace hieratt {

struct TrainConfig {
  std::size_t epochs = 30;
  /// Retraining epochs with the interpretability term.
  std::size_t ie_epochs = 5;
  std::size_t batch_size = 16;
  AdamConfig adam{};
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  double lambda_ie = 1.0;
  double selection_factor = kDefaultSelectionFactor;
  PosteriorMode posterior = PosteriorMode::Verbatim;
  PriorMode prior = PriorMode::Uniform;
  Reduction reduction = Reduction::Mean;
  PairScope scope = PairScope::Selected;
  std::size_t rwa_epochs = 10;
  double rwa_lr = 1e-3;
  std::size_t train_size = 2000;
  std::size_t heldout_size = 200;
  CaptionerConfig model{};
  RwaConfig rwa{};

  void validate() const;
  nlohmann::json to_json() const;
  /// Overlays the keys present in `j` onto `base`. Unknown keys raise ParseError.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct LossRow {
  std::size_t epoch = 0;
  double ce = 0.0;
  double ie = 0.0;
  double total = 0.0;

  bool operator==(const LossRow&) const = default;
};

/// Per-epoch losses; CSV header "epoch,ce_loss,ie_loss,total".
struct LossCurve {
  std::vector<LossRow> rows;

  std::string to_csv() const;
  static LossCurve from_csv(const std::string& text);
  bool operator==(const LossCurve&) const = default;
};

/// Called after every epoch; lets callers log progress.
using EpochHook = std::function<void(const LossRow&)>;

/// Training state that survives a checkpoint round trip: model, optimizer
/// moments and the number of completed epochs.
struct CaptionRun {
  std::unique_ptr<Captioner> model;
  std::unique_ptr<Adam> adam;
  std::size_t epochs_done = 0;
  LossCurve curve;
};

struct RwaRun {
  std::unique_ptr<RegionWordAttention> rwa;
  Vocabulary vocab;
  LossCurve curve;
};

/// Vocabulary of a training split.
Vocabulary dataset_vocab(std::span<const SceneSample> data);

/// Row-wise cross-entropy training of the region-word scorer: each object box
/// targets its object word, an empty background box targets a uniform row.
RwaRun train_rwa(std::span<const SceneSample> data, const TrainConfig& cfg, const EpochHook& hook = {});
/// Fraction of object regions whose relevance row peaks at the object word.
double rwa_alignment_accuracy(const RegionWordAttention& rwa, const Vocabulary& vocab,
                              std::span<const SceneSample> data);

/// Fresh phase-1 run (model and optimizer initialized from cfg.seed).
CaptionRun start_caption_run(std::span<const SceneSample> data, const TrainConfig& cfg);
/// Teacher-forced cross-entropy epochs; appends to run.curve. Throws Error
/// when the data contains words outside the run's vocabulary.
void train_caption_phase1(CaptionRun& run, std::span<const SceneSample> data, const TrainConfig& cfg,
                          std::size_t epochs, const EpochHook& hook = {});
/// Retraining with CE + lambda * IE. The region-word model is frozen; IE
/// gradients reach the captioner through the soft word embeddings fed to the
/// scorer. With lambda = 0 the parameter trajectory is that of phase 1.
void train_caption_phase2(CaptionRun& run, const RegionWordAttention& rwa, const Vocabulary& rwa_vocab,
                          std::span<const SceneSample> data, const TrainConfig& cfg, std::size_t epochs,
                          const EpochHook& hook = {});

/// Mean IE loss of the captioner's own greedy captions over a data set.
double mean_ie(const Captioner& model, const RegionWordAttention& rwa, std::span<const SceneSample> data,
               const TrainConfig& cfg);

Checkpoint run_checkpoint(const CaptionRun& run);
CaptionRun run_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg);

struct Evaluation {
  MetricReport report;
  std::vector<std::string> captions;
};

/// Greedy-decodes every image and scores against the reference captions.
Evaluation evaluate(const Captioner& model, std::span<const SceneSample> data);

struct BenchmarkReport {
  std::size_t T = 0;
  std::size_t reps = 0;
  double t_parallel_ms = 0.0;
  double t_sequential_ms = 0.0;
  double speedup = 0.0;
  double parity_max_diff = 0.0;

  nlohmann::json to_json() const;
};

inline constexpr double kParityTolerance = 1e-6;

/// Median wall time of one full-sequence forward versus T single-step calls.
/// Checks parity first and throws Error carrying the difference if it fails.
BenchmarkReport benchmark_decoder(HierAttDecoder& decoder, const Tensor& fm0, std::size_t T, std::size_t reps,
                                  std::uint64_t seed);

/// Full-size decoder: 2048 visual channels, 300-wide embeddings, 512-wide
/// gates, 9489 words.
DecoderConfig full_scale_decoder();

}  // namespace hieratt
