#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hieratt {

using Sentence = std::vector<std::string>;

/// Smoothing floor for zero n-gram matches.
inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBeta = 1.2;

/// Clipped n-gram matches and candidate n-gram totals for orders 1..4, plus
/// the lengths the brevity penalty needs.
struct BleuStats {
  double matches[4] = {0, 0, 0, 0};
  double totals[4] = {0, 0, 0, 0};
  double cand_len = 0;
  double ref_len = 0;  // closest reference length, shorter one on ties
};

BleuStats bleu_stats(const Sentence& candidate, std::span<const Sentence> references);
/// BP * exp(mean_n ln p_n), p_n = max(matches, eps) / max(totals, 1).
double bleu_from_stats(const BleuStats& s, int max_n);
/// Sentence-level BLEU@N (1 <= N <= 4). Empty candidate scores 0.
double bleu(const Sentence& candidate, std::span<const Sentence> references, int max_n);

/// LCS-based F-measure with beta 1.2; 0 when either side is empty.
double rouge_l(const Sentence& candidate, const Sentence& reference);
/// Best F over several references.
double rouge_l_multi(const Sentence& candidate, std::span<const Sentence> references);

/// Basic CIDEr (no length penalty, no clipping): for n = 1..4, TF-IDF cosine
/// between candidate and each reference, averaged over references, then
/// 10 * mean over n. IDF is log(N / df) over the reference sets of the N images.
/// Returns per-image scores; throws Error on an empty corpus or size mismatch.
std::vector<double> cider_scores(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references);
double cider(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references);

struct MetricReport {
  double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
  double rouge_l = 0;
  double cider = 0;
  std::size_t count = 0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

/// Corpus BLEU (statistics summed over images), mean ROUGE-L and CIDEr.
MetricReport corpus_report(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references);

}  // namespace hieratt
