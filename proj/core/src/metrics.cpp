#include "hieratt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hieratt/error.hpp"

namespace hieratt {

namespace {

using NgramCounts = std::map<Sentence, double>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) out[Sentence(s.begin() + i, s.begin() + i + n)] += 1.0;
  return out;
}

}  // namespace

BleuStats bleu_stats(const Sentence& candidate, std::span<const Sentence> references) {
  BleuStats s;
  s.cand_len = static_cast<double>(candidate.size());
  if (references.empty()) throw Error("bleu: no references");
  double best = -1.0;
  for (const Sentence& r : references) {
    const double len = static_cast<double>(r.size());
    const double gap = std::abs(len - s.cand_len);
    const double best_gap = std::abs(best - s.cand_len);
    if (best < 0 || gap < best_gap || (gap == best_gap && len < best)) best = len;
  }
  s.ref_len = best;
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts cand = ngrams(candidate, n);
    NgramCounts max_ref;
    for (const Sentence& r : references)
      for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
    for (const auto& [g, c] : cand) {
      auto it = max_ref.find(g);
      s.matches[n - 1] += std::min(c, it == max_ref.end() ? 0.0 : it->second);
      s.totals[n - 1] += c;
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, int max_n) {
  if (max_n < 1 || max_n > 4) throw Error("bleu: order must lie in [1, 4]");
  if (s.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < max_n; ++n) {
    const double p = std::max(s.matches[n], kBleuEpsilon) / std::max(s.totals[n], 1.0);
    log_sum += std::log(p);
  }
  const double bp = s.cand_len <= s.ref_len ? std::exp(1.0 - s.ref_len / s.cand_len) : 1.0;
  return bp * std::exp(log_sum / max_n);
}

double bleu(const Sentence& candidate, std::span<const Sentence> references, int max_n) {
  if (max_n < 1 || max_n > 4) throw Error("bleu: order must lie in [1, 4]");
  if (candidate.empty()) return 0.0;
  return bleu_from_stats(bleu_stats(candidate, references), max_n);
}

double rouge_l(const Sentence& candidate, const Sentence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t m = candidate.size(), n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[n]);
  if (lcs == 0.0) return 0.0;
  const double r = lcs / static_cast<double>(n);
  const double p = lcs / static_cast<double>(m);
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * r * p / (r + b2 * p);
}

double rouge_l_multi(const Sentence& candidate, std::span<const Sentence> references) {
  double best = 0.0;
  for (const Sentence& r : references) best = std::max(best, rouge_l(candidate, r));
  return best;
}

std::vector<double> cider_scores(std::span<const Sentence> candidates,
                                 std::span<const std::vector<Sentence>> references) {
  if (candidates.empty()) throw Error("cider: empty corpus");
  if (candidates.size() != references.size()) throw Error("cider: candidate/reference count mismatch");
  const double N = static_cast<double>(references.size());
  std::vector<double> scores(candidates.size(), 0.0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Sentence, double> df;
    for (const auto& refs : references) {
      std::map<Sentence, bool> seen;
      for (const Sentence& r : refs)
        for (const auto& [g, c] : ngrams(r, n)) seen[g] = true;
      for (const auto& [g, flag] : seen) df[g] += 1.0;
    }
    auto vec = [&](const Sentence& s) {
      NgramCounts v = ngrams(s, n);
      for (auto& [g, c] : v) {
        auto it = df.find(g);
        c *= std::log(N) - std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
      }
      return v;
    };
    auto norm = [](const NgramCounts& v) {
      double s = 0.0;
      for (const auto& [g, c] : v) s += c * c;
      return std::sqrt(s);
    };
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (references[i].empty()) throw Error("cider: image " + std::to_string(i) + " has no references");
      const NgramCounts cv = vec(candidates[i]);
      const double cn = norm(cv);
      double acc = 0.0;
      for (const Sentence& r : references[i]) {
        const NgramCounts rv = vec(r);
        const double rn = norm(rv);
        if (cn == 0.0 || rn == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, c] : cv) {
          auto it = rv.find(g);
          if (it != rv.end()) dot += c * it->second;
        }
        acc += dot / (cn * rn);
      }
      scores[i] += acc / static_cast<double>(references[i].size());
    }
  }
  for (double& s : scores) s = 10.0 * s / 4.0;
  return scores;
}

double cider(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references) {
  const auto s = cider_scores(candidates, references);
  double total = 0.0;
  for (double v : s) total += v;
  return total / static_cast<double>(s.size());
}

nlohmann::json MetricReport::to_json() const {
  return nlohmann::json{{"bleu1", bleu1}, {"bleu2", bleu2}, {"bleu3", bleu3}, {"bleu4", bleu4},
                        {"rouge_l", rouge_l}, {"cider", cider}, {"count", count}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.bleu1 = j.at("bleu1").get<double>();
    r.bleu2 = j.at("bleu2").get<double>();
    r.bleu3 = j.at("bleu3").get<double>();
    r.bleu4 = j.at("bleu4").get<double>();
    r.rouge_l = j.at("rouge_l").get<double>();
    r.cider = j.at("cider").get<double>();
    r.count = j.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("metric report: ") + e.what());
  }
  return r;
}

MetricReport corpus_report(std::span<const Sentence> candidates, std::span<const std::vector<Sentence>> references) {
  if (candidates.size() != references.size()) {
    throw Error("corpus_report: " + std::to_string(candidates.size()) + " candidates for " +
                std::to_string(references.size()) + " reference sets");
  }
  if (candidates.empty()) throw Error("corpus_report: empty corpus");
  BleuStats total;
  double rouge = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const BleuStats s = bleu_stats(candidates[i], references[i]);
    for (int n = 0; n < 4; ++n) {
      total.matches[n] += s.matches[n];
      total.totals[n] += s.totals[n];
    }
    total.cand_len += s.cand_len;
    total.ref_len += s.ref_len;
    rouge += rouge_l_multi(candidates[i], references[i]);
  }
  MetricReport r;
  r.bleu1 = bleu_from_stats(total, 1);
  r.bleu2 = bleu_from_stats(total, 2);
  r.bleu3 = bleu_from_stats(total, 3);
  r.bleu4 = bleu_from_stats(total, 4);
  r.rouge_l = rouge / static_cast<double>(candidates.size());
  r.cider = cider(candidates, references);
  r.count = candidates.size();
  return r;
}

}  // namespace hieratt
