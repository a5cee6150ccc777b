#pragma once

#include <vector>

#include "hieratt/autodiff.hpp"
#include "hieratt/encoder.hpp"

namespace hieratt {

struct SelectedPair {
  std::size_t region = 0;
  std::size_t word = 0;
  double relevance = 0.0;  // P(w_j | r_i)

  bool operator==(const SelectedPair&) const = default;
};

/// High-relevance pairs: every member satisfies P(w_j | r_i) >= factor / word_count.
struct PairSelection {
  std::vector<SelectedPair> pairs;  // row-major order (region, then word)
  double factor = 2.0;
  std::size_t word_count = 0;

  double threshold() const { return factor / static_cast<double>(word_count); }
  bool empty() const { return pairs.empty(); }
};

inline constexpr double kDefaultSelectionFactor = 2.0;

/// Keeps pair (i, j) iff m[i, j] >= c / k for a row-stochastic [n, k] matrix.
PairSelection select_pairs(const Tensor& relevance, double factor = kDefaultSelectionFactor);
/// Every pair of the matrix, regardless of relevance.
PairSelection all_pairs(const Tensor& relevance);

enum class PriorMode { Uniform, AreaProportional };

/// P(r_i) for each region.
struct RegionPrior {
  std::vector<double> p;
  PriorMode mode = PriorMode::Uniform;

  static RegionPrior uniform(std::size_t n);
  static RegionPrior area_proportional(const std::vector<Box>& boxes);
};

enum class PosteriorMode { Verbatim, Normalized };
enum class Reduction { Sum, Mean };
/// Which index set the loss sums over.
enum class PairScope { Selected, All };

/// Product P(w_j | r_i) * P(r_i) without the evidence term.
double posterior_verbatim(double pwr, double prior);
/// Bayes posterior for region i given the column j of the relevance matrix.
/// Throws Error when the evidence sum is zero.
double posterior_normalized(const Tensor& relevance, const RegionPrior& prior, std::size_t region, std::size_t word);
double posterior(const Tensor& relevance, const RegionPrior& prior, std::size_t region, std::size_t word,
                 PosteriorMode mode);

/// Sum (or mean) of 1 - P(r_i | w_j) over the selected pairs; 0 for an empty selection.
double ie_loss(const Tensor& relevance, const PairSelection& sel, const RegionPrior& prior,
               PosteriorMode mode = PosteriorMode::Verbatim, Reduction reduce = Reduction::Mean);

/// Differentiable IE loss over a relevance matrix on the tape. The pair set is
/// chosen from the current values (selection itself carries no gradient).
/// Returns a zero constant when nothing is selected.
Var ie_loss(Tape& tape, Var relevance, const RegionPrior& prior, double factor, PosteriorMode mode,
            Reduction reduce, PairScope scope = PairScope::Selected);

/// ce + lambda * ie. Returns `ce` itself for lambda == 0. Throws Error for lambda < 0.
Var total_loss(Var ce, Var ie, double lambda);

}  // namespace hieratt
