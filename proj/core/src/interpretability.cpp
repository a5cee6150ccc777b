#include "hieratt/interpretability.hpp"

#include "hieratt/error.hpp"
#include "hieratt/ops.hpp"

namespace hieratt {

namespace {

void require_matrix(const Tensor& m, const char* op) {
  if (m.rank() != 2) throw DimensionError(std::string(op) + ": expected [n, k], got " + shape_string(m.shape()));
}

void require_prior(const Tensor& m, const RegionPrior& prior, const char* op) {
  if (prior.p.size() != m.dim(0)) {
    throw DimensionError(std::string(op) + ": prior of size " + std::to_string(prior.p.size()) + " for " +
                         std::to_string(m.dim(0)) + " regions");
  }
}

}  // namespace

PairSelection select_pairs(const Tensor& relevance, double factor) {
  require_matrix(relevance, "select_pairs");
  if (!(factor > 0.0)) throw Error("select_pairs: factor must be positive");
  PairSelection sel;
  sel.factor = factor;
  sel.word_count = relevance.dim(1);
  const double threshold = sel.threshold();
  for (std::size_t i = 0; i < relevance.dim(0); ++i)
    for (std::size_t j = 0; j < relevance.dim(1); ++j)
      if (relevance.at(i, j) >= threshold) sel.pairs.push_back({i, j, relevance.at(i, j)});
  return sel;
}

PairSelection all_pairs(const Tensor& relevance) {
  require_matrix(relevance, "all_pairs");
  PairSelection sel;
  sel.factor = 0.0;
  sel.word_count = relevance.dim(1);
  for (std::size_t i = 0; i < relevance.dim(0); ++i)
    for (std::size_t j = 0; j < relevance.dim(1); ++j) sel.pairs.push_back({i, j, relevance.at(i, j)});
  return sel;
}

RegionPrior RegionPrior::uniform(std::size_t n) {
  if (n == 0) throw Error("region prior: no regions");
  return RegionPrior{std::vector<double>(n, 1.0 / static_cast<double>(n)), PriorMode::Uniform};
}

RegionPrior RegionPrior::area_proportional(const std::vector<Box>& boxes) {
  if (boxes.empty()) throw Error("region prior: no regions");
  double total = 0.0;
  for (const Box& b : boxes) total += b.area();
  if (total <= 0.0) throw Error("region prior: zero total area");
  RegionPrior prior;
  prior.mode = PriorMode::AreaProportional;
  for (const Box& b : boxes) prior.p.push_back(b.area() / total);
  return prior;
}

double posterior_verbatim(double pwr, double prior) { return pwr * prior; }

double posterior_normalized(const Tensor& relevance, const RegionPrior& prior, std::size_t region,
                            std::size_t word) {
  require_matrix(relevance, "posterior");
  require_prior(relevance, prior, "posterior");
  double evidence = 0.0;
  for (std::size_t i = 0; i < relevance.dim(0); ++i) evidence += relevance.at(i, word) * prior.p[i];
  if (evidence == 0.0) throw Error("posterior: zero evidence for word " + std::to_string(word));
  return relevance.at(region, word) * prior.p[region] / evidence;
}

double posterior(const Tensor& relevance, const RegionPrior& prior, std::size_t region, std::size_t word,
                 PosteriorMode mode) {
  if (mode == PosteriorMode::Verbatim) {
    require_prior(relevance, prior, "posterior");
    return posterior_verbatim(relevance.at(region, word), prior.p[region]);
  }
  return posterior_normalized(relevance, prior, region, word);
}

double ie_loss(const Tensor& relevance, const PairSelection& sel, const RegionPrior& prior, PosteriorMode mode,
               Reduction reduce) {
  if (sel.pairs.empty()) return 0.0;
  double total = 0.0;
  for (const SelectedPair& p : sel.pairs) total += 1.0 - posterior(relevance, prior, p.region, p.word, mode);
  return reduce == Reduction::Mean ? total / static_cast<double>(sel.pairs.size()) : total;
}

Var ie_loss(Tape& tape, Var relevance, const RegionPrior& prior, double factor, PosteriorMode mode,
            Reduction reduce, PairScope scope) {
  const Tensor& m = relevance.value();
  require_matrix(m, "ie_loss");
  require_prior(m, prior, "ie_loss");
  const PairSelection sel = scope == PairScope::All ? all_pairs(m) : select_pairs(m, factor);
  if (sel.pairs.empty()) return tape.constant(Tensor::scalar(0.0));
  const std::size_t n = m.dim(0), k = m.dim(1);
  Tensor prior_grid(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) prior_grid.at(i, j) = prior.p[i];
  Var post = mul(relevance, tape.constant(std::move(prior_grid)));
  if (mode == PosteriorMode::Normalized) {
    for (std::size_t j = 0; j < k; ++j) {
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) e += m.at(i, j) * prior.p[i];
      if (e == 0.0) throw Error("ie_loss: zero evidence for word " + std::to_string(j));
    }
    Var evidence = matmul(tape.constant(Tensor(Shape{1, n}, 1.0)), post);    // [1, k]
    Var spread = matmul(tape.constant(Tensor(Shape{n, 1}, 1.0)), evidence);  // [n, k]
    post = div(post, spread);
  }
  std::vector<std::size_t> idx;
  idx.reserve(sel.pairs.size());
  for (const SelectedPair& p : sel.pairs) idx.push_back(p.region * k + p.word);
  Var total = sum(affine(gather(post, idx), -1.0, 1.0));
  return reduce == Reduction::Mean ? affine(total, 1.0 / static_cast<double>(idx.size())) : total;
}

Var total_loss(Var ce, Var ie, double lambda) {
  if (!(lambda >= 0.0)) throw Error("total_loss: lambda must be non-negative");
  if (lambda == 0.0) return ce;
  return add(ce, affine(ie, lambda));
}

}  // namespace hieratt
