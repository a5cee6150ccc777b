#pragma once

#include <span>
#include <string>
#include <vector>

#include "hieratt/encoder.hpp"
#include "hieratt/gru.hpp"

namespace hieratt {

struct RwaConfig {
  EncoderConfig encoder{};
  std::size_t vocab_size = 16;
  std::size_t word_embed = 32;
  /// Hidden size per direction; word vectors are twice this wide.
  std::size_t rnn_hidden = 32;
  std::size_t attention_dim = 32;

  std::size_t word_dim() const { return 2 * rnn_hidden; }
  bool operator==(const RwaConfig&) const = default;
};

/// n regions x k words of P(word | region); rows sum to one.
struct RelevanceMatrix {
  Tensor probs;  // [n, k]
  std::vector<Box> boxes;
  std::vector<std::string> words;

  std::size_t regions() const { return probs.dim(0); }
  std::size_t word_count() const { return probs.dim(1); }
  double operator()(std::size_t i, std::size_t j) const { return probs.at(i, j); }
};

/// Relevance scorer: regions through a conv encoder with a projection head,
/// words through a bidirectional GRU, pairs scored as v . tanh(u r_i + w w_j)
/// and normalized over words for each region.
class RegionWordAttention {
 public:
  RegionWordAttention(RwaConfig cfg, std::uint64_t seed);
  RegionWordAttention(const RegionWordAttention&) = delete;
  RegionWordAttention& operator=(const RegionWordAttention&) = delete;

  const RwaConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const VisualEncoder& encoder() const { return encoder_; }

  /// [n, region_dim]
  Var encode_regions(Tape& tape, const Image& img, const std::vector<Box>& boxes) const;
  /// Token ids -> word vectors [k, 2*rnn_hidden]. Throws Error on an empty sentence.
  Var encode_words(Tape& tape, std::span<const int> ids) const;
  /// Same as encode_words for already embedded rows [k, word_embed].
  Var encode_word_rows(Tape& tape, Var embedded) const;
  /// Frozen view of the word embedding table [vocab, word_embed].
  Var embedding(Tape& tape) const { return tape.param(*embedding_); }

  /// Unnormalized scores [n, k].
  Var scores(Tape& tape, Var regions, Var words) const;
  /// Row-softmax of scores: [n, k].
  Var relevance(Tape& tape, Var regions, Var words) const;

  /// Inference convenience that fills a RelevanceMatrix.
  RelevanceMatrix explain(const Image& img, const std::vector<Box>& boxes, std::span<const int> ids,
                          std::vector<std::string> words) const;

  Parameter& u() { return *u_; }
  Parameter& w() { return *w_; }
  Parameter& v() { return *v_; }

  static std::size_t count(const RwaConfig& cfg);

 private:
  RwaConfig cfg_;
  ParamStore store_;
  SplitMix64 init_rng_;
  VisualEncoder encoder_;
  Parameter* embedding_ = nullptr;
  GruParams forward_;
  GruParams backward_;
  Parameter* u_ = nullptr;  // [region_dim, d_a]
  Parameter* w_ = nullptr;  // [word_dim, d_a]
  Parameter* v_ = nullptr;  // [d_a, 1]
};

}  // namespace hieratt
