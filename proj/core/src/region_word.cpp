#include "hieratt/region_word.hpp"

#include "hieratt/error.hpp"
#include "hieratt/init.hpp"
#include "hieratt/ops.hpp"

namespace hieratt {

RegionWordAttention::RegionWordAttention(RwaConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), init_rng_(seed), encoder_(store_, "rwa.encoder", cfg_.encoder, true, init_rng_) {
  const std::size_t d_r = cfg_.encoder.region_dim, d_w = cfg_.word_dim(), d_a = cfg_.attention_dim;
  embedding_ = &store_.add("rwa.embedding", uniform_tensor({cfg_.vocab_size, cfg_.word_embed}, 0.5, init_rng_));
  forward_ = GruParams::create(store_, "rwa.rnn.forward", cfg_.word_embed, cfg_.rnn_hidden, init_rng_);
  backward_ = GruParams::create(store_, "rwa.rnn.backward", cfg_.word_embed, cfg_.rnn_hidden, init_rng_);
  u_ = &store_.add("rwa.u", glorot_tensor({d_r, d_a}, d_r, d_a, init_rng_));
  w_ = &store_.add("rwa.w", glorot_tensor({d_w, d_a}, d_w, d_a, init_rng_));
  v_ = &store_.add("rwa.v", glorot_tensor({d_a, 1}, d_a, 1, init_rng_));
}

std::size_t RegionWordAttention::count(const RwaConfig& cfg) {
  return VisualEncoder::count(cfg.encoder, true) + cfg.vocab_size * cfg.word_embed +
         2 * GruParams::count(cfg.word_embed, cfg.rnn_hidden) + cfg.encoder.region_dim * cfg.attention_dim +
         cfg.word_dim() * cfg.attention_dim + cfg.attention_dim;
}

Var RegionWordAttention::encode_regions(Tape& tape, const Image& img, const std::vector<Box>& boxes) const {
  return encoder_.encode_regions(tape, img, boxes);
}

Var RegionWordAttention::encode_words(Tape& tape, std::span<const int> ids) const {
  if (ids.empty()) throw Error("encode_words: empty sentence");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size) {
      throw VocabError("encode_words: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  return encode_word_rows(tape, embedding_lookup(tape.param(*embedding_), ids));
}

Var RegionWordAttention::encode_word_rows(Tape& tape, Var embedded) const {
  const Shape& s = embedded.shape();
  if (s.size() != 2 || s[1] != cfg_.word_embed) {
    throw DimensionError("encode_word_rows: expected [k, " + std::to_string(cfg_.word_embed) + "], got " +
                         shape_string(s));
  }
  const std::size_t k = s[0];
  GruWeights fw = forward_.bind(tape), bw = backward_.bind(tape);
  std::vector<Var> fwd(k), bwd(k);
  Var h = tape.constant(Tensor(Shape{1, cfg_.rnn_hidden}));
  for (std::size_t j = 0; j < k; ++j) {
    h = gru_cell(slice_rows(embedded, j, j + 1), h, fw);
    fwd[j] = h;
  }
  h = tape.constant(Tensor(Shape{1, cfg_.rnn_hidden}));
  for (std::size_t j = k; j-- > 0;) {
    h = gru_cell(slice_rows(embedded, j, j + 1), h, bw);
    bwd[j] = h;
  }
  std::vector<Var> rows;
  rows.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<Var> pair{fwd[j], bwd[j]};
    rows.push_back(concat(pair, 1));
  }
  return k == 1 ? rows[0] : concat(rows, 0);
}

Var RegionWordAttention::scores(Tape& tape, Var regions, Var words) const {
  const Shape& rs = regions.shape();
  const Shape& ws = words.shape();
  if (rs.size() != 2 || ws.size() != 2 || rs[1] != cfg_.encoder.region_dim || ws[1] != cfg_.word_dim()) {
    throw DimensionError("relevance: regions " + shape_string(rs) + ", words " + shape_string(ws));
  }
  Var ur = matmul(regions, tape.param(*u_));                             // [n, d_a]
  Var ww = matmul(words, tape.param(*w_));                               // [k, d_a]
  Var s = matmul(tanh(outer_add(ur, ww)), tape.param(*v_));              // [n*k, 1]
  return reshape(s, Shape{rs[0], ws[0]});
}

Var RegionWordAttention::relevance(Tape& tape, Var regions, Var words) const {
  return softmax(scores(tape, regions, words));
}

RelevanceMatrix RegionWordAttention::explain(const Image& img, const std::vector<Box>& boxes,
                                             std::span<const int> ids, std::vector<std::string> words) const {
  if (words.size() != ids.size()) throw DimensionError("explain: word strings do not match token ids");
  Tape tape(false);
  Var r = encode_regions(tape, img, boxes);
  Var w = encode_words(tape, ids);
  RelevanceMatrix m;
  m.probs = relevance(tape, r, w).value();
  m.boxes = boxes;
  m.words = std::move(words);
  return m;
}

}  // namespace hieratt
