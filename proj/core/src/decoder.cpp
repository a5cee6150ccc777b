#include "hieratt/decoder.hpp"

#include <cmath>

#include "hieratt/error.hpp"
#include "hieratt/init.hpp"
#include "hieratt/ops.hpp"

namespace hieratt {

void DecoderConfig::validate() const {
  if (layers < 1) throw Error("decoder config: layers must be >= 1");
  if (kernel < 2) throw Error("decoder config: kernel must be >= 2");
  if (embed_dim == 0 || vocab_size < 5 || visual_channels == 0 || grid_cells == 0 || heads == 0 ||
      attention_dim == 0 || gate_hidden == 0 || max_length == 0) {
    throw Error("decoder config: every extent must be positive and the vocabulary must hold the specials");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("decoder config: dropout must lie in [0, 1)");
}

AttentionOutput attention_layer(Tape& tape, const AttentionParams& p, Var fm0, Var fm0_t, Var gate, Var concept_t) {
  const Shape& fs = fm0.shape();
  const Shape& gs = gate.shape();
  const Shape& cs = concept_t.shape();
  if (fs.size() != 2 || gs.size() != 2 || cs.size() != 2 || gs[1] != fs[0] || gs[0] != cs[0] ||
      fm0_t.shape() != Shape{fs[1], fs[0]} || p.key.empty() || p.key[0]->value.dim(1) != fs[0] ||
      p.query[0]->value.dim(0) != cs[1]) {
    throw DimensionError("attention_layer: feature map " + shape_string(fs) + ", gate " + shape_string(gs) +
                         ", concept_t " + shape_string(cs));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.query[0]->value.dim(1)));
  AttentionOutput out;
  std::vector<Var> contexts;
  for (std::size_t h = 0; h < p.query.size(); ++h) {
    Var q = matmul(concept_t, tape.param(*p.query[h]));            // [T, d_a]
    Var qk = mul(matmul(q, tape.param(*p.key[h])), gate);        // [T, V]
    Var w = softmax(affine(matmul(qk, fm0), scale));             // [T, S]
    contexts.push_back(mul(matmul(w, fm0_t), gate));             // [T, V]
    out.weights.push_back(w);
  }
  Var joined = contexts.size() == 1 ? contexts[0] : concat(contexts, 1);
  out.context = add(matmul(joined, tape.param(*p.out_w)), tape.param(*p.out_b));
  return out;
}

GateOutput hier_gate(Tape& tape, const GateParams& p, Var prev_gate, Var context, Var concept_t, Var state) {
  if (context.shape().size() != 2 || concept_t.shape().size() != 2 || context.shape()[0] != concept_t.shape()[0] ||
      context.shape()[1] + concept_t.shape()[1] != p.gru.input_size || prev_gate.shape() != context.shape()) {
    throw DimensionError("hier_gate: context " + shape_string(context.shape()) + ", concept_t " +
                         shape_string(concept_t.shape()) + ", gate " + shape_string(prev_gate.shape()) +
                         ", expected input width " + std::to_string(p.gru.input_size));
  }
  std::vector<Var> parts{context, concept_t};
  Var input = concat(parts, 1);
  GateOutput out;
  out.next_state = gru_cell(input, state, p.gru.bind(tape));
  out.factors = sigmoid(add(matmul(out.next_state, tape.param(*p.visual_w)), tape.param(*p.visual_b)));
  out.next_gate = mul(prev_gate, out.factors);
  out.concept_out = add(matmul(out.next_state, tape.param(*p.concept_w)), tape.param(*p.concept_b));
  return out;
}

HierAttDecoder::HierAttDecoder(ParamStore& store, const std::string& prefix, DecoderConfig cfg, SplitMix64& rng)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t E = cfg_.embed_dim, V = cfg_.visual_channels, da = cfg_.attention_dim, Hg = cfg_.gate_hidden;
  embedding_ = &store.add(prefix + ".embedding", uniform_tensor({cfg_.vocab_size, E}, 0.5, rng));
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string tag = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.conv_w = &store.add(tag + ".conv.w",
                              glorot_tensor({E, E, cfg_.kernel}, E * cfg_.kernel, E * cfg_.kernel, rng));
    layer.conv_b = &store.add(tag + ".conv.b", Tensor(Shape{E}));
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const std::string ht = tag + ".attn.head" + std::to_string(h);
      layer.attn.query.push_back(&store.add(ht + ".query", glorot_tensor({E, da}, E, da, rng)));
      layer.attn.key.push_back(&store.add(ht + ".key", glorot_tensor({da, V}, V, da, rng)));
    }
    layer.attn.out_w = &store.add(tag + ".attn.out.w", glorot_tensor({cfg_.heads * V, V}, cfg_.heads * V, V, rng));
    layer.attn.out_b = &store.add(tag + ".attn.out.b", Tensor(Shape{V}));
    layer.gate.gru = GruParams::create(store, tag + ".gate.gru", cfg_.gate_input(), Hg, rng);
    layer.gate.visual_w = &store.add(tag + ".gate.visual.w", glorot_tensor({Hg, V}, Hg, V, rng));
    // Gates start mostly open so the map is not attenuated sixfold at init.
    layer.gate.visual_b = &store.add(tag + ".gate.visual.b", Tensor(Shape{V}, 2.0));
    layer.gate.concept_w = &store.add(tag + ".gate.concept.w", glorot_tensor({Hg, E}, Hg, E, rng));
    layer.gate.concept_b = &store.add(tag + ".gate.concept.b", Tensor(Shape{E}));
    layers_.push_back(std::move(layer));
  }
  pred1_w_ = &store.add(prefix + ".predict1.w", glorot_tensor({E, E}, E, E, rng));
  pred1_b_ = &store.add(prefix + ".predict1.b", Tensor(Shape{E}));
  pred2_w_ = &store.add(prefix + ".predict2.w", glorot_tensor({E, cfg_.vocab_size}, E, cfg_.vocab_size, rng));
  pred2_b_ = &store.add(prefix + ".predict2.b", Tensor(Shape{cfg_.vocab_size}));
}

std::size_t HierAttDecoder::count(const DecoderConfig& cfg) {
  const std::size_t E = cfg.embed_dim, V = cfg.visual_channels, Hg = cfg.gate_hidden;
  std::size_t per_layer = E * E * cfg.kernel + E;
  per_layer += cfg.heads * (E * cfg.attention_dim + cfg.attention_dim * V);
  per_layer += cfg.heads * V * V + V;
  per_layer += GruParams::count(cfg.gate_input(), Hg);
  per_layer += Hg * V + V + Hg * E + E;
  return cfg.vocab_size * E + cfg.layers * per_layer + E * E + E + E * cfg.vocab_size + cfg.vocab_size;
}

void HierAttDecoder::check_tokens(std::span<const int> tokens) const {
  if (tokens.empty()) throw VocabError("decoder: empty token sequence");
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) {
      throw VocabError("decoder: token id " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(cfg_.vocab_size));
    }
  }
}

Var HierAttDecoder::layer_tail(Tape& tape, const Layer& layer, Var x, Var conv, Var fm0, Var fm0_t, Var& gate,
                               Var& state, DecoderTrace* trace) const {
  Var y = elu(conv);
  AttentionOutput att = attention_layer(tape, layer.attn, fm0, fm0_t, gate, y);
  GateOutput g = hier_gate(tape, layer.gate, gate, att.context, y, state);
  if (trace) {
    std::vector<Var> parts{att.context, y};
    trace->gate_inputs.push_back(concat(parts, 1));
    trace->states.push_back(g.next_state);
    trace->gates.push_back(g.next_gate);
    trace->attention.push_back(att.weights);
  }
  gate = g.next_gate;
  state = g.next_state;
  return add(x, add(y, g.concept_out));
}

Var HierAttDecoder::predict(Tape& tape, Var x, bool training) const {
  Var h = dropout(x, cfg_.dropout, training);
  h = elu(add(matmul(h, tape.param(*pred1_w_)), tape.param(*pred1_b_)));
  h = dropout(h, cfg_.dropout, training);
  return add(matmul(h, tape.param(*pred2_w_)), tape.param(*pred2_b_));
}

Var HierAttDecoder::forward(Tape& tape, Var fm0, std::span<const int> tokens, bool training,
                            DecoderTrace* trace) const {
  check_tokens(tokens);
  const Shape& fs = fm0.shape();
  if (fs.size() != 2 || fs[0] != cfg_.visual_channels || fs[1] != cfg_.grid_cells) {
    throw DimensionError("decoder: feature map " + shape_string(fs) + ", expected [" +
                         std::to_string(cfg_.visual_channels) + ", " + std::to_string(cfg_.grid_cells) + "]");
  }
  const std::size_t T = tokens.size();
  Var fm0_t = transpose(fm0);
  Var x = embedding_lookup(tape.param(*embedding_), tokens);  // [T, E]
  Var gate = tape.constant(Tensor(Shape{T, cfg_.visual_channels}, 1.0));
  Var state = tape.constant(Tensor(Shape{T, cfg_.gate_hidden}));
  for (const Layer& layer : layers_) {
    Var conv = transpose(conv1d_causal(transpose(x), tape.param(*layer.conv_w), tape.param(*layer.conv_b)));
    x = layer_tail(tape, layer, x, conv, fm0, fm0_t, gate, state, trace);
  }
  return predict(tape, x, training);
}

DecodeCache HierAttDecoder::start(const Tensor& fm0) const {
  if (fm0.shape() != Shape{cfg_.visual_channels, cfg_.grid_cells}) {
    throw DimensionError("decoder: feature map " + shape_string(fm0.shape()));
  }
  DecodeCache cache;
  cache.fm0 = fm0;
  Tensor t(Shape{fm0.dim(1), fm0.dim(0)});
  for (std::size_t r = 0; r < fm0.dim(0); ++r)
    for (std::size_t c = 0; c < fm0.dim(1); ++c) t.at(c, r) = fm0.at(r, c);
  cache.fm0_t = std::move(t);
  cache.history.resize(cfg_.layers);
  return cache;
}

Tensor HierAttDecoder::step(DecodeCache& cache, int token) const {
  if (cache.position >= cfg_.max_length) {
    throw Error("decode_step: exceeded max length " + std::to_string(cfg_.max_length));
  }
  const int ids[1] = {token};
  check_tokens(ids);
  Tape tape(false);
  const std::size_t E = cfg_.embed_dim, K = cfg_.kernel;
  Var fm0 = tape.constant(cache.fm0);
  Var fm0_t = tape.constant(cache.fm0_t);
  Var x = embedding_lookup(tape.param(*embedding_), ids);  // [1, E]
  Var gate = tape.constant(Tensor(Shape{1, cfg_.visual_channels}, 1.0));
  Var state = tape.constant(Tensor(Shape{1, cfg_.gate_hidden}));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& hist = cache.history[l];
    // window [E, K]: zero columns for positions before the sequence start
    Tensor window(Shape{E, K});
    const std::size_t offset = K - 1 - hist.size();
    for (std::size_t j = 0; j < hist.size(); ++j)
      for (std::size_t c = 0; c < E; ++c) window.at(c, offset + j) = hist[j][c];
    const Tensor& xv = x.value();
    for (std::size_t c = 0; c < E; ++c) window.at(c, K - 1) = xv[c];
    Var conv_full = conv1d_causal(tape.constant(std::move(window)), tape.param(*layers_[l].conv_w),
                                  tape.param(*layers_[l].conv_b));
    Var conv = slice_rows(transpose(conv_full), K - 1, K);
    hist.push_back(Tensor(Shape{E}, Tensor::Storage(xv.data().begin(), xv.data().end())));
    if (hist.size() > K - 1) hist.pop_front();
    x = layer_tail(tape, layers_[l], x, conv, fm0, fm0_t, gate, state, nullptr);
  }
  ++cache.position;
  const Tensor& logits = predict(tape, x, false).value();
  return Tensor(Shape{cfg_.vocab_size}, logits.storage());
}

std::vector<int> HierAttDecoder::greedy(const Tensor& fm0, std::size_t max_len) const {
  DecodeCache cache = start(fm0);
  std::vector<int> out;
  int token = kStartId;
  const std::size_t limit = std::min(max_len, cfg_.max_length);
  while (out.size() < limit) {
    Tensor logits = step(cache, token);
    token = static_cast<int>(argmax_lowest(logits.data()));
    if (token == kEndId) break;
    out.push_back(token);
  }
  return out;
}

}  // namespace hieratt
