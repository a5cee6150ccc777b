#pragma once

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "hieratt/autodiff.hpp"
#include "hieratt/gru.hpp"

namespace hieratt {

struct DecoderConfig {
  std::size_t layers = 6;
  std::size_t kernel = 3;
  std::size_t embed_dim = 32;
  std::size_t vocab_size = 16;
  std::size_t visual_channels = 64;
  std::size_t grid_cells = 16;
  std::size_t heads = 2;
  /// Per-head query/key width.
  std::size_t attention_dim = 16;
  std::size_t gate_hidden = 128;
  std::size_t max_length = 16;
  double dropout = 0.1;

  std::size_t gate_input() const { return visual_channels + embed_dim; }
  /// Number of past tokens (including the current one) that can reach a logit.
  std::size_t receptive_field() const { return 1 + layers * (kernel - 1); }
  void validate() const;

  bool operator==(const DecoderConfig&) const = default;
};

inline constexpr int kPadId = 0;
inline constexpr int kStartId = 1;
inline constexpr int kEndId = 2;
inline constexpr int kUnkId = 3;

struct AttentionParams {
  std::vector<Parameter*> query;  // per head [E, d_a]
  std::vector<Parameter*> key;    // per head [d_a, V]
  Parameter* out_w = nullptr;     // [H*V, V]
  Parameter* out_b = nullptr;     // [V]
};

struct GateParams {
  GruParams gru;                       // input V+E -> gate_hidden
  Parameter* visual_w = nullptr;       // [gate_hidden, V]
  Parameter* visual_b = nullptr;       // [V]
  Parameter* concept_w = nullptr;      // [gate_hidden, E]
  Parameter* concept_b = nullptr;      // [E]
};

struct AttentionOutput {
  Var context;               // [T, V]
  std::vector<Var> weights;  // per head [T, cells]
};

/// Multi-head scaled dot-product attention of concept rows over the cells of a
/// modulated feature map. The map for row t is fm0 with channel c scaled by
/// gate[t, c]; keys are W_k (fm0[:, s] * gate[t]) without bias, so
///   score_h(t, s) = <q_h(t), W_k,h (fm0[:, s] * gate[t])> / sqrt(d_a).
/// fm0: [V, S], fm0_t: fm0 transposed [S, V], gate: [T, V], concept_t: [T, E].
AttentionOutput attention_layer(Tape& tape, const AttentionParams& p, Var fm0, Var fm0_t, Var gate, Var concept_t);

struct GateOutput {
  Var next_gate;    // [T, V], cumulative channel modulation
  Var next_state;   // [T, gate_hidden]
  Var concept_out;  // [T, E]
  Var factors;      // [T, V], this layer's sigmoid gate in (0, 1)
};

/// Hierarchical attention gate: one GRU step on concat(context, concept_t) from
/// the previous layer's state, then two 1x1 projections of the new state give
/// the channel gate (multiplied into the running modulation) and the concept
/// residual.
GateOutput hier_gate(Tape& tape, const GateParams& p, Var prev_gate, Var context, Var concept_t, Var state);

/// Per-layer quantities recorded during a forward pass.
struct DecoderTrace {
  std::vector<Var> gate_inputs;     // [T, V+E] per layer
  std::vector<Var> states;          // [T, gate_hidden] after each layer
  std::vector<Var> gates;           // [T, V] cumulative modulation after each layer
  std::vector<std::vector<Var>> attention;  // per layer, per head [T, S]
};

/// Incremental decoding state: a ring of the last K-1 layer inputs per layer.
struct DecodeCache {
  Tensor fm0;    // [V, S]
  Tensor fm0_t;  // [S, V]
  std::vector<std::deque<Tensor>> history;  // per layer, each entry [E]
  std::size_t position = 0;

  std::size_t buffered(std::size_t layer) const { return history.at(layer).size(); }
};

/// Causal-convolution caption decoder with hierarchical attention.
class HierAttDecoder {
 public:
  HierAttDecoder(ParamStore& store, const std::string& prefix, DecoderConfig cfg, SplitMix64& rng);

  const DecoderConfig& config() const { return cfg_; }
  /// Raises the step limit of incremental decoding; parameters are unaffected.
  void set_max_length(std::size_t n) { cfg_.max_length = n; }

  /// Full-sequence pass. fm0: [V, S]; returns logits [T, vocab].
  Var forward(Tape& tape, Var fm0, std::span<const int> tokens, bool training, DecoderTrace* trace = nullptr) const;

  DecodeCache start(const Tensor& fm0) const;
  /// Logits [vocab] for the next position. Throws Error past max_length.
  Tensor step(DecodeCache& cache, int token) const;
  /// Argmax decoding from <start>; stops at <end> (not included) or after max_len tokens.
  std::vector<int> greedy(const Tensor& fm0, std::size_t max_len) const;

  const AttentionParams& attention(std::size_t layer) const { return layers_.at(layer).attn; }
  const GateParams& gate(std::size_t layer) const { return layers_.at(layer).gate; }

  static std::size_t count(const DecoderConfig& cfg);

 private:
  struct Layer {
    Parameter* conv_w = nullptr;  // [E, E, K]
    Parameter* conv_b = nullptr;  // [E]
    AttentionParams attn;
    GateParams gate;
  };

  void check_tokens(std::span<const int> tokens) const;
  // Shared per-layer body after the convolution. Returns the next layer input.
  Var layer_tail(Tape& tape, const Layer& layer, Var x, Var conv, Var fm0, Var fm0_t, Var& gate, Var& state,
                 DecoderTrace* trace) const;
  Var predict(Tape& tape, Var x, bool training) const;

  DecoderConfig cfg_;
  Parameter* embedding_ = nullptr;  // [vocab, E]
  std::vector<Layer> layers_;
  Parameter* pred1_w_ = nullptr;  // [E, E]
  Parameter* pred1_b_ = nullptr;
  Parameter* pred2_w_ = nullptr;  // [E, vocab]
  Parameter* pred2_b_ = nullptr;
};

}  // namespace hieratt
