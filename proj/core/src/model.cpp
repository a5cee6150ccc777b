#include "hieratt/model.hpp"

#include <set>

#include "hieratt/error.hpp"

namespace hieratt {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ParseError(std::string(what) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw ParseError(std::string(what) + ": unknown key \"" + k + "\"");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"canvas", c.canvas},     {"channels", c.channels}, {"kernel", c.kernel},
          {"region_dim", c.region_dim}, {"min_crop", c.min_crop}};
}

nlohmann::json to_json(const DecoderConfig& c) {
  return {{"layers", c.layers},
          {"kernel", c.kernel},
          {"embed_dim", c.embed_dim},
          {"vocab_size", c.vocab_size},
          {"visual_channels", c.visual_channels},
          {"grid_cells", c.grid_cells},
          {"heads", c.heads},
          {"attention_dim", c.attention_dim},
          {"gate_hidden", c.gate_hidden},
          {"max_length", c.max_length},
          {"dropout", c.dropout}};
}

nlohmann::json to_json(const RwaConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"vocab_size", c.vocab_size},
          {"word_embed", c.word_embed},
          {"rnn_hidden", c.rnn_hidden},
          {"attention_dim", c.attention_dim}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j, EncoderConfig c) {
  check_keys(j, {"canvas", "channels", "kernel", "region_dim", "min_crop"}, "encoder config");
  try {
    read(j, "canvas", c.canvas);
    read(j, "channels", c.channels);
    read(j, "kernel", c.kernel);
    read(j, "region_dim", c.region_dim);
    read(j, "min_crop", c.min_crop);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("encoder config: ") + e.what());
  }
  return c;
}

DecoderConfig decoder_config_from_json(const nlohmann::json& j, DecoderConfig c) {
  check_keys(j,
             {"layers", "kernel", "embed_dim", "vocab_size", "visual_channels", "grid_cells", "heads", "attention_dim",
              "gate_hidden", "max_length", "dropout"},
             "decoder config");
  try {
    read(j, "layers", c.layers);
    read(j, "kernel", c.kernel);
    read(j, "embed_dim", c.embed_dim);
    read(j, "vocab_size", c.vocab_size);
    read(j, "visual_channels", c.visual_channels);
    read(j, "grid_cells", c.grid_cells);
    read(j, "heads", c.heads);
    read(j, "attention_dim", c.attention_dim);
    read(j, "gate_hidden", c.gate_hidden);
    read(j, "max_length", c.max_length);
    read(j, "dropout", c.dropout);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("decoder config: ") + e.what());
  }
  return c;
}

RwaConfig rwa_config_from_json(const nlohmann::json& j, RwaConfig c) {
  check_keys(j, {"encoder", "vocab_size", "word_embed", "rnn_hidden", "attention_dim"}, "region-word config");
  try {
    if (j.contains("encoder")) c.encoder = encoder_config_from_json(j["encoder"], c.encoder);
    read(j, "vocab_size", c.vocab_size);
    read(j, "word_embed", c.word_embed);
    read(j, "rnn_hidden", c.rnn_hidden);
    read(j, "attention_dim", c.attention_dim);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("region-word config: ") + e.what());
  }
  return c;
}

Captioner::Captioner(CaptionerConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
  cfg_.decoder.visual_channels = cfg_.encoder.visual_channels();
  cfg_.decoder.grid_cells = cfg_.encoder.grid_cells();
  cfg_.decoder.vocab_size = vocab_.size();
  SplitMix64 rng(seed);
  encoder_ = std::make_unique<VisualEncoder>(store_, "encoder", cfg_.encoder, false, rng);
  decoder_ = std::make_unique<HierAttDecoder>(store_, "decoder", cfg_.decoder, rng);
}

std::vector<int> Captioner::caption_ids(const Image& img) const {
  Tape tape(false);
  return decoder_->greedy(encode(tape, img).value(), cfg_.decoder.max_length);
}

std::string Captioner::caption(const Image& img) const {
  const auto ids = caption_ids(img);
  return detokenize(ids, vocab_);
}

std::size_t Captioner::count(const CaptionerConfig& cfg) {
  DecoderConfig d = cfg.decoder;
  d.visual_channels = cfg.encoder.visual_channels();
  return VisualEncoder::count(cfg.encoder, false) + HierAttDecoder::count(d);
}

Checkpoint captioner_checkpoint(const Captioner& model) {
  Checkpoint ckpt;
  ckpt.kind = "captioner";
  ckpt.config["model"] = {{"encoder", to_json(model.config().encoder)},
                          {"decoder", to_json(model.config().decoder)}};
  ckpt.config["vocab"] = model.vocab().tokens();
  store_to_checkpoint(model.params(), ckpt);
  return ckpt;
}

Vocabulary checkpoint_vocab(const Checkpoint& ckpt) {
  try {
    return Vocabulary::from_tokens(ckpt.config.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: missing or malformed vocabulary: ") + e.what());
  }
}

std::unique_ptr<Captioner> captioner_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "captioner") throw Error("checkpoint: expected a captioner, found \"" + ckpt.kind + "\"");
  CaptionerConfig cfg;
  try {
    const auto& m = ckpt.config.at("model");
    cfg.encoder = encoder_config_from_json(m.at("encoder"));
    cfg.decoder = decoder_config_from_json(m.at("decoder"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed model config: ") + e.what());
  }
  Vocabulary vocab = checkpoint_vocab(ckpt);
  if (cfg.decoder.vocab_size != vocab.size()) {
    throw Error("checkpoint: decoder vocabulary size " + std::to_string(cfg.decoder.vocab_size) +
                " does not match the stored vocabulary of " + std::to_string(vocab.size()));
  }
  auto model = std::make_unique<Captioner>(cfg, std::move(vocab), 0);
  if (!(model->config() == cfg)) throw Error("checkpoint: model config is inconsistent with its encoder");
  checkpoint_to_store(ckpt, model->params());
  return model;
}

Checkpoint rwa_checkpoint(const RegionWordAttention& rwa, const Vocabulary& vocab) {
  if (rwa.config().vocab_size != vocab.size()) throw Error("region-word checkpoint: vocabulary size mismatch");
  Checkpoint ckpt;
  ckpt.kind = "region_word";
  ckpt.config["model"] = to_json(rwa.config());
  ckpt.config["vocab"] = vocab.tokens();
  store_to_checkpoint(rwa.params(), ckpt);
  return ckpt;
}

std::unique_ptr<RegionWordAttention> rwa_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "region_word") {
    throw Error("checkpoint: expected a region-word model, found \"" + ckpt.kind + "\"");
  }
  RwaConfig cfg;
  try {
    cfg = rwa_config_from_json(ckpt.config.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed region-word config: ") + e.what());
  }
  if (cfg.vocab_size != checkpoint_vocab(ckpt).size()) throw Error("checkpoint: region-word vocabulary mismatch");
  auto rwa = std::make_unique<RegionWordAttention>(cfg, 0);
  checkpoint_to_store(ckpt, rwa->params());
  return rwa;
}

}  // namespace hieratt
