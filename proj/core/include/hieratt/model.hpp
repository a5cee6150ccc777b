#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hieratt/checkpoint.hpp"
#include "hieratt/decoder.hpp"
#include "hieratt/encoder.hpp"
#include "hieratt/region_word.hpp"
#include "hieratt/scene.hpp"

namespace hieratt {

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const DecoderConfig& c);
nlohmann::json to_json(const RwaConfig& c);
/// Missing keys keep their defaults; unknown keys raise ParseError.
EncoderConfig encoder_config_from_json(const nlohmann::json& j, EncoderConfig base = {});
DecoderConfig decoder_config_from_json(const nlohmann::json& j, DecoderConfig base = {});
RwaConfig rwa_config_from_json(const nlohmann::json& j, RwaConfig base = {});

struct CaptionerConfig {
  EncoderConfig encoder{};
  DecoderConfig decoder{};

  bool operator==(const CaptionerConfig&) const = default;
};

/// Image encoder plus caption decoder sharing one parameter store. The
/// decoder's visual channels, grid size and vocabulary follow the encoder and
/// the vocabulary passed in.
class Captioner {
 public:
  Captioner(CaptionerConfig cfg, Vocabulary vocab, std::uint64_t seed);
  Captioner(const Captioner&) = delete;
  Captioner& operator=(const Captioner&) = delete;

  const CaptionerConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const VisualEncoder& encoder() const { return *encoder_; }
  HierAttDecoder& decoder() { return *decoder_; }
  const HierAttDecoder& decoder() const { return *decoder_; }

  /// Feature grid [V, S].
  Var encode(Tape& tape, const Image& img) const { return encoder_->encode_image(tape, img); }
  std::vector<int> caption_ids(const Image& img) const;
  std::string caption(const Image& img) const;

  static std::size_t count(const CaptionerConfig& cfg);

 private:
  CaptionerConfig cfg_;
  Vocabulary vocab_;
  ParamStore store_;
  std::unique_ptr<VisualEncoder> encoder_;
  std::unique_ptr<HierAttDecoder> decoder_;
};

/// Model section of a checkpoint: kind "captioner", config {"model", "vocab"}.
Checkpoint captioner_checkpoint(const Captioner& model);
/// Rebuilds a captioner; throws Error when the kind or any tensor shape is off.
std::unique_ptr<Captioner> captioner_from_checkpoint(const Checkpoint& ckpt);

Checkpoint rwa_checkpoint(const RegionWordAttention& rwa, const Vocabulary& vocab);
std::unique_ptr<RegionWordAttention> rwa_from_checkpoint(const Checkpoint& ckpt);
Vocabulary checkpoint_vocab(const Checkpoint& ckpt);

}  // namespace hieratt
