#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hieratt/encoder.hpp"

namespace hieratt {

inline constexpr std::size_t kSceneCanvas = 64;
inline constexpr int kMinObjectSide = 8;

struct SceneRegion {
  Box box;
  std::string object;  // circle | square | triangle
  std::string color;   // red | green | blue | yellow

  bool operator==(const SceneRegion&) const = default;
};

/// One synthetic scene: raster, template caption and ground-truth object boxes.
struct SceneSample {
  Image image;
  std::string caption;
  std::vector<SceneRegion> regions;
  std::uint64_t seed = 0;

  std::vector<Box> boxes() const;
  bool operator==(const SceneSample&) const = default;
};

const std::vector<std::string>& scene_shapes();
const std::vector<std::string>& scene_colors();

/// Deterministic scene from a seed: 1-3 non-overlapping objects with distinct
/// shapes on a black 64x64 canvas, hard-edged. The caption template follows
/// the layout: one object "a C S"; two objects "a C S left of a C S" when
/// clearly separated horizontally, "a C S above a C S" when clearly separated
/// vertically, otherwise "a C S and a C S"; three objects "a C S and a C S and
/// a C S". Objects joined by "and" are listed left to right.
SceneSample generate_scene(std::uint64_t seed);
std::vector<SceneSample> generate_scenes(std::uint64_t first_seed, std::size_t count);

/// An object-free window (side `side`) used as a distractor region, if one exists.
std::optional<Box> background_box(const SceneSample& sample, int side = 12);

/// Token <-> id bijection with fixed specials <pad>=0, <start>=1, <end>=2, <unk>=3.
class Vocabulary {
 public:
  Vocabulary();
  /// Frequency-descending order after the specials, ties lexicographic.
  static Vocabulary build(std::span<const std::string> captions);
  /// Restores a vocabulary from its ordered token list (specials included).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;  // <unk> when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> ids_;
};

/// Lowercase, strip punctuation and split on whitespace.
std::vector<std::string> normalize_words(std::string_view text);
/// [<start>, words..., <end>] with out-of-vocabulary words mapped to <unk>.
std::vector<int> tokenize_caption(std::string_view text, const Vocabulary& vocab);
/// Space-joined words, skipping specials.
std::string detokenize(std::span<const int> ids, const Vocabulary& vocab);

/// Dataset manifest: JSON lines, one scene per line with keys
///   seed (u64), caption (string), regions ([{box: [x, y, w, h], object, color}]),
///   and either image_png_base64 (inline PNG) or image_png (path relative to the manifest).
void write_manifest(const std::string& path, std::span<const SceneSample> samples);
std::vector<SceneSample> read_manifest(const std::string& path);
std::string manifest_line(const SceneSample& sample);
SceneSample parse_manifest_line(std::string_view line, const std::string& base_dir = ".");

}  // namespace hieratt
