#include "hieratt/scene.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "hieratt/decoder.hpp"
#include "hieratt/error.hpp"
#include "hieratt/image_io.hpp"
#include "hieratt/rng.hpp"

namespace hieratt {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb color_value(const std::string& name) {
  if (name == "red") return {1.0, 0.0, 0.0};
  if (name == "green") return {0.0, 1.0, 0.0};
  if (name == "blue") return {0.0, 0.0, 1.0};
  return {1.0, 1.0, 0.0};
}

// Whether pixel (px, py) of a w x h local frame belongs to the shape.
bool covers(const std::string& shape, int px, int py, int w, int h) {
  if (shape == "square") return true;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  if (shape == "circle") {
    const double dx = (px - cx) / (w / 2.0), dy = (py - cy) / (h / 2.0);
    return dx * dx + dy * dy <= 1.0;
  }
  // upward triangle: apex at the top centre, base on the bottom row
  const double frac = h == 1 ? 1.0 : static_cast<double>(py) / (h - 1);
  const double half = std::max(0.5, frac * w / 2.0);
  return std::abs(px - cx) <= half;
}

struct Placed {
  std::string shape, color;
  int x, y, w, h;
};

bool overlaps(const Placed& a, const Placed& b, int margin) {
  return a.x < b.x + b.w + margin && b.x < a.x + a.w + margin && a.y < b.y + b.h + margin &&
         b.y < a.y + a.h + margin;
}

std::string phrase(const SceneRegion& r) { return "a " + r.color + " " + r.object; }

}  // namespace

std::vector<Box> SceneSample::boxes() const {
  std::vector<Box> out;
  for (const auto& r : regions) out.push_back(r.box);
  return out;
}

const std::vector<std::string>& scene_shapes() {
  static const std::vector<std::string> shapes{"circle", "square", "triangle"};
  return shapes;
}

const std::vector<std::string>& scene_colors() {
  static const std::vector<std::string> colors{"red", "green", "blue", "yellow"};
  return colors;
}

SceneSample generate_scene(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const int canvas = static_cast<int>(kSceneCanvas);
  const std::uint64_t roll = rng.below(10);
  const int count = roll < 3 ? 1 : (roll < 8 ? 2 : 3);

  std::vector<std::string> shapes = scene_shapes();
  for (std::size_t i = shapes.size(); i > 1; --i) std::swap(shapes[i - 1], shapes[rng.below(i)]);

  std::vector<Placed> placed;
  for (int attempt = 0; static_cast<int>(placed.size()) < count; ++attempt) {
    if (attempt > 0 && attempt % 200 == 0) placed.clear();  // restart a crowded layout
    Placed p;
    p.shape = shapes[placed.size()];
    p.color = scene_colors()[rng.below(scene_colors().size())];
    p.w = rng.between(12, 22);
    p.h = p.shape == "circle" || p.shape == "square" ? p.w : rng.between(12, 22);
    p.x = rng.between(1, canvas - 1 - p.w);
    p.y = rng.between(1, canvas - 1 - p.h);
    bool clash = false;
    for (const Placed& q : placed) clash = clash || overlaps(p, q, 3);
    if (!clash) placed.push_back(p);
  }

  SceneSample s;
  s.seed = seed;
  s.image = Image(kSceneCanvas, kSceneCanvas);
  for (const Placed& p : placed) {
    const Rgb c = color_value(p.color);
    int x0 = canvas, y0 = canvas, x1 = -1, y1 = -1;
    for (int py = 0; py < p.h; ++py)
      for (int px = 0; px < p.w; ++px) {
        if (!covers(p.shape, px, py, p.w, p.h)) continue;
        const auto X = static_cast<std::size_t>(p.x + px), Y = static_cast<std::size_t>(p.y + py);
        s.image.set(0, Y, X, c.r);
        s.image.set(1, Y, X, c.g);
        s.image.set(2, Y, X, c.b);
        x0 = std::min(x0, p.x + px);
        y0 = std::min(y0, p.y + py);
        x1 = std::max(x1, p.x + px);
        y1 = std::max(y1, p.y + py);
      }
    s.regions.push_back({Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1}, p.shape, p.color});
  }

  auto centre_x = [](const SceneRegion& r) { return r.box.x + r.box.w / 2.0; };
  auto centre_y = [](const SceneRegion& r) { return r.box.y + r.box.h / 2.0; };
  auto& regs = s.regions;
  std::stable_sort(regs.begin(), regs.end(),
                   [&](const SceneRegion& a, const SceneRegion& b) { return centre_x(a) < centre_x(b); });
  if (regs.size() == 1) {
    s.caption = phrase(regs[0]);
  } else if (regs.size() == 2) {
    const double dx = centre_x(regs[1]) - centre_x(regs[0]);
    const double dy = centre_y(regs[1]) - centre_y(regs[0]);
    if (dx >= 2.0 * std::abs(dy) && dx > 20.0) {
      s.caption = phrase(regs[0]) + " left of " + phrase(regs[1]);
    } else if (std::abs(dy) >= 2.0 * dx && std::abs(dy) > 20.0) {
      if (dy < 0) std::swap(regs[0], regs[1]);
      s.caption = phrase(regs[0]) + " above " + phrase(regs[1]);
    } else {
      s.caption = phrase(regs[0]) + " and " + phrase(regs[1]);
    }
  } else {
    s.caption = phrase(regs[0]) + " and " + phrase(regs[1]) + " and " + phrase(regs[2]);
  }
  return s;
}

std::vector<SceneSample> generate_scenes(std::uint64_t first_seed, std::size_t count) {
  std::vector<SceneSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_scene(first_seed + i));
  return out;
}

std::optional<Box> background_box(const SceneSample& sample, int side) {
  const int canvas = static_cast<int>(sample.image.width());
  SplitMix64 rng(derive_seed(sample.seed, 0xB6));
  for (int attempt = 0; attempt < 256; ++attempt) {
    Box b{rng.between(0, canvas - side), rng.between(0, canvas - side), side, side};
    bool clear = true;
    for (const auto& r : sample.regions) {
      const Box& o = r.box;
      if (b.x < o.x + o.w && o.x < b.x + b.w && b.y < o.y + o.h && o.y < b.y + b.h) clear = false;
    }
    if (clear) return b;
  }
  return std::nullopt;
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<pad>", "<start>", "<end>", "<unk>"}) add(s);
}

void Vocabulary::add(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> captions) {
  if (captions.empty()) throw Error("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& c : captions)
    for (auto& w : normalize_words(c)) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> order(freq.begin(), freq.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [w, n] : order) {
    if (!v.contains(w)) v.add(w);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  if (tokens.size() < 4 || !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
    throw Error("vocabulary: token list must start with <pad>, <start>, <end>, <unk>");
  }
  for (std::size_t i = 4; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw Error("vocabulary: duplicate token " + tokens[i]);
    v.add(std::move(tokens[i]));
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.find(token) != ids_.end(); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<int> tokenize_caption(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids{1};
  for (const auto& w : normalize_words(text)) ids.push_back(vocab.id(w));
  ids.push_back(2);
  return ids;
}

std::string detokenize(std::span<const int> ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id <= 3) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

std::string manifest_line(const SceneSample& sample) {
  nlohmann::json j;
  j["seed"] = sample.seed;
  j["caption"] = sample.caption;
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : sample.regions) {
    regions.push_back({{"box", {r.box.x, r.box.y, r.box.w, r.box.h}}, {"object", r.object}, {"color", r.color}});
  }
  j["regions"] = std::move(regions);
  j["image_png_base64"] = base64_encode(encode_png(sample.image));
  return j.dump();
}

SceneSample parse_manifest_line(std::string_view line, const std::string& base_dir) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ParseError("manifest: malformed JSON line");
  try {
    SceneSample s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.caption = j.at("caption").get<std::string>();
    for (const auto& r : j.at("regions")) {
      const auto& b = r.at("box");
      s.regions.push_back({Box{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()},
                           r.at("object").get<std::string>(), r.at("color").get<std::string>()});
    }
    if (j.contains("image_png_base64")) {
      s.image = decode_png(base64_decode(j["image_png_base64"].get<std::string>()));
    } else {
      s.image = read_png((std::filesystem::path(base_dir) / j.at("image_png").get<std::string>()).string());
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

void write_manifest(const std::string& path, std::span<const SceneSample> samples) {
  std::string text;
  for (const auto& s : samples) text += manifest_line(s) + "\n";
  write_file(path, text);
}

std::vector<SceneSample> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  const std::string base = std::filesystem::path(path).parent_path().string();
  std::vector<SceneSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_manifest_line(line, base.empty() ? "." : base));
  }
  return out;
}

}  // namespace hieratt
