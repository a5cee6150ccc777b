#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "hieratt/coco.hpp"
#include "hieratt/decoder.hpp"
#include "hieratt/error.hpp"
#include "hieratt/scene.hpp"

using namespace hieratt;

namespace {

bool member(const std::vector<std::string>& set, const std::string& w) {
  return std::find(set.begin(), set.end(), w) != set.end();
}

// Recursive-descent check of the caption grammar:
//   caption := obj | obj REL obj | obj "and" obj "and" obj
//   obj     := "a" COLOR SHAPE
//   REL     := "left of" | "above" | "and"
// Returns the relation keyword (empty for a single object) or throws.
std::string validate(const SceneSample& s) {
  const auto words = normalize_words(s.caption);
  std::size_t pos = 0;
  std::vector<std::pair<std::string, std::string>> objs;
  auto expect_obj = [&] {
    if (pos + 3 > words.size() || words[pos] != "a") throw std::runtime_error("expected object at " + s.caption);
    if (!member(scene_colors(), words[pos + 1]) || !member(scene_shapes(), words[pos + 2]))
      throw std::runtime_error("bad colour or shape in " + s.caption);
    objs.emplace_back(words[pos + 1], words[pos + 2]);
    pos += 3;
  };
  std::string rel;
  expect_obj();
  if (pos < words.size()) {
    if (words[pos] == "left" && pos + 1 < words.size() && words[pos + 1] == "of") {
      rel = "left of";
      pos += 2;
    } else if (words[pos] == "above" || words[pos] == "and") {
      rel = words[pos++];
    } else {
      throw std::runtime_error("bad relation in " + s.caption);
    }
    expect_obj();
    if (pos < words.size()) {
      if (rel != "and" || words[pos] != "and") throw std::runtime_error("bad third object in " + s.caption);
      ++pos;
      expect_obj();
    }
  }
  if (pos != words.size()) throw std::runtime_error("trailing words in " + s.caption);
  if (objs.size() != s.regions.size()) throw std::runtime_error("object count mismatch in " + s.caption);
  for (std::size_t i = 0; i < objs.size(); ++i) {
    if (objs[i].first != s.regions[i].color || objs[i].second != s.regions[i].object)
      throw std::runtime_error("object words do not match regions in " + s.caption);
  }
  return rel;
}

}  // namespace

TEST(Scene, SameSeedIsBitIdentical) {
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) EXPECT_EQ(generate_scene(seed), generate_scene(seed));
  EXPECT_NE(generate_scene(1).image, generate_scene(2).image);
}

TEST(Scene, BoxesInsideCanvasAndLargeEnough) {
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const SceneSample s = generate_scene(seed);
    ASSERT_GE(s.regions.size(), 1u);
    ASSERT_LE(s.regions.size(), 3u);
    std::set<std::string> shapes;
    for (const auto& r : s.regions) {
      EXPECT_GE(r.box.x, 0);
      EXPECT_GE(r.box.y, 0);
      EXPECT_LE(r.box.x + r.box.w, 64);
      EXPECT_LE(r.box.y + r.box.h, 64);
      EXPECT_GE(r.box.w, kMinObjectSide);
      EXPECT_GE(r.box.h, kMinObjectSide);
      shapes.insert(r.object);
    }
    EXPECT_EQ(shapes.size(), s.regions.size());
  }
}

TEST(Scene, GrammarHoldsOverTenThousandSeeds) {
  std::map<std::string, int> relations;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const SceneSample s = generate_scene(seed);
    std::string rel;
    ASSERT_NO_THROW(rel = validate(s)) << "seed " << seed;
    ++relations[rel];
    if (rel == "left of") {
      const auto& a = s.regions[0].box;
      const auto& b = s.regions[1].box;
      EXPECT_LT(a.x + a.w / 2.0, b.x + b.w / 2.0);
    } else if (rel == "above") {
      EXPECT_LT(s.regions[0].box.y + s.regions[0].box.h / 2.0, s.regions[1].box.y + s.regions[1].box.h / 2.0);
    }
  }
  for (const char* r : {"", "left of", "above", "and"}) EXPECT_GT(relations[r], 0) << r;
}

TEST(Scene, BackgroundBoxAvoidsObjects) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SceneSample s = generate_scene(seed);
    const auto bg = background_box(s);
    ASSERT_TRUE(bg.has_value());
    for (const auto& r : s.regions) {
      const bool apart = bg->x + bg->w <= r.box.x || r.box.x + r.box.w <= bg->x || bg->y + bg->h <= r.box.y ||
                         r.box.y + r.box.h <= bg->y;
      EXPECT_TRUE(apart);
    }
  }
}

TEST(Vocabulary, SingleCaption) {
  const std::vector<std::string> corpus{"a red circle"};
  const Vocabulary v = Vocabulary::build(corpus);
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(kPadId), "<pad>");
  EXPECT_EQ(v.token(kStartId), "<start>");
  EXPECT_EQ(v.token(kEndId), "<end>");
  EXPECT_EQ(v.token(kUnkId), "<unk>");
  EXPECT_THROW(v.token(99), VocabError);
}

TEST(Vocabulary, FrequencyThenLexicographicOrder) {
  const std::vector<std::string> corpus{"b a c", "a c", "a"};
  const Vocabulary v = Vocabulary::build(corpus);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<start>", "<end>", "<unk>", "a", "c", "b"}));
  EXPECT_EQ(Vocabulary::build(corpus), v);
  EXPECT_EQ(Vocabulary::from_tokens(v.tokens()), v);
}

TEST(Vocabulary, FullTemplateCorpusIsSmallAndClosed) {
  std::vector<std::string> captions;
  for (std::uint64_t seed = 0; seed < 5000; ++seed) captions.push_back(generate_scene(seed).caption);
  const Vocabulary v = Vocabulary::build(captions);
  EXPECT_LE(v.size(), 40u);
  for (const auto& c : captions)
    for (int id : tokenize_caption(c, v)) EXPECT_NE(id, kUnkId);
}

TEST(Tokenize, Examples) {
  const std::vector<std::string> corpus{"a red circle"};
  const Vocabulary v = Vocabulary::build(corpus);
  const std::vector<int> ids = tokenize_caption("A Red circle.", v);
  ASSERT_EQ(ids.size(), 5u);
  EXPECT_EQ(ids.front(), kStartId);
  EXPECT_EQ(ids.back(), kEndId);
  EXPECT_EQ(v.token(ids[1]), "a");
  EXPECT_EQ(v.token(ids[2]), "red");
  EXPECT_EQ(v.token(ids[3]), "circle");
  EXPECT_EQ(tokenize_caption("a blue circle", v)[2], kUnkId);
  EXPECT_EQ(detokenize(tokenize_caption("a red circle", v), v), "a red circle");
}

TEST(Manifest, RoundTripInlineAndFile) {
  const auto samples = generate_scenes(10, 4);
  for (const auto& s : samples) EXPECT_EQ(parse_manifest_line(manifest_line(s)), s);
  const auto dir = std::filesystem::temp_directory_path() / "hieratt_manifest_test";
  std::filesystem::create_directories(dir);
  write_manifest((dir / "m.jsonl").string(), samples);
  EXPECT_EQ(read_manifest((dir / "m.jsonl").string()), samples);
  std::filesystem::remove_all(dir);
}

TEST(Manifest, MalformedLineIsParseError) {
  EXPECT_THROW(parse_manifest_line("{not json"), ParseError);
  EXPECT_THROW(parse_manifest_line(R"({"seed": 1})"), ParseError);
}

TEST(Coco, MinimalFile) {
  const auto samples = parse_coco_annotations(R"({
    "images": [{"id": 5, "file_name": "x.jpg", "width": 64, "height": 48}],
    "annotations": [{"id": 1, "image_id": 5, "caption": "a cat"}]})");
  ASSERT_EQ(samples.size(), 1u);
  EXPECT_EQ(samples[0].image_id, 5);
  EXPECT_EQ(samples[0].captions, std::vector<std::string>{"a cat"});
}

TEST(Coco, InstanceBoxesBecomeCorners) {
  EXPECT_EQ(bbox_to_corners(10, 20, 30, 40), (CornerBox{10, 20, 40, 60}));
  const auto samples = parse_coco_annotations(R"({
    "images": [{"id": 1, "file_name": "a.jpg", "width": 100, "height": 100}],
    "categories": [{"id": 3, "name": "dog"}],
    "annotations": [{"id": 9, "image_id": 1, "bbox": [10, 20, 30, 40], "category_id": 3}]})");
  ASSERT_EQ(samples[0].objects.size(), 1u);
  EXPECT_EQ(samples[0].objects[0].box, (CornerBox{10, 20, 40, 60}));
  EXPECT_EQ(samples[0].objects[0].category, "dog");
}

TEST(Coco, DanglingImageIdIsIntegrityError) {
  try {
    parse_coco_annotations(R"({"images": [{"id": 1, "file_name": "a.jpg"}],
      "annotations": [{"id": 2, "image_id": 99, "caption": "x"}]})");
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
  }
  EXPECT_THROW(parse_coco_annotations("[1, 2"), ParseError);
}
