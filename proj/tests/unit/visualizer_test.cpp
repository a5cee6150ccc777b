#include <gtest/gtest.h>

#include "laptop_example.hpp"
#include "hieratt/error.hpp"
#include "hieratt/scene.hpp"
#include "hieratt/visualizer.hpp"
#include "xml_check.hpp"

using namespace hieratt;
using hieratt::testing::laptop_matrix;
using hieratt::testing::laptop_words;
using hieratt::testing::xml_problem;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

const std::vector<Box> kBoxes{Box{4, 4, 20, 40}, Box{30, 30, 20, 20}, Box{0, 0, 64, 64}};

}  // namespace

TEST(Explanation, LaptopExampleDrawsTwoBoxesAndColorsTwoWords) {
  const Image img = generate_scene(1).image;
  const ExplanationRender r = render_explanation(img, laptop_words(), laptop_matrix(), kBoxes);
  EXPECT_EQ(count(r.svg, "class=\"pair\""), 2u);
  EXPECT_EQ(count(r.svg, "data-region=\"2\""), 0u);
  ASSERT_EQ(r.legend.size(), 2u);
  EXPECT_EQ(r.legend[0].word, "woman");
  EXPECT_EQ(r.legend[0].color, region_palette()[0]);
  EXPECT_EQ(r.legend[1].word, "sitting");
  EXPECT_EQ(r.legend[1].color, region_palette()[1]);
  EXPECT_NE(r.svg.find(">woman</tspan>"), std::string::npos);
  EXPECT_NE(r.svg.find("data:image/png;base64,"), std::string::npos);
  EXPECT_EQ(xml_problem(r.svg), "");
}

TEST(Explanation, UniformMatrixDrawsNothing) {
  const Image img = generate_scene(2).image;
  const ExplanationRender r = render_explanation(img, laptop_words(), Tensor(Shape{3, 9}, 1.0 / 9.0), kBoxes);
  EXPECT_EQ(count(r.svg, "class=\"pair\""), 0u);
  EXPECT_TRUE(r.legend.empty());
  EXPECT_EQ(count(r.svg, kNeutralColor), 9u);
}

TEST(Explanation, DeterministicAndEscaped) {
  const Image img = generate_scene(3).image;
  std::vector<std::string> words = laptop_words();
  words[8] = "<b>&\"";
  const auto a = render_explanation(img, words, laptop_matrix(), kBoxes);
  const auto b = render_explanation(img, words, laptop_matrix(), kBoxes);
  EXPECT_EQ(a.svg, b.svg);
  EXPECT_EQ(xml_problem(a.svg), "");
  EXPECT_EQ(a.svg.find("<b>"), std::string::npos);
}

TEST(Explanation, ShapeMismatchThrows) {
  const Image img = generate_scene(4).image;
  EXPECT_THROW(render_explanation(img, laptop_words(), laptop_matrix(), {Box{0, 0, 8, 8}}), DimensionError);
  EXPECT_THROW(render_explanation(img, {"a"}, laptop_matrix(), kBoxes), DimensionError);
}

TEST(Explanation, WordTakesColorOfStrongestRegion) {
  const Tensor m(Shape{2, 2}, {0.7, 0.3, 0.9, 0.1});
  const auto r = render_explanation(generate_scene(5).image, {"x", "y"}, m, {Box{0, 0, 8, 8}, Box{8, 8, 8, 8}}, 1.0);
  ASSERT_EQ(r.legend.size(), 2u);
  EXPECT_NE(r.svg.find("data-word=\"0\" fill=\"" + region_palette()[1] + "\""), std::string::npos) << r.svg;
}

TEST(Curves, OnePointPerRowAndAxisLabels) {
  const std::string csv = "epoch,ce_loss,ie_loss,total\n1,2.0,0.5,2.5\n2,1.5,0.4,1.9\n3,1.0,0.3,1.3\n";
  const std::string svg = render_curves(csv, {"ce_loss", "ie_loss"});
  EXPECT_EQ(count(svg, "class=\"series\""), 2u);
  EXPECT_NE(svg.find("data-column=\"ce_loss\""), std::string::npos);
  EXPECT_NE(svg.find(">epoch<"), std::string::npos);
  EXPECT_EQ(xml_problem(svg), "");
  const std::size_t start = svg.find("points=\"");
  const std::size_t stop = svg.find('"', start + 8);
  EXPECT_EQ(count(svg.substr(start + 8, stop - start - 8), ","), 3u);
  EXPECT_EQ(render_curves(csv, {"ce_loss"}), render_curves(csv, {"ce_loss"}));
}

TEST(Curves, Errors) {
  EXPECT_THROW(render_curves("epoch,ce_loss\n", {"ce_loss"}), Error);
  EXPECT_THROW(render_curves("epoch,ce_loss\n1,2\n", {"nope"}), Error);
}
