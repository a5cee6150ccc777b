#pragma once

#include <string>
#include <vector>

#include "hieratt/encoder.hpp"
#include "hieratt/interpretability.hpp"

namespace hieratt {

/// Fixed palette; region i is drawn in palette[i % 8].
const std::vector<std::string>& region_palette();
inline constexpr const char* kNeutralColor = "#404040";

struct LegendEntry {
  std::size_t region = 0;
  std::string word;
  double probability = 0.0;
  std::string color;
};

struct ExplanationRender {
  std::string svg;
  std::vector<LegendEntry> legend;  // one per selected pair, in selection order
  PairSelection selection;
};

/// SVG with the raster embedded as a PNG data URI, one rectangle per selected
/// pair (class "pair", data-region / data-word attributes), the caption below
/// with each selected word in its region's color, and a legend line per pair.
/// A word selected by several regions takes the color of its most relevant one.
/// Throws DimensionError when the matrix does not match boxes and words.
ExplanationRender render_explanation(const Image& img, const std::vector<std::string>& words,
                                     const Tensor& relevance, const std::vector<Box>& boxes,
                                     double factor = kDefaultSelectionFactor);

/// Line chart of the named CSV columns against the first column. Throws Error
/// when the CSV has no data rows or a requested column is absent.
std::string render_curves(const std::string& csv, const std::vector<std::string>& columns);

std::string xml_escape(const std::string& s);

}  // namespace hieratt
