#include "hieratt/visualizer.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>

#include "hieratt/error.hpp"
#include "hieratt/image_io.hpp"

namespace hieratt {

namespace {

constexpr int kScale = 4;

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

const std::vector<std::string>& region_palette() {
  static const std::vector<std::string> palette{"#e6194b", "#3cb44b", "#4363d8", "#f58231",
                                                "#911eb4", "#42d4f4", "#f032e6", "#9a6324"};
  return palette;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

ExplanationRender render_explanation(const Image& img, const std::vector<std::string>& words,
                                     const Tensor& relevance, const std::vector<Box>& boxes, double factor) {
  if (relevance.rank() != 2 || relevance.dim(0) != boxes.size() || relevance.dim(1) != words.size()) {
    throw DimensionError("render_explanation: matrix " + shape_string(relevance.shape()) + " for " +
                         std::to_string(boxes.size()) + " boxes and " + std::to_string(words.size()) + " words");
  }
  ExplanationRender out;
  out.selection = select_pairs(relevance, factor);
  const auto& palette = region_palette();
  const int w = static_cast<int>(img.width()) * kScale, h = static_cast<int>(img.height()) * kScale;
  const int legend_top = h + 48;
  const int total_h = legend_top + 20 * static_cast<int>(out.selection.pairs.size()) + 12;
  const int total_w = std::max(w, 420);

  // Word colors: the most relevant selected pair wins, lowest region on ties.
  std::vector<int> word_region(words.size(), -1);
  std::vector<double> word_best(words.size(), -1.0);
  for (const auto& p : out.selection.pairs) {
    if (p.relevance > word_best[p.word]) {
      word_best[p.word] = p.relevance;
      word_region[p.word] = static_cast<int>(p.region);
    }
  }

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\"" << total_h
      << "\" viewBox=\"0 0 " << total_w << ' ' << total_h << "\" font-family=\"monospace\" font-size=\"14\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
      << "<image x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
      << "\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64," << base64_encode(encode_png(img))
      << "\"/>\n";
  for (const auto& p : out.selection.pairs) {
    const Box& b = boxes[p.region];
    const std::string& color = palette[p.region % palette.size()];
    svg << "<rect class=\"pair\" data-region=\"" << p.region << "\" data-word=\"" << p.word << "\" x=\""
        << b.x * kScale << "\" y=\"" << b.y * kScale << "\" width=\"" << b.w * kScale << "\" height=\""
        << b.h * kScale << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    out.legend.push_back({p.region, words[p.word], p.relevance, color});
  }
  svg << "<text class=\"caption\" x=\"4\" y=\"" << h + 28 << "\">";
  for (std::size_t j = 0; j < words.size(); ++j) {
    if (j) svg << ' ';
    if (word_region[j] >= 0) {
      svg << "<tspan class=\"word selected\" data-word=\"" << j << "\" fill=\""
          << palette[static_cast<std::size_t>(word_region[j]) % palette.size()] << "\" font-weight=\"bold\">"
          << xml_escape(words[j]) << "</tspan>";
    } else {
      svg << "<tspan class=\"word\" fill=\"" << kNeutralColor << "\">" << xml_escape(words[j]) << "</tspan>";
    }
  }
  svg << "</text>\n";
  for (std::size_t e = 0; e < out.legend.size(); ++e) {
    const LegendEntry& l = out.legend[e];
    svg << "<text class=\"legend\" x=\"4\" y=\"" << legend_top + 20 * static_cast<int>(e) << "\" fill=\"" << l.color
        << "\">region " << l.region << ": " << xml_escape(l.word) << " (" << fmt(l.probability, 3) << ")</text>\n";
  }
  svg << "</svg>\n";
  out.svg = svg.str();
  return out;
}

std::string render_curves(const std::string& csv, const std::vector<std::string>& columns) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw Error("render_curves: missing CSV header");
  const auto header = split(line, ',');
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw ParseError("render_curves: row has " + std::to_string(cells.size()) +
                                                        " cells, header has " + std::to_string(header.size()));
    std::vector<double> r;
    for (const auto& c : cells) {
      try {
        r.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw ParseError("render_curves: non-numeric cell \"" + c + "\"");
      }
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw Error("render_curves: no data rows");
  if (columns.empty()) throw Error("render_curves: no columns requested");
  std::vector<std::size_t> idx;
  for (const auto& c : columns) {
    const auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw Error("render_curves: unknown column \"" + c + "\"");
    idx.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& r : rows) {
    xmin = std::min(xmin, r[0]);
    xmax = std::max(xmax, r[0]);
    for (std::size_t c : idx) {
      ymin = std::min(ymin, r[c]);
      ymax = std::max(ymax, r[c]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;

  const double left = 70, top = 20, pw = 480, ph = 280;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };
  const auto& palette = region_palette();

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + pw + 140 << "\" height=\"" << top + ph + 60
      << "\" font-family=\"monospace\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
      << "<line class=\"axis\" x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"#000000\"/>\n"
      << "<line class=\"axis\" x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"#000000\"/>\n"
      << "<text class=\"axis-label x\" x=\"" << left + pw / 2 << "\" y=\"" << top + ph + 40
      << "\" text-anchor=\"middle\">" << xml_escape(header[0]) << "</text>\n"
      << "<text class=\"tick\" x=\"" << left << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
      << fmt(xmin, 2) << "</text>\n"
      << "<text class=\"tick\" x=\"" << left + pw << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
      << fmt(xmax, 2) << "</text>\n"
      << "<text class=\"tick\" x=\"" << left - 6 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << fmt(ymin, 4)
      << "</text>\n"
      << "<text class=\"tick\" x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">"
      << fmt(ymax, 4) << "</text>\n";
  for (std::size_t s = 0; s < idx.size(); ++s) {
    const std::string& color = palette[s % palette.size()];
    svg << "<polyline class=\"series\" data-column=\"" << xml_escape(header[idx[s]]) << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r) svg << ' ';
      svg << fmt(sx(rows[r][0])) << ',' << fmt(sy(rows[r][idx[s]]));
    }
    svg << "\"/>\n"
        << "<text class=\"axis-label y\" x=\"" << left + pw + 10 << "\" y=\"" << top + 14 + 16 * static_cast<double>(s)
        << "\" fill=\"" << color << "\">" << xml_escape(header[idx[s]]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace hieratt
