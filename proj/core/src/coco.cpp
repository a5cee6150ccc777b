#include "hieratt/coco.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hieratt/error.hpp"

namespace hieratt {

CornerBox bbox_to_corners(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }

std::vector<CocoSample> parse_coco_annotations(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("coco: malformed JSON");
  if (!j.is_object() || !j.contains("images") || !j["images"].is_array() || !j.contains("annotations") ||
      !j["annotations"].is_array()) {
    throw ParseError("coco: expected top-level \"images\" and \"annotations\" arrays");
  }
  try {
    std::map<std::int64_t, std::string> categories;
    if (j.contains("categories")) {
      for (const auto& c : j["categories"]) categories[c.at("id").get<std::int64_t>()] = c.value("name", "");
    }
    std::vector<CocoSample> samples;
    std::map<std::int64_t, std::size_t> index;
    for (const auto& img : j["images"]) {
      CocoSample s;
      s.image_id = img.at("id").get<std::int64_t>();
      s.file_name = img.value("file_name", "");
      s.width = img.value("width", std::int64_t{0});
      s.height = img.value("height", std::int64_t{0});
      if (!index.emplace(s.image_id, samples.size()).second) {
        throw IntegrityError("coco: duplicate image id " + std::to_string(s.image_id));
      }
      samples.push_back(std::move(s));
    }
    for (const auto& a : j["annotations"]) {
      const std::int64_t id = a.at("image_id").get<std::int64_t>();
      auto it = index.find(id);
      if (it == index.end()) {
        throw IntegrityError("coco: annotation references missing image_id " + std::to_string(id));
      }
      CocoSample& s = samples[it->second];
      if (a.contains("caption")) s.captions.push_back(a["caption"].get<std::string>());
      if (a.contains("bbox")) {
        const auto& b = a["bbox"];
        if (!b.is_array() || b.size() != 4) throw ParseError("coco: bbox must hold 4 numbers");
        CocoObject o;
        o.box = bbox_to_corners(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>());
        o.category_id = a.value("category_id", std::int64_t{0});
        auto c = categories.find(o.category_id);
        if (c != categories.end()) o.category = c->second;
        s.objects.push_back(std::move(o));
      }
    }
    return samples;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("coco: ") + e.what());
  }
}

std::vector<CocoSample> load_coco_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_coco_annotations(ss.str());
}

}  // namespace hieratt
