#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hieratt {

/// Corner-form box (x1, y1, x2, y2).
struct CornerBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const CornerBox&) const = default;
};

struct CocoObject {
  CornerBox box;
  std::int64_t category_id = 0;
  std::string category;  // empty when the file has no categories array
};

/// One image with every caption and instance annotation that references it.
struct CocoSample {
  std::int64_t image_id = 0;
  std::string file_name;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::string> captions;
  std::vector<CocoObject> objects;
};

/// Reads a COCO-style annotation file. Captions-style annotations carry
/// "caption"; instances-style carry "bbox" [x, y, w, h] and "category_id".
/// Samples come back in the order of the "images" array.
/// Throws ParseError on malformed JSON and IntegrityError naming the id when
/// an annotation references a missing image.
std::vector<CocoSample> parse_coco_annotations(const std::string& text);
std::vector<CocoSample> load_coco_annotations(const std::string& path);

CornerBox bbox_to_corners(double x, double y, double w, double h);

}  // namespace hieratt
