#pragma once

#include <string>
#include <vector>

#include "hieratt/autodiff.hpp"

namespace hieratt {

/// RGB raster, 3 x height x width, values clamped to [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height);
  /// Takes ownership of a [3, H, W] tensor; values are clamped into [0, 1].
  explicit Image(Tensor pixels);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  const Tensor& pixels() const { return pixels_; }

  double at(std::size_t c, std::size_t y, std::size_t x) const { return pixels_[(c * height_ + y) * width_ + x]; }
  void set(std::size_t c, std::size_t y, std::size_t x, double v);

  bool operator==(const Image& other) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  Tensor pixels_;
};

/// Pixel box: top-left corner plus extent.
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int area() const { return w * h; }
  bool operator==(const Box&) const = default;
};

/// Bilinear resample of `box` to an out_w x out_h raster. Samples are taken at
/// pixel centres and clamped to the box, so identical box contents always
/// produce identical output.
Image crop_resize(const Image& img, const Box& box, std::size_t out_w, std::size_t out_h);

struct EncoderConfig {
  std::size_t canvas = 64;
  /// Output channels of the stride-2 conv blocks; the last entry is V.
  std::vector<std::size_t> channels{8, 16, 32, 64};
  std::size_t kernel = 3;
  std::size_t region_dim = 64;
  int min_crop = 4;

  std::size_t visual_channels() const { return channels.back(); }
  std::size_t grid_side() const;
  std::size_t grid_cells() const { return grid_side() * grid_side(); }

  bool operator==(const EncoderConfig&) const = default;
};

/// Compact convolutional image encoder: stride-2 3x3 conv blocks with ELU,
/// producing a V x (h*w) feature grid. With a region head it also maps a box
/// to a pooled, linearly projected region vector.
class VisualEncoder {
 public:
  VisualEncoder(ParamStore& store, const std::string& prefix, EncoderConfig cfg, bool region_head, SplitMix64& rng);

  const EncoderConfig& config() const { return cfg_; }
  bool has_region_head() const { return proj_w_ != nullptr; }

  /// Feature grid [V, h*w]. Throws DimensionError when the image is not canvas x canvas.
  Var encode_image(Tape& tape, const Image& img) const;
  /// Region vector [1, region_dim]. Throws RegionError for degenerate or out-of-bounds boxes.
  Var encode_region(Tape& tape, const Image& img, const Box& box) const;
  /// Region vectors for several boxes stacked as rows: [n, region_dim].
  Var encode_regions(Tape& tape, const Image& img, const std::vector<Box>& boxes) const;
  /// Pooled projection of an already computed grid: [1, region_dim].
  Var project_grid(Tape& tape, Var grid) const;

  void validate_box(const Image& img, const Box& box) const;

  static std::size_t count(const EncoderConfig& cfg, bool region_head);

 private:
  EncoderConfig cfg_;
  std::vector<Parameter*> conv_w_;
  std::vector<Parameter*> conv_b_;
  Parameter* proj_w_ = nullptr;
  Parameter* proj_b_ = nullptr;
};

}  // namespace hieratt
