#include "hieratt/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "hieratt/error.hpp"
#include "hieratt/init.hpp"
#include "hieratt/ops.hpp"

namespace hieratt {

Image::Image(std::size_t width, std::size_t height)
    : width_(width), height_(height), pixels_(Shape{3, height, width}) {}

Image::Image(Tensor pixels) {
  if (pixels.rank() != 3 || pixels.dim(0) != 3) {
    throw DimensionError("image: expected [3, H, W], got " + shape_string(pixels.shape()));
  }
  height_ = pixels.dim(1);
  width_ = pixels.dim(2);
  for (double& v : pixels.storage()) v = std::clamp(v, 0.0, 1.0);
  pixels_ = std::move(pixels);
}

void Image::set(std::size_t c, std::size_t y, std::size_t x, double v) {
  pixels_[(c * height_ + y) * width_ + x] = std::clamp(v, 0.0, 1.0);
}

Image crop_resize(const Image& img, const Box& box, std::size_t out_w, std::size_t out_h) {
  Image out(out_w, out_h);
  const double sx = static_cast<double>(box.w) / static_cast<double>(out_w);
  const double sy = static_cast<double>(box.h) / static_cast<double>(out_h);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<double>(box.h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, box.h - 1);
    const double wy = fy - y0;
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<double>(box.w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, box.w - 1);
      const double wx = fx - x0;
      for (std::size_t c = 0; c < 3; ++c) {
        auto px = [&](int yy, int xx) {
          return img.at(c, static_cast<std::size_t>(box.y + yy), static_cast<std::size_t>(box.x + xx));
        };
        const double top = px(y0, x0) * (1.0 - wx) + px(y0, x1) * wx;
        const double bottom = px(y1, x0) * (1.0 - wx) + px(y1, x1) * wx;
        out.set(c, oy, ox, top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

std::size_t EncoderConfig::grid_side() const {
  std::size_t side = canvas;
  for (std::size_t i = 0; i < channels.size(); ++i) side = (side + 2 * (kernel / 2) - kernel) / 2 + 1;
  return side;
}

VisualEncoder::VisualEncoder(ParamStore& store, const std::string& prefix, EncoderConfig cfg, bool region_head,
                             SplitMix64& rng)
    : cfg_(std::move(cfg)) {
  if (cfg_.channels.empty() || cfg_.kernel == 0) throw Error("encoder: needs at least one conv block");
  std::size_t in = 3;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const std::size_t out = cfg_.channels[i];
    const std::size_t fan_in = in * cfg_.kernel * cfg_.kernel;
    const std::string tag = prefix + ".conv" + std::to_string(i);
    // He-uniform suits the ELU blocks.
    conv_w_.push_back(&store.add(tag + ".w", uniform_tensor({out, in, cfg_.kernel, cfg_.kernel},
                                                            std::sqrt(6.0 / static_cast<double>(fan_in)), rng)));
    conv_b_.push_back(&store.add(tag + ".b", Tensor(Shape{out})));
    in = out;
  }
  if (region_head) {
    proj_w_ = &store.add(prefix + ".region.w", glorot_tensor({in, cfg_.region_dim}, in, cfg_.region_dim, rng));
    proj_b_ = &store.add(prefix + ".region.b", Tensor(Shape{cfg_.region_dim}));
  }
}

Var VisualEncoder::encode_image(Tape& tape, const Image& img) const {
  if (img.width() != cfg_.canvas || img.height() != cfg_.canvas) {
    throw DimensionError("encode_image: expected " + std::to_string(cfg_.canvas) + "x" + std::to_string(cfg_.canvas) +
                         " image, got " + std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  Var x = tape.constant(img.pixels());
  for (std::size_t i = 0; i < conv_w_.size(); ++i) {
    x = elu(conv2d(x, tape.param(*conv_w_[i]), tape.param(*conv_b_[i]), 2, cfg_.kernel / 2));
  }
  const Shape& s = x.shape();
  return reshape(x, Shape{s[0], s[1] * s[2]});
}

void VisualEncoder::validate_box(const Image& img, const Box& box) const {
  const bool inside = box.x >= 0 && box.y >= 0 && box.x + box.w <= static_cast<int>(img.width()) &&
                      box.y + box.h <= static_cast<int>(img.height());
  if (!inside || box.w < cfg_.min_crop || box.h < cfg_.min_crop) {
    throw RegionError("region box (" + std::to_string(box.x) + ", " + std::to_string(box.y) + ", " +
                      std::to_string(box.w) + ", " + std::to_string(box.h) + ") is degenerate or outside the " +
                      std::to_string(img.width()) + "x" + std::to_string(img.height()) + " canvas");
  }
}

Var VisualEncoder::project_grid(Tape& tape, Var grid) const {
  if (!proj_w_) throw Error("encoder: no region head configured");
  Var pooled = reshape(pool_mean(grid), Shape{1, cfg_.visual_channels()});
  return add(matmul(pooled, tape.param(*proj_w_)), tape.param(*proj_b_));
}

Var VisualEncoder::encode_region(Tape& tape, const Image& img, const Box& box) const {
  validate_box(img, box);
  return project_grid(tape, encode_image(tape, crop_resize(img, box, cfg_.canvas, cfg_.canvas)));
}

Var VisualEncoder::encode_regions(Tape& tape, const Image& img, const std::vector<Box>& boxes) const {
  if (boxes.empty()) throw RegionError("encode_regions: no boxes");
  std::vector<Var> rows;
  rows.reserve(boxes.size());
  for (const Box& b : boxes) rows.push_back(encode_region(tape, img, b));
  return rows.size() == 1 ? rows.front() : concat(rows, 0);
}

std::size_t VisualEncoder::count(const EncoderConfig& cfg, bool region_head) {
  std::size_t n = 0, in = 3;
  for (std::size_t out : cfg.channels) {
    n += out * in * cfg.kernel * cfg.kernel + out;
    in = out;
  }
  if (region_head) n += in * cfg.region_dim + cfg.region_dim;
  return n;
}

}  // namespace hieratt
