#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hieratt/encoder.hpp"

namespace hieratt {

/// 8-bit RGB PNG encoding of an image (values rounded to k/255).
std::vector<std::uint8_t> encode_png(const Image& img);
/// Decodes any PNG libpng understands into RGB scaled to [0, 1]. Throws ParseError.
Image decode_png(const std::vector<std::uint8_t>& bytes);

Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws ParseError on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace hieratt
