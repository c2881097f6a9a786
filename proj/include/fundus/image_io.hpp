#pragma once

#include <string>

#include "fundus/image.hpp"

namespace fundus::ingest {

// Decodes an 8- or 16-bit RGB PNG or an RGB JPEG; values scaled to [0,1]
// (8-bit: v/255, 16-bit: v/65535). Grayscale or alpha inputs are rejected.
Image load_image(const std::string& uri);

// 8-bit RGB PNG, deterministic bytes for identical pixel content.
void save_png(const std::string& path, const Image& img);

}  // namespace fundus::ingest
