#pragma once

#include <cstddef>
#include <vector>

namespace fundus {

// RGB image, row-major HWC, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // height * width * 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.f) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
};

// Planar feature map, CHW.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // channels * height * width

  FeatureMap() = default;
  FeatureMap(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, 0.f) {}

  std::size_t plane_size() const {
    return static_cast<std::size_t>(height) * width;
  }
  float* channel(int c) { return data.data() + c * plane_size(); }
  const float* channel(int c) const { return data.data() + c * plane_size(); }
};

FeatureMap image_to_chw(const Image& img);
Image chw_to_image(const FeatureMap& fm);

}  // namespace fundus
