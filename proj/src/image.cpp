#include "fundus/image.hpp"

namespace fundus {

FeatureMap image_to_chw(const Image& img) {
  FeatureMap fm(3, img.height, img.width);
  const std::size_t plane = fm.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    fm.data[i] = img.data[i * 3];
    fm.data[plane + i] = img.data[i * 3 + 1];
    fm.data[2 * plane + i] = img.data[i * 3 + 2];
  }
  return fm;
}

Image chw_to_image(const FeatureMap& fm) {
  Image img(fm.height, fm.width);
  const std::size_t plane = fm.plane_size();
  for (std::size_t i = 0; i < plane; ++i) {
    img.data[i * 3] = fm.data[i];
    img.data[i * 3 + 1] = fm.data[plane + i];
    img.data[i * 3 + 2] = fm.data[2 * plane + i];
  }
  return img;
}

}  // namespace fundus
