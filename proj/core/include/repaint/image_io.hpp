#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "repaint/tensor.hpp"

namespace repaint {

// 8-bit image, interleaved row-major; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;

  static ImageU8 make(int w, int h, int c) {
    return {w, h, c, std::vector<uint8_t>(static_cast<size_t>(w) * h * c, 0)};
  }
  uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// PNG decode with normalization to 8-bit gray or RGB (palette expanded,
// 16-bit stripped, alpha dropped). InputError names the path on failure.
ImageU8 read_png(const std::string& path);
void write_png(const std::string& path, const ImageU8& img);

ImageU8 resize_bilinear(const ImageU8& img, int out_w, int out_h);

// [3,H,W] in [0,1]; gray inputs are replicated across channels.
Tensor image_to_unit(const ImageU8& img, DType dt = DType::F32);

}  // namespace repaint
