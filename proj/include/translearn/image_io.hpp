#pragma once
// 8-bit image loading/saving/resizing.  This is the only module that touches
// OpenCV; everything else works on ImageU8 buffers or normalized tensors.

#include <string>
#include <vector>

#include "translearn/tensor.hpp"

namespace translearn {

struct ImageU8 {
  int h = 0, w = 0;
  std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel

  unsigned char& at(int y, int x, int c) {
    return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
  unsigned char at(int y, int x, int c) const {
    return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
};

ImageU8 load_image(const std::string& path);
void save_image_png(const std::string& path, const ImageU8& img);
ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w);

// (raw/255 - 0.5) / 0.5 -> [-1, 1], laid out [3, H, W].
Tensor normalize_image(const ImageU8& img);
// Inverse of normalize_image with round-to-nearest 8-bit quantization.
ImageU8 denormalize_image(const Tensor& chw);

// Stack per-image [3,H,W] tensors into one [B,3,H,W] batch.
Tensor stack_images(const std::vector<Tensor>& images);

}  // namespace translearn
