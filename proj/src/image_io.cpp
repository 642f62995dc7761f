#include "translearn/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <stdexcept>

namespace translearn {

ImageU8 load_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty())
    throw std::runtime_error("failed to read image: " + path);
  ImageU8 img;
  img.h = bgr.rows;
  img.w = bgr.cols;
  img.rgb.resize(static_cast<std::size_t>(img.h) * img.w * 3);
  for (int y = 0; y < img.h; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.w; ++x) {
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

void save_image_png(const std::string& path, const ImageU8& img) {
  cv::Mat bgr(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.w; ++x) {
      row[x][2] = img.at(y, x, 0);
      row[x][1] = img.at(y, x, 1);
      row[x][0] = img.at(y, x, 2);
    }
  }
  if (!cv::imwrite(path, bgr, {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw std::runtime_error("failed to write image: " + path);
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
  if (img.h == out_h && img.w == out_w) return img;
  cv::Mat src(img.h, img.w, CV_8UC3,
              const_cast<unsigned char*>(img.rgb.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  ImageU8 out;
  out.h = out_h;
  out.w = out_w;
  out.rgb.assign(dst.data, dst.data + static_cast<std::size_t>(out_h) * out_w * 3);
  return out;
}

Tensor normalize_image(const ImageU8& img) {
  Tensor t({3, img.h, img.w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t[(static_cast<std::int64_t>(c) * img.h + y) * img.w + x] =
            (static_cast<double>(img.at(y, x, c)) / 255.0 - 0.5) / 0.5;
  return t;
}

ImageU8 denormalize_image(const Tensor& chw) {
  if (chw.ndim() != 3 || chw.dim(0) != 3)
    throw std::invalid_argument("denormalize_image: expected [3,H,W]");
  ImageU8 img;
  img.h = chw.dim(1);
  img.w = chw.dim(2);
  img.rgb.resize(static_cast<std::size_t>(img.h) * img.w * 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        double v = chw[(static_cast<std::int64_t>(c) * img.h + y) * img.w + x];
        double raw = (v * 0.5 + 0.5) * 255.0;
        raw = std::min(255.0, std::max(0.0, std::round(raw)));
        img.at(y, x, c) = static_cast<unsigned char>(raw);
      }
  return img;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("stack_images: empty list");
  const int C = images[0].dim(0), H = images[0].dim(1), W = images[0].dim(2);
  Tensor out({static_cast<int>(images.size()), C, H, W});
  const std::int64_t per = static_cast<std::int64_t>(C) * H * W;
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].size() != per)
      throw std::invalid_argument("stack_images: inconsistent image shapes");
    std::copy(images[b].data(), images[b].data() + per,
              out.data() + static_cast<std::int64_t>(b) * per);
  }
  return out;
}

}  // namespace translearn
