#include "mdqf/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>

namespace mdqf::img {

Image Image::zeros(long channels, long h, long w) {
  Image out;
  out.planes.assign(static_cast<size_t>(channels), Plane::Zero(h, w));
  return out;
}

void save_png(const Image& image, const std::string& path) {
  if (image.channels() != 1 && image.channels() != 3)
    throw std::invalid_argument("save_png: expected 1 or 3 channels");
  const int h = static_cast<int>(image.height());
  const int w = static_cast<int>(image.width());
  cv::Mat mat(h, w, image.channels() == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto q = [&](int c) {
        const double v = std::clamp(image.planes[c](y, x), 0.0, 1.0);
        return static_cast<unsigned char>(std::lround(v * 255.0));
      };
      if (image.channels() == 1) {
        mat.at<unsigned char>(y, x) = q(0);
      } else {
        // OpenCV stores BGR.
        mat.at<cv::Vec3b>(y, x) = cv::Vec3b(q(2), q(1), q(0));
      }
    }
  }
  if (!cv::imwrite(path, mat)) throw std::runtime_error("save_png: failed to write " + path);
}

Image load_png(const std::string& path) {
  cv::Mat mat = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw std::runtime_error("load_png: failed to read " + path);
  if (mat.type() != CV_8UC1 && mat.type() != CV_8UC3)
    throw std::runtime_error("load_png: unsupported pixel format in " + path);
  const long ch = mat.type() == CV_8UC1 ? 1 : 3;
  Image out = Image::zeros(ch, mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      if (ch == 1) {
        out.planes[0](y, x) = mat.at<unsigned char>(y, x) / 255.0;
      } else {
        const cv::Vec3b px = mat.at<cv::Vec3b>(y, x);
        out.planes[0](y, x) = px[2] / 255.0;
        out.planes[1](y, x) = px[1] / 255.0;
        out.planes[2](y, x) = px[0] / 255.0;
      }
    }
  }
  return out;
}

}  // namespace mdqf::img
