#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mdqf::img {

using Plane = Eigen::MatrixXd;

// Planar float image, values in [0,1]. RGB uses 3 planes (r, g, b), thermal 1.
struct Image {
  std::vector<Plane> planes;

  long height() const { return planes.empty() ? 0 : planes[0].rows(); }
  long width() const { return planes.empty() ? 0 : planes[0].cols(); }
  long channels() const { return static_cast<long>(planes.size()); }

  static Image zeros(long channels, long h, long w);
};

// 8-bit PNG round trip. save quantizes round(v * 255); load returns v / 255,
// so save(load(p)) reproduces the pixel content exactly.
void save_png(const Image& image, const std::string& path);
Image load_png(const std::string& path);

}  // namespace mdqf::img
