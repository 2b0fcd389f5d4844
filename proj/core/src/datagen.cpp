#include "mdqf/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mdqf/geometry.hpp"
#include "mdqf/rng.hpp"

namespace mdqf::gen {
namespace {

constexpr double kPlacementIouCap = 0.3;
constexpr int kPlacementRetries = 30;
constexpr double kRgbEdge = 0.08;  // crisp color shapes
constexpr double kTirEdge = 0.30;  // soft thermal blobs

constexpr double kRgbColors[3][3] = {
    {0.85, 0.20, 0.20}, {0.20, 0.80, 0.25}, {0.25, 0.35, 0.90}};
constexpr double kTirLevels[3] = {0.90, 0.75, 0.85};

double smoothstep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// u, v are box-local coordinates in [-1, 1]; returns an inward distance that
// is positive inside the shape and reaches ~1 deep inside.
double inside_measure(int cls, double u, double v) {
  switch (cls) {
    case 0:
      return 1.0 - std::sqrt(u * u + v * v);
    case 1:
      return 1.0 - std::max(std::abs(u), std::abs(v));
    default: {
      // Apex-up triangle: vertices (0,-1), (-1,1), (1,1).
      const double inv_sqrt5 = 1.0 / std::sqrt(5.0);
      return std::min({1.0 - v, (v + 2.0 * u + 1.0) * inv_sqrt5, (v - 2.0 * u + 1.0) * inv_sqrt5});
    }
  }
}

void render_object(img::Image& im, const geom::BBox& box, int cls, const double* color,
                   double edge) {
  const long h = im.height();
  const long w = im.width();
  const long x0 = std::max(0L, static_cast<long>(std::floor((box.cx - box.w / 2) * w)) - 1);
  const long x1 = std::min(w, static_cast<long>(std::ceil((box.cx + box.w / 2) * w)) + 1);
  const long y0 = std::max(0L, static_cast<long>(std::floor((box.cy - box.h / 2) * h)) - 1);
  const long y1 = std::min(h, static_cast<long>(std::ceil((box.cy + box.h / 2) * h)) + 1);
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) {
      const double u = ((static_cast<double>(x) + 0.5) / w - box.cx) / (box.w / 2);
      const double v = ((static_cast<double>(y) + 0.5) / h - box.cy) / (box.h / 2);
      const double a = smoothstep01(inside_measure(cls, u, v) / edge);
      if (a <= 0.0) continue;
      for (long c = 0; c < im.channels(); ++c) {
        double& px = im.planes[static_cast<size_t>(c)](y, x);
        px = (1.0 - a) * px + a * color[c];
      }
    }
  }
}

img::Image rgb_background(Rng& rng, long h, long w) {
  // Bilinear blend of four random corner colors.
  double corners[4][3];
  for (auto& corner : corners)
    for (double& ch : corner) ch = rng.uniform(0.15, 0.45);
  img::Image im = img::Image::zeros(3, h, w);
  for (long y = 0; y < h; ++y) {
    const double fy = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    for (long x = 0; x < w; ++x) {
      const double fx = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
      for (long c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * corners[0][c] + fx * corners[1][c];
        const double bot = (1.0 - fx) * corners[2][c] + fx * corners[3][c];
        im.planes[static_cast<size_t>(c)](y, x) = (1.0 - fy) * top + fy * bot;
      }
    }
  }
  return im;
}

img::Image tir_background(Rng& rng, long h, long w) {
  const double base = rng.uniform(0.10, 0.25);
  const double slope = rng.uniform(-0.05, 0.05);
  img::Image im = img::Image::zeros(1, h, w);
  for (long y = 0; y < h; ++y) {
    const double level = base + slope * (h > 1 ? static_cast<double>(y) / (h - 1) : 0.0);
    for (long x = 0; x < w; ++x) im.planes[0](y, x) = level;
  }
  return im;
}

void add_noise(img::Image& im, Rng& rng, double sigma) {
  for (long c = 0; c < im.channels(); ++c)
    for (long y = 0; y < im.height(); ++y)
      for (long x = 0; x < im.width(); ++x) {
        double& px = im.planes[static_cast<size_t>(c)](y, x);
        px = std::clamp(px + rng.normal(0.0, sigma), 0.0, 1.0);
      }
}

}  // namespace

void validate(const SceneSpec& spec) {
  if (spec.image_h < 8 || spec.image_w < 8) throw std::invalid_argument("SceneSpec: image too small");
  if (spec.min_objects < 0 || spec.max_objects < spec.min_objects) {
    throw std::invalid_argument("SceneSpec: bad object count range");
  }
  if (spec.num_classes < 1 || spec.num_classes > 3) {
    throw std::invalid_argument("SceneSpec: num_classes must be in [1,3]");
  }
  if (std::abs(spec.p_rgb_only + spec.p_tir_only + spec.p_both - 1.0) > 1e-9) {
    throw std::invalid_argument("SceneSpec: visibility probabilities must sum to 1");
  }
  if (spec.p_rgb_only < 0 || spec.p_tir_only < 0 || spec.p_both < 0 || spec.noise < 0) {
    throw std::invalid_argument("SceneSpec: negative probability or noise");
  }
}

data::PairedSample generate_scene(const SceneSpec& spec, long* placement_shortfall) {
  validate(spec);
  Rng root(spec.seed);
  Rng layout = root.derive(1);
  Rng bg_rgb = root.derive(2);
  Rng bg_tir = root.derive(3);
  Rng noise_rgb = root.derive(4);
  Rng noise_tir = root.derive(5);

  data::PairedSample out;
  out.rgb = rgb_background(bg_rgb, spec.image_h, spec.image_w);
  out.tir = tir_background(bg_tir, spec.image_h, spec.image_w);

  const long want =
      layout.uniform_int(static_cast<int>(spec.min_objects), static_cast<int>(spec.max_objects));
  long dropped = 0;
  for (long i = 0; i < want; ++i) {
    geom::BBox box;
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
      box = {layout.uniform(0.15, 0.85), layout.uniform(0.15, 0.85), layout.uniform(0.15, 0.35),
             layout.uniform(0.15, 0.35)};
      double worst = 0.0;
      for (const data::Annotation& a : out.annotations)
        worst = std::max(worst, geom::iou(box, a.box));
      if (worst <= kPlacementIouCap) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      ++dropped;
      continue;
    }
    const int cls = layout.uniform_int(0, static_cast<int>(spec.num_classes) - 1);
    const int vis = layout.categorical({spec.p_rgb_only, spec.p_tir_only, spec.p_both});
    out.annotations.push_back({box, cls, static_cast<data::Visibility>(vis)});
  }
  if (placement_shortfall != nullptr) *placement_shortfall = dropped;

  for (const data::Annotation& a : out.annotations) {
    if (a.visibility != data::Visibility::kTirOnly) {
      render_object(out.rgb, a.box, a.class_id, kRgbColors[a.class_id], kRgbEdge);
    }
    if (a.visibility != data::Visibility::kRgbOnly) {
      const double level[1] = {kTirLevels[a.class_id]};
      render_object(out.tir, a.box, a.class_id, level, kTirEdge);
    }
  }

  add_noise(out.rgb, noise_rgb, spec.noise);
  add_noise(out.tir, noise_tir, spec.noise);
  return out;
}

std::vector<data::PairedSample> generate_dataset(const SceneSpec& spec, long count) {
  validate(spec);
  if (count < 0) throw std::invalid_argument("generate_dataset: negative count");
  std::vector<data::PairedSample> out;
  out.reserve(static_cast<size_t>(count));
  for (long i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = splitmix64(spec.seed ^ splitmix64(0xDA7A5E7ULL + static_cast<uint64_t>(i)));
    out.push_back(generate_scene(s));
  }
  return out;
}

img::Image degrade_contrast(const img::Image& image, double factor) {
  if (factor < 0.0 || factor > 1.0) {
    throw std::invalid_argument("degrade_contrast: factor must be in [0,1]");
  }
  if (factor == 1.0) return image;
  double sum = 0.0;
  long n = 0;
  for (const img::Plane& p : image.planes) {
    sum += p.sum();
    n += p.size();
  }
  const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
  img::Image out = image;
  for (img::Plane& p : out.planes) {
    p = (mean + factor * (p.array() - mean)).matrix();
  }
  return out;
}

}  // namespace mdqf::gen
