#include "splatpose/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

constexpr double kLowPass = 0.3;        // px^2 added to the 2D covariance
constexpr double kAlphaClip = 0.99;
constexpr double kAlphaCutoff = 1.0 / 255.0;

}  // namespace

std::optional<Projected2D> project_gaussian(const GaussianPrimitive& p,
                                            const Camera& cam,
                                            double near_clip) {
  const Eigen::Vector3d t = cam.to_camera(p.mean);
  const double depth = -t.z();
  if (depth <= near_clip) {
    return std::nullopt;
  }

  // u = cx + fx*tx/d, v = cy - fy*ty/d with d = -tz.
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / depth, 0.0, cam.fx * t.x() / (depth * depth),
      0.0, -cam.fy / depth, -cam.fy * t.y() / (depth * depth);

  const Eigen::Matrix3d view_rot = cam.rotation.transpose();
  const Eigen::Matrix3d cov_cam = view_rot * covariance(p) * view_rot.transpose();
  Eigen::Matrix2d cov2d = jac * cov_cam * jac.transpose();
  cov2d(0, 0) += kLowPass;
  cov2d(1, 1) += kLowPass;

  Projected2D out;
  out.mean2d = {cam.cx + cam.fx * t.x() / depth, cam.cy - cam.fy * t.y() / depth};
  out.cov2d = 0.5 * (cov2d + cov2d.transpose());
  out.depth = depth;
  return out;
}

RenderOutput render(const Scene& scene, const Camera& cam) {
  const int w = cam.width;
  const int h = cam.height;
  RenderOutput out;
  out.width = w;
  out.height = h;
  const std::size_t npix = static_cast<std::size_t>(w) * h;
  out.color.assign(npix * 3, 0.0);
  out.depth.assign(npix, 0.0);
  out.alpha.assign(npix, 0.0);
  if (npix == 0) return out;

  struct Splat {
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d cov_inv;
    double depth;
    double radius;
    double opacity;
    Eigen::Vector3d color;
  };

  const double near_clip = 0.01 * scene.bbox_extent();
  std::vector<Splat> splats;
  splats.reserve(scene.size());
  for (const auto& p : scene.primitives()) {
    const auto proj = project_gaussian(p, cam, near_clip);
    if (!proj) continue;
    const double det = proj->cov2d.determinant();
    if (!(det > 0.0)) continue;
    Splat s;
    s.mean2d = proj->mean2d;
    s.cov_inv = proj->cov2d.inverse();
    s.depth = proj->depth;
    // Largest eigenvalue of the 2x2 covariance bounds the 3-sigma footprint.
    const double mid = 0.5 * (proj->cov2d(0, 0) + proj->cov2d(1, 1));
    const double disc = std::sqrt(std::max(
        0.0, mid * mid - det));
    s.radius = 3.0 * std::sqrt(std::max(1e-12, mid + disc));
    s.opacity = p.opacity;
    s.color = p.color_dc;
    splats.push_back(std::move(s));
  }

  std::vector<std::size_t> order(splats.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return splats[a].depth < splats[b].depth;
  });

  std::vector<double> transmittance(npix, 1.0);
  std::vector<double> depth_num(npix, 0.0);
  std::vector<int> contributors(npix, 0);
  std::vector<double> sole_depth(npix, 0.0);

  for (const std::size_t idx : order) {
    const Splat& s = splats[idx];
    const int col0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - s.radius)));
    const int col1 = std::min(w - 1, static_cast<int>(std::floor(s.mean2d.x() + s.radius)));
    const int row0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - s.radius)));
    const int row1 = std::min(h - 1, static_cast<int>(std::floor(s.mean2d.y() + s.radius)));
    for (int row = row0; row <= row1; ++row) {
      for (int col = col0; col <= col1; ++col) {
        const Eigen::Vector2d d(col - s.mean2d.x(), row - s.mean2d.y());
        const double q = d.dot(s.cov_inv * d);
        if (q < 0.0) continue;
        double a = s.opacity * std::exp(-0.5 * q);
        if (a < kAlphaCutoff) continue;
        a = std::min(a, kAlphaClip);
        const std::size_t pix = static_cast<std::size_t>(row) * w + col;
        const double weight = a * transmittance[pix];
        out.color[pix * 3 + 0] += s.color.x() * weight;
        out.color[pix * 3 + 1] += s.color.y() * weight;
        out.color[pix * 3 + 2] += s.color.z() * weight;
        out.alpha[pix] += weight;
        depth_num[pix] += s.depth * weight;
        contributors[pix] += 1;
        sole_depth[pix] = s.depth;
        transmittance[pix] *= (1.0 - a);
      }
    }
  }

  for (std::size_t pix = 0; pix < npix; ++pix) {
    if (contributors[pix] == 1) {
      // A pixel covered by exactly one Gaussian reports its depth exactly.
      out.depth[pix] = sole_depth[pix];
    } else if (out.alpha[pix] > 0.0) {
      out.depth[pix] = depth_num[pix] / out.alpha[pix];
    }
  }
  return out;
}

void save_depth_map(const RenderOutput& out, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  const std::uint32_t hh = static_cast<std::uint32_t>(out.height);
  const std::uint32_t ww = static_cast<std::uint32_t>(out.width);
  f.write(reinterpret_cast<const char*>(&hh), 4);
  f.write(reinterpret_cast<const char*>(&ww), 4);
  std::vector<float> buf(out.depth.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(out.depth[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) {
    throw Error(ErrorCode::kIo, "write failed: " + path.string());
  }
}

std::vector<float> load_depth_map(const std::filesystem::path& path,
                                  int* height, int* width) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::uint32_t hh = 0, ww = 0;
  f.read(reinterpret_cast<char*>(&hh), 4);
  f.read(reinterpret_cast<char*>(&ww), 4);
  if (!f) {
    throw Error(ErrorCode::kFormat, "truncated depth map header");
  }
  std::vector<float> buf(static_cast<std::size_t>(hh) * ww);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) {
    throw Error(ErrorCode::kFormat, "truncated depth map payload");
  }
  if (height) *height = static_cast<int>(hh);
  if (width) *width = static_cast<int>(ww);
  return buf;
}

}  // namespace splatpose
