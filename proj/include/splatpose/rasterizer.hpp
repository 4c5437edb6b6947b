#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <vector>

#include "splatpose/camera.hpp"
#include "splatpose/scene.hpp"

namespace splatpose {

struct Projected2D {
  Eigen::Vector2d mean2d;
  Eigen::Matrix2d cov2d;  // positive definite after the low-pass term
  double depth = 0.0;     // along the viewing axis, > 0
};

struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<double> color;  // H*W*3 row-major, channel fastest, in [0,1]
  std::vector<double> depth;  // H*W expected depth, 0 where alpha is 0
  std::vector<double> alpha;  // H*W accumulated opacity in [0,1]

  double color_at(int row, int col, int ch) const {
    return color[(static_cast<std::size_t>(row) * width + col) * 3 + ch];
  }
  double depth_at(int row, int col) const {
    return depth[static_cast<std::size_t>(row) * width + col];
  }
  double alpha_at(int row, int col) const {
    return alpha[static_cast<std::size_t>(row) * width + col];
  }
};

// Sigma~ = J V Sigma V^T J^T with the affine Jacobian J of perspective
// projection at the camera-frame mean; 0.3 px^2 is added to both diagonal
// entries. Returns nullopt when the depth is <= near_clip.
std::optional<Projected2D> project_gaussian(const GaussianPrimitive& p,
                                            const Camera& cam,
                                            double near_clip);

// Per-pixel exact alpha compositing over all non-culled Gaussians in
// ascending depth order (3-sigma bounding-box scan, no tiling).
// alpha_i = opacity_i * exp(-0.5 d^T Sigma~^-1 d), clipped to [0, 0.99];
// contributions below 1/255 are skipped. Near clip is 0.01 * scene extent.
RenderOutput render(const Scene& scene, const Camera& cam);

// Flat binary f32 little-endian with an 8-byte header (u32 height, u32 width).
void save_depth_map(const RenderOutput& out, const std::filesystem::path& path);
std::vector<float> load_depth_map(const std::filesystem::path& path,
                                  int* height, int* width);

}  // namespace splatpose
