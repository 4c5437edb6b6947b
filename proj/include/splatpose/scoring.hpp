#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "splatpose/camera.hpp"
#include "splatpose/rays.hpp"

namespace splatpose {

// Per-ray position and orientation scores; each vector sums to m_pixels.
struct ScoreVector {
  Eigen::VectorXd s_p;
  Eigen::VectorXd s_o;
  double m_pixels = 0.0;
};

// Position gamma is in world units, orientation gamma in radians.
struct GammaConfig {
  double gamma_pos = 0.1;
  double gamma_ori = 0.3;

  static GammaConfig defaults(double bbox_extent) {
    return {0.1 * bbox_extent, 0.3};
  }
};

enum class LossKind { kAbsolute, kSquared };

struct ScoreLoss {
  double position = 0.0;
  double orientation = 0.0;
  double total = 0.0;
};

// L = max((P - o) . d, 0), dist = |(o + L d) - P|.
std::pair<double, double> ray_point_distance(const Ray& ray, const Eigen::Vector3d& p);

// theta = arccos(-Q . d / (|Q||d|)), clamped into [0, pi]; zero-length Q is
// an error.
double ray_orientation_angle(const Ray& ray, const Eigen::Vector3d& q);

// Eq-style tanh mapping: a_i = 1 - tanh(d_i/gamma_pos), s_p = a * M/sum(a);
// b_i = 1 - tanh(theta_i/gamma_ori), s_o = b * M/sum(b). Sums use compensated
// summation so results are reduction-order independent within 1e-9.
// m_pixels_override = 0 uses cam.width * cam.height.
ScoreVector gt_scores(const RayBundle& bundle, const Camera& cam,
                      const GammaConfig& cfg, double m_pixels_override = 0.0);

// Mean per-ray deviation, absolute by default (squared behind the flag).
ScoreLoss score_loss(const ScoreVector& pred, const ScoreVector& gt,
                     LossKind kind = LossKind::kAbsolute);

// Flat binary f32 with header (u32 N, u8 kind).
void save_scores(const Eigen::VectorXd& scores, std::uint8_t kind,
                 const std::filesystem::path& path);
Eigen::VectorXd load_scores(const std::filesystem::path& path, std::uint8_t* kind);

}  // namespace splatpose
