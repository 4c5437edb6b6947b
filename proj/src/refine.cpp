#include "splatpose/refine.hpp"

#include <algorithm>
#include <cmath>

#include "splatpose/error.hpp"

namespace splatpose {

namespace {

// Bilinear depth lookup restricted to valid pixels (alpha above threshold,
// positive depth); weights renormalize over the valid neighbours.
std::optional<double> sample_depth(const RenderOutput& rendered, double u, double v,
                                   double min_alpha) {
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  const double fu = u - c0;
  const double fv = v - r0;
  double weight_sum = 0.0;
  double depth_sum = 0.0;
  for (int dr = 0; dr <= 1; ++dr) {
    for (int dc = 0; dc <= 1; ++dc) {
      const int r = r0 + dr;
      const int c = c0 + dc;
      if (r < 0 || r >= rendered.height || c < 0 || c >= rendered.width) continue;
      if (rendered.alpha_at(r, c) < min_alpha) continue;
      const double d = rendered.depth_at(r, c);
      if (!(d > 0.0)) continue;
      const double w = (dr ? fv : 1.0 - fv) * (dc ? fu : 1.0 - fu);
      weight_sum += w;
      depth_sum += w * d;
    }
  }
  if (weight_sum < 1e-9) return std::nullopt;
  return depth_sum / weight_sum;
}

}  // namespace

std::vector<Correspondence2D3D> lift_matches(
    const std::vector<Correspondence2D2D>& matches, const RenderOutput& rendered,
    const Camera& render_cam, double min_alpha) {
  std::vector<Correspondence2D3D> lifted;
  lifted.reserve(matches.size());
  for (const auto& m : matches) {
    const double u = m.rendered_px.x();
    const double v = m.rendered_px.y();
    if (u < 0 || u > rendered.width - 1 || v < 0 || v > rendered.height - 1) {
      continue;
    }
    const auto depth = sample_depth(rendered, u, v, min_alpha);
    if (!depth) continue;
    Correspondence2D3D c;
    c.query_px = m.query_px;
    c.world_point = render_cam.backproject_pixel(u, v, *depth);
    lifted.push_back(std::move(c));
  }
  if (lifted.empty()) {
    throw Error(ErrorCode::kInsufficientMatches,
                "all matches fell on background or invalid depth");
  }
  return lifted;
}

RefinedPose refine_pose(const Scene& scene, const CoarsePose& coarse,
                        const ImageRgb& query, const PinholeIntrinsics& intrinsics,
                        const RefineConfig& cfg,
                        const std::optional<std::vector<Correspondence2D2D>>&
                            external_matches) {
  RefinedPose fallback;
  fallback.rotation = coarse.rotation;
  fallback.position = coarse.position;
  fallback.refined = false;

  try {
    Camera render_cam;
    render_cam.fx = intrinsics.fx;
    render_cam.fy = intrinsics.fy;
    render_cam.cx = intrinsics.cx;
    render_cam.cy = intrinsics.cy;
    render_cam.width = intrinsics.width;
    render_cam.height = intrinsics.height;
    render_cam.rotation = coarse.rotation;
    render_cam.position = coarse.position;

    const RenderOutput rendered = render(scene, render_cam);

    std::vector<Correspondence2D2D> matches;
    if (external_matches) {
      matches = *external_matches;
      if (static_cast<int>(matches.size()) < cfg.matcher.min_matches) {
        throw Error(ErrorCode::kInsufficientMatches, "too few external matches");
      }
    } else {
      matches = match_keypoints(to_gray(query), to_gray(image_from_render(rendered)),
                                cfg.matcher);
    }

    const auto lifted = lift_matches(matches, rendered, render_cam, cfg.min_lift_alpha);

    PosePrior prior{coarse.rotation, coarse.position};
    RefinedPose refined = solve_pnp_ransac(lifted, intrinsics, cfg.ransac, prior);

    // Keep the coarse pose when refinement does not improve the reprojection
    // error on the inlier set PnP settled on.
    std::vector<Correspondence2D3D> inlier_set;
    for (const auto& c : lifted) {
      const Camera probe{intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy,
                         intrinsics.width, intrinsics.height, refined.rotation,
                         refined.position};
      const Eigen::Vector3d uvd = probe.project_point(c.world_point);
      if (uvd.z() > 0.0 &&
          std::hypot(uvd.x() - c.query_px.x(), uvd.y() - c.query_px.y()) <
              cfg.ransac.inlier_threshold_px) {
        inlier_set.push_back(c);
      }
    }
    if (!inlier_set.empty()) {
      const double coarse_err = mean_reprojection_error(
          coarse.rotation, coarse.position, inlier_set, intrinsics);
      const double refined_err = mean_reprojection_error(
          refined.rotation, refined.position, inlier_set, intrinsics);
      if (refined_err > coarse_err) {
        fallback.inlier_count = refined.inlier_count;
        fallback.inlier_ratio = refined.inlier_ratio;
        fallback.mean_reprojection_error = coarse_err;
        return fallback;
      }
    }
    return refined;
  } catch (const Error&) {
    return fallback;
  }
}

}  // namespace splatpose
