#pragma once

#include <optional>
#include <vector>

#include "splatpose/coarse.hpp"
#include "splatpose/image.hpp"
#include "splatpose/matching.hpp"
#include "splatpose/pnp.hpp"
#include "splatpose/rasterizer.hpp"
#include "splatpose/scene.hpp"

namespace splatpose {

struct RefineConfig {
  MatcherConfig matcher;
  RansacConfig ransac;
  double min_lift_alpha = 0.5;
};

// Back-projects the rendered-side pixel of each match through the rendered
// depth map. Matches on background (alpha < min_alpha) or non-positive depth
// are dropped; throws kInsufficientMatches when nothing survives.
std::vector<Correspondence2D3D> lift_matches(
    const std::vector<Correspondence2D2D>& matches, const RenderOutput& rendered,
    const Camera& render_cam, double min_alpha = 0.5);

// render at the coarse pose -> match -> lift -> PnP. Any stage failure (or a
// refined pose that does not improve the inlier reprojection error over the
// coarse pose) returns the coarse pose with refined=false instead of
// erroring the pipeline. External matches, when given, replace the built-in
// matcher.
RefinedPose refine_pose(const Scene& scene, const CoarsePose& coarse,
                        const ImageRgb& query, const PinholeIntrinsics& intrinsics,
                        const RefineConfig& cfg,
                        const std::optional<std::vector<Correspondence2D2D>>&
                            external_matches = std::nullopt);

}  // namespace splatpose
