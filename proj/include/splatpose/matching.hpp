#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "splatpose/image.hpp"

namespace splatpose {

struct Correspondence2D2D {
  Eigen::Vector2d query_px;
  Eigen::Vector2d rendered_px;
  double score = 0.0;  // match confidence in [0, 1]
};

struct MatcherConfig {
  int max_corners = 800;
  double quality_level = 0.01;   // fraction of the strongest corner response
  int nms_radius = 4;
  int patch_radius = 5;          // 11x11 zero-mean NCC descriptors
  double ratio = 0.9;            // on NCC distances (1 - similarity)
  double min_ncc = 0.5;
  bool subpixel = true;
  int min_matches = 6;
};

// Shi-Tomasi corners (min-eigenvalue response, non-max suppression,
// quadratic subpixel peak), strongest first.
std::vector<Eigen::Vector2d> shi_tomasi_corners(const ImageGray& img,
                                                const MatcherConfig& cfg);

// Corners on both images, zero-mean NCC descriptors, mutual nearest
// neighbour with ratio test, then Lucas-Kanade subpixel alignment of the
// rendered-side point. Throws kInsufficientMatches below cfg.min_matches.
std::vector<Correspondence2D2D> match_keypoints(const ImageGray& query,
                                                const ImageGray& rendered,
                                                const MatcherConfig& cfg);

// CSV columns: qu,qv,ru,rv,score.
void save_correspondences_csv(const std::vector<Correspondence2D2D>& matches,
                              const std::filesystem::path& path);
std::vector<Correspondence2D2D> load_correspondences_csv(
    const std::filesystem::path& path);

}  // namespace splatpose
