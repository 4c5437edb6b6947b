#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "splatpose/camera.hpp"
#include "splatpose/rays.hpp"
#include "splatpose/scoring.hpp"

namespace splatpose {

// Image feature grid: one C-dim row per pixel, row index = i*width + j.
struct FeatureMap {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd data;  // M x C

  int pixel_count() const { return width * height; }
  int channels() const { return static_cast<int>(data.cols()); }
};

// Header (u32 H_f, u32 W_f, u32 C) + row-major f32 little-endian.
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const FeatureMap& fmap, const std::filesystem::path& path);

enum class AttentionHead { kPosition, kOrientation };

// Ray-embedding MLP (two tanh hidden layers over Fourier-embedded ray
// coordinates) plus one query/key projection pair per score branch.
struct AttentionScorer {
  int feature_dim = 0;
  int hidden_dim = 0;
  int fourier_bands = 0;

  Eigen::MatrixXd w1, w2, w3;  // input_dim x h, h x h, h x C
  Eigen::MatrixXd b1, b2, b3;  // 1 x h, 1 x h, 1 x C
  Eigen::MatrixXd wq_pos, wk_pos, wq_ori, wk_ori;  // C x C

  int input_dim() const { return 6 + 12 * fourier_bands; }

  static AttentionScorer init(int feature_dim, int hidden_dim, int fourier_bands,
                              std::uint64_t seed);

  template <typename F>
  void for_each_parameter(F&& fn) {
    fn("w1", w1); fn("b1", b1);
    fn("w2", w2); fn("b2", b2);
    fn("w3", w3); fn("b3", b3);
    fn("wq_pos", wq_pos); fn("wk_pos", wk_pos);
    fn("wq_ori", wq_ori); fn("wk_ori", wk_ori);
  }
  template <typename F>
  void for_each_parameter(F&& fn) const {
    const_cast<AttentionScorer*>(this)->for_each_parameter(
        [&](const char* name, Eigen::MatrixXd& m) {
          fn(name, static_cast<const Eigen::MatrixXd&>(m));
        });
  }
};

void save_checkpoint(const AttentionScorer& scorer, const std::filesystem::path& path);
AttentionScorer load_checkpoint(const std::filesystem::path& path);

// [x, then per band k: sin(2^k pi x), cos(2^k pi x)] over all 6 ray
// coordinates; N x (6 + 12B).
Eigen::MatrixXd fourier_embed_rays(const RayBundle& bundle, int bands);

// N x C ray features R.
Eigen::MatrixXd embed_rays(const RayBundle& bundle, const AttentionScorer& scorer);

// M x N map; logits (F W_K)(R W_Q)^T / sqrt(C), softmax over the ray axis so
// each pixel row sums to 1.
Eigen::MatrixXd attention_map(const Eigen::MatrixXd& ray_features,
                              const Eigen::MatrixXd& image_features,
                              const Eigen::MatrixXd& wq, const Eigen::MatrixXd& wk);
Eigen::MatrixXd attention_map(const Eigen::MatrixXd& ray_features,
                              const FeatureMap& fmap, const AttentionScorer& scorer,
                              AttentionHead head);

// Column sums of both attention maps; each score vector sums to M.
ScoreVector predict_scores(const AttentionScorer& scorer, const RayBundle& bundle,
                           const FeatureMap& fmap);

struct ScorerGradients {
  Eigen::MatrixXd w1, w2, w3, b1, b2, b3;
  Eigen::MatrixXd wq_pos, wk_pos, wq_ori, wk_ori;

  static ScorerGradients zeros_like(const AttentionScorer& scorer);

  template <typename F>
  void for_each(F&& fn) {
    fn("w1", w1); fn("b1", b1);
    fn("w2", w2); fn("b2", b2);
    fn("w3", w3); fn("b3", b3);
    fn("wq_pos", wq_pos); fn("wk_pos", wk_pos);
    fn("wq_ori", wq_ori); fn("wk_ori", wk_ori);
  }
};

// Exact reverse-mode gradients of score_loss(predict_scores(...), gt) with
// respect to every parameter. Throws kNonFinite naming the first non-finite
// tensor encountered.
double loss_and_grad(const AttentionScorer& scorer, const RayBundle& bundle,
                     const FeatureMap& fmap, const ScoreVector& gt,
                     LossKind kind, ScorerGradients& grads,
                     double* loss_pos = nullptr, double* loss_ori = nullptr);

struct TrainView {
  Camera camera;
  FeatureMap features;
};

struct TrainConfig {
  int iterations = 1500;
  double learning_rate = 1e-2;
  double weight_decay = 1e-3;
  std::uint64_t seed = 0;
  std::size_t ellipsoid_subsample = 2000;
  int subdivision_level = 1;
  double k_sigma = 1.0;
  GammaConfig gamma;
  LossKind loss_kind = LossKind::kAbsolute;
};

// Gradient descent with decoupled weight decay; one view per iteration in
// round-robin order, ellipsoids resampled each step. Returns the loss trace
// (length = iterations).
std::vector<double> train(AttentionScorer& scorer, const Scene& scene,
                          const std::vector<TrainView>& views,
                          const TrainConfig& cfg);

// Ground-truth scorer used in place of a trained network where only the
// solver is under test.
ScoreVector oracle_scorer(const RayBundle& bundle, const Camera& cam,
                          const GammaConfig& cfg, double m_pixels_override = 0.0);

// Offline stand-in for a feature backbone: per-pixel features are a fixed
// seeded linear projection of the Fourier-embedded pixel ray (camera origin
// plus through-pixel direction), with optional additive noise. The
// projection is shared across views so a scorer trained on some cameras
// generalizes to held-out ones.
class SyntheticFeatureModel {
 public:
  SyntheticFeatureModel(int channels, int bands, std::uint64_t seed);

  FeatureMap generate(const Camera& cam, int grid_width, int grid_height,
                      double noise_sigma, std::uint64_t noise_seed) const;

  int channels() const { return channels_; }

 private:
  int channels_;
  int bands_;
  Eigen::MatrixXd projection_;  // C x (6 + 12*bands)
};

}  // namespace splatpose
