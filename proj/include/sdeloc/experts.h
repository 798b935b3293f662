// include/sdeloc/experts.h

// Copyright 2026  The sdeloc Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SDELOC_EXPERTS_H_
#define SDELOC_EXPERTS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdeloc/dsp.h"

namespace sdeloc {

inline constexpr double kProbClamp = 1e-7;

struct ExpertConfig {
  int context = 2;                      // frames of context on each side
  std::vector<int> hidden_dims = {64};  // hidden layers below the latent layer
  int latent_dim = 64;
  double u = 0.75;   // cosine margin of the distillation hinge
  double y0 = 1.0;   // dissimilarity indicator
  double dis_weight = 1.0;  // multiplier on the per-sample distillation term
  double lr = 1e-4;
  int batch_size = 16;  // clips per step
  int epochs = 10;
  std::uint64_t seed = 0;
  double accuracy_floor = 0.9;  // validation frame accuracy each expert should reach
  int max_epochs = 50;          // extension cap when the floor is missed; 0 = none
  bool use_distillation = true; // false trains shuffle-only ensembles
  bool per_frame_distillation = false;
  bool shared_init = false;     // all experts start from the weights drawn for expert 0
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

  nlohmann::json to_json() const;
  static ExpertConfig from_json(const nlohmann::json& j);
  void validate() const;
  std::uint64_t hash() const;
};

/// Per-column affine input normalization fitted on the training frames.
struct FeatureNormalizer {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

/// One frame classifier. Input is a (2 * context + 1)-frame window of
/// normalized features (zero outside the clip); ReLU hidden layers end in
/// the latent vector h, and p = sigmoid(w . h + b) is the probability that
/// the frame is genuine.
class Expert {
 public:
  Expert() = default;
  Expert(const ExpertConfig& config, int feature_dim, int index);

  const ExpertConfig& config() const { return config_; }
  int index() const { return index_; }
  void set_index(int i) { index_ = i; }
  int feature_dim() const { return feature_dim_; }
  int input_dim() const { return (2 * config_.context + 1) * feature_dim_; }
  int latent_dim() const { return config_.latent_dim; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  FeatureNormalizer& normalizer() { return normalizer_; }
  const FeatureNormalizer& normalizer() const { return normalizer_; }

  /// Layer shapes as (out, in), latent layer last, excluding the head.
  std::vector<std::pair<int, int>> layer_shapes() const;
  static std::size_t param_count(const ExpertConfig& config, int feature_dim);

  /// He-uniform weights and zero biases drawn from `seed`.
  void initialize(std::uint64_t seed);

 private:
  ExpertConfig config_;
  int feature_dim_ = 0;
  int index_ = 0;
  std::vector<double> params_;
  FeatureNormalizer normalizer_;
};

struct Ensemble {
  std::vector<Expert> experts;
  int size() const { return static_cast<int>(experts.size()); }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Stacked context windows for every frame of `features`, normalized with
/// the expert's normalizer.
RowMatrix build_inputs(const Expert& expert, const FeatureMatrix& features);

struct FrameOutput {
  std::vector<double> h;
  double p = 0.5;
};

/// Latent vector and clamped genuine-probability for one frame.
FrameOutput forward(const Expert& expert, const FeatureMatrix& features, int frame);

struct ClipOutput {
  std::vector<double> p;            // per frame, clamped to [1e-7, 1 - 1e-7]
  std::vector<double> mean_latent;  // average of h over frames
};

ClipOutput run_clip(const Expert& expert, const FeatureMatrix& features);

// ---- losses -------------------------------------------------------------

/// Summed binary cross-entropy over one sample's frames; p is clamped.
double bce_sample_loss(std::span<const double> p, std::span<const double> y);

/// (1/N) sum_j sum_i BCE(p_ji, y_ji).
double bce_loss(const std::vector<std::vector<double>>& p,
                const std::vector<std::vector<double>>& y);

/// d bce_loss / d p for each frame, same shape as p.
std::vector<std::vector<double>> bce_loss_grad(const std::vector<std::vector<double>>& p,
                                               const std::vector<std::vector<double>>& y);

/// Cosine similarity; 0 when either vector is zero.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// (1/n) sum_w y0 * 0.5 * max(0, cos(h_now, h_prev[w]) - u)^2, 0 when n = 0.
double distillation_loss(std::span<const double> h_now,
                         const std::vector<std::vector<double>>& h_prev, double u, double y0);

std::vector<double> distillation_loss_grad(std::span<const double> h_now,
                                           const std::vector<std::vector<double>>& h_prev,
                                           double u, double y0);

/// One training sample: features plus per-frame targets in [0, 1]
/// (1 = genuine).
struct LabeledClip {
  FeatureMatrix features;
  std::vector<double> targets;
};

using Dataset = std::vector<LabeledClip>;

struct LossBreakdown {
  double bce = 0.0;    // (1/N) sum_j sum_i BCE
  double dis = 0.0;    // (dis_weight/N) sum_j L_dis(j)
  double total = 0.0;  // bce + dis
};

/// (1/N) sum_j (sum_i BCE + dis_weight * L_dis(j)) over `batch` for `expert` against the
/// frozen `prev` experts. With per-sample distillation, L_dis(j) compares
/// mean latent vectors over the sample's frames; with per-frame
/// distillation it averages the per-frame hinge over frames. When `grad` is
/// non-null it receives d total / d expert.params().
LossBreakdown total_loss(std::span<const LabeledClip* const> batch, const Expert& expert,
                         const std::vector<Expert>& prev, std::vector<double>* grad = nullptr);

LossBreakdown total_loss(const Dataset& batch, const Expert& expert,
                         const std::vector<Expert>& prev, std::vector<double>* grad = nullptr);

// ---- training -----------------------------------------------------------

struct TrainingLogRow {
  int epoch = 0;
  double bce = 0.0;
  double dis_loss = 0.0;
  double total = 0.0;
  double val_accuracy = 0.0;
};

FeatureNormalizer fit_normalizer(const Dataset& data);

/// Frame accuracy at the 0.5 decision threshold.
double frame_accuracy(const Expert& expert, const Dataset& data);

/// Trains expert number prev.size() with Adam on total_loss. Initial
/// weights come from (config.seed, index), or from config.seed alone with
/// shared_init; the data order comes from (config.seed, index). Validation accuracy is
/// measured on `val` when given, else on `train`. Throws on non-finite loss.
Expert train_expert(const Dataset& train, const std::vector<Expert>& prev,
                    const ExpertConfig& config, const Dataset* val = nullptr,
                    std::vector<TrainingLogRow>* log = nullptr);

/// Trains experts sequentially, each against its frozen predecessors.
/// `existing` experts are kept and training resumes after them;
/// `on_trained` runs after every newly trained expert.
Ensemble train_ensemble(const Dataset& train, const ExpertConfig& config, int n,
                        const Dataset* val = nullptr, std::vector<Expert> existing = {},
                        const std::function<void(const Expert&, const std::vector<TrainingLogRow>&)>&
                            on_trained = {});

// ---- persistence --------------------------------------------------------

// Checkpoint layout (little-endian):
//   char[8] "SDEEXPT1", u64 config hash, u32 index, u32 latent_dim,
//   u32 feature_dim, u32 reserved (0), u64 parameter count P,
//   f64[feature_dim] normalizer mean, f64[feature_dim] normalizer inv_std,
//   f64[P] parameters (per layer: row-major weights (out x in), then
//   biases; then head weights and head bias).
void write_checkpoint(const std::filesystem::path& path, const Expert& expert);
Expert read_checkpoint(const std::filesystem::path& path, const ExpertConfig& config);

void write_training_log(const std::filesystem::path& path,
                        const std::vector<TrainingLogRow>& rows);

}  // namespace sdeloc

#endif  // SDELOC_EXPERTS_H_
