// include/sdeloc/pipeline.h

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

#ifndef SDELOC_PIPELINE_H_
#define SDELOC_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdeloc/dsp.h"
#include "sdeloc/eval.h"
#include "sdeloc/experts.h"
#include "sdeloc/manifest.h"
#include "sdeloc/manipulation.h"
#include "sdeloc/mining.h"
#include "sdeloc/synth.h"

namespace sdeloc {

enum class Strategy { kSde, kRandom, kNegative, kMulticluster, kUndersample, kOversample };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct RunConfig {
  // External corpora; when empty the built-in synthetic domains are rendered.
  std::string source_manifest;
  std::string target_manifest;
  DomainConfig source_domain = default_source_domain();
  DomainConfig target_domain = default_target_domain();
  int n_source = 500;
  int n_target = 625;

  int n_experts = 10;
  double u = 0.75;
  int z = -1;               // explicit count; negative means round(z_fraction * R)
  double z_fraction = 0.1;  // of the mining-candidate pool
  Strategy strategy = Strategy::kSde;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";

  LfccOptions lfcc;
  int max_frames = kDefaultMaxFrames;
  PseudoLabelOptions pseudo;
  ExpertConfig expert;    // ensemble members; u and seed are set from this config
  ExpertConfig detector;  // retrained detector; seed is set from this config

  double test_fraction = 0.2;  // target clips held out for evaluation
  double val_fraction = 0.1;   // source clips held out for the accuracy floor
  int k_clusters = 6;
  bool cluster_on_lfcc = false;  // cluster mean LFCC instead of expert-0 latents
  double decision_threshold = 0.5;

  int repeats = 1;
  std::vector<double> sweep_u;  // sweep grids; exactly one may be non-empty
  std::vector<double> sweep_z;  // fractions of the candidate pool

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  void validate() const;

  ExpertConfig ensemble_config() const;
  ExpertConfig detector_config() const;
  PseudoLabelOptions pseudo_options() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

// ---- in-memory building blocks -----------------------------------------

/// Audio, features and (optional) frame labels of one corpus; labels are
/// aligned to the feature rows.
struct Corpus {
  std::vector<AudioClip> audio;
  std::vector<FeatureMatrix> features;
  std::vector<FrameLabels> labels;  // empty when unlabeled
  std::vector<std::string> tags;    // channel or domain per clip

  std::size_t size() const { return audio.size(); }
  bool labeled() const { return !labels.empty(); }
};

Corpus featurize(std::vector<AudioClip> audio, std::vector<FrameLabels> labels,
                 std::vector<std::string> tags, const LfccOptions& lfcc, int max_frames);

Corpus corpus_from_synth(std::vector<SynthClip> clips, const LfccOptions& lfcc, int max_frames);

/// Loads every record of a manifest; labels are kept when all records carry them.
Corpus corpus_from_manifest(const std::filesystem::path& manifest, const LfccOptions& lfcc,
                            int max_frames);

Dataset to_dataset(const Corpus& c, const std::vector<int>& idx, double smoothing = 0.0);

/// Deterministic partition by seeded hash of clip id: the clips are ordered
/// by hash and the first round(fraction * n) form `held_out`.
struct Split {
  std::vector<int> kept;
  std::vector<int> held_out;
};
Split split_by_hash(const std::vector<std::string>& ids, double fraction, std::uint64_t seed);

std::vector<std::string> clip_ids(const Corpus& c, const std::vector<int>& idx);

int resolve_z(const RunConfig& cfg, int R);

/// Scores every candidate with the ensemble and selects z of them with the
/// given strategy. The report always carries the SDE scores and ranking.
MiningReport mine_candidates(const Ensemble& ensemble, const std::vector<FeatureMatrix>& candidates,
                             Strategy strategy, int z, std::uint64_t seed, const RunConfig& cfg);

/// Pseudo-labels each selected clip with seed derive_seed(seed, id); clips
/// too short for four cut points are skipped with a warning.
std::vector<PseudoLabeledSample> pseudo_label_selection(const Corpus& pool,
                                                        const std::vector<std::string>& selected,
                                                        const PseudoLabelOptions& opts,
                                                        std::uint64_t seed,
                                                        std::vector<std::string>* skipped = nullptr);

struct EvalResult {
  PRF prf;
  double sentence_acc = 0.0;
  FrameConfusion confusion;
};

EvalResult evaluate_detector(const Expert& detector, const Corpus& test, const std::vector<int>& idx,
                             double decision_threshold = 0.5);

/// Mean I_j over the selected clips (0 when nothing was selected).
double mean_selected_entropy(const MiningReport& r);

/// Source and target corpora with the source train/validation split and the
/// target mining/test split used by every experiment.
struct Benchmark {
  Corpus source;
  Corpus target;
  std::vector<int> source_train, source_val;
  std::vector<int> target_pool, target_test;
};

Benchmark build_benchmark(const RunConfig& cfg);

struct ExperimentResult {
  MiningReport report;
  MetricsRow metrics;
  int n_pseudo = 0;
};

/// Mining, pseudo-labeling, detector retraining from scratch on source-train
/// plus pseudo data, and evaluation on the target test split.
ExperimentResult run_experiment(const Benchmark& b, const Ensemble& ensemble, const RunConfig& cfg,
                                Strategy strategy);

Ensemble train_benchmark_ensemble(const Benchmark& b, const RunConfig& cfg);

// ---- on-disk stages -----------------------------------------------------

/// Every stage writes into <out>/<stage>-<hash>/ and stamps DONE on success;
/// stages whose stamp exists are skipped. Upstream stages run on demand.
struct StagePaths {
  std::filesystem::path dir;
  bool reused = false;
};

std::filesystem::path resolve_output_dir(const RunConfig& cfg,
                                         const std::optional<std::string>& cli_out);

/// Exclusive lock on an output directory, released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& out_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct CorpusPaths {
  std::filesystem::path source_manifest;
  std::filesystem::path target_manifest;
};

CorpusPaths cmd_synth(const RunConfig& cfg, const std::filesystem::path& out);
std::filesystem::path cmd_train_experts(const RunConfig& cfg, const std::filesystem::path& out);
std::filesystem::path cmd_mine(const RunConfig& cfg, const std::filesystem::path& out);
std::filesystem::path cmd_pseudo_label(const RunConfig& cfg, const std::filesystem::path& out);
std::filesystem::path cmd_retrain_eval(const RunConfig& cfg, const std::filesystem::path& out);
std::filesystem::path cmd_sweep(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace sdeloc

#endif  // SDELOC_PIPELINE_H_
