// src/pipeline.cc

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

#include "sdeloc/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fcntl.h>
#include <unistd.h>

#include "sdeloc/hash.h"

namespace sdeloc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kSde: return "sde";
    case Strategy::kRandom: return "random";
    case Strategy::kNegative: return "negative";
    case Strategy::kMulticluster: return "multicluster";
    case Strategy::kUndersample: return "undersample";
    case Strategy::kOversample: return "oversample";
  }
  return "sde";
}

Strategy strategy_from_string(const std::string& s) {
  for (Strategy v : {Strategy::kSde, Strategy::kRandom, Strategy::kNegative, Strategy::kMulticluster,
                     Strategy::kUndersample, Strategy::kOversample})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown strategy '" + s +
                              "' (expected sde, random, negative, multicluster, undersample, oversample)");
}

// ---- config -------------------------------------------------------------

json RunConfig::to_json() const {
  return {{"source_manifest", source_manifest},
          {"target_manifest", target_manifest},
          {"source_domain", source_domain.to_json()},
          {"target_domain", target_domain.to_json()},
          {"n_source", n_source},
          {"n_target", n_target},
          {"n_experts", n_experts},
          {"u", u},
          {"z", z},
          {"z_fraction", z_fraction},
          {"strategy", to_string(strategy)},
          {"seed", seed},
          {"output_dir", output_dir},
          {"lfcc", lfcc.to_json()},
          {"max_frames", max_frames},
          {"pseudo", pseudo.to_json()},
          {"expert", expert.to_json()},
          {"detector", detector.to_json()},
          {"test_fraction", test_fraction},
          {"val_fraction", val_fraction},
          {"k_clusters", k_clusters},
          {"cluster_on_lfcc", cluster_on_lfcc},
          {"decision_threshold", decision_threshold},
          {"repeats", repeats},
          {"sweep_u", sweep_u},
          {"sweep_z", sweep_z}};
}

RunConfig RunConfig::from_json(const json& j) {
  static const std::set<std::string> known = {
      "source_manifest", "target_manifest", "source_domain", "target_domain", "n_source",
      "n_target", "n_experts", "u", "z", "z_fraction", "strategy", "seed", "output_dir", "lfcc",
      "max_frames", "pseudo", "expert", "detector", "test_fraction", "val_fraction", "k_clusters",
      "cluster_on_lfcc", "decision_threshold", "repeats", "sweep_u", "sweep_z"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw std::invalid_argument("unknown config key '" + k + "'");
  RunConfig c;
  c.source_manifest = j.value("source_manifest", c.source_manifest);
  c.target_manifest = j.value("target_manifest", c.target_manifest);
  if (j.contains("source_domain")) c.source_domain = DomainConfig::from_json(j["source_domain"]);
  if (j.contains("target_domain")) c.target_domain = DomainConfig::from_json(j["target_domain"]);
  c.n_source = j.value("n_source", c.n_source);
  c.n_target = j.value("n_target", c.n_target);
  c.n_experts = j.value("n_experts", c.n_experts);
  c.u = j.value("u", c.u);
  c.z = j.value("z", c.z);
  c.z_fraction = j.value("z_fraction", c.z_fraction);
  c.strategy = strategy_from_string(j.value("strategy", to_string(c.strategy)));
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("lfcc")) c.lfcc = LfccOptions::from_json(j["lfcc"]);
  c.max_frames = j.value("max_frames", c.max_frames);
  if (j.contains("pseudo")) c.pseudo = PseudoLabelOptions::from_json(j["pseudo"]);
  if (j.contains("expert")) c.expert = ExpertConfig::from_json(j["expert"]);
  if (j.contains("detector")) c.detector = ExpertConfig::from_json(j["detector"]);
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.k_clusters = j.value("k_clusters", c.k_clusters);
  c.cluster_on_lfcc = j.value("cluster_on_lfcc", c.cluster_on_lfcc);
  c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
  c.repeats = j.value("repeats", c.repeats);
  c.sweep_u = j.value("sweep_u", c.sweep_u);
  c.sweep_z = j.value("sweep_z", c.sweep_z);
  return c;
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(n_experts >= 1, "n_experts must be >= 1");
  require(u > 0.0 && u < 1.0, "u must lie in (0, 1)");
  require(z_fraction >= 0.0 && z_fraction <= 1.0, "z_fraction must lie in [0, 1]");
  require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must lie in (0, 1)");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must lie in [0, 1)");
  require(k_clusters >= 1, "k_clusters must be >= 1");
  require(decision_threshold > 0.0 && decision_threshold < 1.0, "decision_threshold must lie in (0, 1)");
  require(repeats >= 1, "repeats must be >= 1");
  require(sweep_u.empty() || sweep_z.empty(), "sweep over u or z, not both");
  for (double v : sweep_u) require(v > 0.0 && v < 1.0, "sweep_u values must lie in (0, 1)");
  for (double v : sweep_z) require(v >= 0.0 && v <= 1.0, "sweep_z values must lie in [0, 1]");
  require(source_manifest.empty() == target_manifest.empty(),
          "give both source_manifest and target_manifest, or neither");
  if (!source_manifest.empty()) {
    require(fs::exists(source_manifest), "source manifest not found: " + source_manifest);
    require(fs::exists(target_manifest), "target manifest not found: " + target_manifest);
  } else {
    source_domain.validate();
    target_domain.validate();
    require(n_source >= 2 && n_target >= 2, "synthetic corpora need at least 2 clips");
  }
  ensemble_config().validate();
  detector_config().validate();
}

ExpertConfig RunConfig::ensemble_config() const {
  ExpertConfig c = expert;
  c.u = u;
  c.seed = derive_seed(seed, "experts");
  return c;
}

ExpertConfig RunConfig::detector_config() const {
  ExpertConfig c = detector;
  c.seed = derive_seed(seed, "detector");
  return c;
}

PseudoLabelOptions RunConfig::pseudo_options() const {
  PseudoLabelOptions o = pseudo;
  o.lfcc = lfcc;
  o.max_frames = max_frames;
  return o;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path.string());
  try {
    return RunConfig::from_json(json::parse(f, nullptr, true, true));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// ---- corpora ------------------------------------------------------------

Corpus featurize(std::vector<AudioClip> audio, std::vector<FrameLabels> labels,
                 std::vector<std::string> tags, const LfccOptions& opts, int max_frames) {
  if (!labels.empty() && labels.size() != audio.size())
    throw std::invalid_argument("labels do not match the clip list");
  Corpus c;
  c.features.reserve(audio.size());
  for (std::size_t i = 0; i < audio.size(); ++i) {
    const FrameGrid grid = make_frames(audio[i], max_frames);
    c.features.push_back(lfcc(audio[i], grid, opts));
    if (!labels.empty()) {
      labels[i] = resize_labels(labels[i], grid.n_frames);
      labels[i].clip_id = audio[i].id;
    }
  }
  c.audio = std::move(audio);
  c.labels = std::move(labels);
  c.tags = std::move(tags);
  c.tags.resize(c.audio.size());
  return c;
}

Corpus corpus_from_synth(std::vector<SynthClip> clips, const LfccOptions& lfcc, int max_frames) {
  std::vector<AudioClip> audio;
  std::vector<FrameLabels> labels;
  std::vector<std::string> tags;
  for (auto& s : clips) {
    audio.push_back(std::move(s.clip));
    labels.push_back(std::move(s.labels));
    tags.push_back(std::move(s.channel));
  }
  return featurize(std::move(audio), std::move(labels), std::move(tags), lfcc, max_frames);
}

Corpus corpus_from_manifest(const fs::path& manifest, const LfccOptions& lfcc, int max_frames) {
  const auto records = read_manifest(manifest);
  const bool labeled =
      !records.empty() && std::all_of(records.begin(), records.end(),
                                      [](const ManifestRecord& r) { return r.has_labels(); });
  std::vector<AudioClip> audio;
  std::vector<FrameLabels> labels;
  std::vector<std::string> tags;
  for (const auto& r : records) {
    AudioClip clip = load_wav(resolve_wav(manifest, r));
    clip.id = r.id;
    audio.push_back(std::move(clip));
    if (labeled) labels.push_back(r.frame_labels());
    tags.push_back(r.provenance == "pseudo" ? "pseudo" : r.domain);
  }
  return featurize(std::move(audio), std::move(labels), std::move(tags), lfcc, max_frames);
}

Dataset to_dataset(const Corpus& c, const std::vector<int>& idx, double smoothing) {
  if (!c.labeled()) throw std::invalid_argument("corpus has no labels");
  Dataset d;
  d.reserve(idx.size());
  for (int i : idx) d.push_back({c.features[i], smooth_targets(c.labels[i], smoothing)});
  return d;
}

Split split_by_hash(const std::vector<std::string>& ids, double fraction, std::uint64_t seed) {
  std::vector<int> order(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) order[i] = static_cast<int>(i);
  std::vector<std::uint64_t> key(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) key[i] = derive_seed(seed, ids[i]);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return key[a] != key[b] ? key[a] < key[b] : ids[a] < ids[b];
  });
  const auto n_held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(ids.size())));
  Split s;
  s.held_out.assign(order.begin(), order.begin() + n_held);
  s.kept.assign(order.begin() + n_held, order.end());
  std::sort(s.held_out.begin(), s.held_out.end());
  std::sort(s.kept.begin(), s.kept.end());
  return s;
}

std::vector<std::string> clip_ids(const Corpus& c, const std::vector<int>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(c.audio[i].id);
  return out;
}

int resolve_z(const RunConfig& cfg, int R) {
  if (cfg.z >= 0) return cfg.z;
  return static_cast<int>(std::lround(cfg.z_fraction * R));
}

// ---- experiment steps ---------------------------------------------------

MiningReport mine_candidates(const Ensemble& ensemble, const std::vector<FeatureMatrix>& candidates,
                             Strategy strategy, int z, std::uint64_t seed, const RunConfig& cfg) {
  if (ensemble.experts.empty()) throw std::invalid_argument("ensemble is empty");
  std::map<std::string, double> scores;
  std::vector<std::string> ids;
  for (const auto& f : candidates) {
    if (scores.count(f.clip_id)) throw std::invalid_argument("duplicate candidate id '" + f.clip_id + "'");
    scores[f.clip_id] = sample_information(ensemble_vote(ensemble, f, cfg.decision_threshold));
    ids.push_back(f.clip_id);
  }
  MiningReport r = rank_and_select(scores, z);
  r.method = to_string(strategy);
  r.n_experts = ensemble.size();
  r.seed = seed;
  const int R = static_cast<int>(ids.size());
  switch (strategy) {
    case Strategy::kSde:
      break;
    case Strategy::kRandom:
      r.selected = random_select(ids, z, derive_seed(seed, "random"));
      break;
    case Strategy::kNegative:
      r.selected = negative_mining_select(scores, z);
      break;
    case Strategy::kMulticluster:
    case Strategy::kUndersample:
    case Strategy::kOversample: {
      if (z == 0 || R == 0) {
        r.selected.clear();
        break;
      }
      std::vector<std::vector<double>> emb;
      for (const auto& f : candidates) {
        if (cfg.cluster_on_lfcc) {
          std::vector<double> m(f.cols, 0.0);
          for (int t = 0; t < f.rows; ++t)
            for (int k = 0; k < f.cols; ++k) m[k] += f.at(t, k) / f.rows;
          emb.push_back(std::move(m));
        } else {
          emb.push_back(run_clip(ensemble.experts.front(), f).mean_latent);
        }
      }
      const Clustering cl = kmeans_cluster(emb, std::min(cfg.k_clusters, R), derive_seed(seed, "kmeans"));
      const ClusterMode mode = strategy == Strategy::kMulticluster ? ClusterMode::kNearestCenter
                               : strategy == Strategy::kUndersample ? ClusterMode::kSparseRegion
                                                                    : ClusterMode::kDenseRegion;
      r.selected = multicluster_select(ids, emb, cl, z, mode, derive_seed(seed, "cluster-pick"));
      break;
    }
  }
  return r;
}

std::vector<PseudoLabeledSample> pseudo_label_selection(const Corpus& pool,
                                                        const std::vector<std::string>& selected,
                                                        const PseudoLabelOptions& opts,
                                                        std::uint64_t seed,
                                                        std::vector<std::string>* skipped) {
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < pool.size(); ++i) index[pool.audio[i].id] = static_cast<int>(i);
  std::vector<PseudoLabeledSample> out;
  for (const auto& id : selected) {
    const auto it = index.find(id);
    if (it == index.end()) throw std::runtime_error("selected clip '" + id + "' not found");
    try {
      out.push_back(pseudo_label_clip(pool.audio[it->second], opts, derive_seed(seed, id)));
    } catch (const std::invalid_argument& e) {
      std::clog << "warning: skipping '" << id << "': " << e.what() << "\n";
      if (skipped) skipped->push_back(id);
    }
  }
  return out;
}

EvalResult evaluate_detector(const Expert& detector, const Corpus& test, const std::vector<int>& idx,
                             double decision_threshold) {
  if (!test.labeled()) throw std::invalid_argument("test corpus has no labels");
  if (idx.empty()) throw std::invalid_argument("empty test split");
  EvalResult r;
  std::vector<FrameLabels> pred, truth;
  for (int i : idx) {
    pred.push_back(decide(run_clip(detector, test.features[i]).p, decision_threshold, test.audio[i].id));
    truth.push_back(test.labels[i]);
    r.confusion += confusion(pred.back(), truth.back());
  }
  r.prf = prf_from_confusion(r.confusion);
  r.sentence_acc = sentence_accuracy(pred, truth);
  return r;
}

double mean_selected_entropy(const MiningReport& r) {
  if (r.selected.empty()) return 0.0;
  double s = 0.0;
  for (const auto& id : r.selected) s += r.scores.at(id);
  return s / static_cast<double>(r.selected.size());
}

Benchmark build_benchmark(const RunConfig& cfg) {
  Benchmark b;
  if (cfg.source_manifest.empty()) {
    b.source = corpus_from_synth(synth_domain_corpus(cfg.source_domain, cfg.n_source,
                                                     derive_seed(cfg.seed, "source")),
                                 cfg.lfcc, cfg.max_frames);
    b.target = corpus_from_synth(synth_domain_corpus(cfg.target_domain, cfg.n_target,
                                                     derive_seed(cfg.seed, "target")),
                                 cfg.lfcc, cfg.max_frames);
  } else {
    b.source = corpus_from_manifest(cfg.source_manifest, cfg.lfcc, cfg.max_frames);
    b.target = corpus_from_manifest(cfg.target_manifest, cfg.lfcc, cfg.max_frames);
  }
  const std::vector<int> all_s = [&] {
    std::vector<int> v(b.source.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
    return v;
  }();
  const Split sv = split_by_hash(clip_ids(b.source, all_s), cfg.val_fraction, derive_seed(cfg.seed, "val"));
  b.source_train = sv.kept;
  b.source_val = sv.held_out;
  std::vector<int> all_t(b.target.size());
  for (std::size_t i = 0; i < all_t.size(); ++i) all_t[i] = static_cast<int>(i);
  const Split ts = split_by_hash(clip_ids(b.target, all_t), cfg.test_fraction, derive_seed(cfg.seed, "split"));
  b.target_pool = ts.kept;
  b.target_test = ts.held_out;
  return b;
}

Ensemble train_benchmark_ensemble(const Benchmark& b, const RunConfig& cfg) {
  const Dataset train = to_dataset(b.source, b.source_train);
  const Dataset val = to_dataset(b.source, b.source_val);
  return train_ensemble(train, cfg.ensemble_config(), cfg.n_experts, val.empty() ? nullptr : &val);
}

namespace {

Dataset detector_training_set(const Benchmark& b, const std::vector<PseudoLabeledSample>& pseudo,
                              double smoothing) {
  Dataset train = to_dataset(b.source, b.source_train);
  for (const auto& s : pseudo) train.push_back({s.features, smooth_targets(s.labels, smoothing)});
  return train;
}

MetricsRow metrics_row(const RunConfig& cfg, const MiningReport& report, const EvalResult& ev) {
  MetricsRow row;
  row.run = "seed" + std::to_string(cfg.seed) + "_u" + [&] {
    std::ostringstream s;
    s << cfg.u;
    return s.str();
  }();
  row.method = report.method;
  row.z = report.z;
  row.precision = ev.prf.precision;
  row.recall = ev.prf.recall;
  row.f1 = ev.prf.f1;
  row.sentence_acc = ev.sentence_acc;
  row.mean_entropy = mean_selected_entropy(report);
  return row;
}

}  // namespace

ExperimentResult run_experiment(const Benchmark& b, const Ensemble& ensemble, const RunConfig& cfg,
                                Strategy strategy) {
  std::vector<FeatureMatrix> pool;
  for (int i : b.target_pool) pool.push_back(b.target.features[i]);
  ExperimentResult out;
  out.report = mine_candidates(ensemble, pool, strategy, resolve_z(cfg, static_cast<int>(pool.size())),
                               derive_seed(cfg.seed, "mine"), cfg);
  const auto pseudo = pseudo_label_selection(b.target, out.report.selected, cfg.pseudo_options(),
                                             derive_seed(cfg.seed, "pseudo"));
  out.n_pseudo = static_cast<int>(pseudo.size());
  const Dataset train = detector_training_set(b, pseudo, cfg.pseudo.label_smoothing);
  const Dataset val = to_dataset(b.source, b.source_val);
  const Expert det = train_expert(train, {}, cfg.detector_config(), val.empty() ? nullptr : &val);
  const EvalResult ev = evaluate_detector(det, b.target, b.target_test, cfg.decision_threshold);
  out.metrics = metrics_row(cfg, out.report, ev);
  return out;
}

// ---- on-disk stages -----------------------------------------------------

fs::path resolve_output_dir(const RunConfig& cfg, const std::optional<std::string>& cli_out) {
  if (cli_out && !cli_out->empty()) return *cli_out;
  if (const char* env = std::getenv("SDELOC_OUT"); env && *env) return env;
  return cfg.output_dir;
}

OutputLock::OutputLock(const fs::path& out_dir) : path_(out_dir / ".lock") {
  fs::create_directories(out_dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw std::runtime_error("output directory " + out_dir.string() +
                             " is locked by another run (remove " + path_.string() +
                             " if no run is active)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  (void)!::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

fs::path stage_dir(const fs::path& out, const std::string& name, const json& key) {
  return out / (name + "-" + hex64(config_hash(key)));
}

bool stage_done(const fs::path& dir) { return fs::exists(dir / "DONE"); }

void begin_stage(const fs::path& dir, const json& key) {
  if (fs::exists(dir)) fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "stage.json", std::ios::binary) << key.dump(2) << '\n';
}

void finish_stage(const fs::path& dir) { std::ofstream(dir / "DONE", std::ios::binary) << "ok\n"; }

void log_stage(const std::string& name, const fs::path& dir, bool reused) {
  std::clog << "[" << name << "] " << (reused ? "reusing " : "wrote ") << dir.string() << "\n";
}

bool external_corpora(const RunConfig& cfg) { return !cfg.source_manifest.empty(); }

json corpus_key(const RunConfig& cfg) {
  if (external_corpora(cfg))
    return {{"source_manifest", fs::absolute(cfg.source_manifest).lexically_normal().string()},
            {"target_manifest", fs::absolute(cfg.target_manifest).lexically_normal().string()}};
  return {{"stage", "synth"},
          {"source_domain", cfg.source_domain.to_json()},
          {"target_domain", cfg.target_domain.to_json()},
          {"n_source", cfg.n_source},
          {"n_target", cfg.n_target},
          {"seed", cfg.seed}};
}

json experts_key(const RunConfig& cfg) {
  return {{"stage", "experts"},
          {"corpus", corpus_key(cfg)},
          {"lfcc", cfg.lfcc.to_json()},
          {"max_frames", cfg.max_frames},
          {"val_fraction", cfg.val_fraction},
          {"seed", cfg.seed},
          {"expert", cfg.ensemble_config().to_json()}};
}

json mine_key(const RunConfig& cfg) {
  return {{"stage", "mine"},
          {"experts", experts_key(cfg)},
          {"n_experts", cfg.n_experts},
          {"strategy", to_string(cfg.strategy)},
          {"z", cfg.z},
          {"z_fraction", cfg.z_fraction},
          {"test_fraction", cfg.test_fraction},
          {"k_clusters", cfg.k_clusters},
          {"cluster_on_lfcc", cfg.cluster_on_lfcc},
          {"decision_threshold", cfg.decision_threshold}};
}

json pseudo_key(const RunConfig& cfg) {
  return {{"stage", "pseudo"}, {"mine", mine_key(cfg)}, {"pseudo", cfg.pseudo_options().to_json()}};
}

json eval_key(const RunConfig& cfg) {
  return {{"stage", "eval"}, {"pseudo", pseudo_key(cfg)}, {"detector", cfg.detector_config().to_json()}};
}

std::vector<int> iota_n(std::size_t n) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i);
  return v;
}

void write_synth_corpus(const fs::path& dir, const std::vector<SynthClip>& clips, const std::string& domain) {
  fs::create_directories(dir / "wav");
  std::vector<ManifestRecord> records;
  for (const auto& c : clips) {
    const std::string rel = "wav/" + c.clip.id + ".wav";
    write_wav(dir / rel, c.clip);
    ManifestRecord r;
    r.id = c.clip.id;
    r.wav_path = rel;
    r.sample_rate = c.clip.sample_rate;
    r.labels = c.labels.spans();
    r.domain = domain;
    records.push_back(std::move(r));
  }
  write_manifest(dir / "manifest.jsonl", records);
}

std::vector<std::string> read_id_list(const json& j, const char* key) {
  return j.at(key).get<std::vector<std::string>>();
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot open " + p.string());
  return json::parse(f);
}

Ensemble load_or_train_ensemble(const RunConfig& cfg, const fs::path& out, fs::path* dir_out);

}  // namespace

CorpusPaths cmd_synth(const RunConfig& cfg, const fs::path& out) {
  if (external_corpora(cfg)) return {cfg.source_manifest, cfg.target_manifest};
  const json key = corpus_key(cfg);
  const fs::path dir = stage_dir(out, "synth", key);
  const bool reused = stage_done(dir);
  if (!reused) {
    begin_stage(dir, key);
    write_synth_corpus(dir / "source",
                       synth_domain_corpus(cfg.source_domain, cfg.n_source, derive_seed(cfg.seed, "source")),
                       cfg.source_domain.name);
    write_synth_corpus(dir / "target",
                       synth_domain_corpus(cfg.target_domain, cfg.n_target, derive_seed(cfg.seed, "target")),
                       cfg.target_domain.name);
    finish_stage(dir);
  }
  log_stage("synth", dir, reused);
  return {dir / "source" / "manifest.jsonl", dir / "target" / "manifest.jsonl"};
}

namespace {

Ensemble load_or_train_ensemble(const RunConfig& cfg, const fs::path& out, fs::path* dir_out) {
  const CorpusPaths corpora = cmd_synth(cfg, out);
  const json key = experts_key(cfg);
  const fs::path dir = stage_dir(out, "experts", key);
  if (dir_out) *dir_out = dir;
  const ExpertConfig ecfg = cfg.ensemble_config();
  fs::create_directories(dir);
  if (!fs::exists(dir / "stage.json")) std::ofstream(dir / "stage.json", std::ios::binary) << key.dump(2) << '\n';

  auto ckpt = [&](int w) {
    char name[32];
    std::snprintf(name, sizeof(name), "expert_%02d.ckpt", w);
    return dir / name;
  };
  std::vector<Expert> existing;
  while (static_cast<int>(existing.size()) < cfg.n_experts && fs::exists(ckpt(static_cast<int>(existing.size()))))
    existing.push_back(read_checkpoint(ckpt(static_cast<int>(existing.size())), ecfg));
  const int resumed = static_cast<int>(existing.size());

  Ensemble ens;
  if (resumed == cfg.n_experts) {
    ens.experts = std::move(existing);
  } else {
    const Corpus source = corpus_from_manifest(corpora.source_manifest, cfg.lfcc, cfg.max_frames);
    if (!source.labeled()) throw std::runtime_error("source manifest lacks frame labels");
    const Split sv = split_by_hash(clip_ids(source, iota_n(source.size())), cfg.val_fraction,
                                   derive_seed(cfg.seed, "val"));
    const Dataset train = to_dataset(source, sv.kept);
    const Dataset val = to_dataset(source, sv.held_out);
    if (resumed > 0) std::clog << "[train-experts] resuming after " << resumed << " checkpoint(s)\n";
    ens = train_ensemble(train, ecfg, cfg.n_experts, val.empty() ? nullptr : &val, std::move(existing),
                         [&](const Expert& e, const std::vector<TrainingLogRow>& log) {
                           const fs::path final_path = ckpt(e.index());
                           const fs::path tmp = final_path.string() + ".tmp";
                           write_checkpoint(tmp, e);
                           char name[32];
                           std::snprintf(name, sizeof(name), "expert_%02d.log.csv", e.index());
                           write_training_log(dir / name, log);
                           fs::rename(tmp, final_path);
                           std::clog << "[train-experts] expert " << e.index() << " done";
                           if (!log.empty()) std::clog << " (val accuracy " << log.back().val_accuracy << ")";
                           std::clog << "\n";
                         });
  }
  json listing = {{"config", ecfg.to_json()}, {"config_hash", hex64(ecfg.hash())}, {"checkpoints", json::array()}};
  for (int w = 0; w < ens.size(); ++w) listing["checkpoints"].push_back(ckpt(w).filename().string());
  std::ofstream(dir / "ensemble.json", std::ios::binary) << listing.dump(2) << '\n';
  log_stage("train-experts", dir, resumed == cfg.n_experts);
  return ens;
}

}  // namespace

fs::path cmd_train_experts(const RunConfig& cfg, const fs::path& out) {
  fs::path dir;
  (void)load_or_train_ensemble(cfg, out, &dir);
  return dir;
}

fs::path cmd_mine(const RunConfig& cfg, const fs::path& out) {
  const json key = mine_key(cfg);
  const fs::path dir = stage_dir(out, "mine", key);
  if (stage_done(dir)) {
    log_stage("mine", dir, true);
    return dir;
  }
  const CorpusPaths corpora = cmd_synth(cfg, out);
  const Ensemble ens = load_or_train_ensemble(cfg, out, nullptr);
  const Corpus target = corpus_from_manifest(corpora.target_manifest, cfg.lfcc, cfg.max_frames);
  const std::vector<std::string> ids = clip_ids(target, iota_n(target.size()));
  const Split split = split_by_hash(ids, cfg.test_fraction, derive_seed(cfg.seed, "split"));
  std::vector<FeatureMatrix> pool;
  for (int i : split.kept) pool.push_back(target.features[i]);

  begin_stage(dir, key);
  MiningReport report = mine_candidates(ens, pool, cfg.strategy, resolve_z(cfg, static_cast<int>(pool.size())),
                                        derive_seed(cfg.seed, "mine"), cfg);
  report.config_hash = config_hash(key);
  write_report(dir / "report.json", report);
  write_report_csv(dir / "report.csv", report);
  json split_json = {{"pool", clip_ids(target, split.kept)}, {"test", clip_ids(target, split.held_out)}};
  std::ofstream(dir / "split.json", std::ios::binary) << split_json.dump(2) << '\n';
  finish_stage(dir);
  log_stage("mine", dir, false);
  return dir;
}

fs::path cmd_pseudo_label(const RunConfig& cfg, const fs::path& out) {
  const json key = pseudo_key(cfg);
  const fs::path dir = stage_dir(out, "pseudo", key);
  if (stage_done(dir)) {
    log_stage("pseudo-label", dir, true);
    return dir;
  }
  const CorpusPaths corpora = cmd_synth(cfg, out);
  const fs::path mine_dir = cmd_mine(cfg, out);
  const MiningReport report = read_report(mine_dir / "report.json");
  const Corpus target = corpus_from_manifest(corpora.target_manifest, cfg.lfcc, cfg.max_frames);

  begin_stage(dir, key);
  std::vector<std::string> skipped;
  const auto pseudo = pseudo_label_selection(target, report.selected, cfg.pseudo_options(),
                                             derive_seed(cfg.seed, "pseudo"), &skipped);

  // Source records first, re-pointed at their audio, then the pseudo records.
  const fs::path manifest = dir / "manifest.jsonl";
  std::vector<ManifestRecord> records = read_manifest(corpora.source_manifest);
  for (auto& r : records) {
    if (r.provenance != "ground_truth")
      throw std::runtime_error("source record '" + r.id + "' is not ground truth");
    const fs::path wav = fs::absolute(resolve_wav(corpora.source_manifest, r)).lexically_normal();
    r.wav_path = wav.lexically_relative(fs::absolute(dir).lexically_normal()).string();
  }
  fs::create_directories(dir / "wav");
  for (const auto& s : pseudo) {
    const std::string rel = "wav/" + s.clip.id + ".wav";
    write_wav(dir / rel, s.clip);
    ManifestRecord r;
    r.id = s.clip.id;
    r.wav_path = rel;
    r.sample_rate = s.clip.sample_rate;
    r.labels = s.labels.spans();
    r.domain = cfg.target_domain.name;
    r.provenance = "pseudo";
    r.swap = SwapMetadata{s.swap, s.rng_seed, s.cuts.threshold};
    records.push_back(std::move(r));
  }
  write_manifest(manifest, records);
  std::ofstream sk(dir / "skipped.txt", std::ios::binary);
  for (const auto& id : skipped) sk << id << '\n';
  sk.close();
  finish_stage(dir);
  log_stage("pseudo-label", dir, false);
  return dir;
}

fs::path cmd_retrain_eval(const RunConfig& cfg, const fs::path& out) {
  const json key = eval_key(cfg);
  const fs::path dir = stage_dir(out, "eval", key);
  if (stage_done(dir)) {
    log_stage("retrain-eval", dir, true);
    return dir;
  }
  const CorpusPaths corpora = cmd_synth(cfg, out);
  const fs::path mine_dir = cmd_mine(cfg, out);
  const fs::path pseudo_dir = cmd_pseudo_label(cfg, out);
  const MiningReport report = read_report(mine_dir / "report.json");
  const json split = read_json(mine_dir / "split.json");
  const auto pool_ids = read_id_list(split, "pool");
  const auto test_ids = read_id_list(split, "test");

  const Corpus train_corpus = corpus_from_manifest(pseudo_dir / "manifest.jsonl", cfg.lfcc, cfg.max_frames);
  const Corpus target = corpus_from_manifest(corpora.target_manifest, cfg.lfcc, cfg.max_frames);
  if (!target.labeled()) throw std::runtime_error("target manifest lacks labels for the test split");

  // Ground-truth source records split as during expert training; every
  // pseudo record goes to training.
  std::vector<int> gt, pseudo_idx;
  for (std::size_t i = 0; i < train_corpus.size(); ++i)
    (train_corpus.tags[i] == "pseudo" ? pseudo_idx : gt).push_back(static_cast<int>(i));
  const Split sv = split_by_hash(clip_ids(train_corpus, gt), cfg.val_fraction, derive_seed(cfg.seed, "val"));
  std::vector<int> train_idx, val_idx;
  for (int k : sv.kept) train_idx.push_back(gt[k]);
  for (int k : sv.held_out) val_idx.push_back(gt[k]);
  train_idx.insert(train_idx.end(), pseudo_idx.begin(), pseudo_idx.end());

  const std::set<std::string> test_set(test_ids.begin(), test_ids.end());
  const std::set<std::string> pool_set(pool_ids.begin(), pool_ids.end());
  for (const auto& id : test_ids)
    if (pool_set.count(id)) throw std::runtime_error("test clip '" + id + "' is also a mining candidate");
  std::vector<int> test_idx;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (test_set.count(target.audio[i].id)) test_idx.push_back(static_cast<int>(i));
  if (test_idx.size() != test_ids.size()) throw std::runtime_error("test split references unknown clips");
  for (int i : pseudo_idx) {
    const auto& id = train_corpus.audio[i].id;
    const std::string base = id.substr(0, id.rfind(".swap"));
    if (test_set.count(id) || test_set.count(base))
      throw std::runtime_error("pseudo record '" + id + "' overlaps the test split");
  }

  begin_stage(dir, key);
  const Dataset train = to_dataset(train_corpus, train_idx, cfg.pseudo.label_smoothing);
  const Dataset val = to_dataset(train_corpus, val_idx);
  std::vector<TrainingLogRow> log;
  const Expert det = train_expert(train, {}, cfg.detector_config(), val.empty() ? nullptr : &val, &log);
  write_checkpoint(dir / "detector.ckpt", det);
  write_training_log(dir / "detector.log.csv", log);
  const EvalResult ev = evaluate_detector(det, target, test_idx, cfg.decision_threshold);
  const std::vector<MetricsRow> rows = {metrics_row(cfg, report, ev)};
  write_metrics_json(dir / "metrics.json", rows);
  write_metrics_csv(dir / "metrics.csv", rows);
  finish_stage(dir);
  log_stage("retrain-eval", dir, false);
  std::clog << "[retrain-eval] " << rows[0].method << " z=" << rows[0].z << " F1=" << rows[0].f1
            << " P=" << rows[0].precision << " R=" << rows[0].recall << " A=" << rows[0].sentence_acc << "\n";
  return dir;
}

fs::path cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  const bool over_u = !cfg.sweep_u.empty();
  std::vector<double> grid = over_u ? cfg.sweep_u : cfg.sweep_z;
  if (grid.empty()) grid = {over_u ? cfg.u : cfg.z_fraction};
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const std::string param = over_u ? "u" : "z";

  const json key = {{"stage", "sweep"}, {"config", cfg.to_json()}};
  const fs::path dir = stage_dir(out, "sweep", key);
  if (stage_done(dir)) {
    log_stage("sweep", dir, true);
    return dir;
  }
  struct Cell {
    double value;
    std::vector<MetricsRow> rows;
  };
  std::vector<Cell> cells;
  for (double v : grid) {
    Cell c{v, {}};
    for (int r = 0; r < cfg.repeats; ++r) {
      RunConfig run = cfg;
      run.sweep_u.clear();
      run.sweep_z.clear();
      run.repeats = 1;
      run.seed = cfg.seed + static_cast<std::uint64_t>(r);
      if (over_u) {
        run.u = v;
      } else {
        run.z = -1;
        run.z_fraction = v;
      }
      c.rows.push_back(read_metrics_json(cmd_retrain_eval(run, out) / "metrics.json").front());
    }
    cells.push_back(std::move(c));
  }

  begin_stage(dir, key);
  std::ofstream f(dir / "sweep.csv", std::ios::binary);
  f << "param,value,method,z,repeats,f1_avg,f1_best,precision_avg,recall_avg,sentence_acc_avg,"
       "sentence_acc_best,mean_entropy_avg\n"
    << std::setprecision(10);
  json arr = json::array();
  for (const auto& c : cells) {
    double f1 = 0, f1_best = 0, p = 0, r = 0, a = 0, a_best = 0, e = 0;
    for (const auto& m : c.rows) {
      f1 += m.f1;
      f1_best = std::max(f1_best, m.f1);
      p += m.precision;
      r += m.recall;
      a += m.sentence_acc;
      a_best = std::max(a_best, m.sentence_acc);
      e += m.mean_entropy;
    }
    const double n = static_cast<double>(c.rows.size());
    f << param << ',' << c.value << ',' << c.rows.front().method << ',' << c.rows.front().z << ','
      << c.rows.size() << ',' << f1 / n << ',' << f1_best << ',' << p / n << ',' << r / n << ','
      << a / n << ',' << a_best << ',' << e / n << '\n';
    arr.push_back({{"param", param}, {"value", c.value}, {"method", c.rows.front().method},
                   {"z", c.rows.front().z}, {"repeats", c.rows.size()}, {"f1_avg", f1 / n},
                   {"f1_best", f1_best}, {"precision_avg", p / n}, {"recall_avg", r / n},
                   {"sentence_acc_avg", a / n}, {"sentence_acc_best", a_best}, {"mean_entropy_avg", e / n}});
  }
  f.close();
  std::ofstream(dir / "sweep.json", std::ios::binary) << arr.dump(2) << '\n';
  finish_stage(dir);
  log_stage("sweep", dir, false);
  return dir;
}

}  // namespace sdeloc
