// src/experts.cc

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

#include "sdeloc/experts.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "sdeloc/hash.h"

namespace sdeloc {

// ---- config -------------------------------------------------------------

nlohmann::json ExpertConfig::to_json() const {
  return {{"context", context},
          {"hidden_dims", hidden_dims},
          {"latent_dim", latent_dim},
          {"u", u},
          {"y0", y0},
          {"dis_weight", dis_weight},
          {"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"accuracy_floor", accuracy_floor},
          {"max_epochs", max_epochs},
          {"use_distillation", use_distillation},
          {"per_frame_distillation", per_frame_distillation},
          {"shared_init", shared_init},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps}};
}

ExpertConfig ExpertConfig::from_json(const nlohmann::json& j) {
  ExpertConfig c;
  c.context = j.value("context", c.context);
  c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.u = j.value("u", c.u);
  c.y0 = j.value("y0", c.y0);
  c.dis_weight = j.value("dis_weight", c.dis_weight);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.accuracy_floor = j.value("accuracy_floor", c.accuracy_floor);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.use_distillation = j.value("use_distillation", c.use_distillation);
  c.per_frame_distillation = j.value("per_frame_distillation", c.per_frame_distillation);
  c.shared_init = j.value("shared_init", c.shared_init);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  return c;
}

void ExpertConfig::validate() const {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("u must lie in (0, 1)");
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (!(dis_weight >= 0.0)) throw std::invalid_argument("dis_weight must be >= 0");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (context < 0) throw std::invalid_argument("context must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  for (int h : hidden_dims)
    if (h < 1) throw std::invalid_argument("hidden layer widths must be >= 1");
}

std::uint64_t ExpertConfig::hash() const { return config_hash(to_json()); }

// ---- network ------------------------------------------------------------

Expert::Expert(const ExpertConfig& config, int feature_dim, int index)
    : config_(config), feature_dim_(feature_dim), index_(index) {
  config_.validate();
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  params_.assign(param_count(config_, feature_dim), 0.0);
  normalizer_.mean.assign(feature_dim, 0.0);
  normalizer_.inv_std.assign(feature_dim, 1.0);
}

std::vector<std::pair<int, int>> Expert::layer_shapes() const {
  std::vector<std::pair<int, int>> shapes;
  int in = input_dim();
  for (int h : config_.hidden_dims) {
    shapes.emplace_back(h, in);
    in = h;
  }
  shapes.emplace_back(config_.latent_dim, in);
  return shapes;
}

std::size_t Expert::param_count(const ExpertConfig& config, int feature_dim) {
  std::size_t n = 0;
  int in = (2 * config.context + 1) * feature_dim;
  for (int h : config.hidden_dims) {
    n += static_cast<std::size_t>(h) * in + h;
    in = h;
  }
  n += static_cast<std::size_t>(config.latent_dim) * in + config.latent_dim;
  return n + config.latent_dim + 1;
}

void Expert::initialize(std::uint64_t seed) {
  Rng rng(seed);
  std::size_t off = 0;
  for (auto [out, in] : layer_shapes()) {
    const double limit = std::sqrt(6.0 / in);
    for (std::size_t k = 0; k < static_cast<std::size_t>(out) * in; ++k)
      params_[off++] = limit * (2.0 * uniform01(rng) - 1.0);
    for (int k = 0; k < out; ++k) params_[off++] = 0.0;
  }
  const double limit = std::sqrt(6.0 / (config_.latent_dim + 1));
  for (int k = 0; k < config_.latent_dim; ++k) params_[off++] = limit * (2.0 * uniform01(rng) - 1.0);
  params_[off++] = 0.0;
}

RowMatrix build_inputs(const Expert& expert, const FeatureMatrix& features) {
  const int f_dim = expert.feature_dim();
  if (features.cols != f_dim)
    throw std::invalid_argument("feature matrix has " + std::to_string(features.cols) +
                                " columns, expert expects " + std::to_string(f_dim));
  const int ctx = expert.config().context;
  const auto& norm = expert.normalizer();
  RowMatrix x = RowMatrix::Zero(features.rows, expert.input_dim());
  for (int t = 0; t < features.rows; ++t) {
    for (int k = -ctx; k <= ctx; ++k) {
      const int src = t + k;
      if (src < 0 || src >= features.rows) continue;
      const int col0 = (k + ctx) * f_dim;
      for (int c = 0; c < f_dim; ++c)
        x(t, col0 + c) = (features.at(src, c) - norm.mean[c]) * norm.inv_std[c];
    }
  }
  return x;
}

namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Activations of one forward pass over stacked frames.
struct ForwardPass {
  std::vector<RowMatrix> pre;   // pre-activation per layer
  std::vector<RowMatrix> post;  // post-ReLU per layer; back() is H
  Eigen::VectorXd logits;
  Eigen::VectorXd p_raw;
};

ForwardPass run_forward(const Expert& e, const RowMatrix& x) {
  ForwardPass fp;
  const auto& params = e.params();
  std::size_t off = 0;
  const RowMatrix* a = &x;
  for (auto [out, in] : e.layer_shapes()) {
    ConstMap w(params.data() + off, out, in);
    off += static_cast<std::size_t>(out) * in;
    ConstVecMap b(params.data() + off, out);
    off += out;
    RowMatrix z = (*a) * w.transpose();
    z.rowwise() += b.transpose();
    fp.post.push_back(z.cwiseMax(0.0));
    fp.pre.push_back(std::move(z));
    a = &fp.post.back();
  }
  ConstVecMap head(params.data() + off, e.latent_dim());
  const double bias = params[off + e.latent_dim()];
  fp.logits = (*a) * head;
  fp.logits.array() += bias;
  fp.p_raw = fp.logits.unaryExpr([](double z) { return sigmoid(z); });
  for (Eigen::Index i = 0; i < fp.logits.size(); ++i)
    if (!std::isfinite(fp.logits[i]))
      throw std::runtime_error("non-finite activation in expert " + std::to_string(e.index()));
  return fp;
}

// Backpropagates d loss / d H and d loss / d logits into `grad`.
void run_backward(const Expert& e, const RowMatrix& x, const ForwardPass& fp,
                  const Eigen::VectorXd& d_logits, RowMatrix d_h, std::vector<double>& grad) {
  const auto& params = e.params();
  const auto shapes = e.layer_shapes();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (auto [out, in] : shapes) {
    offsets.push_back(off);
    off += static_cast<std::size_t>(out) * in + out;
  }
  const std::size_t head_off = off;
  ConstVecMap head(params.data() + head_off, e.latent_dim());

  const RowMatrix& h = fp.post.back();
  Eigen::Map<Eigen::VectorXd>(grad.data() + head_off, e.latent_dim()) += h.transpose() * d_logits;
  grad[head_off + e.latent_dim()] += d_logits.sum();
  d_h.noalias() += d_logits * head.transpose();

  RowMatrix d_a = std::move(d_h);
  for (int l = static_cast<int>(shapes.size()) - 1; l >= 0; --l) {
    const auto [out, in] = shapes[l];
    RowMatrix d_z = d_a.cwiseProduct((fp.pre[l].array() > 0.0).cast<double>().matrix());
    const RowMatrix& a_prev = l == 0 ? x : fp.post[l - 1];
    Eigen::Map<RowMatrix>(grad.data() + offsets[l], out, in) += d_z.transpose() * a_prev;
    Eigen::Map<Eigen::VectorXd>(grad.data() + offsets[l] + static_cast<std::size_t>(out) * in,
                                out) += d_z.colwise().sum().transpose();
    if (l > 0) {
      ConstMap w(params.data() + offsets[l], out, in);
      d_a = d_z * w;
    }
  }
}

std::vector<double> row_mean(const RowMatrix& m, Eigen::Index begin, Eigen::Index count) {
  Eigen::VectorXd s = m.middleRows(begin, count).colwise().sum().transpose() / double(count);
  return {s.data(), s.data() + s.size()};
}

struct PrevCache {
  // mean latent per sample per previous expert, indexed by dataset position
  std::vector<std::vector<std::vector<double>>> mean_latents;
};

LossBreakdown loss_impl(std::span<const LabeledClip* const> batch,
                        std::span<const RowMatrix* const> inputs, const Expert& expert,
                        const std::vector<Expert>& prev,
                        const std::vector<const std::vector<std::vector<double>>*>* prev_means,
                        std::vector<double>* grad) {
  const auto n_samples = static_cast<double>(batch.size());
  if (batch.empty()) throw std::invalid_argument("empty batch");
  Eigen::Index total_rows = 0;
  for (const auto* x : inputs) total_rows += x->rows();
  RowMatrix x(total_rows, expert.input_dim());
  std::vector<Eigen::Index> starts;
  Eigen::Index r = 0;
  for (const auto* xi : inputs) {
    starts.push_back(r);
    x.middleRows(r, xi->rows()) = *xi;
    r += xi->rows();
  }

  const ForwardPass fp = run_forward(expert, x);
  const RowMatrix& h = fp.post.back();
  LossBreakdown out;
  Eigen::VectorXd d_logits = Eigen::VectorXd::Zero(total_rows);
  RowMatrix d_h = RowMatrix::Zero(total_rows, expert.latent_dim());
  double bce_sum = 0.0;

  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& clip = *batch[j];
    const Eigen::Index m = inputs[j]->rows();
    if (static_cast<Eigen::Index>(clip.targets.size()) != m)
      throw std::invalid_argument("target length does not match feature rows for '" +
                                  clip.features.clip_id + "'");
    bce_sum += bce_sample_loss(std::span<const double>(fp.p_raw.data() + starts[j], m), clip.targets);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index row = starts[j] + i;
      if (fp.p_raw[row] > kProbClamp && fp.p_raw[row] < 1.0 - kProbClamp)
        d_logits[row] = (fp.p_raw[row] - clip.targets[i]) / n_samples;
    }

    const auto& cfg = expert.config();
    if (!cfg.use_distillation || prev.empty()) continue;
    if (!cfg.per_frame_distillation) {
      const std::vector<double> h_now = row_mean(h, starts[j], m);
      std::vector<std::vector<double>> h_prev;
      if (prev_means) {
        h_prev = *(*prev_means)[j];
      } else {
        for (const auto& pe : prev) h_prev.push_back(run_clip(pe, clip.features).mean_latent);
      }
      out.dis += cfg.dis_weight * distillation_loss(h_now, h_prev, cfg.u, cfg.y0) / n_samples;
      if (grad) {
        const auto g = distillation_loss_grad(h_now, h_prev, cfg.u, cfg.y0);
        Eigen::Map<const Eigen::RowVectorXd> gv(g.data(), static_cast<Eigen::Index>(g.size()));
        d_h.middleRows(starts[j], m).rowwise() += gv * (cfg.dis_weight / (n_samples * double(m)));
      }
    } else {
      std::vector<RowMatrix> prev_h;
      for (const auto& pe : prev) prev_h.push_back(run_forward(pe, build_inputs(pe, clip.features)).post.back());
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index row = starts[j] + i;
        std::vector<double> h_now(h.row(row).data(), h.row(row).data() + h.cols());
        std::vector<std::vector<double>> h_prev;
        for (const auto& ph : prev_h) h_prev.emplace_back(ph.row(i).data(), ph.row(i).data() + ph.cols());
        acc += distillation_loss(h_now, h_prev, cfg.u, cfg.y0);
        if (grad) {
          const auto g = distillation_loss_grad(h_now, h_prev, cfg.u, cfg.y0);
          for (int k = 0; k < expert.latent_dim(); ++k)
            d_h(row, k) += g[k] * cfg.dis_weight / (n_samples * double(m));
        }
      }
      out.dis += cfg.dis_weight * acc / double(m) / n_samples;
    }
  }
  out.bce = bce_sum / n_samples;
  out.total = out.bce + out.dis;

  if (grad) {
    grad->assign(expert.params().size(), 0.0);
    run_backward(expert, x, fp, d_logits, std::move(d_h), *grad);
  }
  return out;
}

}  // namespace

FrameOutput forward(const Expert& expert, const FeatureMatrix& features, int frame) {
  if (frame < 0 || frame >= features.rows) throw std::out_of_range("frame index out of range");
  const RowMatrix all = build_inputs(expert, features);
  const RowMatrix x = all.row(frame);
  const ForwardPass fp = run_forward(expert, x);
  FrameOutput out;
  const auto& h = fp.post.back();
  out.h.assign(h.data(), h.data() + h.cols());
  out.p = clamp_prob(fp.p_raw[0]);
  return out;
}

ClipOutput run_clip(const Expert& expert, const FeatureMatrix& features) {
  ClipOutput out;
  if (features.rows == 0) return out;
  const ForwardPass fp = run_forward(expert, build_inputs(expert, features));
  out.p.resize(features.rows);
  for (int i = 0; i < features.rows; ++i) out.p[i] = clamp_prob(fp.p_raw[i]);
  out.mean_latent = row_mean(fp.post.back(), 0, features.rows);
  return out;
}

// ---- losses -------------------------------------------------------------

double bce_sample_loss(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) throw std::invalid_argument("bce: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_prob(p[i]);
    s -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return s;
}

double bce_loss(const std::vector<std::vector<double>>& p,
                const std::vector<std::vector<double>>& y) {
  if (p.size() != y.size()) throw std::invalid_argument("bce: sample count mismatch");
  if (p.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) s += bce_sample_loss(p[j], y[j]);
  return s / static_cast<double>(p.size());
}

std::vector<std::vector<double>> bce_loss_grad(const std::vector<std::vector<double>>& p,
                                               const std::vector<std::vector<double>>& y) {
  if (p.size() != y.size()) throw std::invalid_argument("bce: sample count mismatch");
  std::vector<std::vector<double>> g(p.size());
  const double n = static_cast<double>(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j].size() != y[j].size()) throw std::invalid_argument("bce: length mismatch");
    g[j].resize(p[j].size());
    for (std::size_t i = 0; i < p[j].size(); ++i) {
      const double q = p[j][i];
      const bool inside = q > kProbClamp && q < 1.0 - kProbClamp;
      g[j][i] = inside ? (-y[j][i] / q + (1.0 - y[j][i]) / (1.0 - q)) / n : 0.0;
    }
  }
  return g;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_sim: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double distillation_loss(std::span<const double> h_now,
                         const std::vector<std::vector<double>>& h_prev, double u, double y0) {
  if (h_prev.empty()) return 0.0;
  double s = 0.0;
  for (const auto& hp : h_prev) {
    const double excess = std::max(0.0, cosine_sim(h_now, hp) - u);
    s += y0 * 0.5 * excess * excess;
  }
  return s / static_cast<double>(h_prev.size());
}

std::vector<double> distillation_loss_grad(std::span<const double> h_now,
                                           const std::vector<std::vector<double>>& h_prev,
                                           double u, double y0) {
  std::vector<double> g(h_now.size(), 0.0);
  if (h_prev.empty()) return g;
  double na = 0.0;
  for (double v : h_now) na += v * v;
  if (na == 0.0) return g;
  const double norm_a = std::sqrt(na);
  for (const auto& hp : h_prev) {
    if (hp.size() != h_now.size()) throw std::invalid_argument("distillation: dimension mismatch");
    double nb = 0.0, dot = 0.0;
    for (std::size_t k = 0; k < hp.size(); ++k) {
      nb += hp[k] * hp[k];
      dot += h_now[k] * hp[k];
    }
    if (nb == 0.0) continue;
    const double norm_b = std::sqrt(nb);
    const double c = dot / (norm_a * norm_b);
    if (c <= u) continue;
    const double coef = y0 * (c - u) / static_cast<double>(h_prev.size());
    for (std::size_t k = 0; k < g.size(); ++k)
      g[k] += coef * (hp[k] / (norm_a * norm_b) - c * h_now[k] / na);
  }
  return g;
}

LossBreakdown total_loss(std::span<const LabeledClip* const> batch, const Expert& expert,
                         const std::vector<Expert>& prev, std::vector<double>* grad) {
  std::vector<RowMatrix> xs;
  xs.reserve(batch.size());
  for (const auto* c : batch) xs.push_back(build_inputs(expert, c->features));
  std::vector<const RowMatrix*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  return loss_impl(batch, ptrs, expert, prev, nullptr, grad);
}

LossBreakdown total_loss(const Dataset& batch, const Expert& expert,
                         const std::vector<Expert>& prev, std::vector<double>* grad) {
  std::vector<const LabeledClip*> ptrs;
  for (const auto& c : batch) ptrs.push_back(&c);
  return total_loss(std::span<const LabeledClip* const>(ptrs), expert, prev, grad);
}

// ---- training -----------------------------------------------------------

FeatureNormalizer fit_normalizer(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("cannot fit a normalizer on an empty dataset");
  const int dim = data.front().features.cols;
  FeatureNormalizer n;
  n.mean.assign(dim, 0.0);
  n.inv_std.assign(dim, 1.0);
  std::vector<double> sq(dim, 0.0);
  double count = 0.0;
  for (const auto& c : data) {
    if (c.features.cols != dim) throw std::invalid_argument("inconsistent feature dimensions");
    for (int t = 0; t < c.features.rows; ++t)
      for (int k = 0; k < dim; ++k) {
        const double v = c.features.at(t, k);
        n.mean[k] += v;
        sq[k] += v * v;
      }
    count += c.features.rows;
  }
  if (count == 0) throw std::invalid_argument("dataset has no frames");
  for (int k = 0; k < dim; ++k) {
    n.mean[k] /= count;
    const double var = std::max(sq[k] / count - n.mean[k] * n.mean[k], 0.0);
    n.inv_std[k] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return n;
}

double frame_accuracy(const Expert& expert, const Dataset& data) {
  double correct = 0.0, total = 0.0;
  for (const auto& c : data) {
    const auto out = run_clip(expert, c.features);
    for (std::size_t i = 0; i < out.p.size(); ++i) {
      const bool pred_genuine = (1.0 - out.p[i]) < 0.5;
      const bool genuine = c.targets[i] >= 0.5;
      correct += pred_genuine == genuine;
    }
    total += static_cast<double>(out.p.size());
  }
  return total > 0 ? correct / total : 0.0;
}

Expert train_expert(const Dataset& train, const std::vector<Expert>& prev,
                    const ExpertConfig& config, const Dataset* val,
                    std::vector<TrainingLogRow>* log) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  const int index = static_cast<int>(prev.size());
  Expert expert(config, train.front().features.cols, index);
  expert.initialize(config.shared_init ? config.seed
                                       : derive_seed(config.seed, 0x1a170000ULL + static_cast<std::uint64_t>(index)));
  expert.normalizer() = fit_normalizer(train);
  if (config.epochs == 0) return expert;

  for (const auto& c : train)
    if (c.targets.size() != static_cast<std::size_t>(c.features.rows))
      throw std::invalid_argument("clip '" + c.features.clip_id + "' lacks per-frame targets");

  std::vector<RowMatrix> inputs;
  inputs.reserve(train.size());
  for (const auto& c : train) inputs.push_back(build_inputs(expert, c.features));

  const bool distill = config.use_distillation && !prev.empty();
  std::vector<std::vector<std::vector<double>>> prev_means;
  if (distill && !config.per_frame_distillation) {
    prev_means.resize(train.size());
    for (std::size_t j = 0; j < train.size(); ++j)
      for (const auto& pe : prev) prev_means[j].push_back(run_clip(pe, train[j].features).mean_latent);
  }
  const std::vector<Expert> no_prev;
  const std::vector<Expert>& loss_prev = distill ? prev : no_prev;

  Rng order_rng(derive_seed(config.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(index)));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto& params = expert.params();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad;
  long long step = 0;
  const Dataset& acc_set = val ? *val : train;
  double accuracy = 0.0;

  for (int epoch = 1;; ++epoch) {
    const bool extending = epoch > config.epochs;
    if (extending && (accuracy >= config.accuracy_floor || epoch > config.max_epochs)) break;
    std::shuffle(order.begin(), order.end(), order_rng);
    LossBreakdown sum;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      std::vector<const LabeledClip*> batch;
      std::vector<const RowMatrix*> xs;
      std::vector<const std::vector<std::vector<double>>*> means;
      for (std::size_t k = b; k < e; ++k) {
        batch.push_back(&train[order[k]]);
        xs.push_back(&inputs[order[k]]);
        if (!prev_means.empty()) means.push_back(&prev_means[order[k]]);
      }
      const LossBreakdown l =
          loss_impl(batch, xs, expert, loss_prev, prev_means.empty() ? nullptr : &means, &grad);
      if (!std::isfinite(l.total))
        throw std::runtime_error("expert " + std::to_string(index) + " diverged at epoch " +
                                 std::to_string(epoch) + " (non-finite loss)");
      const double w = static_cast<double>(e - b);
      sum.bce += l.bce * w;
      sum.dis += l.dis * w;
      sum.total += l.total * w;

      ++step;
      const double c1 = 1.0 - std::pow(config.adam_beta1, double(step));
      const double c2 = 1.0 - std::pow(config.adam_beta2, double(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        m[k] = config.adam_beta1 * m[k] + (1.0 - config.adam_beta1) * grad[k];
        v[k] = config.adam_beta2 * v[k] + (1.0 - config.adam_beta2) * grad[k] * grad[k];
        params[k] -= config.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.adam_eps);
      }
    }
    accuracy = frame_accuracy(expert, acc_set);
    if (log) {
      const double n = static_cast<double>(train.size());
      log->push_back({epoch, sum.bce / n, sum.dis / n, sum.total / n, accuracy});
    }
  }
  if (accuracy < config.accuracy_floor)
    std::clog << "warning: expert " << index << " reached frame accuracy " << accuracy
              << " below the floor " << config.accuracy_floor << "\n";
  return expert;
}

Ensemble train_ensemble(const Dataset& train, const ExpertConfig& config, int n,
                        const Dataset* val, std::vector<Expert> existing,
                        const std::function<void(const Expert&, const std::vector<TrainingLogRow>&)>&
                            on_trained) {
  if (n < 1) throw std::invalid_argument("ensemble size must be >= 1");
  if (static_cast<int>(existing.size()) > n)
    throw std::invalid_argument("more existing experts than requested");
  Ensemble ens;
  ens.experts = std::move(existing);
  while (ens.size() < n) {
    std::vector<TrainingLogRow> log;
    ens.experts.push_back(train_expert(train, ens.experts, config, val, &log));
    if (on_trained) on_trained(ens.experts.back(), log);
  }
  return ens;
}

// ---- persistence --------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'S', 'D', 'E', 'E', 'X', 'P', 'T', '1'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::string& where) {
  T v;
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw std::runtime_error(where + ": truncated checkpoint");
  return v;
}

void put_block(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_block(std::ifstream& f, std::vector<double>& v, const std::string& where) {
  if (!f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw std::runtime_error(where + ": truncated checkpoint");
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Expert& expert) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(kCkptMagic, sizeof(kCkptMagic));
  put<std::uint64_t>(f, expert.config().hash());
  put<std::uint32_t>(f, static_cast<std::uint32_t>(expert.index()));
  put<std::uint32_t>(f, static_cast<std::uint32_t>(expert.latent_dim()));
  put<std::uint32_t>(f, static_cast<std::uint32_t>(expert.feature_dim()));
  put<std::uint32_t>(f, 0);
  put<std::uint64_t>(f, expert.params().size());
  put_block(f, expert.normalizer().mean);
  put_block(f, expert.normalizer().inv_std);
  put_block(f, expert.params());
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

Expert read_checkpoint(const std::filesystem::path& path, const ExpertConfig& config) {
  const std::string where = path.string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + where);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw std::runtime_error(where + ": not an expert checkpoint");
  const auto hash = get<std::uint64_t>(f, where);
  if (hash != config.hash())
    throw std::runtime_error(where + ": config hash mismatch (" + hex64(hash) + " vs " +
                             hex64(config.hash()) + ")");
  const auto index = get<std::uint32_t>(f, where);
  const auto latent = get<std::uint32_t>(f, where);
  const auto feature_dim = get<std::uint32_t>(f, where);
  (void)get<std::uint32_t>(f, where);
  const auto count = get<std::uint64_t>(f, where);
  if (static_cast<int>(latent) != config.latent_dim)
    throw std::runtime_error(where + ": latent dimension mismatch");
  Expert e(config, static_cast<int>(feature_dim), static_cast<int>(index));
  if (count != e.params().size()) throw std::runtime_error(where + ": parameter count mismatch");
  get_block(f, e.normalizer().mean, where);
  get_block(f, e.normalizer().inv_std, where);
  get_block(f, e.params(), where);
  for (double p : e.params())
    if (!std::isfinite(p)) throw std::runtime_error(where + ": non-finite parameter");
  return e;
}

void write_training_log(const std::filesystem::path& path, const std::vector<TrainingLogRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << "epoch,bce,dis_loss,total,val_accuracy\n" << std::setprecision(10);
  for (const auto& r : rows)
    f << r.epoch << ',' << r.bce << ',' << r.dis_loss << ',' << r.total << ',' << r.val_accuracy << '\n';
}

}  // namespace sdeloc
