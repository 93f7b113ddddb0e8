// Copyright 2026 The fedkws Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedkws/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedkws/error.hpp"

namespace fedkws {

namespace {

double logsumexp(std::span<const double> logits) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  return m + std::log(s);
}

void softmax_into(std::span<const double> logits, std::span<double> probs) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - m);
    s += probs[i];
  }
  for (double& p : probs) p /= s;
}

// Mean per-frame cross-entropy of one stream against integer targets, with
// its logit gradient added into `grad`.
double stream_cross_entropy(const Tensor2& logits, const std::vector<int>& targets,
                            Tensor2& grad) {
  const std::size_t t_len = logits.rows;
  std::vector<double> probs(logits.cols);
  double total = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto row = logits.row(t);
    const int c = targets[t];
    if (c < 0 || static_cast<std::size_t>(c) >= logits.cols) {
      throw std::invalid_argument(cat("cross entropy: class ", c, " out of range for ",
                                      logits.cols, " logits"));
    }
    total += logsumexp(row) - row[c];
    softmax_into(row, probs);
    auto g = grad.row(t);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      g[i] += (probs[i] - (static_cast<int>(i) == c ? 1.0 : 0.0)) / static_cast<double>(t_len);
    }
  }
  return total / static_cast<double>(t_len);
}

}  // namespace

void FrameLabels::validate(std::size_t sequence_length, std::size_t encoder_classes) const {
  if (encoder_class.size() != sequence_length || decoder_class.size() != sequence_length) {
    throw std::invalid_argument(cat("frame labels cover ", encoder_class.size(), "/",
                                    decoder_class.size(), " frames, sequence has ",
                                    sequence_length));
  }
  if (is_positive != end_of_keyword.has_value()) {
    throw std::invalid_argument("end_of_keyword must be present exactly for positive examples");
  }
  if (end_of_keyword && *end_of_keyword >= sequence_length) {
    throw std::invalid_argument(cat("end_of_keyword ", *end_of_keyword, " out of range ",
                                    sequence_length));
  }
  for (int c : encoder_class) {
    if (c < 0 || static_cast<std::size_t>(c) >= encoder_classes) {
      throw std::invalid_argument(cat("encoder class ", c, " out of range ", encoder_classes));
    }
  }
  for (int c : decoder_class) {
    if (c != 0 && c != 1) throw std::invalid_argument(cat("decoder class ", c, " not in {0,1}"));
  }
}

std::vector<LayerSpec> ModelArch::all_layers() const {
  std::vector<LayerSpec> layers = encoder_layers;
  layers.insert(layers.end(), decoder_layers.begin(), decoder_layers.end());
  return layers;
}

std::uint64_t ModelArch::hash() const {
  std::string repr;
  for (const auto& l : all_layers()) {
    repr += layer_name(l);
    repr += l.activation == Activation::kRelu ? "/relu;" : "/linear;";
  }
  repr += cat("|enc=", encoder_layers.size());
  return fnv1a64(repr);
}

void ModelArch::validate() const {
  if (encoder_layers.empty() || decoder_layers.empty()) {
    throw std::invalid_argument("arch needs at least one encoder and one decoder layer");
  }
  const auto check_chain = [](const std::vector<LayerSpec>& layers, const char* name) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      validate_layer(layers[i]);
      if (i > 0 && layers[i].input_dim != layers[i - 1].output_dim) {
        throw std::invalid_argument(cat(name, " layer ", i, " input dim ", layers[i].input_dim,
                                        " does not match previous output ",
                                        layers[i - 1].output_dim));
      }
    }
  };
  check_chain(encoder_layers, "encoder");
  check_chain(decoder_layers, "decoder");
  if (decoder_layers.front().input_dim != encoder_layers.back().output_dim) {
    throw std::invalid_argument(cat("decoder input dim ", decoder_layers.front().input_dim,
                                    " does not match encoder output ",
                                    encoder_layers.back().output_dim));
  }
  if (decoder_classes() != 2) {
    throw std::invalid_argument(cat("decoder output dim must be 2, got ", decoder_classes()));
  }
}

ModelArch make_arch(const ArchShape& s) {
  ModelArch arch;
  std::size_t in = s.feature_dim;
  for (std::size_t i = 0; i < s.encoder_svdf_layers; ++i) {
    arch.encoder_layers.push_back({LayerKind::kSvdf, in, s.encoder_svdf_dim,
                                   s.encoder_svdf_memory, Activation::kRelu});
    in = s.encoder_svdf_dim;
  }
  arch.encoder_layers.push_back(
      {LayerKind::kBottleneck, in, s.encoder_bottleneck_dim, 1, Activation::kLinear});
  arch.encoder_layers.push_back(
      {LayerKind::kDense, s.encoder_bottleneck_dim, s.encoder_classes, 1, Activation::kLinear});

  in = s.encoder_classes;
  for (std::size_t i = 0; i < s.decoder_svdf_layers; ++i) {
    arch.decoder_layers.push_back({LayerKind::kSvdf, in, s.decoder_svdf_dim,
                                   s.decoder_svdf_memory, Activation::kRelu});
    in = s.decoder_svdf_dim;
  }
  arch.decoder_layers.push_back({LayerKind::kDense, in, 2, 1, Activation::kLinear});
  arch.validate();
  return arch;
}

ModelOutput model_forward(const ModelArch& arch, const ModelParams& params,
                          const FeatureSequence& features, ModelForwardCache* cache) {
  arch.validate();
  if (features.dim() != arch.feature_dim()) {
    throw std::invalid_argument(cat("features have dim ", features.dim(), ", encoder expects ",
                                    arch.feature_dim()));
  }
  if (features.length() < 1) throw std::invalid_argument("empty feature sequence");
  const auto layers = arch.all_layers();
  const auto views = unflatten_params(layers, params);

  if (cache != nullptr) {
    cache->encoder.assign(arch.encoder_layers.size(), {});
    cache->decoder.assign(arch.decoder_layers.size(), {});
  }

  Tensor2 x = features.frames;
  for (std::size_t i = 0; i < arch.encoder_layers.size(); ++i) {
    x = layer_forward(arch.encoder_layers[i], views[i], x,
                      cache != nullptr ? &cache->encoder[i] : nullptr);
  }
  ModelOutput out;
  out.encoder_logits = x;
  for (std::size_t i = 0; i < arch.decoder_layers.size(); ++i) {
    x = layer_forward(arch.decoder_layers[i], views[arch.encoder_layers.size() + i], x,
                      cache != nullptr ? &cache->decoder[i] : nullptr);
  }
  out.decoder_logits = std::move(x);
  if (cache != nullptr) cache->valid = true;
  return out;
}

std::vector<double> model_backward(const ModelArch& arch, const ModelParams& params,
                                   const ModelForwardCache& cache, const Tensor2& encoder_grad,
                                   const Tensor2& decoder_grad) {
  if (!cache.valid) throw std::invalid_argument("model_backward: no forward cache");
  const auto layers = arch.all_layers();
  const auto layout = make_layout(layers);
  const auto views = unflatten_params(layers, params);
  std::vector<double> param_grad(layout.total, 0.0);

  Tensor2 upstream = decoder_grad;
  for (std::size_t i = arch.decoder_layers.size(); i-- > 0;) {
    const std::size_t li = arch.encoder_layers.size() + i;
    LayerGrads g = layer_backward(arch.decoder_layers[i], views[li], cache.decoder[i], upstream);
    std::copy(g.param_grad.begin(), g.param_grad.end(), param_grad.begin() + layout.offsets[li]);
    upstream = std::move(g.input_grad);
  }
  // The decoder's input is the encoder logit stream.
  for (std::size_t t = 0; t < upstream.rows; ++t) {
    for (std::size_t c = 0; c < upstream.cols; ++c) {
      upstream.at(t, c) += encoder_grad.at(t, c);
    }
  }
  for (std::size_t i = arch.encoder_layers.size(); i-- > 0;) {
    LayerGrads g = layer_backward(arch.encoder_layers[i], views[i], cache.encoder[i], upstream);
    std::copy(g.param_grad.begin(), g.param_grad.end(), param_grad.begin() + layout.offsets[i]);
    upstream = std::move(g.input_grad);
  }
  return param_grad;
}

ModelParams random_init(const ModelArch& arch, Rng& rng) {
  const auto layers = arch.all_layers();
  const auto layout = make_layout(layers);
  ModelParams params;
  params.values.resize(layout.total);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const double sigma = 1.0 / std::sqrt(static_cast<double>(layers[i].input_dim));
    for (std::size_t j = layout.offsets[i]; j < layout.offsets[i + 1]; ++j) {
      params.values[j] = sigma * rng.normal();
    }
  }
  return params;
}

LossResult supervised_loss(const ModelOutput& output, const FrameLabels& labels,
                           const LossConfig& cfg) {
  const std::size_t t_len = output.length();
  if (labels.length() != t_len) {
    throw std::invalid_argument(cat("labels cover ", labels.length(), " frames, output has ",
                                    t_len));
  }
  if (labels.is_positive && !labels.end_of_keyword.has_value()) {
    throw std::invalid_argument("positive example without end_of_keyword");
  }
  if (cfg.alpha < 0.0) throw std::invalid_argument("loss alpha must be >= 0");

  LossResult res;
  res.encoder_grad = Tensor2(t_len, output.encoder_logits.cols);
  res.decoder_grad = Tensor2(t_len, output.decoder_logits.cols);
  res.value = stream_cross_entropy(output.encoder_logits, labels.encoder_class, res.encoder_grad);
  res.value += stream_cross_entropy(output.decoder_logits, labels.decoder_class, res.decoder_grad);

  if (cfg.alpha == 0.0) return res;

  // Max-pool term on the decoder stream. The keyword class is index 1; with
  // two classes, 1 - p_kw equals p_other, so both branches reduce to a
  // cross-entropy at the pooled frame.
  std::size_t lo = 0;
  std::size_t hi = t_len - 1;
  int pooled_class = 1;
  if (labels.is_positive) {
    const std::size_t eok = *labels.end_of_keyword;
    if (eok >= t_len) {
      throw std::invalid_argument(cat("end_of_keyword ", eok, " out of range ", t_len));
    }
    lo = eok >= cfg.maxpool_window ? eok - cfg.maxpool_window : 0;
    hi = eok;
    pooled_class = 1;
  } else {
    pooled_class = 0;
  }
  // argmax of the keyword posterior == argmax of (logit_kw - logsumexp).
  std::size_t best = lo;
  double best_margin = -1e300;
  for (std::size_t t = lo; t <= hi; ++t) {
    const auto row = output.decoder_logits.row(t);
    const double margin = row[1] - logsumexp(row);
    if (margin > best_margin) {
      best_margin = margin;
      best = t;
    }
  }
  const auto row = output.decoder_logits.row(best);
  const double mp = logsumexp(row) - row[pooled_class];
  res.value += cfg.alpha * mp;
  std::vector<double> probs(row.size());
  softmax_into(row, probs);
  auto g = res.decoder_grad.row(best);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    g[i] += cfg.alpha * (probs[i] - (static_cast<int>(i) == pooled_class ? 1.0 : 0.0));
  }
  return res;
}

LossResult distillation_loss(const ModelOutput& student, const TeacherSoftLabels& teacher) {
  const std::size_t t_len = student.length();
  if (teacher.length() != t_len || teacher.encoder_probs.rows != student.encoder_logits.rows ||
      teacher.encoder_probs.cols != student.encoder_logits.cols ||
      teacher.decoder_probs.cols != student.decoder_logits.cols) {
    throw std::invalid_argument(cat("teacher labels (", teacher.encoder_probs.rows, "x",
                                    teacher.encoder_probs.cols, ", ", teacher.decoder_probs.rows,
                                    "x", teacher.decoder_probs.cols,
                                    ") do not match student output (", student.encoder_logits.rows,
                                    "x", student.encoder_logits.cols, ", ",
                                    student.decoder_logits.rows, "x", student.decoder_logits.cols,
                                    ")"));
  }
  LossResult res;
  res.encoder_grad = Tensor2(t_len, student.encoder_logits.cols);
  res.decoder_grad = Tensor2(t_len, student.decoder_logits.cols);

  const auto stream = [t_len](const Tensor2& logits, const Tensor2& targets, Tensor2& grad) {
    std::vector<double> probs(logits.cols);
    double total = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto row = logits.row(t);
      const double lse = logsumexp(row);
      softmax_into(row, probs);
      auto g = grad.row(t);
      for (std::size_t c = 0; c < logits.cols; ++c) {
        total += targets.at(t, c) * (lse - row[c]);
        g[c] += (probs[c] - targets.at(t, c)) / static_cast<double>(t_len);
      }
    }
    return total / static_cast<double>(t_len);
  };
  res.value = stream(student.encoder_logits, teacher.encoder_probs, res.encoder_grad);
  res.value += stream(student.decoder_logits, teacher.decoder_probs, res.decoder_grad);
  return res;
}

TeacherSoftLabels teacher_soft_labels(const ModelArch& arch, const ModelParams& params,
                                      const FeatureSequence& features, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument(cat("softmax temperature must be > 0, got ", temperature));
  }
  const ModelOutput out = model_forward(arch, params, features);
  TeacherSoftLabels labels;
  labels.encoder_probs = Tensor2(out.encoder_logits.rows, out.encoder_logits.cols);
  labels.decoder_probs = Tensor2(out.decoder_logits.rows, out.decoder_logits.cols);
  std::vector<double> scaled;
  const auto soften = [&](const Tensor2& logits, Tensor2& probs) {
    scaled.resize(logits.cols);
    for (std::size_t t = 0; t < logits.rows; ++t) {
      const auto row = logits.row(t);
      for (std::size_t c = 0; c < logits.cols; ++c) scaled[c] = row[c] / temperature;
      softmax_into(scaled, probs.row(t));
    }
  };
  soften(out.encoder_logits, labels.encoder_probs);
  soften(out.decoder_logits, labels.decoder_probs);
  return labels;
}

FeatureSequence spec_augment(const FeatureSequence& features, const SpecAugmentConfig& cfg,
                             Rng& rng) {
  const std::size_t t_len = features.length();
  const std::size_t dim = features.dim();
  if (cfg.time_mask_max > t_len) {
    throw std::invalid_argument(cat("time mask ", cfg.time_mask_max, " exceeds sequence length ",
                                    t_len));
  }
  if (cfg.freq_mask_max > dim) {
    throw std::invalid_argument(cat("freq mask ", cfg.freq_mask_max, " exceeds feature dim ",
                                    dim));
  }
  FeatureSequence out = features;
  for (std::size_t k = 0; k < cfg.n_masks; ++k) {
    const std::size_t len = rng.uniform_below(cfg.time_mask_max + 1);
    if (len > 0) {
      const std::size_t start = rng.uniform_below(t_len - len + 1);
      for (std::size_t t = start; t < start + len; ++t) {
        auto row = out.frames.row(t);
        std::fill(row.begin(), row.end(), 0.0);
      }
    }
  }
  for (std::size_t k = 0; k < cfg.n_masks; ++k) {
    const std::size_t len = rng.uniform_below(cfg.freq_mask_max + 1);
    if (len > 0) {
      const std::size_t start = rng.uniform_below(dim - len + 1);
      for (std::size_t t = 0; t < t_len; ++t) {
        auto row = out.frames.row(t);
        std::fill(row.begin() + start, row.begin() + start + len, 0.0);
      }
    }
  }
  return out;
}

std::vector<double> smoothed_keyword_posterior(const Tensor2& decoder_logits, std::size_t window) {
  if (window < 1) throw std::invalid_argument("smoothing window must be >= 1");
  const std::size_t t_len = decoder_logits.rows;
  if (t_len < window) return {};
  std::vector<double> posterior(t_len);
  std::vector<double> probs(decoder_logits.cols);
  for (std::size_t t = 0; t < t_len; ++t) {
    softmax_into(decoder_logits.row(t), probs);
    posterior[t] = probs[1];
  }
  std::vector<double> smoothed(t_len - window + 1);
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < window; ++j) s += posterior[i + j];
    smoothed[i] = s / static_cast<double>(window);
  }
  return smoothed;
}

double keyword_score(const ModelArch& arch, const ModelParams& params,
                     const FeatureSequence& features, std::size_t smooth_window) {
  const ModelOutput out = model_forward(arch, params, features);
  const auto smoothed = smoothed_keyword_posterior(out.decoder_logits, smooth_window);
  double best = 0.0;
  for (double v : smoothed) best = std::max(best, v);
  return best;
}

}  // namespace fedkws
