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

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedkws/nn.hpp"
#include "fedkws/rng.hpp"
#include "fedkws/tensor.hpp"

namespace fedkws {

// Stacked spectral features, one row per 20 ms frame (50 frames per second).
struct FeatureSequence {
  static constexpr double kFramesPerSecond = 50.0;

  Tensor2 frames;  // length x dim

  FeatureSequence() = default;
  explicit FeatureSequence(Tensor2 f) : frames(std::move(f)) {}

  std::size_t length() const { return frames.rows; }
  std::size_t dim() const { return frames.cols; }
  double seconds() const { return static_cast<double>(frames.rows) / kFramesPerSecond; }
};

// Per-frame targets: an encoder sound-unit class per frame, a keyword /
// non-keyword decoder class per frame, and for positives the frame index
// where the keyword ends.
struct FrameLabels {
  std::vector<int> encoder_class;
  std::vector<int> decoder_class;  // 0 = non-keyword, 1 = keyword
  std::optional<std::size_t> end_of_keyword;
  bool is_positive = false;

  std::size_t length() const { return encoder_class.size(); }
  void validate(std::size_t sequence_length, std::size_t encoder_classes) const;
};

// Two-stage network: the encoder maps features to sound-unit logits, the
// decoder maps encoder logits to keyword / non-keyword logits.
struct ModelArch {
  std::vector<LayerSpec> encoder_layers;
  std::vector<LayerSpec> decoder_layers;

  std::size_t feature_dim() const { return encoder_layers.front().input_dim; }
  std::size_t encoder_classes() const { return encoder_layers.back().output_dim; }
  std::size_t decoder_classes() const { return decoder_layers.back().output_dim; }
  std::vector<LayerSpec> all_layers() const;
  ParamLayout layout() const { return make_layout(all_layers()); }
  std::size_t param_count() const { return layout().total; }
  std::uint64_t hash() const;
  void validate() const;
};

// Knobs for the desk-scale default topology; the production-size counterpart
// (7 SVDF + 3 bottleneck stages, ~320k parameters) is out of reach of the
// published description, so widths here are an explicit configuration.
struct ArchShape {
  std::size_t feature_dim = 40;
  std::size_t encoder_svdf_layers = 3;
  std::size_t encoder_svdf_dim = 32;
  std::size_t encoder_svdf_memory = 4;
  std::size_t encoder_bottleneck_dim = 8;
  std::size_t encoder_classes = 4;
  std::size_t decoder_svdf_layers = 2;
  std::size_t decoder_svdf_dim = 16;
  std::size_t decoder_svdf_memory = 8;
};
ModelArch make_arch(const ArchShape& shape);

struct ModelOutput {
  Tensor2 encoder_logits;  // T x encoder_classes
  Tensor2 decoder_logits;  // T x 2

  std::size_t length() const { return decoder_logits.rows; }
};

struct ModelForwardCache {
  std::vector<LayerCache> encoder;
  std::vector<LayerCache> decoder;
  bool valid = false;
};

// Streaming forward pass over the whole sequence; logits at frame t depend
// only on frames <= t.
ModelOutput model_forward(const ModelArch& arch, const ModelParams& params,
                          const FeatureSequence& features, ModelForwardCache* cache = nullptr);

// Backpropagates per-frame logit gradients to a flat parameter gradient.
// The decoder consumes encoder logits, so decoder input gradients are folded
// into the encoder stream.
std::vector<double> model_backward(const ModelArch& arch, const ModelParams& params,
                                   const ModelForwardCache& cache, const Tensor2& encoder_grad,
                                   const Tensor2& decoder_grad);

ModelParams random_init(const ModelArch& arch, Rng& rng);

// Convenience bundle for a frozen model (teacher, checkpoints).
struct Model {
  ModelArch arch;
  ModelParams params;
};

struct LossConfig {
  double alpha = 1.0;            // max-pool loss weight
  double temperature = 0.9;      // teacher softmax temperature
  std::size_t maxpool_window = 10;  // frames before end_of_keyword included in the max
};

struct LossResult {
  double value = 0.0;
  Tensor2 encoder_grad;  // dLoss/dEncoderLogits
  Tensor2 decoder_grad;  // dLoss/dDecoderLogits
};

// Cross-entropy over both streams (mean per frame) plus alpha times the
// max-pool term on the decoder stream: for positives the keyword posterior is
// max-pooled over [end_of_keyword - window, end_of_keyword], for negatives
// the non-keyword posterior at the highest-scoring frame is penalized.
LossResult supervised_loss(const ModelOutput& output, const FrameLabels& labels,
                           const LossConfig& cfg);

// Temperature-softened per-frame target distributions from a frozen teacher.
struct TeacherSoftLabels {
  Tensor2 encoder_probs;  // T x encoder_classes, rows sum to 1
  Tensor2 decoder_probs;  // T x 2, rows sum to 1

  std::size_t length() const { return decoder_probs.rows; }
};

// Mean per-frame cross-entropy of the student's softmax outputs against the
// teacher distributions, encoder and decoder streams summed.
LossResult distillation_loss(const ModelOutput& student, const TeacherSoftLabels& teacher);

TeacherSoftLabels teacher_soft_labels(const ModelArch& arch, const ModelParams& params,
                                      const FeatureSequence& features, double temperature);

struct SpecAugmentConfig {
  std::size_t time_mask_max = 8;  // frames
  std::size_t freq_mask_max = 8;  // feature dims
  std::size_t n_masks = 2;        // per axis
};

// Zeroes up to n_masks random time spans and feature ranges; the input is
// left untouched.
FeatureSequence spec_augment(const FeatureSequence& features, const SpecAugmentConfig& cfg,
                             Rng& rng);

// Keyword posterior per frame after softmax and a trailing moving average.
// Entry i corresponds to frame i + window - 1; frames without a full window
// produce no value.
std::vector<double> smoothed_keyword_posterior(const Tensor2& decoder_logits, std::size_t window);

// Peak smoothed keyword posterior of a model on a sequence (0 if shorter
// than the smoothing window). This is the scalar score used by the detector
// threshold sweep and by the simulated on-device scorer.
double keyword_score(const ModelArch& arch, const ModelParams& params,
                     const FeatureSequence& features, std::size_t smooth_window = 5);

}  // namespace fedkws
