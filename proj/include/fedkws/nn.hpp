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

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedkws/tensor.hpp"

namespace fedkws {

enum class LayerKind { kDense, kSvdf, kBottleneck };
enum class Activation { kLinear, kRelu };

// A single layer of the network. Svdf is a rank-1 factored convolution: per
// output node, a feature-stage filter over the input frame followed by a
// time-stage filter over the last `memory` feature-stage outputs plus a bias.
// Bottleneck is a dense projection with a forced linear activation.
struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t memory = 1;  // Svdf only
  Activation activation = Activation::kLinear;
};

std::string layer_name(const LayerSpec& spec);
void validate_layer(const LayerSpec& spec);

// Dense/Bottleneck: output_dim * (input_dim + 1).
// Svdf: output_dim * (input_dim + memory + 1).
std::size_t param_count(const LayerSpec& spec);

// Offsets of each layer's parameter block in the flat vector. offsets has
// one entry per layer plus a trailing total.
struct ParamLayout {
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
};
ParamLayout make_layout(std::span<const LayerSpec> specs);

// Flat parameter vector for a stack of layers; the layout is a pure function
// of the layer specs.
struct ModelParams {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ModelParams& o) const = default;
};

ModelParams flatten_params(std::span<const LayerSpec> specs,
                           std::span<const std::vector<double>> per_layer);
std::vector<std::span<const double>> unflatten_params(std::span<const LayerSpec> specs,
                                                      const ModelParams& params);

// Streaming state for one Svdf layer: the last `memory` feature-stage output
// frames, oldest first. Zero-initialized at sequence start.
struct SvdfState {
  Tensor2 history;  // memory x output_dim
  std::size_t frames_seen = 0;

  static SvdfState init(const LayerSpec& spec);
};

// One streaming step of an Svdf layer. `params` is the layer's block of the
// flat vector; `frame` must have input_dim entries. Advances `state`.
std::vector<double> svdf_forward(const LayerSpec& spec, std::span<const double> params,
                                 std::span<const double> frame, SvdfState& state);

std::vector<double> dense_forward(const LayerSpec& spec, std::span<const double> params,
                                  std::span<const double> frame);

// Forward activations cached for the backward pass.
struct LayerCache {
  Tensor2 input;    // T x input_dim
  Tensor2 feature;  // T x output_dim, Svdf feature stage only
  Tensor2 preact;   // T x output_dim
  Tensor2 output;   // T x output_dim
  bool valid = false;
};

// Runs the layer over a whole sequence (rows of `input` are frames). Svdf
// state starts at zero; frames before the sequence contribute zero to the
// time-stage sum.
Tensor2 layer_forward(const LayerSpec& spec, std::span<const double> params, const Tensor2& input,
                      LayerCache* cache = nullptr);

struct LayerGrads {
  std::vector<double> param_grad;
  Tensor2 input_grad;
};

// Backpropagates `upstream` (dLoss/dOutput, T x output_dim) through the
// cached forward pass.
LayerGrads layer_backward(const LayerSpec& spec, std::span<const double> params,
                          const LayerCache& cache, const Tensor2& upstream);

}  // namespace fedkws
