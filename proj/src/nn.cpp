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

#include "fedkws/nn.hpp"

#include <algorithm>
#include <stdexcept>

#include "fedkws/error.hpp"

namespace fedkws {

namespace {

double apply_act(Activation act, double z) {
  return act == Activation::kRelu ? (z > 0.0 ? z : 0.0) : z;
}

double act_grad(Activation act, double z) {
  return act == Activation::kRelu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

Activation effective_activation(const LayerSpec& spec) {
  // Bottleneck projections are linear by definition.
  return spec.kind == LayerKind::kBottleneck ? Activation::kLinear : spec.activation;
}

void check_frame_dim(const LayerSpec& spec, std::size_t got) {
  if (got != spec.input_dim) {
    throw std::invalid_argument(cat(layer_name(spec), ": input frame has dim ", got,
                                    ", expected ", spec.input_dim));
  }
}

void check_param_slice(const LayerSpec& spec, std::size_t got) {
  if (got != param_count(spec)) {
    throw std::invalid_argument(cat(layer_name(spec), ": parameter slice has ", got,
                                    " values, expected ", param_count(spec)));
  }
}

// Svdf parameter block layout: [a: out x in][b: out x memory][bias: out].
struct SvdfView {
  std::span<const double> a, b, bias;

  SvdfView(const LayerSpec& spec, std::span<const double> p)
      : a(p.subspan(0, spec.output_dim * spec.input_dim)),
        b(p.subspan(spec.output_dim * spec.input_dim, spec.output_dim * spec.memory)),
        bias(p.subspan(spec.output_dim * (spec.input_dim + spec.memory), spec.output_dim)) {}

  std::span<const double> a_node(const LayerSpec& s, std::size_t n) const {
    return a.subspan(n * s.input_dim, s.input_dim);
  }
  std::span<const double> b_node(const LayerSpec& s, std::size_t n) const {
    return b.subspan(n * s.memory, s.memory);
  }
};

// Dense parameter block layout: [W: out x in][bias: out].
struct DenseView {
  std::span<const double> w, bias;

  DenseView(const LayerSpec& spec, std::span<const double> p)
      : w(p.subspan(0, spec.output_dim * spec.input_dim)),
        bias(p.subspan(spec.output_dim * spec.input_dim, spec.output_dim)) {}

  std::span<const double> w_row(const LayerSpec& s, std::size_t n) const {
    return w.subspan(n * s.input_dim, s.input_dim);
  }
};

}  // namespace

std::string layer_name(const LayerSpec& spec) {
  const char* kind = spec.kind == LayerKind::kDense      ? "dense"
                     : spec.kind == LayerKind::kSvdf     ? "svdf"
                                                         : "bottleneck";
  std::string s = cat(kind, "(", spec.input_dim, "->", spec.output_dim);
  if (spec.kind == LayerKind::kSvdf) s += cat(",m=", spec.memory);
  return s + ")";
}

void validate_layer(const LayerSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1) {
    throw std::invalid_argument(cat(layer_name(spec), ": dims must be >= 1"));
  }
  if (spec.kind == LayerKind::kSvdf && spec.memory < 1) {
    throw std::invalid_argument(cat(layer_name(spec), ": svdf memory must be >= 1"));
  }
}

std::size_t param_count(const LayerSpec& spec) {
  if (spec.kind == LayerKind::kSvdf) {
    return spec.output_dim * (spec.input_dim + spec.memory + 1);
  }
  return spec.output_dim * (spec.input_dim + 1);
}

ParamLayout make_layout(std::span<const LayerSpec> specs) {
  ParamLayout layout;
  layout.offsets.reserve(specs.size() + 1);
  std::size_t off = 0;
  for (const auto& spec : specs) {
    validate_layer(spec);
    layout.offsets.push_back(off);
    off += param_count(spec);
  }
  layout.offsets.push_back(off);
  layout.total = off;
  return layout;
}

ModelParams flatten_params(std::span<const LayerSpec> specs,
                           std::span<const std::vector<double>> per_layer) {
  if (specs.size() != per_layer.size()) {
    throw std::invalid_argument(cat("flatten_params: ", specs.size(), " specs but ",
                                    per_layer.size(), " layer blocks"));
  }
  ModelParams out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (per_layer[i].size() != param_count(specs[i])) {
      throw std::invalid_argument(cat("flatten_params: layer ", i, " (", layer_name(specs[i]),
                                      ") has ", per_layer[i].size(), " values, expected ",
                                      param_count(specs[i])));
    }
    out.values.insert(out.values.end(), per_layer[i].begin(), per_layer[i].end());
  }
  return out;
}

std::vector<std::span<const double>> unflatten_params(std::span<const LayerSpec> specs,
                                                      const ModelParams& params) {
  const ParamLayout layout = make_layout(specs);
  if (params.size() != layout.total) {
    throw std::invalid_argument(cat("unflatten_params: flat vector has ", params.size(),
                                    " values, layout expects ", layout.total));
  }
  std::vector<std::span<const double>> views;
  views.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    views.push_back(std::span<const double>(params.values)
                        .subspan(layout.offsets[i], layout.offsets[i + 1] - layout.offsets[i]));
  }
  return views;
}

SvdfState SvdfState::init(const LayerSpec& spec) {
  SvdfState s;
  s.history = Tensor2(spec.memory, spec.output_dim, 0.0);
  s.frames_seen = 0;
  return s;
}

std::vector<double> svdf_forward(const LayerSpec& spec, std::span<const double> params,
                                 std::span<const double> frame, SvdfState& state) {
  validate_layer(spec);
  check_frame_dim(spec, frame.size());
  check_param_slice(spec, params.size());
  if (state.history.rows != spec.memory || state.history.cols != spec.output_dim) {
    throw std::invalid_argument(cat(layer_name(spec), ": state buffer is ", state.history.rows,
                                    "x", state.history.cols, ", expected ", spec.memory, "x",
                                    spec.output_dim));
  }
  const SvdfView v(spec, params);
  const Activation act = effective_activation(spec);

  // Feature stage for frame t, appended to the ring; slot index cycles.
  const std::size_t slot = state.frames_seen % spec.memory;
  for (std::size_t n = 0; n < spec.output_dim; ++n) {
    state.history.at(slot, n) = dot(v.a_node(spec, n), frame);
  }
  state.frames_seen++;

  std::vector<double> out(spec.output_dim);
  const std::size_t avail = std::min<std::size_t>(state.frames_seen, spec.memory);
  for (std::size_t n = 0; n < spec.output_dim; ++n) {
    double z = v.bias[n];
    const auto b = v.b_node(spec, n);
    for (std::size_t tau = 0; tau < avail; ++tau) {
      // history slot of frame (t - tau)
      const std::size_t hs = (slot + spec.memory - tau) % spec.memory;
      z += b[tau] * state.history.at(hs, n);
    }
    out[n] = apply_act(act, z);
  }
  return out;
}

std::vector<double> dense_forward(const LayerSpec& spec, std::span<const double> params,
                                  std::span<const double> frame) {
  validate_layer(spec);
  check_frame_dim(spec, frame.size());
  check_param_slice(spec, params.size());
  const DenseView v(spec, params);
  const Activation act = effective_activation(spec);
  std::vector<double> out(spec.output_dim);
  for (std::size_t n = 0; n < spec.output_dim; ++n) {
    out[n] = apply_act(act, dot(v.w_row(spec, n), frame) + v.bias[n]);
  }
  return out;
}

Tensor2 layer_forward(const LayerSpec& spec, std::span<const double> params, const Tensor2& input,
                      LayerCache* cache) {
  validate_layer(spec);
  check_frame_dim(spec, input.cols);
  check_param_slice(spec, params.size());
  const std::size_t t_len = input.rows;
  const Activation act = effective_activation(spec);
  Tensor2 output(t_len, spec.output_dim);
  Tensor2 preact(t_len, spec.output_dim);
  Tensor2 feature;

  if (spec.kind == LayerKind::kSvdf) {
    const SvdfView v(spec, params);
    feature = Tensor2(t_len, spec.output_dim);
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto x = input.row(t);
      for (std::size_t n = 0; n < spec.output_dim; ++n) {
        feature.at(t, n) = dot(v.a_node(spec, n), x);
      }
      for (std::size_t n = 0; n < spec.output_dim; ++n) {
        double z = v.bias[n];
        const auto b = v.b_node(spec, n);
        const std::size_t avail = std::min<std::size_t>(t + 1, spec.memory);
        for (std::size_t tau = 0; tau < avail; ++tau) {
          z += b[tau] * feature.at(t - tau, n);
        }
        preact.at(t, n) = z;
        output.at(t, n) = apply_act(act, z);
      }
    }
  } else {
    const DenseView v(spec, params);
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto x = input.row(t);
      for (std::size_t n = 0; n < spec.output_dim; ++n) {
        const double z = dot(v.w_row(spec, n), x) + v.bias[n];
        preact.at(t, n) = z;
        output.at(t, n) = apply_act(act, z);
      }
    }
  }

  if (cache != nullptr) {
    cache->input = input;
    cache->feature = std::move(feature);
    cache->preact = std::move(preact);
    cache->output = output;
    cache->valid = true;
  }
  return output;
}

LayerGrads layer_backward(const LayerSpec& spec, std::span<const double> params,
                          const LayerCache& cache, const Tensor2& upstream) {
  validate_layer(spec);
  check_param_slice(spec, params.size());
  if (!cache.valid) {
    throw std::invalid_argument(cat(layer_name(spec), ": backward called without a forward cache"));
  }
  const std::size_t t_len = cache.input.rows;
  if (upstream.rows != t_len || upstream.cols != spec.output_dim) {
    throw std::invalid_argument(cat(layer_name(spec), ": upstream gradient is ", upstream.rows,
                                    "x", upstream.cols, ", expected ", t_len, "x",
                                    spec.output_dim));
  }
  const Activation act = effective_activation(spec);

  LayerGrads grads;
  grads.param_grad.assign(param_count(spec), 0.0);
  grads.input_grad = Tensor2(t_len, spec.input_dim);

  // dLoss/dPreact
  Tensor2 gz(t_len, spec.output_dim);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t n = 0; n < spec.output_dim; ++n) {
      gz.at(t, n) = upstream.at(t, n) * act_grad(act, cache.preact.at(t, n));
    }
  }

  if (spec.kind == LayerKind::kSvdf) {
    const SvdfView v(spec, params);
    std::span<double> ga(grads.param_grad.data(), spec.output_dim * spec.input_dim);
    std::span<double> gb(grads.param_grad.data() + spec.output_dim * spec.input_dim,
                         spec.output_dim * spec.memory);
    std::span<double> gbias(
        grads.param_grad.data() + spec.output_dim * (spec.input_dim + spec.memory),
        spec.output_dim);

    // Gradient wrt the feature stage, accumulated over the time-stage taps.
    Tensor2 gf(t_len, spec.output_dim);
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t n = 0; n < spec.output_dim; ++n) {
        const double g = gz.at(t, n);
        if (g == 0.0) continue;
        gbias[n] += g;
        const auto b = v.b_node(spec, n);
        const std::size_t avail = std::min<std::size_t>(t + 1, spec.memory);
        for (std::size_t tau = 0; tau < avail; ++tau) {
          gb[n * spec.memory + tau] += g * cache.feature.at(t - tau, n);
          gf.at(t - tau, n) += g * b[tau];
        }
      }
    }
    for (std::size_t s = 0; s < t_len; ++s) {
      const auto x = cache.input.row(s);
      auto gx = grads.input_grad.row(s);
      for (std::size_t n = 0; n < spec.output_dim; ++n) {
        const double g = gf.at(s, n);
        if (g == 0.0) continue;
        axpy(g, x, {ga.data() + n * spec.input_dim, spec.input_dim});
        axpy(g, v.a_node(spec, n), gx);
      }
    }
  } else {
    const DenseView v(spec, params);
    std::span<double> gw(grads.param_grad.data(), spec.output_dim * spec.input_dim);
    std::span<double> gbias(grads.param_grad.data() + spec.output_dim * spec.input_dim,
                            spec.output_dim);
    for (std::size_t t = 0; t < t_len; ++t) {
      const auto x = cache.input.row(t);
      auto gx = grads.input_grad.row(t);
      for (std::size_t n = 0; n < spec.output_dim; ++n) {
        const double g = gz.at(t, n);
        if (g == 0.0) continue;
        gbias[n] += g;
        axpy(g, x, {gw.data() + n * spec.input_dim, spec.input_dim});
        axpy(g, v.w_row(spec, n), gx);
      }
    }
  }
  return grads;
}

}  // namespace fedkws
