#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "priorformer/autodiff.hpp"
#include "priorformer/config.hpp"
#include "priorformer/tensor.hpp"

namespace priorformer {

// Parameter containers are templated on the element so that one layout serves
// stored values (Tensor), graph-bound handles (Var) and gradients (Tensor).

template <class T>
struct EncoderLayerT {
  T w_q, w_k, w_v, w_o;    // [D x D], no biases
  T ff_w1, ff_b1;          // [D x D_ff], [D_ff]
  T ff_w2, ff_b2;          // [D_ff x D], [D]
  T ln1_gain, ln1_bias;    // after attention
  T ln2_gain, ln2_bias;    // after feed-forward
};

template <class T>
struct EncoderParamsT {
  T feat_w, feat_b;   // [C_feat x D], [D]
  T cont_w, cont_b;   // [C_cont x D], [D]
  T dist_w, dist_b;   // [C_dist x D], [D]
  T quality_token;    // [D]
  T pos_embed;        // [(N+3) x D]; rows N+1, N+2 belong to the prior tokens
  std::vector<EncoderLayerT<T>> layers;
};

template <class T>
struct GruCellT {
  T w_z, w_r, w_h;  // [D x Dh]
  T u_z, u_r, u_h;  // [Dh x Dh]
  T b_z, b_r, b_h;  // [Dh]
};

// The recurrent cell is absent when the GRU is ablated; the head then reads
// the encoder output directly and w_fc is [D x 1] instead of [Dh x 1].
template <class T>
struct TemporalParamsT {
  std::optional<GruCellT<T>> cell;
  T w_fc, b_fc;  // [Dh x 1], [1]
};

template <class T>
struct ModelParamsT {
  EncoderParamsT<T> encoder;
  TemporalParamsT<T> temporal;
};

using EncoderLayerParams = EncoderLayerT<Tensor>;
using EncoderParams = EncoderParamsT<Tensor>;
using GruCellParams = GruCellT<Tensor>;
using TemporalParams = TemporalParamsT<Tensor>;
using ModelParams = ModelParamsT<Tensor>;

using EncoderLayerVars = EncoderLayerT<Var>;
using EncoderVars = EncoderParamsT<Var>;
using GruCellVars = GruCellT<Var>;
using TemporalVars = TemporalParamsT<Var>;
using ModelVars = ModelParamsT<Var>;

// Calls f(name, member) for every parameter in a fixed order. Works on const
// and mutable containers of any element type.
template <class Model, class F>
void visit_params(Model& m, F&& f) {
  auto& e = m.encoder;
  f(std::string("encoder.feature_proj.weight"), e.feat_w);
  f(std::string("encoder.feature_proj.bias"), e.feat_b);
  f(std::string("encoder.content_proj.weight"), e.cont_w);
  f(std::string("encoder.content_proj.bias"), e.cont_b);
  f(std::string("encoder.distortion_proj.weight"), e.dist_w);
  f(std::string("encoder.distortion_proj.bias"), e.dist_b);
  f(std::string("encoder.quality_token"), e.quality_token);
  f(std::string("encoder.pos_embed"), e.pos_embed);
  for (std::size_t i = 0; i < e.layers.size(); ++i) {
    auto& l = e.layers[i];
    const std::string p = "encoder.layers." + std::to_string(i) + ".";
    f(p + "attn.w_q", l.w_q);
    f(p + "attn.w_k", l.w_k);
    f(p + "attn.w_v", l.w_v);
    f(p + "attn.w_o", l.w_o);
    f(p + "ff.w1", l.ff_w1);
    f(p + "ff.b1", l.ff_b1);
    f(p + "ff.w2", l.ff_w2);
    f(p + "ff.b2", l.ff_b2);
    f(p + "ln1.gain", l.ln1_gain);
    f(p + "ln1.bias", l.ln1_bias);
    f(p + "ln2.gain", l.ln2_gain);
    f(p + "ln2.bias", l.ln2_bias);
  }
  auto& t = m.temporal;
  if (t.cell) {
    auto& c = *t.cell;
    f(std::string("temporal.gru.w_z"), c.w_z);
    f(std::string("temporal.gru.w_r"), c.w_r);
    f(std::string("temporal.gru.w_h"), c.w_h);
    f(std::string("temporal.gru.u_z"), c.u_z);
    f(std::string("temporal.gru.u_r"), c.u_r);
    f(std::string("temporal.gru.u_h"), c.u_h);
    f(std::string("temporal.gru.b_z"), c.b_z);
    f(std::string("temporal.gru.b_r"), c.b_r);
    f(std::string("temporal.gru.b_h"), c.b_h);
  }
  f(std::string("temporal.fc.weight"), t.w_fc);
  f(std::string("temporal.fc.bias"), t.b_fc);
}

// Same layout (layer count, cell presence) with default-constructed elements.
template <class U, class T>
ModelParamsT<U> same_layout(const ModelParamsT<T>& m) {
  ModelParamsT<U> out;
  out.encoder.layers.resize(m.encoder.layers.size());
  if (m.temporal.cell) out.temporal.cell.emplace();
  return out;
}

template <class T>
std::vector<T*> param_refs(ModelParamsT<T>& m) {
  std::vector<T*> refs;
  visit_params(m, [&](const std::string&, T& x) { refs.push_back(&x); });
  return refs;
}

template <class T>
std::vector<const T*> param_refs(const ModelParamsT<T>& m) {
  std::vector<const T*> refs;
  visit_params(m, [&](const std::string&, const T& x) { refs.push_back(&x); });
  return refs;
}

std::vector<std::string> param_names(const ModelParams& m);
std::size_t parameter_count(const ModelParams& m);

// Expected shape of every parameter, derived from the configuration alone.
ModelParams zero_params(const ModelConfig& config);

// Seeded initialisation: uniform(+-1/sqrt(fan_in)) weights, zero biases,
// unit layer-norm gains, normal(0, 0.02) quality token and position embeddings.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Leaves of `g`; trainable ones receive gradients.
ModelVars bind_params(Graph& g, const ModelParams& params, bool trainable);
ModelParams collect_grads(const Graph& g, const ModelVars& vars);

}  // namespace priorformer
