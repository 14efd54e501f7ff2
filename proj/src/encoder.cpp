#include "priorformer/encoder.hpp"

#include <cmath>
#include <string>

#include "priorformer/errors.hpp"

namespace priorformer {
namespace {

void require_shape(Var v, const Shape& expected, const char* what) {
  if (v.shape() != expected) {
    throw DimensionError(std::string(what) + ": expected " + shape_str(expected) + ", got " + shape_str(v.shape()));
  }
}

Var as_row(Var v) { return ad::reshape(v, {1, v.value().size()}); }

Var as_vector(Var v) { return ad::reshape(v, {v.value().size()}); }

// Encoder params bound as graph constants, for the value-level wrappers.
EncoderVars bind_encoder(Graph& g, const EncoderParams& params) {
  ModelParams holder;
  holder.encoder = params;
  ModelVars vars = same_layout<Var>(holder);
  auto src = param_refs(holder);
  auto dst = param_refs(vars);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src[i]->empty()) *dst[i] = g.constant(*src[i]);
  }
  return vars.encoder;
}

}  // namespace

Var project_features(Var raw, const EncoderVars& params, const EncoderConfig& config) {
  require_shape(raw, {config.tokens, config.c_feat}, "feature map (N x C_feat)");
  return ad::add_bias(ad::matmul(raw, params.feat_w), params.feat_b);
}

PriorTokens project_priors(Var content, Var distortion, const EncoderVars& params, const EncoderConfig& config) {
  require_shape(content, {config.c_cont}, "content embedding (C_cont)");
  require_shape(distortion, {config.c_dist}, "distortion embedding (C_dist)");
  return {as_vector(ad::add_bias(ad::matmul(as_row(content), params.cont_w), params.cont_b)),
          as_vector(ad::add_bias(ad::matmul(as_row(distortion), params.dist_w), params.dist_b))};
}

Var assemble_tokens(Var features, std::optional<Var> content_token, std::optional<Var> distortion_token,
                    const EncoderVars& params) {
  const std::size_t n = features.value().rows();
  const std::size_t d = features.value().cols();
  if (params.pos_embed.value().rows() != n + 3 || params.quality_token.value().size() != d) {
    throw DimensionError("assemble_tokens: " + std::to_string(n) + " feature tokens of width " + std::to_string(d) +
                         " do not fit position embeddings " + shape_str(params.pos_embed.shape()));
  }
  const Var& pe = params.pos_embed;
  std::vector<Var> rows;
  rows.push_back(ad::add(as_row(params.quality_token), ad::slice_rows(pe, 0, 1)));
  rows.push_back(ad::add(features, ad::slice_rows(pe, 1, n)));
  if (content_token) rows.push_back(ad::add(as_row(*content_token), ad::slice_rows(pe, n + 1, 1)));
  if (distortion_token) rows.push_back(ad::add(as_row(*distortion_token), ad::slice_rows(pe, n + 2, 1)));
  return ad::concat_rows(rows);
}

AttentionOutput mha(Var tokens, const EncoderLayerVars& layer, std::size_t heads) {
  const std::size_t d = tokens.value().cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("mha: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Var q = ad::matmul(tokens, layer.w_q);
  Var k = ad::matmul(tokens, layer.w_k);
  Var v = ad::matmul(tokens, layer.w_v);

  AttentionOutput out;
  std::vector<Var> per_head;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : ad::slice_cols(q, h * dk, dk);
    Var kh = heads == 1 ? k : ad::slice_cols(k, h * dk, dk);
    Var vh = heads == 1 ? v : ad::slice_cols(v, h * dk, dk);
    Var weights = ad::softmax(ad::scale(ad::matmul(qh, ad::transpose(kh)), scale), 1);
    out.head_weights.push_back(weights);
    per_head.push_back(ad::matmul(weights, vh));
  }
  Var joined = heads == 1 ? per_head.front() : ad::concat_cols(per_head);
  out.output = ad::matmul(joined, layer.w_o);
  return out;
}

Var encoder_layer(Var tokens, const EncoderLayerVars& layer, const EncoderConfig& config) {
  const double eps = config.layer_norm_eps;
  Var attended = mha(tokens, layer, config.heads).output;
  Var mid = ad::layer_norm(ad::add(attended, tokens), layer.ln1_gain, layer.ln1_bias, eps);
  Var hidden = ad::gelu(ad::add_bias(ad::matmul(mid, layer.ff_w1), layer.ff_b1));
  Var ff = ad::add_bias(ad::matmul(hidden, layer.ff_w2), layer.ff_b2);
  return ad::layer_norm(ad::add(ff, mid), layer.ln2_gain, layer.ln2_bias, eps);
}

Var encode_frame(Var raw, Var content, Var distortion, const EncoderVars& params, const EncoderConfig& config,
                 const Ablation& ablation) {
  Var features = project_features(raw, params, config);
  std::optional<Var> content_token, distortion_token;
  if (ablation.use_content_token || ablation.use_distortion_token) {
    PriorTokens priors = project_priors(content, distortion, params, config);
    if (ablation.use_content_token) content_token = priors.content;
    if (ablation.use_distortion_token) distortion_token = priors.distortion;
  }
  Var z = assemble_tokens(features, content_token, distortion_token, params);
  for (const auto& layer : params.layers) z = encoder_layer(z, layer, config);
  return as_vector(ad::slice_rows(z, 0, 1));
}

Tensor encode_frame(const Tensor& raw, const Tensor& content, const Tensor& distortion, const EncoderParams& params,
                    const EncoderConfig& config, const Ablation& ablation) {
  Graph g;
  EncoderVars vars = bind_encoder(g, params);
  return encode_frame(g.constant(raw), g.constant(content), g.constant(distortion), vars, config, ablation).value();
}

Tensor assemble_tokens(const Tensor& raw, const Tensor& content, const Tensor& distortion,
                       const EncoderParams& params, const EncoderConfig& config, const Ablation& ablation) {
  Graph g;
  EncoderVars vars = bind_encoder(g, params);
  Var features = project_features(g.constant(raw), vars, config);
  PriorTokens priors = project_priors(g.constant(content), g.constant(distortion), vars, config);
  return assemble_tokens(features, ablation.use_content_token ? std::optional<Var>(priors.content) : std::nullopt,
                         ablation.use_distortion_token ? std::optional<Var>(priors.distortion) : std::nullopt, vars)
      .value();
}

}  // namespace priorformer
