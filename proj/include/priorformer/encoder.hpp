#pragma once

#include <optional>
#include <vector>

#include "priorformer/autodiff.hpp"
#include "priorformer/config.hpp"
#include "priorformer/params.hpp"

namespace priorformer {

// Feature tokens F_{1:N} = raw x W + b. raw: [N x C_feat] -> [N x D].
Var project_features(Var raw, const EncoderVars& params, const EncoderConfig& config);

struct PriorTokens {
  Var content;     // [D]
  Var distortion;  // [D]
};

// Independent affine maps of the two prior embeddings into width D.
PriorTokens project_priors(Var content, Var distortion, const EncoderVars& params, const EncoderConfig& config);

// Z_0 rows, in order: quality token, N feature tokens, content prior,
// distortion prior, each plus its position embedding. An absent prior drops
// its row together with its position embedding; the remaining rows keep the
// embeddings of their full-layout slots.
Var assemble_tokens(Var features, std::optional<Var> content_token, std::optional<Var> distortion_token,
                    const EncoderVars& params);

struct AttentionOutput {
  Var output;                        // [rows x D]
  std::vector<Var> head_weights;     // one [rows x rows] row-stochastic matrix per head
};

// Unmasked multi-head self-attention with 1/sqrt(D/H) scaling; heads are
// concatenated and passed through w_o.
AttentionOutput mha(Var tokens, const EncoderLayerVars& layer, std::size_t heads);

// Post-norm block: Z' = LN(MHA(Z) + Z); Z = LN(FF(Z') + Z'), FF = GELU(Z'W1 + b1)W2 + b2.
Var encoder_layer(Var tokens, const EncoderLayerVars& layer, const EncoderConfig& config);

// Runs the whole encoder and returns the final quality-token row Z_L^0 as [D].
Var encode_frame(Var raw, Var content, Var distortion, const EncoderVars& params, const EncoderConfig& config,
                 const Ablation& ablation);

// Value-level convenience wrappers over a throwaway graph.
Tensor encode_frame(const Tensor& raw, const Tensor& content, const Tensor& distortion, const EncoderParams& params,
                    const EncoderConfig& config, const Ablation& ablation);
Tensor assemble_tokens(const Tensor& raw, const Tensor& content, const Tensor& distortion,
                       const EncoderParams& params, const EncoderConfig& config, const Ablation& ablation);

}  // namespace priorformer
