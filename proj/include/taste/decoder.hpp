// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/config.hpp"
#include "taste/model.hpp"
#include "taste/nn.hpp"

#include <vector>

namespace taste::dec {

struct FuseBuild {
    ad::Var z_joint;
    ad::Var p_sp;
    ad::Var p_txt;
};

// Weighted-sum modality fusion: standardize both inputs per position, softmax
// the two learnable scalars "<store>.fuse_wsp"/"<store>.fuse_wtxt", take the
// convex combination. zero_speech_branch forces the speech coefficient to 0
// while leaving p_txt at its softmax value (the text-only ablation).
FuseBuild build_fuse(ad::Graph& g, const nn::ParamFn& p, ad::Var taste_embed, ad::Var text_embed,
                     bool zero_speech_branch);

// Plain-matrix fusion with explicit weights.
Mat fuse(const Mat& taste_embed, const Mat& text_embed, double w_sp, double w_txt,
         bool zero_speech_branch = false);

void init_decoder(ad::ParamStore& ps, const DecoderConfig& cfg, int d_z, int d_h, int asr_vocab,
                  int unit_vocab, int num_speakers, Rng& rng);

// Teacher-forced unit decoder. The condition sequence (speaker embedding,
// then the fused text+speech positions, or text and frame positions for the
// frame-conditioned variants) is bidirectionally visible; unit positions are
// causal. Returns logits for [BOS, u_1 .. u_P] -> (P+1) x (U+1).
ad::Var build_unit_decoder(ad::Graph& g, const nn::ParamFn& p, const TasteModel& model,
                           ad::Var speech_cond, // aligned [K x d_z] or frames [T x d_h]; may be invalid
                           const std::vector<int>& text_tokens, int speaker_id,
                           const std::vector<int>& unit_prefix);

// Convenience wrapper producing plain logits from model parameters.
Mat unit_decoder_forward(const TasteModel& model, const Mat& speech_cond,
                         const std::vector<int>& text_tokens, int speaker_id,
                         const std::vector<int>& unit_prefix);

// Autoregressive generation: greedy (top_k = 0) or seeded top-k sampling with
// temperature; halts at the end symbol or decode_cfg.max_steps.
std::vector<int> generate_units(const TasteModel& model, const Mat& speech_cond,
                                const std::vector<int>& text_tokens, int speaker_id,
                                const DecodeConfig& decode_cfg, uint64_t seed);

} // namespace taste::dec
