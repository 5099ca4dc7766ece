// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/config.hpp"
#include "taste/model.hpp"
#include "taste/nn.hpp"

#include <functional>
#include <vector>

namespace taste::slm {

// One-to-one aligned text/speech streams (lengths always match).
struct JointSequence {
    std::vector<int> text; // llm token ids, length M
    IMat codes;            // R x M (token mode)
    Mat latents;           // M x d_z (embedding mode)

    int length() const { return static_cast<int>(text.size()); }
};

struct JointStep {
    int text_token = -1;
    std::vector<int> codes; // token mode
    Vec latent;             // embedding mode
};

void init_slm_base(SlmModel& m, Rng& rng);
void init_slm_adapters(SlmModel& m, Rng& rng);

struct SlmForward {
    ad::Var text_logits;              // n x (llm_vocab + 2)
    std::vector<ad::Var> code_logits; // R heads of n x codebook_size
    ad::Var mu;                       // n x d_z
    ad::Var log_var;                  // n x d_z
};

// Causal forward over input positions. Inputs are (text id, speech input)
// pairs; position 0 is normally BOS with a zero speech input. With both
// speech pointers null the pure text path runs (the base LM). use_adapters
// switches the low-rank deltas and the speech injection on.
SlmForward build_slm_forward(ad::Graph& g, const nn::ParamFn& p, const SlmModel& m,
                             const std::vector<int>& text_inputs, const IMat* code_inputs,
                             const Mat* latent_inputs, bool use_adapters);

// Plain text logits of the frozen base path (no adapters, no speech).
Mat base_text_logits(const SlmModel& m, const std::vector<int>& text_inputs);

// Total log-probability of the sequence positions >= condition_prefix given
// everything before them. Text terms always; speech terms per mode.
double score_likelihood(const SlmModel& m, const JointSequence& seq, int condition_prefix = 0);

// Word-final test for generated llm tokens; nullptr means every step
// re-predicts its codes.
using WordFinalFn = std::function<bool(int token_id)>;

std::vector<JointStep> continue_joint(const SlmModel& m, const JointSequence& prompt, int steps,
                                      const DecodeConfig& decode_cfg, uint64_t seed,
                                      const WordFinalFn& is_word_final = nullptr);

} // namespace taste::slm
