// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/config.hpp"
#include "taste/tokenizer.hpp"

#include <string>

namespace taste {

// Tokenizer-side model bundle: frozen encoder, aggregator, quantizer and unit
// decoder, plus the metadata needed to run it stand-alone from a checkpoint.
struct TasteModel {
    TokenizerConfig tok_cfg;
    DecoderConfig dec_cfg;
    std::string variant = "enc+agg+quan";
    int d_in = 16;
    int asr_vocab = 0;
    int unit_vocab = 48; // decoder head covers unit_vocab + 1 (end symbol)
    int num_speakers = 8;
    bool word_average = true;

    ad::ParamStore enc;
    ad::ParamStore agg;
    ad::ParamStore dec;
    tok::QuantizerState quant;

    bool uses_aggregator() const {
        return variant == "enc+agg" || variant == "enc+agg+quan" || variant == "text-only";
    }
    bool uses_quantizer() const { return variant == "enc+agg+quan"; }
    bool frame_conditioned() const { return variant == "enc-only" || variant == "enc-last"; }
    bool text_only() const { return variant == "text-only"; }
};

// Fresh parameter bundle for the configured variant; quantizer starts
// disabled (warmup pass-through).
TasteModel init_taste_model(const RunConfig& rc, int d_in, int asr_vocab, int unit_vocab,
                            int num_speakers);

void save_taste_model(const TasteModel& m, const std::string& path);
TasteModel load_taste_model(const std::string& path);

// Joint text-speech language model: frozen base backbone plus adapter-side
// parameters (low-rank deltas, speech input pathway, prediction heads).
struct SlmModel {
    SlmConfig cfg;
    std::string mode = "token"; // token | embed
    int llm_vocab = 0;
    int rvq_layers = 0;
    int codebook_size = 0;
    int d_z = 0;

    ad::ParamStore base;
    ad::ParamStore adapter;

    int bos_id() const { return llm_vocab; }
    int eos_id() const { return llm_vocab + 1; }
    int text_classes() const { return llm_vocab + 2; }
};

void save_slm_model(const SlmModel& m, const std::string& path);
SlmModel load_slm_model(const std::string& path);

} // namespace taste
