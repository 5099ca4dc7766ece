// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/align.hpp"
#include "taste/config.hpp"
#include "taste/corpus.hpp"
#include "taste/nn.hpp"

#include <optional>
#include <string>
#include <vector>

namespace taste {
struct TasteModel;
}

namespace taste::tok {

struct EncoderStates {
    Mat h_last;    // T x d_h
    Mat h_shallow; // T x d_h
    int layer_index_l = 0;
};

// Graph-side encoder forward. Parameter names live under "enc.".
struct EncoderBuild {
    ad::Var h_last;
    ad::Var h_shallow;
    ad::Var pretext_logits; // valid only when with_pretext_head
};

EncoderBuild build_encoder(ad::Graph& g, const nn::ParamFn& p, const Mat& features,
                           const TokenizerConfig& cfg, bool with_pretext_head);

void init_encoder(ad::ParamStore& ps, const TokenizerConfig& cfg, int d_in, int unit_vocab,
                  Rng& rng);

// Inference-path encoder: parameters enter the graph as constants, so no
// gradient can reach them.
EncoderStates encode(const Mat& features, const ad::ParamStore& enc, const TokenizerConfig& cfg);

// Aggregator: query starts from the text embedding, keys are h_last, values
// are h_shallow (or h_last under the last-layer ablation). Names under "agg.".
ad::Var build_aggregator(ad::Graph& g, const nn::ParamFn& p, ad::Var text_embed, ad::Var h_last,
                         ad::Var h_shallow, const TokenizerConfig& cfg,
                         std::vector<ad::Var>* attn_out = nullptr);

void init_aggregator(ad::ParamStore& ps, const TokenizerConfig& cfg, int asr_vocab, Rng& rng);

// Plain-matrix aggregate for inference/tests.
Mat aggregate(const Mat& text_embed, const EncoderStates& states, const ad::ParamStore& agg,
              const TokenizerConfig& cfg, std::vector<Mat>* attn_out = nullptr);

// ---------------------------------------------------------------------------
// Residual vector quantizer with EMA codebook updates.

struct QuantizerState {
    std::vector<Mat> codebooks;            // R x [C x d]
    std::vector<Vec> ema_size;             // EMA cluster mass
    std::vector<Mat> ema_sum;              // EMA cluster vector sums
    std::vector<std::vector<long>> epoch_usage;
    bool enabled = false;

    int layers() const { return static_cast<int>(codebooks.size()); }
    int codebook_size() const { return static_cast<int>(codebooks.empty() ? 0 : codebooks[0].rows()); }
    int dim() const { return static_cast<int>(codebooks.empty() ? 0 : codebooks[0].cols()); }
    void reset_epoch_usage();
};

struct QuantizeResult {
    IMat codes;                 // R x N
    Mat embedding;              // N x d, sum of selected codewords in layer order
    std::vector<Mat> residuals; // z^(r), the input to each layer
    std::vector<Mat> quantized; // zhat^(r), the selected codewords
};

QuantizerState make_quantizer(int layers, int codebook_size, int dim, Rng& rng);

// Greedy per-layer nearest codeword (squared Euclidean, ties to the lowest
// index). Throws if the quantizer is disabled.
QuantizeResult quantize(const Mat& z, const QuantizerState& st);

Mat dequantize(const IMat& codes, const QuantizerState& st);

// k-means (Lloyd) per layer on a warmup batch of aggregator outputs.
void quantizer_kmeans_init(QuantizerState& st, const Mat& batch, Rng& rng);

void quantizer_ema_update(QuantizerState& st, const QuantizeResult& qr, double decay);

// Re-seed codes unused for a full epoch from a buffer of recent residuals.
void quantizer_reseed_dead(QuantizerState& st, const std::vector<Mat>& recent_residuals, Rng& rng);

// ---------------------------------------------------------------------------
// Full tokenizer-side forward used at inference.

struct TokenizeResult {
    IMat codes;        // R x N (per ASR token)
    IMat codes_word;   // R x W (per word, from the word-averaged embedding)
    Mat embedding;     // N x d_z, quantized
    Mat embedding_word; // W x d_z, quantized
    Mat z;             // N x d_z, pre-quantization aggregator output
};

TokenizeResult tokenize_utterance(const Mat& features, const corpus::Transcription& tr,
                                  const taste::TasteModel& model);

} // namespace taste::tok
