// SPDX-License-Identifier: Apache-2.0
#include "taste/tokenizer.hpp"

#include "taste/model.hpp"

#include <cmath>

namespace taste::tok {

// ---------------------------------------------------------------------------
// encoder

void init_encoder(ad::ParamStore& ps, const TokenizerConfig& cfg, int d_in, int unit_vocab,
                  Rng& rng) {
    nn::init_linear(ps, "enc.in", d_in, cfg.d_h, rng);
    for (int i = 0; i < cfg.encoder_layers; ++i)
        nn::init_transformer_block(ps, "enc.l" + std::to_string(i), cfg.d_h, cfg.encoder_ffn_mult,
                                   rng);
    nn::init_linear(ps, "enc.head", cfg.d_h, unit_vocab, rng);
}

EncoderBuild build_encoder(ad::Graph& g, const nn::ParamFn& p, const Mat& features,
                           const TokenizerConfig& cfg, bool with_pretext_head) {
    require_arg(features.rows() > 0, "encode: empty utterance (T = 0)");
    const int t = static_cast<int>(features.rows());
    const int l = cfg.shallow_layer;
    require_config((l >= 1 && l <= cfg.encoder_layers / 2) || l == cfg.encoder_layers,
                   "encode: shallow layer outside [1, L/2] without the last-layer variant");

    ad::Var x = nn::linear(g, p, "enc.in", g.constant(features));
    x = g.add_const(x, ad::sinusoidal_positions(t, cfg.d_h));

    EncoderBuild out;
    for (int i = 0; i < cfg.encoder_layers; ++i) {
        x = nn::transformer_block(g, p, "enc.l" + std::to_string(i), x, cfg.encoder_heads);
        if (i + 1 == l) out.h_shallow = x;
        if (i + 1 == cfg.encoder_layers) out.h_last = x;
    }
    if (with_pretext_head) out.pretext_logits = nn::linear(g, p, "enc.head", out.h_last);
    return out;
}

EncoderStates encode(const Mat& features, const ad::ParamStore& enc, const TokenizerConfig& cfg) {
    ad::Graph g;
    // constants only: downstream losses cannot reach encoder parameters
    nn::ParamFn p = [&](const std::string& name) { return g.constant(enc.at(name)); };
    EncoderBuild b = build_encoder(g, p, features, cfg, false);
    EncoderStates st;
    st.h_last = g.value(b.h_last);
    st.h_shallow = g.value(b.h_shallow);
    st.layer_index_l = cfg.shallow_layer;
    return st;
}

// ---------------------------------------------------------------------------
// aggregator

void init_aggregator(ad::ParamStore& ps, const TokenizerConfig& cfg, int asr_vocab, Rng& rng) {
    ps.add("agg.text_embed", rng.gaussian_mat(asr_vocab, cfg.d_z, 0.2));
    for (int i = 0; i < cfg.agg_layers; ++i) {
        // queries come from the text embedding (layer 0) or the previous
        // layer output; keys/values from the encoder states
        nn::init_attention(ps, "agg.l" + std::to_string(i), cfg.d_z, cfg.d_h, cfg.d_h, cfg.d_z,
                           rng);
    }
}

ad::Var build_aggregator(ad::Graph& g, const nn::ParamFn& p, ad::Var text_embed, ad::Var h_last,
                         ad::Var h_shallow, const TokenizerConfig& cfg,
                         std::vector<ad::Var>* attn_out) {
    require_arg(g.value(text_embed).rows() >= 1, "aggregate: empty text query");
    require_arg(g.value(h_last).rows() >= 1, "aggregate: empty encoder states");
    require_config(g.value(text_embed).cols() == g.value(p("agg.l0.wq")).rows(),
                   "aggregate: text embedding width does not match the query projection");

    ad::Var values = cfg.values_use_last ? h_last : h_shallow;
    ad::Var q = text_embed;
    for (int i = 0; i < cfg.agg_layers; ++i)
        q = nn::multihead_attention(g, p, "agg.l" + std::to_string(i), q, h_last, values,
                                    cfg.agg_heads, nullptr, attn_out);
    return q;
}

Mat aggregate(const Mat& text_embed, const EncoderStates& states, const ad::ParamStore& agg,
              const TokenizerConfig& cfg, std::vector<Mat>* attn_out) {
    ad::Graph g;
    nn::ParamFn p = [&](const std::string& name) { return g.constant(agg.at(name)); };
    std::vector<ad::Var> attn_vars;
    ad::Var z = build_aggregator(g, p, g.constant(text_embed), g.constant(states.h_last),
                                 g.constant(states.h_shallow), cfg,
                                 attn_out != nullptr ? &attn_vars : nullptr);
    if (attn_out != nullptr)
        for (ad::Var a : attn_vars) attn_out->push_back(g.value(a));
    return g.value(z);
}

// ---------------------------------------------------------------------------
// quantizer

void QuantizerState::reset_epoch_usage() {
    epoch_usage.assign(static_cast<size_t>(layers()),
                       std::vector<long>(static_cast<size_t>(codebook_size()), 0));
}

QuantizerState make_quantizer(int layers, int codebook_size, int dim, Rng& rng) {
    require_arg(layers >= 1 && codebook_size >= 1 && dim >= 1, "make_quantizer: bad shape");
    QuantizerState st;
    for (int r = 0; r < layers; ++r) {
        st.codebooks.push_back(rng.gaussian_mat(codebook_size, dim, 0.1));
        st.ema_size.push_back(Vec::Ones(codebook_size));
        st.ema_sum.push_back(st.codebooks.back());
    }
    st.reset_epoch_usage();
    return st;
}

namespace {

// plain sequential accumulation so results are reproducible against a
// straightforward oracle
double sq_dist(const Mat& a, int arow, const Mat& b, int brow) {
    double d = 0;
    for (int j = 0; j < a.cols(); ++j) {
        double diff = a(arow, j) - b(brow, j);
        d += diff * diff;
    }
    return d;
}

int nearest_code(const Mat& residual, int row, const Mat& codebook) {
    int best = 0;
    double best_d = sq_dist(residual, row, codebook, 0);
    for (int c = 1; c < codebook.rows(); ++c) {
        double d = sq_dist(residual, row, codebook, c);
        if (d < best_d) { // strict: ties keep the lowest index
            best_d = d;
            best = c;
        }
    }
    return best;
}

} // namespace

QuantizeResult quantize(const Mat& z, const QuantizerState& st) {
    require_arg(st.enabled,
                "quantize: quantizer disabled (use the pass-through during warmup)");
    require_arg(st.dim() == z.cols(), "quantize: dimension mismatch with codebooks");
    const int n = static_cast<int>(z.rows());
    const int r_layers = st.layers();

    QuantizeResult qr;
    qr.codes = IMat(r_layers, n);
    Mat residual = z;
    for (int r = 0; r < r_layers; ++r) {
        qr.residuals.push_back(residual);
        Mat picked(n, st.dim());
        for (int i = 0; i < n; ++i) {
            int c = nearest_code(residual, i, st.codebooks[static_cast<size_t>(r)]);
            qr.codes(r, i) = c;
            picked.row(i) = st.codebooks[static_cast<size_t>(r)].row(c);
        }
        qr.quantized.push_back(picked);
        residual -= picked;
        if (r == 0)
            qr.embedding = picked;
        else
            qr.embedding += picked;
    }
    return qr;
}

Mat dequantize(const IMat& codes, const QuantizerState& st) {
    require_arg(codes.rows() == st.layers(), "dequantize: layer count mismatch");
    const int n = static_cast<int>(codes.cols());
    Mat out;
    for (int r = 0; r < st.layers(); ++r) {
        Mat picked(n, st.dim());
        for (int i = 0; i < n; ++i) {
            int c = codes(r, i);
            require_arg(c >= 0 && c < st.codebook_size(),
                        "dequantize: code " + std::to_string(c) + " out of range at layer " +
                            std::to_string(r) + ", position " + std::to_string(i));
            picked.row(i) = st.codebooks[static_cast<size_t>(r)].row(c);
        }
        if (r == 0)
            out = picked;
        else
            out += picked;
    }
    return out;
}

void quantizer_kmeans_init(QuantizerState& st, const Mat& batch, Rng& rng) {
    require_arg(batch.rows() >= 1, "kmeans init: empty batch");
    require_arg(batch.cols() == st.dim(), "kmeans init: dimension mismatch");
    const int c = st.codebook_size();
    const int m = static_cast<int>(batch.rows());

    Mat residual = batch;
    for (int r = 0; r < st.layers(); ++r) {
        Mat& book = st.codebooks[static_cast<size_t>(r)];
        // seed centers from distinct samples where possible
        for (int i = 0; i < c; ++i) {
            int pick = rng.uniform_int(m);
            book.row(i) = residual.row(pick);
            if (i >= m) book.row(i) += 0.01 * rng.gaussian_mat(1, st.dim(), 1.0).row(0);
        }
        std::vector<int> assign(static_cast<size_t>(m), 0);
        for (int iter = 0; iter < 8; ++iter) {
            for (int i = 0; i < m; ++i) assign[static_cast<size_t>(i)] = nearest_code(residual, i, book);
            Mat sums = Mat::Zero(c, st.dim());
            Vec counts = Vec::Zero(c);
            for (int i = 0; i < m; ++i) {
                sums.row(assign[static_cast<size_t>(i)]) += residual.row(i);
                counts(assign[static_cast<size_t>(i)]) += 1.0;
            }
            for (int k = 0; k < c; ++k) {
                if (counts(k) > 0)
                    book.row(k) = sums.row(k) / counts(k);
                else
                    book.row(k) = residual.row(rng.uniform_int(m));
            }
        }
        // seed the EMA statistics from the final assignment
        Mat sums = Mat::Zero(c, st.dim());
        Vec counts = Vec::Zero(c);
        for (int i = 0; i < m; ++i) {
            int k = nearest_code(residual, i, book);
            assign[static_cast<size_t>(i)] = k;
            sums.row(k) += residual.row(i);
            counts(k) += 1.0;
        }
        st.ema_sum[static_cast<size_t>(r)] = sums + 0.01 * book;
        st.ema_size[static_cast<size_t>(r)] = counts.array() + 0.01;
        for (int i = 0; i < m; ++i) residual.row(i) -= book.row(assign[static_cast<size_t>(i)]);
    }
}

void quantizer_ema_update(QuantizerState& st, const QuantizeResult& qr, double decay) {
    const int c = st.codebook_size();
    for (int r = 0; r < st.layers(); ++r) {
        Mat sums = Mat::Zero(c, st.dim());
        Vec counts = Vec::Zero(c);
        const Mat& res = qr.residuals[static_cast<size_t>(r)];
        for (int i = 0; i < res.rows(); ++i) {
            int k = qr.codes(r, static_cast<int>(i));
            sums.row(k) += res.row(i);
            counts(k) += 1.0;
            st.epoch_usage[static_cast<size_t>(r)][static_cast<size_t>(k)] += 1;
        }
        st.ema_size[static_cast<size_t>(r)] =
            decay * st.ema_size[static_cast<size_t>(r)] + (1.0 - decay) * counts;
        st.ema_sum[static_cast<size_t>(r)] =
            decay * st.ema_sum[static_cast<size_t>(r)] + (1.0 - decay) * sums;
        for (int k = 0; k < c; ++k) {
            if (st.ema_size[static_cast<size_t>(r)](k) > 1e-3)
                st.codebooks[static_cast<size_t>(r)].row(k) =
                    st.ema_sum[static_cast<size_t>(r)].row(k) /
                    st.ema_size[static_cast<size_t>(r)](k);
        }
    }
}

void quantizer_reseed_dead(QuantizerState& st, const std::vector<Mat>& recent_residuals,
                           Rng& rng) {
    require_arg(static_cast<int>(recent_residuals.size()) == st.layers(),
                "reseed: need a residual buffer per layer");
    for (int r = 0; r < st.layers(); ++r) {
        const Mat& pool = recent_residuals[static_cast<size_t>(r)];
        if (pool.rows() == 0) continue;
        for (int k = 0; k < st.codebook_size(); ++k) {
            if (st.epoch_usage[static_cast<size_t>(r)][static_cast<size_t>(k)] != 0) continue;
            int pick = rng.uniform_int(static_cast<int>(pool.rows()));
            st.codebooks[static_cast<size_t>(r)].row(k) = pool.row(pick);
            st.ema_sum[static_cast<size_t>(r)].row(k) = pool.row(pick);
            st.ema_size[static_cast<size_t>(r)](k) = 1.0;
        }
    }
}

// ---------------------------------------------------------------------------
// full tokenize pipeline

TokenizeResult tokenize_utterance(const Mat& features, const corpus::Transcription& tr,
                                  const taste::TasteModel& model) {
    require_arg(!tr.words.empty() && !tr.asr_tokens.empty(), "tokenize: empty transcription");
    require_arg(model.uses_quantizer() && model.quant.enabled,
                "tokenize: variant '" + model.variant + "' does not produce token codes");

    EncoderStates states = encode(features, model.enc, model.tok_cfg);

    Mat text_embed(static_cast<long>(tr.asr_tokens.size()), model.tok_cfg.d_z);
    const Mat& table = model.agg.at("agg.text_embed");
    for (size_t i = 0; i < tr.asr_tokens.size(); ++i) {
        int id = tr.asr_tokens[i];
        require_arg(id >= 0 && id < table.rows(), "tokenize: ASR token id out of range");
        text_embed.row(static_cast<long>(i)) = table.row(id);
    }

    TokenizeResult out;
    out.z = aggregate(text_embed, states, model.agg, model.tok_cfg);
    Mat z_word = align::word_average(out.z, tr.asr_groups);

    QuantizeResult qw = quantize(z_word, model.quant);
    out.codes_word = qw.codes;
    out.embedding_word = qw.embedding;

    if (model.word_average) {
        // training used word-constant embeddings; token-level codes repeat
        // the word codes across each ASR group
        out.codes = IMat(qw.codes.rows(), static_cast<long>(tr.asr_tokens.size()));
        out.embedding = Mat(static_cast<long>(tr.asr_tokens.size()), model.tok_cfg.d_z);
        for (size_t w = 0; w < tr.asr_groups.size(); ++w) {
            for (int i = tr.asr_groups[w].first; i < tr.asr_groups[w].second; ++i) {
                out.codes.col(i) = qw.codes.col(static_cast<long>(w));
                out.embedding.row(i) = qw.embedding.row(static_cast<long>(w));
            }
        }
    } else {
        QuantizeResult qt = quantize(out.z, model.quant);
        out.codes = qt.codes;
        out.embedding = qt.embedding;
    }
    return out;
}

} // namespace taste::tok
