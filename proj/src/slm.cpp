// SPDX-License-Identifier: Apache-2.0
#include "taste/slm.hpp"

#include <algorithm>
#include <cmath>

namespace taste::slm {

namespace {

double lora_scale(const SlmConfig& cfg) {
    return static_cast<double>(cfg.lora_alpha) / static_cast<double>(cfg.lora_rank);
}

// x (W_base + s A B): base is frozen, A/B live on the adapter side
ad::Var lora_matmul(ad::Graph& g, const nn::ParamFn& p, const std::string& base_name,
                    const std::string& adapter_prefix, ad::Var x, bool use_adapters,
                    double scale) {
    ad::Var out = g.matmul(x, p(base_name));
    if (use_adapters) {
        ad::Var delta = g.matmul(g.matmul(x, p(adapter_prefix + ".A")), p(adapter_prefix + ".B"));
        out = g.add(out, g.scale(delta, scale));
    }
    return out;
}

ad::Var slm_block(ad::Graph& g, const nn::ParamFn& p, const SlmModel& m, int layer, ad::Var x,
                  const Mat& mask, bool use_adapters) {
    const std::string base = "base.l" + std::to_string(layer);
    const std::string adapter = "adapter.l" + std::to_string(layer);
    const double s = lora_scale(m.cfg);

    ad::Var normed = nn::layer_norm(g, p, base + ".ln1", x);
    ad::Var q = lora_matmul(g, p, base + ".attn.wq", adapter + ".wq", normed, use_adapters, s);
    ad::Var k = g.matmul(normed, p(base + ".attn.wk"));
    ad::Var v = lora_matmul(g, p, base + ".attn.wv", adapter + ".wv", normed, use_adapters, s);
    ad::Var mixed = nn::attention_core(g, q, k, v, m.cfg.heads, &mask);
    x = g.add(x, g.matmul(mixed, p(base + ".attn.wo")));

    ad::Var normed2 = nn::layer_norm(g, p, base + ".ln2", x);
    ad::Var ff = nn::linear(g, p, base + ".ffn2", g.gelu(nn::linear(g, p, base + ".ffn1", normed2)));
    return g.add(x, ff);
}

} // namespace

void init_slm_base(SlmModel& m, Rng& rng) {
    const int w = m.cfg.width;
    m.base.add("base.tok_embed", rng.gaussian_mat(m.text_classes(), w, 0.2));
    for (int i = 0; i < m.cfg.layers; ++i) {
        std::string prefix = "base.l" + std::to_string(i);
        nn::init_layer_norm(m.base, prefix + ".ln1", w);
        nn::init_attention(m.base, prefix + ".attn", w, w, w, w, rng);
        nn::init_layer_norm(m.base, prefix + ".ln2", w);
        nn::init_linear(m.base, prefix + ".ffn1", w, w * m.cfg.ffn_mult, rng);
        nn::init_linear(m.base, prefix + ".ffn2", w * m.cfg.ffn_mult, w, rng);
    }
    nn::init_layer_norm(m.base, "base.out_ln", w);
    nn::init_linear(m.base, "base.head", w, m.text_classes(), rng);
}

void init_slm_adapters(SlmModel& m, Rng& rng) {
    const int w = m.cfg.width;
    const int r = m.cfg.lora_rank;
    auto add_lora = [&](const std::string& prefix, int in, int out) {
        m.adapter.add(prefix + ".A", rng.gaussian_mat(in, r, 1.0 / std::sqrt(double(in))));
        m.adapter.add(prefix + ".B", Mat::Zero(r, out)); // deltas start at zero
    };
    for (int i = 0; i < m.cfg.layers; ++i) {
        add_lora("adapter.l" + std::to_string(i) + ".wq", w, w);
        add_lora("adapter.l" + std::to_string(i) + ".wv", w, w);
    }
    add_lora("adapter.head", w, m.text_classes());

    // speech input pathway: projection, fusion weights, zero-init gate
    nn::init_linear(m.adapter, "adapter.sp_in", m.d_z, w, rng);
    m.adapter.add("adapter.sp_gate", Mat::Zero(w, w));
    m.adapter.add("adapter.fuse_wsp", Mat::Zero(1, 1));
    m.adapter.add("adapter.fuse_wtxt", Mat::Zero(1, 1));

    if (m.mode == "token") {
        for (int q = 0; q < m.rvq_layers; ++q) {
            m.adapter.add("adapter.code_embed." + std::to_string(q),
                          rng.gaussian_mat(m.codebook_size, m.d_z, 0.2));
            nn::init_linear(m.adapter, "adapter.code_head." + std::to_string(q), w,
                            m.codebook_size, rng);
        }
    } else {
        nn::init_linear(m.adapter, "adapter.lat_head", w, 2 * m.d_z, rng);
    }
}

SlmForward build_slm_forward(ad::Graph& g, const nn::ParamFn& p, const SlmModel& m,
                             const std::vector<int>& text_inputs, const IMat* code_inputs,
                             const Mat* latent_inputs, bool use_adapters) {
    const int n = static_cast<int>(text_inputs.size());
    require_arg(n >= 1, "slm forward: empty input");
    for (int t : text_inputs)
        require_arg(t >= 0 && t < m.text_classes(), "slm forward: text token out of range");
    require_arg(code_inputs == nullptr || latent_inputs == nullptr,
                "slm forward: supply codes or latents, not both");

    ad::Var x = g.gather_rows(p("base.tok_embed"), text_inputs);

    const bool with_speech = code_inputs != nullptr || latent_inputs != nullptr;
    if (with_speech) {
        ad::Var speech = g.constant(Mat::Zero(n, m.d_z));
        if (code_inputs != nullptr) {
            require_arg(code_inputs->rows() == m.rvq_layers && code_inputs->cols() == n,
                        "slm forward: code stream must be R x n (one-to-one with text)");
            for (int q = 0; q < m.rvq_layers; ++q) {
                std::vector<int> ids(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i) {
                    int c = (*code_inputs)(q, i);
                    require_arg(c >= 0 && c < m.codebook_size,
                                "slm forward: code out of range");
                    ids[static_cast<size_t>(i)] = c;
                }
                ad::Var emb = g.gather_rows(p("adapter.code_embed." + std::to_string(q)), ids);
                speech = g.add(speech, emb);
            }
        } else {
            require_arg(latent_inputs->rows() == n && latent_inputs->cols() == m.d_z,
                        "slm forward: latent stream must be n x d_z (one-to-one with text)");
            speech = g.constant(*latent_inputs);
        }
        // weighted-sum fusion of the projected speech stream with the token
        // embedding, injected through the zero-initialized gate so the frozen
        // base path is untouched until adaptation moves it
        ad::Var sp = nn::linear(g, p, "adapter.sp_in", speech);
        ad::Var weights = g.concat_cols({p("adapter.fuse_wsp"), p("adapter.fuse_wtxt")});
        ad::Var probs = g.rowwise_softmax(weights);
        ad::Var z_joint = g.add(
            g.mul_scalar_var(g.slice_cols(probs, 0, 1), g.standardize_rows(sp, 1e-5)),
            g.mul_scalar_var(g.slice_cols(probs, 1, 1), g.standardize_rows(x, 1e-5)));
        x = g.add(x, g.matmul(z_joint, p("adapter.sp_gate")));
    }

    x = g.add_const(x, ad::sinusoidal_positions(n, m.cfg.width));
    Mat mask = nn::causal_mask(n);
    for (int i = 0; i < m.cfg.layers; ++i) x = slm_block(g, p, m, i, x, mask, use_adapters);
    ad::Var h = nn::layer_norm(g, p, "base.out_ln", x);

    SlmForward out;
    out.text_logits = g.add_row_broadcast(
        lora_matmul(g, p, "base.head.w", "adapter.head", h, use_adapters, lora_scale(m.cfg)),
        p("base.head.b"));
    if (with_speech) {
        if (m.mode == "token") {
            for (int q = 0; q < m.rvq_layers; ++q)
                out.code_logits.push_back(
                    nn::linear(g, p, "adapter.code_head." + std::to_string(q), h));
        } else {
            ad::Var both = nn::linear(g, p, "adapter.lat_head", h);
            out.mu = g.slice_cols(both, 0, m.d_z);
            out.log_var = g.slice_cols(both, m.d_z, m.d_z);
        }
    }
    return out;
}

Mat base_text_logits(const SlmModel& m, const std::vector<int>& text_inputs) {
    ad::Graph g;
    nn::ParamFn p = [&](const std::string& name) {
        return g.constant(name.rfind("base.", 0) == 0 ? m.base.at(name) : m.adapter.at(name));
    };
    SlmForward f = build_slm_forward(g, p, m, text_inputs, nullptr, nullptr, false);
    return g.value(f.text_logits);
}

namespace {

Eigen::RowVectorXd log_softmax_row(const Eigen::RowVectorXd& row) {
    double mx = row.maxCoeff();
    double lse = mx + std::log((row.array() - mx).exp().sum());
    return row.array() - lse;
}

struct ForwardValues {
    Mat text_logits;
    std::vector<Mat> code_logits;
    Mat mu, log_var;
};

ForwardValues run_forward(const SlmModel& m, const std::vector<int>& text_inputs,
                          const IMat* codes, const Mat* latents) {
    ad::Graph g;
    nn::ParamFn p = [&](const std::string& name) {
        return g.constant(name.rfind("base.", 0) == 0 ? m.base.at(name) : m.adapter.at(name));
    };
    SlmForward f = build_slm_forward(g, p, m, text_inputs, codes, latents, true);
    ForwardValues v;
    v.text_logits = g.value(f.text_logits);
    for (ad::Var c : f.code_logits) v.code_logits.push_back(g.value(c));
    if (f.mu.valid()) {
        v.mu = g.value(f.mu);
        v.log_var = g.value(f.log_var);
    }
    return v;
}

// inputs shifted right with BOS: position i predicts sequence step i
std::vector<int> shifted_text_inputs(const SlmModel& m, const JointSequence& seq, int upto) {
    std::vector<int> inputs;
    inputs.push_back(m.bos_id());
    for (int i = 0; i + 1 < upto; ++i) inputs.push_back(seq.text[static_cast<size_t>(i)]);
    return inputs;
}

} // namespace

double score_likelihood(const SlmModel& m, const JointSequence& seq, int condition_prefix) {
    const int len = seq.length();
    require_arg(len >= 1, "score: empty sequence");
    require_arg(condition_prefix >= 0 && condition_prefix < len, "score: bad condition prefix");
    for (int t : seq.text)
        require_arg(t >= 0 && t < m.llm_vocab, "score: text token outside the llm vocabulary");

    std::vector<int> inputs = shifted_text_inputs(m, seq, len);
    ForwardValues v;
    if (m.mode == "token") {
        require_arg(seq.codes.rows() == m.rvq_layers && seq.codes.cols() == len,
                    "score: code stream shape mismatch");
        IMat code_inputs(m.rvq_layers, len);
        code_inputs.col(0).setZero(); // BOS carries a zero speech input
        for (int i = 0; i + 1 < len; ++i) code_inputs.col(i + 1) = seq.codes.col(i);
        v = run_forward(m, inputs, &code_inputs, nullptr);
    } else {
        require_arg(seq.latents.rows() == len && seq.latents.cols() == m.d_z,
                    "score: latent stream shape mismatch");
        Mat latent_inputs = Mat::Zero(len, m.d_z);
        for (int i = 0; i + 1 < len; ++i) latent_inputs.row(i + 1) = seq.latents.row(i);
        v = run_forward(m, inputs, nullptr, &latent_inputs);
    }

    double total = 0;
    for (int i = condition_prefix; i < len; ++i) {
        Eigen::RowVectorXd lp = log_softmax_row(v.text_logits.row(i));
        total += lp(seq.text[static_cast<size_t>(i)]);
        if (m.mode == "token") {
            for (int q = 0; q < m.rvq_layers; ++q) {
                Eigen::RowVectorXd clp = log_softmax_row(v.code_logits[static_cast<size_t>(q)].row(i));
                total += clp(seq.codes(q, i));
            }
        } else {
            for (int j = 0; j < m.d_z; ++j) {
                double mu = v.mu(i, j);
                double lv = v.log_var(i, j);
                double x = seq.latents(i, j);
                total += -0.5 * ((x - mu) * (x - mu) * std::exp(-lv) + lv + std::log(2.0 * M_PI));
            }
        }
    }
    require_arg(std::isfinite(total), "score: non-finite likelihood");
    return total;
}

std::vector<JointStep> continue_joint(const SlmModel& m, const JointSequence& prompt, int steps,
                                      const DecodeConfig& decode_cfg, uint64_t seed,
                                      const WordFinalFn& is_word_final) {
    require_arg(steps >= 1, "continue: step budget must be >= 1");
    require_arg(prompt.length() >= 1, "continue: empty prompt");
    for (int t : prompt.text)
        require_arg(t >= 0 && t < m.llm_vocab, "continue: prompt token outside the llm vocabulary");

    Rng rng(seed);
    std::vector<int> text = prompt.text;
    IMat codes = prompt.codes;
    Mat latents = prompt.latents;
    if (m.mode == "token")
        require_arg(codes.rows() == m.rvq_layers && codes.cols() == prompt.length(),
                    "continue: prompt code stream shape mismatch");
    else
        require_arg(latents.rows() == prompt.length() && latents.cols() == m.d_z,
                    "continue: prompt latent stream shape mismatch");

    auto sample_row = [&](const Eigen::RowVectorXd& row, bool is_text, bool forbid_eos) {
        Eigen::RowVectorXd r = row;
        if (is_text) {
            r(m.bos_id()) = -1e300; // BOS is input-only
            if (forbid_eos) r(m.eos_id()) = -1e300;
        }
        if (decode_cfg.top_k <= 0) {
            int best = 0;
            for (int j = 1; j < r.size(); ++j)
                if (r(j) > r(best)) best = j;
            return best;
        }
        std::vector<int> order(static_cast<size_t>(r.size()));
        for (size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return r(a) > r(b); });
        int kk = std::min<int>(decode_cfg.top_k, static_cast<int>(order.size()));
        double temp = decode_cfg.temperature > 0 ? decode_cfg.temperature : 1.0;
        double mx = r(order[0]);
        std::vector<double> w(static_cast<size_t>(kk));
        double sum = 0;
        for (int j = 0; j < kk; ++j) {
            w[static_cast<size_t>(j)] = std::exp((r(order[static_cast<size_t>(j)]) - mx) / temp);
            sum += w[static_cast<size_t>(j)];
        }
        double u = rng.uniform() * sum;
        double acc = 0;
        for (int j = 0; j < kk; ++j) {
            acc += w[static_cast<size_t>(j)];
            if (u < acc) return order[static_cast<size_t>(j)];
        }
        return order[static_cast<size_t>(kk - 1)];
    };

    std::vector<JointStep> out;
    for (int step = 0; step < steps; ++step) {
        const int len = static_cast<int>(text.size());
        std::vector<int> inputs;
        inputs.push_back(m.bos_id());
        for (int i = 0; i + 1 < len + 1; ++i) inputs.push_back(text[static_cast<size_t>(i)]);

        ForwardValues v;
        if (m.mode == "token") {
            IMat code_inputs(m.rvq_layers, len + 1);
            code_inputs.col(0).setZero();
            for (int i = 0; i < len; ++i) code_inputs.col(i + 1) = codes.col(i);
            v = run_forward(m, inputs, &code_inputs, nullptr);
        } else {
            Mat latent_inputs = Mat::Zero(len + 1, m.d_z);
            for (int i = 0; i < len; ++i) latent_inputs.row(i + 1) = latents.row(i);
            v = run_forward(m, inputs, nullptr, &latent_inputs);
        }
        const int last = len; // prediction row for the next step

        int next_text = sample_row(v.text_logits.row(last), true, out.empty());
        if (next_text == m.eos_id()) break;

        JointStep js;
        js.text_token = next_text;
        if (m.mode == "token") {
            bool repredict = true;
            if (is_word_final && len >= 1) {
                // inside a word the current word's codes carry over
                int prev = text.back();
                repredict = prev >= m.llm_vocab ? true : is_word_final(prev);
            }
            js.codes.resize(static_cast<size_t>(m.rvq_layers));
            for (int q = 0; q < m.rvq_layers; ++q) {
                if (repredict || codes.cols() == 0) {
                    js.codes[static_cast<size_t>(q)] =
                        sample_row(v.code_logits[static_cast<size_t>(q)].row(last), false, false);
                } else {
                    js.codes[static_cast<size_t>(q)] = codes(q, codes.cols() - 1);
                }
            }
            IMat grown(m.rvq_layers, codes.cols() + 1);
            if (codes.cols() > 0) grown.leftCols(codes.cols()) = codes;
            for (int q = 0; q < m.rvq_layers; ++q)
                grown(q, grown.cols() - 1) = js.codes[static_cast<size_t>(q)];
            codes = grown;
        } else {
            Vec eps = Vec::Zero(m.d_z);
            if (!decode_cfg.eps_zero)
                for (int j = 0; j < m.d_z; ++j) eps(j) = rng.gaussian();
            js.latent = Vec(m.d_z);
            for (int j = 0; j < m.d_z; ++j)
                js.latent(j) = v.mu(last, j) + std::exp(v.log_var(last, j) / 2.0) * eps(j);
            Mat grown(latents.rows() + 1, m.d_z);
            if (latents.rows() > 0) grown.topRows(latents.rows()) = latents;
            grown.row(grown.rows() - 1) = js.latent.transpose();
            latents = grown;
        }
        text.push_back(next_text);
        out.push_back(std::move(js));
    }
    return out;
}

} // namespace taste::slm
