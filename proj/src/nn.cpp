// SPDX-License-Identifier: Apache-2.0
#include "taste/nn.hpp"

#include <cmath>

namespace taste::nn {

namespace {
constexpr double kMaskedOut = -1e30;
}

ad::Var attention_core(ad::Graph& g, ad::Var q, ad::Var k, ad::Var v, int heads, const Mat* mask,
                       std::vector<ad::Var>* attn_out) {
    const long dm = g.value(q).cols();
    require_arg(g.value(k).cols() == dm && g.value(v).cols() == dm,
                "attention_core: q/k/v width mismatch");
    require_arg(dm % heads == 0, "attention_core: head count must divide width");
    require_arg(g.value(k).rows() == g.value(v).rows(),
                "attention_core: key/value length mismatch");
    const int dk = static_cast<int>(dm) / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<ad::Var> head_outs;
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = g.slice_cols(q, h * dk, dk);
        ad::Var kh = g.slice_cols(k, h * dk, dk);
        ad::Var vh = g.slice_cols(v, h * dk, dk);
        ad::Var logits = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt);
        if (mask != nullptr) {
            require_arg(mask->rows() == g.value(logits).rows() &&
                            mask->cols() == g.value(logits).cols(),
                        "attention_core: mask shape mismatch");
            logits = g.add_const(logits, *mask);
        }
        ad::Var attn = g.rowwise_softmax(logits);
        if (attn_out != nullptr) attn_out->push_back(attn);
        head_outs.push_back(g.matmul(attn, vh));
    }
    return heads == 1 ? head_outs[0] : g.concat_cols(head_outs);
}

ad::Var multihead_attention(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var q_in,
                            ad::Var k_in, ad::Var v_in, int heads, const Mat* mask,
                            std::vector<ad::Var>* attn_out) {
    ad::Var q = g.matmul(q_in, p(prefix + ".wq"));
    ad::Var k = g.matmul(k_in, p(prefix + ".wk"));
    ad::Var v = g.matmul(v_in, p(prefix + ".wv"));
    ad::Var mixed = attention_core(g, q, k, v, heads, mask, attn_out);
    return g.matmul(mixed, p(prefix + ".wo"));
}

ad::Var linear(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var x) {
    return g.add_row_broadcast(g.matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

ad::Var layer_norm(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var x) {
    ad::Var norm = g.standardize_rows(x, 1e-5);
    return g.add_row_broadcast(g.mul_row_broadcast(norm, p(prefix + ".g")), p(prefix + ".b"));
}

ad::Var transformer_block(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var x,
                          int heads, const Mat* mask) {
    ad::Var normed = layer_norm(g, p, prefix + ".ln1", x);
    ad::Var attn = multihead_attention(g, p, prefix + ".attn", normed, normed, normed, heads, mask);
    x = g.add(x, attn);
    ad::Var normed2 = layer_norm(g, p, prefix + ".ln2", x);
    ad::Var ff = linear(g, p, prefix + ".ffn2", g.gelu(linear(g, p, prefix + ".ffn1", normed2)));
    return g.add(x, ff);
}

void init_linear(ad::ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
    ps.add(prefix + ".w", rng.gaussian_mat(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
    ps.add(prefix + ".b", Mat::Zero(1, out));
}

void init_layer_norm(ad::ParamStore& ps, const std::string& prefix, int d) {
    ps.add(prefix + ".g", Mat::Ones(1, d));
    ps.add(prefix + ".b", Mat::Zero(1, d));
}

void init_attention(ad::ParamStore& ps, const std::string& prefix, int dq, int dk, int dv, int dm,
                    Rng& rng) {
    ps.add(prefix + ".wq", rng.gaussian_mat(dq, dm, 1.0 / std::sqrt(static_cast<double>(dq))));
    ps.add(prefix + ".wk", rng.gaussian_mat(dk, dm, 1.0 / std::sqrt(static_cast<double>(dk))));
    ps.add(prefix + ".wv", rng.gaussian_mat(dv, dm, 1.0 / std::sqrt(static_cast<double>(dv))));
    ps.add(prefix + ".wo", rng.gaussian_mat(dm, dm, 1.0 / std::sqrt(static_cast<double>(dm))));
}

void init_transformer_block(ad::ParamStore& ps, const std::string& prefix, int dm, int ffn_mult,
                            Rng& rng) {
    init_layer_norm(ps, prefix + ".ln1", dm);
    init_attention(ps, prefix + ".attn", dm, dm, dm, dm, rng);
    init_layer_norm(ps, prefix + ".ln2", dm);
    init_linear(ps, prefix + ".ffn1", dm, dm * ffn_mult, rng);
    init_linear(ps, prefix + ".ffn2", dm * ffn_mult, dm, rng);
}

Mat causal_mask(int n) {
    Mat m = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m(i, j) = kMaskedOut;
    return m;
}

Mat prefix_causal_mask(int cond_len, int tail_len) {
    const int n = cond_len + tail_len;
    Mat m = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            bool visible = (j < cond_len) || (j <= i);
            if (!visible) m(i, j) = kMaskedOut;
        }
    return m;
}

} // namespace taste::nn
