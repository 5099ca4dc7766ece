// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/autodiff.hpp"
#include "taste/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace taste::nn {

// Parameter lookup indirection: trainable leaves during training, constants
// when frozen.
using ParamFn = std::function<ad::Var(const std::string&)>;

// Scaled dot-product attention over already-projected q/k/v, split into
// heads along the feature dimension. mask (optional) is added to the logits.
ad::Var attention_core(ad::Graph& g, ad::Var q, ad::Var k, ad::Var v, int heads,
                       const Mat* mask = nullptr, std::vector<ad::Var>* attn_out = nullptr);

// MultiHead(Q, K, V) with projections "<prefix>.wq/.wk/.wv/.wo".
ad::Var multihead_attention(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var q_in,
                            ad::Var k_in, ad::Var v_in, int heads, const Mat* mask = nullptr,
                            std::vector<ad::Var>* attn_out = nullptr);

// x W + b with "<prefix>.w" and "<prefix>.b".
ad::Var linear(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var x);

// Standardize + gain/bias with "<prefix>.g" and "<prefix>.b".
ad::Var layer_norm(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var x);

// Pre-LN self-attention block: x += MHA(LN1(x)); x += FFN(LN2(x)).
ad::Var transformer_block(ad::Graph& g, const ParamFn& p, const std::string& prefix, ad::Var x,
                          int heads, const Mat* mask = nullptr);

void init_linear(ad::ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
void init_layer_norm(ad::ParamStore& ps, const std::string& prefix, int d);
void init_attention(ad::ParamStore& ps, const std::string& prefix, int dq, int dk, int dv, int dm,
                    Rng& rng);
void init_transformer_block(ad::ParamStore& ps, const std::string& prefix, int dm, int ffn_mult,
                            Rng& rng);

// Additive masks built from 0 / -1e30 entries.
Mat causal_mask(int n);
// First cond_len positions are mutually visible and visible to everyone;
// the causal tail attends to the condition and to itself causally.
Mat prefix_causal_mask(int cond_len, int tail_len);

} // namespace taste::nn
