// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/autodiff.hpp"
#include "taste/config.hpp"

#include <vector>

namespace taste::losses {

// Teacher-forced unit reconstruction cross-entropy. `logits` has one row per
// prediction position (T' units plus the end symbol); targets are the T'
// units, the end symbol (id = unit_vocab) is appended internally. Returns the
// mean over all prediction rows.
ad::Var reconstruction_ce(ad::Graph& g, ad::Var logits, const std::vector<int>& target_units);

// Sum over quantizer layers of the per-position L2 norm of
// (residual - quantized residual), averaged over positions. Gradient flows to
// the residuals only; the quantized side is constant.
ad::Var rvq_commitment(ad::Graph& g, const std::vector<ad::Var>& residuals,
                       const std::vector<Mat>& quantized_residuals);

// Tokenizer total: reconstruction + commitment.
ad::Var taste_loss(ad::Graph& g, ad::Var ce, ad::Var rvq);

// Joint multi-head next-token objective: mean over positions of the text CE
// plus the per-layer code CEs.
ad::Var token_lm_loss(ad::Graph& g, ad::Var text_logits, const std::vector<ad::Var>& code_logits,
                      const std::vector<int>& text_targets, const IMat& code_targets);

// Latent regression toward the quantized embedding.
ad::Var reg_loss(ad::Graph& g, ad::Var e, const Mat& target,
                 Reduction reduction = Reduction::SumOverSequenceMean);

// Gaussian KL against N(target, I) in closed form. With
// sigma_first_power the literal first-power sigma variant is used instead of
// sigma^2 inside the sum.
ad::Var kl_loss(ad::Graph& g, ad::Var mu, ad::Var log_var, const Mat& target,
                Reduction reduction = Reduction::SumOverSequenceMean,
                bool sigma_first_power = false);

// e = mu + exp(log_var / 2) * eps, with eps supplied by the caller.
ad::Var sample_latent(ad::Graph& g, ad::Var mu, ad::Var log_var, const Mat& eps);

struct EmbLmParts {
    ad::Var total;
    ad::Var text_ce;
    ad::Var reg;
    ad::Var kl;
};

// lambda_reg * reg + lambda_kl * kl + mean text CE; components retrievable.
EmbLmParts emb_lm_loss(ad::Graph& g, ad::Var text_logits, const std::vector<int>& text_targets,
                       ad::Var e, ad::Var mu, ad::Var log_var, const Mat& target,
                       const TrainConfig& cfg);

} // namespace taste::losses
