// SPDX-License-Identifier: Apache-2.0
#include "taste/losses.hpp"

namespace taste::losses {

namespace {

ad::Var reduce(ad::Graph& g, ad::Var per_element, Reduction reduction) {
    switch (reduction) {
        case Reduction::SumOverSequenceMean: {
            double n = static_cast<double>(g.value(per_element).rows());
            return g.scale(g.sum_all(per_element), 1.0 / n);
        }
        case Reduction::MeanOverElements:
            return g.mean_all(per_element);
    }
    throw ArgError("unknown reduction");
}

} // namespace

ad::Var reconstruction_ce(ad::Graph& g, ad::Var logits, const std::vector<int>& target_units) {
    const Mat& x = g.value(logits);
    const int unit_vocab = static_cast<int>(x.cols()) - 1; // last class is the end symbol
    require_arg(unit_vocab >= 1, "reconstruction_ce: logits need at least 2 classes");
    require_arg(x.rows() == static_cast<long>(target_units.size()) + 1,
                "reconstruction_ce: need one logit row per unit plus the end position");
    std::vector<int> targets = target_units;
    for (int u : targets)
        require_arg(u >= 0 && u < unit_vocab, "reconstruction_ce: target unit out of range");
    targets.push_back(unit_vocab);
    return g.mean_all(g.ce_rows(logits, targets));
}

ad::Var rvq_commitment(ad::Graph& g, const std::vector<ad::Var>& residuals,
                       const std::vector<Mat>& quantized_residuals) {
    require_arg(residuals.size() == quantized_residuals.size(),
                "rvq_commitment: layer count mismatch");
    require_arg(!residuals.empty(), "rvq_commitment: no layers");
    ad::Var total;
    for (size_t r = 0; r < residuals.size(); ++r) {
        const Mat& q = quantized_residuals[r];
        require_arg(g.value(residuals[r]).rows() == q.rows() &&
                        g.value(residuals[r]).cols() == q.cols(),
                    "rvq_commitment: shape mismatch at layer " + std::to_string(r));
        ad::Var diff = g.sub(residuals[r], g.constant(q));
        ad::Var term = g.row_l2_mean(diff);
        total = r == 0 ? term : g.add(total, term);
    }
    return total;
}

ad::Var taste_loss(ad::Graph& g, ad::Var ce, ad::Var rvq) { return g.add(ce, rvq); }

ad::Var token_lm_loss(ad::Graph& g, ad::Var text_logits, const std::vector<ad::Var>& code_logits,
                      const std::vector<int>& text_targets, const IMat& code_targets) {
    const long n = g.value(text_logits).rows();
    require_arg(static_cast<long>(text_targets.size()) == n,
                "token_lm_loss: one text target per position required");
    require_config(static_cast<long>(code_logits.size()) == code_targets.rows(),
                   "token_lm_loss: head count does not match RVQ depth");
    ad::Var total = g.sum_all(g.ce_rows(text_logits, text_targets));
    for (size_t r = 0; r < code_logits.size(); ++r) {
        require_arg(g.value(code_logits[r]).rows() == n,
                    "token_lm_loss: code head " + std::to_string(r) + " row mismatch");
        std::vector<int> tgt(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) tgt[static_cast<size_t>(i)] = code_targets(static_cast<long>(r), i);
        total = g.add(total, g.sum_all(g.ce_rows(code_logits[r], tgt)));
    }
    return g.scale(total, 1.0 / static_cast<double>(n));
}

ad::Var reg_loss(ad::Graph& g, ad::Var e, const Mat& target, Reduction reduction) {
    require_arg(g.value(e).rows() == target.rows() && g.value(e).cols() == target.cols(),
                "reg_loss: shape mismatch");
    ad::Var diff = g.sub(e, g.constant(target));
    return reduce(g, g.square(diff), reduction);
}

ad::Var kl_loss(ad::Graph& g, ad::Var mu, ad::Var log_var, const Mat& target,
                Reduction reduction, bool sigma_first_power) {
    const Mat& mv = g.value(mu);
    const Mat& lv = g.value(log_var);
    require_arg(mv.rows() == target.rows() && mv.cols() == target.cols(),
                "kl_loss: mu/target shape mismatch");
    require_arg(lv.rows() == target.rows() && lv.cols() == target.cols(),
                "kl_loss: log_var/target shape mismatch");
    require_arg(lv.allFinite(), "kl_loss: non-finite log_var");

    // sigma^2 = exp(log_var); per element: sigma^2 + (mu - t)^2 - 1 - log_var
    ad::Var variance = sigma_first_power ? g.exp(g.scale(log_var, 0.5)) : g.exp(log_var);
    ad::Var sq = g.square(g.sub(mu, g.constant(target)));
    ad::Var inner = g.add_scalar(g.sub(g.add(variance, sq), log_var), -1.0);
    return g.scale(reduce(g, inner, reduction), 0.5);
}

ad::Var sample_latent(ad::Graph& g, ad::Var mu, ad::Var log_var, const Mat& eps) {
    const Mat& mv = g.value(mu);
    require_arg(mv.rows() == eps.rows() && mv.cols() == eps.cols(),
                "sample_latent: eps shape mismatch");
    require_arg(g.value(log_var).rows() == eps.rows() && g.value(log_var).cols() == eps.cols(),
                "sample_latent: log_var shape mismatch");
    ad::Var sigma = g.exp(g.scale(log_var, 0.5));
    return g.add(mu, g.mul_const(sigma, eps));
}

EmbLmParts emb_lm_loss(ad::Graph& g, ad::Var text_logits, const std::vector<int>& text_targets,
                       ad::Var e, ad::Var mu, ad::Var log_var, const Mat& target,
                       const TrainConfig& cfg) {
    require_config(cfg.lambda_reg >= 0 && cfg.lambda_kl >= 0,
                   "emb_lm_loss: negative loss weight");
    EmbLmParts parts;
    parts.text_ce = g.mean_all(g.ce_rows(text_logits, text_targets));
    parts.reg = reg_loss(g, e, target, cfg.reduction);
    parts.kl = kl_loss(g, mu, log_var, target, cfg.reduction, cfg.kl_sigma_first_power);
    parts.total = g.add(g.add(g.scale(parts.reg, cfg.lambda_reg), g.scale(parts.kl, cfg.lambda_kl)),
                        parts.text_ce);
    return parts;
}

} // namespace taste::losses
