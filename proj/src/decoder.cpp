// SPDX-License-Identifier: Apache-2.0
#include "taste/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace taste::dec {

FuseBuild build_fuse(ad::Graph& g, const nn::ParamFn& p, ad::Var taste_embed, ad::Var text_embed,
                     bool zero_speech_branch) {
    const Mat& a = g.value(taste_embed);
    const Mat& b = g.value(text_embed);
    require_arg(a.rows() == b.rows() && a.cols() == b.cols(), "fuse: shape mismatch");
    require_arg(a.rows() >= 1, "fuse: empty sequence");

    ad::Var weights = g.concat_cols({p("dec.fuse_wsp"), p("dec.fuse_wtxt")});
    ad::Var probs = g.rowwise_softmax(weights);
    FuseBuild out;
    out.p_sp = g.slice_cols(probs, 0, 1);
    out.p_txt = g.slice_cols(probs, 1, 1);

    ad::Var sp_coeff = zero_speech_branch ? g.constant(Mat::Zero(1, 1)) : out.p_sp;
    ad::Var norm_sp = g.standardize_rows(taste_embed, 1e-5);
    ad::Var norm_txt = g.standardize_rows(text_embed, 1e-5);
    out.z_joint = g.add(g.mul_scalar_var(sp_coeff, norm_sp), g.mul_scalar_var(out.p_txt, norm_txt));
    return out;
}

Mat fuse(const Mat& taste_embed, const Mat& text_embed, double w_sp, double w_txt,
         bool zero_speech_branch) {
    ad::Graph g;
    ad::ParamStore ps;
    ps.add("dec.fuse_wsp", Mat::Constant(1, 1, w_sp));
    ps.add("dec.fuse_wtxt", Mat::Constant(1, 1, w_txt));
    nn::ParamFn p = [&](const std::string& name) { return g.constant(ps.at(name)); };
    FuseBuild fb = build_fuse(g, p, g.constant(taste_embed), g.constant(text_embed),
                              zero_speech_branch);
    return g.value(fb.z_joint);
}

void init_decoder(ad::ParamStore& ps, const DecoderConfig& cfg, int d_z, int d_h, int asr_vocab,
                  int unit_vocab, int num_speakers, Rng& rng) {
    ps.add("dec.text_embed", rng.gaussian_mat(asr_vocab, d_z, 0.2));
    ps.add("dec.unit_embed", rng.gaussian_mat(unit_vocab + 2, cfg.width, 0.2)); // + end + begin
    ps.add("dec.spk_table", rng.gaussian_mat(num_speakers, cfg.d_spk, 0.2));
    nn::init_linear(ps, "dec.spk_proj", cfg.d_spk, cfg.width, rng);
    nn::init_linear(ps, "dec.cond_proj", d_z, cfg.width, rng);
    nn::init_linear(ps, "dec.frame_proj", d_h, cfg.width, rng);
    ps.add("dec.fuse_wsp", Mat::Zero(1, 1));
    ps.add("dec.fuse_wtxt", Mat::Zero(1, 1));
    for (int i = 0; i < cfg.layers; ++i)
        nn::init_transformer_block(ps, "dec.l" + std::to_string(i), cfg.width, cfg.ffn_mult, rng);
    nn::init_layer_norm(ps, "dec.out_ln", cfg.width);
    nn::init_linear(ps, "dec.head", cfg.width, unit_vocab + 1, rng);
}

ad::Var build_unit_decoder(ad::Graph& g, const nn::ParamFn& p, const TasteModel& model,
                           ad::Var speech_cond, const std::vector<int>& text_tokens,
                           int speaker_id, const std::vector<int>& unit_prefix) {
    require_arg(!text_tokens.empty(), "unit decoder: empty text condition");
    require_arg(speaker_id >= 0 && speaker_id < model.num_speakers,
                "unit decoder: unknown speaker_id " + std::to_string(speaker_id));
    for (int u : unit_prefix)
        require_arg(u >= 0 && u < model.unit_vocab, "unit decoder: unit out of range");
    const int k = static_cast<int>(text_tokens.size());
    const int bos_id = model.unit_vocab + 1;

    ad::Var text_embed = g.gather_rows(p("dec.text_embed"), text_tokens);
    ad::Var spk = nn::linear(g, p, "dec.spk_proj", g.gather_rows(p("dec.spk_table"), {speaker_id}));

    std::vector<ad::Var> cond_parts = {spk};
    if (model.frame_conditioned()) {
        require_arg(speech_cond.valid(), "unit decoder: frame condition required");
        require_arg(g.value(speech_cond).cols() == model.tok_cfg.d_h,
                    "unit decoder: frame condition width mismatch");
        cond_parts.push_back(nn::linear(g, p, "dec.cond_proj", text_embed));
        cond_parts.push_back(nn::linear(g, p, "dec.frame_proj", speech_cond));
    } else {
        ad::Var aligned = speech_cond;
        if (!aligned.valid()) {
            require_arg(model.text_only(),
                        "unit decoder: aligned speech condition required for variant " +
                            model.variant);
            aligned = g.constant(Mat::Zero(k, model.tok_cfg.d_z));
        }
        require_arg(g.value(aligned).rows() == k,
                    "unit decoder: condition length misaligned with text");
        require_arg(g.value(aligned).cols() == model.tok_cfg.d_z,
                    "unit decoder: speech condition width mismatch");
        FuseBuild fb = build_fuse(g, p, aligned, text_embed, model.text_only());
        cond_parts.push_back(nn::linear(g, p, "dec.cond_proj", fb.z_joint));
    }
    ad::Var cond = g.concat_rows(cond_parts);
    const int cond_len = static_cast<int>(g.value(cond).rows());

    std::vector<int> unit_inputs = {bos_id};
    for (int u : unit_prefix) unit_inputs.push_back(u);
    ad::Var units = g.gather_rows(p("dec.unit_embed"), unit_inputs);

    ad::Var x = g.concat_rows({cond, units});
    const int total = cond_len + static_cast<int>(unit_inputs.size());
    x = g.add_const(x, ad::sinusoidal_positions(total, model.dec_cfg.width));

    Mat mask = nn::prefix_causal_mask(cond_len, static_cast<int>(unit_inputs.size()));
    for (int i = 0; i < model.dec_cfg.layers; ++i)
        x = nn::transformer_block(g, p, "dec.l" + std::to_string(i), x, model.dec_cfg.heads,
                                  &mask);

    ad::Var tail = g.slice_rows(x, cond_len, static_cast<int>(unit_inputs.size()));
    return nn::linear(g, p, "dec.head", nn::layer_norm(g, p, "dec.out_ln", tail));
}

Mat unit_decoder_forward(const TasteModel& model, const Mat& speech_cond,
                         const std::vector<int>& text_tokens, int speaker_id,
                         const std::vector<int>& unit_prefix) {
    ad::Graph g;
    nn::ParamFn p = [&](const std::string& name) { return g.constant(model.dec.at(name)); };
    ad::Var cond = speech_cond.size() > 0 ? g.constant(speech_cond) : ad::Var{};
    return g.value(build_unit_decoder(g, p, model, cond, text_tokens, speaker_id, unit_prefix));
}

std::vector<int> generate_units(const TasteModel& model, const Mat& speech_cond,
                                const std::vector<int>& text_tokens, int speaker_id,
                                const DecodeConfig& decode_cfg, uint64_t seed) {
    require_arg(decode_cfg.max_steps >= 1, "generate_units: max length must be >= 1");
    Rng rng(seed);
    std::vector<int> units;
    const int eos = model.unit_vocab;
    while (static_cast<int>(units.size()) < decode_cfg.max_steps) {
        Mat logits = unit_decoder_forward(model, speech_cond, text_tokens, speaker_id, units);
        Eigen::RowVectorXd row = logits.row(logits.rows() - 1);
        if (units.empty()) row(eos) = -1e300; // a unit sequence is never empty
        int pick;
        if (decode_cfg.top_k <= 0) {
            int best = 0;
            for (int j = 1; j < row.size(); ++j)
                if (row(j) > row(best)) best = j;
            pick = best;
        } else {
            // top-k sampling with temperature
            std::vector<int> order(static_cast<size_t>(row.size()));
            for (size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
            std::stable_sort(order.begin(), order.end(),
                             [&](int a, int b) { return row(a) > row(b); });
            int kk = std::min<int>(decode_cfg.top_k, static_cast<int>(order.size()));
            double temp = decode_cfg.temperature > 0 ? decode_cfg.temperature : 1.0;
            double mx = row(order[0]);
            std::vector<double> probs(static_cast<size_t>(kk));
            double sum = 0;
            for (int j = 0; j < kk; ++j) {
                probs[static_cast<size_t>(j)] = std::exp((row(order[static_cast<size_t>(j)]) - mx) / temp);
                sum += probs[static_cast<size_t>(j)];
            }
            double u = rng.uniform() * sum;
            pick = order[static_cast<size_t>(kk - 1)];
            double acc = 0;
            for (int j = 0; j < kk; ++j) {
                acc += probs[static_cast<size_t>(j)];
                if (u < acc) {
                    pick = order[static_cast<size_t>(j)];
                    break;
                }
            }
        }
        if (pick == eos) break;
        units.push_back(pick);
    }
    return units;
}

} // namespace taste::dec
