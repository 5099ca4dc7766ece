// SPDX-License-Identifier: Apache-2.0
#include "taste/train.hpp"

#include "taste/align.hpp"
#include "taste/decoder.hpp"
#include "taste/losses.hpp"
#include "taste/tokenizer.hpp"

#include <algorithm>
#include <cmath>

namespace taste::train {

namespace {

constexpr uint64_t kTagEncShuffle = 0x454e43;
constexpr uint64_t kTagTokShuffle = 0x544f4b;
constexpr uint64_t kTagSlmShuffle = 0x534c4d;
constexpr uint64_t kTagKmeans = 0x4b4d4e;
constexpr uint64_t kTagReseed = 0x525344;
constexpr uint64_t kTagEps = 0x455053;

void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
}

std::vector<int> frame_unit_targets(const std::vector<int>& units, int frames, int stride) {
    std::vector<int> out(static_cast<size_t>(frames));
    for (int t = 0; t < frames; ++t)
        out[static_cast<size_t>(t)] = units[static_cast<size_t>(std::min<int>(
            t / stride, static_cast<int>(units.size()) - 1))];
    return out;
}

void check_finite(double loss) {
    if (!std::isfinite(loss)) throw NumericError("training aborted: non-finite loss");
}

// Tokenizer-phase condition assembly shared by training, evaluation and the
// reconstruction path. For the aggregator variants it builds the aggregator
// inside the graph so gradients reach it; the speech branch of text-only is
// never built.
struct CondBuild {
    ad::Var cond;                   // invalid for text-only
    ad::Var z_word;                 // valid for aggregator variants
    std::optional<tok::QuantizeResult> qr;
    std::vector<ad::Var> residual_vars;
};

CondBuild build_condition(ad::Graph& g, const nn::ParamFn& agg_p, const TasteModel& model,
                          const tok::EncoderStates& states, const corpus::Transcription& tr,
                          bool quant_on) {
    CondBuild out;
    if (model.text_only()) return out;
    if (model.frame_conditioned()) {
        out.cond = g.constant(states.h_shallow);
        return out;
    }

    ad::Var text_embed = g.gather_rows(agg_p("agg.text_embed"), tr.asr_tokens);
    ad::Var z = tok::build_aggregator(g, agg_p, text_embed, g.constant(states.h_last),
                                      g.constant(states.h_shallow), model.tok_cfg);

    std::vector<int> word_of_position;
    if (model.word_average) {
        const int n = static_cast<int>(tr.asr_tokens.size());
        const int w = static_cast<int>(tr.asr_groups.size());
        Mat avg = Mat::Zero(w, n);
        word_of_position.resize(static_cast<size_t>(n));
        for (int wi = 0; wi < w; ++wi) {
            const auto& span = tr.asr_groups[static_cast<size_t>(wi)];
            for (int i = span.first; i < span.second; ++i) {
                avg(wi, i) = 1.0 / (span.second - span.first);
                word_of_position[static_cast<size_t>(i)] = wi;
            }
        }
        out.z_word = g.matmul(g.constant(avg), z);
    } else {
        out.z_word = z;
        word_of_position.resize(tr.asr_tokens.size());
        for (size_t i = 0; i < tr.asr_tokens.size(); ++i)
            word_of_position[i] = static_cast<int>(i);
    }

    ad::Var flowing = out.z_word;
    if (quant_on) {
        out.qr = tok::quantize(g.value(out.z_word), model.quant);
        // residual vars for the commitment term: r_{k+1} = r_k - const(codeword_k)
        ad::Var r = out.z_word;
        for (int k = 0; k < model.quant.layers(); ++k) {
            out.residual_vars.push_back(r);
            if (k + 1 < model.quant.layers())
                r = g.sub(r, g.constant(out.qr->quantized[static_cast<size_t>(k)]));
        }
        flowing = g.straight_through(out.z_word, out.qr->embedding);
    }
    out.cond = g.gather_rows(flowing, word_of_position);
    return out;
}

nn::ParamFn const_params(ad::Graph& g, const TasteModel& model) {
    return [&g, &model](const std::string& name) -> ad::Var {
        if (name.rfind("enc.", 0) == 0) return g.constant(model.enc.at(name));
        if (name.rfind("agg.", 0) == 0) return g.constant(model.agg.at(name));
        return g.constant(model.dec.at(name));
    };
}

} // namespace

double cosine_lr_scale(long step, long total_steps, bool enabled) {
    if (!enabled || total_steps <= 1) return 1.0;
    double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    frac = std::min(1.0, std::max(0.0, frac));
    return 0.5 * (1.0 + std::cos(M_PI * frac));
}

Dataset Dataset::load(const RunConfig& rc, const std::string& corpus_dir) {
    Dataset d;
    d.manifest = corpus::read_manifest(corpus_dir + "/manifest.txt");
    require_data(d.manifest.meta.d_in == rc.corpus.d_in &&
                     d.manifest.meta.unit_vocab == rc.corpus.unit_vocab,
                 "corpus metadata does not match the configuration");
    d.lang = corpus::CorpusLang::build(d.manifest.meta.seed, rc.corpus);
    for (const auto& r : d.manifest.records) {
        d.features.push_back(corpus::load_features(d.manifest, r));
        d.units.push_back(corpus::load_units(d.manifest, r));
    }
    std::tie(d.train_idx, d.holdout_idx) =
        corpus::split_indices(d.size(), rc.corpus.holdout_fraction);
    return d;
}

Mat variant_unit_logits(const TasteModel& model, const Mat& features,
                        const corpus::Transcription& tr, int speaker,
                        const std::vector<int>& unit_prefix) {
    tok::EncoderStates states = tok::encode(features, model.enc, model.tok_cfg);
    ad::Graph g;
    nn::ParamFn p = const_params(g, model);
    CondBuild cb = build_condition(g, p, model, states, tr,
                                   model.uses_quantizer() && model.quant.enabled);
    ad::Var logits = dec::build_unit_decoder(g, p, model, cb.cond, tr.asr_tokens, speaker,
                                             unit_prefix);
    return g.value(logits);
}

EvalAccuracy eval_unit_accuracy(const TasteModel& model, const Dataset& data,
                                const std::vector<int>& idx) {
    EvalAccuracy acc;
    long top1 = 0, top5 = 0;
    for (int i : idx) {
        const auto& rec = data.manifest.records[static_cast<size_t>(i)];
        const auto& units = data.units[static_cast<size_t>(i)];
        Mat logits = variant_unit_logits(model, data.features[static_cast<size_t>(i)],
                                         rec.transcription, rec.speaker_id, units);
        // unit rows only; the end-symbol row is not part of the proxy metric
        for (size_t t = 0; t < units.size(); ++t) {
            Eigen::RowVectorXd row = logits.row(static_cast<long>(t));
            int target = units[t];
            double tv = row(target);
            int better = 0;
            for (int j = 0; j < row.size(); ++j)
                if (row(j) > tv) ++better;
            if (better == 0) ++top1;
            if (better < 5) ++top5;
            ++acc.positions;
        }
    }
    if (acc.positions > 0) {
        acc.top1 = static_cast<double>(top1) / static_cast<double>(acc.positions);
        acc.top5 = static_cast<double>(top5) / static_cast<double>(acc.positions);
    }
    return acc;
}

TasteModel train_tokenizer(const RunConfig& rc, const Dataset& data, metrics::MetricsLog* log) {
    require_data(data.size() >= 2, "train-tokenizer: corpus too small");
    const auto& meta = data.manifest.meta;
    TasteModel model = init_taste_model(rc, meta.d_in, data.lang.asr_tok.vocab_size(),
                                        meta.unit_vocab, meta.num_speakers);

    long step = 0;

    // --- encoder pretext: per-frame unit prediction, then freeze ---
    if (!model.text_only() && rc.optim.encoder_pretrain_epochs > 0) {
        ad::AdamOptimizer opt;
        opt.lr = rc.optim.tokenizer_lr;
        const long total = static_cast<long>(rc.optim.encoder_pretrain_epochs) *
                           static_cast<long>(data.train_idx.size());
        long seen = 0;
        std::map<std::string, Mat> grads;
        int in_batch = 0;
        double batch_loss = 0;
        for (int epoch = 0; epoch < rc.optim.encoder_pretrain_epochs; ++epoch) {
            std::vector<int> order = data.train_idx;
            Rng shuffle_rng(mix_seed(mix_seed(rc.seed, kTagEncShuffle), epoch));
            shuffle_indices(order, shuffle_rng);
            for (int i : order) {
                ad::Graph g;
                ad::GraphParams params(g, model.enc);
                nn::ParamFn p = [&](const std::string& n) { return params(n); };
                tok::EncoderBuild eb =
                    tok::build_encoder(g, p, data.features[static_cast<size_t>(i)], model.tok_cfg,
                                       true);
                auto targets = frame_unit_targets(data.units[static_cast<size_t>(i)],
                                                  static_cast<int>(
                                                      data.features[static_cast<size_t>(i)].rows()),
                                                  meta.unit_stride);
                ad::Var loss = g.mean_all(g.ce_rows(eb.pretext_logits, targets));
                check_finite(g.value(loss)(0, 0));
                batch_loss += g.value(loss)(0, 0);
                g.backward(loss);
                params.accumulate_grads(grads);
                ++in_batch;
                ++seen;
                if (in_batch == rc.optim.batch_size || seen == total) {
                    opt.step(model.enc, grads,
                             cosine_lr_scale(seen, total, rc.optim.cosine_decay));
                    grads.clear();
                    if (log != nullptr)
                        log->record(++step, epoch, {{"loss_pretext", batch_loss / in_batch}});
                    in_batch = 0;
                    batch_loss = 0;
                }
            }
        }
    }
    model.enc.set_trainable(false);

    // cache encoder states once the encoder is frozen
    std::vector<tok::EncoderStates> cache;
    if (!model.text_only()) {
        cache.reserve(static_cast<size_t>(data.size()));
        for (int i = 0; i < data.size(); ++i)
            cache.push_back(
                tok::encode(data.features[static_cast<size_t>(i)], model.enc, model.tok_cfg));
    } else {
        cache.resize(static_cast<size_t>(data.size()));
    }

    // --- aggregator + quantizer + unit decoder ---
    ad::AdamOptimizer opt_agg, opt_dec;
    opt_agg.lr = rc.optim.tokenizer_lr;
    opt_dec.lr = rc.optim.tokenizer_lr;
    const long total_steps = static_cast<long>(rc.optim.tokenizer_epochs) *
                             static_cast<long>(data.train_idx.size());
    long seen = 0;
    std::map<std::string, Mat> grads;
    int in_batch = 0;
    double batch_ce = 0, batch_rvq = 0;
    for (int epoch = 0; epoch < rc.optim.tokenizer_epochs; ++epoch) {
        const bool quant_on = model.uses_quantizer() && epoch >= rc.train.warmup_epochs;
        if (quant_on && !model.quant.enabled) {
            // enable: k-means on a warmup batch of aggregator outputs
            std::vector<Mat> rows;
            long count = 0;
            for (int i : data.train_idx) {
                const auto& rec = data.manifest.records[static_cast<size_t>(i)];
                ad::Graph g;
                nn::ParamFn p = const_params(g, model);
                CondBuild cb = build_condition(g, p, model, cache[static_cast<size_t>(i)],
                                               rec.transcription, false);
                rows.push_back(g.value(cb.z_word));
                count += rows.back().rows();
                if (count >= 8L * model.tok_cfg.codebook_size) break;
            }
            long total_rows = 0;
            for (const Mat& r : rows) total_rows += r.rows();
            Mat batch(total_rows, model.tok_cfg.d_z);
            long at = 0;
            for (const Mat& r : rows) {
                batch.middleRows(at, r.rows()) = r;
                at += r.rows();
            }
            Rng krng(mix_seed(rc.seed, kTagKmeans));
            tok::quantizer_kmeans_init(model.quant, batch, krng);
            model.quant.enabled = true;
        }
        model.quant.reset_epoch_usage();
        std::vector<Mat> recent(static_cast<size_t>(model.quant.layers()));

        std::vector<int> order = data.train_idx;
        Rng shuffle_rng(mix_seed(mix_seed(rc.seed, kTagTokShuffle), epoch));
        shuffle_indices(order, shuffle_rng);

        for (int i : order) {
            const auto& rec = data.manifest.records[static_cast<size_t>(i)];
            const auto& units = data.units[static_cast<size_t>(i)];

            ad::Graph g;
            ad::GraphParams agg_params(g, model.agg);
            ad::GraphParams dec_params(g, model.dec);
            nn::ParamFn pf = [&](const std::string& n) -> ad::Var {
                if (n.rfind("enc.", 0) == 0) return g.constant(model.enc.at(n));
                if (n.rfind("agg.", 0) == 0) return agg_params(n);
                return dec_params(n);
            };
            CondBuild cb = build_condition(g, pf, model, cache[static_cast<size_t>(i)],
                                           rec.transcription, quant_on);
            ad::Var logits = dec::build_unit_decoder(g, pf, model, cb.cond,
                                                     rec.transcription.asr_tokens,
                                                     rec.speaker_id, units);
            ad::Var ce = losses::reconstruction_ce(g, logits, units);
            ad::Var loss = ce;
            double rvq_val = 0;
            if (quant_on && cb.qr.has_value()) {
                ad::Var rvq = losses::rvq_commitment(g, cb.residual_vars, cb.qr->quantized);
                rvq_val = g.value(rvq)(0, 0);
                loss = losses::taste_loss(g, ce, rvq);
            }
            double loss_val = g.value(loss)(0, 0);
            check_finite(loss_val);
            batch_ce += g.value(ce)(0, 0);
            batch_rvq += rvq_val;
            g.backward(loss);
            agg_params.accumulate_grads(grads);
            dec_params.accumulate_grads(grads);

            if (quant_on && cb.qr.has_value()) {
                tok::quantizer_ema_update(model.quant, *cb.qr, model.tok_cfg.ema_decay);
                for (int r = 0; r < model.quant.layers(); ++r) {
                    Mat& pool = recent[static_cast<size_t>(r)];
                    const Mat& res = cb.qr->residuals[static_cast<size_t>(r)];
                    if (pool.rows() < 512) {
                        Mat grown(pool.rows() + res.rows(), res.cols());
                        if (pool.rows() > 0) grown.topRows(pool.rows()) = pool;
                        grown.bottomRows(res.rows()) = res;
                        pool = grown;
                    }
                }
            }

            ++in_batch;
            ++seen;
            if (in_batch == rc.optim.batch_size || seen == total_steps) {
                double lr_scale = cosine_lr_scale(seen, total_steps, rc.optim.cosine_decay);
                opt_agg.step(model.agg, grads, lr_scale);
                opt_dec.step(model.dec, grads, lr_scale);
                grads.clear();
                if (log != nullptr)
                    log->record(++step, epoch,
                                {{"loss_ce", batch_ce / in_batch},
                                 {"loss_rvq", batch_rvq / in_batch},
                                 {"loss_taste", (batch_ce + batch_rvq) / in_batch}});
                in_batch = 0;
                batch_ce = 0;
                batch_rvq = 0;
            }
        }

        if (quant_on) {
            Rng rrng(mix_seed(mix_seed(rc.seed, kTagReseed), epoch));
            tok::quantizer_reseed_dead(model.quant, recent, rrng);
        }

        if (log != nullptr && !data.holdout_idx.empty()) {
            EvalAccuracy acc = eval_unit_accuracy(model, data, data.holdout_idx);
            // token frequency over the holdout split and the implied code rate
            long tokens = 0;
            double duration = 0;
            for (int i : data.holdout_idx) {
                tokens += static_cast<long>(
                    data.manifest.records[static_cast<size_t>(i)].transcription.asr_tokens.size());
                duration += data.manifest.records[static_cast<size_t>(i)].duration_s;
            }
            double freq = duration > 0 ? static_cast<double>(tokens) / duration : 0;
            double bitrate = freq * model.quant.layers() *
                             std::log2(static_cast<double>(model.quant.codebook_size()));
            log->record(++step, epoch,
                        {{"eval_top1", acc.top1},
                         {"eval_top5", acc.top5},
                         {"eval_positions", static_cast<double>(acc.positions)},
                         {"token_frequency_hz", freq},
                         {"speech_bitrate_bps", bitrate}});
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// SLM training

slm::JointSequence build_joint_sequence(const Dataset& data, const TasteModel& taste, int index) {
    const auto& rec = data.manifest.records[static_cast<size_t>(index)];
    const auto& tr = rec.transcription;
    tok::TokenizeResult tk =
        tok::tokenize_utterance(data.features[static_cast<size_t>(index)], tr, taste);

    slm::JointSequence seq;
    seq.text = tr.llm_tokens;
    seq.codes = align::align_codes_to_llm(tk.codes_word, tr.llm_groups);
    seq.latents = align::align_to_llm(tk.embedding_word, tr.llm_groups).z_tilde;
    return seq;
}

SlmModel train_slm(const RunConfig& rc, const Dataset& data, const TasteModel& taste,
                   metrics::MetricsLog* log) {
    require_config(rc.mode == "token" || rc.mode == "embed", "train-slm: bad mode");
    require_arg(taste.uses_quantizer() && taste.quant.enabled,
                "train-slm: tokenizer checkpoint must carry a trained quantizer");

    SlmModel m;
    m.cfg = rc.slm;
    m.mode = rc.mode;
    m.llm_vocab = data.lang.llm_tok.vocab_size();
    m.rvq_layers = taste.quant.layers();
    m.codebook_size = taste.quant.codebook_size();
    m.d_z = taste.tok_cfg.d_z;
    Rng init_rng(mix_seed(rc.seed, 0x534c4d49));
    slm::init_slm_base(m, init_rng);
    slm::init_slm_adapters(m, init_rng);

    long step = 0;

    // --- phase A: text-only pretraining of the backbone ---
    {
        ad::AdamOptimizer opt;
        opt.lr = rc.optim.slm_lr;
        const long total = static_cast<long>(rc.optim.text_pretrain_epochs) *
                           static_cast<long>(data.train_idx.size());
        long seen = 0;
        std::map<std::string, Mat> grads;
        int in_batch = 0;
        double batch_loss = 0;
        for (int epoch = 0; epoch < rc.optim.text_pretrain_epochs; ++epoch) {
            std::vector<int> order = data.train_idx;
            Rng shuffle_rng(mix_seed(mix_seed(rc.seed, kTagSlmShuffle), epoch));
            shuffle_indices(order, shuffle_rng);
            for (int i : order) {
                const auto& tokens =
                    data.manifest.records[static_cast<size_t>(i)].transcription.llm_tokens;
                std::vector<int> inputs = {m.bos_id()};
                inputs.insert(inputs.end(), tokens.begin(), tokens.end());
                std::vector<int> targets = tokens;
                targets.push_back(m.eos_id());

                ad::Graph g;
                ad::GraphParams base_params(g, m.base);
                nn::ParamFn pf = [&](const std::string& n) { return base_params(n); };
                slm::SlmForward f = slm::build_slm_forward(g, pf, m, inputs, nullptr, nullptr,
                                                           false);
                ad::Var loss = g.mean_all(g.ce_rows(f.text_logits, targets));
                double lv = g.value(loss)(0, 0);
                check_finite(lv);
                batch_loss += lv;
                g.backward(loss);
                base_params.accumulate_grads(grads);
                ++in_batch;
                ++seen;
                if (in_batch == rc.optim.batch_size || seen == total) {
                    opt.step(m.base, grads, cosine_lr_scale(seen, total, rc.optim.cosine_decay));
                    grads.clear();
                    if (log != nullptr)
                        log->record(++step, epoch, {{"loss_text_pretrain", batch_loss / in_batch}});
                    in_batch = 0;
                    batch_loss = 0;
                }
            }
        }
    }
    m.base.set_trainable(false);

    // --- phase B: joint adaptation (adapters + heads only) ---
    {
        std::vector<slm::JointSequence> streams;
        streams.reserve(static_cast<size_t>(data.size()));
        for (int i = 0; i < data.size(); ++i)
            streams.push_back(build_joint_sequence(data, taste, i));

        ad::AdamOptimizer opt;
        opt.lr = rc.optim.slm_lr;
        const long total = static_cast<long>(rc.optim.joint_epochs) *
                           static_cast<long>(data.train_idx.size());
        long seen = 0;
        std::map<std::string, Mat> grads;
        int in_batch = 0;
        double batch_loss = 0, batch_text = 0, batch_reg = 0, batch_kl = 0;
        for (int epoch = 0; epoch < rc.optim.joint_epochs; ++epoch) {
            std::vector<int> order = data.train_idx;
            Rng shuffle_rng(mix_seed(mix_seed(rc.seed, kTagSlmShuffle + 1), epoch));
            shuffle_indices(order, shuffle_rng);
            for (int i : order) {
                const slm::JointSequence& seq = streams[static_cast<size_t>(i)];
                const int mlen = seq.length();
                std::vector<int> inputs = {m.bos_id()};
                inputs.insert(inputs.end(), seq.text.begin(), seq.text.end());
                std::vector<int> text_targets = seq.text;
                text_targets.push_back(m.eos_id());

                ad::Graph g;
                ad::GraphParams adapter_params(g, m.adapter);
                nn::ParamFn pf = [&](const std::string& n) -> ad::Var {
                    if (n.rfind("base.", 0) == 0) return g.constant(m.base.at(n));
                    return adapter_params(n);
                };

                ad::Var loss;
                if (m.mode == "token") {
                    IMat code_inputs(m.rvq_layers, mlen + 1);
                    code_inputs.col(0).setZero();
                    for (int c = 0; c < mlen; ++c) code_inputs.col(c + 1) = seq.codes.col(c);
                    slm::SlmForward f =
                        slm::build_slm_forward(g, pf, m, inputs, &code_inputs, nullptr, true);
                    IMat code_targets(m.rvq_layers, mlen + 1);
                    code_targets.leftCols(mlen) = seq.codes;
                    code_targets.col(mlen) = seq.codes.col(mlen - 1); // end step repeats
                    loss = losses::token_lm_loss(g, f.text_logits, f.code_logits, text_targets,
                                                 code_targets);
                    batch_text += g.value(loss)(0, 0);
                } else {
                    Mat latent_inputs = Mat::Zero(mlen + 1, m.d_z);
                    for (int c = 0; c < mlen; ++c) latent_inputs.row(c + 1) = seq.latents.row(c);
                    slm::SlmForward f =
                        slm::build_slm_forward(g, pf, m, inputs, nullptr, &latent_inputs, true);
                    // latent predictions for steps 1..M live on rows 0..M-1
                    ad::Var mu = g.slice_rows(f.mu, 0, mlen);
                    ad::Var log_var = g.slice_rows(f.log_var, 0, mlen);
                    Rng eps_rng(mix_seed(mix_seed(rc.seed, kTagEps), seen));
                    Mat eps = eps_rng.gaussian_mat(mlen, m.d_z, 1.0);
                    ad::Var e = losses::sample_latent(g, mu, log_var, eps);
                    auto parts = losses::emb_lm_loss(g, f.text_logits, text_targets, e, mu,
                                                     log_var, seq.latents, rc.train);
                    loss = parts.total;
                    batch_text += g.value(parts.text_ce)(0, 0);
                    batch_reg += g.value(parts.reg)(0, 0);
                    batch_kl += g.value(parts.kl)(0, 0);
                }
                double lv = g.value(loss)(0, 0);
                check_finite(lv);
                batch_loss += lv;
                g.backward(loss);
                adapter_params.accumulate_grads(grads);
                ++in_batch;
                ++seen;
                if (in_batch == rc.optim.batch_size || seen == total) {
                    opt.step(m.adapter, grads,
                             cosine_lr_scale(seen, total, rc.optim.cosine_decay));
                    grads.clear();
                    if (log != nullptr) {
                        std::map<std::string, double> rec = {
                            {"loss_joint", batch_loss / in_batch},
                            {"loss_text", batch_text / in_batch}};
                        if (m.mode == "embed") {
                            rec["loss_reg"] = batch_reg / in_batch;
                            rec["loss_kl"] = batch_kl / in_batch;
                        }
                        log->record(++step, epoch, rec);
                    }
                    in_batch = 0;
                    batch_loss = batch_text = batch_reg = batch_kl = 0;
                }
            }
        }
    }
    return m;
}

} // namespace taste::train
