// SPDX-License-Identifier: Apache-2.0
#include "taste/model.hpp"

#include "taste/array_io.hpp"
#include "taste/decoder.hpp"

namespace taste {

namespace {

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

double get_scalar(const std::map<std::string, Mat>& e, const std::string& key) {
    auto it = e.find(key);
    require_data(it != e.end(), "checkpoint missing entry: " + key);
    return it->second(0, 0);
}

int get_int(const std::map<std::string, Mat>& e, const std::string& key) {
    return static_cast<int>(std::lround(get_scalar(e, key)));
}

const char* kVariants[] = {"enc-only", "enc+agg", "enc+agg+quan", "enc-last", "text-only"};

int variant_index(const std::string& v) {
    for (int i = 0; i < 5; ++i)
        if (v == kVariants[i]) return i;
    throw ArgError("unknown variant: " + v);
}

void store_params(std::map<std::string, Mat>& e, const ad::ParamStore& ps) {
    for (const auto& [k, entry] : ps.entries) e[k] = entry.value;
}

void load_params(ad::ParamStore& ps, const std::map<std::string, Mat>& e,
                 const std::string& prefix) {
    for (const auto& [k, v] : e)
        if (k.rfind(prefix, 0) == 0) ps.add(k, v);
}

} // namespace

TasteModel init_taste_model(const RunConfig& rc, int d_in, int asr_vocab, int unit_vocab,
                            int num_speakers) {
    rc.validate_variant();
    TasteModel m;
    m.tok_cfg = rc.tokenizer;
    m.dec_cfg = rc.decoder;
    m.variant = rc.variant;
    if (m.variant == "enc-last") m.tok_cfg.shallow_layer = m.tok_cfg.encoder_layers;
    m.d_in = d_in;
    m.asr_vocab = asr_vocab;
    m.unit_vocab = unit_vocab;
    m.num_speakers = num_speakers;
    m.word_average = rc.tokenizer.word_average;

    Rng rng(mix_seed(rc.seed, 0x4d4f44454c));
    tok::init_encoder(m.enc, m.tok_cfg, d_in, unit_vocab, rng);
    tok::init_aggregator(m.agg, m.tok_cfg, asr_vocab, rng);
    dec::init_decoder(m.dec, m.dec_cfg, m.tok_cfg.d_z, m.tok_cfg.d_h, asr_vocab, unit_vocab,
                      num_speakers, rng);
    m.quant = tok::make_quantizer(m.tok_cfg.rvq_layers, m.tok_cfg.codebook_size, m.tok_cfg.d_z,
                                  rng);
    return m;
}

void save_taste_model(const TasteModel& m, const std::string& path) {
    std::map<std::string, Mat> e;
    e["meta.version"] = scalar(1);
    e["meta.kind"] = scalar(0); // 0 = tokenizer bundle
    e["meta.variant"] = scalar(variant_index(m.variant));
    e["meta.d_in"] = scalar(m.d_in);
    e["meta.asr_vocab"] = scalar(m.asr_vocab);
    e["meta.unit_vocab"] = scalar(m.unit_vocab);
    e["meta.num_speakers"] = scalar(m.num_speakers);
    e["meta.word_average"] = scalar(m.word_average ? 1 : 0);

    e["meta.tok.d_h"] = scalar(m.tok_cfg.d_h);
    e["meta.tok.encoder_layers"] = scalar(m.tok_cfg.encoder_layers);
    e["meta.tok.encoder_heads"] = scalar(m.tok_cfg.encoder_heads);
    e["meta.tok.encoder_ffn_mult"] = scalar(m.tok_cfg.encoder_ffn_mult);
    e["meta.tok.shallow_layer"] = scalar(m.tok_cfg.shallow_layer);
    e["meta.tok.agg_layers"] = scalar(m.tok_cfg.agg_layers);
    e["meta.tok.agg_heads"] = scalar(m.tok_cfg.agg_heads);
    e["meta.tok.d_z"] = scalar(m.tok_cfg.d_z);
    e["meta.tok.rvq_layers"] = scalar(m.tok_cfg.rvq_layers);
    e["meta.tok.codebook_size"] = scalar(m.tok_cfg.codebook_size);
    e["meta.tok.values_use_last"] = scalar(m.tok_cfg.values_use_last ? 1 : 0);

    e["meta.dec.layers"] = scalar(m.dec_cfg.layers);
    e["meta.dec.width"] = scalar(m.dec_cfg.width);
    e["meta.dec.heads"] = scalar(m.dec_cfg.heads);
    e["meta.dec.ffn_mult"] = scalar(m.dec_cfg.ffn_mult);
    e["meta.dec.d_spk"] = scalar(m.dec_cfg.d_spk);

    store_params(e, m.enc);
    store_params(e, m.agg);
    store_params(e, m.dec);

    e["quant.enabled"] = scalar(m.quant.enabled ? 1 : 0);
    for (int r = 0; r < m.quant.layers(); ++r) {
        std::string sr = std::to_string(r);
        e["quant.codebook." + sr] = m.quant.codebooks[static_cast<size_t>(r)];
        e["quant.ema_size." + sr] = m.quant.ema_size[static_cast<size_t>(r)];
        e["quant.ema_sum." + sr] = m.quant.ema_sum[static_cast<size_t>(r)];
    }
    write_checkpoint(path, e);
}

TasteModel load_taste_model(const std::string& path) {
    auto e = read_checkpoint(path);
    require_data(get_int(e, "meta.version") == 1, "unsupported model version: " + path);
    require_data(get_int(e, "meta.kind") == 0, "not a tokenizer checkpoint: " + path);

    TasteModel m;
    m.variant = kVariants[get_int(e, "meta.variant")];
    m.d_in = get_int(e, "meta.d_in");
    m.asr_vocab = get_int(e, "meta.asr_vocab");
    m.unit_vocab = get_int(e, "meta.unit_vocab");
    m.num_speakers = get_int(e, "meta.num_speakers");
    m.word_average = get_int(e, "meta.word_average") != 0;

    m.tok_cfg.d_h = get_int(e, "meta.tok.d_h");
    m.tok_cfg.encoder_layers = get_int(e, "meta.tok.encoder_layers");
    m.tok_cfg.encoder_heads = get_int(e, "meta.tok.encoder_heads");
    m.tok_cfg.encoder_ffn_mult = get_int(e, "meta.tok.encoder_ffn_mult");
    m.tok_cfg.shallow_layer = get_int(e, "meta.tok.shallow_layer");
    m.tok_cfg.agg_layers = get_int(e, "meta.tok.agg_layers");
    m.tok_cfg.agg_heads = get_int(e, "meta.tok.agg_heads");
    m.tok_cfg.d_z = get_int(e, "meta.tok.d_z");
    m.tok_cfg.rvq_layers = get_int(e, "meta.tok.rvq_layers");
    m.tok_cfg.codebook_size = get_int(e, "meta.tok.codebook_size");
    m.tok_cfg.values_use_last = get_int(e, "meta.tok.values_use_last") != 0;

    m.dec_cfg.layers = get_int(e, "meta.dec.layers");
    m.dec_cfg.width = get_int(e, "meta.dec.width");
    m.dec_cfg.heads = get_int(e, "meta.dec.heads");
    m.dec_cfg.ffn_mult = get_int(e, "meta.dec.ffn_mult");
    m.dec_cfg.d_spk = get_int(e, "meta.dec.d_spk");

    load_params(m.enc, e, "enc.");
    load_params(m.agg, e, "agg.");
    load_params(m.dec, e, "dec.");
    m.enc.set_trainable(false); // encoder ships frozen

    m.quant.enabled = get_int(e, "quant.enabled") != 0;
    for (int r = 0; r < m.tok_cfg.rvq_layers; ++r) {
        std::string sr = std::to_string(r);
        if (!e.count("quant.codebook." + sr)) break;
        m.quant.codebooks.push_back(e.at("quant.codebook." + sr));
        m.quant.ema_size.push_back(e.at("quant.ema_size." + sr).col(0));
        m.quant.ema_sum.push_back(e.at("quant.ema_sum." + sr));
    }
    m.quant.reset_epoch_usage();
    return m;
}

void save_slm_model(const SlmModel& m, const std::string& path) {
    std::map<std::string, Mat> e;
    e["meta.version"] = scalar(1);
    e["meta.kind"] = scalar(1); // 1 = slm bundle
    e["meta.mode"] = scalar(m.mode == "token" ? 0 : 1);
    e["meta.llm_vocab"] = scalar(m.llm_vocab);
    e["meta.rvq_layers"] = scalar(m.rvq_layers);
    e["meta.codebook_size"] = scalar(m.codebook_size);
    e["meta.d_z"] = scalar(m.d_z);
    e["meta.slm.width"] = scalar(m.cfg.width);
    e["meta.slm.layers"] = scalar(m.cfg.layers);
    e["meta.slm.heads"] = scalar(m.cfg.heads);
    e["meta.slm.ffn_mult"] = scalar(m.cfg.ffn_mult);
    e["meta.slm.lora_rank"] = scalar(m.cfg.lora_rank);
    e["meta.slm.lora_alpha"] = scalar(m.cfg.lora_alpha);
    store_params(e, m.base);
    store_params(e, m.adapter);
    write_checkpoint(path, e);
}

SlmModel load_slm_model(const std::string& path) {
    auto e = read_checkpoint(path);
    require_data(get_int(e, "meta.version") == 1, "unsupported model version: " + path);
    require_data(get_int(e, "meta.kind") == 1, "not an slm checkpoint: " + path);
    SlmModel m;
    m.mode = get_int(e, "meta.mode") == 0 ? "token" : "embed";
    m.llm_vocab = get_int(e, "meta.llm_vocab");
    m.rvq_layers = get_int(e, "meta.rvq_layers");
    m.codebook_size = get_int(e, "meta.codebook_size");
    m.d_z = get_int(e, "meta.d_z");
    m.cfg.width = get_int(e, "meta.slm.width");
    m.cfg.layers = get_int(e, "meta.slm.layers");
    m.cfg.heads = get_int(e, "meta.slm.heads");
    m.cfg.ffn_mult = get_int(e, "meta.slm.ffn_mult");
    m.cfg.lora_rank = get_int(e, "meta.slm.lora_rank");
    m.cfg.lora_alpha = get_int(e, "meta.slm.lora_alpha");
    load_params(m.base, e, "base.");
    load_params(m.adapter, e, "adapter.");
    m.base.set_trainable(false);
    return m;
}

} // namespace taste
