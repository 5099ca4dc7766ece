// SPDX-License-Identifier: Apache-2.0
#include "taste/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace taste {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

} // namespace

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
    ConfigFile cf;
    std::istringstream is(text);
    std::string line;
    std::string section; // "" = top level
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            require_config(t.back() == ']', origin + ":" + std::to_string(lineno) +
                                                ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            require_config(!section.empty(), origin + ":" + std::to_string(lineno) +
                                                 ": empty section name");
            cf.sections[section];
            continue;
        }
        size_t eq = t.find('=');
        require_config(eq != std::string::npos,
                       origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        require_config(!key.empty(), origin + ":" + std::to_string(lineno) + ": empty key");
        cf.sections[section][key] = val;
    }
    return cf;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream is(path);
    require_config(is.is_open(), "cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    ConfigFile cf = parse_string(ss.str(), path);
    long v = cf.get_int("", "version", -1);
    require_config(v == 1, path + ": missing or unsupported config version (want version = 1)");
    return cf;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto it = sections.find(section);
    return it != sections.end() && it->second.count(key) > 0;
}

std::string ConfigFile::get_str(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
    auto it = sections.find(section);
    if (it == sections.end()) return fallback;
    auto jt = it->second.find(key);
    return jt == it->second.end() ? fallback : jt->second;
}

long ConfigFile::get_int(const std::string& section, const std::string& key, long fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& s = sections.at(section).at(key);
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        require_config(pos == s.size(), "");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key [" + section + "] " + key + ": not an integer: " + s);
    }
}

double ConfigFile::get_real(const std::string& section, const std::string& key,
                            double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& s = sections.at(section).at(key);
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        require_config(pos == s.size(), "");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key [" + section + "] " + key + ": not a number: " + s);
    }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string s = sections.at(section).at(key);
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key [" + section + "] " + key + ": not a boolean: " + s);
}

Reduction parse_reduction(const std::string& s) {
    if (s == "sum-over-sequence-mean") return Reduction::SumOverSequenceMean;
    if (s == "mean-over-elements") return Reduction::MeanOverElements;
    throw ConfigError("unknown reduction: " + s);
}

void CorpusConfig::validate() const {
    require_config(num_utterances >= 1, "corpus: num_utterances must be >= 1");
    require_config(num_speakers >= 1, "corpus: num_speakers must be >= 1");
    require_config(frame_rate >= 1, "corpus: frame_rate must be >= 1");
    require_config(d_in >= 1, "corpus: d_in must be >= 1");
    require_config(unit_vocab >= 2, "corpus: unit_vocab must be >= 2");
    require_config(min_words >= 1 && max_words >= min_words, "corpus: bad sentence-length range");
    require_config(min_rate > 0 && max_rate >= min_rate, "corpus: bad rate range");
    require_config(unit_stride >= 1, "corpus: unit_stride must be >= 1");
    require_config(holdout_fraction >= 0 && holdout_fraction < 1, "corpus: bad holdout fraction");
}

void TokenizerConfig::validate() const {
    require_config(encoder_layers >= 2, "tokenizer: encoder needs at least 2 layers");
    require_config(d_h >= 1 && d_z >= 1, "tokenizer: widths must be positive");
    require_config(d_h % encoder_heads == 0, "tokenizer: encoder head count must divide d_h");
    require_config(d_z % agg_heads == 0, "tokenizer: aggregator head count must divide d_z");
    require_config(agg_layers >= 1, "tokenizer: aggregator needs at least 1 layer");
    require_config(rvq_layers >= 1 && codebook_size >= 1, "tokenizer: bad quantizer shape");
    bool shallow_ok = (shallow_layer >= 1 && shallow_layer <= encoder_layers / 2) ||
                      shallow_layer == encoder_layers; // last-layer ablation
    require_config(shallow_ok,
                   "tokenizer: shallow_layer must be in [1, L/2] (or L for the last-layer variant)");
    require_config(ema_decay > 0 && ema_decay < 1, "tokenizer: ema_decay in (0,1)");
}

void DecoderConfig::validate() const {
    require_config(layers >= 1 && width >= 1, "decoder: bad shape");
    require_config(width % heads == 0, "decoder: head count must divide width");
    require_config(d_spk >= 1, "decoder: d_spk must be positive");
}

void TrainConfig::validate() const {
    require_config(lambda_reg >= 0 && std::isfinite(lambda_reg), "train: lambda_reg must be >= 0");
    require_config(lambda_kl >= 0 && std::isfinite(lambda_kl), "train: lambda_kl must be >= 0");
    require_config(warmup_epochs >= 0, "train: warmup_epochs must be >= 0");
}

void SlmConfig::validate() const {
    require_config(width >= 1 && layers >= 1, "slm: bad shape");
    require_config(width % heads == 0, "slm: head count must divide width");
    require_config(lora_rank >= 1, "slm: adapter rank must be >= 1");
}

void RunConfig::validate_variant() const {
    static const char* names[] = {"enc-only", "enc+agg", "enc+agg+quan", "enc-last", "text-only"};
    for (const char* n : names)
        if (variant == n) return;
    throw ConfigError("unknown variant: " + variant);
}

RunConfig RunConfig::from_config(const ConfigFile& cf) {
    RunConfig rc;
    rc.seed = static_cast<uint64_t>(cf.get_int("run", "seed", 7));
    rc.corpus_dir = cf.get_str("run", "corpus_dir", "");
    rc.tokenizer_ckpt = cf.get_str("run", "tokenizer_ckpt", "");
    rc.slm_ckpt = cf.get_str("run", "slm_ckpt", "");
    rc.variant = cf.get_str("run", "variant", rc.variant);
    rc.mode = cf.get_str("run", "mode", rc.mode);
    rc.out_path = cf.get_str("run", "out", "");

    CorpusConfig& c = rc.corpus;
    c.num_utterances = static_cast<int>(cf.get_int("corpus", "num_utterances", c.num_utterances));
    c.num_speakers = static_cast<int>(cf.get_int("corpus", "num_speakers", c.num_speakers));
    c.frame_rate = static_cast<int>(cf.get_int("corpus", "frame_rate", c.frame_rate));
    c.d_in = static_cast<int>(cf.get_int("corpus", "d_in", c.d_in));
    c.unit_vocab = static_cast<int>(cf.get_int("corpus", "unit_vocab", c.unit_vocab));
    c.min_words = static_cast<int>(cf.get_int("corpus", "min_words", c.min_words));
    c.max_words = static_cast<int>(cf.get_int("corpus", "max_words", c.max_words));
    c.min_rate = cf.get_real("corpus", "min_rate", c.min_rate);
    c.max_rate = cf.get_real("corpus", "max_rate", c.max_rate);
    c.frames_per_char = cf.get_real("corpus", "frames_per_char", c.frames_per_char);
    c.unit_stride = static_cast<int>(cf.get_int("corpus", "unit_stride", c.unit_stride));
    c.duplicate_transcripts = cf.get_bool("corpus", "duplicate_transcripts", c.duplicate_transcripts);
    c.holdout_fraction = cf.get_real("corpus", "holdout_fraction", c.holdout_fraction);
    if (cf.has("corpus", "words")) {
        std::istringstream ws(cf.get_str("corpus", "words", ""));
        std::string w;
        while (std::getline(ws, w, ',')) {
            w.erase(std::remove_if(w.begin(), w.end(),
                                   [](unsigned char ch) { return std::isspace(ch); }),
                    w.end());
            if (!w.empty()) c.words.push_back(w);
        }
    }

    TokenizerConfig& t = rc.tokenizer;
    t.d_h = static_cast<int>(cf.get_int("tokenizer", "d_h", t.d_h));
    t.encoder_layers = static_cast<int>(cf.get_int("tokenizer", "encoder_layers", t.encoder_layers));
    t.encoder_heads = static_cast<int>(cf.get_int("tokenizer", "encoder_heads", t.encoder_heads));
    t.shallow_layer = static_cast<int>(cf.get_int("tokenizer", "shallow_layer", t.shallow_layer));
    t.agg_layers = static_cast<int>(cf.get_int("tokenizer", "agg_layers", t.agg_layers));
    t.agg_heads = static_cast<int>(cf.get_int("tokenizer", "agg_heads", t.agg_heads));
    t.d_z = static_cast<int>(cf.get_int("tokenizer", "d_z", t.d_z));
    t.rvq_layers = static_cast<int>(cf.get_int("tokenizer", "rvq_layers", t.rvq_layers));
    t.codebook_size = static_cast<int>(cf.get_int("tokenizer", "codebook_size", t.codebook_size));
    t.word_average = cf.get_bool("tokenizer", "word_average", t.word_average);
    t.values_use_last = cf.get_bool("tokenizer", "values_use_last", t.values_use_last);
    t.ema_decay = cf.get_real("tokenizer", "ema_decay", t.ema_decay);

    DecoderConfig& d = rc.decoder;
    d.layers = static_cast<int>(cf.get_int("decoder", "layers", d.layers));
    d.width = static_cast<int>(cf.get_int("decoder", "width", d.width));
    d.heads = static_cast<int>(cf.get_int("decoder", "heads", d.heads));
    d.d_spk = static_cast<int>(cf.get_int("decoder", "d_spk", d.d_spk));

    TrainConfig& tr = rc.train;
    tr.lambda_reg = cf.get_real("train", "lambda_reg", tr.lambda_reg);
    tr.lambda_kl = cf.get_real("train", "lambda_kl", tr.lambda_kl);
    tr.warmup_epochs = static_cast<int>(cf.get_int("train", "warmup_epochs", tr.warmup_epochs));
    if (cf.has("train", "reduction"))
        tr.reduction = parse_reduction(cf.get_str("train", "reduction", ""));
    tr.kl_sigma_first_power = cf.get_bool("train", "kl_sigma_first_power", tr.kl_sigma_first_power);

    SlmConfig& s = rc.slm;
    s.width = static_cast<int>(cf.get_int("slm", "width", s.width));
    s.layers = static_cast<int>(cf.get_int("slm", "layers", s.layers));
    s.heads = static_cast<int>(cf.get_int("slm", "heads", s.heads));
    s.lora_rank = static_cast<int>(cf.get_int("slm", "lora_rank", s.lora_rank));
    s.lora_alpha = static_cast<int>(cf.get_int("slm", "lora_alpha", s.lora_alpha));

    OptimConfig& o = rc.optim;
    o.tokenizer_lr = cf.get_real("optim", "tokenizer_lr", o.tokenizer_lr);
    o.slm_lr = cf.get_real("optim", "slm_lr", o.slm_lr);
    o.tokenizer_epochs = static_cast<int>(cf.get_int("optim", "tokenizer_epochs", o.tokenizer_epochs));
    o.encoder_pretrain_epochs =
        static_cast<int>(cf.get_int("optim", "encoder_pretrain_epochs", o.encoder_pretrain_epochs));
    o.text_pretrain_epochs =
        static_cast<int>(cf.get_int("optim", "text_pretrain_epochs", o.text_pretrain_epochs));
    o.joint_epochs = static_cast<int>(cf.get_int("optim", "joint_epochs", o.joint_epochs));
    o.batch_size = static_cast<int>(cf.get_int("optim", "batch_size", o.batch_size));
    o.cosine_decay = cf.get_bool("optim", "cosine_decay", o.cosine_decay);

    DecodeConfig& dc = rc.decode;
    dc.max_steps = static_cast<int>(cf.get_int("decode", "max_steps", dc.max_steps));
    dc.temperature = cf.get_real("decode", "temperature", dc.temperature);
    dc.top_k = static_cast<int>(cf.get_int("decode", "top_k", dc.top_k));
    dc.eps_zero = cf.get_bool("decode", "eps_zero", dc.eps_zero);

    rc.edit_utt_a = cf.get_str("edit", "utt_a", "");
    rc.edit_utt_b = cf.get_str("edit", "utt_b", "");
    rc.codes_path = cf.get_str("edit", "codes", cf.get_str("run", "codes", ""));
    if (cf.has("edit", "words")) {
        std::istringstream ws(cf.get_str("edit", "words", ""));
        std::string w;
        while (std::getline(ws, w, ','))
            if (!trim(w).empty()) rc.edit_words.push_back(std::stoi(trim(w)));
    }
    rc.scores_input = cf.get_str("score", "input", "");
    rc.continue_prompt_words =
        static_cast<int>(cf.get_int("continue", "prompt_words", rc.continue_prompt_words));
    rc.continue_count = static_cast<int>(cf.get_int("continue", "count", rc.continue_count));

    rc.corpus.validate();
    rc.tokenizer.validate();
    rc.decoder.validate();
    rc.train.validate();
    rc.slm.validate();
    rc.validate_variant();
    require_config(rc.mode == "token" || rc.mode == "embed", "mode must be token or embed");
    return rc;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_config(ConfigFile::parse_file(path));
}

} // namespace taste
