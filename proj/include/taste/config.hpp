// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace taste {

// Flat key-value config with [section] headers, '#' comments and a
// mandatory top-level "version" key.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;
    double get_real(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    std::map<std::string, std::map<std::string, std::string>> sections;
};

struct CorpusConfig {
    int num_utterances = 200;
    int num_speakers = 8;
    int frame_rate = 50;           // frames per second
    int d_in = 16;                 // feature dimension
    int unit_vocab = 48;           // U
    int min_words = 3;
    int max_words = 8;
    double min_rate = 0.7;         // speaking-rate scalar range
    double max_rate = 1.3;
    double frames_per_char = 1.6;
    int unit_stride = 2;           // frames per target unit
    bool duplicate_transcripts = true; // utterances 2k and 2k+1 share a sentence
    double holdout_fraction = 0.1;
    std::vector<std::string> words; // empty -> built-in vocabulary

    void validate() const;
};

struct TokenizerConfig {
    int d_h = 64;
    int encoder_layers = 4;        // L
    int encoder_heads = 4;
    int encoder_ffn_mult = 2;
    int shallow_layer = 2;         // l
    int agg_layers = 2;
    int agg_heads = 4;
    int d_z = 32;
    int rvq_layers = 4;            // R
    int codebook_size = 64;        // |C|
    bool word_average = true;      // word-level averaging during training
    bool values_use_last = false;  // aggregator values from h^(L) instead of h^(l)
    double ema_decay = 0.99;

    void validate() const;
};

struct DecoderConfig {
    int layers = 4;
    int width = 64;
    int heads = 4;
    int ffn_mult = 2;
    int d_spk = 16;

    void validate() const;
};

enum class Reduction {
    SumOverSequenceMean, // sum over feature dim, mean over positions
    MeanOverElements,
};

struct TrainConfig {
    double lambda_reg = 1.0;
    double lambda_kl = 1.0;
    int warmup_epochs = 2;         // quantizer disabled for these epochs
    Reduction reduction = Reduction::SumOverSequenceMean;
    bool kl_sigma_first_power = false; // literal sigma (not sigma^2) inside the KL sum

    void validate() const;
};

struct SlmConfig {
    int width = 128;
    int layers = 4;
    int heads = 4;
    int ffn_mult = 2;
    int lora_rank = 8;
    int lora_alpha = 16;

    void validate() const;
};

struct OptimConfig {
    double tokenizer_lr = 1e-3;
    double slm_lr = 1e-4;
    int tokenizer_epochs = 4;
    int encoder_pretrain_epochs = 1;
    int text_pretrain_epochs = 2;
    int joint_epochs = 2;
    int batch_size = 16;
    bool cosine_decay = true;
};

struct DecodeConfig {
    int max_steps = 64;
    double temperature = 1.0;
    int top_k = 0;                 // 0 -> greedy
    bool eps_zero = true;          // embedding-mode noise policy
};

// Everything a CLI command needs; parsed from the config file plus flag
// overrides.
struct RunConfig {
    uint64_t seed = 7;
    std::string corpus_dir;
    std::string tokenizer_ckpt;
    std::string slm_ckpt;
    std::string variant = "enc+agg+quan"; // enc-only | enc+agg | enc+agg+quan | enc-last | text-only
    std::string mode = "token";           // token | embed
    std::string out_path;

    CorpusConfig corpus;
    TokenizerConfig tokenizer;
    DecoderConfig decoder;
    TrainConfig train;
    SlmConfig slm;
    OptimConfig optim;
    DecodeConfig decode;

    // command extras
    std::string edit_utt_a, edit_utt_b, codes_path, scores_input;
    std::vector<int> edit_words;
    int continue_prompt_words = 3;
    int continue_count = 8;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_config(const ConfigFile& cf);
    void validate_variant() const;
};

Reduction parse_reduction(const std::string& s);

} // namespace taste
