// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/common.hpp"
#include "taste/config.hpp"
#include "taste/rng.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace taste::corpus {

using Span = std::pair<int, int>; // [start, end)

struct Transcription {
    std::vector<std::string> words;
    std::vector<int> asr_tokens;
    std::vector<Span> asr_groups; // one contiguous span per word, tiling asr_tokens
    std::vector<int> llm_tokens;
    std::vector<Span> llm_groups;
};

struct Utterance {
    Mat features; // T x d_in, values already rounded through float32
    double duration_s = 0;
    int speaker_id = 0;
    std::string utterance_id;
};

struct ManifestRecord {
    std::string utterance_id;
    int speaker_id = 0;
    double duration_s = 0;
    std::string feature_path; // relative to the manifest directory
    std::string unit_path;
    Transcription transcription;
};

struct CorpusMeta {
    int version = 1;
    int frame_rate = 50;
    int d_in = 16;
    int unit_vocab = 48;
    int num_speakers = 8;
    int unit_stride = 2;
    uint64_t seed = 0;
};

struct CorpusManifest {
    CorpusMeta meta;
    std::vector<ManifestRecord> records;
    std::string base_dir;

    std::string resolve(const std::string& rel) const;
};

// Subword tokenizer over a closed word vocabulary: fixed-length character
// pieces, the trailing piece marked word-final so piece identity encodes
// boundary information.
class ToyTokenizer {
public:
    static ToyTokenizer build(const std::vector<std::string>& vocab_words, int piece_len);

    std::pair<std::vector<int>, std::vector<Span>> tokenize(
        const std::vector<std::string>& words) const;
    std::vector<std::string> detokenize(const std::vector<int>& tokens,
                                        const std::vector<Span>& groups) const;

    int vocab_size() const { return static_cast<int>(id_to_piece_.size()); }
    bool piece_is_final(int id) const;
    int piece_len() const { return piece_len_; }

private:
    int piece_len_ = 2;
    std::vector<std::pair<std::string, bool>> id_to_piece_;
    std::map<std::pair<std::string, bool>, int> piece_to_id_;
    std::vector<std::string> known_words_;
};

const std::vector<std::string>& default_vocabulary();

// Deterministic derivation of the whole synthetic language from (seed, cfg):
// word feature templates, speaker offsets, prosody directions, the bigram
// successor structure, the unit projection, and both tokenizers.
struct CorpusLang {
    std::vector<std::string> words;
    std::vector<std::vector<int>> successors; // 4 next-word choices per word
    Mat word_amp;                             // V x d_in
    Mat word_harm;                            // V x d_in
    Vec word_freq;                            // V
    Vec word_phase;                           // V
    Mat speaker_offset;                       // S x d_in
    Vec rate_dir;                             // d_in
    Vec style_dir;                            // d_in
    ToyTokenizer asr_tok;
    ToyTokenizer llm_tok;

    static CorpusLang build(uint64_t seed, const CorpusConfig& cfg);

    std::vector<std::string> sample_sentence(Rng& rng, const CorpusConfig& cfg) const;
    int word_index(const std::string& w) const;
};

// Unit projection depends only on (seed, d_in); reconstructible from the
// manifest metadata alone.
Vec unit_projection(uint64_t seed, int d_in);

// Fixed scalar-quantization grid over strided frames of float32 features.
std::vector<int> units_from_features(const Mat& features, const Vec& proj, int stride,
                                     int unit_vocab);

struct Synthesized {
    Mat features;
    std::vector<int> units;
    double duration_s = 0;
    std::vector<int> frames_per_word;
};

Synthesized synthesize_utterance(const CorpusLang& lang, const CorpusConfig& cfg,
                                 const std::vector<std::string>& sentence, int speaker,
                                 double rate, double style, uint64_t jitter_seed);

Transcription transcribe(const CorpusLang& lang, const std::vector<std::string>& sentence);

CorpusManifest generate_corpus(uint64_t seed, int num_utterances, const CorpusConfig& cfg,
                               const std::string& out_dir);

void write_manifest(const CorpusManifest& m, const std::string& path);
CorpusManifest read_manifest(const std::string& path);

// Train / holdout split by utterance index: the trailing fraction is held out.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double holdout_fraction);

Mat load_features(const CorpusManifest& m, const ManifestRecord& r);
std::vector<int> load_units(const CorpusManifest& m, const ManifestRecord& r);

} // namespace taste::corpus
