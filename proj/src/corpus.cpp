// SPDX-License-Identifier: Apache-2.0
#include "taste/corpus.hpp"

#include "taste/array_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace taste::corpus {

namespace {

constexpr uint64_t kTagSentence = 0x53454e54;
constexpr uint64_t kTagRealize = 0x5245414c;
constexpr uint64_t kTagLang = 0x4c414e47;
constexpr uint64_t kTagUnits = 0x554e4954;
constexpr uint64_t kTagSucc = 0x53554343;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::string join_spans(const std::vector<Span>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i].first) + ':' + std::to_string(v[i].second);
    }
    return s;
}

std::vector<int> parse_ints(const std::string& s, const std::string& ctx) {
    std::vector<int> out;
    if (s.empty()) return out;
    for (const std::string& p : split(s, ',')) {
        try {
            out.push_back(std::stoi(p));
        } catch (const std::exception&) {
            throw DataError(ctx + ": bad integer '" + p + "'");
        }
    }
    return out;
}

std::vector<Span> parse_spans(const std::string& s, const std::string& ctx) {
    std::vector<Span> out;
    if (s.empty()) return out;
    for (const std::string& p : split(s, ',')) {
        auto parts = split(p, ':');
        require_data(parts.size() == 2, ctx + ": bad span '" + p + "'");
        try {
            out.push_back({std::stoi(parts[0]), std::stoi(parts[1])});
        } catch (const std::exception&) {
            throw DataError(ctx + ": bad span '" + p + "'");
        }
    }
    return out;
}

void check_partition(const std::vector<Span>& groups, int total, const std::string& ctx) {
    int expect = 0;
    for (const Span& g : groups) {
        require_data(g.first == expect && g.second > g.first,
                     ctx + ": word groups must contiguously tile the token sequence");
        expect = g.second;
    }
    require_data(expect == total, ctx + ": word groups do not cover the token sequence");
}

} // namespace

std::string CorpusManifest::resolve(const std::string& rel) const {
    if (base_dir.empty()) return rel;
    return (std::filesystem::path(base_dir) / rel).string();
}

// ---------------------------------------------------------------------------
// tokenizers

ToyTokenizer ToyTokenizer::build(const std::vector<std::string>& vocab_words, int piece_len) {
    require_config(!vocab_words.empty(), "tokenizer: empty word vocabulary");
    require_config(piece_len >= 1, "tokenizer: piece length must be >= 1");
    ToyTokenizer t;
    t.piece_len_ = piece_len;
    t.known_words_ = vocab_words;
    std::set<std::pair<std::string, bool>> pieces;
    for (const std::string& w : vocab_words) {
        require_config(!w.empty(), "tokenizer: empty word in vocabulary");
        for (size_t i = 0; i < w.size(); i += static_cast<size_t>(piece_len)) {
            std::string piece = w.substr(i, static_cast<size_t>(piece_len));
            bool final = i + static_cast<size_t>(piece_len) >= w.size();
            pieces.insert({piece, final});
        }
    }
    for (const auto& p : pieces) {
        t.piece_to_id_[p] = static_cast<int>(t.id_to_piece_.size());
        t.id_to_piece_.push_back(p);
    }
    return t;
}

bool ToyTokenizer::piece_is_final(int id) const {
    require_arg(id >= 0 && id < vocab_size(), "piece id out of range");
    return id_to_piece_[static_cast<size_t>(id)].second;
}

std::pair<std::vector<int>, std::vector<Span>> ToyTokenizer::tokenize(
    const std::vector<std::string>& words) const {
    require_arg(!words.empty(), "tokenize: empty word sequence");
    std::vector<int> tokens;
    std::vector<Span> groups;
    for (const std::string& w : words) {
        if (std::find(known_words_.begin(), known_words_.end(), w) == known_words_.end())
            throw DataError("tokenization error: out-of-vocabulary word '" + w + "'");
        int start = static_cast<int>(tokens.size());
        for (size_t i = 0; i < w.size(); i += static_cast<size_t>(piece_len_)) {
            std::string piece = w.substr(i, static_cast<size_t>(piece_len_));
            bool final = i + static_cast<size_t>(piece_len_) >= w.size();
            auto it = piece_to_id_.find({piece, final});
            require_data(it != piece_to_id_.end(),
                         "tokenization error: word '" + w + "' has unknown piece '" + piece + "'");
            tokens.push_back(it->second);
        }
        groups.push_back({start, static_cast<int>(tokens.size())});
    }
    return {tokens, groups};
}

std::vector<std::string> ToyTokenizer::detokenize(const std::vector<int>& tokens,
                                                  const std::vector<Span>& groups) const {
    check_partition(groups, static_cast<int>(tokens.size()), "detokenize");
    std::vector<std::string> words;
    for (const Span& g : groups) {
        std::string w;
        for (int i = g.first; i < g.second; ++i) {
            int id = tokens[static_cast<size_t>(i)];
            require_arg(id >= 0 && id < vocab_size(), "detokenize: token id out of range");
            const auto& [text, final] = id_to_piece_[static_cast<size_t>(id)];
            require_data(final == (i == g.second - 1),
                         "detokenize: word-final piece in non-final position");
            w += text;
        }
        words.push_back(w);
    }
    return words;
}

// ---------------------------------------------------------------------------
// language

const std::vector<std::string>& default_vocabulary() {
    static const std::vector<std::string> kWords = {
        "al",      "ba",      "cedar",   "dawn",    "ember",    "falcon",  "gale",
        "harbor",  "iris",    "juniper", "keel",    "lantern",  "meadow",  "north",
        "opal",    "pine",    "quartz",  "river",   "stone",    "timber",  "under",
        "vale",    "willow",  "xenon",   "yarrow",  "zephyr",   "amber",   "birch",
        "cliff",   "delta",   "echo",    "fern",    "grove",    "heron",   "inlet",
        "jade",    "kestrel", "lagoon",  "mist",    "nettle",   "orchard", "prairie",
        "reed",    "summit",  "thicket", "upland",  "vantage",  "wren",
    };
    return kWords;
}

CorpusLang CorpusLang::build(uint64_t seed, const CorpusConfig& cfg) {
    CorpusLang lang;
    lang.words = cfg.words.empty() ? default_vocabulary() : cfg.words;
    require_config(!lang.words.empty(), "corpus: empty word vocabulary");
    const int v = static_cast<int>(lang.words.size());
    const int d = cfg.d_in;

    Rng rng(mix_seed(seed, kTagLang));
    lang.word_amp = rng.gaussian_mat(v, d, 0.55);
    lang.word_harm = rng.gaussian_mat(v, d, 0.55);
    lang.word_freq = Vec(v);
    lang.word_phase = Vec(v);
    for (int i = 0; i < v; ++i) {
        lang.word_freq(i) = 1.0 + rng.uniform_int(3);
        lang.word_phase(i) = rng.uniform();
    }
    lang.speaker_offset = rng.gaussian_mat(cfg.num_speakers, d, 0.45);
    lang.rate_dir = rng.gaussian_mat(1, d, 0.9).transpose();
    lang.style_dir = rng.gaussian_mat(1, d, 0.55).transpose();

    Rng srng(mix_seed(seed, kTagSucc));
    lang.successors.resize(static_cast<size_t>(v));
    for (int i = 0; i < v; ++i) {
        std::set<int> next;
        while (static_cast<int>(next.size()) < std::min(4, v))
            next.insert(srng.uniform_int(v));
        lang.successors[static_cast<size_t>(i)].assign(next.begin(), next.end());
    }

    lang.asr_tok = ToyTokenizer::build(lang.words, 2);
    lang.llm_tok = ToyTokenizer::build(lang.words, 3);
    return lang;
}

std::vector<std::string> CorpusLang::sample_sentence(Rng& rng, const CorpusConfig& cfg) const {
    int len = cfg.min_words + rng.uniform_int(cfg.max_words - cfg.min_words + 1);
    std::vector<std::string> out;
    int w = rng.uniform_int(static_cast<int>(words.size()));
    out.push_back(words[static_cast<size_t>(w)]);
    for (int i = 1; i < len; ++i) {
        const auto& next = successors[static_cast<size_t>(w)];
        w = next[static_cast<size_t>(rng.uniform_int(static_cast<int>(next.size())))];
        out.push_back(words[static_cast<size_t>(w)]);
    }
    return out;
}

int CorpusLang::word_index(const std::string& w) const {
    auto it = std::find(words.begin(), words.end(), w);
    require_data(it != words.end(), "unknown word: " + w);
    return static_cast<int>(it - words.begin());
}

Vec unit_projection(uint64_t seed, int d_in) {
    Rng rng(mix_seed(seed, kTagUnits));
    Vec p = rng.gaussian_mat(1, d_in, 1.0).transpose();
    p /= p.norm();
    return p;
}

std::vector<int> units_from_features(const Mat& features, const Vec& proj, int stride,
                                     int unit_vocab) {
    require_arg(features.rows() > 0, "units_from_features: empty feature sequence");
    require_arg(features.cols() == proj.size(), "units_from_features: dimension mismatch");
    std::vector<int> units;
    for (int t = 0; t < features.rows(); t += stride) {
        double s = 0;
        for (int j = 0; j < features.cols(); ++j) s += proj(j) * features(t, j);
        int bin = static_cast<int>(std::floor((s + 3.0) / 6.0 * unit_vocab));
        bin = std::max(0, std::min(unit_vocab - 1, bin));
        units.push_back(bin);
    }
    return units;
}

Synthesized synthesize_utterance(const CorpusLang& lang, const CorpusConfig& cfg,
                                 const std::vector<std::string>& sentence, int speaker,
                                 double rate, double style, uint64_t jitter_seed) {
    require_arg(!sentence.empty(), "synthesize: empty sentence");
    require_arg(speaker >= 0 && speaker < cfg.num_speakers, "synthesize: speaker out of range");

    Synthesized out;
    std::vector<int> word_ids;
    int total_frames = 0;
    for (const std::string& w : sentence) {
        int wi = lang.word_index(w);
        word_ids.push_back(wi);
        int frames = std::max(
            2, static_cast<int>(std::lround(cfg.frames_per_char * static_cast<double>(w.size()) / rate)));
        out.frames_per_word.push_back(frames);
        total_frames += frames;
    }

    Rng jitter(jitter_seed);
    const int d = cfg.d_in;
    Mat feats(total_frames, d);
    int t = 0;
    for (size_t wpos = 0; wpos < word_ids.size(); ++wpos) {
        int wi = word_ids[wpos];
        int frames = out.frames_per_word[wpos];
        for (int j = 0; j < frames; ++j, ++t) {
            double tau = (j + 0.5) / frames;
            double env = std::sin(M_PI * tau);
            double harm = std::sin(2.0 * M_PI * (lang.word_freq(wi) * tau + lang.word_phase(wi)));
            for (int k = 0; k < d; ++k) {
                double x = lang.word_amp(wi, k) * env + lang.word_harm(wi, k) * harm +
                           lang.speaker_offset(speaker, k) + (rate - 1.0) * lang.rate_dir(k) +
                           style * lang.style_dir(k) + 0.04 * jitter.gaussian();
                // round through float32 so stored and in-memory features agree
                feats(t, k) = static_cast<double>(static_cast<float>(x));
            }
        }
    }
    out.features = std::move(feats);
    out.duration_s = static_cast<double>(total_frames) / cfg.frame_rate;
    return out;
}

Transcription transcribe(const CorpusLang& lang, const std::vector<std::string>& sentence) {
    Transcription tr;
    tr.words = sentence;
    std::tie(tr.asr_tokens, tr.asr_groups) = lang.asr_tok.tokenize(sentence);
    std::tie(tr.llm_tokens, tr.llm_groups) = lang.llm_tok.tokenize(sentence);
    return tr;
}

// ---------------------------------------------------------------------------
// generation

CorpusManifest generate_corpus(uint64_t seed, int num_utterances, const CorpusConfig& cfg,
                               const std::string& out_dir) {
    require_arg(num_utterances >= 1, "generate_corpus: num_utterances must be >= 1");
    cfg.validate();
    require_config(!(cfg.words.empty() && default_vocabulary().empty()),
                   "generate_corpus: empty vocabulary");

    CorpusLang lang = CorpusLang::build(seed, cfg);
    Vec proj = unit_projection(seed, cfg.d_in);

    std::filesystem::create_directories(std::filesystem::path(out_dir) / "arrays");

    CorpusManifest m;
    m.base_dir = out_dir;
    m.meta.frame_rate = cfg.frame_rate;
    m.meta.d_in = cfg.d_in;
    m.meta.unit_vocab = cfg.unit_vocab;
    m.meta.num_speakers = cfg.num_speakers;
    m.meta.unit_stride = cfg.unit_stride;
    m.meta.seed = seed;

    for (int i = 0; i < num_utterances; ++i) {
        uint64_t sentence_key = cfg.duplicate_transcripts ? static_cast<uint64_t>(i / 2)
                                                          : static_cast<uint64_t>(i);
        Rng srng(mix_seed(mix_seed(seed, kTagSentence), sentence_key));
        std::vector<std::string> sentence = lang.sample_sentence(srng, cfg);

        Rng rrng(mix_seed(mix_seed(seed, kTagRealize), static_cast<uint64_t>(i)));
        int speaker = rrng.uniform_int(cfg.num_speakers);
        double rate = rrng.uniform(cfg.min_rate, cfg.max_rate);
        double style = rrng.gaussian();
        uint64_t jitter_seed = rrng.next_u64();

        Synthesized syn = synthesize_utterance(lang, cfg, sentence, speaker, rate, style,
                                               jitter_seed);
        syn.units = units_from_features(syn.features, proj, cfg.unit_stride, cfg.unit_vocab);

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "utt%06d", i);
        ManifestRecord rec;
        rec.utterance_id = idbuf;
        rec.speaker_id = speaker;
        rec.duration_s = syn.duration_s;
        rec.feature_path = std::string("arrays/") + idbuf + ".feat.arr";
        rec.unit_path = std::string("arrays/") + idbuf + ".units.arr";
        rec.transcription = transcribe(lang, sentence);

        write_array(m.resolve(rec.feature_path), syn.features);
        write_array(m.resolve(rec.unit_path), syn.units);
        m.records.push_back(std::move(rec));
    }

    write_manifest(m, (std::filesystem::path(out_dir) / "manifest.txt").string());
    return m;
}

// ---------------------------------------------------------------------------
// manifest I/O

void write_manifest(const CorpusManifest& m, const std::string& path) {
    std::ostringstream os;
    os << "TASTE-MANIFEST\tversion=" << m.meta.version << "\tframe_rate=" << m.meta.frame_rate
       << "\td_in=" << m.meta.d_in << "\tunit_vocab=" << m.meta.unit_vocab
       << "\tnum_speakers=" << m.meta.num_speakers << "\tunit_stride=" << m.meta.unit_stride
       << "\tseed=" << m.meta.seed << "\n";
    std::set<std::string> seen;
    for (const ManifestRecord& r : m.records) {
        require_arg(seen.insert(r.utterance_id).second,
                    "write_manifest: duplicate utterance_id " + r.utterance_id);
        char dur[32];
        std::snprintf(dur, sizeof(dur), "%.6f", r.duration_s);
        std::string words;
        for (size_t i = 0; i < r.transcription.words.size(); ++i) {
            if (i) words += ' ';
            words += r.transcription.words[i];
        }
        os << r.utterance_id << '\t' << r.speaker_id << '\t' << dur << '\t' << r.feature_path
           << '\t' << r.unit_path << '\t' << words << '\t' << join_ints(r.transcription.asr_tokens)
           << '\t' << join_spans(r.transcription.asr_groups) << '\t'
           << join_ints(r.transcription.llm_tokens) << '\t'
           << join_spans(r.transcription.llm_groups) << "\n";
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require_data(f.is_open(), "cannot write manifest: " + path);
        f << os.str();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require_data(!ec, "rename failed: " + path);
}

CorpusManifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    require_data(f.is_open(), "missing manifest: " + path);
    CorpusManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();

    std::string line;
    require_data(static_cast<bool>(std::getline(f, line)), "manifest is empty: " + path);
    auto header = split(line, '\t');
    require_data(!header.empty() && header[0] == "TASTE-MANIFEST",
                 "line 1: not a TASTE manifest: " + path);
    std::map<std::string, std::string> meta;
    for (size_t i = 1; i < header.size(); ++i) {
        auto kv = split(header[i], '=');
        require_data(kv.size() == 2, "line 1: bad metadata field '" + header[i] + "'");
        meta[kv[0]] = kv[1];
    }
    require_data(meta.count("version"), "line 1: missing manifest version");
    int version = std::stoi(meta["version"]);
    require_data(version == 1, "unsupported manifest version " + std::to_string(version) +
                                   " (this reader supports version 1)");
    m.meta.version = version;
    m.meta.frame_rate = std::stoi(meta.at("frame_rate"));
    m.meta.d_in = std::stoi(meta.at("d_in"));
    m.meta.unit_vocab = std::stoi(meta.at("unit_vocab"));
    m.meta.num_speakers = std::stoi(meta.at("num_speakers"));
    m.meta.unit_stride = std::stoi(meta.at("unit_stride"));
    m.meta.seed = std::stoull(meta.at("seed"));

    std::set<std::string> seen;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string ctx = "line " + std::to_string(lineno);
        auto fields = split(line, '\t');
        require_data(fields.size() == 10, ctx + ": expected 10 tab-separated fields, got " +
                                              std::to_string(fields.size()));
        ManifestRecord r;
        r.utterance_id = fields[0];
        require_data(seen.insert(r.utterance_id).second,
                     ctx + ": duplicate utterance_id " + r.utterance_id);
        try {
            r.speaker_id = std::stoi(fields[1]);
            r.duration_s = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw DataError(ctx + ": bad numeric field");
        }
        r.feature_path = fields[3];
        r.unit_path = fields[4];
        r.transcription.words = split(fields[5], ' ');
        r.transcription.asr_tokens = parse_ints(fields[6], ctx);
        r.transcription.asr_groups = parse_spans(fields[7], ctx);
        r.transcription.llm_tokens = parse_ints(fields[8], ctx);
        r.transcription.llm_groups = parse_spans(fields[9], ctx);

        const size_t w = r.transcription.words.size();
        require_data(r.transcription.asr_groups.size() == w && r.transcription.llm_groups.size() == w,
                     ctx + ": group count does not match word count");
        check_partition(r.transcription.asr_groups,
                        static_cast<int>(r.transcription.asr_tokens.size()), ctx);
        check_partition(r.transcription.llm_groups,
                        static_cast<int>(r.transcription.llm_tokens.size()), ctx);
        require_data(std::filesystem::exists(m.resolve(r.feature_path)),
                     ctx + ": missing referenced file " + r.feature_path);
        require_data(std::filesystem::exists(m.resolve(r.unit_path)),
                     ctx + ": missing referenced file " + r.unit_path);
        m.records.push_back(std::move(r));
    }
    return m;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double holdout_fraction) {
    int held = static_cast<int>(std::lround(n * holdout_fraction));
    held = std::min(held, n);
    std::vector<int> train, holdout;
    for (int i = 0; i < n - held; ++i) train.push_back(i);
    for (int i = n - held; i < n; ++i) holdout.push_back(i);
    return {train, holdout};
}

Mat load_features(const CorpusManifest& m, const ManifestRecord& r) {
    return read_array_mat(m.resolve(r.feature_path));
}

std::vector<int> load_units(const CorpusManifest& m, const ManifestRecord& r) {
    return read_array_ints(m.resolve(r.unit_path));
}

} // namespace taste::corpus
