// SPDX-License-Identifier: Apache-2.0
#include "taste/pipeline.hpp"

#include "taste/align.hpp"
#include "taste/array_io.hpp"
#include "taste/decoder.hpp"
#include "taste/metrics.hpp"
#include "taste/model.hpp"
#include "taste/slm.hpp"
#include "taste/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace taste::pipeline {

namespace {

void atomic_write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require_data(f.is_open(), "cannot write: " + path);
        f << text;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require_data(!ec, "rename failed: " + path);
}

std::string format_codes(const IMat& codes) {
    std::string s;
    for (int r = 0; r < codes.rows(); ++r) {
        if (r) s += '|';
        for (int c = 0; c < codes.cols(); ++c) {
            if (c) s += ',';
            s += std::to_string(codes(r, c));
        }
    }
    return s;
}

IMat parse_codes(const std::string& s, int rows, int cols, const std::string& ctx) {
    IMat codes(rows, cols);
    std::istringstream rs(s);
    std::string row;
    int r = 0;
    while (std::getline(rs, row, '|')) {
        require_data(r < rows, ctx + ": too many code rows");
        std::istringstream cs(row);
        std::string cell;
        int c = 0;
        while (std::getline(cs, cell, ',')) {
            require_data(c < cols, ctx + ": too many code columns");
            codes(r, c++) = std::stoi(cell);
        }
        require_data(c == cols, ctx + ": code column count mismatch");
        ++r;
    }
    require_data(r == rows, ctx + ": code row count mismatch");
    return codes;
}

std::string require_out(const RunConfig& rc, const std::string& fallback = "") {
    if (!rc.out_path.empty()) return rc.out_path;
    if (!fallback.empty()) return fallback;
    throw ConfigError("this command requires an output path (--out)");
}

train::Dataset load_data(const RunConfig& rc) {
    require_config(!rc.corpus_dir.empty(), "missing corpus_dir in [run]");
    require_data(std::filesystem::exists(rc.corpus_dir + "/manifest.txt"),
                 "corpus not generated: " + rc.corpus_dir);
    return train::Dataset::load(rc, rc.corpus_dir);
}

TasteModel load_taste(const RunConfig& rc) {
    require_config(!rc.tokenizer_ckpt.empty(), "missing tokenizer_ckpt in [run]");
    return load_taste_model(rc.tokenizer_ckpt);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9e", v);
    return buf;
}

} // namespace

void write_codes_export(const std::string& path, const std::vector<CodeRecord>& records) {
    std::ostringstream os;
    for (const CodeRecord& r : records)
        os << r.utterance_id << '\t' << r.codes.rows() << '\t' << r.codes.cols() << '\t'
           << format_codes(r.codes) << "\n";
    atomic_write_text(path, os.str());
}

std::vector<CodeRecord> read_codes_export(const std::string& path) {
    std::ifstream f(path);
    require_data(f.is_open(), "missing codes file: " + path);
    std::vector<CodeRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const std::string ctx = "line " + std::to_string(lineno);
        std::istringstream ls(line);
        CodeRecord r;
        int rows = 0, cols = 0;
        std::string codes;
        require_data(static_cast<bool>(ls >> r.utterance_id >> rows >> cols >> codes),
                     ctx + ": malformed code record");
        r.codes = parse_codes(codes, rows, cols, ctx);
        out.push_back(std::move(r));
    }
    return out;
}

void cmd_gen_corpus(const RunConfig& rc, const std::string& out_dir) {
    std::string dir = out_dir.empty() ? rc.corpus_dir : out_dir;
    require_config(!dir.empty(), "gen-corpus: no output directory (set --out or [run] corpus_dir)");
    corpus::generate_corpus(rc.seed, rc.corpus.num_utterances, rc.corpus, dir);
}

void cmd_train_tokenizer(const RunConfig& rc) {
    std::string out = require_out(rc, rc.tokenizer_ckpt);
    train::Dataset data = load_data(rc);
    metrics::MetricsLog log(out + ".metrics.jsonl");
    TasteModel model = train::train_tokenizer(rc, data, &log);
    save_taste_model(model, out);
}

void cmd_train_slm(const RunConfig& rc) {
    std::string out = require_out(rc, rc.slm_ckpt);
    train::Dataset data = load_data(rc);
    TasteModel taste = load_taste(rc);
    metrics::MetricsLog log(out + ".metrics.jsonl");
    SlmModel slm_model = train::train_slm(rc, data, taste, &log);
    save_slm_model(slm_model, out);
}

void cmd_tokenize(const RunConfig& rc) {
    std::string out = require_out(rc, rc.codes_path);
    train::Dataset data = load_data(rc);
    TasteModel taste = load_taste(rc);
    std::vector<CodeRecord> records;
    for (int i = 0; i < data.size(); ++i) {
        const auto& rec = data.manifest.records[static_cast<size_t>(i)];
        tok::TokenizeResult tk = tok::tokenize_utterance(data.features[static_cast<size_t>(i)],
                                                         rec.transcription, taste);
        records.push_back({rec.utterance_id, tk.codes});
    }
    write_codes_export(out, records);
}

void cmd_reconstruct(const RunConfig& rc) {
    std::string out = require_out(rc);
    train::Dataset data = load_data(rc);
    TasteModel taste = load_taste(rc);

    const std::vector<int>& idx =
        data.holdout_idx.empty() ? data.train_idx : data.holdout_idx;
    std::ostringstream os;
    long top1 = 0, top5 = 0, positions = 0;
    for (int i : idx) {
        const auto& rec = data.manifest.records[static_cast<size_t>(i)];
        const auto& units = data.units[static_cast<size_t>(i)];
        Mat logits = train::variant_unit_logits(taste, data.features[static_cast<size_t>(i)],
                                                rec.transcription, rec.speaker_id, units);
        for (size_t t = 0; t < units.size(); ++t) {
            Eigen::RowVectorXd row = logits.row(static_cast<long>(t));
            double tv = row(units[t]);
            int better = 0;
            for (int j = 0; j < row.size(); ++j)
                if (row(j) > tv) ++better;
            if (better == 0) ++top1;
            if (better < 5) ++top5;
            ++positions;
        }
        // greedy regeneration from the model's own condition
        std::vector<int> argmax;
        for (size_t t = 0; t < units.size(); ++t) {
            Eigen::RowVectorXd row = logits.row(static_cast<long>(t));
            int best = 0;
            for (int j = 1; j < row.size(); ++j)
                if (row(j) > row(best)) best = j;
            argmax.push_back(best);
        }
        os << rec.utterance_id << '\t';
        for (size_t t = 0; t < argmax.size(); ++t) {
            if (t) os << ',';
            os << argmax[static_cast<size_t>(t)];
        }
        os << "\n";
    }
    double a1 = positions ? static_cast<double>(top1) / positions : 0;
    double a5 = positions ? static_cast<double>(top5) / positions : 0;
    os << "# top1=" << fmt_double(a1) << " top5=" << fmt_double(a5) << " positions=" << positions
       << "\n";
    atomic_write_text(out, os.str());
}

void cmd_continue(const RunConfig& rc) {
    std::string out = require_out(rc);
    train::Dataset data = load_data(rc);
    TasteModel taste = load_taste(rc);
    require_config(!rc.slm_ckpt.empty(), "missing slm_ckpt in [run]");
    SlmModel m = load_slm_model(rc.slm_ckpt);

    slm::WordFinalFn final_fn = [&](int id) { return data.lang.llm_tok.piece_is_final(id); };

    std::ostringstream os;
    int produced = 0;
    for (int i : data.holdout_idx) {
        if (produced >= rc.continue_count) break;
        const auto& rec = data.manifest.records[static_cast<size_t>(i)];
        const auto& tr = rec.transcription;
        if (static_cast<int>(tr.words.size()) <= rc.continue_prompt_words) continue;

        slm::JointSequence full = train::build_joint_sequence(data, taste, i);
        int keep = 0;
        for (int w = 0; w < rc.continue_prompt_words; ++w)
            keep += tr.llm_groups[static_cast<size_t>(w)].second -
                    tr.llm_groups[static_cast<size_t>(w)].first;
        slm::JointSequence prompt;
        prompt.text.assign(full.text.begin(), full.text.begin() + keep);
        if (m.mode == "token")
            prompt.codes = full.codes.leftCols(keep);
        else
            prompt.latents = full.latents.topRows(keep);

        uint64_t rollout_seed = mix_seed(rc.seed, static_cast<uint64_t>(i));
        auto steps = slm::continue_joint(m, prompt, rc.decode.max_steps, rc.decode, rollout_seed,
                                         m.mode == "token" ? final_fn : slm::WordFinalFn{});

        os << rec.utterance_id << '\t' << "text=";
        for (size_t s = 0; s < steps.size(); ++s) {
            if (s) os << ',';
            os << steps[s].text_token;
        }
        if (m.mode == "token") {
            os << "\tcodes=";
            for (int q = 0; q < m.rvq_layers; ++q) {
                if (q) os << '|';
                for (size_t s = 0; s < steps.size(); ++s) {
                    if (s) os << ',';
                    os << steps[s].codes[static_cast<size_t>(q)];
                }
            }
        } else {
            os << "\tlatents=";
            for (size_t s = 0; s < steps.size(); ++s) {
                if (s) os << ';';
                for (int j = 0; j < m.d_z; ++j) {
                    if (j) os << ',';
                    os << fmt_double(steps[s].latent(j));
                }
            }
        }
        os << "\n";
        ++produced;
    }
    atomic_write_text(out, os.str());
}

void cmd_edit(const RunConfig& rc) {
    std::string out = require_out(rc);
    train::Dataset data = load_data(rc);
    require_config(!rc.codes_path.empty(), "edit: missing codes path ([edit] codes)");
    require_config(!rc.edit_utt_a.empty() && !rc.edit_utt_b.empty(),
                   "edit: missing utterance ids ([edit] utt_a / utt_b)");
    auto codes = read_codes_export(rc.codes_path);

    auto find_codes = [&](const std::string& id) -> const CodeRecord& {
        for (const auto& r : codes)
            if (r.utterance_id == id) return r;
        throw DataError("edit: utterance " + id + " not present in the codes file");
    };
    auto find_record = [&](const std::string& id) -> const corpus::ManifestRecord& {
        for (const auto& r : data.manifest.records)
            if (r.utterance_id == id) return r;
        throw DataError("edit: utterance " + id + " not present in the manifest");
    };

    const CodeRecord& ca = find_codes(rc.edit_utt_a);
    const CodeRecord& cb = find_codes(rc.edit_utt_b);
    const auto& ra = find_record(rc.edit_utt_a);
    const auto& rb = find_record(rc.edit_utt_b);

    std::set<int> words(rc.edit_words.begin(), rc.edit_words.end());
    align::EditResult res = align::swap_word_tokens(
        ca.codes, ra.transcription.asr_groups, ra.transcription.words, cb.codes,
        rb.transcription.asr_groups, rb.transcription.words, words);

    write_codes_export(out, {{rc.edit_utt_a, res.edited_a}, {rc.edit_utt_b, res.edited_b}});
}

void cmd_score(const RunConfig& rc) {
    std::string out = require_out(rc);
    train::Dataset data = load_data(rc);
    TasteModel taste = load_taste(rc);
    require_config(!rc.slm_ckpt.empty(), "missing slm_ckpt in [run]");
    SlmModel m = load_slm_model(rc.slm_ckpt);

    std::ostringstream os;
    for (int i = 0; i < data.size(); ++i) {
        slm::JointSequence seq = train::build_joint_sequence(data, taste, i);
        double score = slm::score_likelihood(m, seq);
        os << data.manifest.records[static_cast<size_t>(i)].utterance_id << '\t'
           << fmt_double(score) << "\n";
    }
    atomic_write_text(out, os.str());
}

BitrateReport compute_bitrate(long total_positions, double total_duration_s, int rvq_layers,
                              int codebook_size, double bits_per_text_token) {
    require_arg(total_duration_s > 0, "bitrate: total duration must be positive");
    require_arg(total_positions >= 0, "bitrate: negative position count");
    require_arg(rvq_layers >= 1 && codebook_size >= 1, "bitrate: bad quantizer shape");
    BitrateReport r;
    r.total_positions = total_positions;
    r.total_duration_s = total_duration_s;
    r.frequency_hz = static_cast<double>(total_positions) / total_duration_s;
    const double bits_per_position = rvq_layers * std::log2(static_cast<double>(codebook_size));
    r.speech_bps = r.frequency_hz * bits_per_position;
    r.joint_bps = r.speech_bps + r.frequency_hz * bits_per_text_token;
    return r;
}

BitrateReport compute_bitrate(const corpus::CorpusManifest& manifest,
                              const std::map<std::string, int>& positions_per_utterance,
                              int rvq_layers, int codebook_size, double bits_per_text_token) {
    long positions = 0;
    double duration = 0;
    for (const auto& rec : manifest.records) {
        auto it = positions_per_utterance.find(rec.utterance_id);
        if (it == positions_per_utterance.end()) continue;
        positions += it->second;
        duration += rec.duration_s;
    }
    return compute_bitrate(positions, duration, rvq_layers, codebook_size, bits_per_text_token);
}

BitrateReport cmd_bitrate(const RunConfig& rc) {
    train::Dataset data = load_data(rc);
    TasteModel taste = load_taste(rc);
    require_config(!rc.codes_path.empty(), "bitrate: missing codes path ([edit] codes or [run] codes)");
    auto codes = read_codes_export(rc.codes_path);
    std::map<std::string, int> positions;
    for (const auto& r : codes) positions[r.utterance_id] = static_cast<int>(r.codes.cols());

    const double text_bits = std::log2(static_cast<double>(taste.asr_vocab));
    BitrateReport rep = compute_bitrate(data.manifest, positions, taste.quant.layers(),
                                        taste.quant.codebook_size(), text_bits);

    if (!rc.out_path.empty()) {
        std::ostringstream os;
        os << "frequency_hz\t" << fmt_double(rep.frequency_hz) << "\n"
           << "speech_bps\t" << fmt_double(rep.speech_bps) << "\n"
           << "joint_bps\t" << fmt_double(rep.joint_bps) << "\n"
           << "positions\t" << rep.total_positions << "\n"
           << "duration_s\t" << fmt_double(rep.total_duration_s) << "\n"
           << "# reference full-scale figures (documented, not asserted): 3 Hz with R=4 and\n"
           << "# 512-entry codebooks gives 108 bps speech-only; with ~14 text bits per token\n"
           << "# the joint rate lands near 150 bps.\n";
        atomic_write_text(rc.out_path, os.str());
    }
    return rep;
}

} // namespace taste::pipeline
