// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/config.hpp"
#include "taste/corpus.hpp"

#include <map>
#include <string>
#include <vector>

namespace taste::pipeline {

// Command bodies behind the CLI verbs. They throw typed errors; the C
// boundary translates them into status codes.
void cmd_gen_corpus(const RunConfig& rc, const std::string& out_dir);
void cmd_train_tokenizer(const RunConfig& rc);
void cmd_train_slm(const RunConfig& rc);
void cmd_tokenize(const RunConfig& rc);
void cmd_reconstruct(const RunConfig& rc);
void cmd_continue(const RunConfig& rc);
void cmd_edit(const RunConfig& rc);
void cmd_score(const RunConfig& rc);

struct BitrateReport {
    double frequency_hz = 0;
    double speech_bps = 0;
    double joint_bps = 0;
    long total_positions = 0;
    double total_duration_s = 0;
};

// frequency = total positions / total duration; speech bitrate adds
// R * log2(|C|) bits per position; the joint figure adds text bits at the
// same position rate.
BitrateReport compute_bitrate(long total_positions, double total_duration_s, int rvq_layers,
                              int codebook_size, double bits_per_text_token);

BitrateReport compute_bitrate(const corpus::CorpusManifest& manifest,
                              const std::map<std::string, int>& positions_per_utterance,
                              int rvq_layers, int codebook_size, double bits_per_text_token);

BitrateReport cmd_bitrate(const RunConfig& rc);

// Line format shared by the code exports: id, depth, length, R rows of
// comma-separated codes joined with '|'.
struct CodeRecord {
    std::string utterance_id;
    IMat codes;
};

void write_codes_export(const std::string& path, const std::vector<CodeRecord>& records);
std::vector<CodeRecord> read_codes_export(const std::string& path);

} // namespace taste::pipeline
