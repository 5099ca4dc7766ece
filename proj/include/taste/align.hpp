// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/common.hpp"
#include "taste/corpus.hpp"

#include <set>
#include <string>
#include <vector>

namespace taste::align {

using corpus::Span;

// Validates that `groups` contiguously tiles [0, total) with non-empty,
// ordered spans. Throws ArgError otherwise.
void check_word_groups(const std::vector<Span>& groups, int total);

// Group a token sequence by words; returns the per-word slices.
std::vector<std::vector<int>> group_by_words(const std::vector<int>& tokens,
                                             const std::vector<Span>& word_groups);

// Row w = arithmetic mean of the rows in group w. Accumulation is row-by-row
// in group order, so results are bit-stable.
Mat word_average(const Mat& rows, const std::vector<Span>& word_groups);

struct AlignedEmbedding {
    Mat z_tilde;                       // M x d
    std::vector<int> word_of_position; // length M
};

// Repeat word-level rows once per LLM token of the word.
AlignedEmbedding align_to_llm(const Mat& z_bar, const std::vector<Span>& llm_word_groups);

// Word-level code alignment: one code column per word in, repeated per LLM
// token out.
IMat align_codes_to_llm(const IMat& word_codes, const std::vector<Span>& llm_word_groups);

struct EditResult {
    IMat edited_a; // R x N_a' (widths change when group sizes differ)
    IMat edited_b;
    std::vector<Span> groups_a;
    std::vector<Span> groups_b;
};

// Exchange the code columns of the selected words between two sequences with
// the same transcript. Whole variable-length word groups are spliced.
EditResult swap_word_tokens(const IMat& codes_a, const std::vector<Span>& groups_a,
                            const std::vector<std::string>& words_a, const IMat& codes_b,
                            const std::vector<Span>& groups_b,
                            const std::vector<std::string>& words_b,
                            const std::set<int>& word_indices);

} // namespace taste::align
