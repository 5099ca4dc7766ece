// SPDX-License-Identifier: Apache-2.0
#include "taste/align.hpp"

namespace taste::align {

void check_word_groups(const std::vector<Span>& groups, int total) {
    require_arg(!groups.empty(), "word groups must be non-empty");
    int expect = 0;
    for (const Span& g : groups) {
        require_arg(g.first == expect, "word groups must be contiguous and ordered");
        require_arg(g.second > g.first, "word groups must be non-empty spans");
        expect = g.second;
    }
    require_arg(expect == total, "word groups must exactly cover the sequence");
}

std::vector<std::vector<int>> group_by_words(const std::vector<int>& tokens,
                                             const std::vector<Span>& word_groups) {
    check_word_groups(word_groups, static_cast<int>(tokens.size()));
    std::vector<std::vector<int>> out;
    for (const Span& g : word_groups)
        out.emplace_back(tokens.begin() + g.first, tokens.begin() + g.second);
    return out;
}

Mat word_average(const Mat& rows, const std::vector<Span>& word_groups) {
    check_word_groups(word_groups, static_cast<int>(rows.rows()));
    Mat out(static_cast<long>(word_groups.size()), rows.cols());
    for (size_t w = 0; w < word_groups.size(); ++w) {
        const Span& g = word_groups[w];
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(rows.cols());
        for (int i = g.first; i < g.second; ++i) acc += rows.row(i);
        out.row(static_cast<long>(w)) = acc / static_cast<double>(g.second - g.first);
    }
    return out;
}

AlignedEmbedding align_to_llm(const Mat& z_bar, const std::vector<Span>& llm_word_groups) {
    require_arg(static_cast<long>(llm_word_groups.size()) == z_bar.rows(),
                "align_to_llm: group count must equal the word count");
    int m = 0;
    for (const Span& g : llm_word_groups) m = std::max(m, g.second);
    check_word_groups(llm_word_groups, m);

    AlignedEmbedding out;
    out.z_tilde = Mat(m, z_bar.cols());
    out.word_of_position.resize(static_cast<size_t>(m));
    for (size_t w = 0; w < llm_word_groups.size(); ++w) {
        const Span& g = llm_word_groups[w];
        for (int i = g.first; i < g.second; ++i) {
            out.z_tilde.row(i) = z_bar.row(static_cast<long>(w));
            out.word_of_position[static_cast<size_t>(i)] = static_cast<int>(w);
        }
    }
    return out;
}

IMat align_codes_to_llm(const IMat& word_codes, const std::vector<Span>& llm_word_groups) {
    require_arg(static_cast<long>(llm_word_groups.size()) == word_codes.cols(),
                "align_codes_to_llm: group count must equal the word count");
    int m = 0;
    for (const Span& g : llm_word_groups) m = std::max(m, g.second);
    check_word_groups(llm_word_groups, m);
    IMat out(word_codes.rows(), m);
    for (size_t w = 0; w < llm_word_groups.size(); ++w)
        for (int i = llm_word_groups[w].first; i < llm_word_groups[w].second; ++i)
            out.col(i) = word_codes.col(static_cast<long>(w));
    return out;
}

EditResult swap_word_tokens(const IMat& codes_a, const std::vector<Span>& groups_a,
                            const std::vector<std::string>& words_a, const IMat& codes_b,
                            const std::vector<Span>& groups_b,
                            const std::vector<std::string>& words_b,
                            const std::set<int>& word_indices) {
    require_arg(words_a == words_b, "swap_word_tokens: transcripts differ");
    require_arg(groups_a.size() == words_a.size() && groups_b.size() == words_b.size(),
                "swap_word_tokens: group count must equal word count");
    require_arg(codes_a.rows() == codes_b.rows(), "swap_word_tokens: RVQ depth differs");
    check_word_groups(groups_a, static_cast<int>(codes_a.cols()));
    check_word_groups(groups_b, static_cast<int>(codes_b.cols()));
    for (int w : word_indices)
        require_arg(w >= 0 && w < static_cast<int>(words_a.size()),
                    "swap_word_tokens: word index " + std::to_string(w) + " out of range");

    const int r = static_cast<int>(codes_a.rows());
    const size_t num_words = words_a.size();

    // splice whole word groups; widths follow the source of each group
    std::vector<int> width_a(num_words), width_b(num_words);
    for (size_t w = 0; w < num_words; ++w) {
        bool swapped = word_indices.count(static_cast<int>(w)) > 0;
        int wa = groups_a[w].second - groups_a[w].first;
        int wb = groups_b[w].second - groups_b[w].first;
        width_a[w] = swapped ? wb : wa;
        width_b[w] = swapped ? wa : wb;
    }
    int total_a = 0, total_b = 0;
    for (size_t w = 0; w < num_words; ++w) {
        total_a += width_a[w];
        total_b += width_b[w];
    }

    EditResult res;
    res.edited_a = IMat(r, total_a);
    res.edited_b = IMat(r, total_b);
    int ca = 0, cb = 0;
    for (size_t w = 0; w < num_words; ++w) {
        bool swapped = word_indices.count(static_cast<int>(w)) > 0;
        const IMat& src_a = swapped ? codes_b : codes_a;
        const Span& span_a = swapped ? groups_b[w] : groups_a[w];
        const IMat& src_b = swapped ? codes_a : codes_b;
        const Span& span_b = swapped ? groups_a[w] : groups_b[w];
        res.groups_a.push_back({ca, ca + width_a[w]});
        res.groups_b.push_back({cb, cb + width_b[w]});
        for (int i = span_a.first; i < span_a.second; ++i, ++ca) res.edited_a.col(ca) = src_a.col(i);
        for (int i = span_b.first; i < span_b.second; ++i, ++cb) res.edited_b.col(cb) = src_b.col(i);
    }
    return res;
}

} // namespace taste::align
