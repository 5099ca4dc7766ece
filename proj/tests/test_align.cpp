// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "taste/align.hpp"
#include "taste/rng.hpp"

using namespace taste;
using namespace taste::align;

TEST_CASE("group_by_words: slices, degenerate single word, gap error") {
    std::vector<int> tokens = {10, 11, 12};
    auto groups = group_by_words(tokens, {{0, 2}, {2, 3}});
    REQUIRE(groups.size() == 2);
    CHECK(groups[0] == std::vector<int>{10, 11});
    CHECK(groups[1] == std::vector<int>{12});

    auto one = group_by_words(tokens, {{0, 3}});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == tokens);

    CHECK_THROWS_AS(group_by_words(tokens, {{0, 1}, {2, 3}}), ArgError); // gap
    CHECK_THROWS_AS(group_by_words(tokens, {{0, 2}, {2, 2}}), ArgError); // empty group
    CHECK_THROWS_AS(group_by_words(tokens, {{0, 2}}), ArgError);         // undercover
}

TEST_CASE("word_average: arithmetic means and singleton identity") {
    Mat rows(3, 2);
    rows << 1, 3, 5, 7, 7, 9;
    Mat avg = word_average(rows, {{0, 1}, {1, 3}});
    REQUIRE(avg.rows() == 2);
    CHECK(avg(0, 0) == 1);
    CHECK(avg(0, 1) == 3);
    CHECK(avg(1, 0) == 6);
    CHECK(avg(1, 1) == 8);

    Mat single = word_average(rows, {{0, 1}, {1, 2}, {2, 3}});
    CHECK(single == rows);
}

TEST_CASE("word_average matches the concatenate-then-segment-mean oracle on 1000 cases") {
    Rng rng(55);
    for (int it = 0; it < 1000; ++it) {
        int w = 1 + rng.uniform_int(6);
        std::vector<corpus::Span> groups;
        int pos = 0;
        for (int i = 0; i < w; ++i) {
            int len = 1 + rng.uniform_int(4);
            groups.push_back({pos, pos + len});
            pos += len;
        }
        int d = 1 + rng.uniform_int(5);
        Mat rows = rng.gaussian_mat(pos, d, 1.0);
        Mat got = word_average(rows, groups);

        // independent oracle: sequential accumulation over the flat sequence
        Mat want(w, d);
        for (int g = 0; g < w; ++g) {
            for (int j = 0; j < d; ++j) {
                double acc = 0;
                for (int i = groups[static_cast<size_t>(g)].first;
                     i < groups[static_cast<size_t>(g)].second; ++i)
                    acc += rows(i, j);
                want(g, j) = acc / (groups[static_cast<size_t>(g)].second -
                                    groups[static_cast<size_t>(g)].first);
            }
        }
        REQUIRE(got == want); // exact
    }
}

TEST_CASE("align_to_llm: hand-traced repeat, identity, single word") {
    Mat z_bar(2, 2);
    z_bar << 1, 2, 3, 4;
    auto aligned = align_to_llm(z_bar, {{0, 3}, {3, 4}});
    REQUIRE(aligned.z_tilde.rows() == 4);
    for (int i = 0; i < 3; ++i) CHECK(aligned.z_tilde.row(i) == z_bar.row(0));
    CHECK(aligned.z_tilde.row(3) == z_bar.row(1));
    CHECK(aligned.word_of_position == std::vector<int>{0, 0, 0, 1});

    auto ident = align_to_llm(z_bar, {{0, 1}, {1, 2}});
    CHECK(ident.z_tilde == z_bar);

    Mat one(1, 2);
    one << 9, 8;
    auto constant = align_to_llm(one, {{0, 5}});
    CHECK(constant.z_tilde.rows() == 5);
    for (int i = 0; i < 5; ++i) CHECK(constant.z_tilde.row(i) == one.row(0));

    CHECK_THROWS_AS(align_to_llm(z_bar, {{0, 3}}), ArgError); // W mismatch
}

TEST_CASE("alignment law on 1000 random mismatched tokenizations") {
    CorpusConfig cfg;
    corpus::CorpusLang lang = corpus::CorpusLang::build(77, cfg);
    Rng rng(78);
    for (int it = 0; it < 1000; ++it) {
        auto sentence = lang.sample_sentence(rng, cfg);
        auto [at, ag] = lang.asr_tok.tokenize(sentence);
        auto [lt, lg] = lang.llm_tok.tokenize(sentence);
        int d = 3;
        Mat z = rng.gaussian_mat(static_cast<int>(at.size()), d, 1.0);
        Mat z_bar = word_average(z, ag);
        auto aligned = align_to_llm(z_bar, lg);
        // length law
        REQUIRE(aligned.z_tilde.rows() == static_cast<long>(lt.size()));
        // within-group constancy, exact
        for (size_t w = 0; w < lg.size(); ++w)
            for (int i = lg[w].first; i < lg[w].second; ++i)
                REQUIRE(aligned.z_tilde.row(i) == z_bar.row(static_cast<long>(w)));
    }
}

TEST_CASE("swap_word_tokens: exchange, no-op, full swap, errors") {
    // same transcript, same deterministic groups
    std::vector<std::string> words = {"aa", "bb", "cc"};
    std::vector<corpus::Span> groups = {{0, 1}, {1, 3}, {3, 4}};
    Rng rng(9);
    IMat a(2, 4), b(2, 4);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) {
            a(r, c) = rng.uniform_int(64);
            b(r, c) = rng.uniform_int(64);
        }

    SUBCASE("swap middle word exchanges only its columns") {
        auto res = swap_word_tokens(a, groups, words, b, groups, words, {1});
        CHECK(res.edited_a.col(0) == a.col(0));
        CHECK(res.edited_a.col(1) == b.col(1));
        CHECK(res.edited_a.col(2) == b.col(2));
        CHECK(res.edited_a.col(3) == a.col(3));
        CHECK(res.edited_b.col(1) == a.col(1));
        CHECK(res.edited_b.col(2) == a.col(2));
        CHECK(res.edited_b.col(0) == b.col(0));
    }

    SUBCASE("empty index set is a no-op") {
        auto res = swap_word_tokens(a, groups, words, b, groups, words, {});
        CHECK(res.edited_a == a);
        CHECK(res.edited_b == b);
    }

    SUBCASE("swapping every word exchanges the sequences") {
        auto res = swap_word_tokens(a, groups, words, b, groups, words, {0, 1, 2});
        CHECK(res.edited_a == b);
        CHECK(res.edited_b == a);
    }

    SUBCASE("transcript mismatch and bad index are rejected") {
        std::vector<std::string> other = {"aa", "bb", "dd"};
        CHECK_THROWS_AS(swap_word_tokens(a, groups, words, b, groups, other, {0}), ArgError);
        CHECK_THROWS_AS(swap_word_tokens(a, groups, words, b, groups, words, {3}), ArgError);
    }
}

TEST_CASE("swap_word_tokens splices variable-length groups") {
    std::vector<std::string> words = {"x", "y"};
    std::vector<corpus::Span> ga = {{0, 2}, {2, 3}}; // word 0 has 2 columns in a
    std::vector<corpus::Span> gb = {{0, 1}, {1, 3}}; // ... and 1 column in b
    IMat a(1, 3), b(1, 3);
    a << 1, 2, 3;
    b << 4, 5, 6;
    auto res = swap_word_tokens(a, ga, words, b, gb, words, {0});
    REQUIRE(res.edited_a.cols() == 2); // group 0 of b (1 col) + group 1 of a (1 col)
    CHECK(res.edited_a(0, 0) == 4);
    CHECK(res.edited_a(0, 1) == 3);
    REQUIRE(res.edited_b.cols() == 4);
    CHECK(res.edited_b(0, 0) == 1);
    CHECK(res.edited_b(0, 1) == 2);
    CHECK(res.edited_b(0, 2) == 5);
    CHECK(res.edited_b(0, 3) == 6);
    CHECK(res.groups_a == std::vector<corpus::Span>{{0, 1}, {1, 2}});
    CHECK(res.groups_b == std::vector<corpus::Span>{{0, 2}, {2, 4}});

    SUBCASE("full swap at word granularity recovers the other sequence") {
        auto full = swap_word_tokens(a, ga, words, b, gb, words, {0, 1});
        CHECK(full.edited_a == b);
        CHECK(full.edited_b == a);
    }
}
