// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "taste/slm.hpp"

#include <cmath>

using namespace taste;
using namespace taste::slm;

namespace {

SlmModel tiny_slm(const std::string& mode) {
    SlmModel m;
    m.mode = mode;
    m.llm_vocab = 16;
    m.rvq_layers = 2;
    m.codebook_size = 8;
    m.d_z = 6;
    m.cfg.width = 24;
    m.cfg.layers = 2;
    m.cfg.heads = 2;
    m.cfg.lora_rank = 4;
    m.cfg.lora_alpha = 8;
    Rng rng(21);
    init_slm_base(m, rng);
    init_slm_adapters(m, rng);
    return m;
}

IMat random_codes(Rng& rng, int r, int n, int csize) {
    IMat c(r, n);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j) c(i, j) = rng.uniform_int(csize);
    return c;
}

} // namespace

TEST_CASE("token forward: shapes, causality, normalized distributions") {
    SlmModel m = tiny_slm("token");
    Rng rng(22);
    std::vector<int> text = {m.bos_id(), 3, 7, 11};
    IMat codes = random_codes(rng, 2, 4, 8);
    codes.col(0).setZero();

    ad::Graph g;
    nn::ParamFn p = [&](const std::string& n) {
        return g.constant(n.rfind("base.", 0) == 0 ? m.base.at(n) : m.adapter.at(n));
    };
    SlmForward f = build_slm_forward(g, p, m, text, &codes, nullptr, true);
    CHECK(g.value(f.text_logits).rows() == 4);
    CHECK(g.value(f.text_logits).cols() == m.text_classes());
    REQUIRE(f.code_logits.size() == 2);
    for (const auto& cl : f.code_logits) {
        CHECK(g.value(cl).rows() == 4);
        CHECK(g.value(cl).cols() == 8);
    }

    SUBCASE("distributions normalize after softmax") {
        Mat probs = g.value(g.rowwise_softmax(f.text_logits));
        for (int i = 0; i < probs.rows(); ++i)
            CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    }

    SUBCASE("perturbing a later position leaves earlier outputs unchanged") {
        std::vector<int> text2 = text;
        text2[3] = 2;
        IMat codes2 = codes;
        codes2(0, 3) = (codes2(0, 3) + 1) % 8;
        ad::Graph g2;
        nn::ParamFn p2 = [&](const std::string& n) {
            return g2.constant(n.rfind("base.", 0) == 0 ? m.base.at(n) : m.adapter.at(n));
        };
        SlmForward f2 = build_slm_forward(g2, p2, m, text2, &codes2, nullptr, true);
        for (int r = 0; r < 3; ++r)
            CHECK(g.value(f.text_logits).row(r) == g2.value(f2.text_logits).row(r));
        CHECK(g.value(f.text_logits).row(3) != g2.value(f2.text_logits).row(3));
    }

    SUBCASE("prefix length mismatch is rejected") {
        IMat bad = random_codes(rng, 2, 3, 8);
        ad::Graph g3;
        nn::ParamFn p3 = [&](const std::string& n) {
            return g3.constant(n.rfind("base.", 0) == 0 ? m.base.at(n) : m.adapter.at(n));
        };
        CHECK_THROWS_AS(build_slm_forward(g3, p3, m, text, &bad, nullptr, true), ArgError);
    }
}

TEST_CASE("embedding forward: latent head emits mu and log-variance per position") {
    SlmModel m = tiny_slm("embed");
    Rng rng(23);
    std::vector<int> text = {m.bos_id(), 3, 7, 11};
    Mat latents = rng.gaussian_mat(4, 6, 1.0);
    latents.row(0).setZero();

    ad::Graph g;
    nn::ParamFn p = [&](const std::string& n) {
        return g.constant(n.rfind("base.", 0) == 0 ? m.base.at(n) : m.adapter.at(n));
    };
    SlmForward f = build_slm_forward(g, p, m, text, nullptr, &latents, true);
    CHECK(g.value(f.mu).rows() == 4);
    CHECK(g.value(f.mu).cols() == 6);
    CHECK(g.value(f.log_var).rows() == 4);
    CHECK(g.value(f.log_var).cols() == 6);

    // deterministic given parameters and inputs
    ad::Graph g2;
    nn::ParamFn p2 = [&](const std::string& n) {
        return g2.constant(n.rfind("base.", 0) == 0 ? m.base.at(n) : m.adapter.at(n));
    };
    SlmForward f2 = build_slm_forward(g2, p2, m, text, nullptr, &latents, true);
    CHECK(g.value(f.mu) == g2.value(f2.mu));
    CHECK(g.value(f.log_var) == g2.value(f2.log_var));
}

TEST_CASE("adapter containment: zeroed deltas reproduce the base text path") {
    SlmModel m = tiny_slm("token");
    Rng rng(24);
    std::vector<int> text = {m.bos_id(), 1, 5, 9, 13};
    IMat codes = random_codes(rng, 2, 5, 8);

    // adapters are zero-initialized (B matrices and the speech gate), so the
    // joint path must match the frozen base path float-for-float
    Mat base = base_text_logits(m, text);
    ad::Graph g;
    nn::ParamFn p = [&](const std::string& n) {
        return g.constant(n.rfind("base.", 0) == 0 ? m.base.at(n) : m.adapter.at(n));
    };
    SlmForward f = build_slm_forward(g, p, m, text, &codes, nullptr, true);
    CHECK(g.value(f.text_logits) == base);

    SUBCASE("after perturbing an adapter the paths diverge") {
        m.adapter.at("adapter.l0.wq.B")(0, 0) = 0.5;
        ad::Graph g2;
        nn::ParamFn p2 = [&](const std::string& n) {
            return g2.constant(n.rfind("base.", 0) == 0 ? m.base.at(n) : m.adapter.at(n));
        };
        SlmForward f2 = build_slm_forward(g2, p2, m, text, &codes, nullptr, true);
        CHECK(g2.value(f2.text_logits) != base);
    }
}

TEST_CASE("score_likelihood: uniform head, chain rule, out-of-vocab") {
    SUBCASE("uniform text head scores -ln V per position") {
        SlmModel m = tiny_slm("token");
        m.rvq_layers = 0; // text-only scoring
        m.base.at("base.head.w").setZero();
        m.base.at("base.head.b").setZero();
        // zero every base parameter that feeds the head so logits are exactly uniform
        JointSequence seq;
        seq.text = {4};
        seq.codes = IMat(0, 1);
        double s = score_likelihood(m, seq);
        CHECK(s == doctest::Approx(-std::log(static_cast<double>(m.text_classes()))).epsilon(1e-9));
    }

    SUBCASE("chain rule: total = prefix + conditional suffix") {
        SlmModel m = tiny_slm("token");
        Rng rng(25);
        JointSequence seq;
        seq.text = {3, 9, 1, 14, 6};
        seq.codes = random_codes(rng, 2, 5, 8);
        double total = score_likelihood(m, seq, 0);
        JointSequence prefix;
        prefix.text = {3, 9, 1};
        prefix.codes = seq.codes.leftCols(3);
        double s1 = score_likelihood(m, prefix, 0);
        double s2 = score_likelihood(m, seq, 3);
        CHECK(total == doctest::Approx(s1 + s2).epsilon(1e-9));
    }

    SUBCASE("embedding mode is finite for finite inputs") {
        SlmModel m = tiny_slm("embed");
        Rng rng(26);
        JointSequence seq;
        seq.text = {3, 9, 1};
        seq.latents = rng.gaussian_mat(3, 6, 1.0);
        CHECK(std::isfinite(score_likelihood(m, seq)));
    }

    SUBCASE("out-of-vocabulary token is rejected") {
        SlmModel m = tiny_slm("token");
        JointSequence seq;
        seq.text = {m.llm_vocab}; // BOS id is outside the llm vocabulary
        seq.codes = IMat::Zero(2, 1);
        CHECK_THROWS_AS(score_likelihood(m, seq), ArgError);
    }
}

TEST_CASE("continue_joint: determinism, budget, seeded sampling, word-constant codes") {
    SlmModel m = tiny_slm("token");
    Rng rng(27);
    JointSequence prompt;
    prompt.text = {3, 9};
    prompt.codes = random_codes(rng, 2, 2, 8);

    DecodeConfig cfg;
    cfg.max_steps = 0; // unused by continue
    SUBCASE("greedy continuation is deterministic") {
        auto a = continue_joint(m, prompt, 6, cfg, 1);
        auto b = continue_joint(m, prompt, 6, cfg, 2);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].text_token == b[i].text_token);
            CHECK(a[i].codes == b[i].codes);
        }
    }

    SUBCASE("single step budget yields exactly one step") {
        auto one = continue_joint(m, prompt, 1, cfg, 0);
        CHECK(one.size() == 1);
        CHECK(one[0].text_token >= 0);
        CHECK(one[0].text_token < m.llm_vocab);
    }

    SUBCASE("zero step budget is rejected") {
        CHECK_THROWS_AS(continue_joint(m, prompt, 0, cfg, 0), ArgError);
    }

    SUBCASE("fixed seed reproduces sampled continuations") {
        DecodeConfig sampled;
        sampled.top_k = 5;
        sampled.temperature = 1.2;
        auto a = continue_joint(m, prompt, 8, sampled, 77);
        auto b = continue_joint(m, prompt, 8, sampled, 77);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].text_token == b[i].text_token);
            CHECK(a[i].codes == b[i].codes);
        }
    }

    SUBCASE("word-internal steps repeat the current word's codes") {
        // declare every token non-final: codes must never change after step 1
        auto steps = continue_joint(m, prompt, 6, cfg, 0, [](int) { return false; });
        REQUIRE(steps.size() >= 2);
        for (size_t i = 1; i < steps.size(); ++i) CHECK(steps[i].codes == steps[0].codes);
    }

    SUBCASE("embedding mode with zero noise is deterministic") {
        SlmModel me = tiny_slm("embed");
        JointSequence pe;
        pe.text = {3, 9};
        pe.latents = rng.gaussian_mat(2, 6, 1.0);
        DecodeConfig ez;
        ez.eps_zero = true;
        auto a = continue_joint(me, pe, 5, ez, 1);
        auto b = continue_joint(me, pe, 5, ez, 2);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].text_token == b[i].text_token);
            CHECK(a[i].latent == b[i].latent);
        }
    }
}

TEST_CASE("edit locality through the causal model: rows before the first edited column match") {
    SlmModel m = tiny_slm("token");
    Rng rng(29);
    // make the speech pathway live (fresh adapters start it gated at zero)
    m.adapter.at("adapter.sp_gate") = rng.gaussian_mat(m.cfg.width, m.cfg.width, 0.2);
    const int n = 8;
    std::vector<int> text = {m.bos_id()};
    for (int i = 0; i < n - 1; ++i) text.push_back(rng.uniform_int(m.llm_vocab));
    IMat codes = random_codes(rng, 2, n, 8);
    IMat edited = codes;
    const int first_edit = 4;
    for (int i = first_edit; i < 6; ++i) {
        edited(0, i) = (edited(0, i) + 1) % 8; // swap in another word's codes
        edited(1, i) = (edited(1, i) + 3) % 8;
    }

    ad::Graph ga, gb;
    nn::ParamFn pa = [&](const std::string& nm) {
        return ga.constant(nm.rfind("base.", 0) == 0 ? m.base.at(nm) : m.adapter.at(nm));
    };
    nn::ParamFn pb = [&](const std::string& nm) {
        return gb.constant(nm.rfind("base.", 0) == 0 ? m.base.at(nm) : m.adapter.at(nm));
    };
    Mat la = ga.value(build_slm_forward(ga, pa, m, text, &codes, nullptr, true).text_logits);
    Mat lb = gb.value(build_slm_forward(gb, pb, m, text, &edited, nullptr, true).text_logits);
    for (int r = 0; r < first_edit; ++r) CHECK(la.row(r) == lb.row(r)); // exact
    CHECK(la.bottomRows(n - first_edit) != lb.bottomRows(n - first_edit));
}

TEST_CASE("one-to-one law: code and latent streams must match the text length") {
    SlmModel m = tiny_slm("token");
    JointSequence bad;
    bad.text = {3, 9, 1};
    bad.codes = IMat::Zero(2, 2);
    CHECK_THROWS_AS(score_likelihood(m, bad), ArgError);

    SlmModel me = tiny_slm("embed");
    JointSequence bad2;
    bad2.text = {3, 9, 1};
    bad2.latents = Mat::Zero(2, 6);
    CHECK_THROWS_AS(score_likelihood(me, bad2), ArgError);
}
