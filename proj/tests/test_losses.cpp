// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "taste/losses.hpp"
#include "taste/rng.hpp"
#include "testutil.hpp"

#include <cmath>

using namespace taste;
using taste::testutil::finite_diff;
using taste::testutil::rel_error;

TEST_CASE("reconstruction_ce: uniform, saturated, out-of-range, gradient") {
    SUBCASE("uniform logits over 9 classes give ln 9") {
        ad::Graph g;
        Mat logits = Mat::Zero(4, 9); // U = 8 plus end symbol
        ad::Var loss = losses::reconstruction_ce(g, g.leaf(logits), {0, 3, 7});
        CHECK(g.value(loss)(0, 0) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    }

    SUBCASE("one-hot logits with margin 30 are near zero") {
        Mat logits = Mat::Zero(3, 9);
        std::vector<int> units = {2, 5};
        logits(0, 2) = 30.0;
        logits(1, 5) = 30.0;
        logits(2, 8) = 30.0; // end symbol
        ad::Graph g;
        ad::Var loss = losses::reconstruction_ce(g, g.leaf(logits), units);
        CHECK(g.value(loss)(0, 0) < 1e-9);
    }

    SUBCASE("target out of range is rejected") {
        ad::Graph g;
        Mat logits = Mat::Zero(3, 9);
        CHECK_THROWS_AS(losses::reconstruction_ce(g, g.leaf(logits), {0, 8}), ArgError);
        CHECK_THROWS_AS(losses::reconstruction_ce(g, g.leaf(logits), {0, -1}), ArgError);
    }

    SUBCASE("gradient matches central finite differences on a 3x5 instance") {
        Rng rng(31);
        Mat logits = rng.gaussian_mat(3, 5, 1.0);
        std::vector<int> units = {1, 3};
        ad::Graph g;
        ad::Var l = g.leaf(logits);
        ad::Var loss = losses::reconstruction_ce(g, l, units);
        g.backward(loss);
        Mat numeric = finite_diff(
            [&](const Mat& x) {
                ad::Graph g2;
                return g2.value(losses::reconstruction_ce(g2, g2.leaf(x), units))(0, 0);
            },
            logits);
        CHECK(rel_error(g.grad(l), numeric) < 1e-6);
    }
}

TEST_CASE("rvq_commitment: exact quantization, 3-4-5 norm, stop-gradient") {
    SUBCASE("quantized equal to residuals gives zero") {
        Rng rng(32);
        Mat r0 = rng.gaussian_mat(4, 3, 1.0);
        ad::Graph g;
        ad::Var loss = losses::rvq_commitment(g, {g.leaf(r0)}, {r0});
        CHECK(g.value(loss)(0, 0) == 0.0);
    }

    SUBCASE("single layer, single position, difference [3,4] gives 5") {
        Mat res(1, 2);
        res << 3, 4;
        Mat quant = Mat::Zero(1, 2);
        ad::Graph g;
        ad::Var loss = losses::rvq_commitment(g, {g.leaf(res)}, {quant});
        CHECK(g.value(loss)(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
    }

    SUBCASE("gradient reaches only the residual branch; matches finite differences") {
        Rng rng(33);
        Mat res = rng.gaussian_mat(3, 4, 1.0);
        Mat quant = rng.gaussian_mat(3, 4, 1.0);
        ad::Graph g;
        ad::Var l = g.leaf(res);
        ad::Var loss = losses::rvq_commitment(g, {l}, {quant});
        g.backward(loss);
        Mat numeric = finite_diff(
            [&](const Mat& x) {
                ad::Graph g2;
                return g2.value(losses::rvq_commitment(g2, {g2.leaf(x)}, {quant}))(0, 0);
            },
            res);
        CHECK(rel_error(g.grad(l), numeric) < 1e-6);
    }

    SUBCASE("layer count mismatch is rejected") {
        ad::Graph g;
        Mat m = Mat::Zero(2, 2);
        CHECK_THROWS_AS(losses::rvq_commitment(g, {g.leaf(m)}, {m, m}), ArgError);
    }
}

TEST_CASE("taste_loss: sum, identity, gradient linearity") {
    ad::Graph g;
    ad::Var ce = g.leaf(Mat::Constant(1, 1, 2.0));
    ad::Var rvq = g.leaf(Mat::Constant(1, 1, 0.5));
    ad::Var total = losses::taste_loss(g, ce, rvq);
    CHECK(g.value(total)(0, 0) == 2.5);
    g.backward(total);
    CHECK(g.grad(ce)(0, 0) == 1.0);
    CHECK(g.grad(rvq)(0, 0) == 1.0);

    ad::Graph g2;
    ad::Var x = g2.leaf(Mat::Constant(1, 1, 1.25));
    ad::Var zero = g2.leaf(Mat::Zero(1, 1));
    CHECK(g2.value(losses::taste_loss(g2, x, zero))(0, 0) == 1.25);
}

TEST_CASE("token_lm_loss: uniform heads, saturated heads, gradient, head mismatch") {
    const int n = 4, vtext = 8, vcode = 4, r = 2;

    SUBCASE("uniform heads give ln 8 + 2 ln 4") {
        ad::Graph g;
        ad::Var tl = g.leaf(Mat::Zero(n, vtext));
        std::vector<ad::Var> cl = {g.leaf(Mat::Zero(n, vcode)), g.leaf(Mat::Zero(n, vcode))};
        IMat ct = IMat::Zero(r, n);
        ad::Var loss = losses::token_lm_loss(g, tl, cl, {0, 1, 2, 3}, ct);
        CHECK(g.value(loss)(0, 0) ==
              doctest::Approx(std::log(8.0) + 2 * std::log(4.0)).epsilon(1e-12));
    }

    SUBCASE("saturated correct heads are near zero") {
        std::vector<int> tt = {0, 1, 2, 3};
        IMat ct(r, n);
        ct << 0, 1, 2, 3, 3, 2, 1, 0;
        Mat tl = Mat::Zero(n, vtext);
        Mat c0 = Mat::Zero(n, vcode), c1 = Mat::Zero(n, vcode);
        for (int i = 0; i < n; ++i) {
            tl(i, tt[static_cast<size_t>(i)]) = 30.0;
            c0(i, ct(0, i)) = 30.0;
            c1(i, ct(1, i)) = 30.0;
        }
        ad::Graph g;
        ad::Var loss =
            losses::token_lm_loss(g, g.leaf(tl), {g.leaf(c0), g.leaf(c1)}, tt, ct);
        CHECK(g.value(loss)(0, 0) < 1e-8);
    }

    SUBCASE("gradient matches finite differences") {
        Rng rng(34);
        Mat tl = rng.gaussian_mat(n, vtext, 1.0);
        Mat c0 = rng.gaussian_mat(n, vcode, 1.0);
        std::vector<int> tt = {3, 0, 5, 7};
        IMat ct(1, n);
        ct << 1, 2, 0, 3;
        ad::Graph g;
        ad::Var ltl = g.leaf(tl);
        ad::Var lc0 = g.leaf(c0);
        ad::Var loss = losses::token_lm_loss(g, ltl, {lc0}, tt, ct);
        g.backward(loss);
        Mat num_t = finite_diff(
            [&](const Mat& x) {
                ad::Graph g2;
                return g2.value(losses::token_lm_loss(g2, g2.leaf(x), {g2.leaf(c0)}, tt, ct))(0, 0);
            },
            tl);
        Mat num_c = finite_diff(
            [&](const Mat& x) {
                ad::Graph g2;
                return g2.value(losses::token_lm_loss(g2, g2.leaf(tl), {g2.leaf(x)}, tt, ct))(0, 0);
            },
            c0);
        CHECK(rel_error(g.grad(ltl), num_t) < 1e-6);
        CHECK(rel_error(g.grad(lc0), num_c) < 1e-6);
    }

    SUBCASE("head count must match RVQ depth") {
        ad::Graph g;
        IMat ct = IMat::Zero(2, n);
        CHECK_THROWS_AS(
            losses::token_lm_loss(g, g.leaf(Mat::Zero(n, vtext)), {g.leaf(Mat::Zero(n, vcode))},
                                  {0, 0, 0, 0}, ct),
            ConfigError);
    }
}

TEST_CASE("reg_loss: identity, hand value, exact gradient") {
    Rng rng(35);
    Mat t = rng.gaussian_mat(2, 3, 1.0);

    SUBCASE("e equal to target gives zero") {
        ad::Graph g;
        CHECK(g.value(losses::reg_loss(g, g.leaf(t), t))(0, 0) == 0.0);
    }

    SUBCASE("K=1, d=3, all differences 2 gives 12") {
        Mat e = Mat::Constant(1, 3, 2.0);
        Mat target = Mat::Zero(1, 3);
        ad::Graph g;
        CHECK(g.value(losses::reg_loss(g, g.leaf(e), target))(0, 0) == 12.0);
    }

    SUBCASE("gradient is exactly 2 (e - target) for a single position") {
        Mat e = rng.gaussian_mat(1, 3, 1.0);
        Mat target = rng.gaussian_mat(1, 3, 1.0);
        ad::Graph g;
        ad::Var l = g.leaf(e);
        g.backward(losses::reg_loss(g, l, target));
        Mat expect = 2.0 * (e - target);
        CHECK(g.grad(l) == expect);
    }

    SUBCASE("shape mismatch is rejected") {
        ad::Graph g;
        CHECK_THROWS_AS(losses::reg_loss(g, g.leaf(Mat::Zero(2, 2)), Mat::Zero(2, 3)), ArgError);
    }
}

TEST_CASE("kl_loss: matched distributions, direct value, minimizer, errors") {
    SUBCASE("mu = target, log_var = 0 gives exactly zero, with zero gradient") {
        Rng rng(36);
        Mat t = rng.gaussian_mat(3, 4, 1.0);
        Mat lv = Mat::Zero(3, 4);
        ad::Graph g;
        ad::Var m = g.leaf(t);
        ad::Var v = g.leaf(lv);
        ad::Var loss = losses::kl_loss(g, m, v, t);
        CHECK(g.value(loss)(0, 0) == 0.0);
        g.backward(loss);
        CHECK(g.grad(m) == Mat::Zero(3, 4));
        CHECK(g.grad(v) == Mat::Zero(3, 4));
    }

    SUBCASE("K=1, d=2, mu-target [1,1], log_var 0 gives 1.0") {
        Mat mu = Mat::Constant(1, 2, 1.0);
        Mat t = Mat::Zero(1, 2);
        Mat lv = Mat::Zero(1, 2);
        ad::Graph g;
        CHECK(g.value(losses::kl_loss(g, g.leaf(mu), g.leaf(lv), t))(0, 0) == 1.0);
    }

    SUBCASE("non-finite log_var is rejected") {
        ad::Graph g;
        Mat lv = Mat::Zero(1, 2);
        lv(0, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(losses::kl_loss(g, g.leaf(Mat::Zero(1, 2)), g.leaf(lv), Mat::Zero(1, 2)),
                        ArgError);
    }

    SUBCASE("closed form tracks a Monte-Carlo estimate") {
        Rng rng(37);
        Mat t = rng.gaussian_mat(1, 3, 1.0);
        Mat mu = t + rng.gaussian_mat(1, 3, 0.8);
        Mat lv = rng.gaussian_mat(1, 3, 0.4);
        ad::Graph g;
        double closed = g.value(losses::kl_loss(g, g.leaf(mu), g.leaf(lv), t))(0, 0);

        // E_q[log q(x) - log p(x)] with q = N(mu, sigma^2 I), p = N(t, I)
        Rng mc(38);
        const int samples = 200000;
        double acc = 0;
        for (int s = 0; s < samples; ++s) {
            for (int j = 0; j < 3; ++j) {
                double sig = std::exp(lv(0, j) / 2.0);
                double x = mu(0, j) + sig * mc.gaussian();
                double lq = -0.5 * std::pow((x - mu(0, j)) / sig, 2) - std::log(sig);
                double lp = -0.5 * std::pow(x - t(0, j), 2);
                acc += lq - lp;
            }
        }
        double mc_kl = acc / samples; // total over dims, K = 1
        CHECK(std::abs(closed - mc_kl) / std::abs(mc_kl) < 0.03);
    }
}

TEST_CASE("kl_loss: literal first-power sigma reading behind the config flag") {
    // both readings agree at log_var = 0 and diverge elsewhere
    Mat mu = Mat::Constant(1, 2, 1.0);
    Mat t = Mat::Zero(1, 2);
    Mat lv0 = Mat::Zero(1, 2);
    ad::Graph g;
    double sq = g.value(losses::kl_loss(g, g.leaf(mu), g.leaf(lv0), t,
                                        Reduction::SumOverSequenceMean, false))(0, 0);
    double first = g.value(losses::kl_loss(g, g.leaf(mu), g.leaf(lv0), t,
                                           Reduction::SumOverSequenceMean, true))(0, 0);
    CHECK(sq == first);

    Mat lv = Mat::Constant(1, 2, 0.8);
    double sq2 = g.value(losses::kl_loss(g, g.leaf(mu), g.leaf(lv), t,
                                         Reduction::SumOverSequenceMean, false))(0, 0);
    double first2 = g.value(losses::kl_loss(g, g.leaf(mu), g.leaf(lv), t,
                                            Reduction::SumOverSequenceMean, true))(0, 0);
    CHECK(sq2 != first2);
    // sigma^2 reading: 0.5 * sum(e^0.8 + 1 - 1 - 0.8); sigma reading uses e^0.4
    CHECK(sq2 == doctest::Approx(0.5 * 2 * (std::exp(0.8) + 1 - 1 - 0.8)).epsilon(1e-12));
    CHECK(first2 == doctest::Approx(0.5 * 2 * (std::exp(0.4) + 1 - 1 - 0.8)).epsilon(1e-12));
}

TEST_CASE("sample_latent: zero noise, unit sigma, gradient") {
    Rng rng(39);
    Mat mu = rng.gaussian_mat(2, 3, 1.0);
    Mat lv = rng.gaussian_mat(2, 3, 0.5);

    SUBCASE("zero noise returns mu") {
        ad::Graph g;
        ad::Var e = losses::sample_latent(g, g.leaf(mu), g.leaf(lv), Mat::Zero(2, 3));
        CHECK(g.value(e) == mu);
    }

    SUBCASE("log_var 0 and all-ones noise returns mu + 1") {
        ad::Graph g;
        ad::Var e = losses::sample_latent(g, g.leaf(mu), g.leaf(Mat::Zero(2, 3)), Mat::Ones(2, 3));
        CHECK(g.value(e) == Mat(mu.array() + 1.0));
    }

    SUBCASE("gradients through mu and log_var match finite differences") {
        Mat eps = rng.gaussian_mat(2, 3, 1.0);
        Mat mix = rng.gaussian_mat(2, 3, 1.0);
        auto scalar = [&](ad::Graph& g, ad::Var m, ad::Var v) {
            return g.sum_all(g.mul_const(losses::sample_latent(g, m, v, eps), mix));
        };
        ad::Graph g;
        ad::Var m = g.leaf(mu);
        ad::Var v = g.leaf(lv);
        g.backward(scalar(g, m, v));
        Mat num_mu = finite_diff(
            [&](const Mat& x) {
                ad::Graph g2;
                return g2.value(scalar(g2, g2.leaf(x), g2.leaf(lv)))(0, 0);
            },
            mu);
        Mat num_lv = finite_diff(
            [&](const Mat& x) {
                ad::Graph g2;
                return g2.value(scalar(g2, g2.leaf(mu), g2.leaf(x)))(0, 0);
            },
            lv);
        CHECK(rel_error(g.grad(m), num_mu) < 1e-6);
        CHECK(rel_error(g.grad(v), num_lv) < 1e-6);
    }
}

TEST_CASE("emb_lm_loss: zero weights reduce to text CE; components logged") {
    Rng rng(40);
    const int n = 3, v = 6, d = 4;
    Mat tl = rng.gaussian_mat(n, v, 1.0);
    std::vector<int> tt = {1, 0, 5};
    Mat target = rng.gaussian_mat(n, d, 1.0);
    Mat mu = rng.gaussian_mat(n, d, 1.0);
    Mat lv = rng.gaussian_mat(n, d, 0.3);

    TrainConfig cfg;
    cfg.lambda_reg = 0;
    cfg.lambda_kl = 0;
    ad::Graph g;
    ad::Var vmu = g.leaf(mu);
    ad::Var vlv = g.leaf(lv);
    ad::Var e = losses::sample_latent(g, vmu, vlv, Mat::Zero(n, d));
    auto parts = losses::emb_lm_loss(g, g.leaf(tl), tt, e, vmu, vlv, target, cfg);
    CHECK(g.value(parts.total)(0, 0) == doctest::Approx(g.value(parts.text_ce)(0, 0)).epsilon(1e-15));

    SUBCASE("all components zero gives zero") {
        TrainConfig c2;
        ad::Graph g2;
        Mat zt = Mat::Zero(1, 2);
        ad::Var m2 = g2.leaf(zt);
        ad::Var v2 = g2.leaf(Mat::Zero(1, 2));
        ad::Var e2 = losses::sample_latent(g2, m2, v2, Mat::Zero(1, 2));
        Mat sat(1, 2);
        sat << 60.0, 0.0; // saturated correct text head
        auto p2 = losses::emb_lm_loss(g2, g2.leaf(sat), {0}, e2, m2, v2, zt, c2);
        CHECK(g2.value(p2.reg)(0, 0) == 0.0);
        CHECK(g2.value(p2.kl)(0, 0) == 0.0);
        CHECK(g2.value(p2.total)(0, 0) < 1e-9);
    }

    SUBCASE("negative lambda is a configuration error") {
        TrainConfig bad;
        bad.lambda_reg = -1;
        ad::Graph g3;
        ad::Var m3 = g3.leaf(mu);
        ad::Var v3 = g3.leaf(lv);
        ad::Var e3 = losses::sample_latent(g3, m3, v3, Mat::Zero(n, d));
        CHECK_THROWS_AS(losses::emb_lm_loss(g3, g3.leaf(tl), tt, e3, m3, v3, target, bad),
                        ConfigError);
    }

    SUBCASE("total gradient is the weighted sum of component gradients") {
        TrainConfig c;
        c.lambda_reg = 0.7;
        c.lambda_kl = 1.3;
        auto eval = [&](const Mat& muv) {
            ad::Graph gg;
            ad::Var m = gg.leaf(muv);
            ad::Var v = gg.leaf(lv);
            ad::Var ee = losses::sample_latent(gg, m, v, Mat::Zero(n, d));
            auto pp = losses::emb_lm_loss(gg, gg.leaf(tl), tt, ee, m, v, target, c);
            return gg.value(pp.total)(0, 0);
        };
        ad::Graph gg;
        ad::Var m = gg.leaf(mu);
        ad::Var v = gg.leaf(lv);
        ad::Var ee = losses::sample_latent(gg, m, v, Mat::Zero(n, d));
        auto pp = losses::emb_lm_loss(gg, gg.leaf(tl), tt, ee, m, v, target, c);
        gg.backward(pp.total);
        Mat numeric = finite_diff(eval, mu);
        CHECK(rel_error(gg.grad(m), numeric) < 1e-6);
    }
}

TEST_CASE("losses are non-negative on random instances") {
    Rng rng(41);
    for (int it = 0; it < 20; ++it) {
        int n = 1 + rng.uniform_int(4);
        int d = 1 + rng.uniform_int(4);
        ad::Graph g;
        Mat logits = rng.gaussian_mat(n + 1, d + 1, 2.0);
        std::vector<int> units;
        for (int i = 0; i < n; ++i) units.push_back(rng.uniform_int(d));
        CHECK(g.value(losses::reconstruction_ce(g, g.leaf(logits), units))(0, 0) >= 0.0);

        Mat mu = rng.gaussian_mat(n, d, 1.0);
        Mat lv = rng.gaussian_mat(n, d, 0.5);
        Mat t = rng.gaussian_mat(n, d, 1.0);
        CHECK(g.value(losses::kl_loss(g, g.leaf(mu), g.leaf(lv), t))(0, 0) >= 0.0);
        CHECK(g.value(losses::reg_loss(g, g.leaf(mu), t))(0, 0) >= 0.0);
        CHECK(g.value(losses::rvq_commitment(g, {g.leaf(mu)}, {t}))(0, 0) >= 0.0);
    }
}
