// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/autodiff.hpp"
#include "taste/rng.hpp"

#include <functional>

namespace taste::testutil {

// Central finite differences over every entry of `x`. `eval` must rebuild
// the computation from scratch for the perturbed input.
inline Mat finite_diff(const std::function<double(const Mat&)>& eval, const Mat& x,
                       double h = 1e-5) {
    Mat g(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        for (int j = 0; j < x.cols(); ++j) {
            Mat xp = x, xm = x;
            xp(i, j) += h;
            xm(i, j) -= h;
            g(i, j) = (eval(xp) - eval(xm)) / (2.0 * h);
        }
    }
    return g;
}

inline double rel_error(const Mat& a, const Mat& b) {
    double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
    return (a - b).norm() / denom;
}

} // namespace taste::testutil
