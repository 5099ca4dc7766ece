// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace taste {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IMat = Eigen::MatrixXi;

// Error taxonomy mirrors the CLI exit codes: config 2, data 3, numeric 4.
// Argument misuse is a programming/config-level problem and maps to 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArgError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_arg(bool cond, const std::string& msg) {
    if (!cond) throw ArgError(msg);
}

inline void require_config(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

inline void require_data(bool cond, const std::string& msg) {
    if (!cond) throw DataError(msg);
}

} // namespace taste
