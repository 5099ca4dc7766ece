// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/common.hpp"

#include <map>
#include <string>

namespace taste::metrics {

// Append-only, line-delimited JSON metrics log. Every record carries step,
// epoch and wall_ms; wall_ms is the only nondeterministic field.
class MetricsLog {
public:
    explicit MetricsLog(const std::string& path);
    ~MetricsLog();

    MetricsLog(const MetricsLog&) = delete;
    MetricsLog& operator=(const MetricsLog&) = delete;

    void record(long step, long epoch, const std::map<std::string, double>& values);

private:
    struct Impl;
    Impl* impl_;
};

} // namespace taste::metrics
