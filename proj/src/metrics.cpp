// SPDX-License-Identifier: Apache-2.0
#include "taste/metrics.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>

namespace taste::metrics {

struct MetricsLog::Impl {
    std::ofstream out;
    std::chrono::steady_clock::time_point start;
};

MetricsLog::MetricsLog(const std::string& path) : impl_(new Impl) {
    impl_->out.open(path, std::ios::app);
    require_data(impl_->out.is_open(), "cannot open metrics log: " + path);
    impl_->start = std::chrono::steady_clock::now();
}

MetricsLog::~MetricsLog() { delete impl_; }

void MetricsLog::record(long step, long epoch, const std::map<std::string, double>& values) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["epoch"] = epoch;
    for (const auto& [k, v] : values) {
        require_arg(std::isfinite(v), "metrics: non-finite value for " + k);
        j[k] = v;
    }
    auto elapsed = std::chrono::steady_clock::now() - impl_->start;
    j["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    impl_->out << j.dump() << "\n";
    impl_->out.flush();
}

} // namespace taste::metrics
