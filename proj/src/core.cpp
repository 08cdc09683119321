#include "dtwin/core.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

namespace dtwin {

void parallel_for(std::int64_t n, const Exec& exec,
                  const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (n <= 0) return;
    const std::int64_t workers = std::clamp<std::int64_t>(exec.workers, 1, n);
    if (workers == 1) {
        body(0, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (std::int64_t w = 0; w < workers; ++w) {
        const std::int64_t b = w * chunk;
        const std::int64_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&body, b, e] { body(b, e); });
    }
    for (auto& t : pool) t.join();
}

namespace {
std::mutex g_sink_mutex;
WarningSink& sink_ref() {
    static WarningSink sink = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
    return sink;
}
}  // namespace

void set_warning_sink(WarningSink sink) {
    std::lock_guard lock(g_sink_mutex);
    sink_ref() = std::move(sink);
}

void warn(const std::string& message) {
    std::lock_guard lock(g_sink_mutex);
    if (sink_ref()) sink_ref()(message);
}

}  // namespace dtwin
