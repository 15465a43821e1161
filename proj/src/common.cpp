#include <algorithm>
#include <atomic>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include "invp/log.hpp"
#include "invp/parallel.hpp"
#include "invp/types.hpp"

namespace invp {

namespace {

std::mutex g_log_mutex;
log::Sink g_sink;
std::atomic<std::size_t> g_workers{0};

void emit(log::Level level, const std::string& message) {
    std::lock_guard lock(g_log_mutex);
    if (g_sink) {
        g_sink(level, message);
        return;
    }
    std::cerr << (level == log::Level::warning ? "warning: " : "") << message << '\n';
}

}  // namespace

namespace log {

void set_sink(Sink sink) {
    std::lock_guard lock(g_log_mutex);
    g_sink = std::move(sink);
}

void info(const std::string& message) { emit(Level::info, message); }
void warning(const std::string& message) { emit(Level::warning, message); }

}  // namespace log

void set_worker_count(std::size_t workers) { g_workers = workers; }

std::size_t worker_count() {
    std::size_t w = g_workers.load();
    if (w == 0) w = std::max(1u, std::thread::hardware_concurrency());
    return w;
}

void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    if (count == 0) return;
    grain = std::max<std::size_t>(grain, 1);
    const std::size_t chunks = (count + grain - 1) / grain;
    const std::size_t workers = std::min(worker_count(), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) body(c * grain, std::min(count, (c + 1) * grain));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            try {
                body(c * grain, std::min(count, (c + 1) * grain));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    for (std::size_t t = 1; t < workers; ++t) threads.emplace_back(work);
    work();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t counter) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(root) ^ stream) ^ counter);
}

}  // namespace invp
