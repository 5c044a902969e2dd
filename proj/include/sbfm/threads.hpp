#pragma once

#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace sbfm {

// SBFM_THREADS caps internal parallelism; 0 or unset means single-threaded
// deterministic mode (the contract the acceptance suite runs under).
inline std::size_t thread_cap() {
    const char* env = std::getenv("SBFM_THREADS");
    if (!env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v <= 1) return 1;
    return static_cast<std::size_t>(v);
}

// Contiguous [begin, end) shards covering n items, at most max_shards of them.
inline std::vector<std::pair<std::size_t, std::size_t>> shard_ranges(std::size_t n,
                                                                     std::size_t max_shards) {
    std::vector<std::pair<std::size_t, std::size_t>> shards;
    if (n == 0) return shards;
    const std::size_t k = std::min(std::max<std::size_t>(max_shards, 1), n);
    const std::size_t base = n / k, extra = n % k;
    std::size_t begin = 0;
    for (std::size_t s = 0; s < k; ++s) {
        const std::size_t len = base + (s < extra ? 1 : 0);
        shards.emplace_back(begin, begin + len);
        begin += len;
    }
    return shards;
}

// Run fn(shard_index, begin, end) over shards; sequential when only one shard.
// Callers reduce shard results in shard order to stay deterministic.
template <typename Fn>
void for_each_shard(std::size_t n_items, std::size_t max_shards, Fn&& fn) {
    const auto shards = shard_ranges(n_items, max_shards);
    if (shards.size() <= 1) {
        if (!shards.empty()) fn(std::size_t{0}, shards[0].first, shards[0].second);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(shards.size());
    for (std::size_t s = 0; s < shards.size(); ++s)
        workers.emplace_back([&, s] { fn(s, shards[s].first, shards[s].second); });
    for (auto& w : workers) w.join();
}

}  // namespace sbfm
