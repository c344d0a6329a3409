#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sajsq/rng.hpp"
#include "sajsq/state.hpp"

namespace sajsq {

// The job joins a server in `pool` that currently holds exactly
// `target_level` jobs.
struct RoutingDecision {
    int pool = 0;          // 0-based
    int target_level = 0;  // current queue length of the chosen server

    friend bool operator==(const RoutingDecision& a, const RoutingDecision& b) {
        return a.pool == b.pool && a.target_level == b.target_level;
    }
    friend bool operator<(const RoutingDecision& a, const RoutingDecision& b) {
        if (a.target_level != b.target_level) return a.target_level < b.target_level;
        return a.pool < b.pool;
    }
};

struct PolicyKind {
    enum class Tag { sa_jsq, jsq, pod, jiq };
    Tag tag = Tag::sa_jsq;
    int d = 2;  // sample size for pod

    static PolicyKind sa_jsq() { return {Tag::sa_jsq, 0}; }
    static PolicyKind jsq() { return {Tag::jsq, 0}; }
    static PolicyKind pod(int d) {
        if (d < 2) throw std::invalid_argument("pod: d must be >= 2");
        return {Tag::pod, d};
    }
    static PolicyKind jiq() { return {Tag::jiq, 0}; }

    // CLI syntax: sa-jsq | jsq | pod:<d> | jiq
    static PolicyKind parse(const std::string& s) {
        if (s == "sa-jsq") return sa_jsq();
        if (s == "jsq") return jsq();
        if (s == "jiq") return jiq();
        if (s.rfind("pod:", 0) == 0) return pod(std::stoi(s.substr(4)));
        throw std::invalid_argument("unknown policy '" + s + "' (want sa-jsq|jsq|pod:<d>|jiq)");
    }

    std::string name() const {
        switch (tag) {
            case Tag::sa_jsq: return "sa-jsq";
            case Tag::jsq: return "jsq";
            case Tag::pod: return "pod:" + std::to_string(d);
            case Tag::jiq: return "jiq";
        }
        return "?";
    }
};

// Smallest queue length present anywhere in the system.
inline int min_occupied_level(const OccupancyState& q, const SystemConfig& cfg) {
    for (int len = 0;; ++len) {
        for (int j = 0; j < cfg.M; ++j) {
            if (exact_count(q, cfg, j, len) > 0) return len;
        }
    }
}

namespace detail {

// Picks a pool index proportionally to weights[j]; consumes randomness
// only when there is a real tie to break.
template <typename Weights>
int pick_weighted_pool(const Weights& w, int M, RngStream& rng) {
    int candidates = 0;
    int only = -1;
    long long total = 0;
    for (int j = 0; j < M; ++j) {
        if (w[j] > 0) {
            ++candidates;
            only = j;
            total += w[j];
        }
    }
    if (candidates == 1) return only;
    long long r = static_cast<long long>(rng.uniform_int(static_cast<std::uint64_t>(total)));
    for (int j = 0; j < M; ++j) {
        if (w[j] <= 0) continue;
        if (r < w[j]) return j;
        r -= w[j];
    }
    return only;
}

}  // namespace detail

inline RoutingDecision select(const PolicyKind& kind, const OccupancyState& q, const SystemConfig& cfg,
                              RngStream& rng) {
    switch (kind.tag) {
        case PolicyKind::Tag::sa_jsq: {
            const int len = min_occupied_level(q, cfg);
            for (int j = 0; j < cfg.M; ++j) {
                if (exact_count(q, cfg, j, len) > 0) return {j, len};
            }
            throw InvariantViolation("sa-jsq: no server at the minimum level");
        }
        case PolicyKind::Tag::jsq: {
            const int len = min_occupied_level(q, cfg);
            std::vector<int> w(cfg.M);
            for (int j = 0; j < cfg.M; ++j) w[j] = exact_count(q, cfg, j, len);
            return {detail::pick_weighted_pool(w, cfg.M, rng), len};
        }
        case PolicyKind::Tag::jiq: {
            std::vector<int> idle(cfg.M);
            int total_idle = 0;
            for (int j = 0; j < cfg.M; ++j) {
                idle[j] = exact_count(q, cfg, j, 0);
                total_idle += idle[j];
            }
            if (total_idle > 0) return {detail::pick_weighted_pool(idle, cfg.M, rng), 0};
            // No idle server: fall back to a uniformly random server.
            long long r = static_cast<long long>(rng.uniform_int(static_cast<std::uint64_t>(cfg.n)));
            for (int len = 0;; ++len) {
                for (int j = 0; j < cfg.M; ++j) {
                    const int m = exact_count(q, cfg, j, len);
                    if (r < m) return {j, len};
                    r -= m;
                }
            }
        }
        case PolicyKind::Tag::pod: {
            // Sample d servers without replacement: sequential draws over
            // the (pool, length) classes, hypergeometric by construction.
            const int d = std::min(kind.d, cfg.n);
            const int L = q.depth();
            std::vector<int> remaining(static_cast<size_t>(cfg.M) * (L + 1));
            auto cls = [&](int j, int len) -> int& { return remaining[static_cast<size_t>(j) * (L + 1) + len]; };
            for (int j = 0; j < cfg.M; ++j)
                for (int len = 0; len <= L; ++len) cls(j, len) = exact_count(q, cfg, j, len);
            std::vector<int> sampled(remaining.size(), 0);
            int pool_total = cfg.n;
            int best_len = L + 1;
            for (int k = 0; k < d; ++k) {
                long long r = static_cast<long long>(rng.uniform_int(static_cast<std::uint64_t>(pool_total)));
                for (int j = 0; j < cfg.M; ++j) {
                    for (int len = 0; len <= L; ++len) {
                        if (r < cls(j, len)) {
                            cls(j, len) -= 1;
                            sampled[static_cast<size_t>(j) * (L + 1) + len] += 1;
                            if (len < best_len) best_len = len;
                            r = -1;
                            break;
                        }
                        r -= cls(j, len);
                    }
                    if (r < 0) break;
                }
                --pool_total;
            }
            std::vector<int> w(cfg.M);
            for (int j = 0; j < cfg.M; ++j) w[j] = sampled[static_cast<size_t>(j) * (L + 1) + best_len];
            return {detail::pick_weighted_pool(w, cfg.M, rng), best_len};
        }
    }
    throw std::logic_error("select: unreachable");
}

// Exact decision distribution; intended for small states (oracle support).
inline std::map<RoutingDecision, double> enumerate_decisions(const PolicyKind& kind, const OccupancyState& q,
                                                             const SystemConfig& cfg) {
    std::map<RoutingDecision, double> dist;
    switch (kind.tag) {
        case PolicyKind::Tag::sa_jsq: {
            const int len = min_occupied_level(q, cfg);
            for (int j = 0; j < cfg.M; ++j) {
                if (exact_count(q, cfg, j, len) > 0) {
                    dist[{j, len}] = 1.0;
                    return dist;
                }
            }
            break;
        }
        case PolicyKind::Tag::jsq: {
            const int len = min_occupied_level(q, cfg);
            double total = 0.0;
            for (int j = 0; j < cfg.M; ++j) total += exact_count(q, cfg, j, len);
            for (int j = 0; j < cfg.M; ++j) {
                const int m = exact_count(q, cfg, j, len);
                if (m > 0) dist[{j, len}] = m / total;
            }
            return dist;
        }
        case PolicyKind::Tag::jiq: {
            double total_idle = 0.0;
            for (int j = 0; j < cfg.M; ++j) total_idle += exact_count(q, cfg, j, 0);
            if (total_idle > 0) {
                for (int j = 0; j < cfg.M; ++j) {
                    const int m = exact_count(q, cfg, j, 0);
                    if (m > 0) dist[{j, 0}] = m / total_idle;
                }
            } else {
                for (int j = 0; j < cfg.M; ++j) {
                    for (int len = 0; len <= q.depth(); ++len) {
                        const int m = exact_count(q, cfg, j, len);
                        if (m > 0) dist[{j, len}] += static_cast<double>(m) / cfg.n;
                    }
                }
            }
            return dist;
        }
        case PolicyKind::Tag::pod: {
            const int d = std::min(kind.d, cfg.n);
            const int L = q.depth();
            struct Class {
                int pool, len, size;
            };
            std::vector<Class> classes;
            for (int j = 0; j < cfg.M; ++j)
                for (int len = 0; len <= L; ++len) {
                    const int m = exact_count(q, cfg, j, len);
                    if (m > 0) classes.push_back({j, len, m});
                }
            // Recurse over per-class sample counts (multivariate
            // hypergeometric), weighting each configuration.
            std::vector<int> take(classes.size(), 0);
            double log_cnd = 0.0;
            {
                // log C(n, d)
                for (int i = 0; i < d; ++i) log_cnd += std::log(static_cast<double>(cfg.n - i) / (i + 1));
            }
            auto log_choose = [](int m, int k) {
                double s = 0.0;
                for (int i = 0; i < k; ++i) s += std::log(static_cast<double>(m - i) / (i + 1));
                return s;
            };
            std::function<void(size_t, int, double)> rec = [&](size_t c, int left, double logw) {
                if (c == classes.size()) {
                    if (left != 0) return;
                    int min_len = L + 1;
                    for (size_t i = 0; i < classes.size(); ++i) {
                        if (take[i] > 0) min_len = std::min(min_len, classes[i].len);
                    }
                    int tie_total = 0;
                    for (size_t i = 0; i < classes.size(); ++i)
                        if (classes[i].len == min_len) tie_total += take[i];
                    const double w = std::exp(logw - log_cnd);
                    for (size_t i = 0; i < classes.size(); ++i) {
                        if (classes[i].len == min_len && take[i] > 0) {
                            dist[{classes[i].pool, min_len}] += w * take[i] / tie_total;
                        }
                    }
                    return;
                }
                const int cap = std::min(left, classes[c].size);
                for (int k = 0; k <= cap; ++k) {
                    take[c] = k;
                    rec(c + 1, left - k, logw + log_choose(classes[c].size, k));
                }
                take[c] = 0;
            };
            rec(0, d, 0.0);
            return dist;
        }
    }
    return dist;
}

}  // namespace sajsq
