#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sajsq/config.hpp"

namespace sajsq {

struct InvariantViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tail-count state: counts[j][k] is the number of type-(j+1) servers with
// at least k+1 jobs (Q_{j+1,k+1}).  The tracked depth starts at 4 and
// doubles whenever the deepest tracked level becomes occupied.
struct OccupancyState {
    std::vector<std::vector<int>> counts;
    double clock = 0.0;

    int depth() const { return counts.empty() ? 0 : static_cast<int>(counts[0].size()); }

    // Q_{j+1,level} with level 1-based; level 0 yields N_j (caller side).
    int tail_count(int pool, int level) const {
        if (level <= 0 || level > depth()) return level <= 0 ? -1 : 0;
        return counts[pool][level - 1];
    }
};

inline OccupancyState make_empty_state(const SystemConfig& cfg, int depth = 4) {
    OccupancyState q;
    q.counts.assign(cfg.M, std::vector<int>(depth, 0));
    return q;
}

// Number of type-(j+1) servers with exactly `len` jobs.
inline int exact_count(const OccupancyState& q, const SystemConfig& cfg, int pool, int len) {
    const int upper = (len == 0) ? cfg.pool_sizes[pool] : q.tail_count(pool, len);
    return upper - q.tail_count(pool, len + 1);
}

inline long long total_jobs(const OccupancyState& q) {
    long long t = 0;
    for (const auto& row : q.counts)
        for (int c : row) t += c;
    return t;
}

inline int busy_servers(const OccupancyState& q) {
    int t = 0;
    for (const auto& row : q.counts) t += row[0];
    return t;
}

inline void check_monotone(const OccupancyState& q, const SystemConfig& cfg) {
    for (int j = 0; j < cfg.M; ++j) {
        if (q.counts[j][0] > cfg.pool_sizes[j] || q.counts[j][0] < 0) {
            throw InvariantViolation("occupancy: pool " + std::to_string(j + 1) + " level-1 count out of range");
        }
        for (size_t k = 1; k < q.counts[j].size(); ++k) {
            if (q.counts[j][k] > q.counts[j][k - 1] || q.counts[j][k] < 0) {
                throw InvariantViolation("occupancy: tail counts not monotone in pool " + std::to_string(j + 1));
            }
        }
    }
}

inline void grow_depth_if_needed(OccupancyState& q) {
    const int L = q.depth();
    bool full = false;
    for (const auto& row : q.counts) full = full || row[L - 1] > 0;
    if (full) {
        for (auto& row : q.counts) row.resize(2 * static_cast<size_t>(L), 0);
    }
}

// A job joins a server that currently holds `target_level` jobs.
inline void apply_arrival(OccupancyState& q, int pool, int target_level) {
    q.counts[pool][target_level] += 1;
    grow_depth_if_needed(q);
}

// A departure from a queue holding exactly `level` jobs (level >= 1).
inline void apply_departure(OccupancyState& q, int pool, int level) {
    q.counts[pool][level - 1] -= 1;
}

// Diffusion-scaled view: y[j][0] = (Q_{j,1} - N_j)/sqrt(n), deeper entries
// Q_{j,i+1}/sqrt(n).
struct ScaledState {
    std::vector<std::vector<double>> y;
    double idle_fast = 0.0;  // Y_{[1,M-1],1}
    double y_plus1 = 0.0;    // (total jobs - n)/sqrt(n)
    double y_plus2 = 0.0;    // waiting jobs / sqrt(n)
};

inline ScaledState scale_state(const OccupancyState& q, const SystemConfig& cfg) {
    const double rn = cfg.sqrt_n();
    ScaledState s;
    s.y.assign(cfg.M, std::vector<double>(q.depth(), 0.0));
    for (int j = 0; j < cfg.M; ++j) {
        s.y[j][0] = (q.counts[j][0] - cfg.pool_sizes[j]) / rn;
        for (int k = 1; k < q.depth(); ++k) s.y[j][k] = q.counts[j][k] / rn;
        if (j < cfg.M - 1) s.idle_fast += s.y[j][0];
        for (int k = 1; k < q.depth(); ++k) s.y_plus2 += s.y[j][k];
    }
    s.y_plus1 = s.y_plus2;
    for (int j = 0; j < cfg.M; ++j) s.y_plus1 += s.y[j][0];
    return s;
}

// Inverse of scale_state on integer-grid states.
inline OccupancyState unscale_state(const ScaledState& s, const SystemConfig& cfg) {
    const double rn = cfg.sqrt_n();
    OccupancyState q;
    q.counts.resize(cfg.M);
    for (int j = 0; j < cfg.M; ++j) {
        std::vector<int> row(s.y[j].size(), 0);
        row[0] = static_cast<int>(std::llround(s.y[j][0] * rn)) + cfg.pool_sizes[j];
        for (size_t k = 1; k < s.y[j].size(); ++k) row[k] = static_cast<int>(std::llround(s.y[j][k] * rn));
        q.counts[j] = std::move(row);
    }
    return q;
}

inline double aggregate_idle_fast(const ScaledState& s) { return s.idle_fast; }

}  // namespace sajsq
