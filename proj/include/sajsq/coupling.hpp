#pragma once

#include <limits>
#include <string>
#include <vector>

#include "sajsq/ctmc.hpp"

namespace sajsq {

struct CouplingViolation : InvariantViolation {
    using InvariantViolation::InvariantViolation;
};

// Departure rate of the free-server system when `count` queues hold at
// least i jobs: the count fastest servers are serving them, so
// sum_j mu_j [ (count - sum_{k<j} N_k)_+ ^ N_j ].
inline double tilde_mu(int count, const SystemConfig& cfg) {
    double rate = 0.0;
    int ahead = 0;
    for (int j = 0; j < cfg.M; ++j) {
        const int busy = std::min(std::max(count - ahead, 0), cfg.pool_sizes[j]);
        rate += cfg.speeds[j] * busy;
        ahead += cfg.pool_sizes[j];
    }
    return rate;
}

// Buffer-two JSQ system with preemptively re-arranged servers, tracked
// through (q1, q2) and the flow counters of its balance equations.
struct ModifiedState {
    int q1 = 0;  // queues with >= 1 job
    int q2 = 0;  // queues with >= 2 jobs
    double clock = 0.0;
    long long A = 0;   // external arrivals
    long long A1 = 0;  // arrivals joining a 1-job queue
    long long AR = 0;  // rejected arrivals
    long long D1 = 0;  // all departures
    long long D2 = 0;  // departures from 2-job queues
};

inline void check_modified_balance(const ModifiedState& m, int q1_0, int q2_0, int n) {
    if (m.q2 < 0 || m.q1 < m.q2 || m.q1 > n) throw InvariantViolation("modified state out of range");
    const long long q1 = q1_0 + m.A - m.AR - m.A1 - m.D1 + m.D2;
    const long long q2 = q2_0 + m.A1 - m.D2;
    if (q1 != m.q1 || q2 != m.q2) throw InvariantViolation("modified counters violate the balance equations");
}

// JSQ arrival in the modified system (idle queue first, then a 1-job
// queue, else rejected).
inline void modified_arrival(ModifiedState& m, int n) {
    m.A += 1;
    if (m.q1 < n) m.q1 += 1;
    else if (m.q2 < n) {
        m.q2 += 1;
        m.A1 += 1;
    } else {
        m.AR += 1;
    }
}

// Outcome of thinning one potential-departure epoch in the policy-driven
// system: the supremum pair (pool, level) in the (level desc, pool asc)
// order whose cumulative threshold sum_{k<=pool} mu_k Q_{k,level} covers
// u, or no departure at all.
struct OriginalThinning {
    bool departed = false;
    int pool = -1;
    int level = -1;          // selected class level
    int applied_level = -1;  // exact length of the departing queue (>= level)
};

inline OriginalThinning thin_original(double u, const OccupancyState& q, const SystemConfig& cfg) {
    const double pot_rate = cfg.total_service_rate();
    OriginalThinning sel;
    for (int i = q.depth(); i >= 1 && !sel.departed; --i) {
        double c = 0.0;
        for (int j = 0; j < cfg.M; ++j) {
            c += cfg.speeds[j] * q.tail_count(j, i);
            if (u <= c / pot_rate) {
                sel.departed = true;
                sel.pool = j;
                sel.level = i;
                break;
            }
        }
    }
    if (sel.departed) {
        int lvl = sel.level;
        while (q.tail_count(sel.pool, lvl) - q.tail_count(sel.pool, lvl + 1) == 0) ++lvl;
        sel.applied_level = lvl;
    }
    return sel;
}

// Modified-system thinning: 2 for a departure from a 2-job queue,
// 1 for a departure from a 1-job queue, 0 for a lost epoch.
inline int thin_modified(double u, int q1, int q2, const SystemConfig& cfg) {
    const double pot_rate = cfg.total_service_rate();
    if (u <= tilde_mu(q2, cfg) / pot_rate) return 2;
    if (u <= tilde_mu(q1, cfg) / pot_rate) return 1;
    return 0;
}

struct CoupledEvent {
    double t = 0.0;
    double u = std::numeric_limits<double>::quiet_NaN();  // NaN for arrivals
    std::string kind;                                     // "arr" or "dep:<orig>:<mod>"
    int Q1 = 0, Qp2 = 0, q1t = 0, q2t = 0;
};

struct CoupledTrace {
    std::vector<CoupledEvent> events;
    std::uint64_t seed = 0;
    long long lost_potential = 0;
    bool violation = false;  // always false on a returned trace
};

// Shared-randomness coupling of the policy-driven system and the
// modified system: one arrival stream, one potential-departure stream at
// rate sum_j mu_j N_j whose epochs carry a uniform U that both systems
// thin against their own cumulative rate thresholds.  The pathwise
// inequalities q2~ <= Q_{+2} and q1~ + q2~ <= Q_1 + Q_{+2} are asserted
// after every event.
inline CoupledTrace coupled_run(const SystemConfig& cfg, const PolicyKind& kind, double horizon,
                                std::uint64_t seed, const OccupancyState* q0 = nullptr,
                                std::uint64_t replication = 0, bool record_events = true) {
    OccupancyState q = q0 ? *q0 : make_empty_state(cfg);
    check_monotone(q, cfg);
    for (int j = 0; j < cfg.M; ++j) {
        for (int i = 3; i <= q.depth(); ++i) {
            if (q.tail_count(j, i) > 0) {
                throw std::invalid_argument("coupled_run: initial queues must hold at most 2 jobs");
            }
        }
    }
    ModifiedState m;
    m.q1 = busy_servers(q);
    m.q2 = static_cast<int>(total_jobs(q)) - m.q1;
    const int q1_0 = m.q1, q2_0 = m.q2;

    RngStream arrivals = RngStream::derive(seed, {replication, kStreamArrival});
    RngStream potential = RngStream::derive(seed, {replication, kStreamDeparture});
    RngStream ties = RngStream::derive(seed, {replication, kStreamTieBreak});

    const double arr_rate = cfg.arrival_rate();
    const double pot_rate = cfg.total_service_rate();
    double t_arr = arrivals.exponential(arr_rate);
    double t_pot = potential.exponential(pot_rate);
    double clock = 0.0;

    CoupledTrace trace;
    trace.seed = seed;

    auto busy_total = [&]() { return busy_servers(q); };
    auto waiting_total = [&]() { return static_cast<int>(total_jobs(q)) - busy_servers(q); };

    auto assert_ordering = [&](double t) {
        const int Q1 = busy_total();
        const int Qp2 = waiting_total();
        if (m.q2 > Qp2 || m.q1 + m.q2 > Q1 + Qp2) {
            throw CouplingViolation("coupling ordering violated at t=" + std::to_string(t));
        }
        check_modified_balance(m, q1_0, q2_0, cfg.n);
    };

    while (std::min(t_arr, t_pot) <= horizon) {
        CoupledEvent ev;
        if (t_arr <= t_pot) {
            clock = t_arr;
            const RoutingDecision dec = select(kind, q, cfg, ties);
            apply_arrival(q, dec.pool, dec.target_level);
            modified_arrival(m, cfg.n);
            t_arr += arrivals.exponential(arr_rate);
            ev.kind = "arr";
        } else {
            clock = t_pot;
            const double u = potential.uniform();
            ev.u = u;
            std::string orig = "lost";
            const OriginalThinning sel = thin_original(u, q, cfg);
            if (sel.departed) {
                apply_departure(q, sel.pool, sel.applied_level);
                orig = "o" + std::to_string(sel.pool + 1) + "," + std::to_string(sel.level);
            } else {
                ++trace.lost_potential;
            }
            std::string mod = "lost";
            switch (thin_modified(u, m.q1, m.q2, cfg)) {
                case 2:
                    m.q2 -= 1;
                    m.D1 += 1;
                    m.D2 += 1;
                    mod = "m2";
                    break;
                case 1:
                    m.q1 -= 1;
                    m.D1 += 1;
                    mod = "m1";
                    break;
                default:
                    break;
            }
            t_pot += potential.exponential(pot_rate);
            ev.kind = "dep:" + orig + ":" + mod;
        }
        check_monotone(q, cfg);
        m.clock = clock;
        q.clock = clock;
        assert_ordering(clock);
        if (record_events) {
            ev.t = clock;
            ev.Q1 = busy_total();
            ev.Qp2 = waiting_total();
            ev.q1t = m.q1;
            ev.q2t = m.q2;
            trace.events.push_back(std::move(ev));
        }
    }
    return trace;
}

// Standalone stationary simulation of the modified system.
inline StationaryEstimate simulate_modified_stationary(const SystemConfig& cfg, double warmup, double duration,
                                                       int n_batches, std::uint64_t seed,
                                                       std::uint64_t replication = 0) {
    if (n_batches < 10) throw std::invalid_argument("simulate_modified_stationary: need n_batches >= 10");
    ModifiedState m;
    RngStream arrivals = RngStream::derive(seed, {replication, kStreamArrival});
    RngStream departures = RngStream::derive(seed, {replication, kStreamDeparture});
    const double arr_rate = cfg.arrival_rate();
    const double rn = cfg.sqrt_n();
    double t_arr = arrivals.exponential(arr_rate);
    double clock = 0.0;
    const double t_end = warmup + duration;

    // Time-averaged functionals plus counter-based arrival columns for the
    // blocking fraction (accepted-vs-rejected per batch).
    const std::vector<std::string> names = {"Ytilde1", "Ytilde2", "Yplus1", "Yplus2"};
    BatchAccumulator acc(names, duration, n_batches);
    std::vector<double> arr_in_batch(n_batches, 0.0), rej_in_batch(n_batches, 0.0);
    long long measured_arrivals = 0;
    std::vector<double> vals(4);

    while (true) {
        const double rate2 = tilde_mu(m.q2, cfg);
        const double rate1 = tilde_mu(m.q1, cfg) - rate2;
        double t_dep = std::numeric_limits<double>::infinity();
        bool dep_is_level2 = false;
        if (rate1 + rate2 > 0) {
            t_dep = clock + departures.exponential(rate1 + rate2);
            dep_is_level2 = departures.uniform() * (rate1 + rate2) < rate2;
        }
        const double t_next = std::min(t_arr, t_dep);
        const double t_seg_end = std::min(t_next, t_end);
        if (t_seg_end > warmup) {
            vals[0] = (m.q1 - cfg.n) / rn;
            vals[1] = m.q2 / rn;
            vals[2] = (m.q1 + m.q2 - cfg.n) / rn;
            vals[3] = m.q2 / rn;
            const double a = std::max(clock, warmup) - warmup;
            acc.add(a, t_seg_end - warmup - a, vals);
        }
        if (t_next >= t_end) break;
        clock = t_next;
        if (t_arr <= t_dep) {
            const bool rejected = (m.q1 == cfg.n && m.q2 == cfg.n);
            modified_arrival(m, cfg.n);
            t_arr += arrivals.exponential(arr_rate);
            if (clock > warmup) {
                const int b = std::min(n_batches - 1, static_cast<int>((clock - warmup) / (duration / n_batches)));
                arr_in_batch[b] += 1.0;
                if (rejected) rej_in_batch[b] += 1.0;
                ++measured_arrivals;
            }
        } else {
            if (dep_is_level2) {
                m.q2 -= 1;
                m.D2 += 1;
            } else {
                m.q1 -= 1;
            }
            m.D1 += 1;
        }
        if (clock > warmup) acc.count_event(clock - warmup);
        check_modified_balance(m, 0, 0, cfg.n);
    }

    StationaryEstimate est;
    est.batches = n_batches;
    est.warmup = warmup;
    est.seed = seed;
    est.arrivals = measured_arrivals;
    const auto ms = acc.finalize();
    for (size_t i = 0; i < names.size(); ++i) est.functionals.push_back({names[i], ms[i].mean, ms[i].se});
    double total_arr = 0.0, total_rej = 0.0, mean_ratio = 0.0;
    std::vector<double> ratios;
    for (int b = 0; b < n_batches; ++b) {
        if (arr_in_batch[b] <= 0) throw InsufficientBatches("batch " + std::to_string(b) + " saw no arrivals");
        total_arr += arr_in_batch[b];
        total_rej += rej_in_batch[b];
        ratios.push_back(rej_in_batch[b] / arr_in_batch[b]);
    }
    for (double r : ratios) mean_ratio += r;
    mean_ratio /= n_batches;
    double var = 0.0;
    for (double r : ratios) var += (r - mean_ratio) * (r - mean_ratio);
    var /= (n_batches - 1);
    est.functionals.push_back({"blocking_fraction", total_rej / total_arr, std::sqrt(var / n_batches)});
    return est;
}

}  // namespace sajsq
