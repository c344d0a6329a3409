#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sajsq/ctmc.hpp"
#include "sajsq/policy.hpp"

namespace sajsq {

struct StateSpaceTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact stationary distribution of the routing CTMC truncated at a
// per-queue depth cap (arrivals whose chosen server already holds `cap`
// jobs are blocked).  Independent oracle for the simulator.
struct ExactStationary {
    std::vector<OccupancyState> states;
    std::vector<double> probs;
    int cap = 0;

    double functional(const SystemConfig& cfg, const std::string& name) const {
        const auto names = stationary_functional_names(cfg);
        size_t idx = names.size();
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) idx = i;
        if (idx == names.size()) throw std::out_of_range("no functional named '" + name + "'");
        std::vector<double> vals;
        double acc = 0.0;
        for (size_t s = 0; s < states.size(); ++s) {
            stationary_functional_values(states[s], cfg, total_jobs(states[s]), vals);
            acc += probs[s] * vals[idx];
        }
        return acc;
    }

    StationaryEstimate as_estimate(const SystemConfig& cfg) const {
        StationaryEstimate est;
        const auto names = stationary_functional_names(cfg);
        for (const auto& nm : names) est.functionals.push_back({nm, functional(cfg, nm), 0.0});
        return est;
    }
};

namespace detail {

// All non-increasing sequences 0 <= Q_cap <= ... <= Q_1 <= nj.
inline void enumerate_tails(int nj, int cap, std::vector<std::vector<int>>& out) {
    std::vector<int> row(cap, 0);
    std::function<void(int, int)> rec = [&](int k, int upper) {
        if (k == cap) {
            out.push_back(row);
            return;
        }
        for (int v = 0; v <= upper; ++v) {
            row[k] = v;
            rec(k + 1, v);
        }
    };
    rec(0, nj);
}

}  // namespace detail

inline ExactStationary exact_stationary_small(const SystemConfig& cfg, const PolicyKind& kind, int cap,
                                              long long max_states = 200000) {
    std::vector<std::vector<std::vector<int>>> per_pool(cfg.M);
    long long count = 1;
    for (int j = 0; j < cfg.M; ++j) {
        detail::enumerate_tails(cfg.pool_sizes[j], cap, per_pool[j]);
        count *= static_cast<long long>(per_pool[j].size());
        if (count > max_states) {
            throw StateSpaceTooLarge("truncated state space exceeds " + std::to_string(max_states) + " states");
        }
    }
    const int S = static_cast<int>(count);

    // Mixed-radix indexing over per-pool tail sequences.
    std::vector<std::unordered_map<std::string, int>> pool_index(cfg.M);
    auto tail_key = [](const std::vector<int>& t) {
        std::string k;
        for (int v : t) {
            k.append(reinterpret_cast<const char*>(&v), sizeof(int));
        }
        return k;
    };
    for (int j = 0; j < cfg.M; ++j) {
        for (size_t i = 0; i < per_pool[j].size(); ++i) pool_index[j][tail_key(per_pool[j][i])] = static_cast<int>(i);
    }
    std::vector<int> radix(cfg.M, 1);
    for (int j = cfg.M - 2; j >= 0; --j) radix[j] = radix[j + 1] * static_cast<int>(per_pool[j + 1].size());

    ExactStationary out;
    out.cap = cap;
    out.states.resize(S);
    for (int s = 0; s < S; ++s) {
        OccupancyState q;
        q.counts.resize(cfg.M);
        int rest = s;
        for (int j = 0; j < cfg.M; ++j) {
            q.counts[j] = per_pool[j][rest / radix[j]];
            rest %= radix[j];
        }
        out.states[s] = std::move(q);
    }
    auto state_id = [&](const OccupancyState& q) {
        int s = 0;
        for (int j = 0; j < cfg.M; ++j) s += pool_index[j].at(tail_key(q.counts[j])) * radix[j];
        return s;
    };

    // Build A = G^T with the first row replaced by the normalization.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(S) * (cfg.M * cap + 2));
    const double arrival_rate = cfg.arrival_rate();
    for (int s = 0; s < S; ++s) {
        const OccupancyState& q = out.states[s];
        double diag = 0.0;
        auto add_rate = [&](const OccupancyState& to, double rate) {
            const int t = state_id(to);
            diag += rate;
            if (t != 0) trips.emplace_back(t, s, rate);
        };
        // Departures: class (j, i) at rate mu_j (Q_{j,i} - Q_{j,i+1}).
        for (int j = 0; j < cfg.M; ++j) {
            for (int i = 1; i <= cap; ++i) {
                const int m = q.tail_count(j, i) - q.tail_count(j, i + 1);
                if (m == 0) continue;
                OccupancyState to = q;
                to.counts[j][i - 1] -= 1;
                add_rate(to, cfg.speeds[j] * m);
            }
        }
        // Arrivals through the policy's decision distribution; decisions
        // that would push a queue past the cap are blocked.
        for (const auto& [dec, p] : enumerate_decisions(kind, q, cfg)) {
            if (dec.target_level >= cap) continue;
            OccupancyState to = q;
            to.counts[dec.pool][dec.target_level] += 1;
            add_rate(to, arrival_rate * p);
        }
        if (s != 0) trips.emplace_back(s, s, -diag);
    }
    for (int s = 0; s < S; ++s) trips.emplace_back(0, s, 1.0);

    Eigen::SparseMatrix<double> A(S, S);
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(S);
    b(0) = 1.0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw std::runtime_error("exact_stationary_small: factorization failed");
    Eigen::VectorXd pi = lu.solve(b);
    double total = 0.0;
    for (int s = 0; s < S; ++s) {
        if (pi(s) < 0 && pi(s) > -1e-12) pi(s) = 0.0;
        total += pi(s);
    }
    out.probs.resize(S);
    for (int s = 0; s < S; ++s) out.probs[s] = pi(s) / total;
    return out;
}

// Checks the stationary rate-conservation identities on an estimate:
//   part 1:  E[sum_k mu_k Q_{k,1}] = n lambda
//   part 2:  E[sum_{k>=2} mu_k Q_{k,2} + mu_1 Q_{1,3}]
//              = n lambda P(sum_k Q_{k,1} = n, Q_{1,2} = N_1)
struct RateConservationReport {
    double lhs = 0.0, lhs_se = 0.0, target = 0.0;
    double residual = 0.0;
    bool within_3se = false;
    double part2_lhs = 0.0, part2_rhs = 0.0, part2_se = 0.0;
    double part2_residual = 0.0;
    bool part2_within_3se = false;
};

inline RateConservationReport rate_conservation_check(const StationaryEstimate& est, const SystemConfig& cfg) {
    RateConservationReport r;
    const auto& busy = est.at("busy_rate");
    r.lhs = busy.mean;
    r.lhs_se = busy.se;
    r.target = cfg.arrival_rate();
    r.residual = std::abs(r.lhs - r.target);
    r.within_3se = r.residual <= 3.0 * busy.se || r.residual <= 1e-10;
    const auto& t2 = est.at("tail2_rate");
    const auto& sat = est.at("sat_prob");
    r.part2_lhs = t2.mean;
    r.part2_rhs = cfg.arrival_rate() * sat.mean;
    r.part2_se = std::sqrt(t2.se * t2.se + cfg.arrival_rate() * cfg.arrival_rate() * sat.se * sat.se);
    r.part2_residual = std::abs(r.part2_lhs - r.part2_rhs);
    r.part2_within_3se = r.part2_residual <= 3.0 * r.part2_se || r.part2_residual <= 1e-10;
    return r;
}

inline RateConservationReport rate_conservation_check(const ExactStationary& ex, const SystemConfig& cfg) {
    return rate_conservation_check(ex.as_estimate(cfg), cfg);
}

}  // namespace sajsq
