#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "sajsq/coupling.hpp"
#include "sajsq/csv.hpp"
#include "sajsq/ctmc.hpp"
#include "sajsq/diffusion.hpp"

namespace sajsq {

// Everything the CLI needs to launch one experiment.
struct ExperimentSpec {
    std::string verb;
    std::string config_path;
    PolicyKind policy = PolicyKind::sa_jsq();
    std::vector<int> n_sweep;
    int replications = 1;
    std::uint64_t seed_base = 1;
    std::string out_dir = ".";
    int threads = 1;
    // Verb-specific knobs.
    double horizon = 10.0;
    double grid_dt = 0.01;
    double t0 = 1.0;
    double warmup = -1.0;  // < 0: duration/4
    double duration = 1000.0;
    int batches = 20;
    double kappa = 1.0;
    int grid_points = 10000;
    double sde_h = 5e-3;
    double sigma = std::sqrt(2.0);
};

// Fans `count` independent jobs out to a bounded worker pool; results go
// into caller-indexed slots, so aggregation order never depends on the
// scheduling.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, count);
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

struct PolicyRow {
    std::string policy;
    double yplus1_mean = 0.0, yplus1_se = 0.0;
    double yplus2_mean = 0.0, yplus2_se = 0.0;
    long long arrivals = 0;  // arrivals in the first replication's window
};

struct DiffRow {
    std::string a, b;
    std::string functional;  // Yplus1 | Yplus2
    double diff = 0.0;
    double combined_se = 0.0;
};

struct ComparisonReport {
    std::vector<PolicyRow> rows;
    std::vector<DiffRow> diffs;
    double sde_yplus1 = 0.0, sde_yplus2 = 0.0;
    int replications = 0;

    CsvTable to_csv() const {
        CsvTable t;
        t.header = {"kind", "a", "b", "functional", "mean", "se", "arrivals", "replications"};
        for (const auto& r : rows) {
            t.rows.push_back({"row", r.policy, "", "Yplus1", csv_double(r.yplus1_mean), csv_double(r.yplus1_se),
                              std::to_string(r.arrivals), std::to_string(replications)});
            t.rows.push_back({"row", r.policy, "", "Yplus2", csv_double(r.yplus2_mean), csv_double(r.yplus2_se),
                              std::to_string(r.arrivals), std::to_string(replications)});
        }
        for (const auto& d : diffs) {
            t.rows.push_back({"diff", d.a, d.b, d.functional, csv_double(d.diff), csv_double(d.combined_se), "0",
                              std::to_string(replications)});
        }
        t.rows.push_back({"sde_ref", "", "", "Yplus1", csv_double(sde_yplus1), "0", "0", std::to_string(replications)});
        t.rows.push_back({"sde_ref", "", "", "Yplus2", csv_double(sde_yplus2), "0", "0", std::to_string(replications)});
        return t;
    }

    static ComparisonReport from_csv(const CsvTable& t) {
        ComparisonReport rep;
        for (const auto& row : t.rows) {
            rep.replications = std::stoi(row[7]);
            if (row[0] == "row") {
                if (row[3] == "Yplus1") {
                    rep.rows.push_back({row[1], std::stod(row[4]), std::stod(row[5]), 0.0, 0.0, std::stoll(row[6])});
                } else {
                    for (auto& r : rep.rows) {
                        if (r.policy == row[1] && r.yplus2_se == 0.0 && r.yplus2_mean == 0.0) {
                            r.yplus2_mean = std::stod(row[4]);
                            r.yplus2_se = std::stod(row[5]);
                            break;
                        }
                    }
                }
            } else if (row[0] == "diff") {
                rep.diffs.push_back({row[1], row[2], row[3], std::stod(row[4]), std::stod(row[5])});
            } else if (row[0] == "sde_ref") {
                (row[3] == "Yplus1" ? rep.sde_yplus1 : rep.sde_yplus2) = std::stod(row[4]);
            }
        }
        return rep;
    }
};

namespace detail {

struct RepMeans {
    double yplus1 = 0.0, yplus2 = 0.0;
    long long arrivals = 0;
};

inline MeanSe across_reps(const std::vector<double>& xs) {
    MeanSe ms;
    for (double v : xs) ms.mean += v;
    ms.mean /= xs.size();
    if (xs.size() > 1) {
        double var = 0.0;
        for (double v : xs) var += (v - ms.mean) * (v - ms.mean);
        ms.se = std::sqrt(var / (xs.size() - 1) / xs.size());
    }
    return ms;
}

}  // namespace detail

// Runs every policy (plus the free-server lower-bound system) on common
// replication seeds: within a replication all systems consume the same
// arrival sample path, so policy differences are paired.
inline ComparisonReport compare_policies(const SystemConfig& cfg, const std::vector<PolicyKind>& policies,
                                         int replications, double warmup, double duration, int batches,
                                         std::uint64_t seed, int threads, bool include_modified = true) {
    if (replications < 1) throw std::invalid_argument("compare_policies: need replications >= 1");
    if (!(cfg.lambda < 1.0)) throw std::invalid_argument("compare_policies: unstable load");
    const int n_sys = static_cast<int>(policies.size()) + (include_modified ? 1 : 0);
    std::vector<std::vector<detail::RepMeans>> per_sys(n_sys, std::vector<detail::RepMeans>(replications));

    parallel_for(n_sys * replications, threads, [&](int idx) {
        const int sys = idx / replications;
        const int rep = idx % replications;
        detail::RepMeans rm;
        if (include_modified && sys == n_sys - 1) {
            const StationaryEstimate est =
                simulate_modified_stationary(cfg, warmup, duration, batches, seed, static_cast<std::uint64_t>(rep));
            rm.yplus1 = est.at("Yplus1").mean;
            rm.yplus2 = est.at("Yplus2").mean;
            rm.arrivals = est.arrivals;
        } else {
            const StationaryEstimate est = simulate_stationary(cfg, policies[sys], warmup, duration, batches, seed,
                                                               static_cast<std::uint64_t>(rep));
            rm.yplus1 = est.at("Yplus1").mean;
            rm.yplus2 = est.at("Yplus2").mean;
            rm.arrivals = est.arrivals;
        }
        per_sys[sys][rep] = rm;
    });

    ComparisonReport rep;
    rep.replications = replications;
    auto name_of = [&](int sys) {
        return (include_modified && sys == n_sys - 1) ? std::string("modified") : policies[sys].name();
    };
    for (int sys = 0; sys < n_sys; ++sys) {
        std::vector<double> y1, y2;
        for (const auto& rm : per_sys[sys]) {
            y1.push_back(rm.yplus1);
            y2.push_back(rm.yplus2);
        }
        const MeanSe m1 = detail::across_reps(y1);
        const MeanSe m2 = detail::across_reps(y2);
        rep.rows.push_back({name_of(sys), m1.mean, m1.se, m2.mean, m2.se, per_sys[sys][0].arrivals});
    }
    for (int a = 0; a < n_sys; ++a) {
        for (int b = a + 1; b < n_sys; ++b) {
            for (const std::string fun : {"Yplus1", "Yplus2"}) {
                std::vector<double> ds;
                for (int r = 0; r < replications; ++r) {
                    const double va = fun == "Yplus1" ? per_sys[a][r].yplus1 : per_sys[a][r].yplus2;
                    const double vb = fun == "Yplus1" ? per_sys[b][r].yplus1 : per_sys[b][r].yplus2;
                    ds.push_back(va - vb);
                }
                const MeanSe md = detail::across_reps(ds);
                rep.diffs.push_back({name_of(a), name_of(b), fun, md.mean, md.se});
            }
        }
    }
    // Reference moments of the limiting process at the effective slack.
    DiffusionParams p;
    p.beta = cfg.sqrt_n() * (1.0 - cfg.lambda);
    p.mu1 = cfg.speeds.front();
    p.muM = cfg.speeds.back();
    p.h = 5e-3;
    const SdeStationary sde = sde_stationary_estimate(p, 50.0, 2000.0, seed ^ 0xABCDu);
    rep.sde_yplus1 = sde.yM1_mean.mean + sde.y12_mean.mean;
    rep.sde_yplus2 = sde.y12_mean.mean;
    return rep;
}

struct SscSweepRow {
    int n = 0;
    std::vector<double> sups;  // one per replication
    double mean = 0.0, se = 0.0;
};

// Transient replications over an n-sweep: records the supremum of
// |Y_{[1,M-1],1}| over the sampling window [t0, horizon] from an empty
// start.
inline std::vector<SscSweepRow> ssc_sweep(const SystemConfig& base, const std::vector<int>& n_list,
                                          int replications, double horizon, double t0, double grid_dt,
                                          std::uint64_t seed, int threads) {
    std::vector<SscSweepRow> out(n_list.size());
    for (size_t i = 0; i < n_list.size(); ++i) {
        const SystemConfig cfg = config_for_n(base, n_list[i]);
        out[i].n = n_list[i];
        out[i].sups.resize(replications);
        std::vector<double> grid;
        for (double t = t0; t <= horizon + 1e-12; t += grid_dt) grid.push_back(t);
        parallel_for(replications, threads, [&, i](int rep) {
            const Trajectory tr = simulate_transient(cfg, PolicyKind::sa_jsq(), make_empty_state(cfg), horizon,
                                                     grid, seed, static_cast<std::uint64_t>(rep));
            out[i].sups[rep] = tr.sup_idle_fast;
        });
        const MeanSe ms = detail::across_reps(out[i].sups);
        out[i].mean = ms.mean;
        out[i].se = ms.se;
    }
    return out;
}

// CSV layouts used by the CLI (and round-trip tested).
inline CsvTable trajectory_csv(const Trajectory& tr, const SystemConfig& cfg) {
    CsvTable t;
    size_t depth = 0;
    for (const auto& s : tr.states) depth = std::max(depth, s.y.empty() ? 0 : s.y[0].size());
    t.header = {"t"};
    for (int j = 1; j <= cfg.M; ++j)
        for (size_t i = 1; i <= depth; ++i)
            t.header.push_back("Y" + std::to_string(j) + "_" + std::to_string(i));
    t.header.push_back("idle_fast");
    for (size_t k = 0; k < tr.sample_times.size(); ++k) {
        std::vector<std::string> row = {csv_double(tr.sample_times[k])};
        for (int j = 0; j < cfg.M; ++j) {
            for (size_t i = 0; i < depth; ++i) {
                const auto& yj = tr.states[k].y[j];
                row.push_back(csv_double(i < yj.size() ? yj[i] : 0.0));
            }
        }
        row.push_back(csv_double(tr.states[k].idle_fast));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline CsvTable stationary_csv(const StationaryEstimate& est) {
    CsvTable t;
    t.header = {"functional", "mean", "se", "batches"};
    for (const auto& f : est.functionals) {
        t.rows.push_back({f.name, csv_double(f.mean), csv_double(f.se), std::to_string(est.batches)});
    }
    return t;
}

inline StationaryEstimate stationary_from_csv(const CsvTable& t) {
    StationaryEstimate est;
    for (const auto& row : t.rows) {
        est.functionals.push_back({row[0], std::stod(row[1]), std::stod(row[2])});
        est.batches = std::stoi(row[3]);
    }
    return est;
}

inline CsvTable coupled_csv(const CoupledTrace& tr) {
    CsvTable t;
    t.header = {"t", "U", "event_kind", "Q1", "Qp2", "q1t", "q2t"};
    for (const auto& e : tr.events) {
        t.rows.push_back({csv_double(e.t), std::isnan(e.u) ? "" : csv_double(e.u), e.kind, std::to_string(e.Q1),
                          std::to_string(e.Qp2), std::to_string(e.q1t), std::to_string(e.q2t)});
    }
    return t;
}

inline CsvTable sde_csv(const DiffusionPath& path) {
    CsvTable t;
    const size_t tail_dim = path.tail.empty() ? 0 : path.tail[0].size();
    t.header = {"t", "yM1", "y12", "u1"};
    for (size_t i = 0; i < tail_dim; ++i) t.header.push_back("tail" + std::to_string(i + 1));
    for (size_t k = 0; k < path.t.size(); ++k) {
        std::vector<std::string> row = {csv_double(path.t[k]), csv_double(path.yM1[k]), csv_double(path.y12[k]),
                                        csv_double(path.u1[k])};
        for (double v : path.tail[k]) row.push_back(csv_double(v));
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline CsvTable ssc_csv(const std::vector<SscSweepRow>& rows) {
    CsvTable t;
    t.header = {"n", "rep", "sup_idle_fast", "mean", "se"};
    for (const auto& r : rows) {
        for (size_t rep = 0; rep < r.sups.size(); ++rep) {
            t.rows.push_back({std::to_string(r.n), std::to_string(rep), csv_double(r.sups[rep]), csv_double(r.mean),
                              csv_double(r.se)});
        }
    }
    return t;
}

}  // namespace sajsq
