// Command-line front end: transient/stationary simulation, the
// free-server coupling, the limit-process integrator, the drift-function
// checker, and multi-policy comparisons.  All outputs are flat CSV.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "sajsq/exact.hpp"
#include "sajsq/experiment.hpp"
#include "sajsq/lyapunov.hpp"

namespace fs = std::filesystem;
using namespace sajsq;

namespace {

OccupancyState load_occupancy(const std::string& path, const SystemConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigErrorKind::malformed, "cannot open initial occupancy file " + path);
    OccupancyState q = make_empty_state(cfg);
    std::string line;
    int j = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (j >= cfg.M) throw ConfigError(ConfigErrorKind::malformed, "occupancy file has more rows than pools");
        std::stringstream ss(line);
        int v, k = 0;
        while (ss >> v) {
            while (k >= q.depth()) {
                for (auto& row : q.counts) row.resize(2 * row.size(), 0);
            }
            q.counts[j][k++] = v;
        }
        ++j;
    }
    check_monotone(q, cfg);
    return q;
}

std::vector<double> make_grid(double from, double to, double dt) {
    std::vector<double> g;
    for (double t = from; t <= to + 1e-12; t += dt) g.push_back(t);
    return g;
}

std::string out_path(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    return (fs::path(dir) / name).string();
}

void print_stationary(const StationaryEstimate& est) {
    for (const auto& f : est.functionals) {
        std::cout << "  " << f.name << " = " << f.mean << " (se " << f.se << ")\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous many-server load-balancing simulator and limit-process toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may appear after the verb

    std::string config_path, out_dir = "out", policy_str = "sa-jsq", init_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int reps = 1, threads = 1;
    app.add_option("--config", config_path, "flat key=value system configuration file");
    app.add_option("--seed", seed, "base seed (overrides the config file)")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--reps", reps, "number of replications");
    app.add_option("--threads", threads, "worker threads for replications");

    auto* cmd_transient = app.add_subcommand("simulate-transient", "sample a scaled trajectory on a time grid");
    double horizon = 10.0, grid_dt = 0.01;
    cmd_transient->add_option("--policy", policy_str, "sa-jsq|jsq|pod:<d>|jiq");
    cmd_transient->add_option("--horizon", horizon, "simulation horizon");
    cmd_transient->add_option("--grid-dt", grid_dt, "sampling grid spacing");
    cmd_transient->add_option("--init", init_path, "initial occupancy file (rows = pools, columns = tail counts)");

    auto* cmd_stationary = app.add_subcommand("simulate-stationary", "time-average stationary estimates");
    double warmup = -1.0, duration = 2000.0;
    int batches = 20;
    cmd_stationary->add_option("--policy", policy_str, "sa-jsq|jsq|pod:<d>|jiq");
    cmd_stationary->add_option("--warmup", warmup, "warmup time (default duration/4)");
    cmd_stationary->add_option("--duration", duration, "measured duration");
    cmd_stationary->add_option("--batches", batches, "batch count for standard errors");

    auto* cmd_sde = app.add_subcommand("sde", "integrate the two-dimensional reflected limit process");
    double sde_h = 5e-3, sde_horizon = 10.0, sigma = std::sqrt(2.0), y0_m1 = 0.0, y0_12 = 0.0;
    cmd_sde->add_option("--step", sde_h, "step size");
    cmd_sde->add_option("--horizon", sde_horizon, "integration horizon");
    cmd_sde->add_option("--sigma", sigma, "noise coefficient (0 = fluid mode)");
    cmd_sde->add_option("--y0-m1", y0_m1, "initial slow-pool idle component (<= 0)");
    cmd_sde->add_option("--y0-12", y0_12, "initial fast-pool backlog component (>= 0)");

    auto* cmd_couple = app.add_subcommand("couple", "coupled run against the free-server lower-bound system");
    double couple_horizon = 100.0;
    cmd_couple->add_option("--policy", policy_str, "sa-jsq|jsq|pod:<d>|jiq");
    cmd_couple->add_option("--horizon", couple_horizon, "coupling horizon");
    cmd_couple->add_option("--init", init_path, "initial occupancy file (queues of depth <= 2)");

    auto* cmd_lyap = app.add_subcommand("lyapunov-check", "drift-function identities on a random grid");
    int grid_points = 10000;
    double kappa = 1.0;
    cmd_lyap->add_option("--grid", grid_points, "number of sample points in [-5,0] x [0,5]");
    cmd_lyap->add_option("--kappa", kappa, "barrier parameter (> beta/mu1)");

    auto* cmd_compare = app.add_subcommand("compare-policies", "stationary ordering across policies");
    std::string policies_str = "sa-jsq,jsq,pod:2";
    cmd_compare->add_option("--policies", policies_str, "comma-separated policy list");
    cmd_compare->add_option("--warmup", warmup, "warmup time (default duration/4)");
    cmd_compare->add_option("--duration", duration, "measured duration per replication");
    cmd_compare->add_option("--batches", batches, "batch count");

    auto* cmd_ssc = app.add_subcommand("ssc-sweep", "sup |Y_{[1,M-1],1}| over a sweep of system sizes");
    std::string n_list_str = "100,300,700";
    double t0 = 1.0;
    cmd_ssc->add_option("--n-list", n_list_str, "comma-separated system sizes");
    cmd_ssc->add_option("--horizon", horizon, "transient horizon");
    cmd_ssc->add_option("--t0", t0, "start of the supremum window");
    cmd_ssc->add_option("--grid-dt", grid_dt, "sampling grid spacing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        FileConfig fc;
        if (!config_path.empty()) {
            fc = load_config_file(config_path);
        } else if (!cmd_sde->parsed()) {
            std::cerr << "error: --config is required\n";
            return 2;
        }
        if (seed_set) fc.seed = seed;
        const SystemConfig& cfg = fc.cfg;
        if (warmup < 0.0) warmup = duration / 4.0;

        if (cmd_transient->parsed()) {
            const PolicyKind kind = PolicyKind::parse(policy_str);
            const OccupancyState q0 = init_path.empty() ? make_empty_state(cfg) : load_occupancy(init_path, cfg);
            const auto grid = make_grid(0.0, horizon, grid_dt);
            parallel_for(reps, threads, [&](int rep) {
                const Trajectory tr =
                    simulate_transient(cfg, kind, q0, horizon, grid, fc.seed, static_cast<std::uint64_t>(rep));
                write_csv(out_path(out_dir, "transient_rep" + std::to_string(rep) + ".csv"),
                          trajectory_csv(tr, cfg));
            });
            std::cout << "wrote " << reps << " trajectory file(s) under " << out_dir << "\n";
        } else if (cmd_stationary->parsed()) {
            const PolicyKind kind = PolicyKind::parse(policy_str);
            std::vector<StationaryEstimate> ests(reps);
            parallel_for(reps, threads, [&](int rep) {
                ests[rep] =
                    simulate_stationary(cfg, kind, warmup, duration, batches, fc.seed, static_cast<std::uint64_t>(rep));
                write_csv(out_path(out_dir, "stationary_rep" + std::to_string(rep) + ".csv"),
                          stationary_csv(ests[rep]));
            });
            std::cout << "policy " << kind.name() << ", replication 0:\n";
            print_stationary(ests[0]);
            const RateConservationReport rc = rate_conservation_check(ests[0], cfg);
            std::cout << "rate conservation: |E[sum mu_k Q_k1] - n lambda| = " << rc.residual
                      << (rc.within_3se ? " (within 3 se)" : " (OUTSIDE 3 se)") << "\n";
        } else if (cmd_sde->parsed()) {
            DiffusionParams p;
            if (!config_path.empty()) {
                p.beta = cfg.sqrt_n() * (1.0 - cfg.lambda);
                p.mu1 = cfg.speeds.front();
                p.muM = cfg.speeds.back();
            }
            p.sigma = sigma;
            p.h = sde_h;
            p.horizon = sde_horizon;
            const DiffusionPath path = integrate_limit_sde(p, y0_m1, y0_12, {}, fc.seed);
            write_csv(out_path(out_dir, "sde_path.csv"), sde_csv(path));
            std::cout << "wrote " << path.t.size() << " grid points to " << out_dir << "/sde_path.csv\n";
        } else if (cmd_couple->parsed()) {
            const PolicyKind kind = PolicyKind::parse(policy_str);
            const OccupancyState q0 = init_path.empty() ? make_empty_state(cfg) : load_occupancy(init_path, cfg);
            const CoupledTrace tr = coupled_run(cfg, kind, couple_horizon, fc.seed, &q0);
            write_csv(out_path(out_dir, "coupled_events.csv"), coupled_csv(tr));
            std::cout << tr.events.size() << " events, " << tr.lost_potential
                      << " lost potential departures, no ordering violations\n";
        } else if (cmd_lyap->parsed()) {
            const LyapunovContext ctx(cfg.n, cfg.sqrt_n() * (1.0 - cfg.lambda), cfg.speeds.front(),
                                      cfg.speeds.back(), kappa);
            RngStream rng = RngStream::derive(fc.seed, {kStreamTieBreak});
            CsvTable t;
            t.header = {"x1", "x2", "region", "tau", "f", "f1", "f2", "f11", "f22", "residual"};
            double max_residual = 0.0;
            long long sign_violations = 0, bound_violations = 0;
            for (int i = 0; i < grid_points; ++i) {
                const Point2 x{-5.0 * rng.uniform(), 5.0 * rng.uniform()};
                const RegionTag tag = classify_region(x, ctx);
                const auto [f1, f2] = grad_f_star(x, ctx);
                const Hessian h = hess_f_star(x, ctx);
                const double res = pde_residual(x, ctx);
                max_residual = std::max(max_residual, std::abs(res));
                if (f1 < -1e-10 || h.f11 < -1e-10 || h.f12 < -1e-10 || h.f22 < -1e-10) ++sign_violations;
                if (h.f11 > c5_bound(ctx) * ctx.rn + 1e-9 || h.f22 > c6_bound(ctx) * ctx.rn + 1e-9)
                    ++bound_violations;
                t.rows.push_back({csv_double(x.x1), csv_double(x.x2),
                                  tag.region == Region::omega1 ? "1" : (tag.region == Region::omega2 ? "2" : "3"),
                                  csv_double(tag.tau), csv_double(f_star(x, ctx)), csv_double(f1), csv_double(f2),
                                  csv_double(h.f11), csv_double(h.f22), csv_double(res)});
            }
            write_csv(out_path(out_dir, "lyapunov_check.csv"), t);
            std::cout << "max |residual| = " << max_residual << ", sign violations = " << sign_violations
                      << ", bound violations = " << bound_violations << "\n";
            if (max_residual > 1e-8 || sign_violations > 0 || bound_violations > 0) {
                throw InvariantViolation("lyapunov-check failed");
            }
        } else if (cmd_compare->parsed()) {
            std::vector<PolicyKind> pols;
            std::stringstream ss(policies_str);
            std::string item;
            while (std::getline(ss, item, ',')) pols.push_back(PolicyKind::parse(item));
            const ComparisonReport rep =
                compare_policies(cfg, pols, reps, warmup, duration, batches, fc.seed, threads);
            write_csv(out_path(out_dir, "comparison.csv"), rep.to_csv());
            std::cout << "policy            E[Y+1]        se        E[Y+2]        se\n";
            for (const auto& r : rep.rows) {
                std::cout << "  " << r.policy
                          << std::string(std::max<int>(1, 16 - static_cast<int>(r.policy.size())), ' ')
                          << r.yplus1_mean << "  " << r.yplus1_se << "  " << r.yplus2_mean << "  " << r.yplus2_se
                          << "\n";
            }
            std::cout << "sde reference: E[Y+1] = " << rep.sde_yplus1 << ", E[Y+2] = " << rep.sde_yplus2 << "\n";
        } else if (cmd_ssc->parsed()) {
            std::vector<int> n_list;
            std::stringstream ss(n_list_str);
            std::string item;
            while (std::getline(ss, item, ',')) n_list.push_back(std::stoi(item));
            const auto rows = ssc_sweep(cfg, n_list, reps, horizon, t0, grid_dt, fc.seed, threads);
            write_csv(out_path(out_dir, "ssc_sweep.csv"), ssc_csv(rows));
            for (const auto& r : rows) {
                std::cout << "n = " << r.n << ": mean sup |Y_[1,M-1],1| = " << r.mean << " (se " << r.se << ")\n";
            }
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
