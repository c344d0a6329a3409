#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sajsq/rng.hpp"
#include "sajsq/stats.hpp"

namespace sajsq {

struct StepTooLarge : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One-sided reflection map with upper barrier kappa:
//   psi(t) = sup_{s<=t} (x(s) - kappa)^+,  phi = x - psi <= kappa.
// kappa = +inf returns (x, 0).
inline std::pair<std::vector<double>, std::vector<double>> skorokhod_reflect(std::span<const double> path,
                                                                             double kappa) {
    std::vector<double> phi(path.size()), psi(path.size());
    if (std::isinf(kappa)) {
        std::copy(path.begin(), path.end(), phi.begin());
        return {std::move(phi), std::move(psi)};
    }
    double run_max = 0.0;
    for (size_t k = 0; k < path.size(); ++k) {
        run_max = std::max(run_max, path[k] - kappa);
        psi[k] = std::max(run_max, 0.0);
        phi[k] = path[k] - psi[k];
    }
    return {std::move(phi), std::move(psi)};
}

struct DiffusionParams {
    double beta = 2.0;
    double mu1 = 2.5;
    double muM = 0.625;
    double sigma = 1.4142135623730951;  // sqrt(2)
    double h = 1e-3;
    double horizon = 1.0;
};

inline void validate_params(const DiffusionParams& p) {
    if (!(p.h > 0.0) || p.horizon < 0.0 || !(p.mu1 > p.muM) || p.muM <= 0.0 || p.beta <= 0.0 || p.sigma < 0.0) {
        throw std::invalid_argument("diffusion: need h>0, horizon>=0, mu1>muM>0, beta>0, sigma>=0");
    }
}

// Tail block for one pool: components y_{j,i} from start_level upward,
// evolving as y' = -mu (y_i - y_{i+1}) with zero beyond the deepest
// entry.  The pool-1 continuation (start_level 3, mu = mu1) feeds the
// y_{1,3} term of the y12 equation; start_level-2 blocks feed the yM1
// drift through mu * y[0].
struct TailPool {
    double mu = 1.0;
    int start_level = 2;
    std::vector<double> y0;
};

struct DiffusionPath {
    std::vector<double> t, yM1, y12, u1;
    std::vector<std::vector<double>> tail;  // one flattened row per grid point
};

namespace detail {

struct SdeState {
    double yM1, y12, u1;
    std::vector<std::vector<double>> tails;
};

// One Euler-Maruyama step with project-and-transfer reflection: any
// excess of yM1 above 0 moves to u1 and y12.
inline void sde_step(SdeState& s, const DiffusionParams& p, const std::vector<TailPool>& spec, double noise) {
    double y13 = 0.0;
    double tail_drift = 0.0;
    for (size_t k = 0; k < spec.size(); ++k) {
        if (spec[k].start_level == 3) {
            if (!s.tails[k].empty()) y13 = s.tails[k][0];
        } else if (!s.tails[k].empty()) {
            tail_drift += spec[k].mu * s.tails[k][0];
        }
    }
    const double d1 = -p.beta - p.muM * s.yM1 + p.mu1 * s.y12 + tail_drift;
    const double d2 = -p.mu1 * (s.y12 - y13);
    s.yM1 += p.h * d1 + noise;
    s.y12 += p.h * d2;
    for (size_t k = 0; k < spec.size(); ++k) {
        auto& v = s.tails[k];
        const double mu = spec[k].mu;
        for (size_t i = 0; i < v.size(); ++i) {
            const double next = (i + 1 < v.size()) ? v[i + 1] : 0.0;
            v[i] += p.h * (-mu * (v[i] - next));
        }
        for (double x : v) {
            if (x < -1e-9) throw StepTooLarge("tail component went negative; reduce h");
        }
    }
    if (s.y12 < -1e-9) throw StepTooLarge("y12 went negative; reduce h");
    if (s.yM1 > 0.0) {
        const double excess = s.yM1;
        s.yM1 = 0.0;
        s.u1 += excess;
        s.y12 += excess;
    }
}

}  // namespace detail

// Euler-Maruyama integration of the limiting system: noise sigma*sqrt(h)Z
// on the first coordinate only; the regulator pushes mass from yM1 into
// y12 whenever the boundary is crossed.
inline DiffusionPath integrate_limit_sde(const DiffusionParams& p, double yM1_0, double y12_0,
                                         const std::vector<TailPool>& tails, std::uint64_t seed) {
    validate_params(p);
    if (yM1_0 > 0.0 || y12_0 < 0.0) throw std::invalid_argument("integrate_limit_sde: need yM1<=0, y12>=0");
    int pool1_blocks = 0;
    for (const auto& tp : tails) {
        if (tp.start_level != 2 && tp.start_level != 3) throw std::invalid_argument("tail start_level must be 2 or 3");
        if (tp.start_level == 3 && ++pool1_blocks > 1) throw std::invalid_argument("at most one start_level-3 block");
        for (double v : tp.y0)
            if (v < 0.0) throw std::invalid_argument("tail components must be non-negative");
    }
    RngStream noise = RngStream::derive(seed, {kStreamNoise});
    detail::SdeState s{yM1_0, y12_0, 0.0, {}};
    for (const auto& tp : tails) s.tails.push_back(tp.y0);
    const int steps = static_cast<int>(std::ceil(p.horizon / p.h - 1e-12));
    DiffusionPath path;
    path.t.reserve(steps + 1);
    auto record = [&](double t) {
        path.t.push_back(t);
        path.yM1.push_back(s.yM1);
        path.y12.push_back(s.y12);
        path.u1.push_back(s.u1);
        std::vector<double> flat;
        for (const auto& v : s.tails) flat.insert(flat.end(), v.begin(), v.end());
        path.tail.push_back(std::move(flat));
    };
    record(0.0);
    for (int k = 1; k <= steps; ++k) {
        const double z = p.sigma > 0.0 ? p.sigma * std::sqrt(p.h) * noise.normal() : 0.0;
        detail::sde_step(s, p, tails, z);
        record(k * p.h);
    }
    return path;
}

// Values at time t of the linear cascade y'_i = -mu (y_i - y_{i+1}),
// truncated at the deepest entry of y0.  Classic RK4 at a step chosen
// from mu*t.
inline std::vector<double> ode_tail(const std::vector<double>& y0, double mu, double t) {
    for (double v : y0)
        if (v < 0.0) throw std::invalid_argument("ode_tail: tail must be non-negative");
    std::vector<double> y = y0;
    if (y.empty() || t <= 0.0) return y;
    const int steps = std::max(200, static_cast<int>(std::ceil(200.0 * mu * t)));
    const double h = t / steps;
    std::vector<double> k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), tmp(y.size());
    auto deriv = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (size_t i = 0; i < v.size(); ++i) {
            const double next = (i + 1 < v.size()) ? v[i + 1] : 0.0;
            out[i] = -mu * (v[i] - next);
        }
    };
    for (int s = 0; s < steps; ++s) {
        deriv(y, k1);
        for (size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        deriv(tmp, k2);
        for (size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        deriv(tmp, k3);
        for (size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + h * k3[i];
        deriv(tmp, k4);
        for (size_t i = 0; i < y.size(); ++i) y[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    return y;
}

struct SdeStationary {
    MeanSe yM1_mean, y12_mean;
    double yM1_var = 0.0, y12_var = 0.0;
    int batches = 0;
    // Optional thinned samples for distribution comparisons.
    std::vector<double> yM1_samples, y12_samples;
};

// Long-run time averages of the two-dimensional reflected OU process
// over [burn, burn + duration], batch-means standard errors; when
// sample_stride > 0 every stride-th post-burn state is also collected.
inline SdeStationary sde_stationary_estimate(const DiffusionParams& p, double burn, double duration,
                                             std::uint64_t seed, int n_batches = 20, int sample_stride = 0) {
    validate_params(p);
    RngStream noise = RngStream::derive(seed, {kStreamNoise});
    detail::SdeState s{0.0, 0.0, 0.0, {}};
    const std::vector<TailPool> no_tail;
    const long long burn_steps = static_cast<long long>(std::ceil(burn / p.h));
    const long long run_steps = static_cast<long long>(std::ceil(duration / p.h));
    BatchAccumulator acc({"yM1", "y12", "yM1sq", "y12sq"}, run_steps * p.h, n_batches);
    SdeStationary out;
    out.batches = n_batches;
    std::vector<double> vals(4);
    for (long long k = 0; k < burn_steps + run_steps; ++k) {
        const double z = p.sigma > 0.0 ? p.sigma * std::sqrt(p.h) * noise.normal() : 0.0;
        detail::sde_step(s, p, no_tail, z);
        if (k >= burn_steps) {
            const double t = (k - burn_steps) * p.h;
            vals[0] = s.yM1;
            vals[1] = s.y12;
            vals[2] = s.yM1 * s.yM1;
            vals[3] = s.y12 * s.y12;
            acc.add(t, p.h, vals);
            acc.count_event(t);
            if (sample_stride > 0 && (k - burn_steps) % sample_stride == 0) {
                out.yM1_samples.push_back(s.yM1);
                out.y12_samples.push_back(s.y12);
            }
        }
    }
    const auto ms = acc.finalize();
    out.yM1_mean = ms[0];
    out.y12_mean = ms[1];
    out.yM1_var = ms[2].mean - ms[0].mean * ms[0].mean;
    out.y12_var = ms[3].mean - ms[1].mean * ms[1].mean;
    return out;
}

}  // namespace sajsq
