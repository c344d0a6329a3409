#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "sajsq/state.hpp"

namespace sajsq {

inline constexpr double kInfTau = std::numeric_limits<double>::infinity();

// Parameters of the drift operator
//   L f = (-beta/sqrt(n) - muM x1 + mu1 x2) f_1 - mu1 x2 f_2
// on Omega = (-inf, 0] x [0, inf), together with the barrier parameter
// kappa of the target -(x2 - kappa/sqrt(n))_+.
struct LyapunovContext {
    int n;
    double beta, mu1, muM, kappa;
    double rn;  // sqrt(n)

    LyapunovContext(int n_, double beta_, double mu1_, double muM_, double kappa_)
        : n(n_), beta(beta_), mu1(mu1_), muM(muM_), kappa(kappa_), rn(std::sqrt(static_cast<double>(n_))) {
        if (n <= 0 || beta <= 0.0 || muM <= 0.0 || !(mu1 > muM)) {
            throw std::invalid_argument("lyapunov: need n>0, beta>0, mu1>muM>0");
        }
        if (!(kappa > beta / mu1)) throw std::invalid_argument("lyapunov: need kappa > beta/mu1");
    }
};

struct Point2 {
    double x1 = 0.0, x2 = 0.0;
};

// g_x(tau): value of the free (unreflected) first fluid coordinate after
// time tau when started from x.
inline double g_tau(const Point2& x, double tau, const LyapunovContext& c) {
    const double a = c.beta / (c.muM * c.rn);
    const double em = std::exp(-c.muM * tau);
    const double e1 = std::exp(-c.mu1 * tau);
    return -a + (x.x1 + a) * em - c.mu1 * x.x2 / (c.mu1 - c.muM) * (e1 - em);
}

namespace detail {

inline double g_tau_deriv(const Point2& x, double tau, double g, const LyapunovContext& c) {
    return -c.muM * g + c.mu1 * x.x2 * std::exp(-c.mu1 * tau) - c.beta / c.rn;
}

// Safeguarded Newton with a bisection fallback on a bracketing interval
// [lo, hi] with f(lo) <= 0 <= f(hi) (or the reverse).
template <typename F, typename FPrime>
double newton_bisect(F f, FPrime fp, double lo, double hi, double flo, double fhi, double tol) {
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double fx = f(x);
        if ((fx <= 0.0) == (flo <= 0.0)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
        const double dfx = fp(x, fx);
        double x_next = dfx != 0.0 ? x - fx / dfx : 0.5 * (lo + hi);
        if (!(x_next > lo && x_next < hi)) x_next = 0.5 * (lo + hi);
        if (std::abs(x_next - x) <= tol * (1.0 + std::abs(x_next))) return x_next;
        x = x_next;
    }
    return x;
}

}  // namespace detail

// The point (x1, x2*) on the curve Gamma^{kappa_curve}: the unique
// x2 >= kappa_curve/sqrt(n) whose fluid path hits the boundary exactly
// when the second coordinate has decayed to kappa_curve/sqrt(n).
// Substituting x2 = (kappa_curve/sqrt(n)) e^{mu1 tau} leaves a scalar
// root-find in tau over a monotone function.
inline double x2_star(double x1, double kappa_curve, const LyapunovContext& c) {
    if (x1 > 0.0) throw std::invalid_argument("x2_star: need x1 <= 0");
    if (!(kappa_curve >= c.beta / c.mu1)) throw std::invalid_argument("x2_star: need kappa_curve >= beta/mu1");
    const double kc = kappa_curve / c.rn;
    if (x1 == 0.0) return kc;
    const double a = c.beta / (c.muM * c.rn);
    auto h = [&](double tau) {
        return -a + (x1 + a) * std::exp(-c.muM * tau) +
               c.mu1 * kc / (c.mu1 - c.muM) * (std::exp((c.mu1 - c.muM) * tau) - 1.0);
    };
    auto hp = [&](double tau, double /*h*/) {
        return -c.muM * (x1 + a) * std::exp(-c.muM * tau) + c.mu1 * kc * std::exp((c.mu1 - c.muM) * tau);
    };
    double hi = 1.0;
    double fhi = h(hi);
    while (fhi < 0.0) {
        hi *= 2.0;
        if (hi > 512.0) throw std::runtime_error("x2_star: bracket growth failed");
        fhi = h(hi);
    }
    const double tau = detail::newton_bisect(h, hp, 0.0, hi, x1, fhi, 1e-15);
    return kc * std::exp(c.mu1 * tau);
}

// Smallest non-negative root of g_x, or infinity when the fluid path
// never reaches the boundary (x below Gamma^{beta/mu1}).  The smallest
// root is an upward crossing, hence no larger than the closed-form
// tau_c = log(mu1 x2 sqrt(n)/beta)/mu1 where g' changes sign.
inline double solve_tau(const Point2& x, const LyapunovContext& c) {
    if (x.x1 > 0.0 || x.x2 < 0.0) throw std::invalid_argument("solve_tau: x outside Omega");
    if (x.x2 < x2_star(x.x1, c.beta / c.mu1, c)) return kInfTau;
    if (x.x1 == 0.0) return 0.0;
    const double tau_c = std::log(c.mu1 * x.x2 * c.rn / c.beta) / c.mu1;
    auto f = [&](double t) { return g_tau(x, t, c); };
    auto fp = [&](double t, double g) { return detail::g_tau_deriv(x, t, g, c); };
    const double f_hi = f(tau_c);
    if (f_hi <= 0.0) return tau_c;  // tangency (x on Gamma^{beta/mu1}) up to rounding
    return detail::newton_bisect(f, fp, 0.0, tau_c, x.x1, f_hi, 1e-15);
}

enum class Region { omega1, omega2, omega3 };

struct RegionTag {
    Region region = Region::omega1;
    double tau = kInfTau;  // set for omega3
};

// Omega1: x2 <= kappa/sqrt(n).  Omega3: strictly above Gamma^kappa.
// Omega2: the band between them (closed on the curve).
inline RegionTag classify_region(const Point2& x, const LyapunovContext& c) {
    if (x.x1 > 0.0 || x.x2 < 0.0) throw std::invalid_argument("classify_region: x outside Omega");
    RegionTag tag;
    if (x.x2 <= c.kappa / c.rn) {
        tag.region = Region::omega1;
        return tag;
    }
    if (x.x2 > x2_star(x.x1, c.kappa, c)) {
        tag.region = Region::omega3;
        tag.tau = solve_tau(x, c);
        return tag;
    }
    tag.region = Region::omega2;
    return tag;
}

namespace detail {

// Shared sub-expressions of the Omega3 branch.
struct Omega3Terms {
    double tau, e1, em, w, denom, tau1, tau2, theta, theta2;
};

inline Omega3Terms omega3_terms(const Point2& x, double tau, const LyapunovContext& c) {
    Omega3Terms t;
    t.tau = tau;
    t.e1 = std::exp(-c.mu1 * tau);
    t.em = std::exp(-c.muM * tau);
    t.w = x.x2 * t.e1 - c.kappa / c.rn;                  // v2 overshoot at the boundary hit
    t.denom = c.mu1 * x.x2 * t.e1 - c.beta / c.rn;       // > 0 on Omega3
    t.tau1 = -t.em / t.denom;
    t.tau2 = c.mu1 / (c.mu1 - c.muM) * (t.e1 - t.em) / t.denom;
    t.theta = c.mu1 / (c.mu1 - c.muM) * (t.em - t.e1) + t.e1;
    t.theta2 = -c.mu1 * c.muM / (c.mu1 - c.muM) * (t.em - t.e1) * t.tau2;
    return t;
}

}  // namespace detail

// Piecewise value of the candidate solution of L f = -(x2-kappa/sqrt(n))_+.
inline double f_star(const Point2& x, const LyapunovContext& c) {
    const RegionTag tag = classify_region(x, c);
    const double k = c.kappa / c.rn;
    switch (tag.region) {
        case Region::omega1:
            return 0.0;
        case Region::omega2:
            return x.x2 / c.mu1 - k / c.mu1 - k / c.mu1 * std::log(x.x2 / k);
        case Region::omega3: {
            const auto t = detail::omega3_terms(x, tag.tau, c);
            return x.x2 / c.mu1 - x.x2 / c.mu1 * t.e1 - k * t.tau + c.rn / (2.0 * c.beta) * t.w * t.w;
        }
    }
    return 0.0;
}

// Analytic first derivatives (f1, f2) per branch.
inline std::pair<double, double> grad_f_star(const Point2& x, const LyapunovContext& c) {
    const RegionTag tag = classify_region(x, c);
    const double k = c.kappa / c.rn;
    switch (tag.region) {
        case Region::omega1:
            return {0.0, 0.0};
        case Region::omega2:
            return {0.0, 1.0 / c.mu1 - k / (c.mu1 * x.x2)};
        case Region::omega3: {
            const auto t = detail::omega3_terms(x, tag.tau, c);
            const double f1 = c.rn / c.beta * t.em * t.w;
            const double f2 = (1.0 - t.e1) / c.mu1 + t.w * c.rn / c.beta * t.theta;
            return {f1, f2};
        }
    }
    return {0.0, 0.0};
}

struct Hessian {
    double f11 = 0.0, f12 = 0.0, f22 = 0.0;
};

// Analytic second derivatives; meaningful away from the region
// boundaries (the first derivatives are absolutely continuous, the
// second ones jump across Gamma^kappa and x2 = kappa/sqrt(n)).
inline Hessian hess_f_star(const Point2& x, const LyapunovContext& c) {
    const RegionTag tag = classify_region(x, c);
    Hessian h;
    const double k = c.kappa / c.rn;
    switch (tag.region) {
        case Region::omega1:
            return h;
        case Region::omega2:
            h.f22 = k / (c.mu1 * x.x2 * x.x2);
            return h;
        case Region::omega3: {
            const auto t = detail::omega3_terms(x, tag.tau, c);
            const double lever = x.x2 * t.e1 - k * c.muM / (c.mu1 + c.muM);
            h.f11 = c.rn * (c.mu1 + c.muM) / c.beta * t.em * t.em / t.denom * lever;
            h.f12 = c.rn / c.beta * t.em * (t.e1 - (c.mu1 + c.muM) * t.tau2 * lever);
            h.f22 = t.e1 * (t.tau2 * (1.0 - c.rn / c.beta * c.mu1 * x.x2 * t.theta) + c.rn / c.beta * t.theta) +
                    c.rn / c.beta * t.w * t.theta2;
            return h;
        }
    }
    return h;
}

inline std::pair<double, double> hess_diag_f_star(const Point2& x, const LyapunovContext& c) {
    const Hessian h = hess_f_star(x, c);
    return {h.f11, h.f22};
}

// Bounds C5, C6 such that f11 <= C5 sqrt(n) and f22 <= C6 sqrt(n).
inline double c5_bound(const LyapunovContext& c) {
    return (c.mu1 + c.muM) / (c.beta * c.mu1) * c.kappa / (c.kappa - c.beta / c.mu1);
}
inline double c6_bound(const LyapunovContext& c) {
    const double r = c.mu1 / (c.mu1 - c.muM);
    return 1.0 / (c.mu1 * c.kappa) + r * r / c.beta * c.kappa / (c.kappa - c.beta / c.mu1) +
           c.mu1 * (1.0 + c.muM) / (c.beta * (c.mu1 - c.muM));
}

// The drift operator applied to supplied first derivatives.
inline double L_apply(const std::pair<double, double>& grads, const Point2& x, const LyapunovContext& c) {
    return (-c.beta / c.rn - c.muM * x.x1 + c.mu1 * x.x2) * grads.first - c.mu1 * x.x2 * grads.second;
}

// L f*(x) + (x2 - kappa/sqrt(n))_+ ; zero up to root-solver tolerance.
inline double pde_residual(const Point2& x, const LyapunovContext& c) {
    const double plus = std::max(x.x2 - c.kappa / c.rn, 0.0);
    return L_apply(grad_f_star(x, c), x, c) + plus;
}

// Deterministic drift trajectory v^x(t): exponential decay toward
// (-beta/(muM sqrt(n)), 0) until the boundary hit at tau(x), a boundary
// phase with v1 = 0 and v2 falling at rate beta/sqrt(n) down to
// beta/(mu1 sqrt(n)), then exponential decay again.
inline Point2 fluid_trajectory(const Point2& x, double t, const LyapunovContext& c) {
    if (x.x1 > 0.0 || x.x2 < 0.0) throw std::invalid_argument("fluid_trajectory: x outside Omega");
    if (t < 0.0) throw std::invalid_argument("fluid_trajectory: t >= 0 required");
    auto exp_phase = [&](const Point2& x0, double s) {
        Point2 v;
        const double a = c.beta / (c.muM * c.rn);
        const double em = std::exp(-c.muM * s);
        const double e1 = std::exp(-c.mu1 * s);
        v.x2 = x0.x2 * e1;
        v.x1 = -a + (x0.x1 + a) * em + c.mu1 * x0.x2 / (c.mu1 - c.muM) * (em - e1);
        return v;
    };
    const double tau = solve_tau(x, c);
    if (t < tau || tau == kInfTau) return exp_phase(x, t);
    const double v2_enter = x.x2 * std::exp(-c.mu1 * tau);
    const double floor2 = c.beta / (c.mu1 * c.rn);
    const double t_exit = tau + (v2_enter - floor2) * c.rn / c.beta;
    if (t < t_exit) return {0.0, v2_enter - c.beta / c.rn * (t - tau)};
    return exp_phase({0.0, floor2}, t - t_exit);
}

// V(q) = sum_{j<M} (N_j - q_{j,1}) and its generator value
// G V = -n lambda 1{V>0} + sum_{j<M} mu_j (q_{j,1} - q_{j,2}).
inline std::pair<double, double> drift_V(const OccupancyState& q, const SystemConfig& cfg) {
    double V = 0.0, flow = 0.0;
    for (int j = 0; j + 1 < cfg.M; ++j) {
        V += cfg.pool_sizes[j] - q.counts[j][0];
        flow += cfg.speeds[j] * (q.tail_count(j, 1) - q.tail_count(j, 2));
    }
    const double GV = (V > 0 ? -cfg.arrival_rate() : 0.0) + flow;
    return {V, GV};
}

}  // namespace sajsq
