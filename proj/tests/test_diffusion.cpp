#include <catch2/catch_amalgamated.hpp>

#include "sajsq/diffusion.hpp"
#include "sajsq/lyapunov.hpp"

using namespace sajsq;

TEST_CASE("skorokhod map on the three reference paths") {
    SECTION("zero path, zero barrier") {
        const std::vector<double> x(5, 0.0);
        const auto [phi, psi] = skorokhod_reflect(x, 0.0);
        for (double v : phi) REQUIRE(v == 0.0);
        for (double v : psi) REQUIRE(v == 0.0);
    }
    SECTION("linear ramp against barrier 1") {
        std::vector<double> x;
        for (int k = 0; k <= 20; ++k) x.push_back(0.1 * k);
        const auto [phi, psi] = skorokhod_reflect(x, 1.0);
        for (size_t k = 0; k < x.size(); ++k) {
            REQUIRE(psi[k] == std::max(x[k] - 1.0, 0.0));
            REQUIRE(phi[k] == std::min(x[k], 1.0));
        }
    }
    SECTION("zig-zag path, barrier 1.5") {
        const std::vector<double> x = {0.0, 2.0, 1.0, 3.0};
        const auto [phi, psi] = skorokhod_reflect(x, 1.5);
        REQUIRE(psi == std::vector<double>{0.0, 0.5, 0.5, 1.5});
        REQUIRE(phi == std::vector<double>{0.0, 1.5, 0.5, 1.5});
    }
    SECTION("infinite barrier is the identity") {
        const std::vector<double> x = {0.4, -2.0, 7.0};
        const auto [phi, psi] = skorokhod_reflect(x, std::numeric_limits<double>::infinity());
        REQUIRE(phi == x);
        for (double v : psi) REQUIRE(v == 0.0);
    }
}

TEST_CASE("skorokhod map invariants and Lipschitz bound on random paths") {
    RngStream rng(2718);
    for (int rep = 0; rep < 1000; ++rep) {
        const size_t len = 2 + rng.uniform_int(40);
        std::vector<double> x(len), xp(len);
        double acc = 0.0, accp = 0.0;
        for (size_t k = 0; k < len; ++k) {
            acc += rng.normal();
            accp = acc + 0.3 * rng.normal();
            x[k] = acc;
            xp[k] = accp;
        }
        const double kap = rng.uniform() * 2.0;
        const double kap2 = kap + (rng.uniform() - 0.5);
        const auto [phi, psi] = skorokhod_reflect(x, kap);
        const auto [phip, psip] = skorokhod_reflect(xp, std::abs(kap2));
        REQUIRE(psi[0] == std::max(x[0] - kap, 0.0));
        double sup_diff = 0.0, sup_x = 0.0;
        bool psi_moved = false;
        for (size_t k = 0; k < len; ++k) {
            REQUIRE(phi[k] <= kap + 1e-12);
            if (k > 0) REQUIRE(psi[k] >= psi[k - 1]);
            if (k > 0 && psi[k] > psi[k - 1]) psi_moved = true;
            if (!psi_moved && psi[k] == 0.0) REQUIRE(phi[k] == x[k]);
            sup_diff = std::max(sup_diff, std::abs(psi[k] - psip[k]));
            sup_x = std::max(sup_x, std::abs(x[k] - xp[k]));
        }
        REQUIRE(sup_diff <= sup_x + std::abs(kap - std::abs(kap2)) + 1e-12);
    }
}

TEST_CASE("noise-free integrator from the origin follows the linear ODE below the boundary") {
    DiffusionParams p;
    p.sigma = 0.0;
    p.h = 1e-4;
    p.horizon = 2.0;
    const DiffusionPath path = integrate_limit_sde(p, 0.0, 0.0, {}, 1);
    for (size_t k = 0; k < path.t.size(); ++k) {
        const double want = -(p.beta / p.muM) * (1.0 - std::exp(-p.muM * path.t[k]));
        REQUIRE(path.yM1[k] == Catch::Approx(want).margin(5e-4));
        REQUIRE(path.u1[k] == 0.0);
        REQUIRE(path.yM1[k] <= 0.0);
    }
}

TEST_CASE("noise-free integrator matches the closed-form drift trajectory") {
    DiffusionParams p;
    p.sigma = 0.0;
    p.horizon = 3.0;
    const LyapunovContext ctx(400, p.beta, p.mu1, p.muM, p.beta / p.mu1 + 0.5);
    const double rn = ctx.rn;
    // Start above Gamma^{beta/mu1} so the path hits the boundary.
    const Point2 x0{-0.2 / rn, 8.0 / rn};
    double prev_err = std::numeric_limits<double>::infinity();
    for (const double h : {2e-3, 1e-3, 5e-4}) {
        p.h = h;
        const DiffusionPath path = integrate_limit_sde(p, x0.x1 * rn, x0.x2 * rn, {}, 7);
        double err = 0.0;
        for (size_t k = 0; k < path.t.size(); ++k) {
            const Point2 v = fluid_trajectory(x0, path.t[k], ctx);
            err = std::max(err, std::abs(path.yM1[k] - v.x1 * rn));
            err = std::max(err, std::abs(path.y12[k] - v.x2 * rn));
        }
        REQUIRE(err < 60.0 * h);  // O(h) sup-norm agreement
        REQUIRE(err < prev_err);
        prev_err = err;
    }
}

TEST_CASE("zero-noise steps conserve d(yM1+y12) = -beta - muM yM1 exactly") {
    DiffusionParams p;
    p.sigma = 0.0;
    p.h = 1e-3;
    p.horizon = 0.5;
    const DiffusionPath path = integrate_limit_sde(p, -1.0, 0.5, {}, 1);
    for (size_t k = 1; k < path.t.size(); ++k) {
        if (path.u1[k] > path.u1[k - 1]) continue;  // boundary step transfers mass
        const double lhs = path.yM1[k] + path.y12[k] - path.yM1[k - 1] - path.y12[k - 1];
        const double rhs = p.h * (-p.beta - p.muM * path.yM1[k - 1]);
        REQUIRE(lhs == Catch::Approx(rhs).margin(1e-12));
    }
}

TEST_CASE("same seed reproduces the same noisy path") {
    DiffusionParams p;
    p.h = 1e-3;
    p.horizon = 1.0;
    const DiffusionPath a = integrate_limit_sde(p, -0.5, 0.1, {}, 42);
    const DiffusionPath b = integrate_limit_sde(p, -0.5, 0.1, {}, 42);
    REQUIRE(a.yM1 == b.yM1);
    REQUIRE(a.y12 == b.y12);
    REQUIRE(a.u1 == b.u1);
}

TEST_CASE("regulator increments only when the boundary is active") {
    DiffusionParams p;
    p.h = 1e-3;
    p.horizon = 5.0;
    p.beta = 0.5;  // low drift: frequent boundary visits
    const DiffusionPath path = integrate_limit_sde(p, 0.0, 0.0, {}, 11);
    bool hit = false;
    for (size_t k = 1; k < path.t.size(); ++k) {
        REQUIRE(path.u1[k] >= path.u1[k - 1]);
        REQUIRE(path.yM1[k] <= 0.0);
        REQUIRE(path.y12[k] >= 0.0);
        if (path.u1[k] > path.u1[k - 1]) {
            REQUIRE(path.yM1[k] == 0.0);
            hit = true;
        }
    }
    REQUIRE(hit);
}

TEST_CASE("tail blocks decay and feed the fast coordinate") {
    DiffusionParams p;
    p.sigma = 0.0;
    p.h = 1e-4;
    p.horizon = 1.0;
    std::vector<TailPool> tails;
    tails.push_back({p.mu1, 3, {0.3}});        // pool-1 third-level mass
    tails.push_back({p.muM, 2, {0.2, 0.1}});   // slow-pool second- and third-level mass
    const DiffusionPath path = integrate_limit_sde(p, -1.0, 0.4, tails, 3);
    const auto& last = path.tail.back();
    // Tail ODE solutions, checked against the independent cascade solver.
    const auto t1 = ode_tail({0.3}, p.mu1, 1.0);
    const auto t2 = ode_tail({0.2, 0.1}, p.muM, 1.0);
    REQUIRE(last[0] == Catch::Approx(t1[0]).margin(1e-4));
    REQUIRE(last[1] == Catch::Approx(t2[0]).margin(1e-4));
    REQUIRE(last[2] == Catch::Approx(t2[1]).margin(1e-4));
}

TEST_CASE("ode_tail reference solutions") {
    SECTION("zero tail stays zero") {
        const auto y = ode_tail({0.0, 0.0, 0.0}, 1.7, 2.5);
        for (double v : y) REQUIRE(v == 0.0);
    }
    SECTION("single top level decays exponentially") {
        const auto y = ode_tail({0.0, 0.0, 0.8}, 1.3, 0.9);
        REQUIRE(y[2] == Catch::Approx(0.8 * std::exp(-1.3 * 0.9)).margin(1e-9));
    }
    SECTION("matches the shift-operator series") {
        // y_i(t) = e^{-mu t} sum_k (mu t)^k / k! y_{i+k}(0)
        const std::vector<double> y0 = {0.5, 0.2};
        const double mu = 2.0, t = 0.35;
        const auto y = ode_tail(y0, mu, t);
        auto series = [&](size_t i) {
            double acc = 0.0, term = 1.0;
            for (size_t k = 0; i + k < y0.size(); ++k) {
                acc += term * y0[i + k];
                term *= mu * t / (k + 1);
            }
            return std::exp(-mu * t) * acc;
        };
        REQUIRE(y[0] == Catch::Approx(series(0)).margin(1e-10));
        REQUIRE(y[1] == Catch::Approx(series(1)).margin(1e-10));
    }
}

TEST_CASE("oversized steps on a steep tail raise StepTooLarge") {
    DiffusionParams p;
    p.sigma = 0.0;
    p.h = 2.5;  // way beyond 1/mu1
    p.horizon = 5.0;
    std::vector<TailPool> tails = {{p.mu1, 3, {0.5}}};
    REQUIRE_THROWS_AS(integrate_limit_sde(p, -1.0, 0.2, tails, 1), StepTooLarge);
}

TEST_CASE("step-halving with shared increments contracts the sup distance") {
    DiffusionParams p;
    p.horizon = 2.0;
    const int fine_steps = 4096;
    const double h_fine = p.horizon / fine_steps;
    RngStream noise(31);
    std::vector<double> dw(fine_steps);
    for (auto& z : dw) z = std::sqrt(h_fine) * noise.normal();
    // Integrates at step h = r * h_fine using summed fine increments.
    auto run = [&](int r) {
        detail::SdeState s{0.0, 0.0, 0.0, {}};
        DiffusionParams q = p;
        q.h = r * h_fine;
        std::vector<double> ys;
        for (int k = 0; k < fine_steps; k += r) {
            double z = 0.0;
            for (int i = 0; i < r; ++i) z += dw[k + i];
            detail::sde_step(s, q, {}, q.sigma * z);
            ys.push_back(s.yM1);
        }
        return ys;
    };
    const auto y1 = run(1), y2 = run(2), y4 = run(4);
    auto supd = [&](const std::vector<double>& a, const std::vector<double>& b, int r) {
        double d = 0.0;
        for (size_t k = 0; k < b.size(); ++k) d = std::max(d, std::abs(a[(k + 1) * r - 1] - b[k]));
        return d;
    };
    const double d4 = supd(y1, y4, 4);
    const double d2 = supd(y1, y2, 2);
    REQUIRE(d2 < d4);  // refinement brings the coarse path closer
    REQUIRE(d2 < 0.2);
}

TEST_CASE("stationary moments of the noise-free process sit at the fluid fixed point") {
    DiffusionParams p;
    p.sigma = 0.0;
    p.h = 1e-3;
    const SdeStationary st = sde_stationary_estimate(p, 30.0, 20.0, 1);
    REQUIRE(st.yM1_mean.mean == Catch::Approx(-p.beta / p.muM).margin(1e-6));
    REQUIRE(st.y12_mean.mean == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("large beta keeps the waiting coordinate near zero") {
    DiffusionParams p;
    p.beta = 8.0;
    p.h = 2e-3;
    const SdeStationary st = sde_stationary_estimate(p, 20.0, 200.0, 5);
    REQUIRE(st.y12_mean.mean < 1e-3);
}

TEST_CASE("stationary moments are stable under step halving") {
    DiffusionParams p;
    p.h = 1e-2;
    const SdeStationary a = sde_stationary_estimate(p, 50.0, 2000.0, 17);
    p.h = 5e-3;
    const SdeStationary b = sde_stationary_estimate(p, 50.0, 2000.0, 23);
    const double se = std::sqrt(a.yM1_mean.se * a.yM1_mean.se + b.yM1_mean.se * b.yM1_mean.se);
    REQUIRE(std::abs(a.yM1_mean.mean - b.yM1_mean.mean) <= 3 * se);
    const double se2 = std::sqrt(a.y12_mean.se * a.y12_mean.se + b.y12_mean.se * b.y12_mean.se);
    REQUIRE(std::abs(a.y12_mean.mean - b.y12_mean.mean) <= 3 * se2);
}
