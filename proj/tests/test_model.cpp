#include <catch2/catch_amalgamated.hpp>

#include "sajsq/config.hpp"
#include "sajsq/rng.hpp"
#include "sajsq/state.hpp"

using namespace sajsq;

namespace {

SystemConfig fig1_config(int n) {
    SystemConfig raw;
    raw.n = n;
    raw.M = 2;
    raw.pool_sizes = {n / 5, 4 * n / 5};
    raw.speeds = {20.0 / 8.0, 5.0 / 8.0};
    raw.beta = 2.0;
    raw.gammas = std::vector<double>{1.0 / 5.0, 4.0 / 5.0};
    return raw;
}

}  // namespace

TEST_CASE("validate_config accepts the two-pool reference setup") {
    const SystemConfig cfg = validate_config(fig1_config(700));
    REQUIRE(cfg.lambda == Catch::Approx(1.0 - 2.0 / std::sqrt(700.0)).epsilon(1e-15));
    double cap = 0.0;
    for (int j = 0; j < cfg.M; ++j) cap += cfg.speeds[j] * (*cfg.gammas)[j];
    REQUIRE(cap == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("validate_config rejects non-decreasing speeds") {
    SystemConfig raw = fig1_config(700);
    raw.speeds = {1.0, 1.0};
    raw.gammas.reset();
    try {
        validate_config(raw);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.kind == ConfigErrorKind::non_decreasing_speeds);
    }
}

TEST_CASE("validate_config rejects pool-sum mismatch") {
    SystemConfig raw;
    raw.n = 10;
    raw.M = 2;
    raw.pool_sizes = {4, 5};
    raw.speeds = {2.0, 1.0};
    raw.beta = 1.0;
    try {
        validate_config(raw);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.kind == ConfigErrorKind::pool_sum_mismatch);
    }
}

TEST_CASE("validate_config rejects unnormalized capacity when gammas given") {
    SystemConfig raw = fig1_config(700);
    (*raw.gammas)[0] = 0.25;
    try {
        validate_config(raw);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.kind == ConfigErrorKind::capacity_not_normalized);
    }
}

TEST_CASE("validate_config rejects lambda outside (0,1)") {
    SystemConfig raw = fig1_config(700);
    raw.lambda = 1.5;
    try {
        validate_config(raw);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.kind == ConfigErrorKind::lambda_out_of_range);
    }
}

TEST_CASE("scale_state maps counts to the diffusion scale") {
    SystemConfig raw;
    raw.n = 100;
    raw.M = 2;
    raw.pool_sizes = {20, 80};
    raw.speeds = {2.5, 0.625};
    raw.beta = 2.0;
    const SystemConfig cfg = validate_config(raw);

    OccupancyState q = make_empty_state(cfg);
    q.counts[0][0] = 15;
    const ScaledState s = scale_state(q, cfg);
    REQUIRE(s.y[0][0] == Catch::Approx(-0.5).margin(1e-15));

    SECTION("fully busy, no backlog: all zero") {
        OccupancyState full = make_empty_state(cfg);
        full.counts[0][0] = 20;
        full.counts[1][0] = 80;
        const ScaledState sf = scale_state(full, cfg);
        for (const auto& row : sf.y)
            for (double v : row) REQUIRE(v == 0.0);
        REQUIRE(sf.y_plus1 == 0.0);
        REQUIRE(sf.y_plus2 == 0.0);
        REQUIRE(aggregate_idle_fast(sf) == 0.0);
    }

    SECTION("second-level counts scale by sqrt(n)") {
        OccupancyState q2 = make_empty_state(cfg);
        q2.counts[0][0] = 20;
        q2.counts[0][1] = 7;
        const ScaledState s2 = scale_state(q2, cfg);
        REQUIRE(s2.y[0][1] == Catch::Approx(0.7).margin(1e-15));
        REQUIRE(s2.y_plus2 == Catch::Approx(0.7).margin(1e-15));
    }
}

TEST_CASE("aggregate_idle_fast sums the fast-pool components") {
    SystemConfig raw;
    raw.n = 100;
    raw.M = 3;
    raw.pool_sizes = {20, 30, 50};
    raw.speeds = {3.0, 2.0, 1.0};
    raw.beta = 2.0;
    const SystemConfig cfg = validate_config(raw);
    OccupancyState q = make_empty_state(cfg);
    q.counts[0][0] = 19;  // y = -0.1
    q.counts[1][0] = 28;  // y = -0.2
    q.counts[2][0] = 50;
    const ScaledState s = scale_state(q, cfg);
    REQUIRE(aggregate_idle_fast(s) == Catch::Approx(-0.3).margin(1e-12));
    REQUIRE(s.idle_fast == Catch::Approx((19 - 20 + 28 - 30) / 10.0).margin(1e-15));
}

TEST_CASE("scale_state then unscale_state is the identity on integer grids") {
    SystemConfig raw;
    raw.n = 49;
    raw.M = 2;
    raw.pool_sizes = {14, 35};
    raw.speeds = {2.0, 0.5};
    raw.beta = 1.0;
    const SystemConfig cfg = validate_config(raw);
    RngStream rng(7);
    for (int rep = 0; rep < 200; ++rep) {
        OccupancyState q = make_empty_state(cfg, 5);
        for (int j = 0; j < cfg.M; ++j) {
            int upper = cfg.pool_sizes[j];
            for (int k = 0; k < q.depth(); ++k) {
                upper = static_cast<int>(rng.uniform_int(upper + 1));
                q.counts[j][k] = upper;
            }
        }
        const OccupancyState back = unscale_state(scale_state(q, cfg), cfg);
        REQUIRE(back.counts == q.counts);
        // Exactness of the idle-fast aggregate.
        const ScaledState s = scale_state(q, cfg);
        double expect = 0.0;
        for (int j = 0; j + 1 < cfg.M; ++j) expect += q.counts[j][0] - cfg.pool_sizes[j];
        REQUIRE(aggregate_idle_fast(s) == expect / cfg.sqrt_n());
    }
}

TEST_CASE("tail depth grows when the deepest level fills") {
    SystemConfig raw;
    raw.n = 2;
    raw.M = 2;
    raw.pool_sizes = {1, 1};
    raw.speeds = {2.0, 1.0};
    raw.beta = 0.5;
    const SystemConfig cfg = validate_config(raw);
    OccupancyState q = make_empty_state(cfg);
    REQUIRE(q.depth() == 4);
    for (int len = 0; len < 4; ++len) apply_arrival(q, 0, len);
    REQUIRE(q.depth() == 8);
    check_monotone(q, cfg);
    REQUIRE(total_jobs(q) == 4);
}

TEST_CASE("config file round-trips through the flat key=value format") {
    const char* path = "test_config_roundtrip.conf";
    {
        std::ofstream out(path);
        out << "# reference two-pool setup\n";
        out << "n = 700\nm = 2\npool_sizes = 140, 560\n";
        out << "speeds = 2.5, 0.625\nbeta = 2\ngammas = 0.2, 0.8\nseed = 42\n";
    }
    const FileConfig fc = load_config_file(path);
    REQUIRE(fc.seed == 42);
    REQUIRE(fc.cfg.n == 700);
    REQUIRE(fc.cfg.pool_sizes == std::vector<int>{140, 560});
    REQUIRE(fc.cfg.lambda == Catch::Approx(1.0 - 2.0 / std::sqrt(700.0)));
    std::remove(path);
}

TEST_CASE("config_for_n keeps pool fractions and re-derives lambda") {
    const SystemConfig base = validate_config(fig1_config(700));
    const SystemConfig c100 = config_for_n(base, 100);
    REQUIRE(c100.pool_sizes == std::vector<int>{20, 80});
    REQUIRE(c100.lambda == Catch::Approx(1.0 - 2.0 / 10.0));
}
