#pragma once

#include <limits>
#include <string>
#include <vector>

#include "sajsq/policy.hpp"
#include "sajsq/stats.hpp"

namespace sajsq {

struct EventRecord {
    enum class Kind { arrival, departure };
    Kind kind = Kind::arrival;
    double time = 0.0;
    int pool = 0;
    // Arrival: queue length of the chosen server before the job joined.
    // Departure: queue length of the departing queue before service ended.
    int level = 0;
};

// Event-driven exact simulation of the occupancy CTMC.  Arrival epochs
// come from a dedicated Poisson stream (rate n*lambda, independent of the
// state), so two engines with the same seed see identical arrival paths
// regardless of policy; the departure clock is redrawn after every event,
// which is exact by memorylessness.
class CtmcEngine {
  public:
    CtmcEngine(SystemConfig cfg, PolicyKind kind, OccupancyState q0, std::uint64_t seed,
               std::uint64_t replication = 0)
        : cfg_(std::move(cfg)), kind_(kind), q_(std::move(q0)),
          arrivals_(RngStream::derive(seed, {replication, kStreamArrival})),
          departures_(RngStream::derive(seed, {replication, kStreamDeparture})),
          ties_(RngStream::derive(seed, {replication, kStreamTieBreak})) {
        check_monotone(q_, cfg_);
        initial_jobs_ = total_jobs(q_);
        next_arrival_ = q_.clock + arrivals_.exponential(cfg_.arrival_rate());
    }

    const OccupancyState& state() const { return q_; }
    const SystemConfig& config() const { return cfg_; }
    long long arrival_count() const { return arrival_count_; }
    long long departure_count() const { return departure_count_; }
    long long initial_jobs() const { return initial_jobs_; }

    double total_departure_rate() const {
        double r = 0.0;
        for (int j = 0; j < cfg_.M; ++j) r += cfg_.speeds[j] * q_.counts[j][0];
        return r;
    }

    // Time of the next event without committing it.
    double peek_time() {
        prepare();
        return pending_time_;
    }

    EventRecord step() {
        prepare();
        EventRecord rec;
        rec.time = pending_time_;
        q_.clock = pending_time_;
        if (pending_is_arrival_) {
            const RoutingDecision dec = select(kind_, q_, cfg_, ties_);
            apply_arrival(q_, dec.pool, dec.target_level);
            next_arrival_ += arrivals_.exponential(cfg_.arrival_rate());
            ++arrival_count_;
            rec.kind = EventRecord::Kind::arrival;
            rec.pool = dec.pool;
            rec.level = dec.target_level;
        } else {
            apply_departure(q_, pending_pool_, pending_level_);
            ++departure_count_;
            rec.kind = EventRecord::Kind::departure;
            rec.pool = pending_pool_;
            rec.level = pending_level_;
        }
        pending_ = false;
        check_monotone(q_, cfg_);
        if (initial_jobs_ + arrival_count_ - departure_count_ != total_jobs(q_)) {
            throw InvariantViolation("ctmc: job-count ledger out of balance");
        }
        return rec;
    }

  private:
    void prepare() {
        if (pending_) return;
        const double dep_rate = total_departure_rate();
        double t_dep = std::numeric_limits<double>::infinity();
        if (dep_rate > 0.0) t_dep = q_.clock + departures_.exponential(dep_rate);
        if (next_arrival_ <= t_dep) {
            pending_is_arrival_ = true;
            pending_time_ = next_arrival_;
        } else {
            pending_is_arrival_ = false;
            pending_time_ = t_dep;
            // Departure class (j, i) with probability proportional to
            // mu_j (Q_{j,i} - Q_{j,i+1}).
            double r = departures_.uniform() * dep_rate;
            pending_pool_ = -1;
            for (int j = 0; j < cfg_.M && pending_pool_ < 0; ++j) {
                for (int i = 1; i <= q_.depth(); ++i) {
                    const int m = q_.tail_count(j, i) - q_.tail_count(j, i + 1);
                    if (m == 0) continue;
                    const double w = cfg_.speeds[j] * m;
                    if (r < w) {
                        pending_pool_ = j;
                        pending_level_ = i;
                        break;
                    }
                    r -= w;
                }
            }
            if (pending_pool_ < 0) {  // fp edge: land on the last class
                for (int j = cfg_.M - 1; j >= 0 && pending_pool_ < 0; --j) {
                    for (int i = q_.depth(); i >= 1; --i) {
                        if (q_.tail_count(j, i) - q_.tail_count(j, i + 1) > 0) {
                            pending_pool_ = j;
                            pending_level_ = i;
                            break;
                        }
                    }
                }
            }
        }
        pending_ = true;
    }

    SystemConfig cfg_;
    PolicyKind kind_;
    OccupancyState q_;
    RngStream arrivals_, departures_, ties_;
    double next_arrival_ = 0.0;
    long long arrival_count_ = 0, departure_count_ = 0, initial_jobs_ = 0;
    bool pending_ = false;
    bool pending_is_arrival_ = false;
    double pending_time_ = 0.0;
    int pending_pool_ = 0, pending_level_ = 0;
};

struct Trajectory {
    std::vector<double> sample_times;
    std::vector<ScaledState> states;
    double sup_idle_fast = 0.0;  // sup over samples of |Y_{[1,M-1],1}|
    std::uint64_t seed = 0;
};

// Samples the scaled state on `grid` (state held constant between
// events); deterministic given the seed.
inline Trajectory simulate_transient(const SystemConfig& cfg, const PolicyKind& kind, const OccupancyState& q0,
                                     double horizon, const std::vector<double>& grid, std::uint64_t seed,
                                     std::uint64_t replication = 0) {
    CtmcEngine eng(cfg, kind, q0, seed, replication);
    Trajectory tr;
    tr.seed = seed;
    size_t gi = 0;
    auto record_until = [&](double t_next) {
        while (gi < grid.size() && grid[gi] < t_next) {
            ScaledState s = scale_state(eng.state(), cfg);
            tr.sup_idle_fast = std::max(tr.sup_idle_fast, std::abs(s.idle_fast));
            tr.sample_times.push_back(grid[gi]);
            tr.states.push_back(std::move(s));
            ++gi;
        }
    };
    while (gi < grid.size()) {
        const double t = eng.peek_time();
        record_until(std::min(t, std::nextafter(horizon, std::numeric_limits<double>::infinity())));
        if (t > horizon || gi >= grid.size()) break;
        eng.step();
    }
    record_until(std::numeric_limits<double>::infinity());
    return tr;
}

inline std::vector<std::string> stationary_functional_names(const SystemConfig& cfg) {
    std::vector<std::string> names;
    for (int j = 0; j < cfg.M; ++j) names.push_back("abs_Y" + std::to_string(j + 1) + "1");
    names.push_back("YM1");  // signed slow-pool idle component
    names.push_back("Y12");
    names.push_back("Yplus1");
    names.push_back("Yplus2");
    names.push_back("busy_rate");   // sum_k mu_k Q_{k,1}
    names.push_back("wait_prob");   // P(sum_k Q_{k,1} = n)
    names.push_back("tail2_rate");  // sum_{k>=2} mu_k Q_{k,2} + mu_1 Q_{1,3}
    names.push_back("sat_prob");    // P(sum_k Q_{k,1} = n, Q_{1,2} = N_1)
    return names;
}

inline void stationary_functional_values(const OccupancyState& q, const SystemConfig& cfg, long long jobs,
                                         std::vector<double>& out) {
    const double rn = cfg.sqrt_n();
    out.clear();
    int busy = 0;
    double busy_rate = 0.0;
    for (int j = 0; j < cfg.M; ++j) {
        out.push_back(std::abs(q.counts[j][0] - cfg.pool_sizes[j]) / rn);
        busy += q.counts[j][0];
        busy_rate += cfg.speeds[j] * q.counts[j][0];
    }
    out.push_back((q.counts[cfg.M - 1][0] - cfg.pool_sizes[cfg.M - 1]) / rn);  // YM1
    out.push_back(q.tail_count(0, 2) / rn);                                    // Y12
    out.push_back((static_cast<double>(jobs) - cfg.n) / rn);       // Yplus1
    out.push_back(static_cast<double>(jobs - busy) / rn);          // Yplus2
    out.push_back(busy_rate);
    out.push_back(busy == cfg.n ? 1.0 : 0.0);
    double t2 = cfg.speeds[0] * q.tail_count(0, 3);
    for (int k = 1; k < cfg.M; ++k) t2 += cfg.speeds[k] * q.tail_count(k, 2);
    out.push_back(t2);
    out.push_back((busy == cfg.n && q.tail_count(0, 2) == cfg.pool_sizes[0]) ? 1.0 : 0.0);
}

// Time-average estimators over [warmup, warmup + duration] from an empty
// start, with batch-means standard errors.
inline StationaryEstimate simulate_stationary(const SystemConfig& cfg, const PolicyKind& kind, double warmup,
                                              double duration, int n_batches, std::uint64_t seed,
                                              std::uint64_t replication = 0) {
    if (n_batches < 10) throw std::invalid_argument("simulate_stationary: need n_batches >= 10");
    CtmcEngine eng(cfg, kind, make_empty_state(cfg), seed, replication);
    BatchAccumulator acc(stationary_functional_names(cfg), duration, n_batches);
    const double t_end = warmup + duration;
    std::vector<double> vals;
    long long measured_arrivals = 0;
    while (true) {
        const double t_prev = eng.state().clock;
        const double t_next = std::min(eng.peek_time(), t_end);
        if (t_next > warmup) {
            const double a = std::max(t_prev, warmup) - warmup;
            const double b = t_next - warmup;
            stationary_functional_values(eng.state(), cfg, eng.initial_jobs() + eng.arrival_count() - eng.departure_count(), vals);
            acc.add(a, b - a, vals);
        }
        if (eng.peek_time() >= t_end) break;
        const EventRecord rec = eng.step();
        if (rec.time > warmup) {
            acc.count_event(rec.time - warmup);
            if (rec.kind == EventRecord::Kind::arrival) ++measured_arrivals;
        }
    }
    StationaryEstimate est;
    est.batches = n_batches;
    est.warmup = warmup;
    est.seed = seed;
    est.arrivals = measured_arrivals;
    const auto ms = acc.finalize();
    const auto names = stationary_functional_names(cfg);
    for (size_t i = 0; i < names.size(); ++i) est.functionals.push_back({names[i], ms[i].mean, ms[i].se});
    return est;
}

}  // namespace sajsq
