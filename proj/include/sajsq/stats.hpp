#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sajsq {

struct EmptySeries : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientBatches : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Piecewise-constant sample path: value[i] held for weight[i] time units.
struct TimeWeightedSeries {
    std::vector<double> values;
    std::vector<double> weights;

    void add(double v, double w) {
        values.push_back(v);
        weights.push_back(w);
    }
    double total_weight() const {
        double t = 0.0;
        for (double w : weights) t += w;
        return t;
    }
};

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

// Time-weighted batch means: the series is cut into n_batches equal-time
// batches (segments straddling a boundary are split pro rata) and the
// standard error is the sample deviation of the batch means.
inline MeanSe batch_means(const TimeWeightedSeries& s, int n_batches) {
    if (s.values.empty()) throw EmptySeries("batch_means: empty series");
    if (n_batches < 2) throw std::invalid_argument("batch_means: need n_batches >= 2");
    const double total = s.total_weight();
    if (total <= 0.0) throw EmptySeries("batch_means: zero total weight");
    const double bw = total / n_batches;
    std::vector<double> bsum(n_batches, 0.0), btime(n_batches, 0.0);
    double t = 0.0;
    for (size_t i = 0; i < s.values.size(); ++i) {
        double left = s.weights[i];
        while (left > 0.0) {
            int b = std::min(n_batches - 1, static_cast<int>(t / bw));
            const double room = (b + 1) * bw - t;
            const double take = std::min(left, std::max(room, 0.0));
            if (take <= 0.0) {  // boundary rounding; dump the rest in the last batch
                b = n_batches - 1;
                bsum[b] += s.values[i] * left;
                btime[b] += left;
                t += left;
                break;
            }
            bsum[b] += s.values[i] * take;
            btime[b] += take;
            t += take;
            left -= take;
        }
    }
    MeanSe out;
    double grand = 0.0;
    std::vector<double> bm(n_batches);
    for (int b = 0; b < n_batches; ++b) {
        bm[b] = btime[b] > 0 ? bsum[b] / btime[b] : 0.0;
        grand += bsum[b];
    }
    out.mean = grand / total;
    double var = 0.0;
    double mean_of_bm = 0.0;
    for (double v : bm) mean_of_bm += v;
    mean_of_bm /= n_batches;
    for (double v : bm) var += (v - mean_of_bm) * (v - mean_of_bm);
    var /= (n_batches - 1);
    out.se = std::sqrt(var / n_batches);
    return out;
}

// Streaming equal-time batch accumulator used by the simulators: one
// named functional per column, batches by elapsed accumulation time.
class BatchAccumulator {
  public:
    BatchAccumulator(std::vector<std::string> names, double duration, int n_batches)
        : names_(std::move(names)), duration_(duration), n_batches_(n_batches),
          sums_(names_.size() * n_batches, 0.0), times_(n_batches, 0.0), events_(n_batches, 0) {
        if (n_batches < 2) throw std::invalid_argument("accumulator: need n_batches >= 2");
    }

    // Adds a constant segment [t, t+w) with the given column values; t is
    // time since the start of the accumulation window.
    void add(double t, double w, const std::vector<double>& vals) {
        const double bw = duration_ / n_batches_;
        while (w > 0.0) {
            const int b = std::min(n_batches_ - 1, static_cast<int>(t / bw));
            double take = std::min(w, (b + 1) * bw - t);
            if (take <= 0.0) take = w;
            for (size_t c = 0; c < names_.size(); ++c) sums_[c * n_batches_ + b] += vals[c] * take;
            times_[b] += take;
            t += take;
            w -= take;
        }
    }

    void count_event(double t) {
        const double bw = duration_ / n_batches_;
        const int b = std::min(n_batches_ - 1, std::max(0, static_cast<int>(t / bw)));
        events_[b] += 1;
    }

    int batches() const { return n_batches_; }
    const std::vector<std::string>& names() const { return names_; }

    std::vector<MeanSe> finalize() const {
        for (int b = 0; b < n_batches_; ++b) {
            if (events_[b] == 0) {
                throw InsufficientBatches("batch " + std::to_string(b) + " saw no events");
            }
        }
        std::vector<MeanSe> out(names_.size());
        for (size_t c = 0; c < names_.size(); ++c) {
            double grand = 0.0, total = 0.0;
            std::vector<double> bm(n_batches_);
            for (int b = 0; b < n_batches_; ++b) {
                bm[b] = times_[b] > 0 ? sums_[c * n_batches_ + b] / times_[b] : 0.0;
                grand += sums_[c * n_batches_ + b];
                total += times_[b];
            }
            out[c].mean = total > 0 ? grand / total : 0.0;
            double m = 0.0;
            for (double v : bm) m += v;
            m /= n_batches_;
            double var = 0.0;
            for (double v : bm) var += (v - m) * (v - m);
            out[c].se = std::sqrt(var / (n_batches_ - 1) / n_batches_);
        }
        return out;
    }

    // Per-batch weighted sums for ratio statistics (e.g. blocked/total).
    std::vector<double> batch_sums(size_t col) const {
        std::vector<double> v(n_batches_);
        for (int b = 0; b < n_batches_; ++b) v[b] = sums_[col * n_batches_ + b];
        return v;
    }

  private:
    std::vector<std::string> names_;
    double duration_;
    int n_batches_;
    std::vector<double> sums_;
    std::vector<double> times_;
    std::vector<long long> events_;
};

// One named stationary functional with a batch-means standard error.
struct FunctionalEstimate {
    std::string name;
    double mean = 0.0;
    double se = 0.0;
};

struct StationaryEstimate {
    std::vector<FunctionalEstimate> functionals;
    int batches = 0;
    double warmup = 0.0;
    std::uint64_t seed = 0;
    long long arrivals = 0;  // total arrivals in the measured window

    const FunctionalEstimate& at(const std::string& name) const {
        for (const auto& f : functionals)
            if (f.name == name) return f;
        throw std::out_of_range("no functional named '" + name + "'");
    }
    bool has(const std::string& name) const {
        for (const auto& f : functionals)
            if (f.name == name) return true;
        return false;
    }
};

// Two-sample Kolmogorov-Smirnov sup-distance between empirical CDFs.
inline double ecdf_distance(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw EmptySeries("ecdf_distance: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        const double fa = static_cast<double>(i) / a.size();
        const double fb = static_cast<double>(j) / b.size();
        d = std::max(d, std::abs(fa - fb));
    }
    return d;
}

}  // namespace sajsq
