#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sajsq {

// Parameterization of one system instance: n servers split into M pools
// with strictly decreasing speeds, arrivals at rate n*lambda.
struct SystemConfig {
    int n = 0;
    int M = 0;
    std::vector<int> pool_sizes;   // N_j, sums to n
    std::vector<double> speeds;    // mu_j, strictly decreasing
    double beta = 0.0;
    double lambda = 0.0;           // <= 0 means "default to 1 - beta/sqrt(n)"
    std::optional<std::vector<double>> gammas;

    double sqrt_n() const { return std::sqrt(static_cast<double>(n)); }
    double arrival_rate() const { return static_cast<double>(n) * lambda; }
    // sum_j mu_j N_j, the potential service capacity.
    double total_service_rate() const {
        double r = 0.0;
        for (int j = 0; j < M; ++j) r += speeds[j] * pool_sizes[j];
        return r;
    }
};

enum class ConfigErrorKind {
    non_decreasing_speeds,
    pool_sum_mismatch,
    capacity_not_normalized,
    lambda_out_of_range,
    malformed,
};

struct ConfigError : std::runtime_error {
    ConfigError(ConfigErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    ConfigErrorKind kind;
};

// Normalizes and checks a raw config.  lambda defaults to the canonical
// Halfin-Whitt sequence 1 - beta/sqrt(n) when unset (<= 0).
inline SystemConfig validate_config(SystemConfig raw) {
    if (raw.n <= 0 || raw.M <= 0 || static_cast<int>(raw.pool_sizes.size()) != raw.M ||
        static_cast<int>(raw.speeds.size()) != raw.M || raw.beta <= 0.0) {
        throw ConfigError(ConfigErrorKind::malformed, "config: need n>0, M>0, M pool sizes, M speeds, beta>0");
    }
    long long sum = 0;
    for (int nj : raw.pool_sizes) {
        if (nj <= 0) throw ConfigError(ConfigErrorKind::malformed, "config: pool sizes must be positive");
        sum += nj;
    }
    if (sum != raw.n) {
        throw ConfigError(ConfigErrorKind::pool_sum_mismatch,
                          "config: pool sizes sum to " + std::to_string(sum) + ", expected n=" + std::to_string(raw.n));
    }
    for (int j = 0; j < raw.M; ++j) {
        if (raw.speeds[j] <= 0.0 || (j > 0 && raw.speeds[j] >= raw.speeds[j - 1])) {
            throw ConfigError(ConfigErrorKind::non_decreasing_speeds,
                              "config: speeds must be positive and strictly decreasing");
        }
    }
    if (raw.gammas) {
        if (static_cast<int>(raw.gammas->size()) != raw.M) {
            throw ConfigError(ConfigErrorKind::malformed, "config: gammas must have M entries");
        }
        double cap = 0.0;
        for (int j = 0; j < raw.M; ++j) {
            if ((*raw.gammas)[j] <= 0.0) throw ConfigError(ConfigErrorKind::malformed, "config: gammas must be positive");
            cap += raw.speeds[j] * (*raw.gammas)[j];
        }
        if (std::abs(cap - 1.0) > 1e-9) {
            throw ConfigError(ConfigErrorKind::capacity_not_normalized,
                              "config: sum_j mu_j gamma_j = " + std::to_string(cap) + ", expected 1");
        }
    }
    if (raw.lambda <= 0.0) raw.lambda = 1.0 - raw.beta / raw.sqrt_n();
    if (!(raw.lambda > 0.0 && raw.lambda < 1.0)) {
        throw ConfigError(ConfigErrorKind::lambda_out_of_range,
                          "config: lambda = " + std::to_string(raw.lambda) + " outside (0,1)");
    }
    return raw;
}

// Rebuilds the config at a different n keeping the pool fractions:
// N_j = round(gamma_j * n) with a largest-remainder fix so they sum to n.
// Uses explicit gammas when present, otherwise the current N_j/n.
inline SystemConfig config_for_n(const SystemConfig& base, int n) {
    SystemConfig cfg = base;
    cfg.n = n;
    cfg.lambda = 0.0;  // re-derive the canonical sequence at the new n
    std::vector<double> g(base.M);
    for (int j = 0; j < base.M; ++j) {
        g[j] = base.gammas ? (*base.gammas)[j]
                           : static_cast<double>(base.pool_sizes[j]) / static_cast<double>(base.n);
    }
    cfg.pool_sizes.assign(base.M, 0);
    std::vector<std::pair<double, int>> rem(base.M);
    int assigned = 0;
    for (int j = 0; j < base.M; ++j) {
        double exact = g[j] * n;
        cfg.pool_sizes[j] = static_cast<int>(std::floor(exact));
        rem[j] = {exact - std::floor(exact), j};
        assigned += cfg.pool_sizes[j];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int k = 0; assigned < n; ++k, ++assigned) cfg.pool_sizes[rem[k % base.M].second] += 1;
    for (int j = 0; j < base.M; ++j) {
        if (cfg.pool_sizes[j] == 0) cfg.pool_sizes[j] = 1;  // keep every pool non-empty
    }
    int fix = 0;
    for (int j = 0; j < base.M; ++j) fix += cfg.pool_sizes[j];
    cfg.pool_sizes[0] += n - fix;
    return validate_config(cfg);
}

// Flat key = value file; '#' starts a comment.  Keys: n, m, pool_sizes,
// speeds, beta, lambda, gammas, seed.  Lists are comma separated.
struct FileConfig {
    SystemConfig cfg;
    std::uint64_t seed = 1;
};

namespace detail {
inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(static_cast<T>(std::stod(item)));
    }
    return out;
}
}  // namespace detail

inline FileConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigErrorKind::malformed, "config: cannot open " + path);
    FileConfig fc;
    SystemConfig raw;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(ConfigErrorKind::malformed, "config: expected key = value: " + line);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        try {
            if (key == "n") raw.n = std::stoi(val);
            else if (key == "m") raw.M = std::stoi(val);
            else if (key == "pool_sizes") raw.pool_sizes = detail::parse_list<int>(val);
            else if (key == "speeds") raw.speeds = detail::parse_list<double>(val);
            else if (key == "beta") raw.beta = std::stod(val);
            else if (key == "lambda") raw.lambda = std::stod(val);
            else if (key == "gammas") raw.gammas = detail::parse_list<double>(val);
            else if (key == "seed") fc.seed = std::stoull(val);
            else throw ConfigError(ConfigErrorKind::malformed, "config: unknown key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(ConfigErrorKind::malformed, "config: bad value for '" + key + "': " + val);
        }
    }
    fc.cfg = validate_config(raw);
    return fc;
}

}  // namespace sajsq
