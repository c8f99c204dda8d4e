#pragma once

// Experiment configuration, energy-rate sweeps, metrics and CSV output.

#include "fjt/adp.hpp"
#include "fjt/baselines.hpp"
#include "fjt/channel.hpp"
#include "fjt/errors.hpp"
#include "fjt/mdp.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace fjt {

enum class Algorithm { dp, adp, greedy, conventional, fixed_bs };

inline std::string to_string(Algorithm a) {
    switch (a) {
    case Algorithm::dp: return "dp";
    case Algorithm::adp: return "adp";
    case Algorithm::greedy: return "greedy";
    case Algorithm::conventional: return "conventional";
    case Algorithm::fixed_bs: return "fixed_bs";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "dp") return Algorithm::dp;
    if (s == "adp") return Algorithm::adp;
    if (s == "greedy") return Algorithm::greedy;
    if (s == "conventional") return Algorithm::conventional;
    if (s == "fixed_bs") return Algorithm::fixed_bs;
    throw config_error("unknown algorithm '" + s + "' (expected dp, adp, greedy, conventional or fixed_bs)");
}

struct ExperimentConfig {
    ChannelModelParams channel;
    double e1 = 0.1;
    std::vector<double> e2_sweep{0.1};
    int battery_levels = 8;
    int channel_states = 4;
    int calibration_samples = 4000;
    int action_levels = 6;
    ActionScheme scheme = ActionScheme::battery_aligned;
    double delta_alpha = kDefaultDeltaAlpha;
    double rvi_tol = 1e-5;
    double tau = 0.9;
    double beta = 0.5;
    long lspe_samples = 5000;
    double lspe_eps = 1e-4;
    int n_iterations = 10;
    int n_explorations = 10;
    bool bias_feature = false;
    long n_frames = 10000;
    std::vector<std::uint64_t> seeds{1};
    std::vector<Algorithm> algorithms{Algorithm::dp};
    /// 0 = one worker per hardware thread
    int threads = 0;
    bool record_wall_time = false;
    std::string output = "results.csv";
    std::string trace;

    void validate() const {
        channel.validate();
        if (!(e1 >= 0.0)) throw config_error("field e1: must be >= 0");
        if (e2_sweep.empty()) throw config_error("field e2_sweep: must not be empty");
        for (double e : e2_sweep)
            if (!(e >= 0.0) || !std::isfinite(e)) throw config_error("field e2_sweep: values must be finite and >= 0");
        if (battery_levels < 1) throw config_error("field battery_levels: must be >= 1");
        if (channel_states < 1) throw config_error("field channel_states: must be >= 1");
        if (calibration_samples < channel_states)
            throw config_error("field calibration_samples: must be >= channel_states");
        if (action_levels < 2) throw config_error("field action_levels: must be >= 2");
        if (!(delta_alpha > 0.0 && delta_alpha < 0.5)) throw config_error("field delta_alpha: must lie in (0, 0.5)");
        if (!(rvi_tol > 0.0)) throw config_error("field rvi_tol: must be > 0");
        if (!(tau > 0.0 && tau < 1.0)) throw config_error("field tau: must lie in (0, 1)");
        if (!(beta >= 0.0 && beta < 1.0)) throw config_error("field beta: must lie in [0, 1)");
        if (lspe_samples < kFeatureCount + 1) throw config_error("field lspe_samples: must be >= 15");
        if (!(lspe_eps > 0.0)) throw config_error("field lspe_eps: must be > 0");
        if (n_iterations < 1) throw config_error("field n_iterations: must be >= 1");
        if (n_explorations < 1) throw config_error("field n_explorations: must be >= 1");
        if (n_frames < 1) throw config_error("field n_frames: must be >= 1");
        if (seeds.empty()) throw config_error("field seeds: must not be empty");
        if (algorithms.empty()) throw config_error("field algorithms: must not be empty");
        if (threads < 0) throw config_error("field threads: must be >= 0");
    }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
T parse_value(const std::string& field, const std::string& text) {
    std::istringstream is(text);
    T v{};
    is >> v;
    if (is.fail() || !(is >> std::ws).eof()) throw config_error("field " + field + ": cannot parse '" + text + "'");
    return v;
}

template <>
inline bool parse_value<bool>(const std::string& field, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw config_error("field " + field + ": expected true or false, got '" + text + "'");
}

} // namespace detail

/// Applies one key = value setting. Keys are the flat names used in the
/// config file; a section prefix such as "channel." is accepted and ignored.
inline void apply_setting(ExperimentConfig& cfg, std::string key, const std::string& value) {
    if (auto dot = key.rfind('.'); dot != std::string::npos) key = key.substr(dot + 1);
    using detail::parse_value;
    auto num = [&](auto& dst) { dst = parse_value<std::remove_reference_t<decltype(dst)>>(key, value); };
    auto& ch = cfg.channel;
    if (key == "distance_km") {
        const auto parts = detail::split_list(value);
        if (parts.size() != 1 && parts.size() != 4)
            throw config_error("field distance_km: expected 1 or 4 values (d00, d01, d10, d11)");
        for (int j = 0; j < 4; ++j)
            ch.distance_km[j / 2][j % 2] = parse_value<double>(key, parts[parts.size() == 1 ? 0 : j]);
    } else if (key == "shadowing_std_db") num(ch.shadowing_std_db);
    else if (key == "common_shadowing") num(ch.common_shadowing);
    else if (key == "edge_snr_db") num(ch.edge_snr_db);
    else if (key == "snr_average") {
        if (value == "linear") ch.snr_average_db = false;
        else if (value == "db") ch.snr_average_db = true;
        else throw config_error("field snr_average: expected linear or db");
    }
    else if (key == "ref_tx_power_dbm") num(ch.ref_tx_power_dbm);
    else if (key == "edge_distance_km") num(ch.edge_distance_km);
    else if (key == "noise_variance") num(ch.noise_variance);
    else if (key == "frame_length") num(ch.frame_length);
    else if (key == "e1") num(cfg.e1);
    else if (key == "e2_sweep") {
        cfg.e2_sweep.clear();
        for (const auto& p : detail::split_list(value)) cfg.e2_sweep.push_back(parse_value<double>(key, p));
    } else if (key == "battery_levels") num(cfg.battery_levels);
    else if (key == "channel_states") num(cfg.channel_states);
    else if (key == "calibration_samples") num(cfg.calibration_samples);
    else if (key == "action_levels") num(cfg.action_levels);
    else if (key == "action_scheme") {
        if (value == "battery_aligned") cfg.scheme = ActionScheme::battery_aligned;
        else if (value == "uniform_fraction") cfg.scheme = ActionScheme::uniform_fraction;
        else throw config_error("field action_scheme: expected battery_aligned or uniform_fraction");
    } else if (key == "delta_alpha") num(cfg.delta_alpha);
    else if (key == "rvi_tol") num(cfg.rvi_tol);
    else if (key == "tau") num(cfg.tau);
    else if (key == "beta") num(cfg.beta);
    else if (key == "lspe_samples") num(cfg.lspe_samples);
    else if (key == "lspe_eps") num(cfg.lspe_eps);
    else if (key == "n_iterations") num(cfg.n_iterations);
    else if (key == "n_explorations") num(cfg.n_explorations);
    else if (key == "bias_feature") num(cfg.bias_feature);
    else if (key == "n_frames") num(cfg.n_frames);
    else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& p : detail::split_list(value)) cfg.seeds.push_back(parse_value<std::uint64_t>(key, p));
    } else if (key == "algorithms") {
        cfg.algorithms.clear();
        for (const auto& p : detail::split_list(value)) cfg.algorithms.push_back(parse_algorithm(p));
    } else if (key == "threads") num(cfg.threads);
    else if (key == "record_wall_time") num(cfg.record_wall_time);
    else if (key == "output") cfg.output = value;
    else if (key == "trace") cfg.trace = value;
    else throw config_error("unknown field '" + key + "'");
}

/// Reads an INI-style key = value file. Errors name the line and field.
inline ExperimentConfig parse_config(std::istream& is, const std::string& name = "<config>") {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw config_error(name + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    // Line numbers for diagnostics: first line mentioning each key.
    is.clear();
    is.seekg(0);
    std::map<std::string, int> line_of;
    std::string line;
    for (int n = 1; std::getline(is, line); ++n) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string k = line.substr(0, eq);
        k.erase(0, k.find_first_not_of(" \t"));
        k.erase(k.find_last_not_of(" \t") + 1);
        line_of.emplace(k, n);
    }
    ExperimentConfig cfg;
    auto apply = [&](const std::string& key, const pt::ptree& node) {
        const std::string leaf = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
        try {
            apply_setting(cfg, key, node.data());
        } catch (const config_error& e) {
            const auto it = line_of.find(leaf);
            const std::string where = it == line_of.end() ? name : name + ":" + std::to_string(it->second);
            throw config_error(where + ": " + e.what());
        }
    };
    for (const auto& [k, v] : tree) {
        if (v.empty())
            apply(k, v);
        else
            for (const auto& [k2, v2] : v) apply(k + "." + k2, v2);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file '" + path + "'");
    return parse_config(f, path);
}

struct MetricsRecord {
    std::string algorithm;
    double e1 = 0.0;
    double e2 = 0.0;
    double avg_sum_rate = 0.0;
    double avg_alpha = 0.0;
    std::uint64_t seed = 0;
    long n_frames = 0;
    double wall_time = 0.0;
    /// two entries per frame, user 0 then user 1
    std::vector<double> user_rates;
};

struct TraceRow {
    std::string algorithm;
    std::uint64_t seed = 0;
    double e2 = 0.0;
    FrameRecord frame;
};

struct ExperimentOutput {
    std::vector<MetricsRecord> records;
    std::vector<TraceRow> trace;
};

inline MdpOptions mdp_options(const ExperimentConfig& cfg, double e2) {
    MdpOptions o;
    o.arrival = {cfg.e1, e2};
    o.noise = cfg.channel.noise_variance;
    o.frame_length = cfg.channel.frame_length;
    o.battery_levels = cfg.battery_levels;
    o.action_levels = cfg.action_levels;
    o.scheme = cfg.scheme;
    o.delta_alpha = cfg.delta_alpha;
    return o;
}

inline AdpOptions adp_options(const ExperimentConfig& cfg, std::uint64_t seed) {
    AdpOptions a;
    a.lspe.beta = cfg.beta;
    a.lspe.n_samples = cfg.lspe_samples;
    a.lspe.eps = cfg.lspe_eps;
    a.n_iterations = cfg.n_iterations;
    a.n_explorations = cfg.n_explorations;
    a.bias_feature = cfg.bias_feature;
    a.seed = seed;
    a.eval_frames = cfg.n_frames;
    a.eval_seed = detail::splitmix(seed ^ 0x5eedULL);
    return a;
}

/// Seed of the evaluation channel stream; shared by every algorithm so they
/// are compared on the same channel sequence.
inline std::uint64_t evaluation_seed(std::uint64_t seed) { return detail::splitmix(seed) ^ 0xe7a1ULL; }

namespace detail {

inline std::vector<MetricsRecord> run_unit(const ExperimentConfig& cfg, const ChannelGrid& grid, std::uint64_t seed,
                                           double e2, std::vector<TraceRow>* trace) {
    const MdpOptions base = mdp_options(cfg, e2);
    std::optional<DiscreteMdp> mdp;
    auto shared = [&]() -> const DiscreteMdp& {
        if (!mdp) mdp.emplace(grid, base);
        return *mdp;
    };
    McOptions mc;
    mc.n_frames = cfg.n_frames;
    mc.seed = evaluation_seed(seed);
    mc.keep_trace = trace != nullptr;
    std::vector<MetricsRecord> out;
    for (Algorithm algo : cfg.algorithms) {
        const auto t0 = std::chrono::steady_clock::now();
        McResult r;
        switch (algo) {
        case Algorithm::dp: {
            RviOptions ro;
            ro.tau = cfg.tau;
            ro.tol = cfg.rvi_tol;
            const auto sol = relative_value_iteration(shared(), ro);
            r = evaluate_policy_mc(shared(), sol.policy, mc);
            break;
        }
        case Algorithm::adp: {
            const auto sol = approximate_policy_iteration(shared(), adp_options(cfg, seed));
            r = evaluate_policy_mc(shared(), sol.policy, mc);
            break;
        }
        case Algorithm::greedy:
            r = evaluate_callback_mc(shared(), baseline_callback(BaselineKind::greedy, 0, cfg.delta_alpha), mc);
            break;
        case Algorithm::conventional:
            r = evaluate_callback_mc(shared(), baseline_callback(BaselineKind::conventional_zfjt), mc);
            break;
        case Algorithm::fixed_bs: {
            MdpOptions o = base;
            o.only_bs = e2 > cfg.e1 ? 1 : 0;
            const DiscreteMdp restricted(grid, o);
            RviOptions ro;
            ro.tau = cfg.tau;
            ro.tol = cfg.rvi_tol;
            const auto sol = relative_value_iteration(restricted, ro);
            r = evaluate_policy_mc(restricted, sol.policy, mc);
            break;
        }
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        MetricsRecord rec;
        rec.algorithm = to_string(algo);
        rec.e1 = cfg.e1;
        rec.e2 = e2;
        rec.avg_sum_rate = r.average_rate;
        rec.avg_alpha = r.average_alpha;
        rec.seed = seed;
        rec.n_frames = r.n_frames;
        rec.wall_time = cfg.record_wall_time ? secs : 0.0;
        rec.user_rates = std::move(r.user_rates);
        if (trace)
            for (const auto& f : r.trace) trace->push_back({rec.algorithm, seed, e2, f});
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace detail

/// Runs every (seed, E2, algorithm) combination. Units of work are (seed, E2)
/// pairs executed by a worker pool; records come back ordered by seed, then
/// E2, then algorithm as listed in the config, independent of scheduling.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<ChannelGrid> grids;
    for (std::uint64_t seed : cfg.seeds)
        grids.push_back(build_channel_grid(cfg.channel, cfg.channel_states, cfg.calibration_samples, seed));
    const std::size_t n_e2 = cfg.e2_sweep.size();
    const std::size_t n_units = cfg.seeds.size() * n_e2;
    const bool want_trace = !cfg.trace.empty();
    std::vector<std::vector<MetricsRecord>> results(n_units);
    std::vector<std::vector<TraceRow>> traces(n_units);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t u; (u = next.fetch_add(1)) < n_units;) {
            try {
                const std::size_t si = u / n_e2;
                results[u] = detail::run_unit(cfg, grids[si], cfg.seeds[si], cfg.e2_sweep[u % n_e2],
                                              want_trace ? &traces[u] : nullptr);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n_units;
            }
        }
    };
    unsigned n_threads = cfg.threads > 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, n_units));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    ExperimentOutput out;
    for (std::size_t u = 0; u < n_units; ++u) {
        for (auto& r : results[u]) out.records.push_back(std::move(r));
        for (auto& t : traces[u]) out.trace.push_back(std::move(t));
    }
    return out;
}

/// Empirical CDF evaluated on n_bins equally spaced rates from min to max.
inline std::vector<std::pair<double, double>> rate_cdf(std::vector<double> samples, int n_bins) {
    if (samples.empty()) throw domain_error("rate_cdf: no samples");
    if (n_bins < 1) throw domain_error("rate_cdf: n_bins must be >= 1");
    std::sort(samples.begin(), samples.end());
    const double lo = samples.front(), hi = samples.back();
    std::vector<std::pair<double, double>> out;
    for (int j = 0; j < n_bins; ++j) {
        const double x = n_bins == 1 || j == n_bins - 1 ? hi : lo + (hi - lo) * j / (n_bins - 1);
        const auto n = std::upper_bound(samples.begin(), samples.end(), x) - samples.begin();
        out.emplace_back(x, static_cast<double>(n) / samples.size());
    }
    return out;
}

/// Fraction of samples <= x.
inline double cdf_at(const std::vector<double>& samples, double x) {
    if (samples.empty()) throw domain_error("cdf_at: no samples");
    return static_cast<double>(std::count_if(samples.begin(), samples.end(), [x](double v) { return v <= x; })) /
           samples.size();
}

inline const char* kCsvHeader = "algorithm,E1_W,E2_W,avg_sum_rate_bps_hz,avg_alpha,seed,n_frames,wall_time_s";

inline void write_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
    os << kCsvHeader << '\n';
    std::ostringstream line;
    line.imbue(std::locale::classic());
    line << std::setprecision(6);
    for (const auto& r : records) {
        line.str("");
        line << r.algorithm << ',' << r.e1 << ',' << r.e2 << ',' << r.avg_sum_rate << ',' << r.avg_alpha << ','
             << r.seed << ',' << r.n_frames << ',' << r.wall_time << '\n';
        os << line.str();
    }
}

inline void write_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_csv: cannot open '" + path + "' for writing");
    write_csv(f, records);
    if (!f) throw std::runtime_error("write_csv: write to '" + path + "' failed");
}

inline std::vector<MetricsRecord> read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader) throw config_error("read_csv: missing or unexpected header");
    std::vector<MetricsRecord> out;
    for (int n = 2; std::getline(is, line); ++n) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string item; std::getline(ls, item, ',');) f.push_back(item);
        if (f.size() != 8) throw config_error("read_csv: line " + std::to_string(n) + " has " +
                                              std::to_string(f.size()) + " columns, expected 8");
        MetricsRecord r;
        r.algorithm = f[0];
        r.e1 = detail::parse_value<double>("E1_W", f[1]);
        r.e2 = detail::parse_value<double>("E2_W", f[2]);
        r.avg_sum_rate = detail::parse_value<double>("avg_sum_rate_bps_hz", f[3]);
        r.avg_alpha = detail::parse_value<double>("avg_alpha", f[4]);
        r.seed = detail::parse_value<std::uint64_t>("seed", f[5]);
        r.n_frames = detail::parse_value<long>("n_frames", f[6]);
        r.wall_time = detail::parse_value<double>("wall_time_s", f[7]);
        out.push_back(std::move(r));
    }
    return out;
}

/// Per-frame trace: one line per simulated frame.
inline void write_trace(std::ostream& os, const std::vector<TraceRow>& rows) {
    os << "algorithm,seed,E2_W,frame,k,alpha,p_tilde,p1,p2,B1,B2\n";
    os << std::setprecision(10);
    for (const auto& r : rows) {
        const auto& s = r.frame.solution;
        os << r.algorithm << ',' << r.seed << ',' << r.e2 << ',' << r.frame.frame << ',' << s.bs + 1 << ',' << s.alpha
           << ',' << s.p_tilde << ',' << s.power[0] << ',' << s.power[1] << ',' << r.frame.battery[0] << ','
           << r.frame.battery[1] << '\n';
    }
}

} // namespace fjt
