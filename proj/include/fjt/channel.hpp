#pragma once

// 2x2 block-fading channel between two base stations and two users.
//
// Gains are expressed relative to the configured noise variance: a transmit
// power P (Watts) on link (i, k) yields the received SNR P * |H(i,k)|^2 /
// noise_variance, and the large-scale factors are calibrated so that the mean
// SNR at the cell edge with the reference transmit power equals edge_snr_db.
// Averaging is over both small-scale fading and log-normal shadowing; the
// shadowing factor is normalised to unit mean in the linear domain.

#include "fjt/errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fjt {

using complex_gain = std::complex<double>;

/// Relative singularity threshold: |det H| <= kSingularTol * ||H||_F^2.
inline constexpr double kSingularTol = 1e-12;

struct ChannelMatrix {
    /// H(i, k): coefficient from BS k to user i.
    Eigen::Matrix2cd entries = Eigen::Matrix2cd::Identity();
    /// l(i, k): large-scale amplitude factor of link (i, k).
    Eigen::Matrix2d large_scale = Eigen::Matrix2d::Ones();

    complex_gain operator()(int user, int bs) const { return entries(user, bs); }
    double gain(int user, int bs) const { return std::norm(entries(user, bs)); }

    static ChannelMatrix from_entries(const Eigen::Matrix2cd& h) {
        ChannelMatrix m;
        m.entries = h;
        return m;
    }
};

inline bool is_singular(const Eigen::Matrix2cd& h) {
    const double scale = h.squaredNorm();
    const complex_gain det = h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0);
    return !(std::abs(det) > kSingularTol * scale) || !std::isfinite(scale);
}

struct ChannelModelParams {
    /// distance_km[i][k]: user i to BS k.
    std::array<std::array<double, 2>, 2> distance_km{{{0.05, 0.05}, {0.05, 0.05}}};
    double shadowing_std_db = 10.0;
    /// One shadowing draw shared by all four links instead of one per link.
    bool common_shadowing = false;
    /// edge_snr_db is the linear mean over shadowing and fading (false) or
    /// the fading mean with shadowing zero-mean in dB (true).
    bool snr_average_db = false;
    double edge_snr_db = 10.0;
    double ref_tx_power_dbm = 30.0;
    double edge_distance_km = 0.05;
    double noise_variance = 1.0;
    double frame_length = 1.0;

    void validate() const {
        for (const auto& row : distance_km)
            for (double d : row)
                if (!(d > 0.0)) throw domain_error("channel: distances must be positive");
        if (!(edge_distance_km > 0.0)) throw domain_error("channel: edge distance must be positive");
        if (!(shadowing_std_db >= 0.0)) throw domain_error("channel: shadowing std must be >= 0");
        if (!(frame_length > 0.0)) throw domain_error("channel: frame length must be positive");
        if (!(noise_variance > 0.0)) throw domain_error("channel: noise variance must be positive");
    }
};

/// 3GPP outdoor pico-cell pathloss, d in km.
inline double pathloss_db(double d_km) {
    if (!(d_km > 0.0)) throw domain_error("pathloss_db: distance must be positive");
    return 140.7 + 36.7 * std::log10(d_km);
}

/// Mean of 10^(X/10) for X ~ N(0, std_db^2).
inline double lognormal_mean(double std_db) {
    const double s = std_db * std::numbers::ln10 / 10.0;
    return std::exp(0.5 * s * s);
}

/// Draws the quasi-static large-scale amplitudes l(i, k).
inline Eigen::Matrix2d draw_large_scale(const ChannelModelParams& p, std::mt19937_64& rng) {
    std::normal_distribution<double> shadow(0.0, 1.0);
    const double base_db = p.edge_snr_db - (p.ref_tx_power_dbm - 30.0);
    const double shadow_norm = p.snr_average_db ? 1.0 : lognormal_mean(p.shadowing_std_db);
    const double edge_pl = pathloss_db(p.edge_distance_km);
    const double common_db = p.common_shadowing ? p.shadowing_std_db * shadow(rng) : 0.0;
    Eigen::Matrix2d l;
    for (int i = 0; i < 2; ++i) {
        for (int k = 0; k < 2; ++k) {
            const double x_db = p.common_shadowing ? common_db : p.shadowing_std_db * shadow(rng);
            const double gain_db = base_db - (pathloss_db(p.distance_km[i][k]) - edge_pl) + x_db;
            const double power = p.noise_variance * std::pow(10.0, gain_db / 10.0) / shadow_norm;
            l(i, k) = std::sqrt(power);
        }
    }
    return l;
}

/// Draws l .* Htilde with Htilde i.i.d. CN(0, 1); singular draws are redrawn.
inline ChannelMatrix draw_fading(const Eigen::Matrix2d& large_scale, std::mt19937_64& rng) {
    std::normal_distribution<double> component(0.0, std::sqrt(0.5));
    ChannelMatrix m;
    m.large_scale = large_scale;
    do {
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 2; ++k)
                m.entries(i, k) = large_scale(i, k) * complex_gain(component(rng), component(rng));
    } while (is_singular(m.entries));
    return m;
}

/// Channel process for one experiment: shadowing fixed at construction,
/// small-scale fading redrawn on every call to sample().
class ChannelModel {
public:
    ChannelModel(const ChannelModelParams& params, std::uint64_t seed) : params_(params) {
        params_.validate();
        std::mt19937_64 rng(seed);
        large_scale_ = draw_large_scale(params_, rng);
    }

    const ChannelModelParams& params() const { return params_; }
    const Eigen::Matrix2d& large_scale() const { return large_scale_; }

    ChannelMatrix sample(std::mt19937_64& rng) const { return draw_fading(large_scale_, rng); }

private:
    ChannelModelParams params_;
    Eigen::Matrix2d large_scale_;
};

/// One channel realisation (shadowing and fading) from a seed.
inline ChannelMatrix sample_channel(const ChannelModelParams& params, std::uint64_t seed) {
    params.validate();
    std::mt19937_64 rng(seed);
    const Eigen::Matrix2d l = draw_large_scale(params, rng);
    return draw_fading(l, rng);
}

namespace detail {

using point8 = Eigen::Matrix<double, 8, 1>;

inline point8 flatten(const Eigen::Matrix2cd& h) {
    point8 x;
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) {
            x(4 * i + 2 * k) = h(i, k).real();
            x(4 * i + 2 * k + 1) = h(i, k).imag();
        }
    return x;
}

inline Eigen::Matrix2cd unflatten(const point8& x) {
    Eigen::Matrix2cd h;
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) h(i, k) = complex_gain(x(4 * i + 2 * k), x(4 * i + 2 * k + 1));
    return h;
}

inline std::size_t nearest(const std::vector<point8>& centers, const point8& x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centers.size(); ++j) {
        const double d = (centers[j] - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

} // namespace detail

/// Finite channel state set. Fading is i.i.d. across frames, so the
/// transition probability into state j is stationary_probs[j] from any state.
struct ChannelGrid {
    std::vector<ChannelMatrix> states;
    std::vector<double> stationary_probs;
    /// Cluster centres in entry space, used to classify new draws.
    std::vector<Eigen::Matrix2cd> centroids;

    std::size_t size() const { return states.size(); }

    const std::vector<double>& transition_row(std::size_t /*from*/) const { return stationary_probs; }

    std::size_t classify(const Eigen::Matrix2cd& h) const {
        std::vector<detail::point8> c;
        c.reserve(centroids.size());
        for (const auto& m : centroids) c.push_back(detail::flatten(m));
        return detail::nearest(c, detail::flatten(h));
    }

    /// Index of the most probable state (lowest index on ties).
    std::size_t most_probable() const {
        std::size_t best = 0;
        for (std::size_t j = 1; j < stationary_probs.size(); ++j)
            if (stationary_probs[j] > stationary_probs[best]) best = j;
        return best;
    }

    void validate() const {
        if (states.empty()) throw domain_error("channel grid: no states");
        if (states.size() != stationary_probs.size())
            throw domain_error("channel grid: state/probability count mismatch");
        double sum = 0.0;
        for (double p : stationary_probs) {
            if (!(p >= 0.0)) throw domain_error("channel grid: negative probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw domain_error("channel grid: probabilities do not sum to 1");
        for (const auto& s : states)
            if (is_singular(s.entries)) throw singular_channel_error("channel grid: singular state");
    }
};

/// Quantises the channel process by k-means in the 8-dimensional real entry
/// space. Representatives are the cluster centroids rescaled to the mean
/// Frobenius power of their members (a plain centroid of circularly symmetric
/// draws shrinks towards zero); a singular centroid falls back to the medoid.
inline ChannelGrid build_channel_grid(const ChannelModelParams& params, std::size_t n_states,
                                      std::size_t n_calib_samples, std::uint64_t rng_seed) {
    using detail::point8;
    if (n_states < 1) throw domain_error("build_channel_grid: n_states must be >= 1");
    if (n_calib_samples < n_states)
        throw domain_error("build_channel_grid: need at least n_states calibration samples");

    ChannelModel model(params, rng_seed);
    std::mt19937_64 rng(rng_seed ^ 0x9e3779b97f4a7c15ULL);

    std::vector<point8> xs;
    xs.reserve(n_calib_samples);
    for (std::size_t n = 0; n < n_calib_samples; ++n) xs.push_back(detail::flatten(model.sample(rng).entries));

    // k-means++ seeding
    std::vector<point8> centers;
    centers.reserve(n_states);
    centers.push_back(xs[std::uniform_int_distribution<std::size_t>(0, xs.size() - 1)(rng)]);
    std::vector<double> d2(xs.size());
    while (centers.size() < n_states) {
        double total = 0.0;
        for (std::size_t n = 0; n < xs.size(); ++n) {
            d2[n] = (xs[n] - centers[detail::nearest(centers, xs[n])]).squaredNorm();
            total += d2[n];
        }
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        std::size_t pick = xs.size() - 1;
        for (std::size_t n = 0; n < xs.size(); ++n) {
            u -= d2[n];
            if (u <= 0.0) {
                pick = n;
                break;
            }
        }
        centers.push_back(xs[pick]);
    }

    std::vector<std::size_t> assign(xs.size(), n_states);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (std::size_t n = 0; n < xs.size(); ++n) {
            const std::size_t j = detail::nearest(centers, xs[n]);
            if (j != assign[n]) {
                assign[n] = j;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<point8> sums(n_states, point8::Zero());
        std::vector<std::size_t> counts(n_states, 0);
        for (std::size_t n = 0; n < xs.size(); ++n) {
            sums[assign[n]] += xs[n];
            ++counts[assign[n]];
        }
        for (std::size_t j = 0; j < n_states; ++j) {
            if (counts[j] > 0) {
                centers[j] = sums[j] / static_cast<double>(counts[j]);
                continue;
            }
            // empty cluster: move it to the worst-served point
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t n = 0; n < xs.size(); ++n) {
                const double d = (xs[n] - centers[assign[n]]).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = n;
                }
            }
            centers[j] = xs[far];
            assign[far] = j;
        }
    }

    ChannelGrid grid;
    std::vector<double> power(n_states, 0.0);
    std::vector<std::size_t> counts(n_states, 0);
    std::vector<std::size_t> medoid(n_states, 0);
    std::vector<double> medoid_d(n_states, std::numeric_limits<double>::infinity());
    for (std::size_t n = 0; n < xs.size(); ++n) {
        const std::size_t j = assign[n];
        power[j] += xs[n].squaredNorm();
        ++counts[j];
        const double d = (xs[n] - centers[j]).squaredNorm();
        if (d < medoid_d[j]) {
            medoid_d[j] = d;
            medoid[j] = n;
        }
    }
    for (std::size_t j = 0; j < n_states; ++j) {
        if (counts[j] == 0) continue;
        const double mean_power = power[j] / static_cast<double>(counts[j]);
        const double c_power = centers[j].squaredNorm();
        Eigen::Matrix2cd rep = detail::unflatten(centers[j]);
        if (c_power > 0.0) rep *= std::sqrt(mean_power / c_power);
        if (is_singular(rep)) rep = detail::unflatten(xs[medoid[j]]);
        ChannelMatrix m;
        m.entries = rep;
        m.large_scale = model.large_scale();
        grid.states.push_back(m);
        grid.centroids.push_back(detail::unflatten(centers[j]));
        grid.stationary_probs.push_back(static_cast<double>(counts[j]) / static_cast<double>(xs.size()));
    }
    grid.validate();
    return grid;
}

/// Plain-text grid: one state per line as four "(re,im)" tokens in row-major
/// order (H11 H12 H21 H22), then one trailing line of probabilities.
inline void write_channel_grid(std::ostream& os, const ChannelGrid& grid) {
    os.precision(17);
    os << "# channel grid: " << grid.size() << " states, H11 H12 H21 H22 row-major, probabilities last\n";
    for (const auto& s : grid.states) {
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 2; ++k) os << s.entries(i, k) << (i == 1 && k == 1 ? '\n' : ' ');
    }
    for (std::size_t j = 0; j < grid.size(); ++j)
        os << grid.stationary_probs[j] << (j + 1 == grid.size() ? '\n' : ' ');
}

inline ChannelGrid read_channel_grid(std::istream& is) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) {
        if (line.empty() || line[0] == '#') continue;
        lines.push_back(line);
    }
    if (lines.size() < 2) throw domain_error("read_channel_grid: expected state lines and a probability line");
    ChannelGrid grid;
    for (std::size_t n = 0; n + 1 < lines.size(); ++n) {
        std::istringstream ls(lines[n]);
        ChannelMatrix m;
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 2; ++k)
                if (!(ls >> m.entries(i, k)))
                    throw domain_error("read_channel_grid: malformed entry on state line " + std::to_string(n + 1));
        grid.states.push_back(m);
        grid.centroids.push_back(m.entries);
    }
    std::istringstream ps(lines.back());
    for (double p; ps >> p;) grid.stationary_probs.push_back(p);
    grid.validate();
    return grid;
}

} // namespace fjt
