#pragma once

// Brute-force reference solvers and random instance generators shared by the
// unit tests and the acceptance binary. Nothing here calls the closed-form
// solvers it is used to check.

#include "fjt/channel.hpp"
#include "fjt/mdp.hpp"
#include "fjt/perframe.hpp"
#include "fjt/zf.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline fjt::ChannelMatrix random_channel(std::mt19937_64& rng, double scale = 3.0) {
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    std::uniform_real_distribution<double> u(0.2, 1.0);
    Eigen::Matrix2cd h;
    do {
        for (int i = 0; i < 2; ++i)
            for (int k = 0; k < 2; ++k) h(i, k) = scale * u(rng) * fjt::complex_gain(g(rng), g(rng));
    } while (fjt::is_singular(h) || std::abs(h.determinant()) < 1e-3 * h.squaredNorm());
    return fjt::ChannelMatrix::from_entries(h);
}

/// Random input with budgets drawn inside [0, B_k/T_f + E_k].
inline fjt::PerFrameInput random_input(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto h = random_channel(rng);
    std::array<double, 2> b{}, e{}, a{};
    for (int k = 0; k < 2; ++k) {
        b[k] = 2.0 * u(rng);
        e[k] = 1.2 * u(rng);
        a[k] = u(rng) * (b[k] + e[k]);
    }
    return fjt::PerFrameInput::make(b, e, a, h, 1.0, 1.0);
}

/// Maximises f over a box by repeated grid search, shrinking the box around
/// the incumbent after each pass.
inline double grid_zoom(const std::function<double(const std::vector<double>&)>& f, std::vector<double> lo,
                        std::vector<double> hi, int points, int rounds, std::vector<double>* arg = nullptr) {
    const std::size_t n = lo.size();
    double best = kNegInf;
    std::vector<double> best_x(n);
    for (std::size_t d = 0; d < n; ++d) best_x[d] = lo[d];
    for (int r = 0; r < rounds; ++r) {
        std::vector<int> idx(n, 0);
        std::vector<double> x(n);
        while (true) {
            for (std::size_t d = 0; d < n; ++d)
                x[d] = points == 1 ? lo[d] : lo[d] + (hi[d] - lo[d]) * idx[d] / (points - 1);
            const double v = f(x);
            if (v > best) {
                best = v;
                best_x = x;
            }
            std::size_t d = 0;
            while (d < n && ++idx[d] == points) idx[d++] = 0;
            if (d == n) break;
        }
        for (std::size_t d = 0; d < n; ++d) {
            const double step = (hi[d] - lo[d]) / (points - 1);
            const double l0 = lo[d], h0 = hi[d];
            lo[d] = std::max(l0, best_x[d] - 2.0 * step);
            hi[d] = std::min(h0, best_x[d] + 2.0 * step);
        }
    }
    if (arg) *arg = best_x;
    return best;
}

inline double objective(const fjt::PerFrameInput& in, int k, int user, double alpha, double pt, double p1,
                        double p2) {
    double v = (1.0 - alpha) * (std::log2(1.0 + p1 / in.noise) + std::log2(1.0 + p2 / in.noise));
    v += alpha * std::log2(1.0 + pt * std::norm(in.channel.entries(user, k)) / in.noise);
    return v;
}

inline int best_user(const fjt::PerFrameInput& in, int k) {
    return std::norm(in.channel.entries(1, k)) > std::norm(in.channel.entries(0, k)) ? 1 : 0;
}

/// Best rate on the equality manifold for fixed (k, alpha), 0 < alpha < 1:
/// scan p_tilde, solve the two budget equalities for (p1, p2) directly.
inline double equality_value(const fjt::PerFrameInput& in, int k, double alpha, int points = 4001,
                             int rounds = 6) {
    const int kb = 1 - k;
    const Eigen::Matrix2cd w = in.channel.entries.inverse();
    Eigen::Matrix2d m;
    m << std::norm(w(k, 0)), std::norm(w(k, 1)), std::norm(w(kb, 0)), std::norm(w(kb, 1));
    m *= (1.0 - alpha);
    const Eigen::Matrix2d minv = m.inverse();
    const int user = best_user(in, k);
    const double cap = in.battery[k] / (alpha * in.frame_length) + in.arrival[k];
    // (p1, p2) is affine in p_tilde, so p >= 0 cuts [0, cap] down to an interval.
    double lo = 0.0, hi = cap;
    for (int i = 0; i < 2; ++i) {
        const double a = minv(i, 0) * in.budget[k] + minv(i, 1) * in.budget[kb];
        const double c = -alpha * minv(i, 0);
        if (c > 0.0) lo = std::max(lo, -a / c);
        else if (c < 0.0) hi = std::min(hi, -a / c);
        else if (a < 0.0) return kNegInf;
    }
    const double pad = 1e-9 * (1.0 + cap);
    lo = std::max(0.0, lo - pad);
    hi = std::min(cap, hi + pad);
    if (lo > hi) return kNegInf;
    auto f = [&](const std::vector<double>& x) {
        const double pt = x[0];
        Eigen::Vector2d rhs(in.budget[k] - alpha * pt, in.budget[kb]);
        const Eigen::Vector2d p = minv * rhs;
        const double tol = 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()) * minv.cwiseAbs().maxCoeff();
        if (p(0) < -tol || p(1) < -tol) return kNegInf;
        return objective(in, k, user, alpha, pt, std::max(0.0, p(0)), std::max(0.0, p(1)));
    };
    return grid_zoom(f, {lo}, {hi}, points, rounds);
}

/// Maximiser of a unimodal function on [lo, hi] by golden-section search.
inline double golden_max(const std::function<double(double)>& f, double lo, double hi, int iterations = 80) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < iterations; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    return std::max({f1, f2, f(lo), f(hi)});
}

/// Best rate for fixed k over (alpha, p_tilde, p1, p2) with the JT budget
/// constraints as inequalities. (alpha, p_tilde) are gridded; p2 takes the
/// largest feasible value and p1 is found by golden section, the rate being
/// concave along that one-dimensional slice.
inline double inequality_value(const fjt::PerFrameInput& in, int k, int points = 31, int rounds = 8) {
    const int kb = 1 - k;
    const Eigen::Matrix2cd w = in.channel.entries.inverse();
    const double wk0 = std::norm(w(k, 0)), wk1 = std::norm(w(k, 1));
    const double wb0 = std::norm(w(kb, 0)), wb1 = std::norm(w(kb, 1));
    const int user = best_user(in, k);
    auto f = [&](const std::vector<double>& x) {
        const double alpha = x[0];
        // x[1] is the share of the budget spent in the single-BS subframe
        const double spend = x[1] * std::min(in.battery[k] / in.frame_length + alpha * in.arrival[k], in.budget[k]);
        const double pt = alpha > 0.0 ? spend / alpha : 0.0;
        if (alpha >= 1.0) return objective(in, k, user, 1.0, pt, 0.0, 0.0);
        const double rk = in.budget[k] - alpha * pt;
        const double rb = in.budget[kb];
        const double q = 1.0 - alpha;
        double p1max = std::numeric_limits<double>::infinity();
        if (wk0 > 0.0) p1max = std::min(p1max, rk / (q * wk0));
        if (wb0 > 0.0) p1max = std::min(p1max, rb / (q * wb0));
        p1max = std::max(0.0, p1max);
        auto slice = [&](double p1) {
            double p2 = std::numeric_limits<double>::infinity();
            if (wk1 > 0.0) p2 = std::min(p2, (rk - q * wk0 * p1) / (q * wk1));
            if (wb1 > 0.0) p2 = std::min(p2, (rb - q * wb0 * p1) / (q * wb1));
            return objective(in, k, user, alpha, pt, p1, std::max(0.0, p2));
        };
        return golden_max(slice, 0.0, p1max, 60);
    };
    return grid_zoom(f, {0.0, 0.0}, {1.0, 1.0}, points, rounds);
}

/// Channel grid with the desk-scale channel model.
inline fjt::ChannelGrid desk_grid(std::uint64_t seed, std::size_t n_states = 4) {
    fjt::ChannelModelParams p;
    p.common_shadowing = true;
    p.snr_average_db = true;
    return fjt::build_channel_grid(p, n_states, 2000, seed);
}

inline fjt::DiscreteMdp small_mdp(std::uint64_t seed, int levels, std::size_t channels, double e1, double e2,
                                  fjt::StageObjective obj = fjt::StageObjective::equality) {
    fjt::MdpOptions o;
    o.arrival = {e1, e2};
    o.battery_levels = levels;
    o.objective = obj;
    return fjt::DiscreteMdp(desk_grid(seed, channels), o);
}

/// Long-run average reward of a fixed policy from the stationary
/// distribution of its state chain, found by power iteration from the
/// uniform distribution.
inline double stationary_average(const fjt::DiscreteMdp& mdp, const fjt::Policy& pol, int iterations = 20000) {
    const int n = mdp.n_states();
    std::vector<double> pi(n, 1.0 / n), next(n);
    for (int it = 0; it < iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < n; ++s) {
            const auto& t = mdp.actions(s)[pol.action[s]];
            for (int c = 0; c < mdp.n_channels(); ++c)
                next[mdp.state_of_pair(t.next_battery, c)] += pi[s] * mdp.channel().stationary_probs[c];
        }
        // lazy step keeps periodic chains converging
        for (int s = 0; s < n; ++s) pi[s] = 0.5 * (pi[s] + next[s]);
    }
    double v = 0.0;
    for (int s = 0; s < n; ++s) v += pi[s] * mdp.actions(s)[pol.action[s]].solution.sum_rate;
    return v;
}

} // namespace oracle
