#pragma once

// Per-frame sum-rate maximisation for fractional joint transmission.
//
// A frame of length T_f is split into a single-BS subframe of relative length
// alpha, in which BS k serves one user with power p_tilde while the other BS
// stores energy, and a ZF joint-transmission subframe of length (1 - alpha)
// carrying powers (p_1, p_2). Budgets A_k are per-frame average powers.
//
// Indices are 0-based throughout: BS k in {0, 1}, user i in {0, 1}.

#include "fjt/channel.hpp"
#include "fjt/errors.hpp"
#include "fjt/zf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>

namespace fjt {

inline constexpr double kDefaultDeltaAlpha = 1e-3;

struct PerFrameInput {
    std::array<double, 2> battery{0.0, 0.0}; ///< B_k, Joules at frame start
    std::array<double, 2> arrival{0.0, 0.0}; ///< E_k, Watts
    std::array<double, 2> budget{0.0, 0.0};  ///< A_k, Watts
    ChannelMatrix channel;
    PrecodingMatrix precoder;
    double noise = 1.0;
    double frame_length = 1.0;

    /// B_k / T_f + E_k, the largest admissible budget.
    double max_budget(int k) const { return battery[k] / frame_length + arrival[k]; }

    static PerFrameInput make(std::array<double, 2> battery, std::array<double, 2> arrival,
                              std::array<double, 2> budget, const ChannelMatrix& h, double noise = 1.0,
                              double frame_length = 1.0) {
        PerFrameInput in;
        in.battery = battery;
        in.arrival = arrival;
        in.budget = budget;
        in.channel = h;
        in.precoder = zf_weights(h);
        in.noise = noise;
        in.frame_length = frame_length;
        return in;
    }

    void validate() const {
        if (!(noise > 0.0) || !(frame_length > 0.0))
            throw domain_error("per-frame input: noise and frame length must be positive");
        for (int k = 0; k < 2; ++k) {
            if (!(battery[k] >= 0.0) || !(arrival[k] >= 0.0) || !(budget[k] >= 0.0))
                throw domain_error("per-frame input: batteries, arrivals and budgets must be >= 0");
            if (budget[k] > max_budget(k) * (1.0 + 1e-12) + 1e-15)
                throw domain_error("per-frame input: budget exceeds B_k/T_f + E_k");
        }
    }
};

struct PerFrameSolution {
    int bs = 0;   ///< BS active in the single-BS subframe
    int user = 0; ///< user served in the single-BS subframe
    double alpha = 0.0;
    double p_tilde = 0.0;
    std::array<double, 2> power{0.0, 0.0};
    double sum_rate = 0.0;
};

/// Average power BS j draws over the frame under `sol`.
inline double bs_spend(const PerFrameInput& in, const PerFrameSolution& sol, int j) {
    const Eigen::Matrix2d w2 = row_powers(in.precoder);
    double spend = (1.0 - sol.alpha) * (w2(j, 0) * sol.power[0] + w2(j, 1) * sol.power[1]);
    if (j == sol.bs) spend += sol.alpha * sol.p_tilde;
    return spend;
}

/// Frame-averaged rate of each user.
inline std::array<double, 2> user_rates(const PerFrameInput& in, const PerFrameSolution& sol) {
    std::array<double, 2> r{};
    for (int i = 0; i < 2; ++i) r[i] = (1.0 - sol.alpha) * std::log2(1.0 + sol.power[i] / in.noise);
    r[sol.user] += sol.alpha * std::log2(1.0 + sol.p_tilde * in.channel.gain(sol.user, sol.bs) / in.noise);
    return r;
}

/// User served by BS k alone: the larger rate at power E_k, ties to user 0.
inline int select_user(int k, double e_k, const ChannelMatrix& h, double noise) {
    if (!(e_k >= 0.0)) throw domain_error("select_user: negative arrival rate");
    const double r0 = std::log2(1.0 + e_k * h.gain(0, k) / noise);
    const double r1 = std::log2(1.0 + e_k * h.gain(1, k) / noise);
    return r1 > r0 ? 1 : 0;
}

inline double subframe_objective(const PerFrameInput& in, int k, int user, double alpha, double p_tilde,
                                  double p1, double p2) {
    double v = (1.0 - alpha) * (std::log2(1.0 + p1 / in.noise) + std::log2(1.0 + p2 / in.noise));
    if (alpha > 0.0) v += alpha * std::log2(1.0 + p_tilde * in.channel.gain(user, k) / in.noise);
    return v;
}

struct FeasibilityBounds {
    double p_tilde_min = 0.0;
    double p_tilde_max = 0.0;
    double alpha_min = 0.0;
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    bool feasible = false;
};

namespace detail {

struct EqualityCoefficients {
    double a = 0.0;  // |w_{kbar,2}|^2
    double b = 0.0;  // |w_{kbar,1}|^2
    double d = 0.0;  // |w_k1|^2 |w_kbar2|^2 - |w_k2|^2 |w_kbar1|^2
    double c1 = 0.0;
    double c2 = 0.0;
    // alpha * p_tilde must lie in [lower, upper]; `structural` is false when
    // no alpha admits nonnegative JT powers with this k.
    double lower = 0.0;
    double upper = 0.0;
    bool structural = true;
};

inline EqualityCoefficients equality_coefficients(const PerFrameInput& in, int k) {
    const int kb = 1 - k;
    const Eigen::Matrix2d w2 = row_powers(in.precoder);
    EqualityCoefficients q;
    q.a = w2(kb, 1);
    q.b = w2(kb, 0);
    q.d = w2(k, 0) * q.a - w2(k, 1) * q.b;
    const double dscale = w2(k, 0) * q.a + w2(k, 1) * q.b;
    if (!(std::abs(q.d) > 1e-14 * dscale))
        throw degenerate_channel_error("closed-form allocation: C0 = 0 for this channel");
    q.c1 = in.budget[k] * q.a - in.budget[kb] * w2(k, 1);
    q.c2 = in.budget[k] * q.b - in.budget[kb] * w2(k, 0);

    const double inf = std::numeric_limits<double>::infinity();
    const double scale = std::max({in.budget[0], in.budget[1], 1e-300}) * std::max({q.a, q.b, w2(k, 0), w2(k, 1)});
    const double eps = 1e-12 * scale;
    // p1 >= 0 and p2 >= 0 written as bounds on y = alpha * p_tilde.
    auto bound_from = [&](double coef, double rhs, bool as_upper) {
        // as_upper: coef * y <= rhs, else coef * y >= rhs
        if (coef > 0.0) return rhs / coef;
        if (as_upper ? rhs < -eps : rhs > eps) q.structural = false;
        return as_upper ? inf : -inf;
    };
    if (q.d > 0.0) {
        q.upper = bound_from(q.a, q.c1, true);
        q.lower = bound_from(q.b, q.c2, false);
    } else {
        q.lower = bound_from(q.a, q.c1, false);
        q.upper = bound_from(q.b, q.c2, true);
    }
    if (q.upper < -eps) q.structural = false;
    return q;
}

inline double alpha_min_from(const PerFrameInput& in, int k, const EqualityCoefficients& q) {
    if (!q.structural) return std::numeric_limits<double>::infinity();
    const double excess = q.lower - in.battery[k] / in.frame_length;
    if (excess <= 0.0) return 0.0;
    if (in.arrival[k] > 0.0) return excess / in.arrival[k];
    return std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Smallest alpha for which the equality-constrained problem with active BS k
/// is feasible; +infinity when no alpha in [0, 1) is.
inline double alpha_min(const PerFrameInput& in, int k) {
    return detail::alpha_min_from(in, k, detail::equality_coefficients(in, k));
}

/// Feasible interval of p_tilde for 0 < alpha < 1 under the two equality
/// budget constraints, nonnegative powers and the battery constraint of BS k.
inline FeasibilityBounds feasibility_bounds(const PerFrameInput& in, int k, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw domain_error("feasibility_bounds: alpha must lie in (0, 1)");
    const auto q = detail::equality_coefficients(in, k);
    FeasibilityBounds fb;
    fb.c0 = (1.0 - alpha) * q.d;
    fb.c1 = q.c1;
    fb.c2 = q.c2;
    fb.alpha_min = detail::alpha_min_from(in, k, q);
    const double cap = in.battery[k] / (alpha * in.frame_length) + in.arrival[k];
    fb.p_tilde_min = std::max(0.0, q.lower / alpha);
    fb.p_tilde_max = std::min(cap, q.upper / alpha);
    fb.feasible = q.structural && fb.p_tilde_min <= fb.p_tilde_max * (1.0 + 1e-12) + 1e-300;
    if (fb.feasible && fb.p_tilde_min > fb.p_tilde_max) fb.p_tilde_min = fb.p_tilde_max;
    return fb;
}

/// JT powers on the equality manifold for a given p_tilde.
inline std::array<double, 2> equality_powers(const PerFrameInput& in, int k, double alpha,
                                             const FeasibilityBounds& fb, double p_tilde) {
    const int kb = 1 - k;
    const Eigen::Matrix2d w2 = row_powers(in.precoder);
    const double p1 = (fb.c1 - alpha * w2(kb, 1) * p_tilde) / fb.c0;
    const double p2 = (alpha * w2(kb, 0) * p_tilde - fb.c2) / fb.c0;
    return {p1, p2};
}

/// f_{k,alpha}(p_tilde): the frame objective along the equality manifold.
inline double ptilde_objective(const PerFrameInput& in, int k, int user, double alpha,
                               const FeasibilityBounds& fb, double p_tilde) {
    const auto p = equality_powers(in, k, alpha, fb, p_tilde);
    return subframe_objective(in, k, user, alpha, p_tilde, std::max(0.0, p[0]), std::max(0.0, p[1]));
}

/// d f_{k,alpha} / d p_tilde, in bits/s/Hz per Watt.
inline double ptilde_derivative(const PerFrameInput& in, int k, int user, double alpha,
                                const FeasibilityBounds& fb, double p_tilde) {
    const int kb = 1 - k;
    const Eigen::Matrix2d w2 = row_powers(in.precoder);
    const double h = in.channel.gain(user, k);
    const double s2 = in.noise;
    const auto p = equality_powers(in, k, alpha, fb, p_tilde);
    const double t0 = h / (s2 + p_tilde * h);
    const double t1 = (1.0 - alpha) * w2(kb, 1) / (fb.c0 * (s2 + p[0]));
    const double t2 = (1.0 - alpha) * w2(kb, 0) / (fb.c0 * (s2 + p[1]));
    return alpha / std::numbers::ln2 * (t0 - t1 + t2);
}

/// Maximiser of f_{k,alpha} over [p_tilde_min, p_tilde_max]: the root of the
/// first-order condition (a quadratic in p_tilde) clamped to the interval.
inline double stationary_ptilde(const PerFrameInput& in, int k, int user, double alpha,
                                const FeasibilityBounds& fb) {
    if (!fb.feasible) throw domain_error("stationary_ptilde: infeasible bounds");
    const double lo = fb.p_tilde_min;
    const double hi = fb.p_tilde_max;
    if (!(hi > lo)) return lo;

    const int kb = 1 - k;
    const Eigen::Matrix2d w2 = row_powers(in.precoder);
    const double a = w2(kb, 1);
    const double b = w2(kb, 0);
    const double h = in.channel.gain(user, k);
    const double s2 = in.noise;

    auto in_domain = [&](double x) {
        if (!std::isfinite(x) || s2 + x * h <= 0.0) return false;
        const auto p = equality_powers(in, k, alpha, fb, x);
        return s2 + p[0] > 0.0 && s2 + p[1] > 0.0;
    };

    std::optional<double> root;
    if (h > 0.0) {
        const double s = s2 / h;
        const double big_p = s2 * fb.c0 + fb.c1;
        const double big_q = s2 * fb.c0 - fb.c2;
        const double kk = a * big_q - b * big_p;
        const double q2 = -alpha * a * b * (2.0 - alpha);
        const double q1 = -kk - 2.0 * alpha * (1.0 - alpha) * a * b * s;
        const double q0 = big_p * big_q - (1.0 - alpha) * s * kk;
        const double qscale = std::max({std::abs(q1), std::abs(q0), 1e-300});
        std::array<double, 2> cand{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        if (std::abs(q2) * std::max(1.0, hi * hi) <= 1e-15 * qscale * std::max(1.0, hi)) {
            if (q1 != 0.0) cand[0] = -q0 / q1;
        } else {
            const double disc = q1 * q1 - 4.0 * q2 * q0;
            if (disc >= 0.0) {
                const double t = -0.5 * (q1 + std::copysign(std::sqrt(disc), q1));
                cand[0] = t / q2;
                if (t != 0.0) cand[1] = q0 / t;
            }
        }
        double best_res = std::numeric_limits<double>::infinity();
        for (double x : cand) {
            if (!in_domain(x)) continue;
            const double res = std::abs(ptilde_derivative(in, k, user, alpha, fb, x));
            if (res < best_res) {
                best_res = res;
                root = x;
            }
        }
    }

    if (root) {
        if (*root >= hi) return hi;
        if (*root <= lo) return lo;
        return *root;
    }
    // No usable root: f is concave on the interval, decide by derivative sign.
    const double dlo = ptilde_derivative(in, k, user, alpha, fb, lo);
    if (dlo <= 0.0) return lo;
    const double dhi = ptilde_derivative(in, k, user, alpha, fb, hi);
    if (dhi >= 0.0) return hi;
    double l = lo, r = hi;
    for (int it = 0; it < 200 && r - l > 1e-15 * std::max(1.0, r); ++it) {
        const double m = 0.5 * (l + r);
        (ptilde_derivative(in, k, user, alpha, fb, m) > 0.0 ? l : r) = m;
    }
    return 0.5 * (l + r);
}

/// Closed-form optimum of the frame problem for fixed (k, alpha) with both JT
/// budget constraints held with equality. Returns nullopt when infeasible.
inline std::optional<PerFrameSolution> power_allocation_equality(const PerFrameInput& in, int k, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw domain_error("power_allocation_equality: alpha outside [0, 1]");
    const int kb = 1 - k;
    PerFrameSolution sol;
    sol.bs = k;
    sol.user = select_user(k, in.arrival[k], in.channel, in.noise);
    sol.alpha = alpha;

    const double budget_scale = std::max({in.budget[0], in.budget[1], 1e-300});
    if (alpha == 1.0) {
        // the sleeping BS cannot spend anything in a frame without a JT phase
        if (in.budget[kb] > 1e-12 * budget_scale) return std::nullopt;
        if (in.budget[k] > in.max_budget(k) * (1.0 + 1e-12) + 1e-300) return std::nullopt;
        sol.p_tilde = in.budget[k];
        sol.sum_rate = subframe_objective(in, k, sol.user, 1.0, sol.p_tilde, 0.0, 0.0);
        return sol;
    }

    const auto q = detail::equality_coefficients(in, k);
    if (alpha == 0.0) {
        // ZF-JT over the whole frame: p solves the two budget equalities.
        const double p1 = q.c1 / q.d;
        const double p2 = -q.c2 / q.d;
        const double tol = 1e-12 * budget_scale / std::max(std::abs(q.d), 1e-300) * std::max(q.a, q.b);
        if (p1 < -tol || p2 < -tol) return std::nullopt;
        sol.power = {std::max(0.0, p1), std::max(0.0, p2)};
        sol.sum_rate = subframe_objective(in, k, sol.user, 0.0, 0.0, sol.power[0], sol.power[1]);
        return sol;
    }

    const auto fb = feasibility_bounds(in, k, alpha);
    if (!fb.feasible) return std::nullopt;
    sol.p_tilde = stationary_ptilde(in, k, sol.user, alpha, fb);
    const auto p = equality_powers(in, k, alpha, fb, sol.p_tilde);
    sol.power = {std::max(0.0, p[0]), std::max(0.0, p[1])};
    sol.sum_rate = subframe_objective(in, k, sol.user, alpha, sol.p_tilde, sol.power[0], sol.power[1]);
    return sol;
}

struct ConcaveSearch {
    double alpha = 0.0;
    double value = -std::numeric_limits<double>::infinity();
    int iterations = 0;
};

/// Bi-section for the maximum of a concave function on [lo, hi], testing the
/// monotonicity of f in a delta-neighbourhood of the midpoint, followed by a
/// golden-section polish inside the final delta-bracket. `f` returns
/// -infinity where the problem is infeasible.
template <class F>
ConcaveSearch bisect_concave(F&& f, double lo, double hi, double delta, int max_iterations = 200) {
    if (!(delta > 0.0)) throw domain_error("bisect_concave: delta must be positive");
    const double lo0 = lo, hi0 = hi;
    ConcaveSearch out;
    auto keep = [&](double a, double v) {
        if (v > out.value) {
            out.alpha = a;
            out.value = v;
        }
    };
    while (true) {
        ++out.iterations;
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        const double fl = f(mid - delta);
        const double fr = f(mid + delta);
        if (out.iterations == 1 || fm > out.value) {
            out.alpha = mid;
            out.value = fm;
        }
        if (fm >= fl && fm >= fr) break;
        if (fl <= fm && fm <= fr)
            lo = mid;
        else
            hi = mid;
        if (out.iterations >= max_iterations || hi - lo <= delta) {
            keep(lo, f(lo));
            keep(hi, f(hi));
            break;
        }
    }

    double a = std::max(lo0, out.alpha - delta);
    double b = std::min(hi0, out.alpha + delta);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - r * (b - a), x2 = a + r * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 40 && b - a > 1e-12; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    keep(x1, f1);
    keep(x2, f2);
    return out;
}

namespace detail {

inline double equality_value(const PerFrameInput& in, int k, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) return -std::numeric_limits<double>::infinity();
    const auto s = power_allocation_equality(in, k, alpha);
    return s ? s->sum_rate : -std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Bi-section over alpha in [alpha_min, 1] of the equality-constrained value
/// with BS k active. nullopt when no alpha is feasible.
inline std::optional<PerFrameSolution> bisect_alpha(const PerFrameInput& in, int k, double delta_alpha,
                                                    int* iterations = nullptr) {
    const double amin = alpha_min(in, k);
    if (!(amin <= 1.0)) return std::nullopt;
    auto f = [&](double a) { return detail::equality_value(in, k, a); };
    const auto r = bisect_concave(f, amin, 1.0, delta_alpha);
    if (iterations) *iterations = r.iterations;
    return power_allocation_equality(in, k, r.alpha);
}

namespace detail {

inline PerFrameSolution zero_solution(const PerFrameInput& in) {
    PerFrameSolution s;
    s.user = select_user(0, in.arrival[0], in.channel, in.noise);
    return s;
}

inline bool better(const std::optional<PerFrameSolution>& cand, const std::optional<PerFrameSolution>& best) {
    return cand && (!best || cand->sum_rate > best->sum_rate);
}

} // namespace detail

/// Per-stage utility with equality budget constraints: boundary checks at
/// alpha_min and 1, otherwise bi-section; best BS wins, ties to BS 0.
/// `only_bs` restricts the single-BS subframe to one BS.
inline PerFrameSolution per_stage_utility(const PerFrameInput& in, double delta_alpha = kDefaultDeltaAlpha,
                                          std::optional<int> only_bs = std::nullopt) {
    std::optional<PerFrameSolution> best;
    for (int k = 0; k < 2; ++k) {
        if (only_bs && *only_bs != k) continue;
        const double amin = alpha_min(in, k);
        if (!(amin <= 1.0)) continue;
        auto f = [&](double a) { return detail::equality_value(in, k, a); };
        std::optional<PerFrameSolution> cand;
        const double f_min = f(amin);
        const double f_one = f(1.0);
        if (std::isfinite(f_min) && f_min > f(amin + delta_alpha)) {
            cand = power_allocation_equality(in, k, amin);
        } else if (std::isfinite(f_one) && f_one > f(1.0 - delta_alpha)) {
            cand = power_allocation_equality(in, k, 1.0);
        } else {
            cand = bisect_alpha(in, k, delta_alpha);
        }
        if (detail::better(cand, best)) best = cand;
    }
    return best ? *best : detail::zero_solution(in);
}

namespace detail {

/// Smallest water level nu with consumption(nu) >= target, by bisection.
template <class G>
double water_level(G&& consumption, double target, double hi) {
    if (!(target > 0.0)) return 0.0;
    while (consumption(hi) < target) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (consumption(mid) < target ? lo : hi) = mid;
    }
    return hi;
}

} // namespace detail

/// Optimum for fixed (k, alpha) with the JT budget constraints as
/// inequalities. At least one of them is tight at the optimum, so the
/// candidates are: BS k's constraint tight with BS kbar's slack, the reverse,
/// and both tight (the closed-form equality solution). Each one-sided case is
/// a water-filling solved by bisection on its multiplier.
inline PerFrameSolution power_allocation_inequality(const PerFrameInput& in, int k, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw domain_error("power_allocation_inequality: alpha outside [0, 1]");
    const int kb = 1 - k;
    const Eigen::Matrix2d w2 = row_powers(in.precoder);
    const double s2 = in.noise;

    PerFrameSolution base;
    base.bs = k;
    base.user = select_user(k, in.arrival[k], in.channel, in.noise);
    base.alpha = alpha;
    const double h = in.channel.gain(base.user, k);

    if (alpha == 1.0) {
        base.p_tilde = std::min(in.max_budget(k), in.budget[k]);
        base.sum_rate = subframe_objective(in, k, base.user, 1.0, base.p_tilde, 0.0, 0.0);
        return base;
    }

    const double cap = alpha > 0.0 ? in.battery[k] / (alpha * in.frame_length) + in.arrival[k] : 0.0;
    const double s = h > 0.0 ? s2 / h : std::numeric_limits<double>::infinity();
    auto ptilde_at = [&](double nu) {
        if (alpha == 0.0 || !(h > 0.0)) return 0.0;
        return std::clamp(nu - s, 0.0, cap);
    };
    auto spend = [&](int j, const PerFrameSolution& c) {
        return (1.0 - alpha) * (w2(j, 0) * c.power[0] + w2(j, 1) * c.power[1]) + (j == k ? alpha * c.p_tilde : 0.0);
    };
    auto within = [&](double used, double budget) { return used <= budget * (1.0 + 1e-10) + 1e-14; };

    PerFrameSolution best = base; // all-zero allocation is always feasible
    auto consider = [&](PerFrameSolution c) {
        c.sum_rate = subframe_objective(in, k, c.user, alpha, c.p_tilde, c.power[0], c.power[1]);
        if (c.sum_rate > best.sum_rate) best = c;
    };

    // BS k tight, BS kbar slack: common water level over p_tilde and p_i.
    if (w2(k, 0) > 0.0 && w2(k, 1) > 0.0) {
        auto consumption = [&](double nu) {
            double c = alpha * ptilde_at(nu);
            for (int i = 0; i < 2; ++i) c += (1.0 - alpha) * std::max(nu - s2 * w2(k, i), 0.0);
            return c;
        };
        const double hi0 = s2 * std::max(w2(k, 0), w2(k, 1)) + in.budget[k] / (1.0 - alpha) + 1e-300;
        const double nu = detail::water_level(consumption, in.budget[k], hi0);
        PerFrameSolution c = base;
        c.p_tilde = ptilde_at(nu);
        for (int i = 0; i < 2; ++i) c.power[i] = std::max(nu / w2(k, i) - s2, 0.0);
        if (within(spend(kb, c), in.budget[kb]) && within(spend(k, c), in.budget[k])) consider(c);
    }

    // BS kbar tight, BS k slack: p_tilde sits at its battery cap.
    if (w2(kb, 0) > 0.0 && w2(kb, 1) > 0.0) {
        auto consumption = [&](double nu) {
            double c = 0.0;
            for (int i = 0; i < 2; ++i) c += (1.0 - alpha) * std::max(nu - s2 * w2(kb, i), 0.0);
            return c;
        };
        const double hi0 = s2 * std::max(w2(kb, 0), w2(kb, 1)) + in.budget[kb] / (1.0 - alpha) + 1e-300;
        const double nu = detail::water_level(consumption, in.budget[kb], hi0);
        PerFrameSolution c = base;
        c.p_tilde = (alpha > 0.0 && h > 0.0) ? cap : 0.0;
        for (int i = 0; i < 2; ++i) c.power[i] = std::max(nu / w2(kb, i) - s2, 0.0);
        if (within(spend(k, c), in.budget[k]) && within(spend(kb, c), in.budget[kb])) consider(c);
    }

    // Both tight.
    if (auto eq = power_allocation_equality(in, k, alpha)) consider(*eq);
    return best;
}

/// Per-stage optimum with inequality budget constraints, maximised over alpha
/// by bi-section (the value is concave in alpha) and over the active BS.
inline PerFrameSolution per_frame_inequality(const PerFrameInput& in, double delta_alpha = kDefaultDeltaAlpha,
                                             std::optional<int> only_bs = std::nullopt) {
    std::optional<PerFrameSolution> best;
    for (int k = 0; k < 2; ++k) {
        if (only_bs && *only_bs != k) continue;
        auto f = [&](double a) {
            if (!(a >= 0.0 && a <= 1.0)) return -std::numeric_limits<double>::infinity();
            return power_allocation_inequality(in, k, a).sum_rate;
        };
        double alpha;
        if (f(0.0) > f(delta_alpha))
            alpha = 0.0;
        else if (f(1.0) > f(1.0 - delta_alpha))
            alpha = 1.0;
        else
            alpha = bisect_concave(f, 0.0, 1.0, delta_alpha).alpha;
        std::optional<PerFrameSolution> cand = power_allocation_inequality(in, k, alpha);
        if (detail::better(cand, best)) best = cand;
    }
    return best ? *best : detail::zero_solution(in);
}

/// Spend-what-you-have baseline: budgets set to B_k / T_f + E_k.
inline PerFrameSolution per_frame_greedy(const PerFrameInput& in, double delta_alpha = kDefaultDeltaAlpha) {
    PerFrameInput full = in;
    for (int k = 0; k < 2; ++k) full.budget[k] = in.max_budget(k);
    return per_frame_inequality(full, delta_alpha);
}

} // namespace fjt
