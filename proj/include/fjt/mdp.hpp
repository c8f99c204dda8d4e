#pragma once

// Discretised battery/channel MDP and its exact solvers.
//
// State s = (b0, b1, c): battery level indices of the two BSs and a channel
// grid index. Actions are budget pairs (A_0, A_1); the per-stage utility is
// the per-frame optimum for that budget, and the next battery levels follow
// from what the per-frame solution actually spends.

#include "fjt/channel.hpp"
#include "fjt/errors.hpp"
#include "fjt/perframe.hpp"
#include "fjt/zf.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace fjt {

enum class ActionScheme {
    /// Battery step of one frame's harvest per BS; budgets land the next
    /// battery exactly on a grid level.
    battery_aligned,
    /// Shared uniform battery grid up to a cap; budgets are uniform fractions
    /// of B_k/T_f + E_k and the next battery is rounded to the nearest level.
    uniform_fraction,
};

enum class StageObjective {
    equality,   ///< both JT budget constraints tight
    inequality, ///< budgets are upper bounds
};

struct MdpOptions {
    std::array<double, 2> arrival{0.1, 0.1};
    double noise = 1.0;
    double frame_length = 1.0;
    int battery_levels = 8;
    int action_levels = 6;
    /// uniform_fraction only; 0 selects 20 * T_f * max(E).
    double battery_cap = 0.0;
    ActionScheme scheme = ActionScheme::battery_aligned;
    StageObjective objective = StageObjective::equality;
    double delta_alpha = kDefaultDeltaAlpha;
    /// Restricts the single-BS subframe to one BS.
    std::optional<int> only_bs;

    void validate() const {
        for (double e : arrival)
            if (!(e >= 0.0) || !std::isfinite(e)) throw domain_error("mdp: arrival rates must be finite and >= 0");
        if (!(noise > 0.0) || !(frame_length > 0.0)) throw domain_error("mdp: noise and frame length must be > 0");
        if (battery_levels < 1) throw domain_error("mdp: battery_levels must be >= 1");
        if (action_levels < 2) throw domain_error("mdp: action_levels must be >= 2");
        if (!(battery_cap >= 0.0)) throw domain_error("mdp: battery cap must be >= 0");
        if (!(delta_alpha > 0.0 && delta_alpha < 0.5)) throw domain_error("mdp: delta_alpha must lie in (0, 0.5)");
        if (only_bs && (*only_bs < 0 || *only_bs > 1)) throw domain_error("mdp: only_bs must be 0 or 1");
    }
};

/// Battery after one frame. Throws when the solution overdraws a battery.
inline std::array<double, 2> battery_update(const std::array<double, 2>& battery, const PerFrameSolution& sol,
                                            const PrecodingMatrix& w, const std::array<double, 2>& arrival,
                                            double frame_length, const std::array<double, 2>& cap) {
    const Eigen::Matrix2d w2 = row_powers(w);
    std::array<double, 2> next{};
    for (int k = 0; k < 2; ++k) {
        double spend = (1.0 - sol.alpha) * (w2(k, 0) * sol.power[0] + w2(k, 1) * sol.power[1]);
        if (k == sol.bs) spend += sol.alpha * sol.p_tilde;
        const double b = battery[k] + frame_length * (arrival[k] - spend);
        const double scale = std::max({1.0, battery[k], frame_length * arrival[k]});
        if (b < -1e-9 * scale)
            throw constraint_violation_error("battery_update: BS " + std::to_string(k) + " overdrawn by " +
                                             std::to_string(-b) + " J");
        next[k] = std::clamp(b, 0.0, cap[k]);
    }
    return next;
}

struct Transition {
    std::array<double, 2> budget{0.0, 0.0};
    PerFrameSolution solution;
    int next_battery = 0; ///< battery-pair index b0 * n1 + b1
};

/// Action index per state.
struct Policy {
    std::vector<int> action;
};

struct RelativeUtility {
    std::vector<double> h;
    double lambda = 0.0;
};

class DiscreteMdp {
public:
    using Stage = std::function<PerFrameSolution(const PerFrameInput&)>;

    DiscreteMdp(ChannelGrid grid, MdpOptions opt) : grid_(std::move(grid)), opt_(opt) {
        opt_.validate();
        grid_.validate();
        build_levels();
        for (const auto& s : grid_.states) precoders_.push_back(zf_weights(s));
        build_transitions();
    }

    const MdpOptions& options() const { return opt_; }
    const ChannelGrid& channel() const { return grid_; }
    const PrecodingMatrix& precoder(int c) const { return precoders_[c]; }

    int levels(int k) const { return static_cast<int>(levels_[k].size()); }
    double battery_value(int k, int level) const { return levels_[k][level]; }
    double battery_cap(int k) const { return levels_[k].back(); }
    int n_channels() const { return static_cast<int>(grid_.size()); }
    int n_battery_pairs() const { return levels(0) * levels(1); }
    int n_states() const { return n_battery_pairs() * n_channels(); }

    int battery_pair(int b0, int b1) const { return b0 * levels(1) + b1; }
    int state(int b0, int b1, int c) const { return battery_pair(b0, b1) * n_channels() + c; }
    int state_of_pair(int pair, int c) const { return pair * n_channels() + c; }
    int pair_of(int s) const { return s / n_channels(); }
    int channel_of(int s) const { return s % n_channels(); }
    std::array<int, 2> levels_of(int s) const {
        const int p = pair_of(s);
        return {p / levels(1), p % levels(1)};
    }
    std::array<double, 2> battery_of(int s) const {
        const auto b = levels_of(s);
        return {levels_[0][b[0]], levels_[1][b[1]]};
    }

    /// s0 = (0, 0, H_0) with H_0 the most probable channel unless given.
    int reference_state(std::optional<int> channel = std::nullopt) const {
        const int c = channel ? *channel : static_cast<int>(grid_.most_probable());
        if (c < 0 || c >= n_channels()) throw domain_error("mdp: reference channel out of range");
        return state(0, 0, c);
    }

    const std::vector<Transition>& actions(int s) const { return transitions_[s]; }

    PerFrameInput input(int s, const std::array<double, 2>& budget) const {
        PerFrameInput in;
        in.battery = battery_of(s);
        in.arrival = opt_.arrival;
        in.budget = budget;
        in.channel = grid_.states[channel_of(s)];
        in.precoder = precoders_[channel_of(s)];
        in.noise = opt_.noise;
        in.frame_length = opt_.frame_length;
        return in;
    }

    /// Per-stage utility under the configured objective.
    PerFrameSolution solve_stage(const PerFrameInput& in) const {
        if (opt_.objective == StageObjective::equality) return per_stage_utility(in, opt_.delta_alpha, opt_.only_bs);
        return per_frame_inequality(in, opt_.delta_alpha, opt_.only_bs);
    }

    /// Transition for an arbitrary per-frame solution taken in state s.
    Transition transition_for(int s, const std::array<double, 2>& budget, const PerFrameSolution& sol) const {
        Transition t;
        t.budget = budget;
        t.solution = sol;
        const auto next = battery_update(battery_of(s), sol, precoders_[channel_of(s)], opt_.arrival,
                                         opt_.frame_length, {battery_cap(0), battery_cap(1)});
        t.next_battery = battery_pair(project(0, next[0]), project(1, next[1]));
        return t;
    }

    /// Level index for a battery value: floor on the aligned grid (rounding
    /// up would create energy), nearest on the uniform grid.
    int project(int k, double b) const {
        const auto& lv = levels_[k];
        if (lv.size() == 1) return 0;
        const double step = lv[1] - lv[0];
        double x = b / step;
        int j;
        if (opt_.scheme == ActionScheme::battery_aligned)
            j = static_cast<int>(std::floor(x + 1e-9));
        else
            j = static_cast<int>(std::lround(x));
        return std::clamp(j, 0, static_cast<int>(lv.size()) - 1);
    }

    /// E[f(pair, c)] over the next channel.
    template <class F>
    double expect_over_channel(int pair, F&& f) const {
        double v = 0.0;
        for (int c = 0; c < n_channels(); ++c) v += grid_.stationary_probs[c] * f(state_of_pair(pair, c));
        return v;
    }

    /// sum_c pi(c) h(pair, c) for every battery pair.
    std::vector<double> channel_average(const std::vector<double>& h) const {
        std::vector<double> out(n_battery_pairs(), 0.0);
        for (int p = 0; p < n_battery_pairs(); ++p)
            for (int c = 0; c < n_channels(); ++c) out[p] += grid_.stationary_probs[c] * h[state_of_pair(p, c)];
        return out;
    }

private:
    void build_levels() {
        const int n = opt_.battery_levels;
        if (opt_.scheme == ActionScheme::battery_aligned) {
            for (int k = 0; k < 2; ++k) {
                const double step = opt_.frame_length * opt_.arrival[k];
                const int m = step > 0.0 ? n : 1;
                levels_[k].resize(m);
                for (int j = 0; j < m; ++j) levels_[k][j] = j * step;
            }
        } else {
            double cap = opt_.battery_cap;
            if (cap == 0.0) cap = 20.0 * opt_.frame_length * std::max(opt_.arrival[0], opt_.arrival[1]);
            const int m = cap > 0.0 ? n : 1;
            for (int k = 0; k < 2; ++k) {
                levels_[k].resize(m);
                for (int j = 0; j < m; ++j) levels_[k][j] = m == 1 ? 0.0 : cap * j / (m - 1);
            }
        }
    }

    std::vector<double> budget_options(int k, int level) const {
        const double b = levels_[k][level];
        const double top = b / opt_.frame_length + opt_.arrival[k];
        std::vector<double> out;
        if (opt_.scheme == ActionScheme::battery_aligned) {
            // land on level j after the frame: A = (B + T E - j * step) / T
            const double step = opt_.frame_length * opt_.arrival[k];
            if (step == 0.0) return {0.0};
            const int jmax = level + 1;
            for (int j = 0; j <= jmax; ++j) out.push_back(std::max(0.0, (b + step - j * step) / opt_.frame_length));
            if (out.size() > 1) out.front() = top;
        } else {
            const int m = opt_.action_levels;
            for (int j = 0; j < m; ++j) out.push_back(top * (m - 1 - j) / (m - 1));
            if (top == 0.0) out.resize(1);
        }
        return out;
    }

    void build_transitions() {
        transitions_.resize(n_states());
        for (int b0 = 0; b0 < levels(0); ++b0) {
            const auto a0 = budget_options(0, b0);
            for (int b1 = 0; b1 < levels(1); ++b1) {
                const auto a1 = budget_options(1, b1);
                for (int c = 0; c < n_channels(); ++c) {
                    const int s = state(b0, b1, c);
                    auto& list = transitions_[s];
                    list.reserve(a0.size() * a1.size());
                    for (double x0 : a0)
                        for (double x1 : a1) {
                            const std::array<double, 2> budget{x0, x1};
                            list.push_back(transition_for(s, budget, solve_stage(input(s, budget))));
                        }
                }
            }
        }
    }

    ChannelGrid grid_;
    MdpOptions opt_;
    std::array<std::vector<double>, 2> levels_;
    std::vector<PrecodingMatrix> precoders_;
    std::vector<std::vector<Transition>> transitions_;
};

/// Greedy policy w.r.t. a continuation value indexed by battery pair. Ties
/// (within 1e-12 relative) keep the action of `current` when one is given.
inline Policy greedy_policy(const DiscreteMdp& mdp, const std::vector<double>& continuation,
                            const Policy* current = nullptr, std::vector<double>* best_values = nullptr) {
    Policy pol;
    pol.action.resize(mdp.n_states());
    if (best_values) best_values->assign(mdp.n_states(), 0.0);
    for (int s = 0; s < mdp.n_states(); ++s) {
        const auto& acts = mdp.actions(s);
        int best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < static_cast<int>(acts.size()); ++a) {
            const double v = acts[a].solution.sum_rate + continuation[acts[a].next_battery];
            if (v > best_v) {
                best_v = v;
                best = a;
            }
        }
        if (current) {
            const int a = current->action[s];
            const double v = acts[a].solution.sum_rate + continuation[acts[a].next_battery];
            if (v >= best_v - 1e-12 * std::max(1.0, std::abs(best_v))) {
                best = a;
                best_v = std::max(best_v, v);
            }
        }
        pol.action[s] = best;
        if (best_values) (*best_values)[s] = best_v;
    }
    return pol;
}

/// Policy that spends the largest total budget in every state.
inline Policy spend_all_policy(const DiscreteMdp& mdp) {
    Policy pol;
    pol.action.resize(mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s) {
        const auto& acts = mdp.actions(s);
        int best = 0;
        for (int a = 1; a < static_cast<int>(acts.size()); ++a)
            if (acts[a].budget[0] + acts[a].budget[1] > acts[best].budget[0] + acts[best].budget[1]) best = a;
        pol.action[s] = best;
    }
    return pol;
}

struct RviOptions {
    double tau = 0.9;
    double tol = 1e-5;
    long max_iterations = 100000;
    std::optional<int> reference_channel;
};

struct RviResult {
    /// h satisfies lambda + h(s) = max_a [g(s,a) + E h(s')] with h(s0) = 0.
    RelativeUtility value;
    Policy policy;
    long iterations = 0;
    double residual = 0.0;
};

/// Relative value iteration with damping tau:
///   Lambda(s0) = max_a [g(s0,a) + tau E h(s')],
///   h(s) <- (1 - tau) h(s) + max_a [g(s,a) + tau E h(s')] - Lambda(s0).
inline RviResult relative_value_iteration(const DiscreteMdp& mdp, const RviOptions& opt = {}) {
    if (!(opt.tau > 0.0 && opt.tau < 1.0)) throw domain_error("relative_value_iteration: tau must lie in (0, 1)");
    if (!(opt.tol > 0.0)) throw domain_error("relative_value_iteration: tol must be positive");
    const int n = mdp.n_states();
    const int s0 = mdp.reference_state(opt.reference_channel);
    std::vector<double> h(n, 0.0), best(n, 0.0), cont;
    RviResult out;
    for (long it = 1;; ++it) {
        cont = mdp.channel_average(h);
        for (double& v : cont) v *= opt.tau;
        greedy_policy(mdp, cont, nullptr, &best);
        const double lambda = best[s0];
        double resid = 0.0;
        for (int s = 0; s < n; ++s) {
            const double next = (1.0 - opt.tau) * h[s] + best[s] - lambda;
            resid = std::max(resid, std::abs(next - h[s]));
            h[s] = next;
        }
        out.iterations = it;
        out.residual = resid;
        out.value.lambda = lambda;
        if (resid < opt.tol) break;
        if (it >= opt.max_iterations)
            throw convergence_error("relative_value_iteration: no convergence", resid, it);
    }
    out.value.h = h;
    for (double& v : out.value.h) v *= opt.tau;
    out.policy = greedy_policy(mdp, mdp.channel_average(out.value.h));
    return out;
}

/// Solves lambda + h(s) = g(s, a(s)) + E h(s') with h(s0) = 0.
inline RelativeUtility evaluate_policy_exact(const DiscreteMdp& mdp, const Policy& pol, int s0) {
    const int n = mdp.n_states();
    // unknowns: x[s0] = lambda, x[s] = h(s) otherwise
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd rhs(n);
    for (int s = 0; s < n; ++s) {
        const auto& t = mdp.actions(s)[pol.action[s]];
        rhs(s) = t.solution.sum_rate;
        for (int c = 0; c < mdp.n_channels(); ++c) {
            const int s2 = mdp.state_of_pair(t.next_battery, c);
            if (s2 != s0) m(s, s2) -= mdp.channel().stationary_probs[c];
        }
        m(s, s0) = 1.0;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (lu.rank() < n) throw numeric_error("evaluate_policy_exact: singular evaluation system (multichain policy?)");
    const Eigen::VectorXd x = lu.solve(rhs);
    if (!x.allFinite()) throw numeric_error("evaluate_policy_exact: non-finite solution");
    RelativeUtility out;
    out.lambda = x(s0);
    out.h.assign(x.data(), x.data() + n);
    out.h[s0] = 0.0;
    return out;
}

/// Gain and bias of a possibly multichain policy: g = P g and
/// g + h = r + P h, with h normalised to zero stationary mean on every
/// recurrent class.
struct PolicyGain {
    std::vector<double> gain;
    std::vector<double> h;
    /// recurrent class index per state, -1 for transient states
    std::vector<int> recurrent_class;
    int n_classes = 0;
};

inline PolicyGain evaluate_policy_multichain(const DiscreteMdp& mdp, const Policy& pol) {
    const int n = mdp.n_states();
    if (static_cast<int>(pol.action.size()) != n) throw domain_error("evaluate_policy_multichain: policy size");
    const auto& probs = mdp.channel().stationary_probs;
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd r(n);
    std::vector<std::vector<int>> succ(n);
    for (int s = 0; s < n; ++s) {
        const auto& t = mdp.actions(s)[pol.action[s]];
        r(s) = t.solution.sum_rate;
        for (int c = 0; c < mdp.n_channels(); ++c) {
            if (probs[c] <= 0.0) continue;
            const int s2 = mdp.state_of_pair(t.next_battery, c);
            p(s, s2) += probs[c];
            succ[s].push_back(s2);
        }
    }
    // reachability closure by breadth-first search from every state
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
    for (int s = 0; s < n; ++s) {
        std::vector<int> queue{s};
        reach[s][s] = 1;
        for (std::size_t q = 0; q < queue.size(); ++q)
            for (int t : succ[queue[q]])
                if (!reach[s][t]) {
                    reach[s][t] = 1;
                    queue.push_back(t);
                }
    }
    PolicyGain out;
    out.recurrent_class.assign(n, -1);
    std::vector<std::vector<int>> classes;
    for (int s = 0; s < n; ++s) {
        if (out.recurrent_class[s] >= 0) continue;
        bool closed = true;
        for (int t = 0; t < n && closed; ++t)
            if (reach[s][t] && !reach[t][s]) closed = false;
        if (!closed) continue;
        std::vector<int> members;
        for (int t = 0; t < n; ++t)
            if (reach[s][t]) {
                members.push_back(t);
                out.recurrent_class[t] = static_cast<int>(classes.size());
            }
        classes.push_back(std::move(members));
    }
    out.n_classes = static_cast<int>(classes.size());
    out.gain.assign(n, 0.0);
    out.h.assign(n, 0.0);
    for (const auto& cls : classes) {
        const int m = static_cast<int>(cls.size());
        Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(m, m);
        Eigen::VectorXd rhs(m);
        for (int i = 0; i < m; ++i) {
            rhs(i) = r(cls[i]);
            for (int j = 1; j < m; ++j) sys(i, j) -= p(cls[i], cls[j]);
            sys(i, 0) = 1.0; // unknown 0 is the class gain, h(cls[0]) = 0
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(sys);
        if (lu.rank() < m) throw numeric_error("evaluate_policy_multichain: singular class system");
        const Eigen::VectorXd x = lu.solve(rhs);
        // stationary distribution of the class
        Eigen::MatrixXd st(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) st(i, j) = (i == j ? 1.0 : 0.0) - p(cls[j], cls[i]);
        st.row(m - 1).setOnes();
        Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
        e(m - 1) = 1.0;
        const Eigen::VectorXd pi = st.fullPivLu().solve(e);
        double mean = 0.0;
        for (int i = 1; i < m; ++i) mean += pi(i) * x(i);
        for (int i = 0; i < m; ++i) {
            out.gain[cls[i]] = x(0);
            out.h[cls[i]] = (i == 0 ? 0.0 : x(i)) - mean;
        }
    }
    std::vector<int> transient;
    for (int s = 0; s < n; ++s)
        if (out.recurrent_class[s] < 0) transient.push_back(s);
    if (!transient.empty()) {
        const int m = static_cast<int>(transient.size());
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
        Eigen::VectorXd bg = Eigen::VectorXd::Zero(m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) a(i, j) -= p(transient[i], transient[j]);
            for (int t = 0; t < n; ++t)
                if (out.recurrent_class[t] >= 0) bg(i) += p(transient[i], t) * out.gain[t];
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (lu.rank() < m) throw numeric_error("evaluate_policy_multichain: singular transient system");
        const Eigen::VectorXd gt = lu.solve(bg);
        Eigen::VectorXd bh(m);
        for (int i = 0; i < m; ++i) {
            bh(i) = r(transient[i]) - gt(i);
            for (int t = 0; t < n; ++t)
                if (out.recurrent_class[t] >= 0) bh(i) += p(transient[i], t) * out.h[t];
        }
        const Eigen::VectorXd ht = lu.solve(bh);
        for (int i = 0; i < m; ++i) {
            out.gain[transient[i]] = gt(i);
            out.h[transient[i]] = ht(i);
        }
    }
    return out;
}

struct PolicyIterationResult {
    RelativeUtility value;
    Policy policy;
    /// gain of the reference state per iteration
    std::vector<double> lambda_trace;
    long iterations = 0;
};

/// Policy iteration for the average-reward criterion. Iterates may be
/// multichain (a policy that spends exactly the harvest keeps its battery
/// level forever), so evaluation solves for a gain vector and the improvement
/// step first maximises the expected next gain, then g + E h among the
/// gain-maximising actions. The current action is kept on ties.
inline PolicyIterationResult policy_iteration_exact(const DiscreteMdp& mdp, std::optional<Policy> initial = std::nullopt,
                                                    long max_iterations = 1000,
                                                    std::optional<int> reference_channel = std::nullopt) {
    const int s0 = mdp.reference_state(reference_channel);
    const int n = mdp.n_states();
    PolicyIterationResult out;
    out.policy = initial ? *initial : spend_all_policy(mdp);
    if (static_cast<int>(out.policy.action.size()) != n)
        throw domain_error("policy_iteration_exact: policy size mismatch");
    for (long it = 1;; ++it) {
        const PolicyGain ev = evaluate_policy_multichain(mdp, out.policy);
        out.lambda_trace.push_back(ev.gain[s0]);
        out.iterations = it;
        const auto next_gain = mdp.channel_average(ev.gain);
        const auto next_h = mdp.channel_average(ev.h);
        Policy next = out.policy;
        for (int s = 0; s < n; ++s) {
            const auto& acts = mdp.actions(s);
            const int cur = out.policy.action[s];
            double g_max = -std::numeric_limits<double>::infinity();
            for (const auto& t : acts) g_max = std::max(g_max, next_gain[t.next_battery]);
            const double g_tol = 1e-10 * std::max(1.0, std::abs(g_max));
            auto in_set = [&](int a) { return next_gain[acts[a].next_battery] >= g_max - g_tol; };
            if (!in_set(cur)) {
                int best = cur;
                double best_g = -std::numeric_limits<double>::infinity();
                for (int a = 0; a < static_cast<int>(acts.size()); ++a)
                    if (next_gain[acts[a].next_battery] > best_g) {
                        best_g = next_gain[acts[a].next_battery];
                        best = a;
                    }
                next.action[s] = best;
                continue;
            }
            auto value = [&](int a) { return acts[a].solution.sum_rate + next_h[acts[a].next_battery]; };
            int best = cur;
            double best_v = value(cur);
            for (int a = 0; a < static_cast<int>(acts.size()); ++a) {
                if (!in_set(a)) continue;
                const double v = value(a);
                if (v > best_v + 1e-12 * std::max(1.0, std::abs(best_v))) {
                    best_v = v;
                    best = a;
                }
            }
            next.action[s] = best;
        }
        if (next.action == out.policy.action) {
            out.value.lambda = ev.gain[s0];
            out.value.h = ev.h;
            for (double& v : out.value.h) v -= ev.h[s0];
            break;
        }
        out.policy = std::move(next);
        if (it >= max_iterations)
            throw convergence_error("policy_iteration_exact: policy still changing", 0.0, it);
    }
    return out;
}

struct FrameRecord {
    long frame = 0;
    int channel = 0;
    std::array<double, 2> battery{0.0, 0.0};
    PerFrameSolution solution;
};

struct McOptions {
    long n_frames = 10000;
    std::uint64_t seed = 1;
    bool keep_user_rates = true;
    bool keep_trace = false;
    int batches = 20;
};

struct McResult {
    double average_rate = 0.0;
    double std_error = 0.0;
    double average_alpha = 0.0;
    long n_frames = 0;
    /// two entries per frame: user 0, user 1
    std::vector<double> user_rates;
    std::vector<FrameRecord> trace;
};

/// Closed-loop simulation from s = (0, 0, c_1). `step(s)` returns the
/// transition taken in state s. Channel indices come from their own stream,
/// so every policy sees the same channel sequence for a given seed.
template <class Step>
McResult simulate(const DiscreteMdp& mdp, Step&& step, const McOptions& opt) {
    if (opt.n_frames < 1) throw domain_error("simulate: n_frames must be >= 1");
    std::mt19937_64 rng(opt.seed);
    std::discrete_distribution<int> draw(mdp.channel().stationary_probs.begin(), mdp.channel().stationary_probs.end());
    McResult out;
    out.n_frames = opt.n_frames;
    if (opt.keep_user_rates) out.user_rates.reserve(2 * opt.n_frames);
    const int nb = std::max(1, std::min<int>(opt.batches, static_cast<int>(opt.n_frames)));
    std::vector<double> batch_sum(nb, 0.0);
    std::vector<long> batch_n(nb, 0);
    int pair = mdp.battery_pair(0, 0);
    double rate_sum = 0.0, alpha_sum = 0.0;
    for (long f = 0; f < opt.n_frames; ++f) {
        const int c = draw(rng);
        const int s = mdp.state_of_pair(pair, c);
        const Transition& t = step(s);
        rate_sum += t.solution.sum_rate;
        alpha_sum += t.solution.alpha;
        const int b = static_cast<int>(f * nb / opt.n_frames);
        batch_sum[b] += t.solution.sum_rate;
        ++batch_n[b];
        if (opt.keep_user_rates || opt.keep_trace) {
            const auto in = mdp.input(s, t.budget);
            if (opt.keep_user_rates) {
                const auto r = user_rates(in, t.solution);
                out.user_rates.push_back(r[0]);
                out.user_rates.push_back(r[1]);
            }
            if (opt.keep_trace) out.trace.push_back({f, c, in.battery, t.solution});
        }
        pair = t.next_battery;
    }
    out.average_rate = rate_sum / opt.n_frames;
    out.average_alpha = alpha_sum / opt.n_frames;
    if (nb > 1) {
        double m = 0.0, v = 0.0;
        for (int b = 0; b < nb; ++b) m += batch_sum[b] / batch_n[b];
        m /= nb;
        for (int b = 0; b < nb; ++b) v += std::pow(batch_sum[b] / batch_n[b] - m, 2);
        out.std_error = std::sqrt(v / (nb - 1) / nb);
    }
    return out;
}

inline McResult evaluate_policy_mc(const DiscreteMdp& mdp, const Policy& pol, const McOptions& opt) {
    if (static_cast<int>(pol.action.size()) != mdp.n_states())
        throw domain_error("evaluate_policy_mc: policy size mismatch");
    return simulate(mdp, [&](int s) -> const Transition& { return mdp.actions(s)[pol.action[s]]; }, opt);
}

/// Online policy: `decide` maps the per-frame input (budgets at B_k/T_f + E_k)
/// to a solution. Decisions are memoised per discrete state.
inline McResult evaluate_callback_mc(const DiscreteMdp& mdp, const std::function<PerFrameSolution(const PerFrameInput&)>& decide,
                                     const McOptions& opt) {
    std::unordered_map<int, Transition> memo;
    auto step = [&](int s) -> const Transition& {
        auto it = memo.find(s);
        if (it != memo.end()) return it->second;
        auto in = mdp.input(s, {0.0, 0.0});
        in.budget = {in.max_budget(0), in.max_budget(1)};
        return memo.emplace(s, mdp.transition_for(s, in.budget, decide(in))).first->second;
    };
    return simulate(mdp, step, opt);
}

/// One line per state: b0 b1 c h A0 A1.
inline void write_value_table(std::ostream& os, const DiscreteMdp& mdp, const RelativeUtility& v, const Policy& pol) {
    os.precision(10);
    os << "# lambda " << v.lambda << "\n# b0 b1 channel h A0_W A1_W\n";
    for (int s = 0; s < mdp.n_states(); ++s) {
        const auto b = mdp.levels_of(s);
        const auto& t = mdp.actions(s)[pol.action[s]];
        os << b[0] << ' ' << b[1] << ' ' << mdp.channel_of(s) << ' ' << v.h[s] << ' ' << t.budget[0] << ' '
           << t.budget[1] << '\n';
    }
}

} // namespace fjt
