#pragma once

// Simulation-based approximate policy iteration: linear value features,
// LSPE(beta) policy evaluation and policy exploration restarts.

#include "fjt/channel.hpp"
#include "fjt/errors.hpp"
#include "fjt/mdp.hpp"
#include "fjt/zf.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fjt {

inline constexpr int kFeatureCount = 14;

inline const std::array<const char*, kFeatureCount>& feature_names() {
    static const std::array<const char*, kFeatureCount> names{
        "energy_0",  "energy_1",  "chan_00",   "chan_01",   "chan_10",  "chan_11",  "eig_0",
        "eig_1",     "energy_chan_00", "energy_chan_01", "energy_chan_10", "energy_chan_11", "energy_eig_0", "energy_eig_1"};
    return names;
}

/// phi(s): energy, channel, eigenvalue and second-order features.
inline Eigen::VectorXd features(const std::array<double, 2>& battery, const std::array<double, 2>& arrival,
                                const ChannelMatrix& h, double noise, double frame_length) {
    Eigen::VectorXd f(kFeatureCount);
    std::array<double, 2> avail{};
    for (int k = 0; k < 2; ++k) {
        avail[k] = battery[k] / frame_length + arrival[k];
        f(k) = std::log2(1.0 + avail[k] / noise);
    }
    const auto [r0, r1] = gram_eigenvalues(h);
    const std::array<double, 2> rho{r0, r1};
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) {
            f(2 + 2 * i + k) = std::log2(1.0 + h.gain(i, k));
            f(8 + 2 * i + k) = std::log2(1.0 + avail[k] * h.gain(i, k) / noise);
        }
    for (int i = 0; i < 2; ++i) {
        f(6 + i) = std::log2(1.0 + rho[i]);
        f(12 + i) = std::log2(1.0 + avail[i] * rho[i] / noise);
    }
    return f;
}

/// Feature rows for every state of the MDP, optionally with a constant column.
inline Eigen::MatrixXd feature_matrix(const DiscreteMdp& mdp, bool bias = false) {
    const auto& o = mdp.options();
    Eigen::MatrixXd phi(mdp.n_states(), kFeatureCount + (bias ? 1 : 0));
    for (int s = 0; s < mdp.n_states(); ++s) {
        phi.row(s).head(kFeatureCount) =
            features(mdp.battery_of(s), o.arrival, mdp.channel().states[mdp.channel_of(s)], o.noise, o.frame_length)
                .transpose();
        if (bias) phi(s, kFeatureCount) = 1.0;
    }
    return phi;
}

/// Running LSPE(beta) statistics; all zero before the first sample.
struct LspeAccumulators {
    Eigen::MatrixXd a;
    Eigen::MatrixXd b_mat;
    Eigen::VectorXd b;
    Eigen::VectorXd z;
    double lambda = 0.0;
    long i = -1; ///< index of the last processed sample

    explicit LspeAccumulators(int dim)
        : a(Eigen::MatrixXd::Zero(dim, dim)), b_mat(Eigen::MatrixXd::Zero(dim, dim)), b(Eigen::VectorXd::Zero(dim)),
          z(Eigen::VectorXd::Zero(dim)) {}
};

/// Folds sample (s_i, s_{i+1}, g_i) into the accumulators and returns
///   c_{i+1} = c_i + B_i^{-1} (A_i c_i + b_i),
/// with B_i regularised by ridge * trace(B_i) / dim.
inline Eigen::VectorXd lspe_step(LspeAccumulators& acc, const Eigen::VectorXd& phi_i, const Eigen::VectorXd& phi_next,
                                 double g_i, double beta, const Eigen::VectorXd& c, double ridge = 1e-8) {
    if (!(beta >= 0.0 && beta < 1.0)) throw domain_error("lspe_step: beta must lie in [0, 1)");
    const long i = ++acc.i;
    const double keep = static_cast<double>(i) / (i + 1);
    const double w = 1.0 / (i + 1);
    acc.z = beta * acc.z + phi_i;
    acc.lambda = keep * acc.lambda + w * g_i;
    acc.a = keep * acc.a + w * acc.z * (phi_next - phi_i).transpose();
    acc.b_mat = keep * acc.b_mat + w * phi_i * phi_i.transpose();
    acc.b = keep * acc.b + w * acc.z * (g_i - acc.lambda);
    const int dim = static_cast<int>(c.size());
    const double mu = std::max(ridge * acc.b_mat.trace() / dim, 1e-12);
    Eigen::MatrixXd reg = acc.b_mat;
    reg.diagonal().array() += mu;
    return c + reg.ldlt().solve(acc.a * c + acc.b);
}

struct LspeOptions {
    double beta = 0.5;
    long n_samples = 20000;
    double eps = 1e-4;
    /// samples accumulated before c is first updated; 0 selects 10 * dim
    long burn_in = 0;
    double ridge = 1e-8;
    double divergence_bound = 1e6;
};

struct LspeResult {
    Eigen::VectorXd c;
    double lambda = 0.0;
    long samples = 0;
    bool converged = false;
};

/// Orthogonal projector onto the row space of phi. Weight components outside
/// it do not change phi * c for any state.
inline Eigen::MatrixXd row_space_projector(const Eigen::MatrixXd& phi) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    int r = 0;
    while (r < sv.size() && sv(r) > 1e-10 * sv(0)) ++r;
    const Eigen::MatrixXd v = svd.matrixV().leftCols(r);
    return v * v.transpose();
}

/// LSPE(beta) along a simulated trajectory of a Markov chain. `chain` must
/// provide `double utility(int s)` and `int next(int s, std::mt19937_64&)`;
/// `phi` holds one feature row per state.
template <class Chain>
LspeResult lspe_evaluate(Chain& chain, const Eigen::MatrixXd& phi, int start, const LspeOptions& opt,
                         std::mt19937_64& rng, Eigen::VectorXd c0 = {}) {
    const int dim = static_cast<int>(phi.cols());
    if (opt.n_samples < dim) throw domain_error("lspe_evaluate: need at least as many samples as features");
    if (start < 0 || start >= phi.rows()) throw domain_error("lspe_evaluate: start state out of range");
    const Eigen::MatrixXd proj = row_space_projector(phi);
    LspeResult out;
    out.c = c0.size() == dim ? Eigen::VectorXd(proj * c0) : Eigen::VectorXd::Zero(dim);
    LspeAccumulators acc(dim);
    const long burn_in = opt.burn_in > 0 ? opt.burn_in : 10L * dim;
    int s = start;
    for (long n = 0; n < opt.n_samples; ++n) {
        const int s_next = chain.next(s, rng);
        const Eigen::VectorXd c_next = proj * lspe_step(acc, phi.row(s).transpose(), phi.row(s_next).transpose(),
                                                        chain.utility(s), opt.beta, out.c, opt.ridge);
        out.samples = n + 1;
        s = s_next;
        if (n + 1 < burn_in) continue;
        if (!c_next.allFinite() || c_next.norm() > opt.divergence_bound)
            throw convergence_error("lspe_evaluate: weights diverged; try a smaller beta", c_next.norm(), n + 1);
        const double step = (c_next - out.c).norm();
        out.c = c_next;
        if (n + 1 > burn_in && step < opt.eps) {
            out.converged = true;
            break;
        }
    }
    out.lambda = acc.lambda;
    return out;
}

namespace detail {

struct PolicyChain {
    const DiscreteMdp& mdp;
    const Policy& policy;
    std::discrete_distribution<int> draw;

    PolicyChain(const DiscreteMdp& m, const Policy& p)
        : mdp(m), policy(p), draw(m.channel().stationary_probs.begin(), m.channel().stationary_probs.end()) {}

    double utility(int s) const { return mdp.actions(s)[policy.action[s]].solution.sum_rate; }
    int next(int s, std::mt19937_64& rng) {
        return mdp.state_of_pair(mdp.actions(s)[policy.action[s]].next_battery, draw(rng));
    }
};

inline std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// LSPE(beta) evaluation of a tabulated policy on the MDP.
inline LspeResult evaluate_policy_lspe(const DiscreteMdp& mdp, const Policy& pol, const Eigen::MatrixXd& phi,
                                       const LspeOptions& opt, std::mt19937_64& rng, int start = -1,
                                       Eigen::VectorXd c0 = {}) {
    if (static_cast<int>(phi.rows()) != mdp.n_states()) throw domain_error("evaluate_policy_lspe: feature rows");
    detail::PolicyChain chain(mdp, pol);
    if (start < 0) start = mdp.reference_state();
    return lspe_evaluate(chain, phi, start, opt, rng, std::move(c0));
}

/// a(s) = argmax_a [g(s, a) + sum_c pi(c) phi(b'(s, a), c)^T c].
inline Policy improve_policy_approx(const DiscreteMdp& mdp, const Eigen::MatrixXd& phi, const Eigen::VectorXd& c) {
    const Eigen::VectorXd v = phi * c;
    std::vector<double> h(v.data(), v.data() + v.size());
    return greedy_policy(mdp, mdp.channel_average(h));
}

inline Policy random_policy(const DiscreteMdp& mdp, std::mt19937_64& rng) {
    Policy pol;
    pol.action.resize(mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(mdp.actions(s).size()) - 1);
        pol.action[s] = pick(rng);
    }
    return pol;
}

struct AdpOptions {
    LspeOptions lspe;
    int n_iterations = 10;   ///< N_I
    int n_explorations = 10; ///< N_E
    bool bias_feature = false;
    std::uint64_t seed = 1;
    /// Monte-Carlo scoring of every improved policy
    long eval_frames = 10000;
    std::uint64_t eval_seed = 12345;
};

struct AdpResult {
    Policy policy;
    Eigen::VectorXd weights;
    double lambda_best = -std::numeric_limits<double>::infinity();
    /// best score reached within each exploration
    std::vector<double> exploration_best;
};

inline AdpResult approximate_policy_iteration(const DiscreteMdp& mdp, const AdpOptions& opt) {
    if (opt.n_iterations < 1 || opt.n_explorations < 1)
        throw domain_error("approximate_policy_iteration: N_I and N_E must be >= 1");
    const Eigen::MatrixXd phi = feature_matrix(mdp, opt.bias_feature);
    McOptions mc;
    mc.n_frames = opt.eval_frames;
    mc.seed = opt.eval_seed;
    mc.keep_user_rates = false;
    AdpResult out;
    for (int e = 0; e < opt.n_explorations; ++e) {
        std::mt19937_64 rng(detail::splitmix(opt.seed ^ detail::splitmix(static_cast<std::uint64_t>(e) + 1)));
        std::uniform_int_distribution<int> any_state(0, mdp.n_states() - 1);
        Policy pol = random_policy(mdp, rng);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(phi.cols());
        double best_here = -std::numeric_limits<double>::infinity();
        for (int n = 0; n < opt.n_iterations; ++n) {
            const auto ev = evaluate_policy_lspe(mdp, pol, phi, opt.lspe, rng, any_state(rng), c);
            c = ev.c;
            pol = improve_policy_approx(mdp, phi, c);
            const double score = evaluate_policy_mc(mdp, pol, mc).average_rate;
            best_here = std::max(best_here, score);
            if (score > out.lambda_best) {
                out.lambda_best = score;
                out.policy = pol;
                out.weights = c;
            }
        }
        out.exploration_best.push_back(best_here);
    }
    return out;
}

/// Weight vector as a header line of feature names and one line of numbers.
inline void write_weights(std::ostream& os, const Eigen::VectorXd& c) {
    os.precision(17);
    os << '#';
    for (int j = 0; j < c.size(); ++j) os << ' ' << (j < kFeatureCount ? feature_names()[j] : "bias");
    os << '\n';
    for (int j = 0; j < c.size(); ++j) os << (j ? " " : "") << c(j);
    os << '\n';
}

inline Eigen::VectorXd read_weights(std::istream& is) {
    std::vector<double> v;
    for (std::string line; std::getline(is, line);) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        for (double x; ls >> x;) v.push_back(x);
        break;
    }
    if (v.size() != kFeatureCount && v.size() != kFeatureCount + 1)
        throw domain_error("read_weights: expected 14 or 15 weights, got " + std::to_string(v.size()));
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace fjt
