#include "fjt/adp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace fjt;

namespace {

// Finite chain with a transition matrix and a per-state reward.
struct TableChain {
    Eigen::MatrixXd p;
    Eigen::VectorXd g;

    double utility(int s) const { return g(s); }
    int next(int s, std::mt19937_64& rng) const {
        std::vector<double> w(p.cols());
        for (int j = 0; j < p.cols(); ++j) w[j] = p(s, j);
        std::discrete_distribution<int> d(w.begin(), w.end());
        return d(rng);
    }
};

TableChain three_state_chain() {
    TableChain c;
    c.p.resize(3, 3);
    c.p << 0.1, 0.6, 0.3, 0.5, 0.2, 0.3, 0.3, 0.3, 0.4;
    c.g.resize(3);
    c.g << 1.0, 3.0, -0.5;
    return c;
}

// lambda + h = g + P h with h(0) = 0, solved directly.
std::pair<double, Eigen::VectorXd> exact_relative_values(const TableChain& c) {
    const int n = static_cast<int>(c.g.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - c.p;
    m.col(0).setOnes();
    const Eigen::VectorXd x = m.colPivHouseholderQr().solve(c.g);
    Eigen::VectorXd h = x;
    h(0) = 0.0;
    return {x(0), h};
}

} // namespace

TEST(Features, IdentityChannelNoEnergy) {
    const auto f = features({0.0, 0.0}, {0.0, 0.0}, ChannelMatrix::from_entries(Eigen::Matrix2cd::Identity()), 1.0,
                            1.0);
    ASSERT_EQ(f.size(), 14);
    Eigen::VectorXd expect(14);
    expect << 0, 0, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0;
    EXPECT_LT((f - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Features, KnownValuesAndNonNegative) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 200; ++t) {
        const auto h = oracle::random_channel(rng);
        const std::array<double, 2> b{0.7, 0.0}, e{0.1, 0.6};
        const auto f = features(b, e, h, 2.0, 1.0);
        EXPECT_GE(f.minCoeff(), 0.0);
        EXPECT_NEAR(f(0), std::log2(1.0 + 0.8 / 2.0), 1e-12);
        EXPECT_NEAR(f(1), std::log2(1.0 + 0.6 / 2.0), 1e-12);
        EXPECT_NEAR(f(4), std::log2(1.0 + std::norm(h.entries(1, 0))), 1e-12);
        EXPECT_NEAR(f(9), std::log2(1.0 + 0.6 * std::norm(h.entries(0, 1)) / 2.0), 1e-12);
        // eigenvalues of H^H H from the characteristic polynomial
        const Eigen::Matrix2cd g = h.entries.adjoint() * h.entries;
        const double tr = g.trace().real(), det = g.determinant().real();
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        const double r_hi = tr / 2.0 + disc, r_lo = tr / 2.0 - disc;
        EXPECT_NEAR(std::exp2(f(6)) + std::exp2(f(7)) - 2.0, r_hi + r_lo, 1e-9 * (1.0 + tr));
        EXPECT_NEAR((std::exp2(f(6)) - 1.0) * (std::exp2(f(7)) - 1.0), r_hi * r_lo, 1e-9 * (1.0 + tr * tr));
    }
}

TEST(FeatureMatrix, RowsAndBiasColumn) {
    const auto mdp = oracle::small_mdp(1, 3, 2, 0.1, 0.2);
    const auto phi = feature_matrix(mdp);
    EXPECT_EQ(phi.rows(), mdp.n_states());
    EXPECT_EQ(phi.cols(), 14);
    const auto with_bias = feature_matrix(mdp, true);
    EXPECT_EQ(with_bias.cols(), 15);
    EXPECT_TRUE((with_bias.col(14).array() == 1.0).all());
    EXPECT_TRUE(with_bias.leftCols(14).isApprox(phi));
}

TEST(LspeStep, FirstSampleUsesZeroBoundary) {
    Eigen::VectorXd p0(3), p1(3), c(3);
    p0 << 1.0, 2.0, 0.5;
    p1 << 0.0, 1.0, 3.0;
    c << 0.2, -0.1, 0.3;
    LspeAccumulators acc(3);
    lspe_step(acc, p0, p1, 2.5, 0.7, c);
    EXPECT_EQ(acc.i, 0);
    EXPECT_TRUE(acc.z.isApprox(p0));
    EXPECT_TRUE(acc.a.isApprox(p0 * (p1 - p0).transpose()));
    EXPECT_TRUE(acc.b_mat.isApprox(p0 * p0.transpose()));
    EXPECT_DOUBLE_EQ(acc.lambda, 2.5);
    EXPECT_LT(acc.b.norm(), 1e-15);
}

TEST(LspeStep, AccumulatorIdentities) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    const int dim = 4, steps = 500;
    std::vector<Eigen::VectorXd> phis;
    std::vector<double> gs;
    for (int i = 0; i <= steps; ++i) {
        Eigen::VectorXd v(dim);
        for (int j = 0; j < dim; ++j) v(j) = n01(rng);
        phis.push_back(v);
        gs.push_back(n01(rng));
    }
    LspeAccumulators acc(dim);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
    const double beta = 0.4;
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < steps; ++i) {
        lspe_step(acc, phis[i], phis[i + 1], gs[i], beta, c);
        second += phis[i] * phis[i].transpose();
        z = beta * z + phis[i];
    }
    EXPECT_NEAR(steps * acc.lambda, std::accumulate(gs.begin(), gs.begin() + steps, 0.0), 1e-9);
    EXPECT_TRUE(acc.b_mat.isApprox(second / steps, 1e-12));
    EXPECT_TRUE(acc.z.isApprox(z, 1e-12));
}

TEST(LspeStep, ConstantTrajectoryKeepsWeights) {
    Eigen::VectorXd p(2), c(2);
    p << 1.0, 0.5;
    c << 0.3, -0.2;
    LspeAccumulators acc(2);
    for (int i = 0; i < 20; ++i) {
        const Eigen::VectorXd next = lspe_step(acc, p, p, 1.7, 0.0, c);
        EXPECT_LT(acc.a.norm(), 1e-15);
        EXPECT_LT((next - c).norm(), 1e-12);
    }
}

TEST(LspeStep, RejectsBadBeta) {
    LspeAccumulators acc(1);
    Eigen::VectorXd p = Eigen::VectorXd::Ones(1);
    EXPECT_THROW(lspe_step(acc, p, p, 0.0, 1.0, p), domain_error);
    EXPECT_THROW(lspe_step(acc, p, p, 0.0, -0.1, p), domain_error);
}

TEST(LspeEvaluate, ThreeStateChainMatchesLinearSolve) {
    const auto chain = three_state_chain();
    const auto [lambda, h] = exact_relative_values(chain);
    const Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(3, 3);
    for (double beta : {0.0, 0.5}) {
        LspeOptions opt;
        opt.beta = beta;
        opt.n_samples = 200000;
        opt.eps = 1e-12;
        std::mt19937_64 rng(11);
        auto c = chain;
        const auto r = lspe_evaluate(c, phi, 0, opt, rng);
        const Eigen::VectorXd v = (phi * r.c).array() - (phi * r.c)(0);
        EXPECT_LT((v - h).cwiseAbs().maxCoeff(), 0.05) << "beta " << beta;
        EXPECT_NEAR(r.lambda, lambda, 0.02);
    }
}

TEST(LspeEvaluate, SingleStateChainGivesUtility) {
    TableChain c;
    c.p = Eigen::MatrixXd::Ones(1, 1);
    c.g = Eigen::VectorXd::Constant(1, 2.25);
    LspeOptions opt;
    opt.n_samples = 100;
    std::mt19937_64 rng(1);
    EXPECT_DOUBLE_EQ(lspe_evaluate(c, Eigen::MatrixXd::Ones(1, 1), 0, opt, rng).lambda, 2.25);
}

TEST(LspeEvaluate, DivergenceIsReported) {
    auto chain = three_state_chain();
    LspeOptions opt;
    opt.beta = 0.0;
    opt.divergence_bound = 1e-3;
    opt.n_samples = 1000;
    std::mt19937_64 rng(2);
    EXPECT_THROW(lspe_evaluate(chain, Eigen::MatrixXd::Identity(3, 3), 0, opt, rng), convergence_error);
    opt.n_samples = 2;
    EXPECT_THROW(lspe_evaluate(chain, Eigen::MatrixXd::Identity(3, 3), 0, opt, rng), domain_error);
}

TEST(EvaluatePolicyLspe, GainAgreesWithMonteCarlo) {
    const auto mdp = oracle::small_mdp(4, 5, 3, 0.1, 0.5);
    const auto pol = relative_value_iteration(mdp, {}).policy;
    LspeOptions opt;
    opt.n_samples = 20000;
    opt.eps = 1e-12;
    std::mt19937_64 rng(5);
    const auto phi = feature_matrix(mdp);
    const auto lspe = evaluate_policy_lspe(mdp, pol, phi, opt, rng);
    McOptions mc;
    mc.n_frames = 20000;
    mc.seed = 6;
    const auto sim = evaluate_policy_mc(mdp, pol, mc);
    EXPECT_NEAR(lspe.lambda, sim.average_rate, 3.0 * std::sqrt(2.0) * sim.std_error + 1e-3);
}

TEST(EvaluatePolicyLspe, DeterministicPerSeed) {
    const auto mdp = oracle::small_mdp(5, 4, 2, 0.1, 0.3);
    const auto pol = spend_all_policy(mdp);
    const auto phi = feature_matrix(mdp);
    LspeOptions opt;
    opt.n_samples = 3000;
    std::mt19937_64 r1(9), r2(9);
    const auto a = evaluate_policy_lspe(mdp, pol, phi, opt, r1);
    const auto b = evaluate_policy_lspe(mdp, pol, phi, opt, r2);
    EXPECT_EQ(a.lambda, b.lambda);
    EXPECT_TRUE(a.c == b.c);
}

TEST(ImprovePolicyApprox, ZeroWeightsGiveMyopicPolicy) {
    const auto mdp = oracle::small_mdp(6, 4, 2, 0.2, 0.4);
    const auto phi = feature_matrix(mdp);
    const auto pol = improve_policy_approx(mdp, phi, Eigen::VectorXd::Zero(14));
    for (int s = 0; s < mdp.n_states(); ++s) {
        double best = -1.0;
        for (const auto& t : mdp.actions(s)) best = std::max(best, t.solution.sum_rate);
        EXPECT_DOUBLE_EQ(mdp.actions(s)[pol.action[s]].solution.sum_rate, best);
    }
}

TEST(ImprovePolicyApprox, IndicatorFeaturesReproduceExactImprovement) {
    const auto mdp = oracle::small_mdp(7, 4, 2, 0.1, 0.6);
    const Policy start = spend_all_policy(mdp);
    const auto ev = evaluate_policy_exact(mdp, start, mdp.reference_state());
    const Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(mdp.n_states(), mdp.n_states());
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(ev.h.data(), ev.h.size());
    const auto approx = improve_policy_approx(mdp, phi, c);
    // direct argmax of g + sum_c pi(c) h(next pair, c)
    for (int s = 0; s < mdp.n_states(); ++s) {
        double best = -1e300;
        for (const auto& t : mdp.actions(s)) {
            double v = t.solution.sum_rate;
            for (int ch = 0; ch < mdp.n_channels(); ++ch)
                v += mdp.channel().stationary_probs[ch] * ev.h[mdp.state_of_pair(t.next_battery, ch)];
            best = std::max(best, v);
        }
        const auto& t = mdp.actions(s)[approx.action[s]];
        double v = t.solution.sum_rate;
        for (int ch = 0; ch < mdp.n_channels(); ++ch)
            v += mdp.channel().stationary_probs[ch] * ev.h[mdp.state_of_pair(t.next_battery, ch)];
        EXPECT_NEAR(v, best, 1e-12);
    }
}

TEST(RandomPolicy, ActionsInRange) {
    const auto mdp = oracle::small_mdp(8, 4, 2, 0.1, 0.3);
    std::mt19937_64 rng(4);
    const auto p = random_policy(mdp, rng);
    for (int s = 0; s < mdp.n_states(); ++s) {
        EXPECT_GE(p.action[s], 0);
        EXPECT_LT(p.action[s], static_cast<int>(mdp.actions(s).size()));
    }
}

TEST(ApproximatePolicyIteration, SingleRoundIsWellDefined) {
    const auto mdp = oracle::small_mdp(9, 4, 2, 0.1, 0.4);
    AdpOptions opt;
    opt.n_iterations = 1;
    opt.n_explorations = 1;
    opt.eval_frames = 2000;
    opt.lspe.n_samples = 2000;
    const auto r = approximate_policy_iteration(mdp, opt);
    EXPECT_EQ(static_cast<int>(r.policy.action.size()), mdp.n_states());
    EXPECT_TRUE(std::isfinite(r.lambda_best));
    EXPECT_EQ(r.exploration_best.size(), 1u);
}

TEST(ApproximatePolicyIteration, MoreExplorationsNeverHurt) {
    const auto mdp = oracle::small_mdp(10, 5, 3, 0.1, 0.8);
    AdpOptions opt;
    opt.n_iterations = 3;
    opt.eval_frames = 3000;
    opt.lspe.n_samples = 3000;
    opt.seed = 21;
    opt.n_explorations = 1;
    const auto one = approximate_policy_iteration(mdp, opt);
    opt.n_explorations = 4;
    const auto four = approximate_policy_iteration(mdp, opt);
    EXPECT_GE(four.lambda_best, one.lambda_best);
    EXPECT_EQ(four.exploration_best[0], one.exploration_best[0]);
    EXPECT_EQ(four.lambda_best, *std::max_element(four.exploration_best.begin(), four.exploration_best.end()));
}

TEST(ApproximatePolicyIteration, DeterministicAndNearOptimal) {
    const auto mdp = oracle::small_mdp(11, 5, 3, 0.1, 0.6);
    AdpOptions opt;
    opt.n_iterations = 4;
    opt.n_explorations = 3;
    opt.eval_frames = 5000;
    opt.lspe.n_samples = 4000;
    const auto a = approximate_policy_iteration(mdp, opt);
    const auto b = approximate_policy_iteration(mdp, opt);
    EXPECT_EQ(a.policy.action, b.policy.action);
    EXPECT_EQ(a.lambda_best, b.lambda_best);
    const double lambda = relative_value_iteration(mdp, {}).value.lambda;
    EXPECT_LE(oracle::stationary_average(mdp, a.policy), lambda + 1e-6);
    EXPECT_GE(oracle::stationary_average(mdp, a.policy), 0.9 * lambda);
}

TEST(ApproximatePolicyIteration, RejectsZeroCounts) {
    const auto mdp = oracle::small_mdp(12, 2, 1, 0.1, 0.1);
    AdpOptions opt;
    opt.n_iterations = 0;
    EXPECT_THROW(approximate_policy_iteration(mdp, opt), domain_error);
}

TEST(Weights, RoundTrip) {
    Eigen::VectorXd c(14);
    for (int j = 0; j < 14; ++j) c(j) = 0.1 * j - 0.37;
    std::stringstream ss;
    write_weights(ss, c);
    EXPECT_EQ(ss.str().substr(0, 10), "# energy_0");
    const auto back = read_weights(ss);
    EXPECT_TRUE(back == c);
    std::stringstream bad("1 2 3\n");
    EXPECT_THROW(read_weights(bad), domain_error);
}
