#include "doctest.h"

#include <cmath>

#include "fedrl/fednpg.hpp"
#include "fedrl/random_mdp.hpp"
#include "fedrl/rng.hpp"
#include "test_util.hpp"

using namespace fedrl;
using testutil::CentralizedNpg;

namespace {

RunConfig base_config(MixingMatrix w, double eta, double tau, std::uint64_t seed = 0) {
    RunConfig config(std::move(w));
    config.eta = eta;
    config.tau = tau;
    config.seed = seed;
    return config;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("MultiTaskRewards averages its tables") {
    Matrix a = Matrix::Constant(2, 2, 1.0);
    Matrix b = Matrix::Constant(2, 2, 0.0);
    const MultiTaskRewards rewards({RewardTable{a}, RewardTable{b}});
    CHECK(rewards.averaged().r(0, 0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(MultiTaskRewards(std::vector<RewardTable>{}), std::invalid_argument);
}

TEST_CASE("init_state") {
    const auto prob = random_mdp(3, 2, 3, 0.8, 301);
    const RunConfig config = base_config(standard_ring(3), 0.1, 0.0);
    const FederatedState state = init_state(prob.mdp, prob.rewards, config);

    SUBCASE("policies start uniform") {
        for (int agent = 0; agent < 3; ++agent)
            for (int col = 0; col < 6; ++col)
                CHECK(state.log_policies(agent, col) == doctest::Approx(-std::log(2.0)));
    }
    SUBCASE("tracker-mean invariant holds at t = 0 by construction") {
        CHECK(state.tracker_mean_residual() == 0.0);
    }
    SUBCASE("N = 1 tracker is the exact Q of the uniform policy") {
        const auto solo = random_mdp(3, 2, 1, 0.8, 302);
        const RunConfig cfg = base_config(fully_connected(1), 0.1, 0.0);
        const FederatedState s = init_state(solo.mdp, solo.rewards, cfg);
        const Matrix q = exact_q(solo.mdp, Policy::uniform(3, 2), solo.rewards.r_n[0]);
        for (int s_i = 0; s_i < 3; ++s_i)
            for (int a = 0; a < 2; ++a) CHECK(s.tracker(0, s_i * 2 + a) == q(s_i, a));
    }
}

TEST_CASE("vanilla_step") {
    SUBCASE("N = 1 reduces to centralized NPG exactly") {
        const auto prob = random_mdp(4, 3, 1, 0.9, 311);
        const RunConfig config = base_config(fully_connected(1), 0.2, 0.0);
        FederatedState state = init_state(prob.mdp, prob.rewards, config);
        CentralizedNpg oracle(4, 3);
        for (int t = 0; t < 20; ++t) {
            CHECK(max_abs_diff(average_policy(state).log_prob, oracle.policy.log_prob) < 1e-12);
            state = vanilla_step(state, prob.mdp, prob.rewards, config);
            oracle.step(prob.mdp, prob.rewards.r_n[0], 0.2, 0.0);
        }
    }
    SUBCASE("sigma = 0 average-policy trajectory matches centralized NPG on the mean reward") {
        const auto prob = random_mdp(5, 3, 4, 0.9, 312);
        const RunConfig config = base_config(fully_connected(4), 0.15, 0.0);
        FederatedState state = init_state(prob.mdp, prob.rewards, config);
        CentralizedNpg oracle(5, 3);
        const RewardTable avg = prob.rewards.averaged();
        for (int t = 0; t < 50; ++t) {
            CHECK(max_abs_diff(average_policy(state).log_prob, oracle.policy.log_prob) < 1e-10);
            state = vanilla_step(state, prob.mdp, prob.rewards, config);
            oracle.step(prob.mdp, avg, 0.15, 0.0);
        }
    }
    SUBCASE("eta = 0 leaves common-initialized policies unchanged") {
        const auto prob = random_mdp(3, 2, 3, 0.8, 313);
        const RunConfig config = base_config(standard_ring(3), 0.0, 0.0);
        const FederatedState state = init_state(prob.mdp, prob.rewards, config);
        const FederatedState next = vanilla_step(state, prob.mdp, prob.rewards, config);
        CHECK(max_abs_diff(next.log_policies, state.log_policies) < 1e-14);
        CHECK(max_abs_diff(next.tracker, state.tracker) > 0.0);  // tracker re-mixes
    }
    SUBCASE("tracker-mean invariant holds along a ring run") {
        const auto prob = random_mdp(3, 2, 4, 0.85, 314);
        const RunConfig config = base_config(standard_ring(4), 0.1, 0.0);
        FederatedState state = init_state(prob.mdp, prob.rewards, config);
        for (int t = 0; t < 25; ++t) {
            state = vanilla_step(state, prob.mdp, prob.rewards, config);
            CHECK(state.tracker_mean_residual() < kTrackerMeanTol);
        }
    }
}

TEST_CASE("regularized_step") {
    SUBCASE("tau = 0 path equals vanilla bitwise") {
        const auto prob = random_mdp(4, 2, 3, 0.9, 321);
        const RunConfig config = base_config(standard_ring(3), 0.1, 0.0);
        FederatedState a = init_state(prob.mdp, prob.rewards, config);
        FederatedState b = a;
        for (int t = 0; t < 10; ++t) {
            a = vanilla_step(a, prob.mdp, prob.rewards, config);
            b = regularized_step(b, prob.mdp, prob.rewards, config);
            CHECK(max_abs_diff(a.log_policies, b.log_policies) == 0.0);
            CHECK(max_abs_diff(a.tracker, b.tracker) == 0.0);
        }
    }
    SUBCASE("N = 1 with eta = (1-gamma)/tau jumps to softmax(Q_tau / tau)") {
        const auto prob = random_mdp(4, 3, 1, 0.9, 322);
        const double tau = 0.1;
        const double eta = (1.0 - 0.9) / tau;
        const RunConfig config = base_config(fully_connected(1), eta, tau);
        FederatedState state = init_state(prob.mdp, prob.rewards, config);
        const Matrix q0 = soft_q(prob.mdp, Policy::uniform(4, 3), prob.rewards.r_n[0], tau);
        state = regularized_step(state, prob.mdp, prob.rewards, config);
        const Policy expected = policy_from_logits(q0 / tau);
        CHECK(max_abs_diff(average_policy(state).log_prob, expected.log_prob) < 1e-12);
    }
    SUBCASE("sigma = 0 two-agent run matches the centralized regularized oracle") {
        const auto prob = random_mdp(4, 2, 2, 0.9, 323);
        const double tau = 0.05;
        const RunConfig config = base_config(fully_connected(2), 0.2, tau);
        FederatedState state = init_state(prob.mdp, prob.rewards, config);
        CentralizedNpg oracle(4, 2);
        const RewardTable avg = prob.rewards.averaged();
        for (int t = 0; t < 50; ++t) {
            CHECK(max_abs_diff(average_policy(state).log_prob, oracle.policy.log_prob) < 1e-10);
            state = regularized_step(state, prob.mdp, prob.rewards, config);
            oracle.step(prob.mdp, avg, 0.2, tau);
        }
    }
    SUBCASE("eta beyond (1-gamma)/tau is rejected at the step level") {
        const auto prob = random_mdp(3, 2, 2, 0.9, 324);
        const RunConfig config = base_config(fully_connected(2), 2.0, 0.1);
        const FederatedState state = init_state(prob.mdp, prob.rewards, config);
        CHECK_THROWS_AS(regularized_step(state, prob.mdp, prob.rewards, config),
                        std::invalid_argument);
    }
}

TEST_CASE("no_tracking_step") {
    SUBCASE("N = 1 is identical to the tracking step") {
        const auto prob = random_mdp(3, 2, 1, 0.85, 331);
        const RunConfig config = base_config(fully_connected(1), 0.1, 0.0);
        FederatedState a = init_state(prob.mdp, prob.rewards, config);
        FederatedState b = a;
        for (int t = 0; t < 10; ++t) {
            a = vanilla_step(a, prob.mdp, prob.rewards, config);
            b = no_tracking_step(b, prob.mdp, prob.rewards, config);
            CHECK(max_abs_diff(a.log_policies, b.log_policies) == 0.0);
            CHECK(max_abs_diff(a.tracker, b.tracker) < 1e-14);
        }
    }
    SUBCASE("sigma = 0 makes every tracker row the mean local Q") {
        const auto prob = random_mdp(3, 2, 3, 0.85, 332);
        const RunConfig config = base_config(fully_connected(3), 0.1, 0.0);
        FederatedState state = init_state(prob.mdp, prob.rewards, config);
        state = no_tracking_step(state, prob.mdp, prob.rewards, config);
        const Eigen::RowVectorXd mean_q = state.last_q.colwise().mean();
        for (int agent = 0; agent < 3; ++agent)
            CHECK((state.tracker.row(agent) - mean_q).lpNorm<Eigen::Infinity>() < 1e-13);
    }
}

TEST_CASE("average_policy") {
    SUBCASE("identical agents return that policy") {
        FederatedState state;
        state.num_states = 2;
        state.num_actions = 2;
        state.log_policies = Matrix(3, 4);
        Matrix theta(2, 2);
        theta << 0.3, -0.7, 1.1, 0.0;
        const Policy p = policy_from_logits(theta);
        for (int agent = 0; agent < 3; ++agent)
            for (int s = 0; s < 2; ++s)
                for (int a = 0; a < 2; ++a)
                    state.log_policies(agent, s * 2 + a) = p.log_prob(s, a);
        CHECK(max_abs_diff(average_policy(state).log_prob, p.log_prob) < 1e-14);
    }
    SUBCASE("geometric mean of (0.5,0.5) and (0.9,0.1) is (0.75,0.25)") {
        FederatedState state;
        state.num_states = 1;
        state.num_actions = 2;
        state.log_policies = Matrix(2, 2);
        state.log_policies << std::log(0.5), std::log(0.5), std::log(0.9), std::log(0.1);
        const Policy avg = average_policy(state);
        CHECK(avg.prob(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(avg.prob(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("uniform agents stay uniform") {
        FederatedState state;
        state.num_states = 2;
        state.num_actions = 3;
        state.log_policies = Matrix::Constant(4, 6, -std::log(3.0));
        const Policy avg = average_policy(state);
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 3; ++a) CHECK(avg.prob(s, a) == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("run") {
    const auto prob = random_mdp(4, 2, 3, 0.8, 341);

    SUBCASE("zero iterations produce exactly the initial metrics row") {
        RunConfig config = base_config(standard_ring(3), 0.1, 0.0);
        config.iterations = 0;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(4), config);
        CHECK(result.metrics.size() == 1);
        CHECK(result.metrics[0].iter == 0);
    }
    SUBCASE("same seed gives bitwise-identical metric sequences") {
        RunConfig config = base_config(standard_ring(3), 0.1, 0.005, 77);
        config.iterations = 15;
        config.eval_mode = EvalMode::noisy_exact(1e-3);
        config.diagnostics.consensus = true;
        const RunResult a = run(prob.mdp, prob.rewards, StateDistribution::uniform(4), config);
        const RunResult b = run(prob.mdp, prob.rewards, StateDistribution::uniform(4), config);
        REQUIRE(a.metrics.size() == b.metrics.size());
        for (std::size_t i = 0; i < a.metrics.size(); ++i) {
            CHECK(a.metrics[i].value == b.metrics[i].value);
            CHECK(a.metrics[i].gap == b.metrics[i].gap);
            CHECK(*a.metrics[i].consensus_err == *b.metrics[i].consensus_err);
        }
    }
    SUBCASE("gap never undercuts the optimum and tracker invariant holds") {
        RunConfig config = base_config(standard_ring(3), 0.1, 0.0, 5);
        config.iterations = 30;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(4), config);
        for (const auto& m : result.metrics) CHECK(m.gap >= -1e-9);
        CHECK(result.max_tracker_residual < kTrackerMeanTol);
    }
    SUBCASE("eta above the admissible regularized range is clamped with a warning") {
        RunConfig config = base_config(standard_ring(3), 5.0, 0.1, 5);
        config.iterations = 2;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(4), config);
        CHECK(!result.warnings.empty());
    }
    SUBCASE("vanilla gap decreases toward the optimum on a fast topology") {
        RunConfig config = base_config(fully_connected(3), 0.3, 0.0, 5);
        config.iterations = 150;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(4), config);
        CHECK(result.metrics.back().gap < 0.05 * result.metrics.front().gap + 1e-9);
    }
}

TEST_CASE("omega diagnostics") {
    SUBCASE("sigma = 0 keeps Omega_1 and Omega_2 at zero for all t") {
        const auto prob = random_mdp(3, 2, 3, 0.8, 351);
        RunConfig config = base_config(fully_connected(3), 0.1, 0.1, 3);
        config.iterations = 20;
        config.diagnostics.omega = true;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(3), config);
        for (const auto& m : result.metrics) {
            REQUIRE(m.omega.has_value());
            CHECK((*m.omega)(0) < 1e-9);
            CHECK((*m.omega)(1) < 1e-9);
        }
    }
    SUBCASE("Omega_1 vanishes at t = 0 under the common uniform init") {
        const auto prob = random_mdp(3, 2, 4, 0.85, 352);
        RunConfig config = base_config(standard_ring(4), 0.05, 0.1, 3);
        config.iterations = 0;
        config.diagnostics.omega = true;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(3), config);
        CHECK((*result.metrics[0].omega)(0) < 1e-12);
    }
    SUBCASE("Omega_3 at t = 0 equals its direct definition") {
        const auto prob = random_mdp(3, 2, 3, 0.8, 353);
        const double tau = 0.1;
        RunConfig config = base_config(standard_ring(3), 0.05, tau, 3);
        config.iterations = 0;
        config.diagnostics.omega = true;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(3), config);

        // Direct computation: log xi_bar(0) = log ||exp(Q*/tau)||_1 + log pi_bar(0).
        const SoftOptimum opt = optimal_values(prob.mdp, prob.rewards.averaged(), tau);
        const Vector log_norm = log_sum_exp_rows(opt.q_star / tau);
        double omega3 = 0.0;
        for (int s = 0; s < 3; ++s)
            for (int a = 0; a < 2; ++a) {
                const double log_xi_bar = log_norm(s) - std::log(2.0);
                omega3 = std::max(omega3, std::abs(opt.q_star(s, a) - tau * log_xi_bar));
            }
        CHECK((*result.metrics[0].omega)(2) == doctest::Approx(omega3).epsilon(1e-10));
    }
}

TEST_CASE("empirical error recursion obeys the linear system") {
    SUBCASE("regularized: Omega^(t+1) <= A(eta) Omega^(t) elementwise") {
        const auto prob = random_mdp(3, 2, 3, 0.5, 361);
        RecursionParams params;
        params.n_agents = 3;
        params.gamma = 0.5;
        params.tau = 0.1;
        params.sigma = standard_ring(3).sigma();
        params.num_actions = 2;
        params.eta = learning_rate_bounds(params).eta0;
        RunConfig config = base_config(standard_ring(3), params.eta, params.tau, 11);
        config.iterations = 50;
        config.diagnostics.omega = true;
        config.diagnostics.recursion = true;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(3), config);
        REQUIRE(result.max_recursion_violation.has_value());
        CHECK(*result.max_recursion_violation <= 1e-8);
    }
    SUBCASE("vanilla: Omega^(t+1) <= B(eta) Omega^(t) + d(eta)") {
        const auto prob = random_mdp(3, 2, 3, 0.5, 362);
        RecursionParams params;
        params.n_agents = 3;
        params.gamma = 0.5;
        params.tau = 0.0;
        params.sigma = standard_ring(3).sigma();
        params.num_actions = 2;
        params.eta = 0.5 * learning_rate_bounds(params).eta1_formal;
        RunConfig config = base_config(standard_ring(3), params.eta, 0.0, 12);
        config.iterations = 50;
        config.diagnostics.omega = true;
        config.diagnostics.recursion = true;
        const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(3), config);
        REQUIRE(result.max_recursion_violation.has_value());
        CHECK(*result.max_recursion_violation <= 1e-8);
    }
}

TEST_CASE("recursion_matrix entries match the printed formulas") {
    RecursionParams params;
    params.n_agents = 3;
    params.gamma = 0.9;
    params.tau = 0.1;
    params.eta = 0.01;
    params.sigma = 0.5;
    params.num_actions = 2;

    SUBCASE("spot entry A[3][0] = (2 gamma + eta tau) M / (1 - gamma)") {
        const RecursionSystem sys = recursion_matrix(params, RecursionVariant::kRegularized);
        // Independent recomputation, written out from scratch.
        const double m_indep =
            0.9 * (1.0 + 0.9 + 2.0 * 0.1 * (1.0 - 0.9) * std::log(2.0)) / ((1.0 - 0.9) * (1.0 - 0.9));
        const double expected = (2.0 * 0.9 + 0.01 * 0.1) * m_indep / (1.0 - 0.9);
        CHECK(sys.matrix(3, 0) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(sys.offset.isZero());
    }
    SUBCASE("sigma = 0 zeroes the first two rows") {
        RecursionParams p0 = params;
        p0.sigma = 0.0;
        const RecursionSystem sys = recursion_matrix(p0, RecursionVariant::kRegularized);
        CHECK(sys.matrix.row(0).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(sys.matrix.row(1).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("eta = (1-gamma)/tau makes alpha vanish in A") {
        RecursionParams p = params;
        p.eta = (1.0 - p.gamma) / p.tau;
        const RecursionSystem sys = recursion_matrix(p, RecursionVariant::kRegularized);
        CHECK(sys.matrix(0, 0) == doctest::Approx(0.0));          // sigma * alpha
        CHECK(sys.matrix(3, 3) == doctest::Approx(0.0));          // alpha
        CHECK(sys.matrix(2, 2) == doctest::Approx(params.gamma)); // (1-alpha) gamma + alpha
    }
    SUBCASE("vanilla system carries the offset d(eta)") {
        const RecursionSystem sys = recursion_matrix(params, RecursionVariant::kVanilla);
        const double j = 2.0 * (1.0 + 0.9) * 0.9 * std::sqrt(3.0) / (0.1 * 0.1);
        CHECK(sys.matrix(1, 0) == doctest::Approx(j * 0.5).epsilon(1e-12));
        const double d1 = (1.0 + 0.9) * 0.9 * 3.0 * 0.5 * 0.01 / std::pow(0.1, 4.0);
        CHECK(sys.offset(1) == doctest::Approx(d1).epsilon(1e-12));
        CHECK(sys.offset(0) == 0.0);
    }
}

TEST_CASE("learning_rate_bounds") {
    SUBCASE("sigma = 0 leaves eta_1 unbounded") {
        RecursionParams params;
        params.n_agents = 4;
        params.gamma = 0.9;
        params.sigma = 0.0;
        params.tau = 0.0;
        const LearningRateBounds bounds = learning_rate_bounds(params);
        CHECK(std::isinf(bounds.eta1_formal));
        CHECK(std::isinf(bounds.eta1_informal));
    }
    SUBCASE("large tau caps eta_0 at (1-gamma)/tau") {
        RecursionParams params;
        params.n_agents = 2;
        params.gamma = 0.5;
        params.sigma = 0.0;  // zeta degenerates to 2(1-gamma)/tau
        params.tau = 1.0;
        params.num_actions = 2;
        const LearningRateBounds bounds = learning_rate_bounds(params);
        CHECK(bounds.eta0 == doctest::Approx((1.0 - 0.5) / 1.0));
        CHECK(bounds.zeta == doctest::Approx(2.0 * (1.0 - 0.5) / 1.0));
    }
    SUBCASE("zeta for (N=3, gamma=0.9, tau=0.1, sigma=0.5, |A|=2) by hand evaluation") {
        RecursionParams params;
        params.n_agents = 3;
        params.gamma = 0.9;
        params.tau = 0.1;
        params.sigma = 0.5;
        params.num_actions = 2;
        const LearningRateBounds bounds = learning_rate_bounds(params);

        // Step-by-step independent evaluation of the same closed form.
        const double m = 0.9 * (1.9 + 2.0 * 0.1 * 0.1 * std::log(2.0)) / 0.01;
        const double s0 = m * std::sqrt(3.0) * (2.0 + std::sqrt(6.0) + m * std::sqrt(3.0) / 0.1);
        const double c = m * 3.0 / 0.1;
        const double numerator = 0.1 * 0.25 * 0.1;
        const double denominator =
            8.0 * (0.1 * s0 * 0.25 + 10.0 * m * c * 0.25 / 0.1 + 0.25 * 0.01 / 16.0);
        CHECK(bounds.zeta == doctest::Approx(numerator / denominator).epsilon(1e-12));
        CHECK(bounds.eta0 == doctest::Approx(bounds.zeta));  // zeta is far below (1-gamma)/tau
    }
    SUBCASE("formal eta_1 follows its closed form") {
        RecursionParams params;
        params.n_agents = 3;
        params.gamma = 0.5;
        params.sigma = 0.5;
        params.tau = 0.0;
        const LearningRateBounds bounds = learning_rate_bounds(params);
        const double expected =
            0.25 * 0.125 / (8.0 * 1.5 * 0.5 * std::sqrt(3.0) * 0.25);
        CHECK(bounds.eta1_formal == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("consensus error stays under the theoretical ceiling") {
    const auto prob = random_mdp(4, 2, 3, 0.5, 371);
    RecursionParams params;
    params.n_agents = 3;
    params.gamma = 0.5;
    params.tau = 0.0;
    params.sigma = standard_ring(3).sigma();
    params.num_actions = 2;
    params.eta = learning_rate_bounds(params).eta1_formal;

    RunConfig config = base_config(standard_ring(3), params.eta, 0.0, 17);
    config.iterations = 60;
    config.diagnostics.consensus = true;
    const RunResult result = run(prob.mdp, prob.rewards, StateDistribution::uniform(4), config);
    const double ceiling = consensus_error_bound(params);
    for (const auto& m : result.metrics) CHECK(*m.consensus_err <= ceiling);
}
