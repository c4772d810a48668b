#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedrl/policy_eval.hpp"
#include "fedrl/random_mdp.hpp"
#include "fedrl/rng.hpp"
#include "test_util.hpp"

using namespace fedrl;

TEST_CASE("EvalMode parsing round-trips the CLI grammar") {
    CHECK(EvalMode::parse("exact").kind == EvalMode::Kind::kExact);
    const EvalMode noisy = EvalMode::parse("noisy:0.001");
    CHECK(noisy.kind == EvalMode::Kind::kNoisyExact);
    CHECK(noisy.eps_inf == doctest::Approx(0.001));
    const EvalMode model = EvalMode::parse("model:500");
    CHECK(model.kind == EvalMode::Kind::kModelBased);
    CHECK(model.samples_per_sa == 500);
    CHECK_THROWS_AS(EvalMode::parse("bogus"), std::invalid_argument);
    CHECK_THROWS_AS(EvalMode::noisy_exact(-1.0), std::invalid_argument);
    CHECK_THROWS_AS(EvalMode::model_based(0), std::invalid_argument);
}

TEST_CASE("exact mode delegates to the closed-form evaluators") {
    const auto prob = random_mdp(4, 3, 1, 0.85, 201);
    RngStream policy_rng = make_stream(202);
    const Policy pi = testutil::random_policy(4, 3, policy_rng);
    RngStream rng = make_stream(203);

    const EvalResult plain = evaluate(EvalMode::exact(), prob.mdp, pi, prob.rewards.r_n[0], 0.0, rng);
    CHECK((plain.q - exact_q(prob.mdp, pi, prob.rewards.r_n[0])).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(plain.reported_error_bound == 0.0);

    const EvalResult soft = evaluate(EvalMode::exact(), prob.mdp, pi, prob.rewards.r_n[0], 0.1, rng);
    CHECK((soft.q - soft_q(prob.mdp, pi, prob.rewards.r_n[0], 0.1)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("noisy mode respects its hard error bound") {
    const auto prob = random_mdp(4, 3, 1, 0.85, 211);
    RngStream policy_rng = make_stream(212);
    const Policy pi = testutil::random_policy(4, 3, policy_rng);
    const Matrix truth = exact_q(prob.mdp, pi, prob.rewards.r_n[0]);

    SUBCASE("eps = 0 returns the exact table") {
        RngStream rng = make_stream(213);
        const EvalResult res =
            evaluate(EvalMode::noisy_exact(0.0), prob.mdp, pi, prob.rewards.r_n[0], 0.0, rng);
        CHECK((res.q - truth).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("||q - Q||_inf <= eps always") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            RngStream rng = make_stream(214, {seed});
            const EvalResult res =
                evaluate(EvalMode::noisy_exact(0.01), prob.mdp, pi, prob.rewards.r_n[0], 0.0, rng);
            CHECK((res.q - truth).lpNorm<Eigen::Infinity>() <= 0.01);
            CHECK(res.reported_error_bound == doctest::Approx(0.01));
        }
    }
}

TEST_CASE("model-based mode reports its realized error") {
    const auto prob = random_mdp(3, 2, 1, 0.8, 221);
    RngStream policy_rng = make_stream(222);
    const Policy pi = testutil::random_policy(3, 2, policy_rng);
    const Matrix truth = exact_q(prob.mdp, pi, prob.rewards.r_n[0]);

    SUBCASE("1e5 samples land within 0.05 of the exact table") {
        RngStream rng = make_stream(223);
        const EvalResult res =
            evaluate(EvalMode::model_based(100000), prob.mdp, pi, prob.rewards.r_n[0], 0.0, rng);
        const double realized = (res.q - truth).lpNorm<Eigen::Infinity>();
        CHECK(realized == doctest::Approx(res.reported_error_bound));
        CHECK(realized < 0.05);
    }
    SUBCASE("median realized error decreases from 1e2 to 1e4 samples") {
        const auto median_error = [&](int samples) {
            std::vector<double> errors;
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                RngStream rng = make_stream(224, {seed});
                const EvalResult res = evaluate(EvalMode::model_based(samples), prob.mdp, pi,
                                                prob.rewards.r_n[0], 0.0, rng);
                errors.push_back(res.reported_error_bound);
            }
            std::sort(errors.begin(), errors.end());
            return 0.5 * (errors[9] + errors[10]);
        };
        CHECK(median_error(10000) < median_error(100));
    }
}
