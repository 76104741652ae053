#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "friction/mamdp.hpp"

using namespace friction;
using mamdp::ModificationKernel;
using mamdp::Policy;
using mamdp::SmallMDP;

namespace {

std::vector<double> random_row(int n, core::Rng& rng) {
    std::vector<double> row(n);
    double sum = 0.0;
    for (auto& x : row) {
        x = rng.uniform_real() + 1e-3;
        sum += x;
    }
    for (auto& x : row) x /= sum;
    return row;
}

SmallMDP random_instance(core::Rng& rng, int horizon) {
    SmallMDP m;
    m.n_states = 3;
    m.n_actions = 3;
    m.gamma = horizon >= 0 ? 1.0 : 0.9;
    m.horizon = horizon;
    m.P.assign(3, std::vector<std::vector<double>>(3));
    m.R.assign(3, std::vector<double>(3));
    m.pi_ref.assign(3, {});
    for (int s = 0; s < 3; ++s) {
        m.pi_ref[s] = random_row(3, rng);
        for (int a = 0; a < 3; ++a) {
            m.P[s][a] = random_row(3, rng);
            m.R[s][a] = rng.uniform_real() * 2.0 - 0.5;
        }
    }
    m.validate();
    return m;
}

ModificationKernel random_kernel(core::Rng& rng) {
    ModificationKernel k;
    k.pi_c.assign(3, std::vector<std::vector<double>>(3));
    for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 3; ++a) k.pi_c[s][a] = random_row(3, rng);
    }
    k.validate();
    return k;
}

/// Two-step soft value computed by direct recursion, independent of the
/// iteration loop.
double soft_value_horizon2(const SmallMDP& m, double beta, int s0) {
    auto v1 = [&](int s) {
        double z = 0.0;
        for (int a = 0; a < m.n_actions; ++a) {
            z += m.pi_ref[s][a] * std::exp(m.R[s][a] / beta);
        }
        return beta * std::log(z);
    };
    double z = 0.0;
    for (int a = 0; a < m.n_actions; ++a) {
        double q = m.R[s0][a];
        for (int t = 0; t < m.n_states; ++t) q += m.gamma * m.P[s0][a][t] * v1(t);
        z += m.pi_ref[s0][a] * std::exp(q / beta);
    }
    return beta * std::log(z);
}

} // namespace

TEST_CASE("mdp validation rejects malformed instances") {
    auto rng = core::Rng(5);
    auto m = random_instance(rng, 4);

    auto broken = m;
    broken.P[0][0][0] += 0.1;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);

    broken = m;
    broken.gamma = 1.0;
    broken.horizon = -1;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);

    broken = m;
    broken.pi_ref[1][0] = -0.2;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}

TEST_CASE("instance files round-trip") {
    auto m = mamdp::adversarial_instance();
    m.save("/tmp/friction_mdp_test.json");
    auto back = SmallMDP::load("/tmp/friction_mdp_test.json");
    CHECK(back.to_json() == m.to_json());

    auto k = mamdp::adversarial_kernel();
    CHECK(ModificationKernel::from_json(k.to_json()).pi_c == k.pi_c);
}

TEST_CASE("soft value iteration closed forms") {
    SmallMDP m;
    m.n_states = 1;
    m.n_actions = 2;
    m.gamma = 1.0;
    m.horizon = 1;
    m.P = {{{1.0}, {1.0}}};
    m.R = {{1.0, 0.0}};
    m.pi_ref = {{0.5, 0.5}};
    auto res = mamdp::soft_value_iteration(m, 1.0);
    CHECK(res.policy[0][0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-9));

    // huge temperature: policy collapses to pi_ref
    auto rng = core::Rng(7);
    auto inst = random_instance(rng, 5);
    auto hot = mamdp::soft_value_iteration(inst, 1e6);
    for (int s = 0; s < inst.n_states; ++s) {
        for (int a = 0; a < inst.n_actions; ++a) {
            CHECK(hot.policy[s][a] == doctest::Approx(inst.pi_ref[s][a]).epsilon(1e-4));
        }
    }

    CHECK_THROWS_AS(mamdp::soft_value_iteration(inst, 0.0), std::invalid_argument);
}

TEST_CASE("soft values match the recursive horizon-2 oracle") {
    auto rng = core::Rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        auto m = random_instance(rng, 2);
        double beta = 0.2 + rng.uniform_real();
        auto res = mamdp::soft_value_iteration(m, beta);
        for (int s = 0; s < m.n_states; ++s) {
            CHECK(std::abs(res.V[s] - soft_value_horizon2(m, beta, s)) < 1e-9);
        }
    }
}

TEST_CASE("discounted iteration converges with a tiny residual") {
    auto rng = core::Rng(17);
    auto m = random_instance(rng, -1);
    auto res = mamdp::soft_value_iteration(m, 0.5);
    CHECK(res.residual <= 1e-10);
    for (int s = 0; s < m.n_states; ++s) {
        double sum = 0.0;
        for (double p : res.policy[s]) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("compose_modification algebra") {
    auto rng = core::Rng(19);
    auto pi = Policy{random_row(3, rng), random_row(3, rng), random_row(3, rng)};

    auto id = ModificationKernel::identity(3, 3);
    CHECK(mamdp::compose_modification(pi, id) == pi);

    ModificationKernel to_a0;
    to_a0.pi_c.assign(3, std::vector<std::vector<double>>(3, {1.0, 0.0, 0.0}));
    auto forced = mamdp::compose_modification(pi, to_a0);
    for (int s = 0; s < 3; ++s) CHECK(forced[s][0] == doctest::Approx(1.0).epsilon(1e-12));

    for (int trial = 0; trial < 1000; ++trial) {
        Policy p{random_row(3, rng), random_row(3, rng), random_row(3, rng)};
        auto out = mamdp::compose_modification(p, random_kernel(rng));
        for (const auto& row : out) {
            double sum = 0.0;
            for (double x : row) {
                CHECK(x >= 0.0);
                sum += x;
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("policy evaluation closed forms and MC agreement") {
    // deterministic chain with unit rewards: return == horizon
    SmallMDP chain;
    chain.n_states = 3;
    chain.n_actions = 1;
    chain.gamma = 1.0;
    chain.horizon = 3;
    chain.P = {{{0.0, 1.0, 0.0}}, {{0.0, 0.0, 1.0}}, {{0.0, 0.0, 1.0}}};
    chain.R = {{1.0}, {1.0}, {1.0}};
    chain.pi_ref = {{1.0}, {1.0}, {1.0}};
    Policy always{{1.0}, {1.0}, {1.0}};
    CHECK(mamdp::evaluate_policy(chain, always)[0] == doctest::Approx(3.0).epsilon(1e-12));

    auto rng = core::Rng(23);
    auto m = random_instance(rng, 4);
    Policy pi{random_row(3, rng), random_row(3, rng), random_row(3, rng)};
    auto id = ModificationKernel::identity(3, 3);
    auto bare = mamdp::evaluate_policy(m, pi);
    auto with_id = mamdp::evaluate_policy(m, pi, &id);
    for (int s = 0; s < 3; ++s) CHECK(std::abs(bare[s] - with_id[s]) < 1e-12);

    auto kernel = random_kernel(rng);
    double exact = mamdp::start_value(m, pi, &kernel);
    auto stats = mamdp::mc_rollouts(m, pi, &kernel, 20000, 99);
    CHECK(std::abs(stats.mean - exact) <= 3.0 * stats.std_error);

    // discounted-infinite linear solve agrees with a long truncation
    auto inf = random_instance(rng, -1);
    auto v_inf = mamdp::evaluate_policy(inf, pi);
    auto trunc = inf;
    trunc.horizon = 400;
    auto v_trunc = mamdp::evaluate_policy(trunc, pi);
    for (int s = 0; s < 3; ++s) CHECK(std::abs(v_inf[s] - v_trunc[s]) < 1e-8);
}

TEST_CASE("mamdp_optimal dominates and degenerates correctly") {
    auto rng = core::Rng(29);

    // identity kernel: MAMDP == MDP, so the search must recover the greedy
    // optimum (beta -> 0 limit of the soft policy)
    auto m = random_instance(rng, 4);
    auto id = ModificationKernel::identity(3, 3);
    auto soft = mamdp::soft_value_iteration(m, 1e-6);
    Policy greedy(m.n_states, std::vector<double>(m.n_actions, 0.0));
    for (int s = 0; s < m.n_states; ++s) {
        int best = 0;
        for (int a = 1; a < m.n_actions; ++a) {
            if (soft.Q[s][a] > soft.Q[s][best]) best = a;
        }
        greedy[s][best] = 1.0;
    }
    auto found = mamdp::mamdp_optimal(m, id);
    CHECK(std::abs(found.value - mamdp::start_value(m, greedy)) < 1e-9);

    // constant kernel: dynamics ignore the policy, everything ties
    ModificationKernel constant;
    constant.pi_c.assign(3, std::vector<std::vector<double>>(3, {0.0, 1.0, 0.0}));
    auto tied = mamdp::mamdp_optimal(m, constant);
    Policy other{{1, 0, 0}, {0, 0, 1}, {0, 1, 0}};
    CHECK(std::abs(tied.value - mamdp::start_value(m, other, &constant)) < 1e-12);

    // Theorem-1 direction on random instances, with pi_soft as a candidate
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = random_instance(rng, 3);
        auto kernel = random_kernel(rng);
        auto pi_soft = mamdp::soft_value_iteration(inst, 0.1).policy;
        auto best = mamdp::mamdp_optimal(inst, kernel, 8, {pi_soft});
        CHECK(best.value >= mamdp::start_value(inst, pi_soft, &kernel) - 1e-9);
    }

    // 3 states x 11 actions exceeds the exhaustive-search budget
    SmallMDP big;
    big.n_states = 3;
    big.n_actions = 11;
    big.gamma = 1.0;
    big.horizon = 2;
    big.P.assign(3, std::vector<std::vector<double>>(11, {1.0, 0.0, 0.0}));
    big.R.assign(3, std::vector<double>(11, 0.0));
    big.pi_ref.assign(3, std::vector<double>(11, 1.0 / 11));
    auto big_kernel = ModificationKernel::identity(3, 11);
    CHECK_THROWS_AS(mamdp::mamdp_optimal(big, big_kernel), std::invalid_argument);
}

TEST_CASE("adversarial instance exhibits the modification gap") {
    auto m = mamdp::adversarial_instance();
    auto kernel = mamdp::adversarial_kernel();

    auto pi_soft = mamdp::soft_value_iteration(m, 0.1).policy;
    double blind = mamdp::start_value(m, pi_soft, &kernel);
    auto aware = mamdp::mamdp_optimal(m, kernel, 8, {pi_soft});

    CHECK(aware.value - blind > 0.1);

    // both values confirmed by Monte-Carlo
    auto mc_blind = mamdp::mc_rollouts(m, pi_soft, &kernel, 40000, 7);
    auto mc_aware = mamdp::mc_rollouts(m, aware.policy, &kernel, 40000, 8);
    CHECK(std::abs(mc_blind.mean - blind) <= 3.0 * std::max(mc_blind.std_error, 1e-4));
    CHECK(std::abs(mc_aware.mean - aware.value) <= 3.0 * std::max(mc_aware.std_error, 1e-4));
}
