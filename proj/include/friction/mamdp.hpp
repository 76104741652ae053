#pragma once

#include <string>
#include <vector>

#include "friction/core.hpp"

namespace friction::mamdp {

using core::json;
using core::Rng;

/// pi[s][a], row-stochastic.
using Policy = std::vector<std::vector<double>>;

struct SmallMDP {
    int n_states = 0;
    int n_actions = 0;
    std::vector<std::vector<std::vector<double>>> P; // P[s][a][s']
    std::vector<std::vector<double>> R;              // R[s][a]
    double gamma = 1.0;
    int horizon = -1; // -1: discounted infinite
    Policy pi_ref;

    void validate() const;
    json to_json() const;
    static SmallMDP from_json(const json& j);
    void save(const std::string& path) const;
    static SmallMDP load(const std::string& path);
};

/// pi_c[s][intended][executed]; each intended-action row is stochastic.
struct ModificationKernel {
    std::vector<std::vector<std::vector<double>>> pi_c;

    void validate() const;
    static ModificationKernel identity(int n_states, int n_actions);

    json to_json() const;
    static ModificationKernel from_json(const json& j);
};

Policy uniform_policy(int n_states, int n_actions);

struct SoftVIResult {
    std::vector<std::vector<double>> Q;
    std::vector<double> V;
    Policy policy; // pi(a|s) proportional to pi_ref(a|s) exp(Q(s,a)/beta)
    double residual = 0.0;
    int sweeps = 0;
};

/// Soft Bellman backups with reference-policy weighting:
/// V(s) = beta log sum_a pi_ref(a|s) exp(Q(s,a)/beta).
/// Finite horizon runs exactly T sweeps; discounted-infinite iterates to a
/// sup-norm residual of 1e-10 and throws if max_sweeps is exhausted.
SoftVIResult soft_value_iteration(const SmallMDP& mdp, double beta, int max_sweeps = 200000);

/// Empirical policy: pi_dot(a|s) = sum_a' pi_F(a'|s) pi_c(a|s,a').
Policy compose_modification(const Policy& pi_f, const ModificationKernel& kernel);

/// Expected return per start state of pi (composed with the kernel when
/// given): backward induction for finite horizon, exact linear solve for the
/// discounted-infinite case.
std::vector<double> evaluate_policy(const SmallMDP& mdp, const Policy& pi,
                                    const ModificationKernel* kernel = nullptr);

/// Scalar objective used by the search: return from start state 0.
double start_value(const SmallMDP& mdp, const Policy& pi,
                   const ModificationKernel* kernel = nullptr);

struct SearchResult {
    Policy policy;
    double value = 0.0;
};

/// Exhaustive deterministic enumeration plus coordinate-wise local refinement
/// over stochastic policies; extra_starts seeds the refinement (so known
/// candidates such as pi_soft are always dominated by the result).
SearchResult mamdp_optimal(const SmallMDP& mdp, const ModificationKernel& kernel,
                           int grid_resolution = 8,
                           const std::vector<Policy>& extra_starts = {});

struct RolloutStats {
    double mean = 0.0;
    double std_error = 0.0;
    int n = 0;
};

/// Monte-Carlo estimate of the start-state-0 return.
RolloutStats mc_rollouts(const SmallMDP& mdp, const Policy& pi, const ModificationKernel* kernel,
                         int n, std::uint64_t seed);

/// 3-state, 3-action instance where the kernel rewrites the greedy action
/// into the zero-reward one; pi_soft trained blind to the kernel collapses
/// while the modification-aware optimum plays the middle action.
SmallMDP adversarial_instance();
ModificationKernel adversarial_kernel();

} // namespace friction::mamdp
