#include "friction/mamdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace friction::mamdp {

namespace {

constexpr double kRowTol = 1e-12;

void check_stochastic_row(const std::vector<double>& row, const char* what) {
    double s = 0.0;
    for (double p : row) {
        if (p < -kRowTol) throw std::invalid_argument(std::string(what) + ": negative entry");
        s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
    }
}

double logsumexp_weighted(const std::vector<double>& w, const std::vector<double>& x) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (w[i] > 0.0) m = std::max(m, x[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (w[i] > 0.0) s += w[i] * std::exp(x[i] - m);
    }
    return m + std::log(s);
}

} // namespace

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

void SmallMDP::validate() const {
    if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("empty MDP");
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("gamma outside (0,1]");
    if (gamma == 1.0 && horizon < 0) {
        throw std::invalid_argument("gamma=1 requires a finite horizon");
    }
    auto dims = [&](std::size_t got, std::size_t want, const char* what) {
        if (got != want) throw std::invalid_argument(std::string(what) + ": wrong shape");
    };
    dims(P.size(), n_states, "P");
    dims(R.size(), n_states, "R");
    dims(pi_ref.size(), n_states, "pi_ref");
    for (int s = 0; s < n_states; ++s) {
        dims(P[s].size(), n_actions, "P");
        dims(R[s].size(), n_actions, "R");
        dims(pi_ref[s].size(), n_actions, "pi_ref");
        check_stochastic_row(pi_ref[s], "pi_ref");
        for (int a = 0; a < n_actions; ++a) {
            dims(P[s][a].size(), n_states, "P");
            check_stochastic_row(P[s][a], "P");
        }
    }
}

json SmallMDP::to_json() const {
    return json{{"n_states", n_states}, {"n_actions", n_actions}, {"P", P},
                {"R", R},               {"gamma", gamma},         {"horizon", horizon},
                {"pi_ref", pi_ref}};
}

SmallMDP SmallMDP::from_json(const json& j) {
    SmallMDP m;
    m.n_states = j.at("n_states").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    m.P = j.at("P").get<decltype(m.P)>();
    m.R = j.at("R").get<decltype(m.R)>();
    m.gamma = j.at("gamma").get<double>();
    m.horizon = j.at("horizon").get<int>();
    m.pi_ref = j.at("pi_ref").get<Policy>();
    m.validate();
    return m;
}

void SmallMDP::save(const std::string& path) const {
    core::write_file(path, to_json().dump(2) + "\n");
}

SmallMDP SmallMDP::load(const std::string& path) {
    return from_json(json::parse(core::read_file(path)));
}

void ModificationKernel::validate() const {
    if (pi_c.empty()) throw std::invalid_argument("empty kernel");
    for (const auto& state_rows : pi_c) {
        for (const auto& row : state_rows) check_stochastic_row(row, "kernel");
    }
}

ModificationKernel ModificationKernel::identity(int n_states, int n_actions) {
    ModificationKernel k;
    k.pi_c.assign(n_states, std::vector<std::vector<double>>(
                                n_actions, std::vector<double>(n_actions, 0.0)));
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) k.pi_c[s][a][a] = 1.0;
    }
    return k;
}

json ModificationKernel::to_json() const { return json{{"pi_c", pi_c}}; }

ModificationKernel ModificationKernel::from_json(const json& j) {
    ModificationKernel k;
    k.pi_c = j.at("pi_c").get<decltype(k.pi_c)>();
    k.validate();
    return k;
}

Policy uniform_policy(int n_states, int n_actions) {
    return Policy(n_states, std::vector<double>(n_actions, 1.0 / n_actions));
}

// ---------------------------------------------------------------------------
// Soft value iteration
// ---------------------------------------------------------------------------

SoftVIResult soft_value_iteration(const SmallMDP& mdp, double beta, int max_sweeps) {
    mdp.validate();
    if (beta <= 0.0) throw std::invalid_argument("beta must be positive");

    const int S = mdp.n_states, A = mdp.n_actions;
    SoftVIResult out;
    out.Q.assign(S, std::vector<double>(A, 0.0));
    out.V.assign(S, 0.0);

    const bool finite = mdp.horizon >= 0;
    const int sweeps = finite ? mdp.horizon : max_sweeps;

    for (int k = 0; k < sweeps; ++k) {
        double residual = 0.0;
        std::vector<std::vector<double>> Q_next(S, std::vector<double>(A, 0.0));
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                double q = mdp.R[s][a];
                for (int t = 0; t < S; ++t) q += mdp.gamma * mdp.P[s][a][t] * out.V[t];
                residual = std::max(residual, std::abs(q - out.Q[s][a]));
                Q_next[s][a] = q;
            }
        }
        out.Q = std::move(Q_next);
        for (int s = 0; s < S; ++s) {
            std::vector<double> scaled(A);
            for (int a = 0; a < A; ++a) scaled[a] = out.Q[s][a] / beta;
            out.V[s] = beta * logsumexp_weighted(mdp.pi_ref[s], scaled);
        }
        out.residual = residual;
        out.sweeps = k + 1;
        if (!finite && residual <= 1e-10) break;
    }
    if (!finite && out.residual > 1e-10) {
        throw std::runtime_error("soft value iteration did not converge; residual " +
                                 std::to_string(out.residual));
    }

    out.policy.assign(S, std::vector<double>(A, 0.0));
    for (int s = 0; s < S; ++s) {
        double m = *std::max_element(out.Q[s].begin(), out.Q[s].end());
        double z = 0.0;
        for (int a = 0; a < A; ++a) {
            out.policy[s][a] = mdp.pi_ref[s][a] * std::exp((out.Q[s][a] - m) / beta);
            z += out.policy[s][a];
        }
        for (int a = 0; a < A; ++a) out.policy[s][a] /= z;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Composition and evaluation
// ---------------------------------------------------------------------------

Policy compose_modification(const Policy& pi_f, const ModificationKernel& kernel) {
    if (pi_f.size() != kernel.pi_c.size()) throw std::invalid_argument("shape mismatch");
    const int S = static_cast<int>(pi_f.size());
    Policy out(S);
    for (int s = 0; s < S; ++s) {
        const int A = static_cast<int>(pi_f[s].size());
        if (kernel.pi_c[s].size() != static_cast<std::size_t>(A)) {
            throw std::invalid_argument("shape mismatch");
        }
        out[s].assign(A, 0.0);
        for (int intended = 0; intended < A; ++intended) {
            for (int a = 0; a < A; ++a) {
                out[s][a] += pi_f[s][intended] * kernel.pi_c[s][intended][a];
            }
        }
    }
    return out;
}

namespace {

/// Gaussian elimination with partial pivoting for the small dense system.
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-14) throw std::runtime_error("singular system");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int r = col + 1; r < n; ++r) {
            double f = a[r][col] / a[col][col];
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return x;
}

} // namespace

std::vector<double> evaluate_policy(const SmallMDP& mdp, const Policy& pi,
                                    const ModificationKernel* kernel) {
    mdp.validate();
    const Policy executed = kernel ? compose_modification(pi, *kernel) : pi;
    const int S = mdp.n_states, A = mdp.n_actions;
    for (const auto& row : executed) check_stochastic_row(row, "policy");

    // policy-marginal reward and transitions
    std::vector<double> r_pi(S, 0.0);
    std::vector<std::vector<double>> p_pi(S, std::vector<double>(S, 0.0));
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            r_pi[s] += executed[s][a] * mdp.R[s][a];
            for (int t = 0; t < S; ++t) p_pi[s][t] += executed[s][a] * mdp.P[s][a][t];
        }
    }

    if (mdp.horizon >= 0) {
        std::vector<double> v(S, 0.0);
        for (int k = 0; k < mdp.horizon; ++k) {
            std::vector<double> next(S, 0.0);
            for (int s = 0; s < S; ++s) {
                next[s] = r_pi[s];
                for (int t = 0; t < S; ++t) next[s] += mdp.gamma * p_pi[s][t] * v[t];
            }
            v = std::move(next);
        }
        return v;
    }

    // (I - gamma P_pi) v = r_pi
    std::vector<std::vector<double>> a(S, std::vector<double>(S, 0.0));
    for (int s = 0; s < S; ++s) {
        for (int t = 0; t < S; ++t) a[s][t] = (s == t ? 1.0 : 0.0) - mdp.gamma * p_pi[s][t];
    }
    return solve_linear(std::move(a), r_pi);
}

double start_value(const SmallMDP& mdp, const Policy& pi, const ModificationKernel* kernel) {
    return evaluate_policy(mdp, pi, kernel)[0];
}

// ---------------------------------------------------------------------------
// MAMDP-optimal search
// ---------------------------------------------------------------------------

SearchResult mamdp_optimal(const SmallMDP& mdp, const ModificationKernel& kernel,
                           int grid_resolution, const std::vector<Policy>& extra_starts) {
    mdp.validate();
    kernel.validate();
    const int S = mdp.n_states, A = mdp.n_actions;
    if (S * A > 30) throw std::invalid_argument("instance too large for exhaustive search");

    SearchResult best;
    best.value = -std::numeric_limits<double>::infinity();
    auto consider = [&](const Policy& pi) {
        double v = start_value(mdp, pi, &kernel);
        if (v > best.value) {
            best.value = v;
            best.policy = pi;
        }
    };

    // All deterministic policies.
    std::vector<int> choice(S, 0);
    while (true) {
        Policy pi(S, std::vector<double>(A, 0.0));
        for (int s = 0; s < S; ++s) pi[s][choice[s]] = 1.0;
        consider(pi);
        int s = 0;
        while (s < S && ++choice[s] == A) choice[s++] = 0;
        if (s == S) break;
    }
    for (const auto& pi : extra_starts) consider(pi);

    // Coordinate-wise refinement: mix each state's row toward every vertex.
    Policy current = best.policy;
    for (int round = 0; round < grid_resolution; ++round) {
        bool improved = false;
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                for (double step : {1.0, 0.5, 0.25, 0.1, 0.01}) {
                    Policy trial = current;
                    for (int b = 0; b < A; ++b) {
                        trial[s][b] = (1.0 - step) * current[s][b] + (b == a ? step : 0.0);
                    }
                    double v = start_value(mdp, trial, &kernel);
                    if (v > best.value + 1e-13) {
                        best.value = v;
                        best.policy = trial;
                        current = trial;
                        improved = true;
                    }
                }
            }
        }
        if (!improved) break;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Monte-Carlo and the adversarial demo
// ---------------------------------------------------------------------------

RolloutStats mc_rollouts(const SmallMDP& mdp, const Policy& pi, const ModificationKernel* kernel,
                         int n, std::uint64_t seed) {
    mdp.validate();
    if (n <= 0) throw std::invalid_argument("rollout count must be positive");
    if (mdp.horizon < 0) throw std::invalid_argument("mc_rollouts requires a finite horizon");
    const Policy executed = kernel ? compose_modification(pi, *kernel) : pi;

    auto sample_row = [](const std::vector<double>& row, double u) {
        double acc = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            acc += row[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(row.size()) - 1;
    };

    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        auto rng = Rng::split(seed, static_cast<std::uint64_t>(i));
        int s = 0;
        double ret = 0.0, discount = 1.0;
        for (int t = 0; t < mdp.horizon; ++t) {
            int a = sample_row(executed[s], rng.uniform_real());
            ret += discount * mdp.R[s][a];
            discount *= mdp.gamma;
            s = sample_row(mdp.P[s][a], rng.uniform_real());
        }
        sum += ret;
        sumsq += ret * ret;
    }

    RolloutStats stats;
    stats.n = n;
    stats.mean = sum / n;
    double var = std::max(0.0, sumsq / n - stats.mean * stats.mean);
    stats.std_error = std::sqrt(var / n);
    return stats;
}

SmallMDP adversarial_instance() {
    SmallMDP m;
    m.n_states = 3;
    m.n_actions = 3;
    m.gamma = 1.0;
    m.horizon = 3;
    // a0 looks best everywhere, a1 is the safe middle, a2 pays nothing
    m.R.assign(3, {1.0, 0.6, 0.0});
    m.P.assign(3, std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0)));
    for (int s = 0; s < 3; ++s) {
        m.P[s][0][std::min(s + 1, 2)] = 1.0; // greedy action walks down the chain
        m.P[s][1][s] = 1.0;
        m.P[s][2][s] = 1.0;
    }
    m.pi_ref = uniform_policy(3, 3);
    m.validate();
    return m;
}

ModificationKernel adversarial_kernel() {
    auto k = ModificationKernel::identity(3, 3);
    // every intended greedy action is rewritten into the zero-reward one
    for (int s = 0; s < 3; ++s) {
        k.pi_c[s][0][0] = 0.0;
        k.pi_c[s][0][2] = 1.0;
    }
    k.validate();
    return k;
}

} // namespace friction::mamdp
