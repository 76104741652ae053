#pragma once

#include <functional>
#include <string>
#include <vector>

#include "friction/core.hpp"
#include "friction/tasks.hpp"

namespace friction::optim {

using core::json;
using core::PreferenceRecord;
using core::Rng;
using core::TrajectoryRecord;
using tasks::TaskConfig;

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

/// One-hot features over (phi-id x template-id) plus a state-digest bucket
/// block, for both the conditional policy and the phi policy.
struct FeatureSpec {
    int phi_count = 0;     // frictive vocabulary size, including "none"
    int f_count = 0;       // intervention vocabulary size
    int buckets = 8;       // digest hash buckets

    int cond_dim() const { return phi_count * f_count + buckets * f_count; }
    int phi_dim() const { return phi_count + buckets * phi_count; }
    int total_dim() const { return cond_dim() + phi_dim(); }

    int bucket_of(const std::string& digest) const;

    static FeatureSpec for_task(const TaskConfig& config, int buckets = 8);

    json to_json() const;
    static FeatureSpec from_json(const json& j);
};

/// A preference pair reduced to vocabulary indices.
struct PrefSample {
    int bucket = 0;
    int phi = 0;
    int f_w = 0;
    int f_l = 0;
};

/// One expert decision (phi_t, f_w) from a trajectory record.
struct TrajSample {
    int bucket = 0;
    int phi = 0;
    int f = 0;
};

PrefSample featurize(const FeatureSpec& spec, const TaskConfig& config,
                     const PreferenceRecord& record);
TrajSample featurize(const FeatureSpec& spec, const TaskConfig& config,
                     const TrajectoryRecord& record);
std::vector<PrefSample> featurize_prefs(const FeatureSpec& spec, const TaskConfig& config,
                                        const std::vector<PreferenceRecord>& records);
std::vector<TrajSample> featurize_traj(const FeatureSpec& spec, const TaskConfig& config,
                                       const std::vector<TrajectoryRecord>& records);

// ---------------------------------------------------------------------------
// Policies
// ---------------------------------------------------------------------------

/// Log-linear policy pair: pi(f|phi,s) and pi(phi|s), each softmax over its
/// vocabulary, with a frozen reference copy for log-ratio margins.
class LogLinearPolicy {
  public:
    explicit LogLinearPolicy(FeatureSpec spec);

    static LogLinearPolicy random(FeatureSpec spec, Rng& rng, double scale = 0.5);

    const FeatureSpec& spec() const { return spec_; }

    // Flat parameter vector: theta_cond followed by theta_phi.
    std::vector<double> params() const;
    void set_params(const std::vector<double>& p);

    const std::vector<double>& theta_cond() const { return theta_cond_; }
    const std::vector<double>& theta_phi() const { return theta_phi_; }
    const std::vector<double>& ref_cond() const { return ref_cond_; }
    const std::vector<double>& ref_phi() const { return ref_phi_; }

    /// Copies the current parameters into the frozen reference.
    void freeze_reference();

    std::vector<double> pi_cond(int phi, int bucket, bool reference = false) const;
    std::vector<double> pi_phi(int bucket, bool reference = false) const;
    double log_pi_cond(int f, int phi, int bucket, bool reference = false) const;
    double log_pi_phi(int phi, int bucket, bool reference = false) const;

    /// Law of total probability: sum_phi pi(f|phi,s) pi(phi|s).
    double marginal_pi(int f, int bucket, bool reference = false) const;

    json to_json() const;
    static LogLinearPolicy from_json(const json& j);
    void save(const std::string& path) const;
    static LogLinearPolicy load(const std::string& path);

  private:
    FeatureSpec spec_;
    std::vector<double> theta_cond_, theta_phi_;
    std::vector<double> ref_cond_, ref_phi_;
};

/// Linear reward r(s, phi, f) = w . psi over the conditional feature map.
struct RewardModel {
    FeatureSpec spec;
    std::vector<double> w;

    explicit RewardModel(FeatureSpec s) : spec(s), w(s.cond_dim(), 0.0) {}

    double score(int bucket, int phi, int f) const;

    json to_json() const;
    static RewardModel from_json(const json& j);
    void save(const std::string& path) const;
    static RewardModel load(const std::string& path);
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct LossReport {
    double loss = 0.0;
    std::vector<double> grad;          // full parameter vector
    double g_cond_norm = 0.0;
    double g_phi_norm = 0.0;
    std::vector<double> delta_r;       // per sample
    std::vector<double> delta_r_prime; // per sample (faaf only)
};

/// Mean of -log sigmoid(beta * (phi-conditioned log-ratio margin)).
LossReport loss_dpo(const LogLinearPolicy& policy, const std::vector<PrefSample>& batch,
                    double beta, bool length_normalize = false);

/// Mean of (dR - 1/(2 beta))^2; gradient block for theta_phi is identically 0.
LossReport loss_friction_ipo(const LogLinearPolicy& policy, const std::vector<PrefSample>& batch,
                             double beta, bool length_normalize = false);

/// Mean of (1/(2 beta) - (dR + dR'))^2 with dR' from the marginal policy.
LossReport loss_faaf(const LogLinearPolicy& policy, const std::vector<PrefSample>& batch,
                     double beta, bool length_normalize = false);

/// Mean NLL of (phi, f) under pi(phi|s) pi(f|phi,s).
LossReport loss_bc(const LogLinearPolicy& policy, const std::vector<TrajSample>& batch);

/// Bradley-Terry: mean -log sigmoid(r_w - r_l).
LossReport loss_bt_reward(const RewardModel& reward, const std::vector<PrefSample>& batch);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class Objective { Dpo, Ipo, Faaf, Bc, Bt };

Objective parse_objective(const std::string& name);
std::string objective_name(Objective o);

struct TrainOptions {
    Objective objective = Objective::Faaf;
    int steps = 2000;
    double step_size = 0.1;
    double beta = 0.1;
    int log_every = 10;
};

struct CurveRow {
    int step = 0;
    double loss = 0.0;
    double g_cond_norm = 0.0;
    double g_phi_norm = 0.0;
    double mean_delta_r = 0.0;
    double mean_delta_r_prime = 0.0;
};

struct TrainResult {
    std::vector<CurveRow> curve;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// Plain gradient descent; throws on a NaN loss, naming the step.
TrainResult train(LogLinearPolicy& policy, const std::vector<PrefSample>& prefs,
                  const std::vector<TrajSample>& traj, const TrainOptions& opts);
TrainResult train(RewardModel& reward, const std::vector<PrefSample>& prefs,
                  const TrainOptions& opts);

std::string curve_csv(const std::vector<CurveRow>& curve);
void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve);

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

/// Deterministic pairwise summation.
double pairwise_sum(const std::vector<double>& xs);

/// Central-difference check of an analytic gradient; returns the
/// coordinate-wise max relative error with denominator max(1, |g|).
double fd_check(const std::function<double(const std::vector<double>&)>& f,
                const std::vector<double>& params, const std::vector<double>& analytic_grad,
                double h);

} // namespace friction::optim
