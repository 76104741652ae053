#pragma once

#include <optional>
#include <string>
#include <vector>

#include "friction/datagen.hpp"
#include "friction/optim.hpp"

namespace friction::eval {

using core::CollaboratorTurn;
using core::DialogueState;
using core::Intervention;
using core::Rng;
using tasks::TaskConfig;

// ---------------------------------------------------------------------------
// Friction agents
// ---------------------------------------------------------------------------

/// Selects one intervention per turn; `calls()` instruments how often a given
/// agent was actually consulted (the counterfactual protocol asserts the
/// trained policy is never touched in NF runs).
class FrictionAgent {
  public:
    virtual ~FrictionAgent() = default;
    Intervention select(const TaskConfig& config, const DialogueState& state, Rng& rng) {
        ++calls_;
        return pick(config, state, rng);
    }
    int calls() const { return calls_; }
    void reset_calls() { calls_ = 0; }

  protected:
    virtual Intervention pick(const TaskConfig& config, const DialogueState& state, Rng& rng) = 0;

  private:
    int calls_ = 0;
};

/// Greedy decoding from a trained log-linear policy: the frictive state is
/// read off the environment's structured beliefs, then f = argmax pi(f|phi).
class PolicyFrictionAgent : public FrictionAgent {
  public:
    explicit PolicyFrictionAgent(optim::LogLinearPolicy policy) : policy_(std::move(policy)) {}

  protected:
    Intervention pick(const TaskConfig& config, const DialogueState& state, Rng& rng) override;

  private:
    optim::LogLinearPolicy policy_;
};

/// Untrained baseline: uniform over the intervention vocabulary.
class RandomFrictionAgent : public FrictionAgent {
  protected:
    Intervention pick(const TaskConfig& config, const DialogueState& state, Rng& rng) override;
};

/// Always plays no_op; useful as the generic-revision control.
class NoOpFrictionAgent : public FrictionAgent {
  protected:
    Intervention pick(const TaskConfig& config, const DialogueState& state, Rng& rng) override;
};

// ---------------------------------------------------------------------------
// Trajectories and metrics
// ---------------------------------------------------------------------------

struct RunResult {
    DialogueState final_state;
    std::vector<Intervention> interventions;   // f_1 .. f_T
    std::vector<CollaboratorTurn> responses;   // c_1 .. c_T
    std::vector<int> cg_sizes;                 // |CG_t| after each turn
    double accuracy = 0.0;
    double fg_accuracy = 0.0;
};

struct TrajectoryPair {
    RunResult factual;                      // tau^F
    std::vector<Intervention> base_cache;   // F^base, exactly T entries
    RunResult counterfactual;               // tau^base
};

/// Step 1: a full dialogue driven by the friction agent.
RunResult run_factual(const TaskConfig& config, FrictionAgent& agent,
                      datagen::Collaborator& collaborator, DialogueState start, Rng& rng);

/// Steps 2-3. Step 2 feeds the base agent the full factual prefix before each
/// turn and caches its interventions; Step 3 replays a fresh dialogue from s0
/// injecting the cache in order with fresh collaborator responses.
TrajectoryPair counterfactual_replace(const TaskConfig& config, const RunResult& factual,
                                      FrictionAgent& base_agent,
                                      datagen::Collaborator& collaborator, DialogueState start,
                                      Rng& rng);

std::vector<double> nccg(const std::vector<int>& cg_sizes, int bound);

struct WinRate {
    double rate = 0.0;      // fraction in [0,1], ties counted 0.5
    double std_error = 0.0; // sqrt(p(1-p)/n)
    int n = 0;
};

WinRate win_rate(const std::vector<double>& rewards_a, const std::vector<double>& rewards_b);

struct BootstrapStats {
    double mean = 0.0;
    double std_error = 0.0;
};

BootstrapStats bootstrap_stats(const std::vector<double>& values, int resamples = 10000,
                               std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Experiment runs and reporting
// ---------------------------------------------------------------------------

struct MetricSeries {
    std::string model;
    std::string task;
    std::string condition = "F"; // F (factual) or NF (counterfactual)
    bool ma = false;
    std::vector<int> cg_sizes;
    std::vector<double> nccg;
    double accuracy = 0.0;
    double fg_accuracy = 0.0;
    std::optional<double> win_rate;

    core::json to_json() const;
    static MetricSeries from_json(const core::json& j);
};

MetricSeries metrics_from_run(const TaskConfig& config, const RunResult& run);

struct ConditionOptions {
    int dialogues = 10;
    bool ma = false;
    std::string model = "agent";
    std::string condition = "F";
};

/// Independent seeded dialogues under one agent; dialogue i draws from
/// Rng::split(config.seed, i).
std::vector<MetricSeries> run_condition(const TaskConfig& config, FrictionAgent& agent,
                                        const ConditionOptions& opts);

/// Counterfactual (NF) runs: factual dialogues under `trained`, then the
/// drop-in replacement by `base`. Returned series describe the NF side.
std::vector<MetricSeries> run_counterfactual_condition(const TaskConfig& config,
                                                       FrictionAgent& trained,
                                                       FrictionAgent& base,
                                                       const ConditionOptions& opts);

struct Report {
    std::string csv;
    std::vector<std::string> missing;
};

/// Long-format CSV over every runs/*.json series in the experiment dir;
/// expected-but-absent run files (from manifest.json, when present) are
/// listed in `missing` and the partial report is still emitted.
Report report(const std::string& experiment_dir);

void write_series(const std::string& path, const std::vector<MetricSeries>& series);
std::vector<MetricSeries> read_series(const std::string& path);

} // namespace friction::eval
