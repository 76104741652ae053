#include "friction/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

namespace friction::eval {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Agents
// ---------------------------------------------------------------------------

Intervention PolicyFrictionAgent::pick(const TaskConfig& config, const DialogueState& state,
                                       Rng& rng) {
    (void)rng;
    const auto& spec = policy_.spec();
    int bucket = spec.bucket_of(state.digest());

    // The frictive state comes from the environment's structured beliefs
    // (same source as CG extraction); the trained conditional head picks the
    // intervention for it greedily.
    auto phis = tasks::frictive_vocab(config);
    int phi = tasks::frictive_index(phis, agents::oracle_phi(config, state).id);
    auto pcond = policy_.pi_cond(phi, bucket);
    int f = static_cast<int>(std::max_element(pcond.begin(), pcond.end()) - pcond.begin());
    return tasks::intervention_vocab(config)[f];
}

Intervention RandomFrictionAgent::pick(const TaskConfig& config, const DialogueState& state,
                                       Rng& rng) {
    (void)state;
    auto vocab = tasks::intervention_vocab(config);
    return vocab[rng.uniform_int(vocab.size())];
}

Intervention NoOpFrictionAgent::pick(const TaskConfig& config, const DialogueState& state,
                                     Rng& rng) {
    (void)state;
    (void)rng;
    for (const auto& f : tasks::intervention_vocab(config)) {
        if (f.template_id == "no_op") return f;
    }
    throw std::logic_error("vocabulary lacks no_op");
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

namespace {

void finalize_metrics(const TaskConfig& config, RunResult& run) {
    if (config.kind == tasks::TaskKind::Wason) {
        auto selection = agents::group_selection(config, run.final_state);
        auto answer = tasks::wason_answer(config.cards);
        run.accuracy = selection == answer ? 1.0 : 0.0;
        run.fg_accuracy = tasks::wason_fine_grained(selection, config.cards);
    } else {
        auto cg = agents::state_common_ground(run.final_state);
        auto key = tasks::answer_key(config);
        double frac = static_cast<double>(tasks::wtd_accuracy(cg, key)) / config.bound;
        run.accuracy = frac;
        run.fg_accuracy = frac;
    }
}

} // namespace

RunResult run_factual(const TaskConfig& config, FrictionAgent& agent,
                      datagen::Collaborator& collaborator, DialogueState start, Rng& rng) {
    RunResult run;
    run.final_state = std::move(start);
    auto& state = run.final_state;
    for (int t = 1; t <= config.max_turns; ++t) {
        auto f = agent.select(config, state, rng);
        auto c = collaborator.respond(state, f, rng);
        state.append_intervention("friction", f);
        agents::apply_collaborator(state, c);
        run.interventions.push_back(f);
        run.responses.push_back(c);
        run.cg_sizes.push_back(static_cast<int>(agents::state_common_ground(state).propositions.size()));
    }
    finalize_metrics(config, run);
    return run;
}

TrajectoryPair counterfactual_replace(const TaskConfig& config, const RunResult& factual,
                                      FrictionAgent& base_agent,
                                      datagen::Collaborator& collaborator, DialogueState start,
                                      Rng& rng) {
    TrajectoryPair pair;
    pair.factual = factual;
    const int T = static_cast<int>(factual.interventions.size());

    // Step 2: replay the factual prefix to the base agent, cache F^base.
    {
        DialogueState state = start;
        for (int t = 0; t < T; ++t) {
            pair.base_cache.push_back(base_agent.select(config, state, rng));
            state.append_intervention("friction", factual.interventions[t]);
            agents::apply_collaborator(state, factual.responses[t]);
        }
    }

    // Step 3: fresh dialogue injecting the cache in order.
    auto& run = pair.counterfactual;
    run.final_state = std::move(start);
    auto& state = run.final_state;
    for (int t = 1; t <= config.max_turns; ++t) {
        if (t > static_cast<int>(pair.base_cache.size())) {
            throw std::runtime_error("cache-exhausted");
        }
        const auto& f = pair.base_cache[t - 1];
        auto c = collaborator.respond(state, f, rng);
        state.append_intervention("friction", f);
        agents::apply_collaborator(state, c);
        run.interventions.push_back(f);
        run.responses.push_back(c);
        run.cg_sizes.push_back(static_cast<int>(agents::state_common_ground(state).propositions.size()));
    }
    finalize_metrics(config, run);
    return pair;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

std::vector<double> nccg(const std::vector<int>& cg_sizes, int bound) {
    if (bound <= 0) throw std::invalid_argument("bound must be positive");
    std::vector<double> out(cg_sizes.size());
    for (std::size_t i = 0; i < cg_sizes.size(); ++i) {
        out[i] = static_cast<double>(cg_sizes[i]) / bound;
    }
    return out;
}

WinRate win_rate(const std::vector<double>& rewards_a, const std::vector<double>& rewards_b) {
    if (rewards_a.size() != rewards_b.size()) {
        throw std::invalid_argument("win_rate inputs must be paired");
    }
    if (rewards_a.empty()) throw std::invalid_argument("win_rate needs at least one pair");
    double wins = 0.0;
    for (std::size_t i = 0; i < rewards_a.size(); ++i) {
        if (rewards_a[i] > rewards_b[i]) wins += 1.0;
        else if (rewards_a[i] == rewards_b[i]) wins += 0.5;
    }
    WinRate wr;
    wr.n = static_cast<int>(rewards_a.size());
    wr.rate = wins / wr.n;
    wr.std_error = std::sqrt(wr.rate * (1.0 - wr.rate) / wr.n);
    return wr;
}

BootstrapStats bootstrap_stats(const std::vector<double>& values, int resamples,
                               std::uint64_t seed) {
    const std::size_t n = values.size();
    if (n < 2) throw std::invalid_argument("bootstrap needs at least two values");
    BootstrapStats stats;
    double sum = 0.0;
    for (double v : values) sum += v;
    stats.mean = sum / static_cast<double>(n);

    auto rng = Rng(seed);
    double acc = 0.0, acc2 = 0.0;
    for (int r = 0; r < resamples; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += values[rng.uniform_int(n)];
        double m = s / static_cast<double>(n);
        acc += m;
        acc2 += m * m;
    }
    double mean_of_means = acc / resamples;
    stats.std_error = std::sqrt(std::max(0.0, acc2 / resamples - mean_of_means * mean_of_means));
    return stats;
}

// ---------------------------------------------------------------------------
// Experiment runs
// ---------------------------------------------------------------------------

core::json MetricSeries::to_json() const {
    core::json j{{"model", model},       {"task", task},
                 {"condition", condition}, {"ma", ma},
                 {"cg_sizes", cg_sizes},   {"nccg", nccg},
                 {"accuracy", accuracy},   {"fg_accuracy", fg_accuracy}};
    if (win_rate) j["win_rate"] = *win_rate;
    return j;
}

MetricSeries MetricSeries::from_json(const core::json& j) {
    MetricSeries m;
    m.model = j.at("model").get<std::string>();
    m.task = j.at("task").get<std::string>();
    m.condition = j.at("condition").get<std::string>();
    m.ma = j.at("ma").get<bool>();
    m.cg_sizes = j.at("cg_sizes").get<std::vector<int>>();
    m.nccg = j.at("nccg").get<std::vector<double>>();
    m.accuracy = j.at("accuracy").get<double>();
    m.fg_accuracy = j.at("fg_accuracy").get<double>();
    if (j.contains("win_rate")) m.win_rate = j.at("win_rate").get<double>();
    return m;
}

MetricSeries metrics_from_run(const TaskConfig& config, const RunResult& run) {
    MetricSeries m;
    m.task = config.task_id;
    m.cg_sizes = run.cg_sizes;
    m.nccg = nccg(run.cg_sizes, config.bound);
    m.accuracy = run.accuracy;
    m.fg_accuracy = run.fg_accuracy;
    return m;
}

std::vector<MetricSeries> run_condition(const TaskConfig& config, FrictionAgent& agent,
                                        const ConditionOptions& opts) {
    std::vector<MetricSeries> out;
    for (int i = 0; i < opts.dialogues; ++i) {
        auto rng = Rng::split(config.seed, static_cast<std::uint64_t>(i));
        auto profiles = agents::sample_profiles(config, rng, opts.ma);
        datagen::ScriptedCollaborator collab(config, profiles);
        auto start = agents::init_dialogue(config, rng);
        auto run = run_factual(config, agent, collab, std::move(start), rng);
        auto m = metrics_from_run(config, run);
        m.model = opts.model;
        m.condition = opts.condition;
        m.ma = opts.ma;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<MetricSeries> run_counterfactual_condition(const TaskConfig& config,
                                                       FrictionAgent& trained,
                                                       FrictionAgent& base,
                                                       const ConditionOptions& opts) {
    std::vector<MetricSeries> out;
    for (int i = 0; i < opts.dialogues; ++i) {
        auto rng = Rng::split(config.seed, static_cast<std::uint64_t>(i));
        auto profiles = agents::sample_profiles(config, rng, opts.ma);
        datagen::ScriptedCollaborator collab(config, profiles);
        auto start = agents::init_dialogue(config, rng);

        auto factual = run_factual(config, trained, collab, start, rng);
        auto pair = counterfactual_replace(config, factual, base, collab, start, rng);

        auto m = metrics_from_run(config, pair.counterfactual);
        m.model = opts.model;
        m.condition = "NF";
        m.ma = opts.ma;
        out.push_back(std::move(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

void write_series(const std::string& path, const std::vector<MetricSeries>& series) {
    core::json rows = core::json::array();
    for (const auto& m : series) rows.push_back(m.to_json());
    core::write_file(path, rows.dump(2) + "\n");
}

std::vector<MetricSeries> read_series(const std::string& path) {
    auto rows = core::json::parse(core::read_file(path));
    std::vector<MetricSeries> out;
    for (const auto& j : rows) out.push_back(MetricSeries::from_json(j));
    return out;
}

Report report(const std::string& experiment_dir) {
    Report rep;
    const fs::path dir(experiment_dir);
    const fs::path runs_dir = dir / "runs";

    std::vector<std::string> files;
    if (fs::exists(runs_dir)) {
        for (const auto& entry : fs::directory_iterator(runs_dir)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());

    if (fs::exists(dir / "manifest.json")) {
        auto manifest = core::json::parse(core::read_file((dir / "manifest.json").string()));
        if (manifest.contains("runs")) {
            for (const auto& name : manifest.at("runs")) {
                auto path = runs_dir / (name.get<std::string>() + ".json");
                if (!fs::exists(path)) rep.missing.push_back(name.get<std::string>());
            }
        }
    }

    std::ostringstream os;
    os << "model,task,condition,ma,turn,nccg,acc,fg_acc,win_rate\n";
    os.precision(10);
    for (const auto& file : files) {
        for (const auto& m : read_series(file)) {
            for (std::size_t t = 0; t < m.nccg.size(); ++t) {
                os << m.model << ',' << m.task << ',' << m.condition << ','
                   << (m.ma ? 1 : 0) << ',' << (t + 1) << ',' << m.nccg[t] << ','
                   << m.accuracy << ',' << m.fg_accuracy << ',';
                if (m.win_rate) os << *m.win_rate;
                os << '\n';
            }
        }
    }
    rep.csv = os.str();
    return rep;
}

} // namespace friction::eval
