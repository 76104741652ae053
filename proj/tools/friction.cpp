// friction: datagen, training, MAMDP demos, and evaluation in one binary.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "friction/pipeline.hpp"

using namespace friction;
namespace fs = std::filesystem;

namespace {

tasks::TaskConfig task_from_flags(const std::string& task_file, const std::string& task_name,
                                  std::uint64_t seed) {
    if (!task_file.empty()) return tasks::TaskConfig::load(task_file);
    if (task_name == "wason") return tasks::default_wason(seed);
    if (task_name == "weights") return tasks::default_weights(seed);
    throw std::invalid_argument("unknown task: " + task_name);
}

/// Remote-backed friction agent; the reply's <friction> tag must carry an
/// intervention key from the task vocabulary.
class RemoteFrictionAgent : public eval::FrictionAgent {
  public:
    explicit RemoteFrictionAgent(const std::string& endpoint) : remote_(endpoint) {
        // credential comes from the environment and is never echoed
        if (const char* token = std::getenv("FRICTION_REMOTE_TOKEN")) remote_.set_token(token);
    }

  protected:
    core::Intervention pick(const tasks::TaskConfig& config, const core::DialogueState& state,
                            core::Rng&) override {
        auto reply = remote_.call("friction", agents::oracle_system_prompt(config),
                                  state.transcript(), agents::friction_decoding());
        auto parsed = agents::parse_tagged_reply(reply);
        if (!parsed.friction) throw std::runtime_error("remote reply lacks a friction tag");
        for (const auto& f : tasks::intervention_vocab(config)) {
            if (f.key() == *parsed.friction || f.template_id == *parsed.friction) return f;
        }
        throw std::runtime_error("remote intervention not in vocabulary: " + *parsed.friction);
    }

  private:
    agents::RemoteAgent remote_;
};

struct WinrateContext {
    int bucket, phi, f;
};

void write_contexts(const fs::path& path, const std::vector<WinrateContext>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += core::json{{"bucket", r.bucket}, {"phi", r.phi}, {"f", r.f}}.dump() + "\n";
    }
    core::write_file(path.string(), out);
}

std::vector<WinrateContext> read_contexts(const fs::path& path) {
    std::istringstream is(core::read_file(path.string()));
    std::vector<WinrateContext> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = core::json::parse(line);
        rows.push_back({j.at("bucket").get<int>(), j.at("phi").get<int>(), j.at("f").get<int>()});
    }
    return rows;
}

int cmd_datagen(const tasks::TaskConfig& task, int dialogues, bool augment, bool ma,
                bool early_stop, const std::string& out_dir) {
    datagen::GenerateOptions opts;
    opts.dialogues = dialogues;
    opts.augment = augment;
    opts.ma_mode = ma;
    opts.early_stop = early_stop;
    auto result = datagen::generate(task, opts);
    fs::create_directories(out_dir);
    datagen::write_datasets(result, out_dir);
    std::cout << "dialogues completed: " << result.dialogues_completed
              << ", failed: " << result.dialogues_failed
              << ", pref records: " << result.pref.size()
              << ", traj records: " << result.traj.size() << "\n";
    return result.dialogues_completed > 0 ? 0 : 1;
}

int cmd_train(const tasks::TaskConfig& task, const std::string& data_dir,
              const std::string& objective, int steps, double step_size, double beta,
              const std::string& model_out, const std::string& curve_out) {
    auto spec = optim::FeatureSpec::for_task(task);
    auto pref = core::read_pref_jsonl((fs::path(data_dir) / "dpref.jsonl").string());
    auto traj = core::read_traj_jsonl((fs::path(data_dir) / "dtraj.jsonl").string());
    auto prefs = optim::featurize_prefs(spec, task, pref);
    auto trajs = optim::featurize_traj(spec, task, traj);

    optim::TrainOptions opts;
    opts.objective = optim::parse_objective(objective);
    opts.steps = steps;
    opts.step_size = step_size;
    opts.beta = beta;

    optim::TrainResult run;
    if (opts.objective == optim::Objective::Bt) {
        optim::RewardModel reward(spec);
        run = optim::train(reward, prefs, opts);
        reward.save(model_out);
    } else {
        optim::LogLinearPolicy policy(spec);
        run = optim::train(policy, prefs, trajs, opts);
        policy.save(model_out);
    }
    if (!curve_out.empty()) optim::write_curve_csv(curve_out, run.curve);
    std::cout << "loss " << run.initial_loss << " -> " << run.final_loss << " over " << steps
              << " steps\n";
    return 0;
}

int cmd_mamdp_demo(const std::string& out_file) {
    auto m = mamdp::adversarial_instance();
    auto kernel = mamdp::adversarial_kernel();
    auto pi_soft = mamdp::soft_value_iteration(m, 0.1).policy;
    double blind = mamdp::start_value(m, pi_soft, &kernel);
    auto aware = mamdp::mamdp_optimal(m, kernel, 8, {pi_soft});
    auto mc_blind = mamdp::mc_rollouts(m, pi_soft, &kernel, 100000, 1);
    auto mc_aware = mamdp::mc_rollouts(m, aware.policy, &kernel, 100000, 2);

    std::ostringstream os;
    os.precision(10);
    os << "policy,value,mc_mean,mc_stderr\n";
    os << "soft_blind," << blind << ',' << mc_blind.mean << ',' << mc_blind.std_error << '\n';
    os << "mamdp_optimal," << aware.value << ',' << mc_aware.mean << ',' << mc_aware.std_error
       << '\n';
    os << "gap," << (aware.value - blind) << ",,\n";
    core::write_file(out_file, os.str());
    std::cout << "gap " << (aware.value - blind) << " written to " << out_file << "\n";
    return aware.value - blind > 0.1 ? 0 : 1;
}

int cmd_eval_counterfactual(const tasks::TaskConfig& task, const std::string& policy_file,
                            int dialogues, bool ma, const std::string& remote,
                            const std::string& out_dir) {
    std::unique_ptr<eval::FrictionAgent> trained;
    if (!remote.empty()) {
        trained = std::make_unique<RemoteFrictionAgent>(remote);
    } else {
        trained = std::make_unique<eval::PolicyFrictionAgent>(
            optim::LogLinearPolicy::load(policy_file));
    }
    eval::RandomFrictionAgent base;

    eval::ConditionOptions opts;
    opts.dialogues = dialogues;
    opts.ma = ma;
    opts.model = remote.empty() ? fs::path(policy_file).stem().string() : "remote";

    fs::create_directories(fs::path(out_dir) / "runs");
    auto factual = eval::run_condition(task, *trained, opts);
    auto counter = eval::run_counterfactual_condition(task, *trained, base, opts);
    std::string suffix = ma ? "_ma" : "";
    eval::write_series((fs::path(out_dir) / "runs" / (opts.model + "_F" + suffix + ".json")).string(),
                       factual);
    eval::write_series(
        (fs::path(out_dir) / "runs" / (opts.model + "_NF" + suffix + ".json")).string(), counter);

    // per-turn contexts of the factual runs, for `eval winrate`
    auto spec = optim::FeatureSpec::for_task(task);
    auto vocab = tasks::intervention_vocab(task);
    auto phis = tasks::frictive_vocab(task);
    std::vector<WinrateContext> rows;
    for (int i = 0; i < dialogues; ++i) {
        auto rng = core::Rng::split(task.seed, static_cast<std::uint64_t>(i));
        auto profiles = agents::sample_profiles(task, rng, ma);
        datagen::ScriptedCollaborator collab(task, profiles);
        auto state = agents::init_dialogue(task, rng);
        for (int t = 1; t <= task.max_turns; ++t) {
            auto f = trained->select(task, state, rng);
            rows.push_back({spec.bucket_of(state.digest()),
                            tasks::frictive_index(phis, agents::oracle_phi(task, state).id),
                            tasks::intervention_index(vocab, f)});
            auto c = collab.respond(state, f, rng);
            state.append_intervention("friction", f);
            agents::apply_collaborator(state, c);
        }
    }
    write_contexts(fs::path(out_dir) / "contexts.jsonl", rows);
    std::cout << "wrote " << (2 * dialogues) << " runs to " << out_dir << "\n";
    return 0;
}

int cmd_eval_winrate(const std::string& reward_file, const std::string& dir_a,
                     const std::string& dir_b) {
    auto reward = optim::RewardModel::load(reward_file);
    auto a = read_contexts(fs::path(dir_a) / "contexts.jsonl");
    auto b = read_contexts(fs::path(dir_b) / "contexts.jsonl");
    if (a.size() != b.size()) throw std::invalid_argument("context lists differ in length");
    std::vector<double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ra.push_back(reward.score(a[i].bucket, a[i].phi, a[i].f));
        rb.push_back(reward.score(b[i].bucket, b[i].phi, b[i].f));
    }
    auto wr = eval::win_rate(ra, rb);
    std::cout.precision(4);
    std::cout << std::fixed << "win rate A vs B: " << 100.0 * wr.rate << "% +/- "
              << 100.0 * wr.std_error << " (n=" << wr.n << ")\n";
    return 0;
}

int cmd_report(const std::string& dir, const std::string& out_file) {
    auto rep = eval::report(dir);
    if (out_file.empty()) {
        std::cout << rep.csv;
    } else {
        core::write_file(out_file, rep.csv);
    }
    for (const auto& m : rep.missing) std::cerr << "missing run: " << m << "\n";
    return 0;
}

int cmd_pipeline(const std::string& config_file, const std::string& out_dir) {
    auto config = pipeline::PipelineConfig::load(config_file);
    auto result = pipeline::run_pipeline(config, out_dir);
    for (const auto& s : result.stages) {
        std::cout << s.name << (s.skipped ? " (skipped)" : " done") << "\n";
    }
    return 0;
}

int cmd_verify(bool as_json) {
    auto checks = pipeline::verify();
    if (as_json) {
        std::cout << pipeline::checks_json(checks).dump(2) << "\n";
    } else {
        std::cout << pipeline::render_checks(checks);
    }
    for (const auto& c : checks) {
        if (!c.passed) return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"friction-agent toolkit"};
    app.require_subcommand(1);

    std::string task_name = "wason", task_file, out_dir = "out", data_dir = "out/data";
    std::string objective = "faaf", model_out = "model.json", curve_out, policy_file, remote;
    std::string reward_file, dir_a, dir_b, report_dir, report_out, config_file;
    std::uint64_t seed = 0;
    int dialogues = 10, steps = 2000;
    double step_size = 0.1, beta = 0.1;
    bool augment = false, ma = false, early_stop = false, as_json = false;

    auto add_task_flags = [&](CLI::App* cmd) {
        cmd->add_option("--task", task_name, "wason or weights");
        cmd->add_option("--task-config", task_file, "task config JSON (overrides --task)");
        cmd->add_option("--seed", seed, "task seed");
    };

    auto* dg = app.add_subcommand("datagen", "roleplay preference/trajectory datasets");
    add_task_flags(dg);
    dg->add_option("--dialogues", dialogues);
    dg->add_flag("--augment", augment, "add card-mapped Wason copies");
    dg->add_flag("--ma", ma, "modification-averse collaborators");
    dg->add_flag("--early-stop", early_stop);
    dg->add_option("--out", out_dir)->required();

    auto* tr = app.add_subcommand("train", "fit a policy or reward model");
    add_task_flags(tr);
    tr->add_option("--data", data_dir)->required();
    tr->add_option("--objective", objective, "dpo|ipo|faaf|bc|bt");
    tr->add_option("--steps", steps);
    tr->add_option("--step-size", step_size);
    tr->add_option("--beta", beta);
    tr->add_option("--model", model_out)->required();
    tr->add_option("--curve", curve_out, "loss-curve CSV path");

    auto* md = app.add_subcommand("mamdp", "MDP/MAMDP demos");
    auto* demo = md->add_subcommand("demo-theorem1", "adversarial modification gap");
    std::string demo_out = "theorem1.csv";
    demo->add_option("--out", demo_out);

    auto* ev = app.add_subcommand("eval", "counterfactual evaluation and win rates");
    auto* cf = ev->add_subcommand("counterfactual");
    add_task_flags(cf);
    cf->add_option("--policy", policy_file, "trained policy JSON");
    cf->add_option("--dialogues", dialogues);
    cf->add_flag("--ma", ma);
    cf->add_option("--remote", remote, "remote agent endpoint");
    cf->add_option("--out", out_dir)->required();
    auto* wr = ev->add_subcommand("winrate");
    wr->add_option("--reward", reward_file)->required();
    wr->add_option("--a", dir_a)->required();
    wr->add_option("--b", dir_b)->required();

    auto* rp = app.add_subcommand("report", "long-format metrics CSV");
    rp->add_option("--dir", report_dir)->required();
    rp->add_option("--out", report_out);

    auto* pl = app.add_subcommand("pipeline", "datagen -> train -> eval -> report");
    pl->add_option("--config", config_file)->required();
    pl->add_option("--out", out_dir)->required();

    auto* vf = app.add_subcommand("verify", "run the property suite");
    vf->add_flag("--json", as_json);

    CLI11_PARSE(app, argc, argv);

    try {
        if (dg->parsed()) {
            return cmd_datagen(task_from_flags(task_file, task_name, seed), dialogues, augment, ma,
                               early_stop, out_dir);
        }
        if (tr->parsed()) {
            return cmd_train(task_from_flags(task_file, task_name, seed), data_dir, objective,
                             steps, step_size, beta, model_out, curve_out);
        }
        if (md->parsed() && demo->parsed()) return cmd_mamdp_demo(demo_out);
        if (ev->parsed() && cf->parsed()) {
            if (policy_file.empty() && remote.empty()) {
                std::cerr << "eval counterfactual needs --policy or --remote\n";
                return 2;
            }
            return cmd_eval_counterfactual(task_from_flags(task_file, task_name, seed),
                                           policy_file, dialogues, ma, remote, out_dir);
        }
        if (ev->parsed() && wr->parsed()) return cmd_eval_winrate(reward_file, dir_a, dir_b);
        if (rp->parsed()) return cmd_report(report_dir, report_out);
        if (pl->parsed()) return cmd_pipeline(config_file, out_dir);
        if (vf->parsed()) return cmd_verify(as_json);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const pipeline::StageError& e) {
        std::cerr << "stage " << e.stage() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
