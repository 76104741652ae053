#include "friction/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace friction::pipeline {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

json PipelineConfig::to_json() const {
    return json{{"task", task.to_json()},
                {"datagen", json{{"dialogues", datagen_dialogues}, {"augment", augment}}},
                {"train", json{{"objectives", objectives},
                               {"steps", train_steps},
                               {"step_size", step_size},
                               {"beta", beta}}},
                {"eval", json{{"dialogues", eval_dialogues}, {"ma", eval_ma}}}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    c.task = TaskConfig::from_json(j.at("task"));
    const auto& dg = j.at("datagen");
    c.datagen_dialogues = dg.at("dialogues").get<int>();
    c.augment = dg.value("augment", false);
    const auto& tr = j.at("train");
    c.objectives = tr.at("objectives").get<std::vector<std::string>>();
    c.train_steps = tr.at("steps").get<int>();
    c.step_size = tr.value("step_size", 0.1);
    c.beta = tr.value("beta", 0.1);
    const auto& ev = j.at("eval");
    c.eval_dialogues = ev.at("dialogues").get<int>();
    c.eval_ma = ev.value("ma", true);
    for (const auto& o : c.objectives) optim::parse_objective(o);
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    return from_json(json::parse(core::read_file(path)));
}

std::string PipelineConfig::digest() const { return core::sha256_hex(to_json().dump()); }

// ---------------------------------------------------------------------------
// Manifest helpers
// ---------------------------------------------------------------------------

namespace {

json load_manifest(const fs::path& out_dir) {
    auto path = out_dir / "manifest.json";
    if (!fs::exists(path)) return json::object();
    try {
        return json::parse(core::read_file(path.string()));
    } catch (const std::exception&) {
        return json::object();
    }
}

std::string file_digest(const fs::path& path) {
    return core::sha256_hex(core::read_file(path.string()));
}

bool stage_done(const json& manifest, const std::string& config_digest, const std::string& stage,
                const fs::path& out_dir) {
    if (manifest.value("config_digest", std::string()) != config_digest) return false;
    if (!manifest.contains("stages") || !manifest.at("stages").contains(stage)) return false;
    for (const auto& [rel, digest] : manifest.at("stages").at(stage).at("artifacts").items()) {
        auto path = out_dir / rel;
        if (!fs::exists(path) || file_digest(path) != digest.get<std::string>()) return false;
    }
    return true;
}

void record_stage(json& manifest, const std::string& config_digest, std::uint64_t seed,
                  const std::string& stage, const std::vector<std::string>& artifacts,
                  const fs::path& out_dir) {
    manifest["version"] = 1;
    manifest["config_digest"] = config_digest;
    manifest["seed"] = seed;
    json arts = json::object();
    for (const auto& rel : artifacts) arts[rel] = file_digest(out_dir / rel);
    auto now = std::chrono::system_clock::now().time_since_epoch();
    manifest["stages"][stage] = {
        {"artifacts", arts},
        {"completed_at", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
    core::write_file((out_dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

} // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> stage_datagen(const PipelineConfig& config, const fs::path& out_dir) {
    datagen::GenerateOptions opts;
    opts.dialogues = config.datagen_dialogues;
    opts.augment = config.augment;
    auto result = datagen::generate(config.task, opts);
    if (result.pref.empty()) throw StageError("datagen", "no dialogues survived generation");
    fs::create_directories(out_dir / "data");
    datagen::write_datasets(result, (out_dir / "data").string());
    return {"data/dpref.jsonl", "data/dtraj.jsonl"};
}

std::vector<std::string> stage_train(const PipelineConfig& config, const fs::path& out_dir) {
    const auto pref_path = out_dir / "data" / "dpref.jsonl";
    const auto traj_path = out_dir / "data" / "dtraj.jsonl";
    std::vector<core::PreferenceRecord> pref;
    std::vector<core::TrajectoryRecord> traj;
    try {
        pref = core::read_pref_jsonl(pref_path.string());
        traj = core::read_traj_jsonl(traj_path.string());
    } catch (const std::exception& e) {
        throw StageError("train", std::string("cannot read dataset ") + pref_path.string() +
                                      ": " + e.what());
    }

    auto spec = optim::FeatureSpec::for_task(config.task);
    auto prefs = optim::featurize_prefs(spec, config.task, pref);
    auto trajs = optim::featurize_traj(spec, config.task, traj);

    fs::create_directories(out_dir / "models");
    fs::create_directories(out_dir / "curves");
    std::vector<std::string> artifacts;
    for (const auto& name : config.objectives) {
        optim::TrainOptions topts;
        topts.objective = optim::parse_objective(name);
        topts.steps = config.train_steps;
        topts.step_size = config.step_size;
        topts.beta = config.beta;
        try {
            optim::TrainResult run;
            if (topts.objective == optim::Objective::Bt) {
                optim::RewardModel reward(spec);
                run = optim::train(reward, prefs, topts);
                reward.save((out_dir / "models" / (name + ".json")).string());
            } else {
                optim::LogLinearPolicy policy(spec);
                run = optim::train(policy, prefs, trajs, topts);
                policy.save((out_dir / "models" / (name + ".json")).string());
            }
            optim::write_curve_csv((out_dir / "curves" / (name + ".csv")).string(), run.curve);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError("train", "objective " + name + ": " + e.what());
        }
        artifacts.push_back("models/" + name + ".json");
        artifacts.push_back("curves/" + name + ".csv");
    }
    return artifacts;
}

/// Reward-model win rate of the trained agent's picks vs the untrained
/// baseline's hypothetical picks at the same factual states.
double trained_vs_base_win_rate(const PipelineConfig& config, const optim::RewardModel& reward,
                                eval::FrictionAgent& trained, bool ma) {
    const auto& task = config.task;
    auto spec = reward.spec;
    auto vocab = tasks::intervention_vocab(task);
    auto phis = tasks::frictive_vocab(task);
    std::vector<double> r_trained, r_base;

    for (int i = 0; i < config.eval_dialogues; ++i) {
        auto rng = core::Rng::split(task.seed, static_cast<std::uint64_t>(i));
        auto profiles = agents::sample_profiles(task, rng, ma);
        datagen::ScriptedCollaborator collab(task, profiles);
        auto state = agents::init_dialogue(task, rng);
        auto base_rng = core::Rng::split(task.seed ^ 0x5157, static_cast<std::uint64_t>(i));
        eval::RandomFrictionAgent base;
        for (int t = 1; t <= task.max_turns; ++t) {
            int bucket = spec.bucket_of(state.digest());
            int phi = tasks::frictive_index(phis, agents::oracle_phi(task, state).id);
            auto f_t = trained.select(task, state, rng);
            auto f_b = base.select(task, state, base_rng);
            r_trained.push_back(reward.score(bucket, phi, tasks::intervention_index(vocab, f_t)));
            r_base.push_back(reward.score(bucket, phi, tasks::intervention_index(vocab, f_b)));
            auto c = collab.respond(state, f_t, rng);
            state.append_intervention("friction", f_t);
            agents::apply_collaborator(state, c);
        }
    }
    return eval::win_rate(r_trained, r_base).rate;
}

std::vector<std::string> stage_eval(const PipelineConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir / "runs");
    std::vector<std::string> artifacts;
    std::vector<std::string> run_names;

    std::optional<optim::RewardModel> reward;
    if (fs::exists(out_dir / "models" / "bt.json")) {
        reward = optim::RewardModel::load((out_dir / "models" / "bt.json").string());
    }

    std::vector<bool> ma_modes{false};
    if (config.eval_ma) ma_modes.push_back(true);

    auto emit = [&](const std::string& name, const std::vector<eval::MetricSeries>& series) {
        auto rel = "runs/" + name + ".json";
        eval::write_series((out_dir / rel).string(), series);
        artifacts.push_back(rel);
        run_names.push_back(name);
    };

    for (const auto& name : config.objectives) {
        if (name == "bt") continue;
        auto policy = optim::LogLinearPolicy::load((out_dir / "models" / (name + ".json")).string());
        for (bool ma : ma_modes) {
            eval::PolicyFrictionAgent trained{policy};
            eval::RandomFrictionAgent base;
            eval::ConditionOptions opts;
            opts.dialogues = config.eval_dialogues;
            opts.ma = ma;
            opts.model = name;

            auto factual = eval::run_condition(config.task, trained, opts);
            if (reward) {
                eval::PolicyFrictionAgent scorer{policy};
                double wr = trained_vs_base_win_rate(config, *reward, scorer, ma);
                for (auto& m : factual) m.win_rate = wr;
            }
            auto counter = eval::run_counterfactual_condition(config.task, trained, base, opts);
            std::string suffix = ma ? "_ma" : "";
            emit(name + "_F" + suffix, factual);
            emit(name + "_NF" + suffix, counter);
        }
    }

    // untrained baseline curve, run independently under Step 1
    for (bool ma : ma_modes) {
        eval::RandomFrictionAgent base;
        eval::ConditionOptions opts;
        opts.dialogues = config.eval_dialogues;
        opts.ma = ma;
        opts.model = "base";
        emit(std::string("base_F") + (ma ? "_ma" : ""), eval::run_condition(config.task, base, opts));
    }

    // register the expected run set for report's missing-run contract
    auto manifest = load_manifest(out_dir);
    manifest["runs"] = run_names;
    core::write_file((out_dir / "manifest.json").string(), manifest.dump(2) + "\n");
    return artifacts;
}

std::vector<std::string> stage_report(const PipelineConfig&, const fs::path& out_dir) {
    auto rep = eval::report(out_dir.string());
    if (!rep.missing.empty()) {
        std::string names;
        for (const auto& m : rep.missing) names += (names.empty() ? "" : ", ") + m;
        throw StageError("report", "missing runs: " + names);
    }
    core::write_file((out_dir / "report.csv").string(), rep.csv);
    return {"report.csv"};
}

} // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const std::string& out_dir_str) {
    config.task.validate();
    const fs::path out_dir(out_dir_str);
    fs::create_directories(out_dir);
    const std::string config_digest = config.digest();
    auto manifest = load_manifest(out_dir);

    using StageFn = std::vector<std::string> (*)(const PipelineConfig&, const fs::path&);
    const std::vector<std::pair<std::string, StageFn>> stages{{"datagen", stage_datagen},
                                                              {"train", stage_train},
                                                              {"eval", stage_eval},
                                                              {"report", stage_report}};

    PipelineResult result;
    result.manifest_path = (out_dir / "manifest.json").string();
    for (const auto& [name, fn] : stages) {
        StageStatus status;
        status.name = name;
        if (stage_done(manifest, config_digest, name, out_dir)) {
            status.skipped = true;
            result.stages.push_back(std::move(status));
            continue;
        }
        try {
            status.artifacts = fn(config, out_dir);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(name, e.what());
        }
        manifest = load_manifest(out_dir); // stage_eval may have updated it
        record_stage(manifest, config_digest, config.task.seed, name, status.artifacts, out_dir);
        result.stages.push_back(std::move(status));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

namespace {

CheckResult check(const std::string& name, bool passed, const std::string& detail) {
    return CheckResult{name, passed, detail};
}

std::vector<optim::PrefSample> verify_prefs(const optim::FeatureSpec& spec, int n, core::Rng& rng) {
    std::vector<optim::PrefSample> out;
    for (int i = 0; i < n; ++i) {
        optim::PrefSample s;
        s.bucket = static_cast<int>(rng.uniform_int(spec.buckets));
        s.phi = static_cast<int>(rng.uniform_int(spec.phi_count));
        s.f_w = static_cast<int>(rng.uniform_int(spec.f_count));
        do {
            s.f_l = static_cast<int>(rng.uniform_int(spec.f_count));
        } while (s.f_l == s.f_w);
        out.push_back(s);
    }
    return out;
}

mamdp::SmallMDP verify_instance(core::Rng& rng, int horizon) {
    mamdp::SmallMDP m;
    m.n_states = 3;
    m.n_actions = 3;
    m.gamma = horizon >= 0 ? 1.0 : 0.9;
    m.horizon = horizon;
    auto row = [&](int n) {
        std::vector<double> r(n);
        double sum = 0.0;
        for (auto& x : r) {
            x = rng.uniform_real() + 1e-3;
            sum += x;
        }
        for (auto& x : r) x /= sum;
        return r;
    };
    m.P.assign(3, std::vector<std::vector<double>>(3));
    m.R.assign(3, std::vector<double>(3));
    m.pi_ref.assign(3, {});
    for (int s = 0; s < 3; ++s) {
        m.pi_ref[s] = row(3);
        for (int a = 0; a < 3; ++a) {
            m.P[s][a] = row(3);
            m.R[s][a] = rng.uniform_real();
        }
    }
    return m;
}

double soft_value_horizon2_oracle(const mamdp::SmallMDP& m, double beta, int s0) {
    auto v1 = [&](int s) {
        double z = 0.0;
        for (int a = 0; a < m.n_actions; ++a) z += m.pi_ref[s][a] * std::exp(m.R[s][a] / beta);
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

std::vector<CheckResult> verify() {
    std::vector<CheckResult> out;
    auto rng = core::Rng(20260826);

    optim::FeatureSpec spec;
    spec.phi_count = 5;
    spec.f_count = 7;
    spec.buckets = 4;

    // analytic gradients vs central differences on every loss
    {
        double worst = 0.0;
        for (int trial = 0; trial < 3; ++trial) {
            auto policy = optim::LogLinearPolicy::random(spec, rng, 0.8);
            auto prefs = verify_prefs(spec, 5, rng);
            std::vector<optim::TrajSample> traj;
            for (const auto& p : prefs) traj.push_back({p.bucket, p.phi, p.f_w});

            auto fd = [&](auto loss_fn) {
                auto rep = loss_fn(policy);
                auto f = [&](const std::vector<double>& v) {
                    auto copy = policy;
                    copy.set_params(v);
                    return loss_fn(copy).loss;
                };
                return optim::fd_check(f, policy.params(), rep.grad, 1e-5);
            };
            worst = std::max(worst, fd([&](const optim::LogLinearPolicy& p) {
                return optim::loss_dpo(p, prefs, 0.1);
            }));
            worst = std::max(worst, fd([&](const optim::LogLinearPolicy& p) {
                return optim::loss_friction_ipo(p, prefs, 0.1);
            }));
            worst = std::max(worst, fd([&](const optim::LogLinearPolicy& p) {
                return optim::loss_faaf(p, prefs, 0.1);
            }));
            worst = std::max(worst, fd([&](const optim::LogLinearPolicy& p) {
                return optim::loss_bc(p, traj);
            }));
            optim::RewardModel reward(spec);
            for (auto& x : reward.w) x = rng.uniform_real() - 0.5;
            auto rep = optim::loss_bt_reward(reward, prefs);
            auto f = [&](const std::vector<double>& w) {
                auto r = reward;
                r.w = w;
                return optim::loss_bt_reward(r, prefs).loss;
            };
            worst = std::max(worst, optim::fd_check(f, reward.w, rep.grad, 1e-5));
        }
        out.push_back(check("gradient-finite-differences", worst <= 1e-5,
                            "max rel err " + std::to_string(worst)));
    }

    // phi-gradient structure of the two square losses
    {
        bool ipo_zero = true, faaf_live = true;
        for (int trial = 0; trial < 20; ++trial) {
            auto policy = optim::LogLinearPolicy::random(spec, rng, 1.0);
            auto prefs = verify_prefs(spec, 6, rng);
            ipo_zero = ipo_zero && optim::loss_friction_ipo(policy, prefs, 0.1).g_phi_norm == 0.0;
            faaf_live = faaf_live && optim::loss_faaf(policy, prefs, 0.1).g_phi_norm > 1e-3;
        }
        out.push_back(check("ipo-phi-gradient-vanishes", ipo_zero, "20 random draws"));
        out.push_back(check("faaf-phi-gradient-alive", faaf_live, "20 random draws"));
    }

    // loss fixpoints at theta = theta_ref
    {
        auto policy = optim::LogLinearPolicy::random(spec, rng, 0.7);
        policy.freeze_reference();
        auto prefs = verify_prefs(spec, 10, rng);
        double dpo = optim::loss_dpo(policy, prefs, 0.1).loss;
        double ipo = optim::loss_friction_ipo(policy, prefs, 0.1).loss;
        double faaf = optim::loss_faaf(policy, prefs, 0.1).loss;
        bool ok = std::abs(dpo - std::log(2.0)) <= 1e-12 && std::abs(ipo - 25.0) <= 1e-10 &&
                  std::abs(faaf - 25.0) <= 1e-10;
        out.push_back(check("loss-fixpoints", ok,
                            "dpo " + std::to_string(dpo) + ", ipo " + std::to_string(ipo)));
    }

    // soft Bellman machinery
    {
        auto disc = verify_instance(rng, -1);
        auto res = mamdp::soft_value_iteration(disc, 0.5);
        out.push_back(check("soft-bellman-residual", res.residual <= 1e-10,
                            "residual " + std::to_string(res.residual)));

        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            auto m = verify_instance(rng, 2);
            auto vi = mamdp::soft_value_iteration(m, 0.7);
            for (int s = 0; s < 3; ++s) {
                worst = std::max(worst, std::abs(vi.V[s] - soft_value_horizon2_oracle(m, 0.7, s)));
            }
        }
        out.push_back(check("soft-horizon2-oracle", worst <= 1e-9,
                            "max dev " + std::to_string(worst)));
    }

    // executable Theorem-1 gap
    {
        auto m = mamdp::adversarial_instance();
        auto kernel = mamdp::adversarial_kernel();
        auto pi_soft = mamdp::soft_value_iteration(m, 0.1).policy;
        double blind = mamdp::start_value(m, pi_soft, &kernel);
        auto aware = mamdp::mamdp_optimal(m, kernel, 8, {pi_soft});
        out.push_back(check("theorem1-gap", aware.value - blind > 0.1,
                            "gap " + std::to_string(aware.value - blind)));
    }

    // composition preserves stochasticity
    {
        bool ok = true;
        for (int trial = 0; trial < 1000 && ok; ++trial) {
            auto m = verify_instance(rng, 2);
            mamdp::ModificationKernel k;
            k.pi_c.assign(3, std::vector<std::vector<double>>(3));
            for (int s = 0; s < 3; ++s) {
                for (int a = 0; a < 3; ++a) k.pi_c[s][a] = m.P[s][a];
            }
            auto composed = mamdp::compose_modification(m.pi_ref, k);
            for (const auto& row : composed) {
                double sum = 0.0;
                for (double x : row) sum += x;
                if (std::abs(sum - 1.0) > 1e-12) ok = false;
            }
        }
        out.push_back(check("compose-stochasticity", ok, "1000 random draws"));
    }

    // metric oracles
    {
        auto config = tasks::default_wason(0);
        bool fg_ok = true;
        const auto& cards = config.cards; // {U, S, 8, 9}
        auto answer = tasks::wason_answer(cards);
        for (int mask = 0; mask < 16; ++mask) {
            std::set<std::string> sel;
            for (int i = 0; i < 4; ++i) {
                if (mask & (1 << i)) sel.insert(cards[i]);
            }
            double want = 0.0;
            for (const auto& card : cards) {
                bool in = sel.count(card) > 0, should = answer.count(card) > 0;
                if (in == should) want += 0.25;
            }
            if (std::abs(tasks::wason_fine_grained(sel, cards) - want) > 1e-12) fg_ok = false;
        }
        fg_ok = fg_ok && tasks::wason_fine_grained({"U", "9"}, cards) == 1.0;
        fg_ok = fg_ok &&
                std::abs(tasks::wason_fine_grained({"8", "3", "U"}, {"3", "U", "8", "V"}) - 0.75) <
                    1e-12;

        bool nccg_ok = eval::nccg({8}, 16)[0] == 0.5 && eval::nccg({0}, 37)[0] == 0.0;
        std::vector<double> same{1.0, 2.0, 3.0, 4.0};
        bool wr_ok = eval::win_rate(same, same).rate == 0.5;
        out.push_back(check("metric-oracles", fg_ok && nccg_ok && wr_ok,
                            "fine-grained, nccg, win-rate self-test"));
    }

    return out;
}

std::string render_checks(const std::vector<CheckResult>& checks) {
    std::size_t width = 0;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    std::ostringstream os;
    for (const auto& c : checks) {
        os << c.name << std::string(width - c.name.size() + 2, ' ')
           << (c.passed ? "PASS" : "FAIL") << "  " << c.detail << '\n';
    }
    return os.str();
}

json checks_json(const std::vector<CheckResult>& checks) {
    json arr = json::array();
    for (const auto& c : checks) {
        arr.push_back(json{{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    return arr;
}

} // namespace friction::pipeline
