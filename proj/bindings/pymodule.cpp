// Python bindings for the frictionlab core. JSON-shaped values cross the
// boundary as serialized strings so the python side can use plain dicts.
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "friction/pipeline.hpp"

namespace py = pybind11;
using namespace friction;

namespace {

tasks::TaskConfig config_from_str(const std::string& js) {
    return tasks::TaskConfig::from_json(core::json::parse(js));
}

py::dict report_to_dict(const optim::LossReport& r) {
    py::dict d;
    d["loss"] = r.loss;
    d["grad"] = r.grad;
    d["g_cond_norm"] = r.g_cond_norm;
    d["g_phi_norm"] = r.g_phi_norm;
    d["delta_r"] = r.delta_r;
    d["delta_r_prime"] = r.delta_r_prime;
    return d;
}

} // namespace

PYBIND11_MODULE(_frictionlab, m) {
    m.doc() = "Friction-agent simulation, training, and evaluation core";

    // ---- core -------------------------------------------------------------
    py::class_<core::Rng>(m, "Rng")
        .def(py::init<std::uint64_t>())
        .def("next", &core::Rng::next)
        .def("uniform_int", &core::Rng::uniform_int)
        .def("uniform_real", &core::Rng::uniform_real)
        .def_static("split", &core::Rng::split);
    m.def("sha256_hex", [](const std::string& s) { return core::sha256_hex(s); });

    // ---- tasks ------------------------------------------------------------
    m.def("default_wason_config",
          [](std::uint64_t seed) { return tasks::default_wason(seed).to_json().dump(2); },
          py::arg("seed") = 0);
    m.def("default_weights_config",
          [](std::uint64_t seed) { return tasks::default_weights(seed).to_json().dump(2); },
          py::arg("seed") = 0);
    m.def("wason_answer", [](const std::vector<std::string>& cards) {
        return tasks::wason_answer(cards);
    });
    m.def("wason_fine_grained", &tasks::wason_fine_grained);

    // ---- datagen ----------------------------------------------------------
    m.def(
        "generate_datasets",
        [](const std::string& config_js, int dialogues, bool augment) {
            auto config = config_from_str(config_js);
            datagen::GenerateOptions opts;
            opts.dialogues = dialogues;
            opts.augment = augment;
            auto result = datagen::generate(config, opts);
            py::dict d;
            core::json pref = core::json::array(), traj = core::json::array();
            for (const auto& r : result.pref) pref.push_back(r.to_json());
            for (const auto& r : result.traj) traj.push_back(r.to_json());
            d["pref"] = pref.dump();
            d["traj"] = traj.dump();
            d["dialogues_completed"] = result.dialogues_completed;
            d["dialogues_failed"] = result.dialogues_failed;
            return d;
        },
        py::arg("config_json"), py::arg("dialogues") = 10, py::arg("augment") = false);

    // ---- optim ------------------------------------------------------------
    py::class_<optim::FeatureSpec>(m, "FeatureSpec")
        .def_readonly("phi_count", &optim::FeatureSpec::phi_count)
        .def_readonly("f_count", &optim::FeatureSpec::f_count)
        .def_readonly("buckets", &optim::FeatureSpec::buckets)
        .def("cond_dim", &optim::FeatureSpec::cond_dim)
        .def("phi_dim", &optim::FeatureSpec::phi_dim)
        .def("total_dim", &optim::FeatureSpec::total_dim)
        .def_static("for_task", [](const std::string& config_js, int buckets) {
            return optim::FeatureSpec::for_task(config_from_str(config_js), buckets);
        }, py::arg("config_json"), py::arg("buckets") = 8);

    py::class_<optim::PrefSample>(m, "PrefSample")
        .def(py::init([](int bucket, int phi, int f_w, int f_l) {
            optim::PrefSample s;
            s.bucket = bucket;
            s.phi = phi;
            s.f_w = f_w;
            s.f_l = f_l;
            return s;
        }), py::arg("bucket"), py::arg("phi"), py::arg("f_w"), py::arg("f_l"))
        .def_readwrite("bucket", &optim::PrefSample::bucket)
        .def_readwrite("phi", &optim::PrefSample::phi)
        .def_readwrite("f_w", &optim::PrefSample::f_w)
        .def_readwrite("f_l", &optim::PrefSample::f_l);

    py::class_<optim::TrajSample>(m, "TrajSample")
        .def(py::init([](int bucket, int phi, int f) {
            optim::TrajSample s;
            s.bucket = bucket;
            s.phi = phi;
            s.f = f;
            return s;
        }), py::arg("bucket"), py::arg("phi"), py::arg("f"))
        .def_readwrite("bucket", &optim::TrajSample::bucket)
        .def_readwrite("phi", &optim::TrajSample::phi)
        .def_readwrite("f", &optim::TrajSample::f);

    py::class_<optim::LogLinearPolicy>(m, "LogLinearPolicy")
        .def(py::init<optim::FeatureSpec>())
        .def_static("random", [](const optim::FeatureSpec& spec, std::uint64_t seed, double scale) {
            auto rng = core::Rng(seed);
            return optim::LogLinearPolicy::random(spec, rng, scale);
        }, py::arg("spec"), py::arg("seed"), py::arg("scale") = 0.5)
        .def("params", &optim::LogLinearPolicy::params)
        .def("set_params", &optim::LogLinearPolicy::set_params)
        .def("freeze_reference", &optim::LogLinearPolicy::freeze_reference)
        .def("pi_cond", &optim::LogLinearPolicy::pi_cond, py::arg("phi"), py::arg("bucket"),
             py::arg("reference") = false)
        .def("pi_phi", &optim::LogLinearPolicy::pi_phi, py::arg("bucket"),
             py::arg("reference") = false)
        .def("marginal_pi", &optim::LogLinearPolicy::marginal_pi, py::arg("f"), py::arg("bucket"),
             py::arg("reference") = false)
        .def("to_json", [](const optim::LogLinearPolicy& p) { return p.to_json().dump(2); })
        .def("save", &optim::LogLinearPolicy::save)
        .def_static("load", &optim::LogLinearPolicy::load);

    py::class_<optim::RewardModel>(m, "RewardModel")
        .def(py::init<optim::FeatureSpec>())
        .def_readwrite("w", &optim::RewardModel::w)
        .def("score", &optim::RewardModel::score)
        .def("save", &optim::RewardModel::save)
        .def_static("load", &optim::RewardModel::load);

    m.def("loss_dpo", [](const optim::LogLinearPolicy& p, const std::vector<optim::PrefSample>& b,
                         double beta) { return report_to_dict(optim::loss_dpo(p, b, beta)); },
          py::arg("policy"), py::arg("batch"), py::arg("beta") = 0.1);
    m.def("loss_friction_ipo",
          [](const optim::LogLinearPolicy& p, const std::vector<optim::PrefSample>& b,
             double beta) { return report_to_dict(optim::loss_friction_ipo(p, b, beta)); },
          py::arg("policy"), py::arg("batch"), py::arg("beta") = 0.1);
    m.def("loss_faaf", [](const optim::LogLinearPolicy& p, const std::vector<optim::PrefSample>& b,
                          double beta) { return report_to_dict(optim::loss_faaf(p, b, beta)); },
          py::arg("policy"), py::arg("batch"), py::arg("beta") = 0.1);
    m.def("loss_bc", [](const optim::LogLinearPolicy& p, const std::vector<optim::TrajSample>& b) {
        return report_to_dict(optim::loss_bc(p, b));
    });
    m.def("loss_bt_reward",
          [](const optim::RewardModel& r, const std::vector<optim::PrefSample>& b) {
              return report_to_dict(optim::loss_bt_reward(r, b));
          });

    m.def(
        "train_policy",
        [](optim::LogLinearPolicy& policy, const std::vector<optim::PrefSample>& prefs,
           const std::vector<optim::TrajSample>& traj, const std::string& objective, int steps,
           double step_size, double beta) {
            optim::TrainOptions opts;
            opts.objective = optim::parse_objective(objective);
            opts.steps = steps;
            opts.step_size = step_size;
            opts.beta = beta;
            auto result = optim::train(policy, prefs, traj, opts);
            py::dict d;
            d["initial_loss"] = result.initial_loss;
            d["final_loss"] = result.final_loss;
            d["curve_csv"] = optim::curve_csv(result.curve);
            return d;
        },
        py::arg("policy"), py::arg("prefs"), py::arg("traj"), py::arg("objective") = "faaf",
        py::arg("steps") = 2000, py::arg("step_size") = 0.1, py::arg("beta") = 0.1);
    m.def(
        "train_reward",
        [](optim::RewardModel& reward, const std::vector<optim::PrefSample>& prefs, int steps,
           double step_size) {
            optim::TrainOptions opts;
            opts.objective = optim::Objective::Bt;
            opts.steps = steps;
            opts.step_size = step_size;
            auto result = optim::train(reward, prefs, opts);
            py::dict d;
            d["initial_loss"] = result.initial_loss;
            d["final_loss"] = result.final_loss;
            return d;
        },
        py::arg("reward"), py::arg("prefs"), py::arg("steps") = 2000, py::arg("step_size") = 0.1);

    m.def("fd_check", &optim::fd_check, py::arg("f"), py::arg("params"),
          py::arg("analytic_grad"), py::arg("h") = 1e-5);

    // ---- mamdp ------------------------------------------------------------
    m.def("theorem1_demo", [](double beta) {
        auto mdp = mamdp::adversarial_instance();
        auto kernel = mamdp::adversarial_kernel();
        auto best = mamdp::mamdp_optimal(mdp, kernel);
        auto soft = mamdp::soft_value_iteration(mdp, beta);
        double blind = mamdp::start_value(mdp, soft.policy, &kernel);
        py::dict d;
        d["aware_value"] = best.value;
        d["blind_value"] = blind;
        d["gap"] = best.value - blind;
        return d;
    }, py::arg("beta") = 0.1);

    // ---- eval -------------------------------------------------------------
    m.def("nccg", &eval::nccg, py::arg("cg_sizes"), py::arg("bound"));
    m.def("win_rate", [](const std::vector<double>& a, const std::vector<double>& b) {
        auto wr = eval::win_rate(a, b);
        py::dict d;
        d["rate"] = wr.rate;
        d["std_error"] = wr.std_error;
        d["n"] = wr.n;
        return d;
    });
    m.def("bootstrap_stats",
          [](const std::vector<double>& values, int resamples, std::uint64_t seed) {
              auto b = eval::bootstrap_stats(values, resamples, seed);
              py::dict d;
              d["mean"] = b.mean;
              d["std_error"] = b.std_error;
              return d;
          },
          py::arg("values"), py::arg("resamples") = 10000, py::arg("seed") = 0);

    // ---- pipeline ---------------------------------------------------------
    m.def("run_pipeline", [](const std::string& config_js, const std::string& out_dir) {
        auto config = pipeline::PipelineConfig::from_json(core::json::parse(config_js));
        auto result = pipeline::run_pipeline(config, out_dir);
        py::list stages;
        for (const auto& s : result.stages) {
            py::dict d;
            d["name"] = s.name;
            d["skipped"] = s.skipped;
            stages.append(d);
        }
        return stages;
    });
    m.def("verify", []() { return pipeline::checks_json(pipeline::verify()).dump(2); });
}
