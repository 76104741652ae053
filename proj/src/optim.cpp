#include "friction/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace friction::optim {

namespace {

std::vector<double> softmax(const std::vector<double>& logits) {
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (auto& p : out) p /= z;
    return out;
}

double log_sigmoid(double x) {
    // -log(1 + e^{-x}), stable for both signs
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double pairwise_sum_range(const std::vector<double>& xs, std::size_t lo, std::size_t hi) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += xs[i];
        return s;
    }
    std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum_range(xs, lo, mid) + pairwise_sum_range(xs, mid, hi);
}

/// Pairwise-sums per-sample gradient rows into `out` (sized total dim).
void reduce_rows(const std::vector<std::vector<double>>& rows, std::vector<double>& out) {
    std::vector<double> column(rows.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i][j];
        out[j] = pairwise_sum_range(column, 0, column.size());
    }
}

double block_norm(const std::vector<double>& g, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += g[i] * g[i];
    return std::sqrt(s);
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return pairwise_sum_range(xs, 0, xs.size()) / static_cast<double>(xs.size());
}

} // namespace

// ---------------------------------------------------------------------------
// FeatureSpec
// ---------------------------------------------------------------------------

int FeatureSpec::bucket_of(const std::string& digest) const {
    unsigned long v = 0;
    for (std::size_t i = 0; i < digest.size() && i < 8; ++i) {
        char c = digest[i];
        int nibble;
        if (c >= '0' && c <= '9') nibble = c - '0';
        else if (c >= 'a' && c <= 'f') nibble = 10 + (c - 'a');
        else if (c >= 'A' && c <= 'F') nibble = 10 + (c - 'A');
        else throw std::invalid_argument("non-hex digest: " + digest);
        v = (v << 4) | static_cast<unsigned long>(nibble);
    }
    return static_cast<int>(v % static_cast<unsigned long>(buckets));
}

FeatureSpec FeatureSpec::for_task(const TaskConfig& config, int buckets) {
    FeatureSpec spec;
    spec.phi_count = static_cast<int>(tasks::frictive_vocab(config).size());
    spec.f_count = static_cast<int>(tasks::intervention_vocab(config).size());
    spec.buckets = buckets;
    return spec;
}

json FeatureSpec::to_json() const {
    return json{{"phi_count", phi_count}, {"f_count", f_count}, {"buckets", buckets}};
}

FeatureSpec FeatureSpec::from_json(const json& j) {
    FeatureSpec spec;
    spec.phi_count = j.at("phi_count").get<int>();
    spec.f_count = j.at("f_count").get<int>();
    spec.buckets = j.at("buckets").get<int>();
    return spec;
}

PrefSample featurize(const FeatureSpec& spec, const TaskConfig& config,
                     const PreferenceRecord& record) {
    auto phis = tasks::frictive_vocab(config);
    auto fs = tasks::intervention_vocab(config);
    PrefSample s;
    s.bucket = spec.bucket_of(record.state_digest);
    s.phi = tasks::frictive_index(phis, record.phi.id);
    s.f_w = tasks::intervention_index(fs, record.f_w);
    s.f_l = tasks::intervention_index(fs, record.f_l);
    return s;
}

TrajSample featurize(const FeatureSpec& spec, const TaskConfig& config,
                     const TrajectoryRecord& record) {
    auto phis = tasks::frictive_vocab(config);
    auto fs = tasks::intervention_vocab(config);
    TrajSample s;
    s.bucket = spec.bucket_of(record.state_digest);
    s.phi = tasks::frictive_index(phis, record.phi.id);
    s.f = tasks::intervention_index(fs, record.f_w);
    return s;
}

std::vector<PrefSample> featurize_prefs(const FeatureSpec& spec, const TaskConfig& config,
                                        const std::vector<PreferenceRecord>& records) {
    std::vector<PrefSample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(featurize(spec, config, r));
    return out;
}

std::vector<TrajSample> featurize_traj(const FeatureSpec& spec, const TaskConfig& config,
                                       const std::vector<TrajectoryRecord>& records) {
    std::vector<TrajSample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(featurize(spec, config, r));
    return out;
}

// ---------------------------------------------------------------------------
// LogLinearPolicy
// ---------------------------------------------------------------------------

LogLinearPolicy::LogLinearPolicy(FeatureSpec spec)
    : spec_(spec),
      theta_cond_(spec.cond_dim(), 0.0),
      theta_phi_(spec.phi_dim(), 0.0),
      ref_cond_(spec.cond_dim(), 0.0),
      ref_phi_(spec.phi_dim(), 0.0) {}

LogLinearPolicy LogLinearPolicy::random(FeatureSpec spec, Rng& rng, double scale) {
    LogLinearPolicy p(spec);
    for (auto& x : p.theta_cond_) x = (rng.uniform_real() * 2.0 - 1.0) * scale;
    for (auto& x : p.theta_phi_) x = (rng.uniform_real() * 2.0 - 1.0) * scale;
    for (auto& x : p.ref_cond_) x = (rng.uniform_real() * 2.0 - 1.0) * scale;
    for (auto& x : p.ref_phi_) x = (rng.uniform_real() * 2.0 - 1.0) * scale;
    return p;
}

std::vector<double> LogLinearPolicy::params() const {
    std::vector<double> p(theta_cond_);
    p.insert(p.end(), theta_phi_.begin(), theta_phi_.end());
    return p;
}

void LogLinearPolicy::set_params(const std::vector<double>& p) {
    if (p.size() != static_cast<std::size_t>(spec_.total_dim())) {
        throw std::invalid_argument("parameter vector length mismatch");
    }
    std::copy(p.begin(), p.begin() + spec_.cond_dim(), theta_cond_.begin());
    std::copy(p.begin() + spec_.cond_dim(), p.end(), theta_phi_.begin());
}

void LogLinearPolicy::freeze_reference() {
    ref_cond_ = theta_cond_;
    ref_phi_ = theta_phi_;
}

std::vector<double> LogLinearPolicy::pi_cond(int phi, int bucket, bool reference) const {
    const auto& th = reference ? ref_cond_ : theta_cond_;
    const int F = spec_.f_count;
    std::vector<double> logits(F);
    for (int f = 0; f < F; ++f) {
        logits[f] = th[phi * F + f] + th[spec_.phi_count * F + bucket * F + f];
    }
    return softmax(logits);
}

std::vector<double> LogLinearPolicy::pi_phi(int bucket, bool reference) const {
    const auto& th = reference ? ref_phi_ : theta_phi_;
    const int P = spec_.phi_count;
    std::vector<double> logits(P);
    for (int phi = 0; phi < P; ++phi) {
        logits[phi] = th[phi] + th[P + bucket * P + phi];
    }
    return softmax(logits);
}

double LogLinearPolicy::log_pi_cond(int f, int phi, int bucket, bool reference) const {
    return std::log(pi_cond(phi, bucket, reference)[f]);
}

double LogLinearPolicy::log_pi_phi(int phi, int bucket, bool reference) const {
    return std::log(pi_phi(bucket, reference)[phi]);
}

double LogLinearPolicy::marginal_pi(int f, int bucket, bool reference) const {
    auto pphi = pi_phi(bucket, reference);
    double m = 0.0;
    for (int phi = 0; phi < spec_.phi_count; ++phi) {
        m += pphi[phi] * pi_cond(phi, bucket, reference)[f];
    }
    return m;
}

json LogLinearPolicy::to_json() const {
    return json{{"version", 1},
                {"feature_spec", spec_.to_json()},
                {"theta_cond", theta_cond_},
                {"theta_phi", theta_phi_},
                {"ref_cond", ref_cond_},
                {"ref_phi", ref_phi_}};
}

LogLinearPolicy LogLinearPolicy::from_json(const json& j) {
    LogLinearPolicy p(FeatureSpec::from_json(j.at("feature_spec")));
    p.theta_cond_ = j.at("theta_cond").get<std::vector<double>>();
    p.theta_phi_ = j.at("theta_phi").get<std::vector<double>>();
    p.ref_cond_ = j.at("ref_cond").get<std::vector<double>>();
    p.ref_phi_ = j.at("ref_phi").get<std::vector<double>>();
    if (p.theta_cond_.size() != static_cast<std::size_t>(p.spec_.cond_dim()) ||
        p.theta_phi_.size() != static_cast<std::size_t>(p.spec_.phi_dim())) {
        throw std::invalid_argument("model file inconsistent with feature spec");
    }
    return p;
}

void LogLinearPolicy::save(const std::string& path) const {
    core::write_file(path, to_json().dump(2) + "\n");
}

LogLinearPolicy LogLinearPolicy::load(const std::string& path) {
    return from_json(json::parse(core::read_file(path)));
}

double RewardModel::score(int bucket, int phi, int f) const {
    return w[phi * spec.f_count + f] + w[spec.phi_count * spec.f_count + bucket * spec.f_count + f];
}

json RewardModel::to_json() const {
    return json{{"version", 1}, {"feature_spec", spec.to_json()}, {"w", w}};
}

RewardModel RewardModel::from_json(const json& j) {
    RewardModel r(FeatureSpec::from_json(j.at("feature_spec")));
    r.w = j.at("w").get<std::vector<double>>();
    if (r.w.size() != static_cast<std::size_t>(r.spec.cond_dim())) {
        throw std::invalid_argument("reward file inconsistent with feature spec");
    }
    return r;
}

void RewardModel::save(const std::string& path) const {
    core::write_file(path, to_json().dump(2) + "\n");
}

RewardModel RewardModel::load(const std::string& path) {
    return from_json(json::parse(core::read_file(path)));
}

// ---------------------------------------------------------------------------
// Loss internals
// ---------------------------------------------------------------------------

namespace {

struct SampleCtx {
    const LogLinearPolicy& policy;
    const FeatureSpec& spec;
    const PrefSample& s;

    int cond_index(int phi, int f) const { return phi * spec.f_count + f; }
    int cond_bucket_index(int f) const {
        return spec.phi_count * spec.f_count + s.bucket * spec.f_count + f;
    }
    int phi_index(int phi) const { return phi; }
    int phi_bucket_index(int phi) const { return spec.phi_count + s.bucket * spec.phi_count + phi; }
};

/// dR = phi-conditioned log-ratio margin. Gradient wrt theta_cond is
/// psi(f_w) - psi(f_l): the softmax expectation cancels in the difference.
double delta_r_value(const SampleCtx& c) {
    const auto& p = c.policy;
    const auto& s = c.s;
    return (p.log_pi_cond(s.f_w, s.phi, s.bucket) - p.log_pi_cond(s.f_w, s.phi, s.bucket, true)) -
           (p.log_pi_cond(s.f_l, s.phi, s.bucket) - p.log_pi_cond(s.f_l, s.phi, s.bucket, true));
}

void add_delta_r_grad(const SampleCtx& c, double coeff, std::vector<double>& g) {
    g[c.cond_index(c.s.phi, c.s.f_w)] += coeff;
    g[c.cond_bucket_index(c.s.f_w)] += coeff;
    g[c.cond_index(c.s.phi, c.s.f_l)] -= coeff;
    g[c.cond_bucket_index(c.s.f_l)] -= coeff;
}

/// dR' = marginal log-ratio margin via the law of total probability.
double delta_r_prime_value(const SampleCtx& c) {
    const auto& p = c.policy;
    const auto& s = c.s;
    return (std::log(p.marginal_pi(s.f_w, s.bucket)) - std::log(p.marginal_pi(s.f_w, s.bucket, true))) -
           (std::log(p.marginal_pi(s.f_l, s.bucket)) - std::log(p.marginal_pi(s.f_l, s.bucket, true)));
}

/// Adds coeff * grad(log m(f)) where m(f) = sum_phi pi(phi) pi(f|phi).
void add_log_marginal_grad(const SampleCtx& c, int f, double coeff, std::vector<double>& g) {
    const auto& p = c.policy;
    const auto& spec = c.spec;
    const int P = spec.phi_count;
    const int cond_dim = spec.cond_dim();

    auto pphi = p.pi_phi(c.s.bucket);
    std::vector<std::vector<double>> pcond(P);
    double m = 0.0;
    for (int phi = 0; phi < P; ++phi) {
        pcond[phi] = p.pi_cond(phi, c.s.bucket);
        m += pphi[phi] * pcond[phi][f];
    }

    // theta_cond block: d m / d theta[phi, g] = pi(phi) pi(f|phi) (1{g=f} - pi(g|phi)).
    for (int phi = 0; phi < P; ++phi) {
        double w = coeff * pphi[phi] * pcond[phi][f] / m;
        for (int gidx = 0; gidx < spec.f_count; ++gidx) {
            double v = w * ((gidx == f ? 1.0 : 0.0) - pcond[phi][gidx]);
            g[c.cond_index(phi, gidx)] += v;
            g[c.cond_bucket_index(gidx)] += v; // bucket feature shared across phi
        }
    }

    // theta_phi block: d log m / d theta_phi[phi'] = pi(phi') (pi(f|phi') - m) / m.
    for (int phi = 0; phi < P; ++phi) {
        double v = coeff * pphi[phi] * (pcond[phi][f] - m) / m;
        g[cond_dim + c.phi_index(phi)] += v;
        g[cond_dim + c.phi_bucket_index(phi)] += v;
    }
}

LossReport finish_report(const FeatureSpec& spec, std::size_t n,
                         const std::vector<double>& losses,
                         const std::vector<std::vector<double>>& grads) {
    LossReport rep;
    rep.loss = mean_of(losses);
    rep.grad.assign(spec.total_dim(), 0.0);
    reduce_rows(grads, rep.grad);
    for (auto& x : rep.grad) x /= static_cast<double>(n);
    rep.g_cond_norm = block_norm(rep.grad, 0, spec.cond_dim());
    rep.g_phi_norm = block_norm(rep.grad, spec.cond_dim(), rep.grad.size());
    return rep;
}

void check_beta(double beta) {
    if (beta <= 0.0) throw std::invalid_argument("beta must be positive");
}

void check_batch(std::size_t n) {
    if (n == 0) throw std::invalid_argument("empty batch");
}

} // namespace

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

LossReport loss_dpo(const LogLinearPolicy& policy, const std::vector<PrefSample>& batch,
                    double beta, bool length_normalize) {
    check_beta(beta);
    check_batch(batch.size());
    (void)length_normalize; // template interventions are single-token
    const auto& spec = policy.spec();
    std::vector<double> losses(batch.size());
    std::vector<std::vector<double>> grads(batch.size());
    std::vector<double> drs(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        SampleCtx c{policy, spec, batch[i]};
        double dr = delta_r_value(c);
        drs[i] = dr;
        losses[i] = -log_sigmoid(beta * dr);
        grads[i].assign(spec.total_dim(), 0.0);
        add_delta_r_grad(c, -beta * sigmoid(-beta * dr), grads[i]);
    }
    auto rep = finish_report(spec, batch.size(), losses, grads);
    rep.delta_r = std::move(drs);
    return rep;
}

LossReport loss_friction_ipo(const LogLinearPolicy& policy, const std::vector<PrefSample>& batch,
                             double beta, bool length_normalize) {
    check_beta(beta);
    check_batch(batch.size());
    (void)length_normalize;
    const auto& spec = policy.spec();
    const double target = 1.0 / (2.0 * beta);
    std::vector<double> losses(batch.size());
    std::vector<std::vector<double>> grads(batch.size());
    std::vector<double> drs(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        SampleCtx c{policy, spec, batch[i]};
        double dr = delta_r_value(c);
        drs[i] = dr;
        losses[i] = (dr - target) * (dr - target);
        grads[i].assign(spec.total_dim(), 0.0);
        add_delta_r_grad(c, 2.0 * (dr - target), grads[i]);
    }
    auto rep = finish_report(spec, batch.size(), losses, grads);
    rep.delta_r = std::move(drs);
    return rep;
}

LossReport loss_faaf(const LogLinearPolicy& policy, const std::vector<PrefSample>& batch,
                     double beta, bool length_normalize) {
    check_beta(beta);
    check_batch(batch.size());
    (void)length_normalize;
    const auto& spec = policy.spec();
    const double target = 1.0 / (2.0 * beta);
    std::vector<double> losses(batch.size());
    std::vector<std::vector<double>> grads(batch.size());
    std::vector<double> drs(batch.size()), drps(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        SampleCtx c{policy, spec, batch[i]};
        double dr = delta_r_value(c);
        double drp = delta_r_prime_value(c);
        drs[i] = dr;
        drps[i] = drp;
        double delta = target - (dr + drp);
        losses[i] = delta * delta;
        grads[i].assign(spec.total_dim(), 0.0);
        double coeff = -2.0 * delta;
        add_delta_r_grad(c, coeff, grads[i]);
        add_log_marginal_grad(c, batch[i].f_w, coeff, grads[i]);
        add_log_marginal_grad(c, batch[i].f_l, -coeff, grads[i]);
    }
    auto rep = finish_report(spec, batch.size(), losses, grads);
    rep.delta_r = std::move(drs);
    rep.delta_r_prime = std::move(drps);
    return rep;
}

LossReport loss_bc(const LogLinearPolicy& policy, const std::vector<TrajSample>& batch) {
    check_batch(batch.size());
    const auto& spec = policy.spec();
    const int cond_dim = spec.cond_dim();
    std::vector<double> losses(batch.size());
    std::vector<std::vector<double>> grads(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        auto pphi = policy.pi_phi(s.bucket);
        auto pcond = policy.pi_cond(s.phi, s.bucket);
        losses[i] = -(std::log(pphi[s.phi]) + std::log(pcond[s.f]));
        auto& g = grads[i];
        g.assign(spec.total_dim(), 0.0);
        for (int f = 0; f < spec.f_count; ++f) {
            double v = pcond[f] - (f == s.f ? 1.0 : 0.0);
            g[s.phi * spec.f_count + f] += v;
            g[spec.phi_count * spec.f_count + s.bucket * spec.f_count + f] += v;
        }
        for (int phi = 0; phi < spec.phi_count; ++phi) {
            double v = pphi[phi] - (phi == s.phi ? 1.0 : 0.0);
            g[cond_dim + phi] += v;
            g[cond_dim + spec.phi_count + s.bucket * spec.phi_count + phi] += v;
        }
    }
    return finish_report(spec, batch.size(), losses, grads);
}

LossReport loss_bt_reward(const RewardModel& reward, const std::vector<PrefSample>& batch) {
    check_batch(batch.size());
    const auto& spec = reward.spec;
    std::vector<double> losses(batch.size());
    std::vector<std::vector<double>> grads(batch.size());

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        double margin = reward.score(s.bucket, s.phi, s.f_w) - reward.score(s.bucket, s.phi, s.f_l);
        losses[i] = -log_sigmoid(margin);
        auto& g = grads[i];
        g.assign(spec.cond_dim(), 0.0);
        double coeff = -sigmoid(-margin);
        g[s.phi * spec.f_count + s.f_w] += coeff;
        g[spec.phi_count * spec.f_count + s.bucket * spec.f_count + s.f_w] += coeff;
        g[s.phi * spec.f_count + s.f_l] -= coeff;
        g[spec.phi_count * spec.f_count + s.bucket * spec.f_count + s.f_l] -= coeff;
    }

    LossReport rep;
    rep.loss = mean_of(losses);
    rep.grad.assign(spec.cond_dim(), 0.0);
    reduce_rows(grads, rep.grad);
    for (auto& x : rep.grad) x /= static_cast<double>(batch.size());
    rep.g_cond_norm = block_norm(rep.grad, 0, rep.grad.size());
    rep.g_phi_norm = 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

Objective parse_objective(const std::string& name) {
    if (name == "dpo") return Objective::Dpo;
    if (name == "ipo") return Objective::Ipo;
    if (name == "faaf") return Objective::Faaf;
    if (name == "bc") return Objective::Bc;
    if (name == "bt") return Objective::Bt;
    throw std::invalid_argument("unknown objective: " + name);
}

std::string objective_name(Objective o) {
    switch (o) {
        case Objective::Dpo: return "dpo";
        case Objective::Ipo: return "ipo";
        case Objective::Faaf: return "faaf";
        case Objective::Bc: return "bc";
        case Objective::Bt: return "bt";
    }
    throw std::logic_error("unreachable");
}

TrainResult train(LogLinearPolicy& policy, const std::vector<PrefSample>& prefs,
                  const std::vector<TrajSample>& traj, const TrainOptions& opts) {
    auto eval = [&]() -> LossReport {
        switch (opts.objective) {
            case Objective::Dpo: return loss_dpo(policy, prefs, opts.beta);
            case Objective::Ipo: return loss_friction_ipo(policy, prefs, opts.beta);
            case Objective::Faaf: return loss_faaf(policy, prefs, opts.beta);
            case Objective::Bc: return loss_bc(policy, traj);
            case Objective::Bt: break;
        }
        throw std::invalid_argument("bt objective trains a RewardModel, not a policy");
    };

    TrainResult result;
    auto params = policy.params();
    for (int step = 0; step <= opts.steps; ++step) {
        auto rep = eval();
        if (std::isnan(rep.loss)) {
            throw std::runtime_error("training diverged (NaN loss) at step " +
                                     std::to_string(step));
        }
        if (step == 0) result.initial_loss = rep.loss;
        result.final_loss = rep.loss;
        if (step % opts.log_every == 0 || step == opts.steps) {
            CurveRow row;
            row.step = step;
            row.loss = rep.loss;
            row.g_cond_norm = rep.g_cond_norm;
            row.g_phi_norm = rep.g_phi_norm;
            row.mean_delta_r = mean_of(rep.delta_r);
            row.mean_delta_r_prime = mean_of(rep.delta_r_prime);
            result.curve.push_back(row);
        }
        if (step == opts.steps) break;
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= opts.step_size * rep.grad[i];
        policy.set_params(params);
    }
    return result;
}

TrainResult train(RewardModel& reward, const std::vector<PrefSample>& prefs,
                  const TrainOptions& opts) {
    if (opts.objective != Objective::Bt) {
        throw std::invalid_argument("reward training requires the bt objective");
    }
    TrainResult result;
    for (int step = 0; step <= opts.steps; ++step) {
        auto rep = loss_bt_reward(reward, prefs);
        if (std::isnan(rep.loss)) {
            throw std::runtime_error("training diverged (NaN loss) at step " +
                                     std::to_string(step));
        }
        if (step == 0) result.initial_loss = rep.loss;
        result.final_loss = rep.loss;
        if (step % opts.log_every == 0 || step == opts.steps) {
            CurveRow row;
            row.step = step;
            row.loss = rep.loss;
            row.g_cond_norm = rep.g_cond_norm;
            result.curve.push_back(row);
        }
        if (step == opts.steps) break;
        for (std::size_t i = 0; i < reward.w.size(); ++i) {
            reward.w[i] -= opts.step_size * rep.grad[i];
        }
    }
    return result;
}

std::string curve_csv(const std::vector<CurveRow>& curve) {
    std::ostringstream os;
    os << "step,loss,g_cond_norm,g_phi_norm,mean_delta_r,mean_delta_r_prime\n";
    os.precision(12);
    for (const auto& row : curve) {
        os << row.step << ',' << row.loss << ',' << row.g_cond_norm << ',' << row.g_phi_norm
           << ',' << row.mean_delta_r << ',' << row.mean_delta_r_prime << '\n';
    }
    return os.str();
}

void write_curve_csv(const std::string& path, const std::vector<CurveRow>& curve) {
    core::write_file(path, curve_csv(curve));
}

// ---------------------------------------------------------------------------
// Numerics
// ---------------------------------------------------------------------------

double pairwise_sum(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return pairwise_sum_range(xs, 0, xs.size());
}

double fd_check(const std::function<double(const std::vector<double>&)>& f,
                const std::vector<double>& params, const std::vector<double>& analytic_grad,
                double h) {
    if (h <= 0.0) throw std::invalid_argument("h must be positive");
    if (params.size() != analytic_grad.size()) {
        throw std::invalid_argument("gradient length mismatch");
    }
    double worst = 0.0;
    auto p = params;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double orig = p[i];
        p[i] = orig + h;
        double up = f(p);
        p[i] = orig - h;
        double down = f(p);
        p[i] = orig;
        double fd = (up - down) / (2.0 * h);
        double err = std::abs(fd - analytic_grad[i]) / std::max(1.0, std::abs(analytic_grad[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace friction::optim
