#include "friction/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>

namespace friction::datagen {

FrictiveState ScriptedOracle::phi(const DialogueState& state) {
    return agents::oracle_phi(config_, state);
}

std::vector<Intervention> ScriptedOracle::candidates(const DialogueState& state,
                                                     const FrictiveState& phi, int k, Rng& rng) {
    return agents::oracle_candidates(config_, state, phi, k, rng);
}

CollaboratorTurn ScriptedCollaborator::respond(const DialogueState& state, const Intervention& f,
                                               Rng& rng) {
    return agents::collaborator_step(config_, state, f, profiles_, rng);
}

std::pair<int, int> west_of_n(const std::vector<std::pair<Intervention, int>>& scored) {
    std::set<std::string> distinct;
    for (const auto& [f, score] : scored) distinct.insert(f.key());
    if (distinct.size() < 2) throw std::invalid_argument("degenerate-pool");
    int best = 0;
    for (int i = 1; i < static_cast<int>(scored.size()); ++i)
        if (scored[i].second > scored[best].second) best = i;
    int worst = -1;
    for (int i = 0; i < static_cast<int>(scored.size()); ++i) {
        if (scored[i].first.key() == scored[best].first.key()) continue;
        if (worst < 0 || scored[i].second < scored[worst].second) worst = i;
    }
    return {best, worst};
}

RoleplayResult run_roleplay(const TaskConfig& config, Oracle& oracle, Collaborator& collaborator,
                            DialogueState start, Rng& rng, const RoleplayOptions& opts) {
    RoleplayResult result;
    result.final_state = std::move(start);
    auto& state = result.final_state;
    std::vector<core::TrajectoryStep> history;

    for (int t = 1; t <= config.max_turns; ++t) {
        auto phi = oracle.phi(state);
        auto candidates = oracle.candidates(state, phi, config.candidates, rng);

        std::vector<std::pair<Intervention, int>> scored;
        std::vector<CollaboratorTurn> responses;
        for (const auto& f : candidates) {
            auto c = collaborator.respond(state, f, rng);
            scored.emplace_back(f, c.self_score);
            responses.push_back(std::move(c));
        }
        auto [w, l] = west_of_n(scored);

        const std::string digest = state.digest();
        const std::string prompt = state.transcript();

        PreferenceRecord pref;
        pref.state_digest = digest;
        pref.state_prompt = prompt;
        pref.phi = phi;
        pref.f_w = scored[w].first;
        pref.f_l = scored[l].first;
        pref.score_w = scored[w].second;
        pref.score_l = scored[l].second;
        pref.validate();
        result.pref.push_back(std::move(pref));

        TrajectoryRecord traj;
        traj.state_digest = digest;
        traj.state_prompt = prompt;
        traj.history = history;
        traj.phi = phi;
        traj.f_w = scored[w].first;
        result.traj.push_back(std::move(traj));

        // s <- s + f_w + c_w
        state.append_intervention("friction", scored[w].first);
        agents::apply_collaborator(state, responses[w]);

        core::TrajectoryStep step;
        step.phi = phi;
        step.f_w = scored[w].first;
        step.response = responses[w];
        history.push_back(std::move(step));

        result.turns_executed = t;
        if (opts.early_stop && agents::task_complete(config, state)) break;
    }
    return result;
}

GenerateResult generate(const TaskConfig& config, const GenerateOptions& opts) {
    GenerateResult out;
    for (int i = 0; i < opts.dialogues; ++i) {
        auto rng = Rng::split(config.seed, static_cast<std::uint64_t>(i));
        try {
            auto profiles = agents::sample_profiles(config, rng, opts.ma_mode);
            ScriptedOracle oracle(config);
            ScriptedCollaborator collaborator(config, profiles);
            auto start = agents::init_dialogue(config, rng);
            RoleplayOptions ropts;
            ropts.early_stop = opts.early_stop;
            auto result = run_roleplay(config, oracle, collaborator, std::move(start), rng, ropts);
            // atomic per dialogue: only append once the whole dialogue succeeded
            out.pref.insert(out.pref.end(), result.pref.begin(), result.pref.end());
            out.traj.insert(out.traj.end(), result.traj.begin(), result.traj.end());
            ++out.dialogues_completed;
        } catch (const std::exception&) {
            ++out.dialogues_failed;
        }
    }
    if (opts.augment && config.kind == tasks::TaskKind::Wason) {
        auto rng = Rng::split(config.seed, 0xA06);
        out.pref = augment_wason(out.pref, rng);
    }
    return out;
}

void write_datasets(const GenerateResult& result, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    core::write_file(out_dir + "/dpref.jsonl", core::to_jsonl(result.pref));
    core::write_file(out_dir + "/dtraj.jsonl", core::to_jsonl(result.traj));
}

// ---------------------------------------------------------------------------
// Wason augmentation
// ---------------------------------------------------------------------------

namespace {

const std::string kVowels = "AEIOU";
const std::string kEvens = "02468";
const std::string kOdds = "13579";

void add_permutation(std::map<char, char>& map, const std::string& symbols, Rng& rng) {
    std::vector<char> shuffled(symbols.begin(), symbols.end());
    rng.shuffle(shuffled);
    for (std::size_t i = 0; i < symbols.size(); ++i) map[symbols[i]] = shuffled[i];
}

} // namespace

std::map<char, char> random_card_map(Rng& rng) {
    std::map<char, char> map;
    add_permutation(map, kVowels, rng);
    add_permutation(map, kEvens, rng);
    add_permutation(map, kOdds, rng);
    return map;
}

std::string apply_card_map_text(const std::string& text, const std::map<char, char>& map) {
    std::string out = text;
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool standalone = (i == 0 || !alnum(out[i - 1])) &&
                          (i + 1 == out.size() || !alnum(out[i + 1]));
        if (!standalone) continue;
        auto it = map.find(out[i]);
        if (it != map.end()) out[i] = it->second;
    }
    return out;
}

namespace {

std::string map_symbol(const std::string& s, const std::map<char, char>& map) {
    if (s.size() == 1) {
        auto it = map.find(s[0]);
        if (it != map.end()) return std::string(1, it->second);
    }
    return s;
}

Intervention map_intervention(const Intervention& f, const std::map<char, char>& map) {
    Intervention out = f;
    for (auto& a : out.args) a = map_symbol(a, map);
    out.rendered = apply_card_map_text(f.rendered, map);
    return out;
}

FrictiveState map_phi(const FrictiveState& phi, const std::map<char, char>& map) {
    FrictiveState out = phi;
    out.description = apply_card_map_text(phi.description, map);
    if (out.contested) out.contested->subject = map_symbol(out.contested->subject, map);
    if (!out.is_none()) {
        auto pos = out.id.find(':');
        out.id = out.id.substr(0, pos + 1) + map_symbol(out.id.substr(pos + 1), map);
    }
    return out;
}

} // namespace

PreferenceRecord apply_card_map(const PreferenceRecord& record, const std::map<char, char>& map) {
    PreferenceRecord out = record;
    out.state_prompt = apply_card_map_text(record.state_prompt, map);
    if (out.state_prompt != record.state_prompt) {
        // the mapped dialogue never existed as a state object; hash the prompt
        out.state_digest = core::sha256_hex(out.state_prompt);
    }
    out.phi = map_phi(record.phi, map);
    out.f_w = map_intervention(record.f_w, map);
    out.f_l = map_intervention(record.f_l, map);
    return out;
}

std::vector<PreferenceRecord> augment_wason(const std::vector<PreferenceRecord>& records,
                                            Rng& rng) {
    std::vector<PreferenceRecord> out = records;
    out.reserve(2 * records.size());
    for (const auto& r : records) {
        out.push_back(apply_card_map(r, random_card_map(rng)));
    }
    return out;
}

} // namespace friction::datagen
