#pragma once

#include "friction/agents.hpp"

namespace friction::datagen {

using core::CollaboratorTurn;
using core::DialogueState;
using core::FrictiveState;
using core::Intervention;
using core::PreferenceRecord;
using core::Rng;
using core::TrajectoryRecord;
using tasks::TaskConfig;

// ---------------------------------------------------------------------------
// Agent interfaces
// ---------------------------------------------------------------------------

class Oracle {
public:
    virtual ~Oracle() = default;
    virtual FrictiveState phi(const DialogueState& state) = 0;
    virtual std::vector<Intervention> candidates(const DialogueState& state,
                                                 const FrictiveState& phi, int k, Rng& rng) = 0;
};

class Collaborator {
public:
    virtual ~Collaborator() = default;
    /// Pure in (state, f, rng); run_roleplay applies the chosen response.
    virtual CollaboratorTurn respond(const DialogueState& state, const Intervention& f,
                                     Rng& rng) = 0;
};

class ScriptedOracle : public Oracle {
public:
    explicit ScriptedOracle(TaskConfig config) : config_(std::move(config)) {}
    FrictiveState phi(const DialogueState& state) override;
    std::vector<Intervention> candidates(const DialogueState& state, const FrictiveState& phi,
                                         int k, Rng& rng) override;

private:
    TaskConfig config_;
};

class ScriptedCollaborator : public Collaborator {
public:
    ScriptedCollaborator(TaskConfig config, std::vector<agents::AgentProfile> profiles)
        : config_(std::move(config)), profiles_(std::move(profiles)) {}
    CollaboratorTurn respond(const DialogueState& state, const Intervention& f, Rng& rng) override;
    const std::vector<agents::AgentProfile>& profiles() const { return profiles_; }

private:
    TaskConfig config_;
    std::vector<agents::AgentProfile> profiles_;
};

// ---------------------------------------------------------------------------
// West-of-N pairing
// ---------------------------------------------------------------------------

/// Indices of the argmax- and argmin-scored candidates; ties break toward the
/// lowest candidate index. Throws std::invalid_argument("degenerate-pool")
/// when fewer than two distinct interventions are present.
std::pair<int, int> west_of_n(const std::vector<std::pair<Intervention, int>>& scored);

// ---------------------------------------------------------------------------
// Roleplay loop
// ---------------------------------------------------------------------------

struct RoleplayOptions {
    bool early_stop = false; // stop once all beliefs are unanimous and correct
};

struct RoleplayResult {
    std::vector<PreferenceRecord> pref;
    std::vector<TrajectoryRecord> traj;
    DialogueState final_state;
    int turns_executed = 0;
};

/// One dialogue of the K-candidate roleplay loop: per turn, the oracle emitted
/// frictive state, K scored candidates, a West-of-N pair, and the state update
/// s <- s + f_w + c_w. Emits one preference and one trajectory record per turn.
RoleplayResult run_roleplay(const TaskConfig& config, Oracle& oracle, Collaborator& collaborator,
                            DialogueState start, Rng& rng, const RoleplayOptions& opts = {});

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct GenerateOptions {
    int dialogues = 10;
    bool augment = false;
    bool early_stop = false;
    bool ma_mode = false;
};

struct GenerateResult {
    std::vector<PreferenceRecord> pref;
    std::vector<TrajectoryRecord> traj;
    int dialogues_completed = 0;
    int dialogues_failed = 0;
};

/// Runs `dialogues` independent roleplay dialogues with per-dialogue split RNG
/// streams. Dialogue i uses Rng::split(config.seed, i), so the output does not
/// depend on scheduling order. A failing dialogue is dropped atomically.
GenerateResult generate(const TaskConfig& config, const GenerateOptions& opts);

/// Writes dpref.jsonl and dtraj.jsonl under out_dir.
void write_datasets(const GenerateResult& result, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Wason augmentation
// ---------------------------------------------------------------------------

/// Category-preserving card map: vowels permute among vowels, even digits
/// among even digits, odd digits among odd digits; everything else is fixed.
std::map<char, char> random_card_map(Rng& rng);

/// Apply a card map to every component of a record (prompt text, frictive
/// state, winning and losing interventions).
PreferenceRecord apply_card_map(const PreferenceRecord& record, const std::map<char, char>& map);
std::string apply_card_map_text(const std::string& text, const std::map<char, char>& map);

/// Original records plus one remapped copy per record under a fresh map.
std::vector<PreferenceRecord> augment_wason(const std::vector<PreferenceRecord>& records, Rng& rng);

} // namespace friction::datagen
