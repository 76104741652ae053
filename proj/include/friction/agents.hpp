#pragma once

#include "friction/tasks.hpp"

namespace friction::agents {

using core::CollaboratorTurn;
using core::DialogueState;
using core::FrictiveState;
using core::Intervention;
using core::Rng;
using tasks::TaskConfig;

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

/// The 15 Big-Five facets assignable to roleplay participants.
const std::vector<std::string>& personality_facets();

struct AgentProfile {
    std::string participant;
    std::string facet;
    double receptiveness = 0.7; // p_r
    double truth_bias = 0.8;    // q_t
    bool ma_mode = false;

    void validate() const;
};

/// Deterministic facet -> parameter mapping. Assertive/sociable facets raise
/// p_r to 0.8, anxious/vulnerable ones lower it to 0.5, agreeableness facets
/// raise q_t to 0.9; defaults are p_r=0.7, q_t=0.8.
AgentProfile profile_for_facet(const std::string& participant, const std::string& facet,
                               bool ma_mode = false);

std::vector<AgentProfile> sample_profiles(const TaskConfig& config, Rng& rng,
                                          bool ma_mode = false);

// Revision probability for untargeted interventions, and the MA damping
// factor applied on top of any p_eff.
inline constexpr double kGenericRevisionProb = 0.1;
inline constexpr double kMaDamping = 0.2;

// ---------------------------------------------------------------------------
// Dialogue setup and belief dynamics
// ---------------------------------------------------------------------------

/// Bootstrap dialogue: task guidelines annotation plus randomized initial
/// per-participant beliefs (the participants' individual solutions).
DialogueState init_dialogue(const TaskConfig& config, Rng& rng);

/// True if every participant's belief on every entity matches ground truth.
bool task_complete(const TaskConfig& config, const DialogueState& state);

/// Common ground of the tracked propositions at the state's current turn.
core::CommonGround state_common_ground(const DialogueState& state);

/// Majority-vote card selection (Wason): a card is selected when more than
/// half of the participants currently believe it must be flipped.
std::set<std::string> group_selection(const TaskConfig& config, const DialogueState& state);

/// One scripted collaborator turn in response to intervention `f`. Pure in
/// (state, f, profiles, rng); does not mutate the state.
CollaboratorTurn collaborator_step(const TaskConfig& config, const DialogueState& state,
                                   const Intervention& f,
                                   const std::vector<AgentProfile>& profiles, Rng& rng);

/// Apply a turn's belief deltas and append the event to the log.
void apply_collaborator(DialogueState& state, const CollaboratorTurn& turn);

// ---------------------------------------------------------------------------
// Scripted oracle
// ---------------------------------------------------------------------------

/// The contested entity with the largest cross-participant disagreement
/// (number of participant pairs holding differing belief values); "none" when
/// beliefs are unanimous. Ties break toward the lowest entity index.
FrictiveState oracle_phi(const TaskConfig& config, const DialogueState& state);

/// K distinct candidate interventions. When phi is contested, the probe
/// targeting its entity is always included (at index 0); the remainder is
/// sampled without replacement.
std::vector<Intervention> oracle_candidates(const TaskConfig& config,
                                            const DialogueState& state,
                                            const FrictiveState& phi, int k, Rng& rng);

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

struct Decoding {
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 512;
};

/// Reference defaults: collaborator T=0/top-p=1, friction T=0/top-p=0.9.
Decoding collaborator_decoding();
Decoding friction_decoding();

struct RemoteExchange {
    core::json request;
    std::string response;
};

class RemoteAgent {
public:
    /// endpoint: "http://host:port/path"
    RemoteAgent(std::string endpoint, int max_attempts = 3, int backoff_ms = 100);

    /// POSTs {role, system_prompt, dialogue, temperature, top_p, max_tokens};
    /// the response body is the raw completion. Throws std::runtime_error
    /// "remote-unavailable" after exhausting retries and "remote-empty" on an
    /// empty completion.
    std::string call(const std::string& role, const std::string& system_prompt,
                     const std::string& dialogue, const Decoding& decoding);

    /// Bearer credential; sent as a header only and kept out of the log.
    void set_token(std::string token) { token_ = std::move(token); }

    const std::vector<RemoteExchange>& log() const { return log_; }
    void write_log(const std::string& path) const;

private:
    std::string host_;
    std::string path_;
    std::string token_;
    int max_attempts_;
    int backoff_ms_;
    std::vector<RemoteExchange> log_;
};

/// Verbatim prompt templates for the remote protocol.
std::string oracle_system_prompt(const TaskConfig& config);
std::string collaborator_system_prompt(const TaskConfig& config, bool ma_mode);
std::string final_turn_prompt(const TaskConfig& config);
std::string cg_extraction_prompt(const TaskConfig& config);

// ---------------------------------------------------------------------------
// Tag parsing
// ---------------------------------------------------------------------------

struct TaggedReply {
    std::optional<std::string> task_context;    // <t>
    std::optional<std::string> belief_context;  // <b>
    std::optional<std::string> rationale;       // <rationale>
    std::optional<std::string> friction;        // <friction>
    std::optional<int> score;                   // <score>
    std::optional<std::set<std::string>> final_submission;    // comma list
    std::optional<std::vector<std::string>> common_ground;    // comma list
    std::optional<std::string> participant_selections;
};

/// Extracts whatever tag blocks are present; missing tags yield absent
/// fields. A malformed integer inside <score> throws
/// std::runtime_error("bad-score").
TaggedReply parse_tagged_reply(const std::string& text);

/// Render the structured annotations of a collaborator turn in the tag
/// format; parse_tagged_reply on the result recovers the same fields.
std::string render_tagged(const CollaboratorTurn& turn);

} // namespace friction::agents
