#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace friction::core {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Propositions
// ---------------------------------------------------------------------------

enum class PropKind { CardStance, BlockEquality, BlockInequality, BlockOrder };
enum class Stance { Select, Reject };

std::string to_string(PropKind k);
PropKind prop_kind_from_string(const std::string& s);

/// A task-relevant proposition. `object` is a block name, a weight literal
/// like "10g", or empty for card-stance propositions.
struct Proposition {
    std::string task_id;
    PropKind kind = PropKind::CardStance;
    std::string subject;
    std::string object;             // relational kinds only
    Stance stance = Stance::Select; // card-stance only

    /// Canonical key: stable across runs, usable for ordering and maps.
    std::string key() const;
    bool operator==(const Proposition& o) const { return key() == o.key(); }
    bool operator<(const Proposition& o) const { return key() < o.key(); }

    json to_json() const;
    static Proposition from_json(const json& j);
};

Proposition card_stance(const std::string& task_id, const std::string& card, Stance s);
Proposition block_equality(const std::string& task_id, const std::string& a, const std::string& b);
Proposition block_inequality(const std::string& task_id, const std::string& a, const std::string& b);
/// Subject is strictly heavier than object.
Proposition block_order(const std::string& task_id, const std::string& heavier, const std::string& lighter);

/// Weight literals render as e.g. "10g".
std::string weight_literal(int grams);
std::optional<int> parse_weight_literal(const std::string& s);

/// Direct negation: stance flip, or equality <-> inequality.
/// Order propositions have no single negation.
Proposition negate(const Proposition& p); // throws std::invalid_argument("no-negation")

// ---------------------------------------------------------------------------
// Answer keys and truth evaluation
// ---------------------------------------------------------------------------

struct AnswerKey {
    std::string task_id;
    // Wason: the set of cards that must be flipped.
    std::set<std::string> flip_cards;
    std::vector<std::string> cards;
    // Weights: block -> grams.
    std::map<std::string, int> block_grams;
    bool is_wason = false;
};

bool evaluate_truth(const Proposition& p, const AnswerKey& key);

// ---------------------------------------------------------------------------
// Beliefs and common ground
// ---------------------------------------------------------------------------

enum class Ternary { True, False, Unknown };

std::string to_string(Ternary t);
Ternary ternary_from_string(const std::string& s);

using BeliefMap = std::map<Proposition, Ternary>;
using ParticipantBeliefs = std::map<std::string, BeliefMap>;

struct CommonGround {
    std::set<Proposition> propositions;
    int turn = 0;

    bool contains(const Proposition& p) const { return propositions.count(p) > 0; }
    /// No proposition together with its direct negation.
    bool consistent() const;
};

/// Propositions marked true by every participant.
CommonGround common_ground(const ParticipantBeliefs& beliefs, int turn = 0);

// ---------------------------------------------------------------------------
// Frictive states and interventions
// ---------------------------------------------------------------------------

struct FrictiveState {
    std::string id = "none"; // entry in the task's frictive vocabulary
    std::optional<Proposition> contested;
    std::string description;

    bool is_none() const { return !contested.has_value(); }
    json to_json() const;
    static FrictiveState from_json(const json& j);
};

struct Intervention {
    std::string template_id;
    std::vector<std::string> args;
    std::string rendered;

    std::string key() const;
    bool operator==(const Intervention& o) const { return key() == o.key(); }
    bool operator<(const Intervention& o) const { return key() < o.key(); }

    json to_json() const;
    static Intervention from_json(const json& j);
};

// ---------------------------------------------------------------------------
// Dialogue state
// ---------------------------------------------------------------------------

struct Annotation {
    std::string tag;  // e.g. "common_ground", "stage_direction", "acknowledgment"
    std::string text;
    json to_json() const;
    static Annotation from_json(const json& j);
};

struct BeliefDelta {
    std::string participant;
    Proposition prop;
    Ternary value = Ternary::Unknown;
    json to_json() const;
    static BeliefDelta from_json(const json& j);
};

struct CollaboratorTurn {
    std::map<std::string, std::string> utterances; // participant -> text
    std::vector<BeliefDelta> belief_deltas;
    int self_score = 1; // in [1,10]
    std::vector<Annotation> annotations;

    json to_json() const;
    static CollaboratorTurn from_json(const json& j);
};

enum class EventKind { Intervention, Collaborator, Annotation };

struct DialogueEvent {
    std::string speaker;
    EventKind kind = EventKind::Annotation;
    Intervention intervention;   // kind == Intervention
    CollaboratorTurn collab;     // kind == Collaborator
    Annotation annotation;       // kind == Annotation

    json to_json() const;
    static DialogueEvent from_json(const json& j);
};

struct DialogueState {
    std::string task_id;
    std::vector<DialogueEvent> events;
    ParticipantBeliefs beliefs;
    int turn = 0; // number of friction interventions so far

    void append_intervention(const std::string& speaker, const Intervention& f);
    void append_collaborator(const std::string& speaker, const CollaboratorTurn& c);
    void append_annotation(const std::string& speaker, const Annotation& a);

    /// Serialized prompt-style transcript of the event log.
    std::string transcript() const;
    /// Lowercase hex of a 256-bit hash of the serialized state.
    std::string digest() const;

    json to_json() const;
    static DialogueState from_json(const json& j);
};

// ---------------------------------------------------------------------------
// Dataset records
// ---------------------------------------------------------------------------

struct PreferenceRecord {
    std::string state_digest;
    std::string state_prompt;
    FrictiveState phi;
    Intervention f_w;
    Intervention f_l;
    int score_w = 1;
    int score_l = 1;

    void validate() const; // score_w >= score_l, f_w != f_l
    json to_json() const;
    static PreferenceRecord from_json(const json& j);
};

struct TrajectoryStep {
    FrictiveState phi;
    Intervention f_w;
    CollaboratorTurn response;
    json to_json() const;
    static TrajectoryStep from_json(const json& j);
};

struct TrajectoryRecord {
    std::string state_digest;
    std::string state_prompt;
    std::vector<TrajectoryStep> history; // length == turn index
    FrictiveState phi;
    Intervention f_w;

    json to_json() const;
    static TrajectoryRecord from_json(const json& j);
};

/// One record per line, UTF-8, stable field order.
template <typename Record>
std::string to_jsonl(const std::vector<Record>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.to_json().dump();
        out += '\n';
    }
    return out;
}

std::vector<PreferenceRecord> read_pref_jsonl(const std::string& path);
std::vector<TrajectoryRecord> read_traj_jsonl(const std::string& path);
void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

// ---------------------------------------------------------------------------
// Hashing and seeded randomness
// ---------------------------------------------------------------------------

/// Lowercase hex SHA-256.
std::string sha256_hex(const std::string& data);

/// Deterministic RNG with a per-dialogue split contract: split(seed, i)
/// yields the same stream regardless of evaluation order.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    /// Uniform in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    /// Uniform in [0, 1).
    double uniform_real();
    bool bernoulli(double p);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_int(i)]);
        }
    }

    static Rng split(std::uint64_t seed, std::uint64_t index);

private:
    std::uint64_t state_;
};

} // namespace friction::core
