#pragma once

#include "friction/core.hpp"

namespace friction::tasks {

using core::AnswerKey;
using core::CommonGround;
using core::FrictiveState;
using core::Intervention;

enum class TaskKind { Wason, Weights };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

/// The five Weights-task blocks in canonical order, and their true weights.
const std::vector<std::string>& weights_blocks();
const std::map<std::string, int>& weights_grams();

struct TaskConfig {
    std::string task_id;
    TaskKind kind = TaskKind::Wason;
    std::vector<std::string> cards;          // Wason only; 2-6 single symbols
    int participants = 3;                    // Wason 2-6; Weights exactly 3
    int max_turns = 15;                      // N
    int candidates = 4;                      // K
    int bound = 16;                          // B: 16 Wason, 37 Weights
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<std::string> participant_ids() const;

    core::json to_json() const;
    static TaskConfig from_json(const core::json& j);
    static TaskConfig load(const std::string& path);
};

TaskConfig default_wason(std::uint64_t seed = 0);
TaskConfig default_weights(std::uint64_t seed = 0);

/// The cards that must be flipped: vowels and odd digits.
std::set<std::string> wason_answer(const std::vector<std::string>& cards);

/// Per-card credit: 1/|cards| for each target included and non-target excluded.
double wason_fine_grained(const std::set<std::string>& selection,
                          const std::vector<std::string>& cards);

/// Number of true propositions in the final common ground.
int wtd_accuracy(const CommonGround& cg, const AnswerKey& key);

AnswerKey answer_key(const TaskConfig& config);

// ---------------------------------------------------------------------------
// Frictive-state and intervention vocabularies
// ---------------------------------------------------------------------------

/// Frictive-state ids: "card:U", "block:red", "pair:red:blue", "none".
/// Entities precede the single "none" entry; index order is the tie-break
/// order for the oracle.
std::vector<FrictiveState> frictive_vocab(const TaskConfig& config);

/// Wason: probe_card(c), restate_rule, ask_justification, no_op.
/// Weights: probe_block(b), probe_pair(b1,b2), restate_constraint, no_op.
std::vector<Intervention> intervention_vocab(const TaskConfig& config);

/// Entity probed by an intervention ("U", "red", "red:blue"), if targeted.
std::optional<std::string> probe_entity(const Intervention& f);

/// Entity contested by a frictive state, if any.
std::optional<std::string> frictive_entity(const FrictiveState& phi);

/// Index of a frictive state in the vocabulary; throws if unknown.
int frictive_index(const std::vector<FrictiveState>& vocab, const std::string& id);
int intervention_index(const std::vector<Intervention>& vocab, const Intervention& f);

bool is_vowel(const std::string& card);
bool is_odd_digit(const std::string& card);

} // namespace friction::tasks
