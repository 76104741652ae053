#include "friction/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace friction::agents {

using core::BeliefDelta;
using core::BeliefMap;
using core::Proposition;
using core::Stance;
using core::Ternary;
using tasks::TaskKind;

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

const std::vector<std::string>& personality_facets() {
    static const std::vector<std::string> facets{
        // Extraversion
        "assertiveness", "sociability", "activity-level", "excitement-seeking",
        "positive-emotions",
        // Neuroticism
        "anxiety", "depression", "vulnerability", "self-consciousness", "anger",
        // Agreeableness
        "trust", "altruism", "compliance", "modesty", "sympathy"};
    return facets;
}

void AgentProfile::validate() const {
    if (receptiveness < 0.0 || receptiveness > 1.0) throw std::invalid_argument("p_r out of [0,1]");
    if (truth_bias < 0.0 || truth_bias > 1.0) throw std::invalid_argument("q_t out of [0,1]");
    const auto& facets = personality_facets();
    if (std::find(facets.begin(), facets.end(), facet) == facets.end()) {
        throw std::invalid_argument("unknown facet: " + facet);
    }
}

AgentProfile profile_for_facet(const std::string& participant, const std::string& facet,
                               bool ma_mode) {
    AgentProfile p;
    p.participant = participant;
    p.facet = facet;
    p.ma_mode = ma_mode;
    if (facet == "assertiveness" || facet == "sociability") {
        p.receptiveness = 0.8;
    } else if (facet == "anxiety" || facet == "vulnerability") {
        p.receptiveness = 0.5;
    }
    if (facet == "trust" || facet == "altruism" || facet == "compliance" ||
        facet == "modesty" || facet == "sympathy") {
        p.truth_bias = 0.9;
    }
    p.validate();
    return p;
}

std::vector<AgentProfile> sample_profiles(const TaskConfig& config, Rng& rng, bool ma_mode) {
    std::vector<AgentProfile> profiles;
    const auto& facets = personality_facets();
    for (const auto& id : config.participant_ids()) {
        profiles.push_back(profile_for_facet(id, facets[rng.uniform_int(facets.size())], ma_mode));
    }
    return profiles;
}

// ---------------------------------------------------------------------------
// Entity-level belief view
//
// Tracked entities: Wason cards ("U"), Weights blocks ("red") and block pairs
// ("red:blue", canonical block order). Values are strings:
//   cards:  "select" | "reject" | "unknown"
//   blocks: "10" | "20" | "30" | "50" | "unknown"
//   pairs:  ">" | "<" | "=" | "unknown"   (first block vs second)
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> entity_list(const TaskConfig& config) {
    std::vector<std::string> entities;
    if (config.kind == TaskKind::Wason) {
        entities = config.cards;
    } else {
        const auto& blocks = tasks::weights_blocks();
        entities = blocks;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            for (std::size_t j = i + 1; j < blocks.size(); ++j) {
                entities.push_back(blocks[i] + ":" + blocks[j]);
            }
        }
    }
    return entities;
}

bool is_pair_entity(const std::string& e) { return e.find(':') != std::string::npos; }

std::pair<std::string, std::string> split_pair(const std::string& e) {
    auto pos = e.find(':');
    return {e.substr(0, pos), e.substr(pos + 1)};
}

const std::vector<int>& weight_values() {
    static const std::vector<int> values{10, 20, 30, 50};
    return values;
}

std::string true_value(const TaskConfig& config, const std::string& entity) {
    if (config.kind == TaskKind::Wason) {
        auto answer = tasks::wason_answer(config.cards);
        return answer.count(entity) ? "select" : "reject";
    }
    if (!is_pair_entity(entity)) {
        return std::to_string(tasks::weights_grams().at(entity));
    }
    auto [a, b] = split_pair(entity);
    int wa = tasks::weights_grams().at(a);
    int wb = tasks::weights_grams().at(b);
    return wa == wb ? "=" : (wa > wb ? ">" : "<");
}

std::vector<std::string> value_domain(const TaskConfig& config, const std::string& entity) {
    if (config.kind == TaskKind::Wason) return {"select", "reject"};
    if (is_pair_entity(entity)) return {">", "<", "="};
    std::vector<std::string> v;
    for (int w : weight_values()) v.push_back(std::to_string(w));
    return v;
}

// Propositions representing a given entity value.
std::vector<std::pair<Proposition, Ternary>> value_props(const TaskConfig& config,
                                                         const std::string& entity,
                                                         const std::string& value) {
    std::vector<std::pair<Proposition, Ternary>> props;
    if (config.kind == TaskKind::Wason) {
        auto sel = core::card_stance(config.task_id, entity, Stance::Select);
        auto rej = core::card_stance(config.task_id, entity, Stance::Reject);
        if (value == "unknown") {
            props.emplace_back(sel, Ternary::Unknown);
            props.emplace_back(rej, Ternary::Unknown);
        } else {
            bool select = value == "select";
            props.emplace_back(sel, select ? Ternary::True : Ternary::False);
            props.emplace_back(rej, select ? Ternary::False : Ternary::True);
        }
        return props;
    }
    if (!is_pair_entity(entity)) {
        for (int w : weight_values()) {
            auto p = core::block_equality(config.task_id, entity, core::weight_literal(w));
            Ternary t = Ternary::Unknown;
            if (value != "unknown") t = (value == std::to_string(w)) ? Ternary::True : Ternary::False;
            props.emplace_back(p, t);
        }
        return props;
    }
    auto [a, b] = split_pair(entity);
    auto heavier = core::block_order(config.task_id, a, b);
    auto lighter = core::block_order(config.task_id, b, a);
    auto equal = core::block_equality(config.task_id, a, b);
    auto mark = [&](const Proposition& p, const std::string& v) {
        if (value == "unknown") return Ternary::Unknown;
        return value == v ? Ternary::True : Ternary::False;
    };
    props.emplace_back(heavier, mark(heavier, ">"));
    props.emplace_back(lighter, mark(lighter, "<"));
    props.emplace_back(equal, mark(equal, "="));
    return props;
}

std::string entity_value(const TaskConfig& config, const BeliefMap& beliefs,
                         const std::string& entity) {
    for (const auto& value : value_domain(config, entity)) {
        // a value holds iff its first representative proposition is True
        auto props = value_props(config, entity, value);
        for (const auto& [p, t] : props) {
            if (t != Ternary::True) continue;
            auto it = beliefs.find(p);
            if (it != beliefs.end() && it->second == Ternary::True) return value;
        }
    }
    return "unknown";
}

std::vector<BeliefDelta> set_entity_value(const TaskConfig& config, BeliefMap& beliefs,
                                          const std::string& participant,
                                          const std::string& entity, const std::string& value) {
    std::vector<BeliefDelta> deltas;
    for (const auto& [p, t] : value_props(config, entity, value)) {
        auto it = beliefs.find(p);
        if (it != beliefs.end() && it->second == t) continue;
        beliefs[p] = t;
        deltas.push_back(BeliefDelta{participant, p, t});
    }
    return deltas;
}

} // namespace

// ---------------------------------------------------------------------------
// Dialogue setup
// ---------------------------------------------------------------------------

DialogueState init_dialogue(const TaskConfig& config, Rng& rng) {
    config.validate();
    DialogueState state;
    state.task_id = config.task_id;

    std::string guidelines;
    if (config.kind == TaskKind::Wason) {
        guidelines = "Wason card task. Rule: every card with a vowel has an even number "
                     "on the other side. Cards: ";
        for (std::size_t i = 0; i < config.cards.size(); ++i) {
            if (i) guidelines += ", ";
            guidelines += config.cards[i];
        }
        guidelines += ". Decide together which cards to flip.";
    } else {
        guidelines = "Weights task. Deduce the weight of each block (red, blue, green, "
                     "purple, yellow) with the balance scale. Known: red weighs 10g.";
    }
    state.append_annotation("environment", core::Annotation{"guidelines", guidelines});

    for (const auto& id : config.participant_ids()) {
        BeliefMap beliefs;
        for (const auto& entity : entity_list(config)) {
            std::string value;
            if (config.kind == TaskKind::Wason) {
                value = rng.bernoulli(0.5) ? "select" : "reject";
            } else if (entity == "red") {
                value = "10"; // given by the task
            } else if (rng.bernoulli(0.5)) {
                value = "unknown";
            } else {
                auto domain = value_domain(config, entity);
                value = domain[rng.uniform_int(domain.size())];
            }
            set_entity_value(config, beliefs, id, entity, value);
        }
        state.beliefs[id] = std::move(beliefs);
    }
    return state;
}

bool task_complete(const TaskConfig& config, const DialogueState& state) {
    for (const auto& [id, beliefs] : state.beliefs) {
        for (const auto& entity : entity_list(config)) {
            if (entity_value(config, beliefs, entity) != true_value(config, entity)) return false;
        }
    }
    return true;
}

core::CommonGround state_common_ground(const DialogueState& state) {
    return core::common_ground(state.beliefs, state.turn);
}

std::set<std::string> group_selection(const TaskConfig& config, const DialogueState& state) {
    std::set<std::string> selection;
    for (const auto& card : config.cards) {
        int votes = 0;
        for (const auto& [id, beliefs] : state.beliefs) {
            if (entity_value(config, beliefs, card) == "select") ++votes;
        }
        if (2 * votes > static_cast<int>(state.beliefs.size())) selection.insert(card);
    }
    return selection;
}

// ---------------------------------------------------------------------------
// Collaborator
// ---------------------------------------------------------------------------

namespace {

std::string describe_value(const std::string& entity, const std::string& value) {
    if (value == "select") return "we should flip " + entity;
    if (value == "reject") return "we should leave " + entity;
    if (value == "unknown") return "I am unsure about " + entity;
    if (value == ">" || value == "<" || value == "=") {
        auto [a, b] = split_pair(entity);
        if (value == ">") return a + " is heavier than " + b;
        if (value == "<") return a + " is lighter than " + b;
        return a + " weighs the same as " + b;
    }
    return entity + " weighs " + value + "g";
}

} // namespace

CollaboratorTurn collaborator_step(const TaskConfig& config, const DialogueState& state,
                                   const Intervention& f,
                                   const std::vector<AgentProfile>& profiles, Rng& rng) {
    auto target = tasks::probe_entity(f);
    auto entities = entity_list(config);
    auto vocab = tasks::intervention_vocab(config);
    if (std::find(vocab.begin(), vocab.end(), f) == vocab.end()) {
        throw std::invalid_argument("unknown intervention template: " + f.key());
    }

    // CG-gain potential before any revision: how contested the probed
    // proposition is, as the normalized count of pairwise disagreements.
    double gain = 0.0;
    const int n = static_cast<int>(profiles.size());
    if (target && n > 1) {
        std::vector<std::string> values;
        for (const auto& p : profiles) {
            values.push_back(entity_value(config, state.beliefs.at(p.participant), *target));
        }
        int disagreement = 0;
        for (std::size_t a = 0; a < values.size(); ++a) {
            for (std::size_t b = a + 1; b < values.size(); ++b) {
                if (values[a] != values[b]) ++disagreement;
            }
        }
        gain = static_cast<double>(disagreement) / (n * (n - 1) / 2.0);
    }

    CollaboratorTurn turn;
    turn.self_score = std::clamp(1 + static_cast<int>(std::lround(9.0 * gain)), 1, 10);

    // Copy of beliefs to evaluate post-revision common ground.
    core::ParticipantBeliefs revised = state.beliefs;

    for (const auto& profile : profiles) {
        auto& beliefs = revised[profile.participant];
        double p_eff = target ? profile.receptiveness : kGenericRevisionProb;
        if (profile.ma_mode) p_eff *= kMaDamping;

        std::optional<std::string> revised_entity;
        std::string new_value;
        if (target) {
            std::string current = entity_value(config, beliefs, *target);
            std::string truth = true_value(config, *target);
            if (current != truth && rng.bernoulli(p_eff)) {
                revised_entity = *target;
                if (rng.bernoulli(profile.truth_bias)) {
                    new_value = truth;
                } else {
                    auto domain = value_domain(config, *target);
                    domain.erase(std::remove(domain.begin(), domain.end(), truth), domain.end());
                    new_value = domain[rng.uniform_int(domain.size())];
                }
            }
        } else {
            std::vector<std::string> contested;
            for (const auto& e : entities) {
                if (entity_value(config, beliefs, e) != true_value(config, e)) contested.push_back(e);
            }
            if (!contested.empty() && rng.bernoulli(p_eff)) {
                revised_entity = contested[rng.uniform_int(contested.size())];
                std::string truth = true_value(config, *revised_entity);
                if (rng.bernoulli(profile.truth_bias)) {
                    new_value = truth;
                } else {
                    auto domain = value_domain(config, *revised_entity);
                    domain.erase(std::remove(domain.begin(), domain.end(), truth), domain.end());
                    new_value = domain[rng.uniform_int(domain.size())];
                }
            }
        }

        std::string utterance;
        if (revised_entity) {
            auto deltas = set_entity_value(config, beliefs, profile.participant, *revised_entity,
                                           new_value);
            for (auto& d : deltas) turn.belief_deltas.push_back(std::move(d));
            utterance = "Fair point. Thinking about it again, " +
                        describe_value(*revised_entity, new_value) + ".";
        } else if (target) {
            utterance = "I still think " +
                        describe_value(*target, entity_value(config, beliefs, *target)) + ".";
        } else {
            utterance = "Let's keep going with what we have.";
        }
        turn.utterances[profile.participant] = utterance;
    }

    turn.annotations.push_back(core::Annotation{"acknowledgment",
                                                "The group acknowledges the friction agent."});

    auto cg = core::common_ground(revised, state.turn);
    std::string cg_text;
    for (const auto& p : cg.propositions) {
        if (!cg_text.empty()) cg_text += ",";
        cg_text += p.key();
    }
    turn.annotations.push_back(core::Annotation{"common_ground", cg_text});

    if (config.kind == TaskKind::Wason) {
        std::string selections;
        for (const auto& profile : profiles) {
            if (!selections.empty()) selections += ";";
            selections += profile.participant + ":";
            bool first = true;
            for (const auto& card : config.cards) {
                if (entity_value(config, revised[profile.participant], card) == "select") {
                    if (!first) selections += "+";
                    selections += card;
                    first = false;
                }
            }
        }
        turn.annotations.push_back(core::Annotation{"participant_selections", selections});
    }
    return turn;
}

void apply_collaborator(DialogueState& state, const CollaboratorTurn& turn) {
    for (const auto& d : turn.belief_deltas) {
        state.beliefs[d.participant][d.prop] = d.value;
    }
    state.append_collaborator("collaborator", turn);
}

// ---------------------------------------------------------------------------
// Scripted oracle
// ---------------------------------------------------------------------------

FrictiveState oracle_phi(const TaskConfig& config, const DialogueState& state) {
    auto vocab = tasks::frictive_vocab(config);
    int best_index = -1;
    int best_disagreement = 0;
    for (std::size_t i = 0; i + 1 < vocab.size(); ++i) { // last entry is "none"
        auto entity = tasks::frictive_entity(vocab[i]);
        std::vector<std::string> values;
        for (const auto& [id, beliefs] : state.beliefs) {
            values.push_back(entity_value(config, beliefs, *entity));
        }
        int disagreement = 0;
        for (std::size_t a = 0; a < values.size(); ++a) {
            for (std::size_t b = a + 1; b < values.size(); ++b) {
                if (values[a] != values[b]) ++disagreement;
            }
        }
        if (disagreement > best_disagreement) {
            best_disagreement = disagreement;
            best_index = static_cast<int>(i);
        }
    }
    if (best_index < 0) return vocab.back(); // "none"
    return vocab[best_index];
}

std::vector<Intervention> oracle_candidates(const TaskConfig& config, const DialogueState& state,
                                            const FrictiveState& phi, int k, Rng& rng) {
    (void)state;
    auto vocab = tasks::intervention_vocab(config);
    if (k > static_cast<int>(vocab.size())) {
        throw std::invalid_argument("candidate count exceeds intervention vocabulary size");
    }
    std::vector<Intervention> candidates;
    auto entity = tasks::frictive_entity(phi);
    if (entity) {
        auto it = std::find_if(vocab.begin(), vocab.end(), [&](const Intervention& f) {
            auto probed = tasks::probe_entity(f);
            return probed && *probed == *entity;
        });
        if (it == vocab.end()) throw std::logic_error("no probe for entity " + *entity);
        candidates.push_back(*it);
        vocab.erase(it);
    }
    rng.shuffle(vocab);
    for (const auto& f : vocab) {
        if (static_cast<int>(candidates.size()) >= k) break;
        candidates.push_back(f);
    }
    return candidates;
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

Decoding collaborator_decoding() { return Decoding{0.0, 1.0, 512}; }
Decoding friction_decoding() { return Decoding{0.0, 0.9, 512}; }

RemoteAgent::RemoteAgent(std::string endpoint, int max_attempts, int backoff_ms)
    : max_attempts_(max_attempts), backoff_ms_(backoff_ms) {
    auto scheme_end = endpoint.find("://");
    std::size_t path_start = endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
        host_ = endpoint;
        path_ = "/";
    } else {
        host_ = endpoint.substr(0, path_start);
        path_ = endpoint.substr(path_start);
    }
}

std::string RemoteAgent::call(const std::string& role, const std::string& system_prompt,
                              const std::string& dialogue, const Decoding& decoding) {
    core::json request;
    request["role"] = role;
    request["system_prompt"] = system_prompt;
    request["dialogue"] = dialogue;
    request["temperature"] = decoding.temperature;
    request["top_p"] = decoding.top_p;
    request["max_tokens"] = decoding.max_tokens;
    const std::string body = request.dump();

    for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
        httplib::Client client(host_);
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(30, 0);
        httplib::Headers headers;
        // credential travels only in the header; requests logged without it
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        auto res = client.Post(path_, headers, body, "application/json");
        if (res && res->status == 200) {
            if (res->body.empty()) throw std::runtime_error("remote-empty");
            log_.push_back(RemoteExchange{request, res->body});
            return res->body;
        }
        if (attempt < max_attempts_) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms_ * (1 << (attempt - 1))));
        }
    }
    throw std::runtime_error("remote-unavailable");
}

void RemoteAgent::write_log(const std::string& path) const {
    std::string out;
    for (const auto& e : log_) {
        core::json line;
        line["request"] = e.request;
        line["response"] = e.response;
        out += line.dump();
        out += '\n';
    }
    core::write_file(path, out);
}

std::string oracle_system_prompt(const TaskConfig& config) {
    std::string task_desc =
        config.kind == TaskKind::Wason
            ? "a Wason card selection task: the group must pick the cards that test the rule "
              "'every card with a vowel has an even number on the other side'"
            : "a weights task: a triad must deduce the weight of five colored blocks "
              "(red, blue, green, purple, yellow) using a balance scale; only red=10g is given";
    return "You observe a group working on " + task_desc +
           ".\n"
           "Track the dialogue and find the proposition the participants disagree on.\n"
           "Reply with:\n"
           "1. The task context inside <t>...</t>.\n"
           "2. The contested belief inside <b>...</b>.\n"
           "3. Your reasoning for why an intervention is needed inside <rationale>...</rationale>.\n"
           "4. A short question that makes the group slow down and re-examine that belief, "
           "inside <friction>...</friction>. Do not reveal the answer.";
}

std::string collaborator_system_prompt(const TaskConfig& config, bool ma_mode) {
    std::string base =
        config.kind == TaskKind::Wason
            ? "You roleplay every participant of a group solving the Wason card selection task. "
              "Rule: every card with a vowel has an even number on the other side. "
              "Begin each utterance with the participant's name."
            : "You roleplay P1, P2 and P3 solving the weights task with a balance scale. "
              "Blocks: red, blue, green, purple, yellow; only red=10g is known. "
              "Begin each utterance with P1:, P2: or P3:.";
    base += "\nGenerate one utterance per participant, staying consistent with each "
            "participant's personality and earlier stance.";
    if (ma_mode) {
        base += "\nIf a 'Friction Agent:' line is present, verbally acknowledge it but keep "
                "your original reasoning and positions.";
    } else {
        base += "\nIf a 'Friction Agent:' line is present and relevant, incorporate it into "
                "your reasoning; otherwise acknowledge it and move on.";
    }
    base += "\nAfter the utterances, rate the friction agent's latest statement from 1 to 10 "
            "inside <score>X</score>, and state the beliefs every participant now shares "
            "inside <common_ground>...</common_ground>.";
    return base;
}

std::string final_turn_prompt(const TaskConfig& config) {
    if (config.kind == TaskKind::Wason) {
        return "This is the final turn. Reach a consensus on the card selection and end with "
               "<final_submission>card1,card2,...</final_submission>, then "
               "<score>X</score> and <common_ground>...</common_ground>.";
    }
    return "This is the final turn. Agree on the weight of every block and end with "
           "<final_submission>red=10g,...</final_submission>, then <score>X</score> and "
           "<common_ground>...</common_ground>.";
}

std::string cg_extraction_prompt(const TaskConfig& config) {
    if (config.kind == TaskKind::Wason) {
        return "From the dialogue, list only the card stances that ALL participants "
               "explicitly state or clearly agree on, inside "
               "<common_ground>...</common_ground> as a comma-separated list.";
    }
    return "From the dialogue, extract only the block-weight relations ALL participants "
           "explicitly state or clearly agree on, using the categories equality, inequality "
           "and order, inside <common_ground>...</common_ground> as a comma-separated list.";
}

// ---------------------------------------------------------------------------
// Tag parsing
// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> extract_tag(const std::string& text, const std::string& tag) {
    const std::string open = "<" + tag + ">";
    const std::string close = "</" + tag + ">";
    auto start = text.find(open);
    if (start == std::string::npos) return std::nullopt;
    start += open.size();
    auto end = text.find(close, start);
    if (end == std::string::npos) return std::nullopt;
    return text.substr(start, end - start);
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace

TaggedReply parse_tagged_reply(const std::string& text) {
    TaggedReply reply;
    reply.task_context = extract_tag(text, "t");
    reply.belief_context = extract_tag(text, "b");
    reply.rationale = extract_tag(text, "rationale");
    reply.friction = extract_tag(text, "friction");
    if (auto score = extract_tag(text, "score")) {
        std::string s = trim(*score);
        try {
            std::size_t pos = 0;
            int value = std::stoi(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing junk");
            reply.score = value;
        } catch (const std::exception&) {
            throw std::runtime_error("bad-score");
        }
    }
    if (auto sub = extract_tag(text, "final_submission")) {
        auto items = split_list(*sub);
        reply.final_submission = std::set<std::string>(items.begin(), items.end());
    }
    if (auto cg = extract_tag(text, "common_ground")) reply.common_ground = split_list(*cg);
    if (auto sel = extract_tag(text, "participant_selections")) {
        reply.participant_selections = trim(*sel);
    }
    return reply;
}

std::string render_tagged(const CollaboratorTurn& turn) {
    std::string out = "<score>" + std::to_string(turn.self_score) + "</score>";
    for (const auto& a : turn.annotations) {
        if (a.tag == "common_ground") {
            out += "<common_ground>" + a.text + "</common_ground>";
        } else if (a.tag == "participant_selections") {
            out += "<participant_selections>" + a.text + "</participant_selections>";
        }
    }
    return out;
}

} // namespace friction::agents
