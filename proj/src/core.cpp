#include "friction/core.hpp"

#include <fstream>
#include <sstream>

#include <openssl/evp.h>

namespace friction::core {

// ---------------------------------------------------------------------------
// Propositions
// ---------------------------------------------------------------------------

std::string to_string(PropKind k) {
    switch (k) {
        case PropKind::CardStance: return "card-stance";
        case PropKind::BlockEquality: return "block-equality";
        case PropKind::BlockInequality: return "block-inequality";
        case PropKind::BlockOrder: return "block-order";
    }
    throw std::logic_error("bad PropKind");
}

PropKind prop_kind_from_string(const std::string& s) {
    if (s == "card-stance") return PropKind::CardStance;
    if (s == "block-equality") return PropKind::BlockEquality;
    if (s == "block-inequality") return PropKind::BlockInequality;
    if (s == "block-order") return PropKind::BlockOrder;
    throw std::invalid_argument("unknown proposition kind: " + s);
}

std::string Proposition::key() const {
    if (kind == PropKind::CardStance) {
        return task_id + "|" + to_string(kind) + "|" + subject + "|" +
               ((stance == Stance::Select) ? "select" : "reject");
    }
    if (kind == PropKind::BlockOrder) {
        return task_id + "|" + to_string(kind) + "|" + subject + "|" + object;
    }
    // equality and inequality are symmetric; canonicalize operand order
    std::string a = subject, b = object;
    if (b < a) std::swap(a, b);
    return task_id + "|" + to_string(kind) + "|" + a + "|" + b;
}

json Proposition::to_json() const {
    json j;
    j["task"] = task_id;
    j["kind"] = to_string(kind);
    j["subject"] = subject;
    if (kind == PropKind::CardStance) {
        j["object"] = (stance == Stance::Select) ? "select" : "reject";
    } else {
        j["object"] = object;
    }
    return j;
}

Proposition Proposition::from_json(const json& j) {
    Proposition p;
    p.task_id = j.at("task").get<std::string>();
    p.kind = prop_kind_from_string(j.at("kind").get<std::string>());
    p.subject = j.at("subject").get<std::string>();
    std::string obj = j.at("object").get<std::string>();
    if (p.kind == PropKind::CardStance) {
        p.stance = obj == "select" ? Stance::Select : Stance::Reject;
    } else {
        p.object = obj;
    }
    return p;
}

static void check_relational(const std::string& a, const std::string& b) {
    if (a == b) throw std::invalid_argument("subject and object must differ");
}

Proposition card_stance(const std::string& task_id, const std::string& card, Stance s) {
    Proposition p;
    p.task_id = task_id;
    p.kind = PropKind::CardStance;
    p.subject = card;
    p.stance = s;
    return p;
}

Proposition block_equality(const std::string& task_id, const std::string& a, const std::string& b) {
    check_relational(a, b);
    Proposition p;
    p.task_id = task_id;
    p.kind = PropKind::BlockEquality;
    p.subject = a;
    p.object = b;
    return p;
}

Proposition block_inequality(const std::string& task_id, const std::string& a, const std::string& b) {
    check_relational(a, b);
    Proposition p;
    p.task_id = task_id;
    p.kind = PropKind::BlockInequality;
    p.subject = a;
    p.object = b;
    return p;
}

Proposition block_order(const std::string& task_id, const std::string& heavier, const std::string& lighter) {
    check_relational(heavier, lighter);
    Proposition p;
    p.task_id = task_id;
    p.kind = PropKind::BlockOrder;
    p.subject = heavier;
    p.object = lighter;
    return p;
}

std::string weight_literal(int grams) { return std::to_string(grams) + "g"; }

std::optional<int> parse_weight_literal(const std::string& s) {
    if (s.size() < 2 || s.back() != 'g') return std::nullopt;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
    }
    return std::stoi(s.substr(0, s.size() - 1));
}

Proposition negate(const Proposition& p) {
    Proposition n = p;
    switch (p.kind) {
        case PropKind::CardStance:
            n.stance = (p.stance == Stance::Select) ? Stance::Reject : Stance::Select;
            return n;
        case PropKind::BlockEquality:
            n.kind = PropKind::BlockInequality;
            return n;
        case PropKind::BlockInequality:
            n.kind = PropKind::BlockEquality;
            return n;
        case PropKind::BlockOrder:
            throw std::invalid_argument("no-negation");
    }
    throw std::logic_error("bad PropKind");
}

// ---------------------------------------------------------------------------
// Truth evaluation
// ---------------------------------------------------------------------------

static int operand_grams(const std::string& operand, const AnswerKey& key) {
    if (auto w = parse_weight_literal(operand)) return *w;
    auto it = key.block_grams.find(operand);
    if (it == key.block_grams.end()) {
        throw std::invalid_argument("unknown block or weight literal: " + operand);
    }
    return it->second;
}

bool evaluate_truth(const Proposition& p, const AnswerKey& key) {
    if (p.task_id != key.task_id) {
        throw std::invalid_argument("proposition from task '" + p.task_id +
                                    "' evaluated against key for '" + key.task_id + "'");
    }
    if (p.kind == PropKind::CardStance) {
        if (!key.is_wason) throw std::invalid_argument("card-stance proposition in non-Wason task");
        bool flip = key.flip_cards.count(p.subject) > 0;
        return (p.stance == Stance::Select) ? flip : !flip;
    }
    if (key.is_wason) throw std::invalid_argument("block proposition in Wason task");
    int a = operand_grams(p.subject, key);
    int b = operand_grams(p.object, key);
    switch (p.kind) {
        case PropKind::BlockEquality: return a == b;
        case PropKind::BlockInequality: return a != b;
        case PropKind::BlockOrder: return a > b;
        default: break;
    }
    throw std::logic_error("bad PropKind");
}

// ---------------------------------------------------------------------------
// Beliefs and common ground
// ---------------------------------------------------------------------------

std::string to_string(Ternary t) {
    switch (t) {
        case Ternary::True: return "true";
        case Ternary::False: return "false";
        case Ternary::Unknown: return "unknown";
    }
    throw std::logic_error("bad Ternary");
}

Ternary ternary_from_string(const std::string& s) {
    if (s == "true") return Ternary::True;
    if (s == "false") return Ternary::False;
    if (s == "unknown") return Ternary::Unknown;
    throw std::invalid_argument("bad ternary: " + s);
}

bool CommonGround::consistent() const {
    std::map<std::string, std::set<int>> literal_weights;
    for (const auto& p : propositions) {
        if (p.kind != PropKind::BlockOrder && propositions.count(negate(p)) > 0) return false;
        if (p.kind == PropKind::BlockEquality) {
            if (auto w = parse_weight_literal(p.object)) literal_weights[p.subject].insert(*w);
            if (auto w = parse_weight_literal(p.subject)) literal_weights[p.object].insert(*w);
        }
    }
    // contradictory weight literals for the same block
    for (const auto& [block, weights] : literal_weights) {
        if (weights.size() > 1) return false;
    }
    return true;
}

CommonGround common_ground(const ParticipantBeliefs& beliefs, int turn) {
    CommonGround cg;
    cg.turn = turn;
    if (beliefs.empty()) return cg;
    const auto& first = beliefs.begin()->second;
    for (const auto& [prop, value] : first) {
        if (value != Ternary::True) continue;
        bool unanimous = true;
        for (const auto& [participant, bmap] : beliefs) {
            auto it = bmap.find(prop);
            if (it == bmap.end() || it->second != Ternary::True) {
                unanimous = false;
                break;
            }
        }
        if (unanimous) cg.propositions.insert(prop);
    }
    return cg;
}

// ---------------------------------------------------------------------------
// FrictiveState / Intervention
// ---------------------------------------------------------------------------

json FrictiveState::to_json() const {
    json j;
    j["id"] = id;
    j["contested"] = contested ? contested->to_json() : json(nullptr);
    j["description"] = description;
    return j;
}

FrictiveState FrictiveState::from_json(const json& j) {
    FrictiveState f;
    f.id = j.at("id").get<std::string>();
    if (!j.at("contested").is_null()) f.contested = Proposition::from_json(j.at("contested"));
    f.description = j.at("description").get<std::string>();
    return f;
}

std::string Intervention::key() const {
    std::string k = template_id;
    for (const auto& a : args) k += "|" + a;
    return k;
}

json Intervention::to_json() const {
    json j;
    j["template"] = template_id;
    j["args"] = args;
    j["rendered"] = rendered;
    return j;
}

Intervention Intervention::from_json(const json& j) {
    Intervention f;
    f.template_id = j.at("template").get<std::string>();
    f.args = j.at("args").get<std::vector<std::string>>();
    f.rendered = j.at("rendered").get<std::string>();
    return f;
}

// ---------------------------------------------------------------------------
// Dialogue events
// ---------------------------------------------------------------------------

json Annotation::to_json() const {
    json j;
    j["tag"] = tag;
    j["text"] = text;
    return j;
}

Annotation Annotation::from_json(const json& j) {
    return Annotation{j.at("tag").get<std::string>(), j.at("text").get<std::string>()};
}

json BeliefDelta::to_json() const {
    json j;
    j["participant"] = participant;
    j["prop"] = prop.to_json();
    j["value"] = to_string(value);
    return j;
}

BeliefDelta BeliefDelta::from_json(const json& j) {
    BeliefDelta d;
    d.participant = j.at("participant").get<std::string>();
    d.prop = Proposition::from_json(j.at("prop"));
    d.value = ternary_from_string(j.at("value").get<std::string>());
    return d;
}

json CollaboratorTurn::to_json() const {
    json j;
    j["utterances"] = json::object();
    for (const auto& [who, text] : utterances) j["utterances"][who] = text;
    j["belief_deltas"] = json::array();
    for (const auto& d : belief_deltas) j["belief_deltas"].push_back(d.to_json());
    j["self_score"] = self_score;
    j["annotations"] = json::array();
    for (const auto& a : annotations) j["annotations"].push_back(a.to_json());
    return j;
}

CollaboratorTurn CollaboratorTurn::from_json(const json& j) {
    CollaboratorTurn c;
    for (auto it = j.at("utterances").begin(); it != j.at("utterances").end(); ++it) {
        c.utterances[it.key()] = it.value().get<std::string>();
    }
    for (const auto& d : j.at("belief_deltas")) c.belief_deltas.push_back(BeliefDelta::from_json(d));
    c.self_score = j.at("self_score").get<int>();
    for (const auto& a : j.at("annotations")) c.annotations.push_back(Annotation::from_json(a));
    return c;
}

json DialogueEvent::to_json() const {
    json j;
    j["speaker"] = speaker;
    switch (kind) {
        case EventKind::Intervention:
            j["kind"] = "intervention";
            j["payload"] = intervention.to_json();
            break;
        case EventKind::Collaborator:
            j["kind"] = "collaborator";
            j["payload"] = collab.to_json();
            break;
        case EventKind::Annotation:
            j["kind"] = "annotation";
            j["payload"] = annotation.to_json();
            break;
    }
    return j;
}

DialogueEvent DialogueEvent::from_json(const json& j) {
    DialogueEvent e;
    e.speaker = j.at("speaker").get<std::string>();
    std::string k = j.at("kind").get<std::string>();
    if (k == "intervention") {
        e.kind = EventKind::Intervention;
        e.intervention = Intervention::from_json(j.at("payload"));
    } else if (k == "collaborator") {
        e.kind = EventKind::Collaborator;
        e.collab = CollaboratorTurn::from_json(j.at("payload"));
    } else {
        e.kind = EventKind::Annotation;
        e.annotation = Annotation::from_json(j.at("payload"));
    }
    return e;
}

void DialogueState::append_intervention(const std::string& speaker, const Intervention& f) {
    DialogueEvent e;
    e.speaker = speaker;
    e.kind = EventKind::Intervention;
    e.intervention = f;
    events.push_back(std::move(e));
    ++turn;
}

void DialogueState::append_collaborator(const std::string& speaker, const CollaboratorTurn& c) {
    DialogueEvent e;
    e.speaker = speaker;
    e.kind = EventKind::Collaborator;
    e.collab = c;
    events.push_back(std::move(e));
}

void DialogueState::append_annotation(const std::string& speaker, const Annotation& a) {
    DialogueEvent e;
    e.speaker = speaker;
    e.kind = EventKind::Annotation;
    e.annotation = a;
    events.push_back(std::move(e));
}

std::string DialogueState::transcript() const {
    std::ostringstream out;
    for (const auto& e : events) {
        switch (e.kind) {
            case EventKind::Intervention:
                out << "Friction Agent: " << e.intervention.rendered << "\n";
                break;
            case EventKind::Collaborator:
                for (const auto& [who, text] : e.collab.utterances) {
                    out << who << ": " << text << "\n";
                }
                break;
            case EventKind::Annotation:
                out << "[" << e.annotation.tag << "] " << e.annotation.text << "\n";
                break;
        }
    }
    return out.str();
}

std::string DialogueState::digest() const { return sha256_hex(to_json().dump()); }

json DialogueState::to_json() const {
    json j;
    j["task"] = task_id;
    j["turn"] = turn;
    j["events"] = json::array();
    for (const auto& e : events) j["events"].push_back(e.to_json());
    j["beliefs"] = json::object();
    for (const auto& [who, bmap] : beliefs) {
        json b = json::array();
        for (const auto& [prop, value] : bmap) {
            json entry;
            entry["prop"] = prop.to_json();
            entry["value"] = to_string(value);
            b.push_back(entry);
        }
        j["beliefs"][who] = b;
    }
    return j;
}

DialogueState DialogueState::from_json(const json& j) {
    DialogueState s;
    s.task_id = j.at("task").get<std::string>();
    s.turn = j.at("turn").get<int>();
    for (const auto& e : j.at("events")) s.events.push_back(DialogueEvent::from_json(e));
    const auto& beliefs = j.at("beliefs");
    for (auto it = beliefs.begin(); it != beliefs.end(); ++it) {
        BeliefMap bmap;
        for (const auto& entry : it.value()) {
            bmap[Proposition::from_json(entry.at("prop"))] =
                ternary_from_string(entry.at("value").get<std::string>());
        }
        s.beliefs[it.key()] = std::move(bmap);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Dataset records
// ---------------------------------------------------------------------------

void PreferenceRecord::validate() const {
    if (score_w < score_l) throw std::invalid_argument("preference record with score_w < score_l");
    if (f_w == f_l) throw std::invalid_argument("preference record with f_w == f_l");
    if (score_w < 1 || score_w > 10 || score_l < 1 || score_l > 10) {
        throw std::invalid_argument("scores must lie in [1,10]");
    }
}

json PreferenceRecord::to_json() const {
    json j;
    j["state_digest"] = state_digest;
    j["state_prompt"] = state_prompt;
    j["phi"] = phi.to_json();
    j["f_w"] = f_w.to_json();
    j["f_l"] = f_l.to_json();
    j["score_w"] = score_w;
    j["score_l"] = score_l;
    return j;
}

PreferenceRecord PreferenceRecord::from_json(const json& j) {
    PreferenceRecord r;
    r.state_digest = j.at("state_digest").get<std::string>();
    r.state_prompt = j.at("state_prompt").get<std::string>();
    r.phi = FrictiveState::from_json(j.at("phi"));
    r.f_w = Intervention::from_json(j.at("f_w"));
    r.f_l = Intervention::from_json(j.at("f_l"));
    r.score_w = j.at("score_w").get<int>();
    r.score_l = j.at("score_l").get<int>();
    return r;
}

json TrajectoryStep::to_json() const {
    json j;
    j["phi"] = phi.to_json();
    j["f_w"] = f_w.to_json();
    j["response"] = response.to_json();
    return j;
}

TrajectoryStep TrajectoryStep::from_json(const json& j) {
    TrajectoryStep s;
    s.phi = FrictiveState::from_json(j.at("phi"));
    s.f_w = Intervention::from_json(j.at("f_w"));
    s.response = CollaboratorTurn::from_json(j.at("response"));
    return s;
}

json TrajectoryRecord::to_json() const {
    json j;
    j["state_digest"] = state_digest;
    j["state_prompt"] = state_prompt;
    j["history"] = json::array();
    for (const auto& h : history) j["history"].push_back(h.to_json());
    j["phi"] = phi.to_json();
    j["f_w"] = f_w.to_json();
    return j;
}

TrajectoryRecord TrajectoryRecord::from_json(const json& j) {
    TrajectoryRecord r;
    r.state_digest = j.at("state_digest").get<std::string>();
    r.state_prompt = j.at("state_prompt").get<std::string>();
    for (const auto& h : j.at("history")) r.history.push_back(TrajectoryStep::from_json(h));
    r.phi = FrictiveState::from_json(j.at("phi"));
    r.f_w = Intervention::from_json(j.at("f_w"));
    return r;
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << contents;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <typename Record>
static std::vector<Record> read_jsonl(const std::string& path) {
    std::vector<Record> out;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(Record::from_json(json::parse(line)));
    }
    return out;
}

std::vector<PreferenceRecord> read_pref_jsonl(const std::string& path) {
    return read_jsonl<PreferenceRecord>(path);
}

std::vector<TrajectoryRecord> read_traj_jsonl(const std::string& path) {
    return read_jsonl<TrajectoryRecord>(path);
}

// ---------------------------------------------------------------------------
// Hashing and RNG
// ---------------------------------------------------------------------------

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) {
        throw std::runtime_error("sha256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

// SplitMix64 step; identical sequences on every platform.
static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : state_(seed) {}

std::uint64_t Rng::next() { return splitmix64(state_); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int(0)");
    // rejection sampling to avoid modulo bias
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return x % n;
}

double Rng::uniform_real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

bool Rng::bernoulli(double p) { return uniform_real() < p; }

Rng Rng::split(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    std::uint64_t mix = a ^ (index * 0x9e3779b97f4a7c15ULL + 0x165667b19e3779f9ULL);
    std::uint64_t t = mix;
    return Rng(splitmix64(t));
}

} // namespace friction::core
