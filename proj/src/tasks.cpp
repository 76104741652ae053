#include "friction/tasks.hpp"

#include <algorithm>
#include <cctype>

namespace friction::tasks {

std::string to_string(TaskKind k) { return k == TaskKind::Wason ? "wason" : "wtd"; }

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "wason") return TaskKind::Wason;
    if (s == "wtd" || s == "weights") return TaskKind::Weights;
    throw std::invalid_argument("unknown task kind: " + s);
}

const std::vector<std::string>& weights_blocks() {
    static const std::vector<std::string> blocks{"red", "blue", "green", "purple", "yellow"};
    return blocks;
}

const std::map<std::string, int>& weights_grams() {
    static const std::map<std::string, int> grams{
        {"red", 10}, {"blue", 10}, {"green", 20}, {"purple", 30}, {"yellow", 50}};
    return grams;
}

bool is_vowel(const std::string& card) {
    if (card.size() != 1) return false;
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(card[0])));
    return c == 'A' || c == 'E' || c == 'I' || c == 'O' || c == 'U';
}

bool is_odd_digit(const std::string& card) {
    if (card.size() != 1 || !std::isdigit(static_cast<unsigned char>(card[0]))) return false;
    return (card[0] - '0') % 2 == 1;
}

void TaskConfig::validate() const {
    if (max_turns < 1) throw std::invalid_argument("max_turns must be >= 1");
    if (candidates < 2) throw std::invalid_argument("candidates must be >= 2");
    if (bound <= 0) throw std::invalid_argument("bound must be > 0");
    if (kind == TaskKind::Wason) {
        if (cards.size() < 2 || cards.size() > 6) {
            throw std::invalid_argument("Wason tasks take 2-6 cards");
        }
        for (const auto& c : cards) {
            if (c.size() != 1 || !std::isalnum(static_cast<unsigned char>(c[0]))) {
                throw std::invalid_argument("card symbols must be single letters or digits");
            }
        }
        if (participants < 2 || participants > 6) {
            throw std::invalid_argument("Wason participant count must lie in [2,6]");
        }
    } else {
        if (participants != 3) throw std::invalid_argument("Weights task requires exactly 3 participants");
    }
}

std::vector<std::string> TaskConfig::participant_ids() const {
    std::vector<std::string> ids;
    for (int i = 0; i < participants; ++i) ids.push_back("P" + std::to_string(i + 1));
    return ids;
}

core::json TaskConfig::to_json() const {
    core::json j;
    j["task"] = task_id;
    j["kind"] = to_string(kind);
    j["cards"] = cards;
    j["participants"] = participants;
    j["turns"] = max_turns;
    j["candidates"] = candidates;
    j["bound"] = bound;
    j["seed"] = seed;
    return j;
}

TaskConfig TaskConfig::from_json(const core::json& j) {
    TaskConfig c;
    c.kind = task_kind_from_string(j.at("kind").get<std::string>());
    c.task_id = j.value("task", to_string(c.kind));
    c.cards = j.value("cards", std::vector<std::string>{});
    c.participants = j.value("participants", c.kind == TaskKind::Wason ? 4 : 3);
    c.max_turns = j.value("turns", 15);
    c.candidates = j.value("candidates", 4);
    c.bound = j.value("bound", c.kind == TaskKind::Wason ? 16 : 37);
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
}

TaskConfig TaskConfig::load(const std::string& path) {
    return from_json(core::json::parse(core::read_file(path)));
}

TaskConfig default_wason(std::uint64_t seed) {
    TaskConfig c;
    c.task_id = "wason";
    c.kind = TaskKind::Wason;
    c.cards = {"U", "S", "8", "9"};
    c.participants = 4;
    c.bound = 16;
    c.seed = seed;
    return c;
}

TaskConfig default_weights(std::uint64_t seed) {
    TaskConfig c;
    c.task_id = "wtd";
    c.kind = TaskKind::Weights;
    c.participants = 3;
    c.bound = 37;
    c.seed = seed;
    return c;
}

std::set<std::string> wason_answer(const std::vector<std::string>& cards) {
    if (cards.empty()) throw std::invalid_argument("empty card set");
    std::set<std::string> answer;
    for (const auto& c : cards) {
        if (c.size() != 1 || !std::isalnum(static_cast<unsigned char>(c[0]))) {
            throw std::invalid_argument("card symbols must be single letters or digits: " + c);
        }
        if (is_vowel(c) || is_odd_digit(c)) answer.insert(c);
    }
    return answer;
}

double wason_fine_grained(const std::set<std::string>& selection,
                          const std::vector<std::string>& cards) {
    auto targets = wason_answer(cards);
    double per_card = 1.0 / static_cast<double>(cards.size());
    double score = 0.0;
    for (const auto& c : cards) {
        bool target = targets.count(c) > 0;
        bool selected = selection.count(c) > 0;
        if (target == selected) score += per_card;
    }
    return score;
}

int wtd_accuracy(const CommonGround& cg, const AnswerKey& key) {
    int correct = 0;
    for (const auto& p : cg.propositions) {
        if (core::evaluate_truth(p, key)) ++correct;
    }
    return correct;
}

AnswerKey answer_key(const TaskConfig& config) {
    AnswerKey key;
    key.task_id = config.task_id;
    if (config.kind == TaskKind::Wason) {
        key.is_wason = true;
        key.cards = config.cards;
        key.flip_cards = wason_answer(config.cards);
    } else {
        key.block_grams = weights_grams();
    }
    return key;
}

std::vector<FrictiveState> frictive_vocab(const TaskConfig& config) {
    std::vector<FrictiveState> vocab;
    if (config.kind == TaskKind::Wason) {
        for (const auto& c : config.cards) {
            FrictiveState fs;
            fs.id = "card:" + c;
            fs.contested = core::card_stance(config.task_id, c, core::Stance::Select);
            fs.description = "The group disagrees on whether card " + c + " must be flipped.";
            vocab.push_back(std::move(fs));
        }
    } else {
        const auto& blocks = weights_blocks();
        for (const auto& b : blocks) {
            FrictiveState fs;
            fs.id = "block:" + b;
            fs.contested = core::block_equality(config.task_id, b,
                                                core::weight_literal(weights_grams().at(b)));
            fs.description = "The group disagrees on the weight of the " + b + " block.";
            vocab.push_back(std::move(fs));
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            for (std::size_t j = i + 1; j < blocks.size(); ++j) {
                FrictiveState fs;
                fs.id = "pair:" + blocks[i] + ":" + blocks[j];
                int wi = weights_grams().at(blocks[i]);
                int wj = weights_grams().at(blocks[j]);
                if (wi == wj) {
                    fs.contested = core::block_equality(config.task_id, blocks[i], blocks[j]);
                } else if (wi > wj) {
                    fs.contested = core::block_order(config.task_id, blocks[i], blocks[j]);
                } else {
                    fs.contested = core::block_order(config.task_id, blocks[j], blocks[i]);
                }
                fs.description = "The group disagrees on how the " + blocks[i] + " and " +
                                 blocks[j] + " blocks compare.";
                vocab.push_back(std::move(fs));
            }
        }
    }
    FrictiveState none;
    none.id = "none";
    none.description = "No contested proposition.";
    vocab.push_back(std::move(none));
    return vocab;
}

static Intervention make_intervention(const std::string& template_id,
                                      std::vector<std::string> args,
                                      const std::string& rendered) {
    Intervention f;
    f.template_id = template_id;
    f.args = std::move(args);
    f.rendered = rendered;
    return f;
}

std::vector<Intervention> intervention_vocab(const TaskConfig& config) {
    std::vector<Intervention> vocab;
    if (config.kind == TaskKind::Wason) {
        for (const auto& c : config.cards) {
            vocab.push_back(make_intervention(
                "probe_card", {c},
                "What would it mean for the rule if card " + c + " were flipped?"));
        }
        vocab.push_back(make_intervention(
            "restate_rule", {},
            "Let's restate the rule: every card with a vowel must have an even number behind it."));
        vocab.push_back(make_intervention(
            "ask_justification", {},
            "Can each of you explain why your current selection tests the rule?"));
        vocab.push_back(make_intervention("no_op", {}, "(the friction agent stays silent)"));
    } else {
        const auto& blocks = weights_blocks();
        for (const auto& b : blocks) {
            vocab.push_back(make_intervention(
                "probe_block", {b},
                "Are we certain about the weight of the " + b + " block? What did the scale show?"));
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            for (std::size_t j = i + 1; j < blocks.size(); ++j) {
                vocab.push_back(make_intervention(
                    "probe_pair", {blocks[i], blocks[j]},
                    "Should we put the " + blocks[i] + " and " + blocks[j] +
                        " blocks on the scale together before moving on?"));
            }
        }
        vocab.push_back(make_intervention(
            "restate_constraint", {},
            "Remember that only the red block's weight, 10 grams, is known for sure."));
        vocab.push_back(make_intervention("no_op", {}, "(the friction agent stays silent)"));
    }
    return vocab;
}

std::optional<std::string> probe_entity(const Intervention& f) {
    if (f.template_id == "probe_card" || f.template_id == "probe_block") return f.args.at(0);
    if (f.template_id == "probe_pair") return f.args.at(0) + ":" + f.args.at(1);
    return std::nullopt;
}

std::optional<std::string> frictive_entity(const FrictiveState& phi) {
    if (phi.id == "none") return std::nullopt;
    auto pos = phi.id.find(':');
    return phi.id.substr(pos + 1);
}

int frictive_index(const std::vector<FrictiveState>& vocab, const std::string& id) {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (vocab[i].id == id) return static_cast<int>(i);
    }
    throw std::invalid_argument("frictive state not in vocabulary: " + id);
}

int intervention_index(const std::vector<Intervention>& vocab, const Intervention& f) {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (vocab[i] == f) return static_cast<int>(i);
    }
    throw std::invalid_argument("intervention not in vocabulary: " + f.key());
}

} // namespace friction::tasks
