#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "friction/agents.hpp"

using namespace friction;
using agents::AgentProfile;
using core::Rng;

namespace {

std::vector<AgentProfile> uniform_profiles(const tasks::TaskConfig& config, double p_r,
                                           double q_t, bool ma = false) {
    std::vector<AgentProfile> profiles;
    for (const auto& id : config.participant_ids()) {
        AgentProfile p;
        p.participant = id;
        p.facet = "trust";
        p.receptiveness = p_r;
        p.truth_bias = q_t;
        p.ma_mode = ma;
        profiles.push_back(p);
    }
    return profiles;
}

} // namespace

TEST_CASE("facet table maps to declared parameters") {
    CHECK(agents::personality_facets().size() == 15);
    CHECK(agents::profile_for_facet("P1", "assertiveness").receptiveness == doctest::Approx(0.8));
    CHECK(agents::profile_for_facet("P1", "sociability").receptiveness == doctest::Approx(0.8));
    CHECK(agents::profile_for_facet("P1", "anxiety").receptiveness == doctest::Approx(0.5));
    CHECK(agents::profile_for_facet("P1", "vulnerability").receptiveness == doctest::Approx(0.5));
    CHECK(agents::profile_for_facet("P1", "trust").truth_bias == doctest::Approx(0.9));
    auto plain = agents::profile_for_facet("P1", "anger");
    CHECK(plain.receptiveness == doctest::Approx(0.7));
    CHECK(plain.truth_bias == doctest::Approx(0.8));
    CHECK_THROWS_AS(agents::profile_for_facet("P1", "openness"), std::invalid_argument);
}

TEST_CASE("no_op produces no deltas with probability about (1-p_generic)^n") {
    auto config = tasks::default_wason();
    auto profiles = uniform_profiles(config, 0.7, 0.8);
    auto vocab = tasks::intervention_vocab(config);
    auto no_op = vocab.back();
    REQUIRE(no_op.template_id == "no_op");

    Rng rng(100);
    auto state = agents::init_dialogue(config, rng);
    int quiet = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto turn = agents::collaborator_step(config, state, no_op, profiles, rng);
        if (turn.belief_deltas.empty()) ++quiet;
    }
    double rate = static_cast<double>(quiet) / trials;
    double lower = std::pow(1.0 - agents::kGenericRevisionProb, config.participants) - 0.02;
    CHECK(rate >= lower);
}

TEST_CASE("zero receptiveness blocks targeted revisions") {
    auto config = tasks::default_wason();
    auto profiles = uniform_profiles(config, 0.0, 0.8);
    auto vocab = tasks::intervention_vocab(config);
    Rng rng(7);
    auto state = agents::init_dialogue(config, rng);
    for (int i = 0; i < 500; ++i) {
        auto turn = agents::collaborator_step(config, state, vocab[0], profiles, rng);
        CHECK(turn.belief_deltas.empty());
    }
}

TEST_CASE("MA damping scales the revision rate to p_r * 0.2") {
    auto config = tasks::default_wason();
    auto profiles = uniform_profiles(config, 0.7, 1.0, /*ma=*/true);
    auto vocab = tasks::intervention_vocab(config);
    auto probe = vocab[0]; // probe_card(U)
    REQUIRE(*tasks::probe_entity(probe) == "U");

    // Count revisions only over participants contested on the probed card.
    Rng rng(200);
    long contested = 0, revised = 0;
    for (int i = 0; i < 20000; ++i) {
        Rng init(i + 1);
        auto state = agents::init_dialogue(config, init);
        int wrong = 0;
        for (const auto& [id, beliefs] : state.beliefs) {
            for (const auto& [prop, v] : beliefs) {
                if (prop.subject == "U" && prop.kind == core::PropKind::CardStance &&
                    prop.stance == core::Stance::Select) {
                    // truth for U is select
                    if (v != core::Ternary::True) ++wrong;
                }
            }
        }
        contested += wrong;
        auto turn = agents::collaborator_step(config, state, probe, profiles, rng);
        std::set<std::string> who;
        for (const auto& d : turn.belief_deltas) who.insert(d.participant);
        revised += static_cast<long>(who.size());
    }
    double rate = static_cast<double>(revised) / static_cast<double>(contested);
    CHECK(rate == doctest::Approx(0.7 * agents::kMaDamping).epsilon(0.15));
    CHECK(std::abs(rate - 0.14) < 0.02);
}

TEST_CASE("faithful collaborators converge within 4 * |cards| turns") {
    auto config = tasks::default_wason();
    auto profiles = uniform_profiles(config, 1.0, 1.0);
    auto vocab = tasks::intervention_vocab(config);
    for (int seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        auto state = agents::init_dialogue(config, rng);
        int limit = 4 * static_cast<int>(config.cards.size());
        int turns = 0;
        while (!agents::task_complete(config, state) && turns < limit) {
            auto phi = agents::oracle_phi(config, state);
            core::Intervention f;
            if (!phi.is_none()) {
                auto entity = tasks::frictive_entity(phi);
                for (const auto& cand : vocab) {
                    auto probed = tasks::probe_entity(cand);
                    if (probed && *probed == *entity) f = cand;
                }
            } else {
                // unanimous but possibly wrong: probe each card in turn
                f = vocab[turns % config.cards.size()];
            }
            state.append_intervention("friction", f);
            auto turn = agents::collaborator_step(config, state, f, profiles, rng);
            agents::apply_collaborator(state, turn);
            ++turns;
        }
        REQUIRE(agents::task_complete(config, state));
    }
}

TEST_CASE("MA mode changes only revision probability, not event structure") {
    auto config = tasks::default_wason();
    auto vocab = tasks::intervention_vocab(config);
    Rng init(3);
    auto state = agents::init_dialogue(config, init);
    for (bool weights : {false, true}) {
        (void)weights;
        Rng rng_f(55), rng_ma(55);
        auto plain = agents::collaborator_step(config, state, vocab[0],
                                               uniform_profiles(config, 0.7, 0.8, false), rng_f);
        auto ma = agents::collaborator_step(config, state, vocab[0],
                                            uniform_profiles(config, 0.7, 0.8, true), rng_ma);
        CHECK(plain.utterances.size() == ma.utterances.size());
        REQUIRE(plain.annotations.size() == ma.annotations.size());
        for (std::size_t i = 0; i < plain.annotations.size(); ++i) {
            CHECK(plain.annotations[i].tag == ma.annotations[i].tag);
        }
        CHECK(plain.annotations[0].tag == "acknowledgment");
        CHECK(ma.annotations[0].tag == "acknowledgment");
    }
}

TEST_CASE("self-score separates targeted probes from no_op") {
    auto config = tasks::default_wason();
    auto profiles = uniform_profiles(config, 0.7, 0.8);
    auto vocab = tasks::intervention_vocab(config);
    Rng rng(12);
    double targeted_mean = 0.0, noop_mean = 0.0;
    int n = 200;
    for (int i = 0; i < n; ++i) {
        Rng init(i + 1);
        auto state = agents::init_dialogue(config, init);
        auto phi = agents::oracle_phi(config, state);
        if (phi.is_none()) continue;
        auto entity = tasks::frictive_entity(phi);
        core::Intervention probe;
        for (const auto& cand : vocab) {
            auto probed = tasks::probe_entity(cand);
            if (probed && *probed == *entity) probe = cand;
        }
        targeted_mean += agents::collaborator_step(config, state, probe, profiles, rng).self_score;
        noop_mean += agents::collaborator_step(config, state, vocab.back(), profiles, rng).self_score;
    }
    targeted_mean /= n;
    noop_mean /= n;
    CHECK(targeted_mean - noop_mean > 3.0);
    CHECK(noop_mean == doctest::Approx(1.0));
}

TEST_CASE("oracle phi picks the most contested entity with index tie-break") {
    auto config = tasks::default_wason();
    Rng rng(9);
    auto state = agents::init_dialogue(config, rng);

    // unanimous: everyone selects everything -> none
    for (auto& [id, beliefs] : state.beliefs) {
        for (auto& [prop, v] : beliefs) {
            v = (prop.stance == core::Stance::Select) ? core::Ternary::True : core::Ternary::False;
        }
    }
    CHECK(agents::oracle_phi(config, state).is_none());

    // contest only card 9 (index 3): P1 rejects it
    auto sel9 = core::card_stance(config.task_id, "9", core::Stance::Select);
    auto rej9 = core::card_stance(config.task_id, "9", core::Stance::Reject);
    state.beliefs["P1"][sel9] = core::Ternary::False;
    state.beliefs["P1"][rej9] = core::Ternary::True;
    CHECK(agents::oracle_phi(config, state).id == "card:9");

    // contest card U (index 0) equally -> the tie breaks toward U
    auto selU = core::card_stance(config.task_id, "U", core::Stance::Select);
    auto rejU = core::card_stance(config.task_id, "U", core::Stance::Reject);
    state.beliefs["P1"][selU] = core::Ternary::False;
    state.beliefs["P1"][rejU] = core::Ternary::True;
    CHECK(agents::oracle_phi(config, state).id == "card:U");
}

TEST_CASE("oracle candidates include the forced probe and are deterministic") {
    auto config = tasks::default_wason();
    Rng rng(21);
    auto state = agents::init_dialogue(config, rng);
    auto fvocab = tasks::frictive_vocab(config);
    auto phi = fvocab[3]; // card:9
    REQUIRE(phi.id == "card:9");

    Rng ra(5), rb(5);
    auto a = agents::oracle_candidates(config, state, phi, 4, ra);
    auto b = agents::oracle_candidates(config, state, phi, 4, rb);
    REQUIRE(a.size() == 4);
    CHECK(a == b);
    CHECK(a[0].template_id == "probe_card");
    CHECK(a[0].args[0] == "9");
    std::set<std::string> keys;
    for (const auto& f : a) keys.insert(f.key());
    CHECK(keys.size() == 4);

    auto vocab = tasks::intervention_vocab(config);
    auto all = agents::oracle_candidates(config, state, phi, vocab.size(), ra);
    CHECK(all.size() == vocab.size());
    CHECK_THROWS_AS(
        agents::oracle_candidates(config, state, phi, vocab.size() + 1, ra),
        std::invalid_argument);
}

TEST_CASE("tag parser extracts fields and errors on bad scores") {
    CHECK(*agents::parse_tagged_reply("<score>7</score>").score == 7);
    auto sub = agents::parse_tagged_reply("<final_submission>8,3,U</final_submission>");
    CHECK(*sub.final_submission == std::set<std::string>{"8", "3", "U"});

    auto none = agents::parse_tagged_reply("plain text with no tags");
    CHECK_FALSE(none.score.has_value());
    CHECK_FALSE(none.friction.has_value());
    CHECK_FALSE(none.common_ground.has_value());
    CHECK_FALSE(none.final_submission.has_value());

    CHECK_THROWS_WITH_AS(agents::parse_tagged_reply("<score>seven</score>"), "bad-score",
                         std::runtime_error);

    auto rich = agents::parse_tagged_reply(
        "<t>task</t><b>belief</b><rationale>why</rationale><friction>slow down</friction>"
        "<score> 9 </score><common_ground>a,b , c</common_ground>");
    CHECK(*rich.task_context == "task");
    CHECK(*rich.friction == "slow down");
    CHECK(*rich.score == 9);
    CHECK(*rich.common_ground == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("parse after render recovers scripted annotations") {
    auto config = tasks::default_wason();
    auto profiles = uniform_profiles(config, 0.8, 0.9);
    auto vocab = tasks::intervention_vocab(config);
    Rng rng(31);
    auto state = agents::init_dialogue(config, rng);
    auto turn = agents::collaborator_step(config, state, vocab[0], profiles, rng);

    auto reply = agents::parse_tagged_reply(agents::render_tagged(turn));
    CHECK(*reply.score == turn.self_score);
    std::string cg_text;
    for (const auto& a : turn.annotations) {
        if (a.tag == "common_ground") cg_text = a.text;
    }
    std::vector<std::string> expected;
    std::stringstream ss(cg_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) expected.push_back(item);
    }
    CHECK(*reply.common_ground == expected);
}

TEST_CASE("remote agent round-trip, retry and replay contracts") {
    httplib::Server server;
    server.Post("/complete", [](const httplib::Request& req, httplib::Response& res) {
        auto body = core::json::parse(req.body);
        res.set_content("echo:" + body.at("role").get<std::string>(), "text/plain");
    });
    server.Post("/empty", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("", "text/plain");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread serving([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto base = "http://127.0.0.1:" + std::to_string(port);
    agents::RemoteAgent ok(base + "/complete", 3, 1);
    auto reply = ok.call("oracle", "sys", "dialogue", agents::friction_decoding());
    CHECK(reply == "echo:oracle");
    REQUIRE(ok.log().size() == 1);
    CHECK(ok.log()[0].request.at("temperature").get<double>() == doctest::Approx(0.0));
    CHECK(ok.log()[0].request.at("top_p").get<double>() == doctest::Approx(0.9));
    CHECK(ok.log()[0].response == "echo:oracle");

    // replay from the log without the endpoint
    auto replayed = ok.log()[0].response;
    CHECK(replayed == reply);

    agents::RemoteAgent empty(base + "/empty", 3, 1);
    CHECK_THROWS_WITH_AS(empty.call("oracle", "s", "d", agents::friction_decoding()),
                         "remote-empty", std::runtime_error);

    server.stop();
    serving.join();

    agents::RemoteAgent down("http://127.0.0.1:1/complete", 3, 1);
    CHECK_THROWS_WITH_AS(down.call("oracle", "s", "d", agents::collaborator_decoding()),
                         "remote-unavailable", std::runtime_error);
}
