#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "diagsim/agents.hpp"

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

using namespace diagsim;

namespace {

std::string fixture(const std::string& name) {
    return std::string(DIAGSIM_DATA_DIR) + "/" + name + ".json";
}

const Scenario& infant_scenario() {
    static const Scenario scenario = load_scenario(fixture("infant_diarrhea"));
    return scenario;
}

const Scenario& mini_scenario() {
    static const Scenario scenario = load_scenario(fixture("mini_fever"));
    return scenario;
}

const EmbeddingCache& shared_embeddings() {
    static const HashEmbedder embedder;
    static const EmbeddingCache cache(embedder);
    return cache;
}

QNetwork zero_network() {
    QNetwork net = make_q_network(QNetworkConfig{64, 8, 4, 8}, 1);
    for (Mlp* mlp : {&net.state_encoder, &net.action_encoder, &net.scorer})
        for (auto& layer : mlp->layers) {
            for (auto& row : layer.weights) std::fill(row.begin(), row.end(), 0.0);
            std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
        }
    return net;
}

QNetwork random_network(std::uint64_t seed) {
    return make_q_network(QNetworkConfig{64, 8, 4, 8}, seed);
}

PromptBundle bundle_for(const Scenario& scenario, Phase phase) {
    PromptBundle bundle;
    bundle.task_description = scenario.task_description();
    bundle.action_menu = format_action_menu(scenario, phase);
    return bundle;
}

bool candidate_set_contains(const Decision& decision, const Action& action) {
    return std::any_of(decision.candidates.begin(), decision.candidates.end(),
                       [&](const auto& entry) { return entry.first == action; });
}

std::string transcript_bytes(const Transcript& transcript) {
    std::ostringstream out;
    write_transcript_jsonl(transcript, out);
    return out.str();
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("agent kinds carry names, labels, and budget rules") {
    CHECK(agent_type_from_name("rl") == AgentType::rl);
    CHECK(agent_type_from_name("da_rl") == AgentType::da_rl);
    CHECK_THROWS_AS(agent_type_from_name("psychic"), std::invalid_argument);
    for (AgentType type : {AgentType::rl, AgentType::llm, AgentType::sa_rl, AgentType::da_rl})
        CHECK(agent_type_from_name(agent_type_name(type)) == type);

    AgentKind kind;
    kind.type = AgentType::sa_rl;
    CHECK(kind.label() == "sa_rl");
    kind.reflective = true;
    CHECK(kind.label() == "sa_rl_reflective");
    CHECK(kind.max_trials() == kMaxReflectiveTrials);
    kind.reflective = false;
    CHECK(kind.max_trials() == 1);

    CHECK(kind.k_for(Phase::interaction) == 5);
    CHECK(kind.k_for(Phase::posttest) == 2);
    CHECK(kind.needs_network());
    CHECK(kind.needs_provider());
    CHECK_FALSE(AgentKind{AgentType::llm}.needs_network());
    CHECK_FALSE(AgentKind{AgentType::rl}.needs_provider());

    AgentKind bad;
    bad.type = AgentType::rl;
    bad.reflective = true;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.reflective = false;
    bad.k_posttest = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("decisions convert to audit records") {
    Decision decision;
    decision.chosen = make_suggest_action();
    decision.source = DecisionSource::grounded_fallback;
    decision.candidates = {{make_ask_action("infant", "age"), 0.25},
                           {make_suggest_action(), std::nullopt}};
    const DecisionAudit audit = to_audit(decision);
    CHECK(audit.source == "grounded_fallback");
    REQUIRE(audit.candidates.size() == 2);
    CHECK(audit.candidates[0].first == "I want to know about the infant's age.");
    CHECK(audit.candidates[0].second == 0.25);
    CHECK_FALSE(audit.candidates[1].second.has_value());
}

TEST_CASE("the RL policy samples the softmax over all valid actions") {
    const std::vector<Action> pair{make_ask_action("infant", "age"),
                                   make_ask_action("infant", "diet")};

    SUBCASE("a single action is chosen with certainty") {
        const QNetwork net = random_network(2);
        std::mt19937_64 rng(1);
        const EmbeddedState state = make_zero_state(64);
        const Decision decision =
            rl_decide(net, state, {make_suggest_action()}, shared_embeddings(), 1.0, rng);
        CHECK(decision.chosen == make_suggest_action());
        CHECK(decision.source == DecisionSource::rl_softmax);
        REQUIRE(decision.candidates.size() == 1);
        CHECK(decision.candidates[0].second.has_value());
    }
    SUBCASE("equal Q-values split roughly evenly") {
        const QNetwork net = zero_network();
        const EmbeddedState state = make_zero_state(64);
        std::mt19937_64 rng(5);
        int first = 0;
        const int draws = 4000;
        for (int i = 0; i < draws; ++i)
            if (rl_decide(net, state, pair, shared_embeddings(), 1.0, rng).chosen == pair[0])
                ++first;
        CHECK(std::abs(first / static_cast<double>(draws) - 0.5) <= 0.025);
    }
    SUBCASE("the evaluation temperature is effectively greedy") {
        const QNetwork net = random_network(9);
        EmbeddedState state = make_zero_state(64);
        state = update_state(state, shared_embeddings().get("some opening line"));
        std::mt19937_64 rng(7);
        for (int i = 0; i < 50; ++i) {
            const Decision decision =
                rl_decide(net, state, pair, shared_embeddings(), 0.001, rng);
            double best = -1e300;
            Action best_action;
            for (const auto& [action, q] : decision.candidates)
                if (*q > best) {
                    best = *q;
                    best_action = action;
                }
            CHECK(decision.chosen == best_action);
        }
    }
    SUBCASE("the chosen action is always a candidate") {
        const QNetwork net = random_network(11);
        const EmbeddedState state = make_zero_state(64);
        std::mt19937_64 rng(3);
        for (int i = 0; i < 100; ++i) {
            const Decision decision =
                rl_decide(net, state, pair, shared_embeddings(), 0.7, rng);
            CHECK(candidate_set_contains(decision, decision.chosen));
        }
    }
    SUBCASE("an empty action set is refused") {
        const QNetwork net = zero_network();
        std::mt19937_64 rng(1);
        CHECK_THROWS_AS(
            rl_decide(net, make_zero_state(64), {}, shared_embeddings(), 1.0, rng),
            std::invalid_argument);
    }
}

TEST_CASE("the suggestion-assisted policy samples within the grounded suggestion set") {
    const Scenario& scenario = infant_scenario();
    Episode episode(scenario, Subtask{scenario.patient_id, "teething", 0});
    const auto valid = episode.reset().valid_actions;
    const PromptBundle bundle = bundle_for(scenario, Phase::interaction);
    const QNetwork net = random_network(21);
    const EmbeddedState state = make_zero_state(64);
    const AgentKind kind{AgentType::sa_rl};

    SUBCASE("valid distinct suggestions become the candidate set") {
        ReplayProvider provider([](const ChatRequest&) {
            return std::string("ask(infant, diet)\nask(infant, stool)");
        });
        std::mt19937_64 rng(2);
        const Decision decision =
            sa_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings(), 1.0, rng);
        REQUIRE(decision.candidates.size() == 2);
        CHECK(decision.candidates[0].first == make_ask_action("infant", "diet"));
        CHECK(decision.candidates[1].first == make_ask_action("infant", "stool"));
        CHECK(decision.source == DecisionSource::llm_choice);
        CHECK(candidate_set_contains(decision, decision.chosen));
        for (const auto& [action, q] : decision.candidates) CHECK(q.has_value());
    }
    SUBCASE("duplicate suggestions are collapsed") {
        ReplayProvider provider([](const ChatRequest&) {
            return std::string("ask(infant, diet)\nask(infant, diet)\nASK(Infant, Diet)");
        });
        std::mt19937_64 rng(2);
        const Decision decision =
            sa_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings(), 1.0, rng);
        REQUIRE(decision.candidates.size() == 1);
        CHECK(decision.chosen == make_ask_action("infant", "diet"));
    }
    SUBCASE("an invalid suggestion is grounded to its nearest valid action") {
        // "ask(baby, age)" shares the token "age" with exactly one action text.
        ReplayProvider provider([](const ChatRequest&) { return std::string("ask(baby, age)"); });
        std::mt19937_64 rng(2);
        const Decision decision =
            sa_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings(), 1.0, rng);
        REQUIRE(decision.candidates.size() == 1);
        CHECK(decision.chosen == make_ask_action("infant", "age"));
        CHECK(std::find(valid.begin(), valid.end(), decision.chosen) != valid.end());
    }
    SUBCASE("no parsable suggestion falls back to the full RL policy") {
        ReplayProvider provider(
            [](const ChatRequest&) { return std::string("I would just watch and wait."); });
        std::mt19937_64 rng(2);
        const Decision decision =
            sa_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings(), 1.0, rng);
        CHECK(decision.source == DecisionSource::rl_softmax);
        CHECK(decision.candidates.size() == valid.size());
        CHECK(std::find(valid.begin(), valid.end(), decision.chosen) != valid.end());
    }
    SUBCASE("the interaction prompt asks for five suggestions, the posttest for two") {
        std::string interaction_prompt;
        ReplayProvider provider([&interaction_prompt](const ChatRequest& r) {
            interaction_prompt = r.messages[0].content;
            return std::string("ask(infant, diet)");
        });
        std::mt19937_64 rng(2);
        sa_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                     shared_embeddings(), 1.0, rng);
        CHECK(contains(interaction_prompt, "Suggest the 5 best next actions"));

        const auto posttest_valid = episode.step(make_suggest_action()).valid_actions;
        std::string posttest_prompt;
        ReplayProvider posttest_provider([&posttest_prompt](const ChatRequest& r) {
            posttest_prompt = r.messages[0].content;
            return std::string("choose(teething)");
        });
        const Decision decision = sa_rl_decide(
            net, posttest_provider, bundle_for(scenario, Phase::posttest), state,
            posttest_valid, Phase::posttest, kind, shared_embeddings(), 1.0, rng);
        CHECK(contains(posttest_prompt, "Suggest the 2 best next actions"));
        CHECK(decision.chosen.cause_id == "teething");
    }
    SUBCASE("shifting every candidate Q leaves the sampling distribution unchanged") {
        ReplayProvider provider([](const ChatRequest&) {
            return std::string("ask(infant, diet)\nask(infant, stool)\nsuggest_solution()");
        });
        std::mt19937_64 rng(2);
        const Decision decision =
            sa_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings(), 1.0, rng);
        std::vector<double> qs, shifted;
        for (const auto& [action, q] : decision.candidates) {
            qs.push_back(*q);
            shifted.push_back(*q + 17.5);
        }
        const auto p1 = softmax_probs(qs, 1.0);
        const auto p2 = softmax_probs(shifted, 1.0);
        REQUIRE(p1.size() == p2.size());
        for (std::size_t i = 0; i < p1.size(); ++i)
            CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
    }
}

TEST_CASE("the decision-assisted policy offers the RL top-k to the LLM") {
    const Scenario& scenario = mini_scenario();
    Episode episode(scenario, Subtask{scenario.patient_id, "ear_infection", 0});
    const auto valid = episode.reset().valid_actions;  // 3 asks + suggest
    const PromptBundle bundle = bundle_for(scenario, Phase::interaction);
    const EmbeddedState state = make_zero_state(64);
    AgentKind kind{AgentType::da_rl};

    SUBCASE("with equal Q-values the top-k keeps the declared action order") {
        const QNetwork net = zero_network();
        kind.k_interaction = 2;
        ReplayProvider provider([&valid](const ChatRequest&) {
            return action_call_text(valid[1]);  // the 2nd-ranked option
        });
        const Decision decision =
            da_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings());
        REQUIRE(decision.candidates.size() == 2);
        CHECK(decision.candidates[0].first == valid[0]);
        CHECK(decision.candidates[1].first == valid[1]);
        CHECK(decision.chosen == valid[1]);
        CHECK(decision.source == DecisionSource::llm_choice);
    }
    SUBCASE("k larger than the action set is clamped") {
        const QNetwork net = zero_network();
        kind.k_interaction = 50;
        ReplayProvider provider([&valid](const ChatRequest&) {
            return action_call_text(valid[0]);
        });
        const Decision decision =
            da_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings());
        CHECK(decision.candidates.size() == valid.size());
    }
    SUBCASE("candidates come ranked by descending Q") {
        const QNetwork net = random_network(33);
        ReplayProvider provider([&valid](const ChatRequest&) {
            return action_call_text(valid[0]);
        });
        const Decision decision =
            da_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings());
        for (std::size_t i = 1; i < decision.candidates.size(); ++i)
            CHECK(*decision.candidates[i - 1].second >= *decision.candidates[i].second);
    }
    SUBCASE("the prompt lists exactly the offered call texts") {
        const QNetwork net = zero_network();
        kind.k_interaction = 2;
        std::string prompt;
        ReplayProvider provider([&](const ChatRequest& r) {
            prompt = r.messages[0].content;
            return action_call_text(valid[0]);
        });
        da_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                     shared_embeddings());
        CHECK(contains(prompt, "- " + action_call_text(valid[0])));
        CHECK(contains(prompt, "- " + action_call_text(valid[1])));
        CHECK_FALSE(contains(prompt, action_call_text(valid[2])));
    }
    SUBCASE("persistent garbage falls back to the top-Q action after three calls") {
        const QNetwork net = random_network(33);
        ReplayProvider provider([](const ChatRequest&) { return std::string("hmm?"); });
        const Decision decision =
            da_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings());
        CHECK(provider.calls() == 3);
        CHECK(decision.source == DecisionSource::grounded_fallback);
        CHECK(decision.chosen == decision.candidates[0].first);
    }
    SUBCASE("an answer outside the offered set is rejected, then corrected") {
        const QNetwork net = zero_network();
        kind.k_interaction = 2;  // valid[2] stays outside the offer
        int calls = 0;
        ReplayProvider provider([&](const ChatRequest&) {
            ++calls;
            return calls == 1 ? action_call_text(valid[2]) : action_call_text(valid[1]);
        });
        const Decision decision =
            da_rl_decide(net, provider, bundle, state, valid, Phase::interaction, kind,
                         shared_embeddings());
        CHECK(calls == 2);
        CHECK(decision.chosen == valid[1]);
        CHECK(decision.source == DecisionSource::llm_choice);
    }
}

TEST_CASE("run_episode validates its configuration up front") {
    const Scenario& scenario = mini_scenario();
    const Subtask subtask{scenario.patient_id, "ear_infection", 0};
    const QNetwork net = zero_network();
    std::mt19937_64 rng(1);
    ReplayProvider provider([](const ChatRequest&) { return std::string("x"); });

    EpisodeConfig config;
    config.kind = AgentKind{AgentType::rl};
    config.embeddings = &shared_embeddings();

    SUBCASE("the rl agent needs a network and an rng") {
        config.rng = &rng;
        CHECK_THROWS_AS(run_episode(scenario, subtask, config), std::invalid_argument);
        config.net = &net;
        config.rng = nullptr;
        CHECK_THROWS_AS(run_episode(scenario, subtask, config), std::invalid_argument);
    }
    SUBCASE("the llm agent needs a provider") {
        config.kind = AgentKind{AgentType::llm};
        CHECK_THROWS_AS(run_episode(scenario, subtask, config), std::invalid_argument);
    }
    SUBCASE("embeddings are always required") {
        config.kind = AgentKind{AgentType::llm};
        config.provider = &provider;
        config.embeddings = nullptr;
        CHECK_THROWS_AS(run_episode(scenario, subtask, config), std::invalid_argument);
    }
    SUBCASE("a reflective rl kind is rejected") {
        config.kind.reflective = true;
        config.net = &net;
        config.rng = &rng;
        CHECK_THROWS_AS(run_episode(scenario, subtask, config), std::invalid_argument);
    }
}

TEST_CASE("a scripted perfect provider drives the LLM agent to a perfect episode") {
    const Scenario& scenario = mini_scenario();
    const Subtask subtask{scenario.patient_id, "ear_infection", 1};
    OracleProvider oracle(scenario, subtask);

    EpisodeConfig config;
    config.kind = AgentKind{AgentType::llm};
    config.provider = &oracle;
    config.embeddings = &shared_embeddings();

    const Transcript transcript = run_episode(scenario, subtask, config);
    REQUIRE(transcript.outcome.has_value());
    CHECK(transcript.outcome->correct);
    REQUIRE(transcript.steps.size() == 4);  // 2 key questions, suggest, choose
    CHECK(transcript.steps[0].action == make_ask_action("toddler", "temperature"));
    CHECK(transcript.steps[1].action == make_ask_action("toddler", "ears"));
    CHECK(transcript.steps[2].action.kind == ActionKind::suggest_solution);
    CHECK(transcript.steps[3].action.cause_id == "ear_infection");
    for (const auto& step : transcript.steps) CHECK(step.audit.source == "llm_choice");

    const ScoreCard card = score_transcript(transcript, scenario);
    CHECK(card.posttest == 1);
    CHECK(card.trajectory_quality == 1.0);
    CHECK(card.combined == 1.0);
}

TEST_CASE("an uncooperative provider still yields a legal, capped episode") {
    const Scenario& scenario = mini_scenario();
    const Subtask subtask{scenario.patient_id, "common_cold", 0};
    ReplayProvider stubborn([](const ChatRequest&) {
        return std::string("The toddler is fine, goodbye.");
    });

    EpisodeConfig config;
    config.kind = AgentKind{AgentType::llm};
    config.provider = &stubborn;
    config.embeddings = &shared_embeddings();

    // Grounding repeats the same nearest action, so the episode must run into
    // the interaction cap rather than ever playing an illegal action.
    const Transcript transcript = run_episode(scenario, subtask, config);
    REQUIRE(transcript.outcome.has_value());
    CHECK(transcript.outcome->step_capped);
    CHECK_FALSE(transcript.outcome->correct);
    for (const auto& step : transcript.steps) CHECK(step.audit.source == "grounded_fallback");
    CHECK(score_transcript(transcript, scenario).posttest == 0);
}

TEST_CASE("identically seeded RL episodes replay bit for bit") {
    const Scenario& scenario = infant_scenario();
    const Subtask subtask{scenario.patient_id, "viral_infection", 2};
    const QNetwork net = random_network(44);

    auto play = [&](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        EpisodeConfig config;
        config.kind = AgentKind{AgentType::rl};
        config.net = &net;
        config.rng = &rng;
        config.embeddings = &shared_embeddings();
        config.rl_temperature = 0.7;  // genuinely stochastic policy
        return transcript_bytes(run_episode(scenario, subtask, config));
    };
    CHECK(play(123) == play(123));
    CHECK(play(123) != play(124));
}

namespace {

/// Scripted provider for the trial-loop tests: per-trial action scripts,
/// keyed off how many reflection requests have been answered so far.
class TrialScriptProvider : public ChatProvider {
public:
    explicit TrialScriptProvider(std::vector<std::vector<std::string>> scripts)
        : scripts_(std::move(scripts)) {}

    ChatResponse complete(const ChatRequest& request) override {
        requests.push_back(request);
        const std::string& system = request.messages.front().content;
        if (system.find("reviewing a finished diagnostic attempt") != std::string::npos) {
            ++reflections;
            step_ = 0;
            return {"Asking key questions leads to the right diagnosis.", "script"};
        }
        const auto& script = scripts_.at(static_cast<std::size_t>(reflections));
        return {script.at(step_++), "script"};
    }

    int reflections = 0;
    std::vector<ChatRequest> requests;

private:
    std::vector<std::vector<std::string>> scripts_;
    std::size_t step_ = 0;
};

}  // namespace

TEST_CASE("the trial loop keeps the best-scoring attempt") {
    const Scenario& scenario = infant_scenario();
    const Subtask subtask{scenario.patient_id, "teething", 0};
    EpisodeConfig config;
    config.kind = AgentKind{AgentType::llm};
    config.kind.reflective = true;
    config.embeddings = &shared_embeddings();

    SUBCASE("scores 0, 0.5, 0.25 return trial 2") {
        TrialScriptProvider provider(std::vector<std::vector<std::string>>{
            // Trial 1: no questions, wrong cause -> combined 0.
            {"suggest_solution()", "choose(a viral infection)"},
            // Trial 2: 2 of 4 key questions, right cause -> combined 0.5.
            {"ask(infant, diet)", "ask(infant, stool)", "suggest_solution()",
             "choose(teething)"},
            // Trial 3: 1 of 4 key questions, right cause -> combined 0.25.
            {"ask(infant, temperature)", "suggest_solution()", "choose(teething)"},
        });
        config.provider = &provider;
        const TrialsResult result = run_trials(scenario, subtask, config, 3);
        CHECK(result.trials_run == 3);
        CHECK(result.best_trial == 2);
        CHECK(result.best_card.combined == 0.5);
        REQUIRE(result.all_cards.size() == 3);
        CHECK(result.all_cards[0].combined == 0.0);
        CHECK(result.all_cards[1].combined == 0.5);
        CHECK(result.all_cards[2].combined == 0.25);
        CHECK(result.best_transcript.trial == 2);
        CHECK(provider.reflections == 2);  // after trials 1 and 2 only
    }
    SUBCASE("a perfect first trial stops the loop early") {
        TrialScriptProvider provider(std::vector<std::vector<std::string>>{
            {"ask(infant, diet)", "ask(infant, stool)", "ask(infant, temperature)",
             "ask(mother, medication)", "suggest_solution()", "choose(teething)"},
        });
        config.provider = &provider;
        const TrialsResult result = run_trials(scenario, subtask, config, 3);
        CHECK(result.trials_run == 1);
        CHECK(result.best_card.combined == 1.0);
        CHECK(provider.reflections == 0);
    }
    SUBCASE("reflection learnings reach the next trial's prompts") {
        TrialScriptProvider provider(std::vector<std::vector<std::string>>{
            {"suggest_solution()", "choose(a viral infection)"},
            {"suggest_solution()", "choose(teething)"},
        });
        config.provider = &provider;
        run_trials(scenario, subtask, config, 2);
        bool learning_seen = false;
        for (const auto& request : provider.requests)
            for (const auto& message : request.messages)
                if (contains(message.content,
                             "Asking key questions leads to the right diagnosis."))
                    learning_seen = true;
        CHECK(learning_seen);
    }
    SUBCASE("a none-reflective agent runs exactly one trial") {
        config.kind.reflective = false;
        TrialScriptProvider provider(std::vector<std::vector<std::string>>{
            {"suggest_solution()", "choose(a viral infection)"},
        });
        config.provider = &provider;
        const TrialsResult result = run_trials(scenario, subtask, config, 1);
        CHECK(result.trials_run == 1);
        CHECK(result.best_trial == 1);
        CHECK(provider.reflections == 0);
    }
    SUBCASE("a non-positive budget is refused") {
        TrialScriptProvider provider(std::vector<std::vector<std::string>>{});
        config.provider = &provider;
        CHECK_THROWS_AS(run_trials(scenario, subtask, config, 0), std::invalid_argument);
    }
}
