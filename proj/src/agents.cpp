#include "diagsim/agents.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace diagsim {

std::string agent_type_name(AgentType type) {
    switch (type) {
        case AgentType::rl: return "rl";
        case AgentType::llm: return "llm";
        case AgentType::sa_rl: return "sa_rl";
        case AgentType::da_rl: return "da_rl";
    }
    throw std::logic_error("agent_type_name: unknown agent type");
}

AgentType agent_type_from_name(const std::string& name) {
    if (name == "rl") return AgentType::rl;
    if (name == "llm") return AgentType::llm;
    if (name == "sa_rl") return AgentType::sa_rl;
    if (name == "da_rl") return AgentType::da_rl;
    throw std::invalid_argument("unknown agent \"" + name +
                                "\" (expected rl, llm, sa_rl or da_rl)");
}

std::string AgentKind::label() const {
    std::string label = agent_type_name(type);
    if (reflective) label += "_reflective";
    return label;
}

void AgentKind::validate() const {
    if (type == AgentType::rl && reflective)
        throw std::invalid_argument("the rl agent has no reflection loop");
    if (k_interaction < 1 || k_posttest < 1)
        throw std::invalid_argument("agent k values must be positive");
}

std::string decision_source_name(DecisionSource source) {
    switch (source) {
        case DecisionSource::rl_softmax: return "rl_softmax";
        case DecisionSource::llm_choice: return "llm_choice";
        case DecisionSource::grounded_fallback: return "grounded_fallback";
    }
    throw std::logic_error("decision_source_name: unknown source");
}

DecisionAudit to_audit(const Decision& decision) {
    DecisionAudit audit;
    audit.source = decision_source_name(decision.source);
    for (const auto& [action, q] : decision.candidates)
        audit.candidates.emplace_back(action.text, q);
    return audit;
}

namespace {

std::vector<double> q_values_for(const QNetwork& net, const EmbeddedState& state,
                                 const std::vector<Action>& actions,
                                 const EmbeddingCache& embeddings) {
    const auto state_z = encode_state(net, state);
    std::vector<double> qs;
    qs.reserve(actions.size());
    for (const auto& action : actions)
        qs.push_back(score_encoded(net, state_z, encode_action(net, embeddings.get(action.text))));
    return qs;
}

}  // namespace

Decision rl_decide(const QNetwork& net, const EmbeddedState& state,
                   const std::vector<Action>& valid_actions, const EmbeddingCache& embeddings,
                   double temperature, std::mt19937_64& rng) {
    if (valid_actions.empty()) throw std::invalid_argument("rl_decide: no valid actions");
    const auto qs = q_values_for(net, state, valid_actions, embeddings);
    Decision decision;
    decision.source = DecisionSource::rl_softmax;
    for (std::size_t i = 0; i < valid_actions.size(); ++i)
        decision.candidates.emplace_back(valid_actions[i], qs[i]);
    decision.chosen = valid_actions[select_action(qs, temperature, rng)];
    return decision;
}

Decision llm_decide(ChatProvider& provider, const PromptBundle& bundle,
                    const std::vector<Action>& valid_actions,
                    const EmbeddingCache& embeddings) {
    const GroundedChoice choice =
        choose_action_grounded(provider, bundle, valid_actions, embeddings);
    Decision decision;
    decision.chosen = choice.action;
    decision.source = choice.grounded_fallback ? DecisionSource::grounded_fallback
                                               : DecisionSource::llm_choice;
    for (const auto& action : valid_actions)
        decision.candidates.emplace_back(action, std::nullopt);
    return decision;
}

Decision sa_rl_decide(const QNetwork& net, ChatProvider& provider, const PromptBundle& bundle,
                      const EmbeddedState& state, const std::vector<Action>& valid_actions,
                      Phase phase, const AgentKind& kind, const EmbeddingCache& embeddings,
                      double temperature, std::mt19937_64& rng) {
    if (valid_actions.empty()) throw std::invalid_argument("sa_rl_decide: no valid actions");

    const ChatResponse response =
        provider.complete(build_suggestion_prompt(bundle, kind.k_for(phase)));

    // Parse every suggested call; ground the invalid ones to their nearest
    // valid action; deduplicate keeping first occurrences.
    std::vector<SentenceVector> action_vectors;
    action_vectors.reserve(valid_actions.size());
    for (const auto& action : valid_actions) action_vectors.push_back(embeddings.get(action.text));

    std::vector<Action> suggestions;
    for (const auto& call : extract_calls(response.content)) {
        const ParsedAction parsed = resolve_call(call, valid_actions);
        Action action;
        if (parsed.status == ParseStatus::valid) {
            action = parsed.action;
        } else {
            const std::string rendered = call.name + "(" + [&] {
                std::string joined;
                for (std::size_t i = 0; i < call.args.size(); ++i) {
                    if (i) joined += ", ";
                    joined += call.args[i];
                }
                return joined;
            }() + ")";
            action = valid_actions[nearest_index(embeddings.get(rendered), action_vectors)];
        }
        if (std::find(suggestions.begin(), suggestions.end(), action) == suggestions.end())
            suggestions.push_back(action);
    }

    if (suggestions.empty())
        return rl_decide(net, state, valid_actions, embeddings, temperature, rng);

    const auto qs = q_values_for(net, state, suggestions, embeddings);
    Decision decision;
    decision.source = DecisionSource::llm_choice;
    for (std::size_t i = 0; i < suggestions.size(); ++i)
        decision.candidates.emplace_back(suggestions[i], qs[i]);
    decision.chosen = suggestions[select_action(qs, temperature, rng)];
    return decision;
}

Decision da_rl_decide(const QNetwork& net, ChatProvider& provider, const PromptBundle& bundle,
                      const EmbeddedState& state, const std::vector<Action>& valid_actions,
                      Phase phase, const AgentKind& kind, const EmbeddingCache& embeddings) {
    if (valid_actions.empty()) throw std::invalid_argument("da_rl_decide: no valid actions");

    const auto qs = q_values_for(net, state, valid_actions, embeddings);
    std::vector<std::size_t> order(valid_actions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return qs[a] > qs[b]; });
    const std::size_t k =
        std::min(static_cast<std::size_t>(kind.k_for(phase)), valid_actions.size());

    std::vector<Action> top_actions;
    std::vector<std::string> option_texts;
    Decision decision;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& action = valid_actions[order[i]];
        top_actions.push_back(action);
        option_texts.push_back(action_call_text(action));
        decision.candidates.emplace_back(action, qs[order[i]]);
    }

    ChatRequest request = build_choice_prompt(bundle, option_texts);
    constexpr int kMaxAttempts = 3;
    for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
        const ChatResponse response = provider.complete(request);
        const ParsedAction parsed = parse_action(response.content, top_actions);
        if (parsed.status == ParseStatus::valid) {
            decision.chosen = parsed.action;
            decision.source = DecisionSource::llm_choice;
            return decision;
        }
        if (attempt < kMaxAttempts) {
            std::string correction =
                "That was not one of the listed options (" + parsed.detail +
                "). Choose exactly one of:\n";
            for (const auto& option : option_texts) correction += "- " + option + "\n";
            request.messages.push_back({"assistant", response.content});
            request.messages.push_back({"user", std::move(correction)});
        }
    }

    // Unresolved after three attempts: take the RL argmax of the offered set.
    decision.chosen = top_actions.front();
    decision.source = DecisionSource::grounded_fallback;
    return decision;
}

namespace {

void validate_config(const EpisodeConfig& config) {
    config.kind.validate();
    if (!config.embeddings) throw std::invalid_argument("run_episode: embeddings are required");
    if (config.kind.needs_network() && !config.net)
        throw std::invalid_argument("run_episode: the " + config.kind.label() +
                                    " agent needs a trained network");
    if (config.kind.needs_provider() && !config.provider)
        throw std::invalid_argument("run_episode: the " + config.kind.label() +
                                    " agent needs a chat provider");
    const bool needs_rng =
        config.kind.type == AgentType::rl || config.kind.type == AgentType::sa_rl;
    if (needs_rng && !config.rng)
        throw std::invalid_argument("run_episode: the " + config.kind.label() +
                                    " agent needs a random generator");
}

}  // namespace

Transcript run_episode(const Scenario& scenario, const Subtask& subtask,
                       const EpisodeConfig& config) {
    validate_config(config);
    const EmbeddingCache& embeddings = *config.embeddings;

    Episode episode(scenario, subtask);
    StepResult current = episode.reset();

    Transcript transcript;
    transcript.subtask = subtask;
    transcript.opening = current.observation;
    transcript.trial = config.trial;

    EmbeddedState state = make_zero_state(embeddings.dimension());
    state = update_state(state, embeddings.get(current.observation.rendered()));

    PromptBundle bundle;
    bundle.task_description = scenario.task_description();
    if (config.memory) bundle.memory = config.memory->entries;

    int step_number = 0;
    while (!current.done) {
        const Phase phase = episode.phase();
        const std::vector<Action>& valid = current.valid_actions;
        Decision decision;
        switch (config.kind.type) {
            case AgentType::rl:
                decision = rl_decide(*config.net, state, valid, embeddings,
                                     config.rl_temperature, *config.rng);
                break;
            case AgentType::llm:
                bundle.action_menu = format_action_menu(scenario, phase);
                decision = llm_decide(*config.provider, bundle, valid, embeddings);
                break;
            case AgentType::sa_rl:
                bundle.action_menu = format_action_menu(scenario, phase);
                decision = sa_rl_decide(*config.net, *config.provider, bundle, state, valid,
                                        phase, config.kind, embeddings, config.rl_temperature,
                                        *config.rng);
                break;
            case AgentType::da_rl:
                bundle.action_menu = format_action_menu(scenario, phase);
                decision = da_rl_decide(*config.net, *config.provider, bundle, state, valid,
                                        phase, config.kind, embeddings);
                break;
        }

        current = episode.step(decision.chosen);

        TranscriptStep step;
        step.step = ++step_number;
        step.phase = phase;
        step.action = decision.chosen;
        step.observation = current.observation;
        step.reward = current.reward;
        step.done = current.done;
        step.audit = to_audit(decision);
        transcript.steps.push_back(std::move(step));

        state = update_state(state, embeddings.get(current.observation.rendered()));
        bundle.history.push_back({Speaker::agent, decision.chosen.text});
        bundle.history.push_back({Speaker::patient, current.observation.response});
    }

    transcript.outcome = episode.outcome();
    return transcript;
}

TrialsResult run_trials(const Scenario& scenario, const Subtask& subtask, EpisodeConfig config,
                        int max_trials) {
    if (max_trials < 1) throw std::invalid_argument("run_trials: max_trials must be >= 1");

    TrialsResult result;
    ReflectionMemory memory;
    for (int trial = 1; trial <= max_trials; ++trial) {
        config.trial = trial;
        config.memory = &memory;
        Transcript transcript = run_episode(scenario, subtask, config);
        ScoreCard card = score_transcript(transcript, scenario);
        result.all_cards.push_back(card);
        result.trials_run = trial;

        if (trial == 1 || card.combined > result.best_card.combined) {
            result.best_transcript = std::move(transcript);
            result.best_card = card;
            result.best_trial = trial;
            if (card.combined == 1.0) break;  // cannot improve
        }

        if (trial < max_trials && config.kind.reflective) {
            const ReflectResult reflected =
                reflect(*config.provider, trial == result.best_trial ? result.best_transcript
                                                                     : transcript,
                        scenario, memory);
            if (reflected.provider_ok) memory = reflected.memory;
        }
    }
    return result;
}

}  // namespace diagsim
