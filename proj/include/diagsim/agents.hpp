#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "diagsim/drrn.hpp"
#include "diagsim/embed.hpp"
#include "diagsim/env.hpp"
#include "diagsim/eval.hpp"
#include "diagsim/llm.hpp"

namespace diagsim {

enum class AgentType { rl, llm, sa_rl, da_rl };

std::string agent_type_name(AgentType type);
AgentType agent_type_from_name(const std::string& name);

struct AgentKind {
    AgentType type = AgentType::rl;
    bool reflective = false;
    int k_interaction = 5;  // LLM suggestions / RL top-k during interactions
    int k_posttest = 2;     // and during the posttest

    /// "rl", "llm", "llm_reflective", "sa_rl_reflective", ...
    std::string label() const;
    int max_trials() const { return reflective ? kMaxReflectiveTrials : 1; }
    int k_for(Phase phase) const { return phase == Phase::posttest ? k_posttest : k_interaction; }
    bool needs_network() const { return type != AgentType::llm; }
    bool needs_provider() const { return type != AgentType::rl; }

    /// The RL agent has no reflection loop; k values must be positive.
    void validate() const;
};

enum class DecisionSource { rl_softmax, llm_choice, grounded_fallback };

std::string decision_source_name(DecisionSource source);

/// One chosen action plus the candidate set it was chosen from — the audit
/// trail the containment guarantees are tested against.
struct Decision {
    Action chosen;
    std::vector<std::pair<Action, std::optional<double>>> candidates;
    DecisionSource source = DecisionSource::rl_softmax;
};

DecisionAudit to_audit(const Decision& decision);

/// Softmax sample over the Q-values of all valid actions.
Decision rl_decide(const QNetwork& net, const EmbeddedState& state,
                   const std::vector<Action>& valid_actions, const EmbeddingCache& embeddings,
                   double temperature, std::mt19937_64& rng);

/// choose_action_grounded wrapped into a Decision (candidates = all valid actions).
Decision llm_decide(ChatProvider& provider, const PromptBundle& bundle,
                    const std::vector<Action>& valid_actions, const EmbeddingCache& embeddings);

/// The LLM suggests k actions (k by phase); invalid suggestions are grounded
/// to their nearest valid action, the set deduplicated, and the result
/// softmax-sampled by Q-value. An empty suggestion set falls back to
/// rl_decide over all valid actions.
Decision sa_rl_decide(const QNetwork& net, ChatProvider& provider, const PromptBundle& bundle,
                      const EmbeddedState& state, const std::vector<Action>& valid_actions,
                      Phase phase, const AgentKind& kind, const EmbeddingCache& embeddings,
                      double temperature, std::mt19937_64& rng);

/// The RL policy's top-k actions by Q-value (ties by action order) are put to
/// the LLM to choose from, with up to 3 parse attempts; afterwards the
/// highest-Q candidate is taken as a grounded fallback.
Decision da_rl_decide(const QNetwork& net, ChatProvider& provider, const PromptBundle& bundle,
                      const EmbeddedState& state, const std::vector<Action>& valid_actions,
                      Phase phase, const AgentKind& kind, const EmbeddingCache& embeddings);

/// Everything one episode run needs; which fields are required depends on the
/// agent kind (validated at the start of run_episode).
struct EpisodeConfig {
    AgentKind kind;
    const QNetwork* net = nullptr;        // all but the plain LLM agent
    ChatProvider* provider = nullptr;     // all but the plain RL agent
    const EmbeddingCache* embeddings = nullptr;  // always
    std::mt19937_64* rng = nullptr;       // rl and sa_rl sampling
    double rl_temperature = 0.001;        // evaluation-time softmax floor
    const ReflectionMemory* memory = nullptr;  // learnings shown in prompts
    int trial = 1;
};

/// Plays one full episode with the configured agent, folding every
/// observation (opening included) into the additive embedded state, and
/// returns the transcript with per-step decision audits.
Transcript run_episode(const Scenario& scenario, const Subtask& subtask,
                       const EpisodeConfig& config);

struct TrialsResult {
    Transcript best_transcript;
    ScoreCard best_card;
    int best_trial = 1;
    int trials_run = 0;
    std::vector<ScoreCard> all_cards;  // one per trial, in order
};

/// Runs up to max_trials episodes, reflecting between trials for reflective
/// agents, and returns the trial with the highest combined score (ties to
/// the earliest). A perfect combined score stops the loop early.
TrialsResult run_trials(const Scenario& scenario, const Subtask& subtask, EpisodeConfig config,
                        int max_trials);

}  // namespace diagsim
