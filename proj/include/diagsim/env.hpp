#pragma once

#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "diagsim/scenario.hpp"

namespace diagsim {

// Interaction budget before an episode is cut off as failed.
inline constexpr int kMaxInteractions = 40;

inline constexpr double kStepPenalty = -0.01;
inline constexpr double kCorrectReward = 1.0;
inline constexpr double kIncorrectReward = -1.0;

/// Posttest choice sentences are this prefix + the cause's display name + ".".
inline constexpr const char* kPosttestChoicePrefix = "I think the most probable cause is ";

enum class ActionKind { ask, suggest_solution, posttest_choice };

struct Action {
    ActionKind kind = ActionKind::ask;
    std::string subject;   // ask
    std::string topic;     // ask
    std::string cause_id;  // posttest_choice
    std::string text;      // canonical rendering

    bool operator==(const Action&) const = default;
};

Action make_ask_action(const std::string& subject, const std::string& topic);
Action make_suggest_action();
Action make_posttest_action(const std::string& cause_id, const std::string& display_name);

struct Observation {
    std::string interaction_type;      // "Task" | "Discuss" | "Solution" | "Posttest"
    std::string selected_interaction;  // action sentence without its final period
    std::string response;

    // "Interaction type; Selected interaction; Response", bit-exact.
    std::string rendered() const;
    bool operator==(const Observation&) const = default;
};

enum class Phase { interaction, posttest, terminal };

std::string phase_name(Phase p);

struct Outcome {
    bool correct = false;
    bool step_capped = false;
    bool operator==(const Outcome&) const = default;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    std::vector<Action> valid_actions;  // empty when done
};

class EnvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The episode state machine. One owner per episode; the referenced Scenario
/// is immutable and may be shared across episodes.
class Episode {
public:
    Episode(const Scenario& scenario, const Subtask& subtask);

    StepResult reset();
    StepResult step(const Action& action);
    std::vector<Action> valid_actions() const;

    Phase phase() const { return phase_; }
    const std::vector<Observation>& history() const { return history_; }
    const std::set<QuestionRef>& asked() const { return asked_; }
    int step_count() const { return static_cast<int>(history_.size()); }
    int interactions_taken() const { return interactions_taken_; }
    const std::optional<Outcome>& outcome() const { return outcome_; }
    const Subtask& subtask() const { return subtask_; }
    const Scenario& scenario() const { return *scenario_; }

private:
    std::string lookup_response(const QuestionRef& q) const;

    const Scenario* scenario_;
    Subtask subtask_;
    Phase phase_ = Phase::interaction;
    std::vector<Observation> history_;
    std::set<QuestionRef> asked_;
    std::optional<Outcome> outcome_;
    int interactions_taken_ = 0;
};

// Per-step audit of how an action was chosen.
struct DecisionAudit {
    std::string source;  // "rl_softmax" | "llm_choice" | "grounded_fallback" | "human" | "scripted"
    std::vector<std::pair<std::string, std::optional<double>>> candidates;  // action text, Q
};

struct TranscriptStep {
    int step = 0;       // 1-based index of the action within the episode
    Phase phase = Phase::interaction;  // phase in which the action was taken
    Action action;
    Observation observation;
    double reward = 0.0;
    bool done = false;
    DecisionAudit audit;
};

/// Full episode log; the unit consumed by the metrics layer.
struct Transcript {
    Subtask subtask;
    Observation opening;
    std::vector<TranscriptStep> steps;
    std::optional<Outcome> outcome;
    int trial = 1;

    double total_reward() const;
};

/// Line-delimited JSON, one record per step:
/// {step, phase, action_text, observation_rendered, reward, done, source, candidates}
void write_transcript_jsonl(const Transcript& transcript, std::ostream& out);

}  // namespace diagsim
