#include "diagsim/env.hpp"

#include <algorithm>

#include <json.hpp>

namespace diagsim {

namespace {

const char* kSuggestText = "I want to suggest a solution.";
const char* kSuggestResponse = "Okay, what do you think is the most probable cause?";
const char* kPosttestResponse = "Thank you, I will try that.";

std::string without_final_period(const std::string& text) {
    if (!text.empty() && text.back() == '.') return text.substr(0, text.size() - 1);
    return text;
}

}  // namespace

Action make_ask_action(const std::string& subject, const std::string& topic) {
    Action a;
    a.kind = ActionKind::ask;
    a.subject = subject;
    a.topic = topic;
    a.text = QuestionRef{subject, topic}.action_text();
    return a;
}

Action make_suggest_action() {
    Action a;
    a.kind = ActionKind::suggest_solution;
    a.text = kSuggestText;
    return a;
}

Action make_posttest_action(const std::string& cause_id, const std::string& display_name) {
    Action a;
    a.kind = ActionKind::posttest_choice;
    a.cause_id = cause_id;
    a.text = kPosttestChoicePrefix + display_name + ".";
    return a;
}

std::string Observation::rendered() const {
    return interaction_type + "; " + selected_interaction + "; " + response;
}

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::interaction: return "interaction";
        case Phase::posttest: return "posttest";
        case Phase::terminal: return "terminal";
    }
    return "?";
}

Episode::Episode(const Scenario& scenario, const Subtask& subtask)
    : scenario_(&scenario), subtask_(subtask) {
    if (subtask.scenario_id != scenario.patient_id)
        throw EnvError("subtask refers to scenario \"" + subtask.scenario_id +
                       "\" but was given \"" + scenario.patient_id + "\"");
    const Cause* cause = scenario.find_cause(subtask.cause_id);
    if (!cause) throw EnvError("subtask refers to unknown cause \"" + subtask.cause_id + "\"");
    if (subtask.wording_index < 0 ||
        static_cast<std::size_t>(subtask.wording_index) >= scenario.wordings_per_cause())
        throw EnvError("subtask wording index " + std::to_string(subtask.wording_index) +
                       " is out of range");
    reset();
}

StepResult Episode::reset() {
    phase_ = Phase::interaction;
    history_.clear();
    asked_.clear();
    outcome_.reset();
    interactions_taken_ = 0;
    Observation opening{"Task", "Introduction", scenario_->task_description()};
    history_.push_back(opening);
    return StepResult{opening, 0.0, false, valid_actions()};
}

std::vector<Action> Episode::valid_actions() const {
    if (phase_ == Phase::terminal) throw EnvError("no valid actions in a terminal episode");
    std::vector<Action> out;
    if (phase_ == Phase::interaction) {
        for (const auto& subject : scenario_->subjects)
            for (const auto& topic : scenario_->topics_by_subject.at(subject))
                out.push_back(make_ask_action(subject, topic));
        out.push_back(make_suggest_action());
    } else {
        for (const auto& cause : scenario_->causes)
            out.push_back(make_posttest_action(cause.cause_id, cause.display_name));
    }
    return out;
}

std::string Episode::lookup_response(const QuestionRef& q) const {
    const Cause& cause = *scenario_->find_cause(subtask_.cause_id);
    if (auto it = cause.responses.find(q); it != cause.responses.end())
        return it->second.at(static_cast<std::size_t>(subtask_.wording_index));
    const auto& common = scenario_->common_answers.at(q);
    return common[static_cast<std::size_t>(subtask_.wording_index) % common.size()];
}

StepResult Episode::step(const Action& action) {
    if (phase_ == Phase::terminal) throw EnvError("step on a terminal episode");
    const auto valid = valid_actions();
    if (std::find(valid.begin(), valid.end(), action) == valid.end())
        throw EnvError("invalid action: \"" + action.text + "\"");

    StepResult result;
    switch (action.kind) {
        case ActionKind::ask: {
            QuestionRef q{action.subject, action.topic};
            result.observation =
                Observation{"Discuss", without_final_period(action.text), lookup_response(q)};
            asked_.insert(q);
            ++interactions_taken_;
            if (interactions_taken_ >= kMaxInteractions) {
                phase_ = Phase::terminal;
                outcome_ = Outcome{false, true};
                result.reward = kIncorrectReward;
            } else {
                result.reward = kStepPenalty;
            }
            break;
        }
        case ActionKind::suggest_solution: {
            result.observation =
                Observation{"Solution", without_final_period(action.text), kSuggestResponse};
            ++interactions_taken_;
            phase_ = Phase::posttest;
            result.reward = kStepPenalty;
            break;
        }
        case ActionKind::posttest_choice: {
            result.observation =
                Observation{"Posttest", without_final_period(action.text), kPosttestResponse};
            phase_ = Phase::terminal;
            const bool correct = action.cause_id == subtask_.cause_id;
            outcome_ = Outcome{correct, false};
            result.reward = correct ? kCorrectReward : kIncorrectReward;
            break;
        }
    }
    history_.push_back(result.observation);
    result.done = phase_ == Phase::terminal;
    if (!result.done) result.valid_actions = valid_actions();
    return result;
}

double Transcript::total_reward() const {
    double sum = 0.0;
    for (const auto& s : steps) sum += s.reward;
    return sum;
}

void write_transcript_jsonl(const Transcript& transcript, std::ostream& out) {
    using nlohmann::json;
    for (const auto& s : transcript.steps) {
        json rec;
        rec["step"] = s.step;
        rec["phase"] = phase_name(s.phase);
        rec["action_text"] = s.action.text;
        rec["observation_rendered"] = s.observation.rendered();
        rec["reward"] = s.reward;
        rec["done"] = s.done;
        if (!s.audit.source.empty()) {
            rec["source"] = s.audit.source;
            json cands = json::array();
            for (const auto& [text, q] : s.audit.candidates) {
                json c;
                c["action"] = text;
                if (q) c["q"] = *q;
                cands.push_back(c);
            }
            rec["candidates"] = cands;
        }
        out << rec.dump() << "\n";
    }
}

}  // namespace diagsim
