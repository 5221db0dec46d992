#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace diagsim {

/// A (subject, topic) pair identifying one patient inquiry.
struct QuestionRef {
    std::string subject;
    std::string topic;

    auto operator<=>(const QuestionRef&) const = default;

    /// Canonical sentence used as the action text for asking this question.
    std::string action_text() const;
};

struct Cause {
    std::string cause_id;
    std::string display_name;
    // Wording lists per question. All lists of one cause have the same length W;
    // wording index w selects a consistent phrasing variant across questions.
    std::map<QuestionRef, std::vector<std::string>> responses;

    bool operator==(const Cause&) const = default;
};

struct Scenario {
    std::string patient_id;
    std::string patient_descriptor;  // short noun phrase with article, e.g. "the infant"
    std::string problem;
    std::vector<std::string> subjects;  // declared order drives action enumeration
    std::map<std::string, std::vector<std::string>> topics_by_subject;
    std::vector<QuestionRef> key_questions;
    std::vector<Cause> causes;
    // Cause-independent answers for questions outside a cause's response table.
    std::map<QuestionRef, std::vector<std::string>> common_answers;

    bool operator==(const Scenario&) const = default;

    /// Number of wordings W shared by every cause.
    std::size_t wordings_per_cause() const;
    const Cause* find_cause(const std::string& cause_id) const;
    bool is_key_question(const QuestionRef& q) const;
    bool has_question(const QuestionRef& q) const;
    /// "Find the cause behind {patient_descriptor}'s {problem}"
    std::string task_description() const;
};

/// One (cause, wording) pair of a scenario; the unit of splitting and evaluation.
struct Subtask {
    std::string scenario_id;
    std::string cause_id;
    int wording_index = 0;

    auto operator<=>(const Subtask&) const = default;
};

/// Raised when a scenario file is malformed or violates an invariant.
/// The message names the offending file and the first violated rule.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Scenario load_scenario(const std::string& path);
Scenario scenario_from_json_text(const std::string& text, const std::string& origin);
std::string scenario_to_json_text(const Scenario& scenario);
void validate_scenario(const Scenario& scenario, const std::string& origin);

/// All (cause, wording) pairs, in declared cause order, wording ascending.
std::vector<Subtask> enumerate_subtasks(const Scenario& scenario);

}  // namespace diagsim
