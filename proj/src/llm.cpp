#include "diagsim/llm.hpp"

#include "diagsim/hashing.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

namespace diagsim {

// ---------------------------------------------------------------------------
// Provider plumbing
// ---------------------------------------------------------------------------

std::string request_fingerprint(const ChatRequest& request) {
    std::string canonical;
    for (const auto& message : request.messages) {
        canonical += message.role;
        canonical += '\x1f';
        canonical += message.content;
        canonical += '\x1e';
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
}

ReplayProvider ReplayProvider::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ProviderError(path + ": cannot open replay file");
    ReplayProvider provider;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
            const auto fingerprint = record.at("fingerprint").get<std::string>();
            const auto& response = record.at("response");
            provider.add(fingerprint, response.is_string()
                                          ? response.get<std::string>()
                                          : response.at("content").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(path + ": line " + std::to_string(line_no) +
                                ": malformed replay record: " + e.what());
        }
    }
    return provider;
}

void ReplayProvider::add(const std::string& fingerprint, std::string content) {
    std::lock_guard lock(mutex_);
    canned_[fingerprint] = std::move(content);
}

void ReplayProvider::add_response(const ChatRequest& request, std::string content) {
    add(request_fingerprint(request), std::move(content));
}

ChatResponse ReplayProvider::complete(const ChatRequest& request) {
    const std::string fingerprint = request_fingerprint(request);
    std::lock_guard lock(mutex_);
    ++calls_;
    if (auto it = canned_.find(fingerprint); it != canned_.end())
        return ChatResponse{it->second, "replay:" + fingerprint};
    if (fallback_) return ChatResponse{fallback_(request), "fallback:" + fingerprint};
    throw ProviderError("no canned response for request fingerprint " + fingerprint +
                        " and no fallback rule configured");
}

int ReplayProvider::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::string api_key_from_env() {
    const char* key = std::getenv("LLM_API_KEY");
    if (!key || !*key)
        throw ProviderError("LLM_API_KEY is not set; the http provider needs an API key");
    return key;
}

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kReflectionMarker = "reviewing a finished diagnostic attempt";

std::string join(const std::vector<std::string>& items, const char* separator) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += separator;
        out += items[i];
    }
    return out;
}

std::string to_lower(std::string text) {
    std::transform(text.begin(), text.end(), text.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return text;
}

/// Learnings + dialogue sections shared by every decision prompt.
std::string render_context(const PromptBundle& bundle) {
    std::string out;
    if (!bundle.memory.empty()) {
        out += "Learnings from previous trials:\n";
        for (const auto& entry : bundle.memory) out += "- " + entry + "\n";
        out += "\n";
    }
    out += "Dialogue so far:\n";
    if (bundle.history.empty()) {
        out += "The conversation has not started yet.\n";
    } else {
        for (const auto& line : bundle.history)
            out += (line.speaker == Speaker::agent ? "Agent: " : "Patient: ") + line.text + "\n";
    }
    return out;
}

std::string posttest_display_name(const Action& action) {
    const std::string prefix = kPosttestChoicePrefix;
    std::string name = action.text;
    if (name.rfind(prefix, 0) == 0) name.erase(0, prefix.size());
    if (!name.empty() && name.back() == '.') name.pop_back();
    return name;
}

}  // namespace

std::string format_action_menu(const Scenario& scenario, Phase phase) {
    std::ostringstream out;
    switch (phase) {
        case Phase::interaction: {
            out << "You can take one of these actions:\n";
            out << "- ask(subject, topic): ask the patient a question about the subject "
                   "related to the topic.\n";
            out << "  Valid subjects: " << join(scenario.subjects, ", ") << ".\n";
            for (const auto& subject : scenario.subjects)
                out << "  Valid topics for " << subject << ": "
                    << join(scenario.topics_by_subject.at(subject), ", ") << ".\n";
            out << "- suggest_solution(): declare that you are ready to name the most "
                   "probable cause.\n";
            return out.str();
        }
        case Phase::posttest: {
            out << "You can take one of these actions:\n";
            out << "- choose(cause): commit to the most probable cause of the problem.\n";
            std::vector<std::string> names;
            for (const auto& cause : scenario.causes) names.push_back(cause.display_name);
            out << "  Valid causes: " << join(names, ", ") << ".\n";
            return out.str();
        }
        case Phase::terminal:
            break;
    }
    throw std::invalid_argument("format_action_menu: terminal phase has no actions");
}

ChatRequest build_action_prompt(const PromptBundle& bundle) {
    ChatRequest request;
    request.messages.push_back(
        {"system", bundle.task_description + "\n\n" + bundle.action_menu +
                       "\nAnswer with exactly one function call from the menu. "
                       "Do not add anything else."});
    request.messages.push_back({"user", render_context(bundle) + "\nYour next function call:"});
    return request;
}

ChatRequest build_suggestion_prompt(const PromptBundle& bundle, int k) {
    if (k < 1) throw std::invalid_argument("build_suggestion_prompt: k must be >= 1");
    ChatRequest request;
    request.messages.push_back(
        {"system", bundle.task_description + "\n\n" + bundle.action_menu + "\nSuggest the " +
                       std::to_string(k) +
                       " best next actions as function calls from the menu, one per line, "
                       "best first. Do not add anything else."});
    request.messages.push_back({"user", render_context(bundle) + "\nYour " + std::to_string(k) +
                                            " suggested function calls:"});
    return request;
}

ChatRequest build_choice_prompt(const PromptBundle& bundle,
                                const std::vector<std::string>& option_texts) {
    if (option_texts.empty())
        throw std::invalid_argument("build_choice_prompt: no options to choose from");
    std::string system = bundle.task_description +
                         "\n\nChoose the best next action from exactly these options:\n";
    for (const auto& option : option_texts) system += "- " + option + "\n";
    system += "Answer with exactly one of the listed function calls. Do not add anything else.";
    ChatRequest request;
    request.messages.push_back({"system", std::move(system)});
    request.messages.push_back({"user", render_context(bundle) + "\nYour chosen function call:"});
    return request;
}

ChatRequest build_reflection_prompt(const std::string& task_description,
                                    const std::vector<HistoryLine>& history,
                                    const std::string& outcome_text,
                                    const std::vector<std::string>& memory) {
    std::string system = std::string("You are ") + kReflectionMarker + ". " + task_description +
                         "\nEvaluate the strategy behind the dialogue below and restate what "
                         "you learned as single-sentence causal statements such as \"X is "
                         "necessary for Y\", one per line. Reply with the learnings only.";
    std::string user;
    if (!memory.empty()) {
        user += "Learnings so far:\n";
        for (const auto& entry : memory) user += "- " + entry + "\n";
        user += "\n";
    }
    user += "Dialogue of the finished attempt:\n";
    if (history.empty()) {
        user += "(no actions were taken)\n";
    } else {
        for (const auto& line : history)
            user += (line.speaker == Speaker::agent ? "Agent: " : "Patient: ") + line.text + "\n";
    }
    user += "\nOutcome: " + outcome_text + "\n\nYour updated learnings:";
    ChatRequest request;
    request.messages.push_back({"system", std::move(system)});
    request.messages.push_back({"user", std::move(user)});
    return request;
}

std::vector<HistoryLine> history_from_transcript(const Transcript& transcript) {
    std::vector<HistoryLine> history;
    for (const auto& step : transcript.steps) {
        history.push_back({Speaker::agent, step.action.text});
        history.push_back({Speaker::patient, step.observation.response});
    }
    return history;
}

// ---------------------------------------------------------------------------
// Output parsing and grounding
// ---------------------------------------------------------------------------

namespace {

std::string trim_arg(std::string arg) {
    const auto is_trimmed = [](unsigned char c) {
        return std::isspace(c) || c == '"' || c == '\'' || c == '`';
    };
    while (!arg.empty() && is_trimmed(static_cast<unsigned char>(arg.front()))) arg.erase(0, 1);
    while (!arg.empty() && is_trimmed(static_cast<unsigned char>(arg.back()))) arg.pop_back();
    return arg;
}

}  // namespace

std::vector<ExtractedCall> extract_calls(const std::string& text) {
    static const std::regex kCallPattern(R"((ask|suggest_solution|choose)\s*\(([^()]*)\))",
                                         std::regex::icase);
    std::vector<ExtractedCall> calls;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kCallPattern);
         it != std::sregex_iterator(); ++it) {
        ExtractedCall call;
        call.name = to_lower(it->str(1));
        call.position = static_cast<std::size_t>(it->position(0));
        const std::string inside = it->str(2);
        if (call.name == "choose") {
            // A cause name may itself contain a comma; keep the argument whole.
            const std::string arg = trim_arg(inside);
            if (!arg.empty()) call.args.push_back(arg);
        } else if (call.name == "ask") {
            std::string current;
            std::vector<std::string> parts;
            for (char c : inside) {
                if (c == ',') {
                    parts.push_back(current);
                    current.clear();
                } else {
                    current.push_back(c);
                }
            }
            parts.push_back(current);
            for (auto& part : parts) {
                part = trim_arg(std::move(part));
                if (!part.empty()) call.args.push_back(part);
            }
        }
        // suggest_solution: arguments, if any, are ignored.
        calls.push_back(std::move(call));
    }
    return calls;
}

std::string action_call_text(const Action& action) {
    switch (action.kind) {
        case ActionKind::ask:
            return "ask(" + action.subject + ", " + action.topic + ")";
        case ActionKind::suggest_solution:
            return "suggest_solution()";
        case ActionKind::posttest_choice:
            return "choose(" + posttest_display_name(action) + ")";
    }
    throw std::logic_error("action_call_text: unknown action kind");
}

namespace {

std::string render_call(const ExtractedCall& call) {
    return call.name + "(" + join(call.args, ", ") + ")";
}

}  // namespace

ParsedAction resolve_call(const ExtractedCall& call, const std::vector<Action>& valid_actions) {
    if (call.name == "ask") {
        if (call.args.size() != 2)
            return {ParseStatus::invalid, {},
                    render_call(call) + ": ask takes exactly two arguments (subject, topic)"};
        const std::string subject = to_lower(call.args[0]);
        const std::string topic = to_lower(call.args[1]);
        bool subject_known = false;
        for (const auto& action : valid_actions) {
            if (action.kind != ActionKind::ask) continue;
            if (to_lower(action.subject) == subject) {
                subject_known = true;
                if (to_lower(action.topic) == topic) return {ParseStatus::valid, action, ""};
            }
        }
        if (std::none_of(valid_actions.begin(), valid_actions.end(),
                         [](const Action& a) { return a.kind == ActionKind::ask; }))
            return {ParseStatus::invalid, {},
                    render_call(call) + ": questions are not available in this phase"};
        if (!subject_known)
            return {ParseStatus::invalid, {},
                    render_call(call) + ": unknown subject \"" + call.args[0] + "\""};
        return {ParseStatus::invalid, {},
                render_call(call) + ": unknown topic \"" + call.args[1] + "\" for subject \"" +
                    call.args[0] + "\""};
    }

    if (call.name == "suggest_solution") {
        for (const auto& action : valid_actions)
            if (action.kind == ActionKind::suggest_solution)
                return {ParseStatus::valid, action, ""};
        return {ParseStatus::invalid, {},
                "suggest_solution() is not available in this phase"};
    }

    // choose
    if (call.args.empty())
        return {ParseStatus::invalid, {}, "choose(cause) needs a cause name"};
    const std::string wanted = to_lower(call.args[0]);
    bool any_choice = false;
    for (const auto& action : valid_actions) {
        if (action.kind != ActionKind::posttest_choice) continue;
        any_choice = true;
        if (to_lower(action.cause_id) == wanted ||
            to_lower(posttest_display_name(action)) == wanted)
            return {ParseStatus::valid, action, ""};
    }
    if (!any_choice)
        return {ParseStatus::invalid, {},
                render_call(call) + ": choosing a cause is only possible in the posttest"};
    return {ParseStatus::invalid, {},
            render_call(call) + ": \"" + call.args[0] + "\" is not one of the listed causes"};
}

ParsedAction parse_action(const std::string& llm_output,
                          const std::vector<Action>& valid_actions) {
    const auto calls = extract_calls(llm_output);
    if (calls.empty())
        return {ParseStatus::unparsable, {}, "no function call found in the reply"};
    return resolve_call(calls.front(), valid_actions);
}

GroundedChoice choose_action_grounded(ChatProvider& provider, const PromptBundle& bundle,
                                      const std::vector<Action>& valid_actions,
                                      const EmbeddingCache& embeddings) {
    if (valid_actions.empty())
        throw std::invalid_argument("choose_action_grounded: no valid actions");

    constexpr int kMaxAttempts = 3;
    ChatRequest request = build_action_prompt(bundle);
    GroundedChoice result;
    for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
        const ChatResponse response = provider.complete(request);
        result.provider_calls = attempt;
        result.last_output = response.content;
        const ParsedAction parsed = parse_action(response.content, valid_actions);
        if (parsed.status == ParseStatus::valid) {
            result.action = parsed.action;
            return result;
        }
        if (attempt < kMaxAttempts) {
            request.messages.push_back({"assistant", response.content});
            request.messages.push_back(
                {"user", "That was not a valid action: " + parsed.detail +
                             "\nHere is the menu again:\n" + bundle.action_menu +
                             "\nAnswer with exactly one function call from the menu."});
        }
    }

    // Still invalid after three attempts: take the valid action whose sentence
    // is nearest the final reply in embedding space.
    std::vector<SentenceVector> candidates;
    candidates.reserve(valid_actions.size());
    for (const auto& action : valid_actions) candidates.push_back(embeddings.get(action.text));
    const std::size_t best =
        nearest_index(embeddings.get(result.last_output), candidates);
    result.action = valid_actions[best];
    result.grounded_fallback = true;
    return result;
}

// ---------------------------------------------------------------------------
// Reflective memory
// ---------------------------------------------------------------------------

bool is_causal_sentence(const std::string& line) {
    static const char* kConnectives[] = {
        "is necessary for", "is essential for", "leads to", "results in",
        "causes",           "rules out",        "indicates", "suggests",
    };
    const std::string lower = to_lower(line);
    for (const char* connective : kConnectives)
        if (lower.find(connective) != std::string::npos) return true;
    return false;
}

std::string reflection_memory_to_json(const ReflectionMemory& memory) {
    nlohmann::json j{{"entries", memory.entries}, {"trial_count", memory.trial_count}};
    return j.dump();
}

ReflectionMemory reflection_memory_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ReflectionMemory memory;
        memory.entries = j.at("entries").get<std::vector<std::string>>();
        memory.trial_count = j.at("trial_count").get<int>();
        return memory;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("malformed reflection memory: ") + e.what());
    }
}

namespace {

std::string strip_list_marker(std::string line) {
    std::size_t i = 0;
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i && j < line.size() && (line[j] == '.' || line[j] == ')')) {
        ++j;
    } else {
        j = i;
        if (j < line.size() && (line[j] == '-' || line[j] == '*')) ++j;
    }
    while (j < line.size() && std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    line.erase(0, j);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
        line.pop_back();
    return line;
}

}  // namespace

ReflectResult reflect(ChatProvider& provider, const Transcript& transcript,
                      const Scenario& scenario, const ReflectionMemory& memory) {
    if (memory.trial_count >= kMaxReflectiveTrials)
        throw std::logic_error("reflect: trial budget of " +
                               std::to_string(kMaxReflectiveTrials) + " is exhausted");
    if (!transcript.outcome)
        throw std::invalid_argument("reflect: the trial has not finished");

    std::string outcome_text;
    if (transcript.outcome->correct)
        outcome_text = "You identified the correct cause.";
    else if (transcript.outcome->step_capped)
        outcome_text = "You ran out of interactions before naming a cause.";
    else
        outcome_text = "You named the wrong cause.";

    const ChatRequest request =
        build_reflection_prompt(scenario.task_description(), history_from_transcript(transcript),
                                outcome_text, memory.entries);

    ChatResponse response;
    try {
        response = provider.complete(request);
    } catch (const ProviderError&) {
        return {memory, false};
    }

    ReflectResult result;
    result.memory.trial_count = memory.trial_count + 1;
    std::istringstream lines(response.content);
    std::string line;
    while (std::getline(lines, line)) {
        line = strip_list_marker(std::move(line));
        if (!line.empty() && is_causal_sentence(line)) result.memory.entries.push_back(line);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Scripted perfect provider
// ---------------------------------------------------------------------------

OracleProvider::OracleProvider(const Scenario& scenario, const Subtask& subtask)
    : scenario_(&scenario), subtask_(subtask) {
    if (!scenario.find_cause(subtask.cause_id))
        throw std::invalid_argument("OracleProvider: subtask cause \"" + subtask.cause_id +
                                    "\" is not part of scenario \"" + scenario.patient_id + "\"");
}

ChatResponse OracleProvider::complete(const ChatRequest& request) {
    {
        std::lock_guard lock(mutex_);
        ++calls_;
    }
    if (request.messages.empty() || request.messages.front().role != "system")
        throw ProviderError("OracleProvider: malformed request without a system message");
    const std::string& system = request.messages.front().content;
    std::string dialogue;
    for (const auto& message : request.messages)
        if (message.role == "user") dialogue += message.content + "\n";

    if (system.find(kReflectionMarker) != std::string::npos)
        return {"Asking every key question is necessary for identifying the true cause.",
                "oracle"};

    if (system.find("choose(") != std::string::npos)
        return {"choose(" + scenario_->find_cause(subtask_.cause_id)->display_name + ")",
                "oracle"};

    for (const auto& question : scenario_->key_questions)
        if (dialogue.find(question.action_text()) == std::string::npos)
            return {"ask(" + question.subject + ", " + question.topic + ")", "oracle"};
    return {"suggest_solution()", "oracle"};
}

int OracleProvider::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

}  // namespace diagsim
