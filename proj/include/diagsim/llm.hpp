#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "diagsim/embed.hpp"
#include "diagsim/env.hpp"

namespace diagsim {

// ---------------------------------------------------------------------------
// Provider plumbing
// ---------------------------------------------------------------------------

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;  // non-empty; first role is "system"
    int max_tokens = 256;
    double temperature = 0.0;

    bool operator==(const ChatRequest&) const = default;
};

struct ChatResponse {
    std::string content;
    std::string provider_meta;  // opaque diagnostic string ("replay", HTTP id, ...)
};

class ProviderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One synchronous chat completion. Implementations must be safe to call
/// from several threads at once.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Stable hex digest of the request's message sequence; the lookup key for
/// replay files.
std::string request_fingerprint(const ChatRequest& request);

/// Offline provider: canned responses by fingerprint with an optional
/// rule-based fallback. Tests and replayed real runs both go through this.
class ReplayProvider : public ChatProvider {
public:
    using Fallback = std::function<std::string(const ChatRequest&)>;

    ReplayProvider() = default;
    explicit ReplayProvider(Fallback fallback) : fallback_(std::move(fallback)) {}

    // Movable despite the mutex: the canned table and fallback move, the
    // mutex is freshly constructed (moving a provider while other threads
    // still call complete() on it is a caller bug either way).
    ReplayProvider(ReplayProvider&& other) noexcept
        : canned_(std::move(other.canned_)),
          fallback_(std::move(other.fallback_)),
          calls_(other.calls_) {}
    ReplayProvider& operator=(ReplayProvider&& other) noexcept {
        canned_ = std::move(other.canned_);
        fallback_ = std::move(other.fallback_);
        calls_ = other.calls_;
        return *this;
    }

    /// Loads a line-delimited JSON replay log ({fingerprint, request, response}).
    static ReplayProvider from_file(const std::string& path);

    void add(const std::string& fingerprint, std::string content);
    void add_response(const ChatRequest& request, std::string content);
    void set_fallback(Fallback fallback) { fallback_ = std::move(fallback); }

    ChatResponse complete(const ChatRequest& request) override;

    int calls() const;

private:
    std::map<std::string, std::string> canned_;
    Fallback fallback_;
    mutable std::mutex mutex_;
    int calls_ = 0;
};

struct HttpProviderConfig {
    std::string endpoint;  // full URL of the chat-completions route
    std::string model;
    std::string api_key;        // typically from the LLM_API_KEY environment variable
    int max_retries = 3;        // transport attempts per request
    int in_flight_cap = 4;      // concurrent requests allowed
    std::string replay_log_path;  // when set, append {fingerprint, request, response} lines
};

/// Reads LLM_API_KEY; throws ProviderError when unset or empty.
std::string api_key_from_env();

class HttpChatProvider : public ChatProvider {
public:
    explicit HttpChatProvider(HttpProviderConfig config);
    ~HttpChatProvider() override;

    ChatResponse complete(const ChatRequest& request) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

enum class Speaker { agent, patient };

struct HistoryLine {
    Speaker speaker = Speaker::agent;
    std::string text;

    bool operator==(const HistoryLine&) const = default;
};

/// Everything a decision prompt is built from.
struct PromptBundle {
    std::string task_description;
    std::vector<HistoryLine> history;
    std::vector<std::string> memory;  // causal learnings from earlier trials
    std::string action_menu;

    bool operator==(const PromptBundle&) const = default;
};

/// Renders the callable actions for a phase: function signatures, their
/// descriptions, and the permissible subjects/topics or causes.
std::string format_action_menu(const Scenario& scenario, Phase phase);

/// "Answer with exactly one function call" decision prompt.
ChatRequest build_action_prompt(const PromptBundle& bundle);

/// Variant asking for the k best next actions, one call per line.
ChatRequest build_suggestion_prompt(const PromptBundle& bundle, int k);

/// Variant constraining the choice to exactly the listed calls.
ChatRequest build_choice_prompt(const PromptBundle& bundle,
                                const std::vector<std::string>& option_texts);

/// Post-trial reflection prompt: review the finished attempt and restate the
/// learnings as one causal sentence per line.
ChatRequest build_reflection_prompt(const std::string& task_description,
                                    const std::vector<HistoryLine>& history,
                                    const std::string& outcome_text,
                                    const std::vector<std::string>& memory);

/// Dialogue lines of a transcript in prompt form (actions as agent lines,
/// responses as patient lines; the opening task banner is skipped).
std::vector<HistoryLine> history_from_transcript(const Transcript& transcript);

// ---------------------------------------------------------------------------
// Output parsing and grounding
// ---------------------------------------------------------------------------

struct ExtractedCall {
    std::string name;               // lowercase: "ask" | "suggest_solution" | "choose"
    std::vector<std::string> args;  // trimmed, quotes stripped
    std::size_t position = 0;       // offset in the source text
};

/// All function-call patterns in the text, in order of appearance.
/// Case-insensitive and tolerant of surrounding prose and quoting.
std::vector<ExtractedCall> extract_calls(const std::string& text);

/// An action rendered back in call form: "ask(infant, age)",
/// "suggest_solution()", "choose(Teething)".
std::string action_call_text(const Action& action);

enum class ParseStatus { valid, invalid, unparsable };

struct ParsedAction {
    ParseStatus status = ParseStatus::unparsable;
    Action action;       // meaningful only when status == valid
    std::string detail;  // human-readable reason otherwise
};

/// Maps one extracted call onto `valid_actions`. Subjects, topics and causes
/// resolve case-insensitively; causes match by id or display name. All
/// failures are values, never exceptions.
ParsedAction resolve_call(const ExtractedCall& call, const std::vector<Action>& valid_actions);

/// resolve_call applied to the first call in `llm_output`; unparsable when
/// the text contains no call at all.
ParsedAction parse_action(const std::string& llm_output,
                          const std::vector<Action>& valid_actions);

struct GroundedChoice {
    Action action;
    int provider_calls = 0;
    bool grounded_fallback = false;  // resolved by embedding distance, not parsing
    std::string last_output;
};

/// The decision loop: query, re-prompt on invalid output with an appended
/// correction (the offending call, the reason, the menu) up to 3 attempts in
/// total, then fall back to the valid action nearest the final output in
/// embedding space. Always returns a member of `valid_actions`.
GroundedChoice choose_action_grounded(ChatProvider& provider, const PromptBundle& bundle,
                                      const std::vector<Action>& valid_actions,
                                      const EmbeddingCache& embeddings);

// ---------------------------------------------------------------------------
// Reflective memory
// ---------------------------------------------------------------------------

inline constexpr int kMaxReflectiveTrials = 3;

struct ReflectionMemory {
    std::vector<std::string> entries;  // single causal sentences
    int trial_count = 0;

    bool operator==(const ReflectionMemory&) const = default;
};

/// True when the line carries a causal connective ("is necessary for",
/// "leads to", "causes", ...).
bool is_causal_sentence(const std::string& line);

std::string reflection_memory_to_json(const ReflectionMemory& memory);
ReflectionMemory reflection_memory_from_json(const std::string& text);

struct ReflectResult {
    ReflectionMemory memory;
    bool provider_ok = true;  // false: transport failed, memory returned unchanged
};

/// Sends the finished trial plus the current entries to the provider and
/// replaces the entries with the causal sentences of the reply, incrementing
/// trial_count. Refuses (std::logic_error) once trial_count has reached
/// kMaxReflectiveTrials.
ReflectResult reflect(ChatProvider& provider, const Transcript& transcript,
                      const Scenario& scenario, const ReflectionMemory& memory);

// ---------------------------------------------------------------------------
// Scripted perfect provider
// ---------------------------------------------------------------------------

/// Answers every decision prompt the way an ideal diagnostician would: the
/// scenario's key questions in order, then a solution suggestion, then the
/// true cause. Reads the dialogue so far out of the prompt itself, so it
/// needs no shared state with the episode. One instance per subtask.
class OracleProvider : public ChatProvider {
public:
    OracleProvider(const Scenario& scenario, const Subtask& subtask);

    ChatResponse complete(const ChatRequest& request) override;

    int calls() const;

private:
    const Scenario* scenario_;
    Subtask subtask_;
    mutable std::mutex mutex_;
    int calls_ = 0;
};

}  // namespace diagsim
