#include "diagsim/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace diagsim {

using nlohmann::json;

std::string QuestionRef::action_text() const {
    return "I want to know about the " + subject + "'s " + topic + ".";
}

std::size_t Scenario::wordings_per_cause() const {
    if (causes.empty() || causes.front().responses.empty()) return 0;
    return causes.front().responses.begin()->second.size();
}

const Cause* Scenario::find_cause(const std::string& cause_id) const {
    for (const auto& c : causes) {
        if (c.cause_id == cause_id) return &c;
    }
    return nullptr;
}

bool Scenario::is_key_question(const QuestionRef& q) const {
    return std::find(key_questions.begin(), key_questions.end(), q) != key_questions.end();
}

bool Scenario::has_question(const QuestionRef& q) const {
    auto it = topics_by_subject.find(q.subject);
    if (it == topics_by_subject.end()) return false;
    return std::find(it->second.begin(), it->second.end(), q.topic) != it->second.end();
}

std::string Scenario::task_description() const {
    return "Find the cause behind " + patient_descriptor + "'s " + problem;
}

namespace {

[[noreturn]] void fail(const std::string& origin, const std::string& message) {
    throw ValidationError(origin + ": " + message);
}

// "subject|topic" composite key used by the file format.
std::pair<std::string, std::string> split_composite_key(const std::string& key,
                                                        const std::string& origin,
                                                        const std::string& where) {
    auto bar = key.find('|');
    if (bar == std::string::npos || bar == 0 || bar + 1 == key.size())
        fail(origin, where + ": key \"" + key + "\" is not of the form \"subject|topic\"");
    return {key.substr(0, bar), key.substr(bar + 1)};
}

const json& require(const json& obj, const char* key, json::value_t type,
                    const std::string& origin, const std::string& where) {
    if (!obj.contains(key)) fail(origin, where + ": missing key \"" + key + "\"");
    const json& v = obj.at(key);
    bool ok = v.type() == type;
    if (ok && type == json::value_t::string && v.get<std::string>().empty())
        fail(origin, where + ": \"" + std::string(key) + "\" must be a non-empty string");
    if (!ok) fail(origin, where + ": \"" + std::string(key) + "\" has the wrong type");
    return v;
}

std::vector<std::string> string_list(const json& arr, const std::string& origin,
                                     const std::string& where) {
    std::vector<std::string> out;
    for (const auto& v : arr) {
        if (!v.is_string()) fail(origin, where + ": expected an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::map<QuestionRef, std::vector<std::string>> response_map(const json& obj,
                                                             const std::string& origin,
                                                             const std::string& where) {
    std::map<QuestionRef, std::vector<std::string>> out;
    for (const auto& [key, val] : obj.items()) {
        auto [subject, topic] = split_composite_key(key, origin, where);
        if (!val.is_array()) fail(origin, where + ": \"" + key + "\" must be an array of wordings");
        out[{subject, topic}] = string_list(val, origin, where + ": \"" + key + "\"");
    }
    return out;
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(origin + ": parse error: " + e.what());
    }
    if (!root.is_object()) fail(origin, "top level must be an object");

    Scenario s;
    s.patient_id = require(root, "patient_id", json::value_t::string, origin, "scenario").get<std::string>();
    s.patient_descriptor =
        require(root, "patient_descriptor", json::value_t::string, origin, "scenario").get<std::string>();
    s.problem = require(root, "problem", json::value_t::string, origin, "scenario").get<std::string>();
    s.subjects = string_list(require(root, "subjects", json::value_t::array, origin, "scenario"),
                             origin, "subjects");

    const json& topics = require(root, "topics", json::value_t::object, origin, "scenario");
    for (const auto& [subject, list] : topics.items()) {
        if (!list.is_array()) fail(origin, "topics: \"" + subject + "\" must be an array");
        s.topics_by_subject[subject] = string_list(list, origin, "topics: \"" + subject + "\"");
    }

    const json& kqs = require(root, "key_questions", json::value_t::array, origin, "scenario");
    for (const auto& kq : kqs) {
        if (!kq.is_object() || !kq.contains("subject") || !kq.contains("topic"))
            fail(origin, "key_questions: entries must be objects with \"subject\" and \"topic\"");
        s.key_questions.push_back({kq.at("subject").get<std::string>(), kq.at("topic").get<std::string>()});
    }

    const json& causes = require(root, "causes", json::value_t::array, origin, "scenario");
    for (const auto& cj : causes) {
        if (!cj.is_object()) fail(origin, "causes: entries must be objects");
        Cause c;
        c.cause_id = require(cj, "cause_id", json::value_t::string, origin, "causes").get<std::string>();
        c.display_name =
            require(cj, "display_name", json::value_t::string, origin, "cause \"" + c.cause_id + "\"").get<std::string>();
        c.responses = response_map(
            require(cj, "responses", json::value_t::object, origin, "cause \"" + c.cause_id + "\""),
            origin, "cause \"" + c.cause_id + "\" responses");
        s.causes.push_back(std::move(c));
    }

    if (root.contains("common_answers")) {
        if (!root.at("common_answers").is_object()) fail(origin, "\"common_answers\" must be an object");
        s.common_answers = response_map(root.at("common_answers"), origin, "common_answers");
    }

    validate_scenario(s, origin);
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return scenario_from_json_text(buf.str(), path);
}

void validate_scenario(const Scenario& s, const std::string& origin) {
    if (s.subjects.empty()) fail(origin, "\"subjects\" must be non-empty");
    {
        std::set<std::string> seen;
        for (const auto& subj : s.subjects)
            if (!seen.insert(subj).second) fail(origin, "duplicate subject \"" + subj + "\"");
    }
    for (const auto& subj : s.subjects) {
        auto it = s.topics_by_subject.find(subj);
        if (it == s.topics_by_subject.end() || it->second.empty())
            fail(origin, "subject \"" + subj + "\" has no topics");
        std::set<std::string> seen;
        for (const auto& t : it->second)
            if (!seen.insert(t).second)
                fail(origin, "subject \"" + subj + "\": duplicate topic \"" + t + "\"");
    }
    for (const auto& [subj, topics] : s.topics_by_subject) {
        (void)topics;
        if (std::find(s.subjects.begin(), s.subjects.end(), subj) == s.subjects.end())
            fail(origin, "topics lists unknown subject \"" + subj + "\"");
    }

    if (s.key_questions.empty()) fail(origin, "at least 1 key question is required");
    {
        std::set<QuestionRef> seen;
        for (const auto& q : s.key_questions) {
            if (!s.has_question(q))
                fail(origin, "key question (" + q.subject + ", " + q.topic +
                                 ") is not listed under topics");
            if (!seen.insert(q).second)
                fail(origin, "duplicate key question (" + q.subject + ", " + q.topic + ")");
        }
    }

    if (s.causes.size() < 2) fail(origin, "at least 2 causes are required");
    {
        std::set<std::string> seen;
        for (const auto& c : s.causes)
            if (!seen.insert(c.cause_id).second) fail(origin, "duplicate cause id \"" + c.cause_id + "\"");
    }

    std::size_t w = 0;
    bool w_known = false;
    for (const auto& c : s.causes) {
        std::size_t cause_w = 0;
        bool cause_w_known = false;
        for (const auto& [q, wordings] : c.responses) {
            if (!s.has_question(q))
                fail(origin, "cause \"" + c.cause_id + "\": response for unknown question (" +
                                 q.subject + ", " + q.topic + ")");
            if (wordings.empty())
                fail(origin, "cause \"" + c.cause_id + "\": empty wording list for (" + q.subject +
                                 ", " + q.topic + ")");
            if (!cause_w_known) {
                cause_w = wordings.size();
                cause_w_known = true;
            } else if (wordings.size() != cause_w) {
                fail(origin, "cause \"" + c.cause_id + "\": (" + q.subject + ", " + q.topic +
                                 ") has " + std::to_string(wordings.size()) +
                                 " wordings, expected " + std::to_string(cause_w));
            }
        }
        for (const auto& q : s.key_questions) {
            if (!c.responses.count(q))
                fail(origin, "cause \"" + c.cause_id + "\": missing response for key question (" +
                                 q.subject + ", " + q.topic + ")");
        }
        if (!w_known) {
            w = cause_w;
            w_known = true;
        } else if (cause_w != w) {
            fail(origin, "cause \"" + c.cause_id + "\" has " + std::to_string(cause_w) +
                             " wordings, but earlier causes have " + std::to_string(w));
        }
    }

    for (const auto& [q, wordings] : s.common_answers) {
        if (!s.has_question(q))
            fail(origin, "common_answers: unknown question (" + q.subject + ", " + q.topic + ")");
        if (wordings.empty())
            fail(origin, "common_answers: empty wording list for (" + q.subject + ", " + q.topic + ")");
    }

    // Every askable question must resolve to a response under every cause.
    for (const auto& subj : s.subjects) {
        for (const auto& topic : s.topics_by_subject.at(subj)) {
            QuestionRef q{subj, topic};
            if (s.common_answers.count(q)) continue;
            for (const auto& c : s.causes) {
                if (!c.responses.count(q))
                    fail(origin, "question (" + subj + ", " + topic +
                                     ") has no response under cause \"" + c.cause_id +
                                     "\" and no common answer");
            }
        }
    }
}

namespace {

json response_map_to_json(const std::map<QuestionRef, std::vector<std::string>>& m) {
    json obj = json::object();
    for (const auto& [q, wordings] : m) obj[q.subject + "|" + q.topic] = wordings;
    return obj;
}

}  // namespace

std::string scenario_to_json_text(const Scenario& s) {
    json root;
    root["patient_id"] = s.patient_id;
    root["patient_descriptor"] = s.patient_descriptor;
    root["problem"] = s.problem;
    root["subjects"] = s.subjects;
    json topics = json::object();
    for (const auto& [subj, list] : s.topics_by_subject) topics[subj] = list;
    root["topics"] = topics;
    json kqs = json::array();
    for (const auto& q : s.key_questions) kqs.push_back({{"subject", q.subject}, {"topic", q.topic}});
    root["key_questions"] = kqs;
    json causes = json::array();
    for (const auto& c : s.causes) {
        causes.push_back({{"cause_id", c.cause_id},
                          {"display_name", c.display_name},
                          {"responses", response_map_to_json(c.responses)}});
    }
    root["causes"] = causes;
    root["common_answers"] = response_map_to_json(s.common_answers);
    return root.dump(2) + "\n";
}

std::vector<Subtask> enumerate_subtasks(const Scenario& s) {
    std::vector<Subtask> out;
    const std::size_t w = s.wordings_per_cause();
    for (const auto& c : s.causes)
        for (std::size_t i = 0; i < w; ++i)
            out.push_back({s.patient_id, c.cause_id, static_cast<int>(i)});
    return out;
}

}  // namespace diagsim
