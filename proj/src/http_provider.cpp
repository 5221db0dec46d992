#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "diagsim/llm.hpp"

#include <chrono>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace diagsim {

namespace {

struct ParsedEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;  // leading slash
};

ParsedEndpoint parse_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ProviderError("http provider endpoint \"" + url + "\" has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

nlohmann::json request_to_json(const ChatRequest& request, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& message : request.messages)
        messages.push_back({{"role", message.role}, {"content", message.content}});
    nlohmann::json body{{"messages", std::move(messages)},
                        {"max_tokens", request.max_tokens},
                        {"temperature", request.temperature}};
    if (!model.empty()) body["model"] = model;
    return body;
}

}  // namespace

struct HttpChatProvider::Impl {
    HttpProviderConfig config;
    ParsedEndpoint endpoint;
    std::counting_semaphore<256> in_flight;
    std::mutex log_mutex;

    explicit Impl(HttpProviderConfig cfg)
        : config(std::move(cfg)),
          endpoint(parse_endpoint(config.endpoint)),
          in_flight(config.in_flight_cap) {}

    void append_replay_record(const ChatRequest& request, const ChatResponse& response) {
        if (config.replay_log_path.empty()) return;
        nlohmann::json record{{"fingerprint", request_fingerprint(request)},
                              {"request", request_to_json(request, config.model)},
                              {"response", {{"content", response.content}}}};
        std::lock_guard lock(log_mutex);
        std::ofstream out(config.replay_log_path, std::ios::app);
        if (!out)
            throw ProviderError(config.replay_log_path + ": cannot append to replay log");
        out << record.dump() << '\n';
    }
};

HttpChatProvider::HttpChatProvider(HttpProviderConfig config) {
    if (config.endpoint.empty())
        throw ProviderError("http provider needs an endpoint URL");
    if (config.max_retries < 1 || config.in_flight_cap < 1 || config.in_flight_cap > 256)
        throw ProviderError("http provider: max_retries must be >= 1 and in_flight_cap in 1..256");
    impl_ = std::make_unique<Impl>(std::move(config));
}

HttpChatProvider::~HttpChatProvider() = default;

ChatResponse HttpChatProvider::complete(const ChatRequest& request) {
    impl_->in_flight.acquire();
    struct Release {
        std::counting_semaphore<256>* sem;
        ~Release() { sem->release(); }
    } release{&impl_->in_flight};

    const std::string body = request_to_json(request, impl_->config.model).dump();
    std::string last_error;
    for (int attempt = 1; attempt <= impl_->config.max_retries; ++attempt) {
        if (attempt > 1) {
            // 250ms, 1s, 4s, ... between attempts.
            const auto backoff = std::chrono::milliseconds(250) * (1 << (2 * (attempt - 2)));
            std::this_thread::sleep_for(backoff);
        }

        httplib::Client client(impl_->endpoint.base);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(120, 0);
        client.set_default_headers(
            {{"Authorization", "Bearer " + impl_->config.api_key}});
        auto res = client.Post(impl_->endpoint.path, body, "application/json");

        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error: HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw ProviderError("http provider: HTTP " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 300));

        try {
            const auto json = nlohmann::json::parse(res->body);
            ChatResponse response;
            response.content =
                json.at("choices").at(0).at("message").at("content").get<std::string>();
            response.provider_meta = json.value("id", "http");
            impl_->append_replay_record(request, response);
            return response;
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(std::string("http provider: malformed response body: ") +
                                e.what());
        }
    }
    throw ProviderError("http provider: request failed after " +
                        std::to_string(impl_->config.max_retries) + " attempts; last " +
                        last_error);
}

}  // namespace diagsim
