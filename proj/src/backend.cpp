#include "lexprompt/backend.hpp"

#include "lexprompt/sha256.hpp"

#include "httplib.h"
#include "json.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>

namespace lexprompt {

using json = nlohmann::ordered_json;

int RetryPolicy::delay_ms(int attempt) const {
    std::int64_t delay = std::int64_t(base_delay_ms) << (attempt - 1);
    if (delay > max_delay_ms) delay = max_delay_ms;
    return int(delay);
}

BackendKind backend_kind_from_string(std::string_view s) {
    if (s == "http") return BackendKind::http;
    if (s == "mock") return BackendKind::mock;
    if (s == "replay") return BackendKind::replay;
    throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

std::string to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::http: return "http";
        case BackendKind::mock: return "mock";
        case BackendKind::replay: return "replay";
    }
    return "mock";
}

std::string prompt_cache_key(const std::string& model_id, const std::string& prompt_text,
                             const GenerationParams& params) {
    Sha256 h;
    h.update(model_id);
    h.update("\x1f");
    h.update(prompt_text);
    h.update("\x1f");
    h.update(std::to_string(params.max_new_tokens));
    h.update("\x1f");
    h.update("greedy");
    return h.hex();
}

std::string truncate_whitespace_tokens(const std::string& text, int max_tokens) {
    if (max_tokens < 0) return text;
    int tokens = 0;
    bool in_token = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        bool ws = std::isspace(static_cast<unsigned char>(text[i])) != 0;
        if (!ws && !in_token) {
            if (tokens == max_tokens) {
                std::size_t end = i;
                while (end > 0 && std::isspace(static_cast<unsigned char>(text[end - 1])))
                    --end;
                return text.substr(0, end);
            }
            ++tokens;
        }
        in_token = !ws;
    }
    return text;
}

namespace {

// Parses "http://host:port[/path]" for httplib, which wants host/port split
// from the path prefix.
struct ParsedEndpoint {
    std::string scheme_host_port;
    std::string path_prefix;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = endpoint.find('/', host_start);
    if (path_start == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, path_start), prefix};
}

std::string decoding_to_string(Decoding) {
    return "greedy";
}

} // namespace

GenerationClient::GenerationClient(BackendDescriptor descriptor, CompletionCache* cache,
                                   RetryPolicy retry)
    : descriptor_(std::move(descriptor)), cache_(cache), retry_(retry) {
    if (descriptor_.kind == BackendKind::http && descriptor_.endpoint.empty())
        throw ConfigError("http backend requires an endpoint");
    if (descriptor_.kind == BackendKind::mock && descriptor_.script.empty())
        throw ConfigError("mock backend requires a script");
    if (descriptor_.kind == BackendKind::replay && cache_ == nullptr)
        throw ConfigError("replay backend requires a cache");
}

std::string GenerationClient::name() const {
    if (descriptor_.kind == BackendKind::http) return "http:" + descriptor_.endpoint;
    return to_string(descriptor_.kind);
}

std::string GenerationClient::http_generate(const std::string& prompt_text,
                                            const GenerationParams& params,
                                            const std::string& key, double& latency_ms) {
    auto ep = parse_endpoint(descriptor_.endpoint);
    json body;
    body["model"] = params.model_id;
    body["prompt"] = prompt_text;
    body["max_new_tokens"] = params.max_new_tokens;
    body["decoding"] = decoding_to_string(params.decoding);
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        if (attempt > 1)
            std::this_thread::sleep_for(std::chrono::milliseconds(retry_.delay_ms(attempt - 1)));

        httplib::Client cli(ep.scheme_host_port);
        cli.set_connection_timeout(10, 0);
        cli.set_read_timeout(600, 0); // long documents mean slow generations
        auto start = std::chrono::steady_clock::now();
        ++backend_calls_;
        auto res = cli.Post(ep.path_prefix + "/generate", payload, "application/json");
        latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();

        if (!res) {
            last_error = "connection to " + descriptor_.endpoint +
                         " failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500 || res->status == 429 || res->status == 408) {
            last_error = "server returned status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw BackendError("generate failed with status " + std::to_string(res->status) +
                                   ": " + res->body,
                               /*retryable=*/false, key);
        }

        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error&) {
            throw BackendError("malformed backend response: not JSON", /*retryable=*/false, key);
        }
        if (!reply.contains("text") || !reply["text"].is_string()) {
            throw BackendError("malformed backend response: missing 'text' field",
                               /*retryable=*/false, key);
        }
        return reply["text"].get<std::string>();
    }
    throw BackendError("generate failed after " + std::to_string(retry_.max_attempts) +
                           " attempts: " + last_error,
                       /*retryable=*/true, key);
}

std::string GenerationClient::mock_generate(const RenderedPrompt& prompt,
                                            const GenerationParams& params,
                                            const std::string& key) {
    ++backend_calls_;
    auto it = descriptor_.script.find(prompt.doc_id);
    if (it == descriptor_.script.end()) it = descriptor_.script.find(key);
    if (it == descriptor_.script.end()) it = descriptor_.script.find("*");
    if (it == descriptor_.script.end()) {
        throw BackendError("mock backend has no scripted completion for doc '" + prompt.doc_id +
                               "'",
                           /*retryable=*/false, key);
    }
    // The mock plays a server that honors max_new_tokens, with whitespace
    // tokenization.
    return truncate_whitespace_tokens(it->second, params.max_new_tokens);
}

Completion GenerationClient::generate(const RenderedPrompt& prompt,
                                      const GenerationParams& params) {
    if (params.max_new_tokens < 1)
        throw ConfigError("max_new_tokens must be >= 1");

    const std::string key = prompt_cache_key(params.model_id, prompt.text, params);

    auto finish = [&](std::string text, bool from_cache,
                      std::optional<double> latency) -> Completion {
        Completion completion;
        completion.prompt_key = key;
        completion.from_cache = from_cache;
        completion.backend_name = name();
        completion.latency_ms = latency;
        if (params.stop_after) {
            auto pos = text.find(*params.stop_after);
            if (pos != std::string::npos) text.resize(pos);
        }
        completion.text = std::move(text);
        return completion;
    };

    if (cache_) {
        if (auto hit = cache_->get(key)) return finish(hit->text, true, std::nullopt);
    }

    std::string raw;
    std::optional<double> latency;
    bool client_truncated = false;
    switch (descriptor_.kind) {
        case BackendKind::replay:
            throw BackendError("replay backend: no cached completion for doc '" + prompt.doc_id +
                                   "' (key " + key + ")",
                               /*retryable=*/false, key);
        case BackendKind::mock:
            raw = mock_generate(prompt, params, key);
            break;
        case BackendKind::http: {
            double ms = 0.0;
            raw = http_generate(prompt.text, params, key, ms);
            latency = ms;
            // Guard against servers that ignore max_new_tokens: cut at the
            // approximate counter's token boundary and flag it.
            TokenCounter approx = approx_token_counter();
            if (approx.count(raw) > std::size_t(params.max_new_tokens)) {
                std::size_t keep = std::size_t(params.max_new_tokens) * 4;
                while (keep > 0 && (static_cast<unsigned char>(raw[keep]) & 0xC0) == 0x80) --keep;
                raw.resize(keep);
                client_truncated = true;
            }
            break;
        }
    }

    if (cache_) {
        CacheEntry entry;
        entry.key = key;
        entry.model = params.model_id;
        entry.max_new_tokens = params.max_new_tokens;
        entry.decoding = decoding_to_string(params.decoding);
        entry.prompt_sha = sha256_hex(prompt.text);
        entry.text = raw;
        entry.ts = iso8601_now();
        cache_->put(entry);
    }

    Completion completion = finish(std::move(raw), false, latency);
    completion.client_truncated = client_truncated;
    return completion;
}

std::size_t GenerationClient::tokenize_remote(const std::string& model_id,
                                              const std::string& text) const {
    if (descriptor_.kind != BackendKind::http) {
        throw BackendError("tokenize requires an http backend; fall back to the approximate "
                           "counter (approx_bytes4)",
                           /*retryable=*/false);
    }
    auto ep = parse_endpoint(descriptor_.endpoint);
    json body;
    body["model"] = model_id;
    body["text"] = text;

    httplib::Client cli(ep.scheme_host_port);
    cli.set_connection_timeout(10, 0);
    cli.set_read_timeout(60, 0);
    ++backend_calls_;
    auto res = cli.Post(ep.path_prefix + "/tokenize", body.dump(), "application/json");
    if (!res || res->status == 404) {
        throw BackendError("tokenize route unsupported by " + descriptor_.endpoint +
                               "; fall back to the approximate counter (approx_bytes4)",
                           /*retryable=*/false);
    }
    if (res->status != 200) {
        throw BackendError("tokenize failed with status " + std::to_string(res->status),
                           /*retryable=*/res->status >= 500);
    }
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error&) {
        throw BackendError("malformed tokenize response: not JSON", /*retryable=*/false);
    }
    if (!reply.contains("count") || !reply["count"].is_number_integer()) {
        throw BackendError("malformed tokenize response: missing 'count'", /*retryable=*/false);
    }
    auto count = reply["count"].get<std::int64_t>();
    if (count < 0) throw BackendError("malformed tokenize response: negative count", false);
    return std::size_t(count);
}

TokenCounter GenerationClient::remote_token_counter(const std::string& model_id) const {
    return {"remote:" + model_id, [this, model_id](std::string_view text) {
                if (text.empty()) return std::size_t(0);
                return tokenize_remote(model_id, std::string(text));
            }};
}

} // namespace lexprompt
