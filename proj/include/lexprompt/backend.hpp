#pragma once

#include "lexprompt/cache.hpp"
#include "lexprompt/prompt_template.hpp"
#include "lexprompt/types.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace lexprompt {

enum class Decoding { greedy };

struct GenerationParams {
    std::string model_id;
    int max_new_tokens = 50;
    Decoding decoding = Decoding::greedy;
    // Applied client-side after generation (and after caching the raw text),
    // so it never perturbs the cache address.
    std::optional<std::string> stop_after;
};

// A model continuation, prompt excluded.
struct Completion {
    std::string text;
    std::string prompt_key;
    bool from_cache = false;
    std::string backend_name;
    std::optional<double> latency_ms;
    // Set when the backend returned more than max_new_tokens and the client
    // had to cut the text at the counter's token boundary.
    bool client_truncated = false;
};

enum class BackendKind { http, mock, replay };

struct BackendDescriptor {
    BackendKind kind = BackendKind::mock;
    std::string endpoint;                        // http only
    std::map<std::string, std::string> script;   // mock: doc_id or prompt_key (or "*") -> text
};

struct RetryPolicy {
    int max_attempts = 3;
    int base_delay_ms = 500;
    int max_delay_ms = 4000;

    int delay_ms(int attempt) const; // exponential backoff, 1-based attempt
};

BackendKind backend_kind_from_string(std::string_view s);
std::string to_string(BackendKind kind);

// Content address of a generation request: hash of (model_id, prompt text,
// max_new_tokens, decoding).
std::string prompt_cache_key(const std::string& model_id, const std::string& prompt_text,
                             const GenerationParams& params);

// Cache-first access to a text-generation backend with greedy decoding and
// bounded output length. Safe to call from multiple threads up to the
// runner's in-flight limit; the cache serializes its own writes.
class GenerationClient {
public:
    // `cache` may be null (one-shot use, e.g. the try subcommand).
    GenerationClient(BackendDescriptor descriptor, CompletionCache* cache,
                     RetryPolicy retry = {});

    // Returns the cached completion when the prompt key is present, otherwise
    // obtains exactly one continuation of at most max_new_tokens tokens from
    // the backend, stores it atomically and returns it. Identical inputs give
    // byte-identical text under greedy decoding.
    Completion generate(const RenderedPrompt& prompt, const GenerationParams& params);

    // The backend tokenizer's count for `text`. Only http backends carry a
    // tokenize route; other kinds (or servers without the route) raise a
    // BackendError that names the approximate-counter fallback.
    std::size_t tokenize_remote(const std::string& model_id, const std::string& text) const;

    // Token counter delegating to tokenize_remote.
    TokenCounter remote_token_counter(const std::string& model_id) const;

    std::uint64_t backend_calls() const { return backend_calls_.load(); }
    std::string name() const;
    const BackendDescriptor& descriptor() const { return descriptor_; }

private:
    std::string http_generate(const std::string& prompt_text, const GenerationParams& params,
                              const std::string& key, double& latency_ms);
    std::string mock_generate(const RenderedPrompt& prompt, const GenerationParams& params,
                              const std::string& key);

    BackendDescriptor descriptor_;
    CompletionCache* cache_;
    RetryPolicy retry_;
    mutable std::atomic<std::uint64_t> backend_calls_{0};
};

// Truncates to the first `max_tokens` whitespace-delimited tokens. Used by the
// mock backend to emulate a server honoring max_new_tokens.
std::string truncate_whitespace_tokens(const std::string& text, int max_tokens);

} // namespace lexprompt
