#pragma once

#include "lexprompt/types.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>

namespace lexprompt {

struct CacheEntry {
    std::string key;        // content hash of (model, prompt, params)
    std::string model;
    int max_new_tokens = 0;
    std::string decoding = "greedy";
    std::string prompt_sha; // hash of the prompt text alone
    std::string text;       // generated continuation, verbatim
    std::string ts;         // ISO-8601, informational only
};

// Append-only, content-addressed store of model completions, one JSON record
// per line. Every model output behind a reported number stays auditable in
// this file. Writes are serialized internally; storing a different text under
// an existing key is an error, never a silent overwrite.
class CompletionCache {
public:
    // Loads existing records from `path` (created on first write). A torn
    // final line from an interrupted run is skipped with a warning.
    explicit CompletionCache(std::string path);

    CompletionCache(const CompletionCache&) = delete;
    CompletionCache& operator=(const CompletionCache&) = delete;

    std::optional<CacheEntry> get(const std::string& key) const;

    // Appends and flushes. Re-inserting identical content is a no-op
    // (last-writer-wins on identical content); differing content under the
    // same key throws CacheError.
    void put(const CacheEntry& entry);

    std::size_t size() const;
    const std::string& path() const { return path_; }

private:
    std::string path_;
    mutable std::mutex mutex_;
    std::map<std::string, CacheEntry> entries_;
};

std::string iso8601_now();

} // namespace lexprompt
