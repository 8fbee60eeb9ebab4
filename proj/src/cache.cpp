#include "lexprompt/cache.hpp"

#include "json.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>

namespace lexprompt {

using json = nlohmann::ordered_json;

std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

CompletionCache::CompletionCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return; // fresh cache

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            // Only the final line can legitimately be torn by a crash
            // mid-append; anything earlier means the file is corrupt.
            if (in.peek() == std::char_traits<char>::eof()) {
                std::cerr << "warning: cache " << path_ << ": skipping torn final line "
                          << line_no << "\n";
                break;
            }
            throw CacheError("cache " + path_ + " line " + std::to_string(line_no) +
                             ": invalid JSON");
        }
        CacheEntry entry;
        try {
            entry.key = rec.at("key").get<std::string>();
            entry.model = rec.at("model").get<std::string>();
            entry.max_new_tokens = rec.at("params").at("max_new_tokens").get<int>();
            entry.decoding = rec.at("params").at("decoding").get<std::string>();
            entry.prompt_sha = rec.at("prompt_sha").get<std::string>();
            entry.text = rec.at("text").get<std::string>();
            entry.ts = rec.value("ts", std::string());
        } catch (const json::exception& e) {
            throw CacheError("cache " + path_ + " line " + std::to_string(line_no) + ": " +
                             e.what());
        }
        auto it = entries_.find(entry.key);
        if (it != entries_.end() && it->second.text != entry.text) {
            throw CacheError("cache " + path_ + " line " + std::to_string(line_no) +
                             ": key " + entry.key + " already stored with different text");
        }
        entries_[entry.key] = std::move(entry);
    }
}

std::optional<CacheEntry> CompletionCache::get(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void CompletionCache::put(const CacheEntry& entry) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(entry.key);
    if (it != entries_.end()) {
        if (it->second.text != entry.text) {
            throw CacheError("cache " + path_ + ": refusing to overwrite key " + entry.key +
                             " with different text");
        }
        return;
    }

    auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);

    json rec;
    rec["key"] = entry.key;
    rec["model"] = entry.model;
    rec["params"] = {{"max_new_tokens", entry.max_new_tokens}, {"decoding", entry.decoding}};
    rec["prompt_sha"] = entry.prompt_sha;
    rec["text"] = entry.text;
    rec["ts"] = entry.ts;

    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw CacheError("cannot open cache file for append: " + path_);
    out << rec.dump() << "\n";
    out.flush();
    if (!out) throw CacheError("cache append failed: " + path_);

    entries_[entry.key] = entry;
}

std::size_t CompletionCache::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
}

} // namespace lexprompt
