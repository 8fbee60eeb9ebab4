#include "lexprompt/backend.hpp"

#include "lexprompt/sha256.hpp"

#include "test_support.hpp"

#include "doctest.h"

#include <thread>

using namespace lexprompt;
using testsupport::TempDir;

namespace {

RenderedPrompt fake_prompt(const std::string& doc_id, const std::string& text) {
    RenderedPrompt prompt;
    prompt.doc_id = doc_id;
    prompt.text = text;
    prompt.token_count = approx_token_counter().count(text);
    return prompt;
}

GenerationParams params_for(const std::string& model, int max_tokens = 50) {
    GenerationParams params;
    params.model_id = model;
    params.max_new_tokens = max_tokens;
    return params;
}

} // namespace

TEST_CASE("sha256 matches the reference vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // incremental == one-shot
    Sha256 h;
    h.update("abc");
    h.update("dbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq");
    CHECK(h.hex() == "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("prompt key covers model, prompt and output length") {
    auto params = params_for("m1");
    std::string base = prompt_cache_key("m1", "hello", params);
    CHECK(base == prompt_cache_key("m1", "hello", params));
    CHECK(base != prompt_cache_key("m2", "hello", params));
    CHECK(base != prompt_cache_key("m1", "hello!", params));
    auto longer = params_for("m1", 51);
    CHECK(base != prompt_cache_key("m1", "hello", longer));
}

TEST_CASE("mock backend returns scripted completions verbatim") {
    BackendDescriptor mock;
    mock.kind = BackendKind::mock;
    mock.script["d1"] = "A, Yes";
    mock.script["d2"] = "There were no violations.";
    GenerationClient client(mock, nullptr);

    auto c1 = client.generate(fake_prompt("d1", "p1"), params_for("m"));
    CHECK(c1.text == "A, Yes");
    CHECK_FALSE(c1.from_cache);
    auto c2 = client.generate(fake_prompt("d2", "p2"), params_for("m"));
    CHECK(c2.text == "There were no violations.");

    CHECK_THROWS_AS(client.generate(fake_prompt("unknown", "p3"), params_for("m")), BackendError);
}

TEST_CASE("mock backend truncates to max_new_tokens like a server would") {
    BackendDescriptor mock;
    mock.kind = BackendKind::mock;
    mock.script["*"] = "There were no violations.";
    GenerationClient client(mock, nullptr);

    auto one = client.generate(fake_prompt("d", "p"), params_for("m", 1));
    CHECK(one.text == "There");
    auto plenty = client.generate(fake_prompt("d", "p"), params_for("m", 50));
    CHECK(plenty.text == "There were no violations.");
}

TEST_CASE("truncate_whitespace_tokens") {
    CHECK(truncate_whitespace_tokens("A, Yes", 1) == "A,");
    CHECK(truncate_whitespace_tokens("A, Yes", 2) == "A, Yes");
    CHECK(truncate_whitespace_tokens("one  two\nthree", 2) == "one  two");
    CHECK(truncate_whitespace_tokens("", 5) == "");
    CHECK(truncate_whitespace_tokens("word", 0) == "");
}

TEST_CASE("second generate call is served from the cache") {
    TempDir tmp("cache");
    CompletionCache cache(tmp.str("c.jsonl"));
    BackendDescriptor mock;
    mock.kind = BackendKind::mock;
    mock.script["d1"] = "B, No";
    GenerationClient client(mock, &cache);

    auto first = client.generate(fake_prompt("d1", "prompt"), params_for("m"));
    CHECK_FALSE(first.from_cache);
    CHECK(client.backend_calls() == 1);

    auto second = client.generate(fake_prompt("d1", "prompt"), params_for("m"));
    CHECK(second.from_cache);
    CHECK(second.text == first.text);
    CHECK(second.prompt_key == first.prompt_key);
    CHECK(client.backend_calls() == 1); // no new backend call
}

TEST_CASE("replay backend answers from cache only") {
    TempDir tmp("cache");
    auto params = params_for("m");
    {
        CompletionCache cache(tmp.str("c.jsonl"));
        BackendDescriptor mock;
        mock.kind = BackendKind::mock;
        mock.script["d1"] = "A";
        GenerationClient client(mock, &cache);
        client.generate(fake_prompt("d1", "prompt"), params);
    }
    CompletionCache reopened(tmp.str("c.jsonl"));
    CHECK(reopened.size() == 1);
    BackendDescriptor replay;
    replay.kind = BackendKind::replay;
    GenerationClient client(replay, &reopened);

    auto hit = client.generate(fake_prompt("d1", "prompt"), params);
    CHECK(hit.from_cache);
    CHECK(hit.text == "A");
    CHECK(client.backend_calls() == 0);

    CHECK_THROWS_AS(client.generate(fake_prompt("d1", "other prompt"), params), BackendError);
}

TEST_CASE("cache rejects a different text under an existing key") {
    TempDir tmp("cache");
    CompletionCache cache(tmp.str("c.jsonl"));
    CacheEntry entry;
    entry.key = "k1";
    entry.model = "m";
    entry.max_new_tokens = 50;
    entry.prompt_sha = sha256_hex("p");
    entry.text = "first";
    entry.ts = iso8601_now();
    cache.put(entry);

    CHECK_NOTHROW(cache.put(entry)); // identical content: no-op
    entry.text = "second";
    CHECK_THROWS_AS(cache.put(entry), CacheError);
    CHECK(cache.get("k1")->text == "first");
}

TEST_CASE("cache survives reopen and skips a torn final line") {
    TempDir tmp("cache");
    {
        CompletionCache cache(tmp.str("c.jsonl"));
        for (int i = 0; i < 3; ++i) {
            CacheEntry entry;
            entry.key = "k" + std::to_string(i);
            entry.model = "m";
            entry.max_new_tokens = 50;
            entry.prompt_sha = sha256_hex("p");
            entry.text = "text " + std::to_string(i);
            cache.put(entry);
        }
    }
    // simulate a crash mid-append
    {
        std::ofstream out(tmp.str("c.jsonl"), std::ios::binary | std::ios::app);
        out << R"({"key":"k3","model":"m","params":{"max_new)";
    }
    CompletionCache reopened(tmp.str("c.jsonl"));
    CHECK(reopened.size() == 3);
    CHECK(reopened.get("k1")->text == "text 1");
    CHECK_FALSE(reopened.get("k3").has_value());
}

TEST_CASE("concurrent generates stay associated with their documents") {
    TempDir tmp("cache");
    CompletionCache cache(tmp.str("c.jsonl"));
    BackendDescriptor mock;
    mock.kind = BackendKind::mock;
    for (int i = 0; i < 64; ++i) mock.script["d" + std::to_string(i)] = "answer " + std::to_string(i);
    GenerationClient client(mock, &cache);

    std::vector<std::thread> threads;
    std::vector<std::string> got(64);
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            for (int i = t; i < 64; i += 8) {
                auto completion = client.generate(
                    fake_prompt("d" + std::to_string(i), "prompt " + std::to_string(i)),
                    params_for("m"));
                got[i] = completion.text;
            }
        });
    }
    for (auto& t : threads) t.join();
    for (int i = 0; i < 64; ++i) CHECK(got[i] == "answer " + std::to_string(i));
    CHECK(cache.size() == 64);
}

TEST_CASE("stop_after cuts the completion but not the cached text") {
    TempDir tmp("cache");
    CompletionCache cache(tmp.str("c.jsonl"));
    BackendDescriptor mock;
    mock.kind = BackendKind::mock;
    mock.script["d1"] = "A, Yes\nQuestion: next?";
    GenerationClient client(mock, &cache);

    auto params = params_for("m");
    params.stop_after = "\n";
    auto cut = client.generate(fake_prompt("d1", "p"), params);
    CHECK(cut.text == "A, Yes");
    // raw text is what the cache holds
    CHECK(cache.get(cut.prompt_key)->text == "A, Yes\nQuestion: next?");
    // replaying applies the same cut
    auto replayed = client.generate(fake_prompt("d1", "p"), params);
    CHECK(replayed.from_cache);
    CHECK(replayed.text == "A, Yes");
}

TEST_CASE("tokenize_remote refuses non-http backends with a fallback hint") {
    BackendDescriptor mock;
    mock.kind = BackendKind::mock;
    mock.script["*"] = "x";
    GenerationClient client(mock, nullptr);
    CHECK_THROWS_WITH_AS(client.tokenize_remote("m", "text"),
                         doctest::Contains("approx_bytes4"), BackendError);
}
