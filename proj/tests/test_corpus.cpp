#include "lexprompt/corpus.hpp"

#include "test_support.hpp"

#include "doctest.h"

#include <algorithm>
#include <random>

using namespace lexprompt;
using testsupport::TempDir;
using testsupport::write_file;

TEST_CASE("load_corpus returns records in file order") {
    TempDir tmp("corpus");
    write_file(tmp.str("c.jsonl"),
               R"({"id":"a","language":"en","text":"first","label":"positive","split":"test"})"
               "\n"
               R"({"id":"b","language":"en","text":"second","label":"negative","split":"test"})"
               "\n"
               R"({"id":"c","language":"en","text":"third","label":"positive","split":"test"})"
               "\n");
    auto docs = load_corpus(tmp.str("c.jsonl"), Split::test);
    REQUIRE(docs.size() == 3);
    CHECK(docs[0].id == "a");
    CHECK(docs[1].id == "b");
    CHECK(docs[2].id == "c");
    CHECK(docs[0].gold_label == Label::positive);
    CHECK(docs[1].text == "second");
}

TEST_CASE("load_corpus filters split and language") {
    TempDir tmp("corpus");
    write_file(tmp.str("c.jsonl"),
               R"({"id":"d1","language":"de","text":"x","label":"positive","split":"test"})"
               "\n"
               R"({"id":"f1","language":"fr","text":"x","label":"negative","split":"test"})"
               "\n"
               R"({"id":"i1","language":"it","text":"x","label":"positive","split":"test"})"
               "\n"
               R"({"id":"d2","language":"de","text":"x","label":"negative","split":"validation"})"
               "\n");
    auto de_docs = load_corpus(tmp.str("c.jsonl"), Split::test, Language::de);
    REQUIRE(de_docs.size() == 1);
    CHECK(de_docs[0].id == "d1");

    auto all_test = load_corpus(tmp.str("c.jsonl"), Split::test);
    CHECK(all_test.size() == 3);
}

TEST_CASE("load_corpus names the line of a malformed record") {
    TempDir tmp("corpus");

    SUBCASE("empty text") {
        write_file(tmp.str("c.jsonl"),
                   R"({"id":"a","language":"en","text":"ok","label":"positive","split":"test"})"
                   "\n"
                   R"({"id":"b","language":"en","text":"","label":"positive","split":"test"})"
                   "\n");
        CHECK_THROWS_WITH_AS(load_corpus(tmp.str("c.jsonl"), Split::test),
                             doctest::Contains("line 2"), CorpusError);
    }
    SUBCASE("missing field") {
        write_file(tmp.str("c.jsonl"),
                   R"({"id":"a","language":"en","label":"positive","split":"test"})"
                   "\n");
        CHECK_THROWS_WITH_AS(load_corpus(tmp.str("c.jsonl"), Split::test),
                             doctest::Contains("'text'"), CorpusError);
    }
    SUBCASE("invalid json") {
        write_file(tmp.str("c.jsonl"), "{not json\n");
        CHECK_THROWS_AS(load_corpus(tmp.str("c.jsonl"), Split::test), CorpusError);
    }
    SUBCASE("label inconsistent with articles") {
        write_file(
            tmp.str("c.jsonl"),
            R"({"id":"a","language":"en","text":"x","label":"negative","articles":[3,5],"split":"test"})"
            "\n");
        CHECK_THROWS_WITH_AS(load_corpus(tmp.str("c.jsonl"), Split::test),
                             doctest::Contains("inconsistent"), CorpusError);
    }
}

TEST_CASE("load_corpus reports duplicate ids with both lines") {
    TempDir tmp("corpus");
    write_file(tmp.str("c.jsonl"),
               R"({"id":"a","language":"en","text":"x","label":"positive","split":"test"})"
               "\n"
               R"({"id":"b","language":"en","text":"x","label":"positive","split":"test"})"
               "\n"
               R"({"id":"a","language":"en","text":"y","label":"negative","split":"test"})"
               "\n");
    try {
        load_corpus(tmp.str("c.jsonl"), Split::test);
        FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("line 1") != std::string::npos);
        CHECK(msg.find("'a'") != std::string::npos);
    }
}

TEST_CASE("duplicate ids in different splits are allowed") {
    TempDir tmp("corpus");
    write_file(tmp.str("c.jsonl"),
               R"({"id":"a","language":"en","text":"x","label":"positive","split":"test"})"
               "\n"
               R"({"id":"a","language":"en","text":"x","label":"positive","split":"train"})"
               "\n");
    CHECK(load_corpus(tmp.str("c.jsonl"), Split::test).size() == 1);
}

TEST_CASE("binarize_echr") {
    CHECK(binarize_echr({}) == Label::negative);
    CHECK(binarize_echr({3}) == Label::positive);
    CHECK(binarize_echr({2, 3, 5, 6, 8}) == Label::positive);
}

TEST_CASE("corpus round-trips through the writer") {
    TempDir tmp("corpus");
    auto docs = testsupport::synthetic_docs(3, 2, Split::validation);
    docs[0].gold_articles = std::set<int>{3, 5};
    docs[3].gold_articles = std::set<int>{};
    docs[1].text = "multi\nline\ntext with \"quotes\" and é";

    write_corpus(tmp.str("out.jsonl"), docs);
    auto loaded = load_corpus(tmp.str("out.jsonl"), Split::validation);
    CHECK(loaded == docs);
}

TEST_CASE("gold articles agree with binarization for every loaded doc") {
    TempDir tmp("corpus");
    write_file(
        tmp.str("c.jsonl"),
        R"({"id":"a","language":"en","text":"x","label":"positive","articles":[6],"split":"test"})"
        "\n"
        R"({"id":"b","language":"en","text":"x","label":"negative","articles":[],"split":"test"})"
        "\n");
    auto docs = load_corpus(tmp.str("c.jsonl"), Split::test);
    for (const auto& doc : docs) {
        REQUIRE(doc.gold_articles.has_value());
        CHECK(binarize_echr(*doc.gold_articles) == doc.gold_label);
    }
}

TEST_CASE("distribution matches the ECHR split fractions") {
    SUBCASE("825/175") {
        auto docs = testsupport::synthetic_docs(825, 175, Split::validation);
        auto stats = distribution(docs);
        CHECK(stats.n == 1000);
        CHECK(stats.p_majority == doctest::Approx(0.825).epsilon(1e-12));
        CHECK(stats.majority_label == Label::positive);
        CHECK_FALSE(stats.tie);
    }
    SUBCASE("847/153") {
        auto docs = testsupport::synthetic_docs(847, 153, Split::test);
        auto stats = distribution(docs);
        CHECK(stats.p_majority == doctest::Approx(0.847).epsilon(1e-12));
    }
    SUBCASE("tie resolves to positive and is flagged") {
        auto docs = testsupport::synthetic_docs(1, 1, Split::test);
        auto stats = distribution(docs);
        CHECK(stats.p_majority == 0.5);
        CHECK(stats.majority_label == Label::positive);
        CHECK(stats.tie);
    }
    SUBCASE("empty input is an error") {
        std::vector<CaseDocument> none;
        CHECK_THROWS_AS(distribution(none), std::invalid_argument);
    }
}

TEST_CASE("distribution is permutation-invariant") {
    auto docs = testsupport::synthetic_docs(7, 13, Split::test);
    auto base = distribution(docs);
    std::mt19937 gen(42);
    for (int round = 0; round < 20; ++round) {
        std::shuffle(docs.begin(), docs.end(), gen);
        auto stats = distribution(docs);
        CHECK(stats.n == base.n);
        CHECK(stats.positive_count == base.positive_count);
        CHECK(stats.p_majority == base.p_majority);
        CHECK(stats.majority_label == base.majority_label);
    }
}

TEST_CASE("unknown fields are ignored") {
    TempDir tmp("corpus");
    write_file(
        tmp.str("c.jsonl"),
        R"({"id":"a","language":"en","text":"x","label":"positive","split":"test","court":"ECtHR"})"
        "\n");
    auto docs = load_corpus(tmp.str("c.jsonl"), Split::test);
    CHECK(docs.size() == 1);
}
