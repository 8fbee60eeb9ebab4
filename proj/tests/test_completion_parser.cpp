#include "lexprompt/completion_parser.hpp"

#include "test_support.hpp"

#include "doctest.h"

#include <random>
#include <regex>

using namespace lexprompt;

namespace {

const PromptTemplate& en_tmpl() {
    return builtin_template(Language::en);
}

// Independent regular-language oracle for article extraction: one regex finds
// a citation keyword plus the run of list characters after it, a second pass
// takes every number in the run not preceded by a section mark or an opening
// parenthesis. Kept deliberately separate from the production scanner.
std::set<int> oracle_articles(const std::string& text) {
    static const std::regex citation(
        R"(\b(?:articles?|artikeln?|articolo|articoli|art\.?)\s+((?:\d|§|\(|\)|\s|,|;|&|\band\b|\bund\b|\bet\b|\boder\b|\bor\b|\bed\b|\be\b|\bou\b|\bo\b)+))",
        std::regex::icase);
    static const std::regex number(R"((§\s*|\(\s*)?(\d+))");

    std::set<int> out;
    auto begin = std::sregex_iterator(text.begin(), text.end(), citation);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const std::string run = (*it)[1].str();
        auto nbegin = std::sregex_iterator(run.begin(), run.end(), number);
        for (auto nit = nbegin; nit != std::sregex_iterator(); ++nit) {
            if ((*nit)[1].matched) continue; // section mark or paragraph parenthesis
            int value = std::stoi((*nit)[2].str());
            if (value > 0) out.insert(value);
        }
    }
    return out;
}

} // namespace

TEST_CASE("default rule sets have the documented shape") {
    for (Language lang : {Language::en, Language::de, Language::fr, Language::it}) {
        auto rules = default_rules(lang);
        REQUIRE(rules.size() >= 3);
        // letter match carries the highest priority everywhere
        const ParseRule* letter = nullptr;
        for (const auto& rule : rules)
            if (rule.kind == RuleKind::letter_match) letter = &rule;
        REQUIRE(letter != nullptr);
        for (const auto& rule : rules)
            if (rule.rule_id != letter->rule_id) CHECK(letter->priority < rule.priority);
        // unique ids
        std::set<std::string> ids;
        for (const auto& rule : rules) CHECK(ids.insert(rule.rule_id).second);
    }

    // phrase rules differ across languages
    auto phrase_ids = [](Language lang) {
        std::set<std::string> out;
        for (const auto& rule : default_rules(lang))
            if (rule.kind == RuleKind::phrase_match) out.insert(rule.rule_id);
        return out;
    };
    CHECK(phrase_ids(Language::en) != phrase_ids(Language::de));
    CHECK_FALSE(phrase_ids(Language::de).empty());
}

TEST_CASE("letter answers map through the current option assignment") {
    auto rules = default_rules(Language::en);

    auto a_yes = parse_completion("A, Yes", en_tmpl(), rules);
    CHECK(a_yes.outcome == Outcome::positive);
    CHECK(a_yes.rule_id == "letter");
    REQUIRE(a_yes.matched_span.has_value());
    CHECK(a_yes.matched_span->first == 0);

    CHECK(parse_completion("B, No", en_tmpl(), rules).outcome == Outcome::negative);
    CHECK(parse_completion("A", en_tmpl(), rules).outcome == Outcome::positive);
    CHECK(parse_completion("B", en_tmpl(), rules).outcome == Outcome::negative);
    CHECK(parse_completion("  b.", en_tmpl(), rules).outcome == Outcome::negative);
    CHECK(parse_completion("a, yes", en_tmpl(), rules).outcome == Outcome::positive);

    // swapped template reverses the letter map
    auto swapped = swap_options(en_tmpl());
    CHECK(parse_completion("B", swapped, rules).outcome == Outcome::positive);
    CHECK(parse_completion("A, No", swapped, rules).outcome == Outcome::negative);
}

TEST_CASE("letters embedded in words do not fire") {
    auto rules = default_rules(Language::en);
    CHECK(parse_completion("Answer pending", en_tmpl(), rules).outcome == Outcome::unmapped);
    CHECK(parse_completion("Because of this", en_tmpl(), rules).outcome == Outcome::unmapped);
    // sentence-initial article "A" does bind (the swap test exists for this)
    CHECK(parse_completion("A violation occurred", en_tmpl(), rules).outcome == Outcome::positive);
}

TEST_CASE("option text at the answer position maps to its own class") {
    auto rules = default_rules(Language::en);
    auto yes = parse_completion("Yes", en_tmpl(), rules);
    CHECK(yes.outcome == Outcome::positive);
    CHECK(yes.rule_id == "option_text");
    CHECK(parse_completion("No.", en_tmpl(), rules).outcome == Outcome::negative);
    CHECK(parse_completion("yes, there was a violation", en_tmpl(), rules).outcome ==
          Outcome::positive);

    // position independent under swap: the text still means what it says
    auto swapped = swap_options(en_tmpl());
    CHECK(parse_completion("Yes", swapped, rules).outcome == Outcome::positive);
    CHECK(parse_completion("No", swapped, rules).outcome == Outcome::negative);
}

TEST_CASE("option text must stand alone at the answer position") {
    auto rules = default_rules(Language::en);
    // "No" inside "Nothing" or "Note" is not an answer
    CHECK(parse_completion("Nothing in the case suggests this", en_tmpl(), rules).outcome ==
          Outcome::unmapped);
    CHECK(parse_completion("Note that the court decided", en_tmpl(), rules).outcome ==
          Outcome::unmapped);
}

TEST_CASE("the documented no-violation phrase maps to negative") {
    auto rules = default_rules(Language::en);
    auto parsed = parse_completion("There were no violations.", en_tmpl(), rules);
    CHECK(parsed.outcome == Outcome::negative);
    CHECK(parsed.rule_id == "no_violation");
    REQUIRE(parsed.matched_span.has_value());
    CHECK(parsed.matched_span->first == 11);

    // singular and mid-text occurrences
    CHECK(parse_completion("The court found that there was no violation of Article 3.", en_tmpl(),
                           rules)
              .outcome == Outcome::negative);
    // a positive finding must not trip it
    CHECK(parse_completion("There has been a violation.", en_tmpl(), rules).outcome ==
          Outcome::unmapped);
}

TEST_CASE("FSCS phrase rules fire only for their language") {
    auto de_rules = default_rules(Language::de);
    const PromptTemplate& de = builtin_template(Language::de);
    CHECK(parse_completion("Die Beschwerde wird abgewiesen.", de, de_rules).outcome ==
          Outcome::negative);
    CHECK(parse_completion("Die Beschwerde wird gutgeheissen.", de, de_rules).outcome ==
          Outcome::positive);
    // de phrases do not apply under the en template
    CHECK(parse_completion("Die Beschwerde wird abgewiesen.", en_tmpl(), de_rules).outcome ==
          Outcome::unmapped);

    auto fr_rules = default_rules(Language::fr);
    const PromptTemplate& fr = builtin_template(Language::fr);
    CHECK(parse_completion("Le recours est rejeté.", fr, fr_rules).outcome == Outcome::negative);
    CHECK(parse_completion("Le recours est admis.", fr, fr_rules).outcome == Outcome::positive);
    // "admissible" must not satisfy the word-bounded "admis"
    CHECK(parse_completion("La requête est admissible.", fr, fr_rules).outcome ==
          Outcome::unmapped);

    auto it_rules = default_rules(Language::it);
    const PromptTemplate& it = builtin_template(Language::it);
    CHECK(parse_completion("Il ricorso è respinto.", it, it_rules).outcome == Outcome::negative);
    CHECK(parse_completion("Il ricorso è accolto.", it, it_rules).outcome == Outcome::positive);
}

TEST_CASE("exam-style restatements bind to the first letter") {
    auto rules = default_rules(Language::en);
    auto parsed = parse_completion(" A, Yes\nB, No\n\nQuestion: Was there a violation?", en_tmpl(),
                                   rules);
    CHECK(parsed.outcome == Outcome::positive);
    CHECK(parsed.rule_id == "letter");

    auto b_first = parse_completion("B, No\nA, Yes", en_tmpl(), rules);
    CHECK(b_first.outcome == Outcome::negative);
}

TEST_CASE("a free continuation stays unmapped under every shipped rule") {
    const std::string completion = "The court will now consider the merits of the case.";
    auto rules = default_rules(Language::en);
    for (const auto& rule : rules) {
        CAPTURE(rule.rule_id);
        CHECK_FALSE(try_rule(rule, completion, en_tmpl()).has_value());
    }
    auto parsed = parse_completion(completion, en_tmpl(), rules);
    CHECK(parsed.outcome == Outcome::unmapped);
    CHECK(parsed.rule_id == "none");
    CHECK_FALSE(parsed.matched_span.has_value());
}

TEST_CASE("the shipped cascade is unambiguous on the taxonomy fixtures") {
    // wherever several rules fire on these, they agree on the outcome
    auto rules = default_rules(Language::en);
    std::vector<std::string> fixtures = {
        "A",
        "B, No",
        "A, Yes",
        "A, Yes. There has been a violation of Articles 3, 5 and 6.",
        "B, No. The detention was compatible with Article 5 §3 of the Convention.",
        "There were no violations.",
        "A, Yes\nB, No\n\nQuestion: Was there a violation?",
        "Yes",
        "No",
    };
    for (const auto& completion : fixtures) {
        CAPTURE(completion);
        std::set<Outcome> fired;
        const ParseRule* first_firing = nullptr;
        for (const auto& rule : rules) {
            if (auto match = try_rule(rule, completion, en_tmpl())) {
                fired.insert(match->outcome);
                if (!first_firing || rule.priority < first_firing->priority)
                    first_firing = &rule;
            }
        }
        REQUIRE(first_firing != nullptr);
        CHECK(fired.size() == 1);
        // the cascade's answer is the highest-priority firing rule's answer
        auto parsed = parse_completion(completion, en_tmpl(), rules);
        CHECK(parsed.rule_id == first_firing->rule_id);
    }

    // outside the taxonomy, conflicting rules are resolved by priority alone
    auto conflicted = parse_completion("Yes, there was no violation of Article 3.", en_tmpl(),
                                       rules);
    CHECK(conflicted.rule_id == "option_text");
    CHECK(conflicted.outcome == Outcome::positive);
}

TEST_CASE("parsing is deterministic") {
    auto rules = default_rules(Language::en);
    const std::string completion = "A, Yes. There has been a violation of Article 6.";
    auto first = parse_completion(completion, en_tmpl(), rules);
    for (int i = 0; i < 10; ++i) {
        auto again = parse_completion(completion, en_tmpl(), rules);
        CHECK(again.outcome == first.outcome);
        CHECK(again.rule_id == first.rule_id);
        CHECK(again.matched_span == first.matched_span);
    }
}

TEST_CASE("matched spans address real substrings the rule matches") {
    auto rules = default_rules(Language::en);
    std::vector<std::string> fixtures = {
        "A, Yes",
        "  B.",
        "Yes, clearly",
        "No",
        "There were no violations.",
        "It seems there was no violation of the convention",
    };
    for (const auto& completion : fixtures) {
        auto parsed = parse_completion(completion, en_tmpl(), rules);
        REQUIRE(parsed.outcome != Outcome::unmapped);
        REQUIRE(parsed.matched_span.has_value());
        auto [begin, end] = *parsed.matched_span;
        REQUIRE(begin < end);
        REQUIRE(end <= completion.size());
        std::string span_text = fold_lower(completion.substr(begin, end - begin));
        if (parsed.rule_id == "letter") {
            CHECK((span_text == "a" || span_text == "b"));
        } else if (parsed.rule_id == "option_text") {
            CHECK((span_text == "yes" || span_text == "no"));
        } else if (parsed.rule_id == "no_violation") {
            CHECK(span_text.rfind("no violation", 0) == 0);
        }
    }
}

TEST_CASE("swap coherence: letter parses flip, swap is an involution") {
    auto rules = default_rules(Language::en);
    std::mt19937 gen(20240817);
    std::uniform_int_distribution<int> letter_dist(0, 3);
    std::uniform_int_distribution<int> boundary_dist(0, 4);
    std::uniform_int_distribution<int> tail_len(0, 40);
    std::uniform_int_distribution<int> ws_len(0, 3);
    const char* letters[] = {"A", "a", "B", "b"};
    const char* boundaries[] = {",", ".", " ", "\t", ""};

    const PromptTemplate& base = en_tmpl();
    const PromptTemplate swapped = swap_options(base);
    CHECK(swap_options(swapped) == base);

    for (int i = 0; i < 1000; ++i) {
        std::string completion(std::size_t(ws_len(gen)), ' ');
        completion += letters[letter_dist(gen)];
        const char* boundary = boundaries[boundary_dist(gen)];
        completion += boundary;
        int tail = tail_len(gen);
        if (*boundary != '\0' && tail > 0) {
            completion += ' ';
            for (int j = 0; j < tail; ++j) completion += char('f' + (gen() % 10));
        }
        CAPTURE(completion);

        auto original = parse_completion(completion, base, rules);
        auto flipped = parse_completion(completion, swapped, rules);
        REQUIRE(original.rule_id == "letter");
        REQUIRE(flipped.rule_id == "letter");
        CHECK(flipped.outcome == flip(original.outcome));
        CHECK(flipped.matched_span == original.matched_span);
    }
}

TEST_CASE("rule files load, save and fingerprint stably") {
    testsupport::TempDir tmp("rules");
    auto rules = default_rules(Language::en);
    save_rules(tmp.str("en.json"), rules);
    auto loaded = load_rules(tmp.str("en.json"), Language::en);
    CHECK(loaded == rules);
    CHECK(rules_fingerprint(loaded) == rules_fingerprint(rules));

    auto de_rules = default_rules(Language::de);
    CHECK(rules_fingerprint(de_rules) != rules_fingerprint(rules));
}

TEST_CASE("duplicate rule ids are rejected on load") {
    testsupport::TempDir tmp("rules");
    testsupport::write_file(tmp.str("bad.json"), R"({"rules":[
        {"rule_id":"x","kind":"letter_match","priority":0},
        {"rule_id":"x","kind":"option_text_match","priority":1}
    ]})");
    CHECK_THROWS_AS(load_rules(tmp.str("bad.json"), Language::en), ConfigError);
}

TEST_CASE("article extraction agrees with the oracle on citation fixtures") {
    std::vector<std::string> fixtures = {
        "There has been a violation of Articles 3, 5 and 6.",
        "Article 5 §3 was violated",
        "A, Yes. There has been a violation of Article 8 and Article 13.",
        "The court cites Art. 6 of the Convention.",
        "Es liegt eine Verletzung von Artikel 8 vor.",
        "Violazione degli articoli 5 e 6.",
        "Violation des articles 5 et 8 de la Convention.",
        "Articles 2, 3, and 13 were engaged.",
        "Article 5 § 4 and Article 6 §1 apply.",
        "No article citations here at all.",
        "",
        "Start of a sentence without the keyword: 5, 6 and 7.",
        "ART. 14 taken together with Article 8",
        "article 1000 of something",
    };
    for (const auto& text : fixtures) {
        CAPTURE(text);
        auto mentions = extract_articles(text);
        CHECK(mentions.articles == oracle_articles(text));
        // every article has at least one recorded span, and spans hold digits
        std::set<int> from_spans;
        for (const auto& span : mentions.spans) {
            from_spans.insert(span.article);
            REQUIRE(span.end <= text.size());
            CHECK(std::stoi(text.substr(span.begin, span.end - span.begin)) == span.article);
        }
        CHECK(from_spans == mentions.articles);
    }
}

TEST_CASE("article extraction fixed points") {
    CHECK(extract_articles("There has been a violation of Articles 3, 5 and 6.").articles ==
          std::set<int>{3, 5, 6});
    CHECK(extract_articles("Article 5 §3 was violated").articles == std::set<int>{5});
    CHECK(extract_articles("").articles.empty());
    CHECK(extract_articles("The state of the art is advanced.").articles.empty());
}

TEST_CASE("article overlap") {
    auto mentions = [](std::set<int> articles) {
        ArticleMentions m;
        m.articles = std::move(articles);
        return m;
    };
    auto identical = article_overlap(mentions({3, 5}), {3, 5});
    CHECK(identical.exact_match);
    CHECK(identical.jaccard == 1.0);
    CHECK(identical.intersection == 2);

    auto partial = article_overlap(mentions({3}), {3, 5, 6});
    CHECK_FALSE(partial.exact_match);
    CHECK(partial.jaccard == doctest::Approx(1.0 / 3.0));
    CHECK(partial.intersection == 1);

    auto both_empty = article_overlap(mentions({}), {});
    CHECK(both_empty.exact_match);
    CHECK(both_empty.jaccard == 1.0);

    auto disjoint = article_overlap(mentions({2}), {3});
    CHECK_FALSE(disjoint.exact_match);
    CHECK(disjoint.jaccard == 0.0);
}

TEST_CASE("fold_lower preserves byte length and folds Latin-1") {
    CHECK(fold_lower("ABC") == "abc");
    CHECK(fold_lower("Réponse") == "réponse");
    CHECK(fold_lower("RÉPONSE") == "réponse");
    CHECK(fold_lower("È stata") == "è stata");
    for (const char* s : {"Mixed CASE", "Réponse", "ÀÉÎÕÜ", "no change: ×"}) {
        CHECK(fold_lower(s).size() == std::string(s).size());
    }
    // multiply sign is not a letter and stays put
    CHECK(fold_lower("×") == "×");
}
