#pragma once

#include "lexprompt/prompt_template.hpp"
#include "lexprompt/types.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lexprompt {

enum class RuleKind { letter_match, option_text_match, phrase_match };

RuleKind rule_kind_from_string(std::string_view s);
std::string to_string(RuleKind kind);

// One rule of the completion-to-label cascade.
//
// letter_match and option_text_match carry no pattern or target of their own:
// they look at the answer position (the first alphanumeric position of the
// completion's first line) and resolve the class through the template's
// current letter/option assignment, so they follow option swaps for free.
//
// phrase_match scans the full completion for `pattern`: literal,
// case-insensitive, word-bounded on both ends; a trailing '*' waives the end
// boundary (e.g. "no violation*" also catches the plural).
struct ParseRule {
    std::string rule_id;
    RuleKind kind = RuleKind::phrase_match;
    std::string pattern;
    std::optional<Label> target;      // phrase rules only
    std::optional<Language> language; // nullopt = applies to any language
    int priority = 0;                 // lower runs first

    bool operator==(const ParseRule&) const = default;
};

struct ParsedLabel {
    Outcome outcome = Outcome::unmapped;
    std::string rule_id = "none";
    // Byte offsets into the raw completion; present iff a rule fired.
    std::optional<std::pair<std::size_t, std::size_t>> matched_span;
    bool coerced = false; // set by the runner when a policy replaced unmapped
};

struct ArticleMention {
    int article = 0;
    std::size_t begin = 0;
    std::size_t end = 0; // byte span of the cited number
};

struct ArticleMentions {
    std::set<int> articles;             // deduplicated
    std::vector<ArticleMention> spans;  // one per citation occurrence
};

struct ArticleOverlap {
    std::size_t intersection = 0;
    bool exact_match = false;
    double jaccard = 0.0; // |A ∩ B| / |A ∪ B|, defined as 1 for two empty sets
};

struct RuleMatch {
    Outcome outcome = Outcome::unmapped;
    std::pair<std::size_t, std::size_t> span;
};

// Whether a single rule fires on the completion under the template's current
// option assignment. Exposed for the audit trail and rule-set walks in tests.
std::optional<RuleMatch> try_rule(const ParseRule& rule, const std::string& completion,
                                  const PromptTemplate& tmpl);

// Applies the cascade in priority order; the first firing rule decides.
// No rule firing yields outcome unmapped with rule_id "none".
ParsedLabel parse_completion(const std::string& completion, const PromptTemplate& tmpl,
                             const std::vector<ParseRule>& rules);

// The shipped cascade for a language: letter match first, option-text match
// second, then the language's phrase rules. Editable copies live in
// data/rules/.
std::vector<ParseRule> default_rules(Language language);

// Loads a rule set. `path` may be a single rule file, or a directory holding
// any.json plus <language>.json. Rules are sorted by priority (stable).
std::vector<ParseRule> load_rules(const std::string& path, Language language);
void save_rules(const std::string& path, const std::vector<ParseRule>& rules);

// Canonical hash of a rule set, recorded in experiment results.
std::string rules_fingerprint(const std::vector<ParseRule>& rules);

// All article numbers appearing in citation contexts: "Article 5",
// "Articles 3, 5 and 6", "Art. 8", German Artikel / Italian articolo
// variants. A section mark binds to its article ("Article 5 §3" cites 5).
ArticleMentions extract_articles(const std::string& completion);

ArticleOverlap article_overlap(const ArticleMentions& predicted, const std::set<int>& gold);

// Byte-length-preserving case fold (ASCII + Latin-1 letters) used by all rule
// matching, so match spans stay valid offsets into the original text.
std::string fold_lower(std::string_view text);

} // namespace lexprompt
