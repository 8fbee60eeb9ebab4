#include "lexprompt/completion_parser.hpp"

#include "lexprompt/sha256.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace lexprompt {

using json = nlohmann::ordered_json;

RuleKind rule_kind_from_string(std::string_view s) {
    if (s == "letter_match") return RuleKind::letter_match;
    if (s == "option_text_match") return RuleKind::option_text_match;
    if (s == "phrase_match") return RuleKind::phrase_match;
    throw ConfigError("unknown rule kind '" + std::string(s) + "'");
}

std::string to_string(RuleKind kind) {
    switch (kind) {
        case RuleKind::letter_match: return "letter_match";
        case RuleKind::option_text_match: return "option_text_match";
        case RuleKind::phrase_match: return "phrase_match";
    }
    return "phrase_match";
}

std::string fold_lower(std::string_view text) {
    std::string out(text);
    for (std::size_t i = 0; i < out.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(out[i]);
        if (c < 0x80) {
            out[i] = char(std::tolower(c));
        } else if (c == 0xC3 && i + 1 < out.size()) {
            // Latin-1 uppercase block U+00C0..U+00DE (except the multiply
            // sign) lowercases by +0x20 within the same two-byte sequence.
            unsigned char next = static_cast<unsigned char>(out[i + 1]);
            if (next >= 0x80 && next <= 0x9E && next != 0x97) out[i + 1] = char(next + 0x20);
            ++i;
        }
    }
    return out;
}

namespace {

// Bytes >= 0x80 count as word bytes so multi-byte letters neither split
// words nor satisfy a boundary.
bool is_word_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

bool is_space_byte(unsigned char c) {
    return std::isspace(c) != 0;
}

struct Window {
    std::size_t begin = 0; // first non-whitespace byte
    std::size_t end = 0;   // end of the first line (or text end)
};

Window first_line_window(const std::string& text) {
    std::size_t begin = 0;
    while (begin < text.size() && is_space_byte(static_cast<unsigned char>(text[begin]))) ++begin;
    std::size_t end = begin;
    while (end < text.size() && text[end] != '\n') ++end;
    return {begin, end};
}

// First position in [begin, end) holding a word byte, or npos.
std::size_t first_word_position(const std::string& text, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
        if (is_word_byte(static_cast<unsigned char>(text[i]))) return i;
    return std::string::npos;
}

bool equals_at(const std::string& folded_text, std::size_t pos, const std::string& folded_pattern) {
    return folded_text.compare(pos, folded_pattern.size(), folded_pattern) == 0;
}

std::optional<RuleMatch> match_letter(const std::string& completion, const std::string& folded,
                                      const PromptTemplate& tmpl) {
    Window window = first_line_window(completion);
    std::size_t pos = first_word_position(completion, window.begin, window.end);
    if (pos == std::string::npos) return std::nullopt;

    for (const std::string& letter : {tmpl.option_letters.first, tmpl.option_letters.second}) {
        const std::string folded_letter = fold_lower(letter);
        if (pos + folded_letter.size() > window.end) continue;
        if (!equals_at(folded, pos, folded_letter)) continue;
        // The letter must stand alone: comma, period, whitespace or
        // end-of-text right after it.
        std::size_t after = pos + folded_letter.size();
        if (after < completion.size()) {
            unsigned char c = static_cast<unsigned char>(completion[after]);
            if (c != ',' && c != '.' && !is_space_byte(c)) continue;
        }
        auto label = letter_to_label(tmpl, letter);
        if (!label) continue;
        return RuleMatch{to_outcome(*label), {pos, after}};
    }
    return std::nullopt;
}

std::optional<RuleMatch> match_option_text(const std::string& completion,
                                           const std::string& folded,
                                           const PromptTemplate& tmpl) {
    Window window = first_line_window(completion);
    std::size_t pos = first_word_position(completion, window.begin, window.end);
    if (pos == std::string::npos) return std::nullopt;

    // The option text denotes its own class regardless of which letter
    // carries it, so a swap does not change this mapping. When one option is
    // a prefix of the other, the longer match wins.
    std::optional<RuleMatch> best;
    for (Label label : {Label::positive, Label::negative}) {
        const std::string& option =
            label == Label::positive ? tmpl.option_positive : tmpl.option_negative;
        const std::string folded_option = fold_lower(option);
        if (pos + folded_option.size() > window.end) continue;
        if (!equals_at(folded, pos, folded_option)) continue;
        std::size_t after = pos + folded_option.size();
        if (after < completion.size() && is_word_byte(static_cast<unsigned char>(completion[after])))
            continue;
        if (!best || folded_option.size() > best->span.second - best->span.first)
            best = RuleMatch{to_outcome(label), {pos, after}};
    }
    return best;
}

std::optional<RuleMatch> match_phrase(const std::string& completion, const std::string& folded,
                                      const ParseRule& rule) {
    if (rule.pattern.empty() || !rule.target) return std::nullopt;
    std::string pattern = rule.pattern;
    bool open_end = !pattern.empty() && pattern.back() == '*';
    if (open_end) pattern.pop_back();
    if (pattern.empty()) return std::nullopt;
    const std::string folded_pattern = fold_lower(pattern);

    std::size_t from = 0;
    while (true) {
        std::size_t pos = folded.find(folded_pattern, from);
        if (pos == std::string::npos) return std::nullopt;
        bool start_ok = pos == 0 || !is_word_byte(static_cast<unsigned char>(completion[pos - 1]));
        std::size_t after = pos + folded_pattern.size();
        bool end_ok = open_end || after >= completion.size() ||
                      !is_word_byte(static_cast<unsigned char>(completion[after]));
        if (start_ok && end_ok) return RuleMatch{to_outcome(*rule.target), {pos, after}};
        from = pos + 1;
    }
}

} // namespace

std::optional<RuleMatch> try_rule(const ParseRule& rule, const std::string& completion,
                                  const PromptTemplate& tmpl) {
    if (rule.language && *rule.language != tmpl.language) return std::nullopt;
    const std::string folded = fold_lower(completion);
    switch (rule.kind) {
        case RuleKind::letter_match: return match_letter(completion, folded, tmpl);
        case RuleKind::option_text_match: return match_option_text(completion, folded, tmpl);
        case RuleKind::phrase_match: return match_phrase(completion, folded, rule);
    }
    return std::nullopt;
}

ParsedLabel parse_completion(const std::string& completion, const PromptTemplate& tmpl,
                             const std::vector<ParseRule>& rules) {
    std::vector<const ParseRule*> ordered;
    ordered.reserve(rules.size());
    for (const auto& rule : rules) ordered.push_back(&rule);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const ParseRule* a, const ParseRule* b) { return a->priority < b->priority; });

    for (const ParseRule* rule : ordered) {
        if (auto match = try_rule(*rule, completion, tmpl)) {
            ParsedLabel parsed;
            parsed.outcome = match->outcome;
            parsed.rule_id = rule->rule_id;
            parsed.matched_span = match->span;
            return parsed;
        }
    }
    return ParsedLabel{};
}

std::vector<ParseRule> default_rules(Language language) {
    std::vector<ParseRule> rules;
    rules.push_back({"letter", RuleKind::letter_match, "", std::nullopt, std::nullopt, 0});
    rules.push_back({"option_text", RuleKind::option_text_match, "", std::nullopt, std::nullopt, 10});
    switch (language) {
        case Language::en:
            rules.push_back({"no_violation", RuleKind::phrase_match, "no violation*",
                             Label::negative, Language::en, 20});
            break;
        case Language::de:
            rules.push_back({"abgewiesen", RuleKind::phrase_match, "abgewiesen", Label::negative,
                             Language::de, 20});
            rules.push_back({"gutgeheissen", RuleKind::phrase_match, "gutgeheissen",
                             Label::positive, Language::de, 21});
            break;
        case Language::fr:
            rules.push_back({"rejete", RuleKind::phrase_match, "rejeté", Label::negative,
                             Language::fr, 20});
            rules.push_back({"admis", RuleKind::phrase_match, "admis", Label::positive,
                             Language::fr, 21});
            break;
        case Language::it:
            rules.push_back({"respinto", RuleKind::phrase_match, "respinto", Label::negative,
                             Language::it, 20});
            rules.push_back({"accolto", RuleKind::phrase_match, "accolto", Label::positive,
                             Language::it, 21});
            break;
    }
    return rules;
}

namespace {

json rule_to_json(const ParseRule& rule) {
    json j;
    j["rule_id"] = rule.rule_id;
    j["kind"] = to_string(rule.kind);
    if (!rule.pattern.empty()) j["pattern"] = rule.pattern;
    if (rule.target) j["target"] = to_string(*rule.target);
    j["language"] = rule.language ? to_string(*rule.language) : "any";
    j["priority"] = rule.priority;
    return j;
}

std::vector<ParseRule> load_rule_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open rule file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("rule file " + path + ": invalid JSON: " + e.what());
    }
    if (!j.contains("rules") || !j["rules"].is_array())
        throw ConfigError("rule file " + path + ": missing 'rules' array");

    std::vector<ParseRule> rules;
    for (const auto& item : j["rules"]) {
        ParseRule rule;
        try {
            rule.rule_id = item.at("rule_id").get<std::string>();
            rule.kind = rule_kind_from_string(item.at("kind").get<std::string>());
            rule.pattern = item.value("pattern", std::string());
            if (item.contains("target"))
                rule.target = label_from_string(item["target"].get<std::string>());
            std::string lang = item.value("language", std::string("any"));
            if (lang != "any") rule.language = language_from_string(lang);
            rule.priority = item.value("priority", 0);
        } catch (const json::exception& e) {
            throw ConfigError("rule file " + path + ": " + e.what());
        }
        if (rule.rule_id.empty()) throw ConfigError("rule file " + path + ": empty rule_id");
        if (rule.kind == RuleKind::phrase_match && (rule.pattern.empty() || !rule.target))
            throw ConfigError("rule file " + path + ": phrase rule '" + rule.rule_id +
                              "' needs pattern and target");
        rules.push_back(std::move(rule));
    }
    return rules;
}

void check_unique_ids(const std::vector<ParseRule>& rules) {
    std::set<std::string> ids;
    for (const auto& rule : rules)
        if (!ids.insert(rule.rule_id).second)
            throw ConfigError("duplicate rule_id '" + rule.rule_id + "' in rule set");
}

} // namespace

std::vector<ParseRule> load_rules(const std::string& path, Language language) {
    std::vector<ParseRule> rules;
    if (std::filesystem::is_directory(path)) {
        auto any_path = std::filesystem::path(path) / "any.json";
        auto lang_path = std::filesystem::path(path) / (to_string(language) + ".json");
        if (std::filesystem::exists(any_path)) {
            auto any_rules = load_rule_file(any_path.string());
            rules.insert(rules.end(), any_rules.begin(), any_rules.end());
        }
        if (std::filesystem::exists(lang_path)) {
            auto lang_rules = load_rule_file(lang_path.string());
            rules.insert(rules.end(), lang_rules.begin(), lang_rules.end());
        }
        if (rules.empty())
            throw ConfigError("rule directory " + path + " has neither any.json nor " +
                              to_string(language) + ".json");
    } else {
        rules = load_rule_file(path);
    }
    check_unique_ids(rules);
    std::stable_sort(rules.begin(), rules.end(),
                     [](const ParseRule& a, const ParseRule& b) { return a.priority < b.priority; });
    return rules;
}

void save_rules(const std::string& path, const std::vector<ParseRule>& rules) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open rule file for writing: " + path);
    json j;
    j["rules"] = json::array();
    for (const auto& rule : rules) j["rules"].push_back(rule_to_json(rule));
    out << j.dump(2) << "\n";
}

std::string rules_fingerprint(const std::vector<ParseRule>& rules) {
    json j = json::array();
    for (const auto& rule : rules) j.push_back(rule_to_json(rule));
    return sha256_hex(j.dump());
}

namespace {

const char* kArticleKeywords[] = {"articles", "articoli",  "articolo", "artikeln",
                                  "artikel",  "article",   "art"};

// Case-insensitive word-bounded keyword at `pos`; returns length or 0.
std::size_t keyword_length_at(const std::string& folded, std::size_t pos) {
    bool start_ok = pos == 0 || !is_word_byte(static_cast<unsigned char>(folded[pos - 1]));
    if (!start_ok) return 0;
    for (const char* keyword : kArticleKeywords) {
        std::size_t len = std::strlen(keyword);
        if (folded.compare(pos, len, keyword) != 0) continue;
        std::size_t after = pos + len;
        if (after < folded.size() && is_word_byte(static_cast<unsigned char>(folded[after])))
            continue;
        return len;
    }
    return 0;
}

std::size_t skip_spaces(const std::string& text, std::size_t pos) {
    while (pos < text.size() && is_space_byte(static_cast<unsigned char>(text[pos]))) ++pos;
    return pos;
}

bool parse_int_at(const std::string& text, std::size_t pos, long& value, std::size_t& end) {
    if (pos >= text.size() || !std::isdigit(static_cast<unsigned char>(text[pos]))) return false;
    long v = 0;
    std::size_t i = pos;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        v = v * 10 + (text[i] - '0');
        if (v > 1000000) v = 1000000; // clamp; article numbers are small
        ++i;
    }
    value = v;
    end = i;
    return true;
}

// "§3", "§ 3", "(3)" after an article number are section marks; the article
// is the leading number.
std::size_t skip_section_mark(const std::string& text, std::size_t pos) {
    std::size_t p = skip_spaces(text, pos);
    if (text.compare(p, 2, "\xC2\xA7") == 0) {
        p = skip_spaces(text, p + 2);
        long ignored;
        std::size_t end;
        if (parse_int_at(text, p, ignored, end)) return end;
        return pos;
    }
    if (p < text.size() && text[p] == '(') {
        std::size_t q = skip_spaces(text, p + 1);
        long ignored;
        std::size_t end;
        if (parse_int_at(text, q, ignored, end)) {
            end = skip_spaces(text, end);
            if (end < text.size() && text[end] == ')') return end + 1;
        }
    }
    return pos;
}

// Separators inside an enumeration: ",", ";", "&" and the and-words of the
// four languages.
std::size_t skip_list_separator(const std::string& folded, std::size_t pos) {
    std::size_t p = skip_spaces(folded, pos);
    if (p < folded.size() && (folded[p] == ',' || folded[p] == ';' || folded[p] == '&'))
        return skip_spaces(folded, p + 1);
    for (const char* word : {"and", "und", "oder", "or", "et", "ed", "e", "ou", "o"}) {
        std::size_t len = std::strlen(word);
        if (folded.compare(p, len, word) != 0) continue;
        std::size_t after = p + len;
        bool start_ok = p == 0 || !is_word_byte(static_cast<unsigned char>(folded[p - 1]));
        if (!start_ok) continue;
        if (after < folded.size() && is_word_byte(static_cast<unsigned char>(folded[after])))
            continue;
        return skip_spaces(folded, after);
    }
    return pos; // no separator here
}

} // namespace

ArticleMentions extract_articles(const std::string& completion) {
    ArticleMentions mentions;
    const std::string folded = fold_lower(completion);

    std::size_t pos = 0;
    while (pos < folded.size()) {
        std::size_t keyword_len = keyword_length_at(folded, pos);
        if (keyword_len == 0) {
            ++pos;
            continue;
        }
        std::size_t cursor = pos + keyword_len;
        if (cursor < folded.size() && folded[cursor] == '.') ++cursor; // "art."
        cursor = skip_spaces(folded, cursor);

        long value = 0;
        std::size_t number_end = 0;
        bool any_number = false;
        while (parse_int_at(folded, cursor, value, number_end)) {
            any_number = true;
            if (value > 0) {
                mentions.articles.insert(int(value));
                mentions.spans.push_back({int(value), cursor, number_end});
            }
            cursor = skip_section_mark(folded, number_end);
            // Consume separators greedily; ", and" style enumerations chain
            // several of them before the next number.
            std::size_t probe = cursor;
            while (true) {
                std::size_t next_probe = skip_list_separator(folded, probe);
                if (next_probe == probe) break;
                probe = next_probe;
            }
            if (probe == cursor) break; // no separator: enumeration ends
            if (probe >= folded.size() ||
                !std::isdigit(static_cast<unsigned char>(folded[probe])))
                break; // separator without a number: leave it for the main scan
            cursor = probe;
        }
        pos = any_number ? cursor : pos + keyword_len;
    }
    return mentions;
}

ArticleOverlap article_overlap(const ArticleMentions& predicted, const std::set<int>& gold) {
    ArticleOverlap overlap;
    std::vector<int> intersection;
    std::set_intersection(predicted.articles.begin(), predicted.articles.end(), gold.begin(),
                          gold.end(), std::back_inserter(intersection));
    overlap.intersection = intersection.size();
    overlap.exact_match = predicted.articles == gold;

    std::vector<int> set_union;
    std::set_union(predicted.articles.begin(), predicted.articles.end(), gold.begin(), gold.end(),
                   std::back_inserter(set_union));
    overlap.jaccard =
        set_union.empty() ? 1.0 : double(intersection.size()) / double(set_union.size());
    return overlap;
}

} // namespace lexprompt
