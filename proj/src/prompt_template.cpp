#include "lexprompt/prompt_template.hpp"

#include "lexprompt/sha256.hpp"

#include "json.hpp"

#include <fstream>

namespace lexprompt {

using json = nlohmann::ordered_json;

TokenCounter approx_token_counter() {
    return {"approx_bytes4", [](std::string_view s) { return (s.size() + 3) / 4; }};
}

std::map<Language, PromptTemplate> builtin_templates() {
    std::map<Language, PromptTemplate> templates;

    PromptTemplate en;
    en.language = Language::en;
    en.question_label = "Question:";
    en.question_text = "Was there a violation of any human rights articles?";
    en.option_positive = "Yes";
    en.option_negative = "No";
    en.answer_label = "Answer:";
    templates[Language::en] = en;

    PromptTemplate de;
    de.language = Language::de;
    de.question_label = "Frage:";
    de.question_text = "Wie lautete das Gerichtsurteil?";
    de.option_positive = "Gutheissung";
    de.option_negative = "Abweisung";
    de.answer_label = "Antwort:";
    templates[Language::de] = de;

    PromptTemplate fr;
    fr.language = Language::fr;
    fr.question_label = "Question:";
    fr.question_text = "Quel était le jugement légal?";
    fr.option_positive = "admission";
    fr.option_negative = "rejet";
    fr.answer_label = "Réponse:";
    templates[Language::fr] = fr;

    PromptTemplate it;
    it.language = Language::it;
    it.question_label = "Domanda:";
    it.question_text = "Qual è stata la sentenza legale?";
    it.option_positive = "accoglimento";
    it.option_negative = "respingimento";
    it.answer_label = "Risposta:";
    templates[Language::it] = it;

    return templates;
}

const PromptTemplate& builtin_template(Language lang) {
    static const std::map<Language, PromptTemplate> templates = builtin_templates();
    return templates.at(lang);
}

namespace {

json template_to_json(const PromptTemplate& tmpl) {
    json j;
    j["language"] = to_string(tmpl.language);
    j["separator"] = tmpl.separator;
    j["question_label"] = tmpl.question_label;
    j["question_text"] = tmpl.question_text;
    j["option_letters"] = {tmpl.option_letters.first, tmpl.option_letters.second};
    j["option_positive"] = tmpl.option_positive;
    j["option_negative"] = tmpl.option_negative;
    j["answer_label"] = tmpl.answer_label;
    j["options_swapped"] = tmpl.options_swapped;
    return j;
}

void validate_template(const PromptTemplate& tmpl) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw TemplateError(std::string("invalid template: ") + what);
    };
    require(!tmpl.separator.empty(), "separator must be non-empty");
    require(!tmpl.question_label.empty(), "question_label must be non-empty");
    require(!tmpl.question_text.empty(), "question_text must be non-empty");
    require(!tmpl.option_positive.empty(), "option_positive must be non-empty");
    require(!tmpl.option_negative.empty(), "option_negative must be non-empty");
    require(!tmpl.answer_label.empty(), "answer_label must be non-empty");
    require(!tmpl.option_letters.first.empty() && !tmpl.option_letters.second.empty(),
            "option letters must be non-empty");
    require(tmpl.option_letters.first != tmpl.option_letters.second,
            "option letters must be distinct");
}

// Byte offsets that start inside a UTF-8 sequence are moved back to the
// preceding codepoint boundary so truncation never splits a character.
std::size_t snap_to_utf8_boundary(const std::string& text, std::size_t pos) {
    while (pos > 0 && pos < text.size() && (static_cast<unsigned char>(text[pos]) & 0xC0) == 0x80)
        --pos;
    return pos;
}

// Forward variant for tail-keeping: moves to the next codepoint boundary.
std::size_t snap_forward_to_utf8_boundary(const std::string& text, std::size_t pos) {
    while (pos < text.size() && (static_cast<unsigned char>(text[pos]) & 0xC0) == 0x80) ++pos;
    return pos;
}

} // namespace

PromptTemplate load_template(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw TemplateError("template file " + path + ": invalid JSON: " + e.what());
    }

    PromptTemplate tmpl;
    try {
        tmpl.language = language_from_string(j.at("language").get<std::string>());
        tmpl.separator = j.value("separator", std::string("<|endoftext|>"));
        tmpl.question_label = j.at("question_label").get<std::string>();
        tmpl.question_text = j.at("question_text").get<std::string>();
        if (j.contains("option_letters")) {
            tmpl.option_letters = {j["option_letters"].at(0).get<std::string>(),
                                   j["option_letters"].at(1).get<std::string>()};
        }
        tmpl.option_positive = j.at("option_positive").get<std::string>();
        tmpl.option_negative = j.at("option_negative").get<std::string>();
        tmpl.answer_label = j.at("answer_label").get<std::string>();
        tmpl.options_swapped = j.value("options_swapped", false);
    } catch (const json::exception& e) {
        throw TemplateError("template file " + path + ": " + e.what());
    }
    validate_template(tmpl);
    return tmpl;
}

void save_template(const std::string& path, const PromptTemplate& tmpl) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw TemplateError("cannot open template file for writing: " + path);
    out << template_to_json(tmpl).dump(2) << "\n";
}

std::string template_fingerprint(const PromptTemplate& tmpl) {
    return sha256_hex(template_to_json(tmpl).dump());
}

std::string scaffold_text(const PromptTemplate& tmpl) {
    const std::string& first =
        tmpl.options_swapped ? tmpl.option_negative : tmpl.option_positive;
    const std::string& second =
        tmpl.options_swapped ? tmpl.option_positive : tmpl.option_negative;
    std::string out;
    out += "\n";
    out += tmpl.separator;
    out += "\n";
    out += tmpl.question_label;
    out += " ";
    out += tmpl.question_text;
    out += "\n";
    out += tmpl.option_letters.first;
    out += ", ";
    out += first;
    out += "\n";
    out += tmpl.option_letters.second;
    out += ", ";
    out += second;
    out += "\n";
    out += tmpl.answer_label;
    return out;
}

std::string to_string(TruncationSide side) {
    return side == TruncationSide::head ? "head" : "tail";
}

TruncationSide truncation_side_from_string(std::string_view s) {
    if (s == "head") return TruncationSide::head;
    if (s == "tail") return TruncationSide::tail;
    throw ConfigError("unknown truncation side '" + std::string(s) + "' (head or tail)");
}

RenderedPrompt render(const PromptTemplate& tmpl, const CaseDocument& doc,
                      const TokenCounter& counter, std::size_t budget, TruncationSide side) {
    validate_template(tmpl);
    const std::string scaffold = scaffold_text(tmpl);
    if (counter.count(scaffold) >= budget) {
        throw TemplateError("token budget " + std::to_string(budget) +
                            " cannot fit the prompt scaffold alone (" +
                            std::to_string(counter.count(scaffold)) + " tokens)");
    }

    RenderedPrompt out;
    out.doc_id = doc.id;
    out.template_language = tmpl.language;

    // kept(len) is the retained document slice of the given byte length.
    auto kept = [&](std::size_t len) {
        if (side == TruncationSide::head) return doc.text.substr(0, len);
        return doc.text.substr(doc.text.size() - len);
    };
    auto snap = [&](std::size_t len) {
        if (side == TruncationSide::head) return snap_to_utf8_boundary(doc.text, len);
        // for a tail slice the cut point is size-len; snapping it forward
        // only ever shortens the slice
        return doc.text.size() -
               snap_forward_to_utf8_boundary(doc.text, doc.text.size() - len);
    };
    auto count_with = [&](std::size_t len) { return counter.count(kept(len) + scaffold); };

    std::size_t kept_len = doc.text.size();
    if (count_with(kept_len) > budget) {
        // Longest slice that fits: binary search over the length, then
        // shrink codepoint by codepoint until the counter agrees.
        std::size_t lo = 0, hi = doc.text.size(); // count(lo) <= budget < count(hi)
        while (lo + 1 < hi) {
            // snapping only ever shortens the slice, so mid < hi holds
            std::size_t mid = snap(lo + (hi - lo) / 2);
            if (mid <= lo) break; // snapping collapsed the midpoint onto lo
            if (count_with(mid) <= budget)
                lo = mid;
            else
                hi = mid;
        }
        kept_len = lo;
        while (kept_len > 0 && count_with(kept_len) > budget)
            kept_len = snap(kept_len - 1);
    }

    out.text = kept(kept_len) + scaffold;
    out.truncated = kept_len < doc.text.size();
    out.token_count = counter.count(out.text);
    return out;
}

PromptTemplate swap_options(const PromptTemplate& tmpl) {
    PromptTemplate swapped = tmpl;
    swapped.options_swapped = !tmpl.options_swapped;
    return swapped;
}

std::optional<Label> letter_to_label(const PromptTemplate& tmpl, std::string_view letter) {
    if (letter == tmpl.option_letters.first)
        return tmpl.options_swapped ? Label::negative : Label::positive;
    if (letter == tmpl.option_letters.second)
        return tmpl.options_swapped ? Label::positive : Label::negative;
    return std::nullopt;
}

} // namespace lexprompt
