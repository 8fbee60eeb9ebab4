#pragma once

#include "lexprompt/corpus.hpp"
#include "lexprompt/types.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace lexprompt {

// Language-specific question/options/answer scaffold. Rendered layout:
//
//   {document}
//   <|endoftext|>
//   {question_label} {question_text}
//   A, {first option}
//   B, {second option}
//   {answer_label}
//
// option_positive/option_negative are bound to the class they mean; which
// letter carries which option is controlled by options_swapped. With
// options_swapped false, "A" denotes option_positive and "B" denotes
// option_negative; swapping reverses the assignment.
struct PromptTemplate {
    Language language = Language::en;
    std::string separator = "<|endoftext|>";
    std::string question_label;
    std::string question_text;
    std::pair<std::string, std::string> option_letters = {"A", "B"};
    std::string option_positive;
    std::string option_negative;
    std::string answer_label;
    bool options_swapped = false;

    bool operator==(const PromptTemplate&) const = default;
};

struct RenderedPrompt {
    std::string text;
    std::string doc_id;
    std::size_t token_count = 0;
    bool truncated = false;
    Language template_language = Language::en;
};

// Pluggable token counting. The budget is token-denominated and each model
// brings its own tokenizer, so the counter is injected: the default is an
// approximation (ceil(bytes/4)), an exact one can delegate to a backend's
// tokenize endpoint. Counters must be monotone under concatenation and map
// "" to 0.
struct TokenCounter {
    std::string name;
    std::function<std::size_t(std::string_view)> count;
};

TokenCounter approx_token_counter();

// The four shipped templates. Editable copies live in data/templates/.
std::map<Language, PromptTemplate> builtin_templates();
const PromptTemplate& builtin_template(Language lang);

PromptTemplate load_template(const std::string& path);
void save_template(const std::string& path, const PromptTemplate& tmpl);

// Template JSON rendered canonically then hashed; namespaces the completion
// cache so swapped/edited templates never collide with the base run.
std::string template_fingerprint(const PromptTemplate& tmpl);

// The scaffold that follows the document: separator line, question block and
// answer label. Independent of any document.
std::string scaffold_text(const PromptTemplate& tmpl);

// Which part of an over-budget document survives. Case facts open with the
// framing of the case, so keeping the head is the default.
enum class TruncationSide { head, tail };

TruncationSide truncation_side_from_string(std::string_view s);
std::string to_string(TruncationSide side);

// Renders the document into the template under a hard token budget covering
// the entire prompt. The scaffold is reserved first and the document keeps
// its longest head (or tail), snapped to a UTF-8 boundary, such that the
// total count stays within budget. Throws TemplateError when the budget
// cannot fit the scaffold alone.
RenderedPrompt render(const PromptTemplate& tmpl, const CaseDocument& doc,
                      const TokenCounter& counter, std::size_t budget = 2048,
                      TruncationSide side = TruncationSide::head);

// Exchanges which letter carries which option; involution.
PromptTemplate swap_options(const PromptTemplate& tmpl);

// Current letter -> class assignment, honoring options_swapped. Empty when
// the letter is neither option letter.
std::optional<Label> letter_to_label(const PromptTemplate& tmpl, std::string_view letter);

} // namespace lexprompt
