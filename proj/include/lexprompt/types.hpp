#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lexprompt {

enum class Language { en, de, fr, it };
enum class Split { train, validation, test };
enum class Label { positive, negative };

// Parse outcome. `unmapped` is a value, not an error: completions the rule
// cascade cannot bind to a class are surfaced as-is and resolved later by
// the runner's unmapped policy.
enum class Outcome { positive, negative, unmapped };

std::string to_string(Language lang);
std::string to_string(Split split);
std::string to_string(Label label);
std::string to_string(Outcome outcome);

Language language_from_string(std::string_view s);
Split split_from_string(std::string_view s);
Label label_from_string(std::string_view s);

inline Label opposite(Label label) {
    return label == Label::positive ? Label::negative : Label::positive;
}

inline Outcome to_outcome(Label label) {
    return label == Label::positive ? Outcome::positive : Outcome::negative;
}

// Exchanges positive/negative and fixes unmapped.
inline Outcome flip(Outcome outcome) {
    switch (outcome) {
        case Outcome::positive: return Outcome::negative;
        case Outcome::negative: return Outcome::positive;
        default: return Outcome::unmapped;
    }
}

// Corpus-specific surface strings for the two classes, e.g. violation /
// no violation for ECHR and approval / dismissal for FSCS.
struct LabelScheme {
    std::string display_positive;
    std::string display_negative;

    static LabelScheme generic() { return {"positive", "negative"}; }
    static LabelScheme echr() { return {"violation", "no violation"}; }
    static LabelScheme fscs() { return {"approval", "dismissal"}; }

    const std::string& display(Label label) const {
        return label == Label::positive ? display_positive : display_negative;
    }
};

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TemplateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CacheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Backend failures carry a retryable flag: connection errors, timeouts and
// 5xx responses can be retried, malformed responses cannot. The prompt key
// identifies which document's generation failed.
struct BackendError : std::runtime_error {
    BackendError(const std::string& msg, bool retryable_, std::string prompt_key_ = {})
        : std::runtime_error(msg), retryable(retryable_), prompt_key(std::move(prompt_key_)) {}
    bool retryable;
    std::string prompt_key;
};

} // namespace lexprompt
