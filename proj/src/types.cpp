#include "lexprompt/types.hpp"

namespace lexprompt {

std::string to_string(Language lang) {
    switch (lang) {
        case Language::en: return "en";
        case Language::de: return "de";
        case Language::fr: return "fr";
        case Language::it: return "it";
    }
    return "en";
}

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

std::string to_string(Label label) {
    return label == Label::positive ? "positive" : "negative";
}

std::string to_string(Outcome outcome) {
    switch (outcome) {
        case Outcome::positive: return "positive";
        case Outcome::negative: return "negative";
        default: return "unmapped";
    }
}

Language language_from_string(std::string_view s) {
    if (s == "en") return Language::en;
    if (s == "de") return Language::de;
    if (s == "fr") return Language::fr;
    if (s == "it") return Language::it;
    throw ConfigError("unknown language '" + std::string(s) + "' (expected en, de, fr or it)");
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation" || s == "val" || s == "dev") return Split::validation;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(s) + "' (expected train, validation or test)");
}

Label label_from_string(std::string_view s) {
    if (s == "positive") return Label::positive;
    if (s == "negative") return Label::negative;
    throw ConfigError("unknown label '" + std::string(s) + "' (expected positive or negative)");
}

} // namespace lexprompt
