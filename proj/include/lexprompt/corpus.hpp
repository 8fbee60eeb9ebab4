#pragma once

#include "lexprompt/types.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lexprompt {

// One legal case in the neutral line-delimited corpus format.
struct CaseDocument {
    std::string id;
    Language language = Language::en;
    std::string text;
    Label gold_label = Label::negative;
    // Set of violated-article numbers (ECHR-style corpora only). When present,
    // gold_label must equal binarize_echr(*gold_articles).
    std::optional<std::set<int>> gold_articles;
    Split split = Split::test;

    bool operator==(const CaseDocument&) const = default;
};

struct DistributionStats {
    std::size_t n = 0;
    std::size_t positive_count = 0;
    std::size_t negative_count = 0;
    Label majority_label = Label::positive;
    double p_majority = 0.0; // max(count)/n, in [0.5, 1]
    bool tie = false;        // 50/50 split, resolved toward positive
};

// A document with one or more violated articles is a positive case.
Label binarize_echr(const std::set<int>& articles);

// Loads records matching `split` (and `language_filter` when set) from a
// line-delimited corpus file, preserving file order. Every line in the file
// is schema-validated; malformed records and duplicate ids raise CorpusError
// naming the offending line(s). Unknown fields are ignored with a warning on
// stderr.
std::vector<CaseDocument> load_corpus(const std::string& path, Split split,
                                      std::optional<Language> language_filter = std::nullopt);

// Writes documents in the corpus file format, one record per line.
// load_corpus on the written file reproduces the document list.
void write_corpus(const std::string& path, std::span<const CaseDocument> docs);

// Label counts and majority fraction. Permutation-invariant; errors on empty
// input. A tie resolves to positive and is flagged.
DistributionStats distribution(std::span<const CaseDocument> docs);

} // namespace lexprompt
