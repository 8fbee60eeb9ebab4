#include "lexprompt/corpus.hpp"

#include "json.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace lexprompt {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
    throw CorpusError("line " + std::to_string(line_no) + ": " + what);
}

CaseDocument parse_record(const json& rec, std::size_t line_no, const std::string& path) {
    static const std::set<std::string> known_fields = {"id", "language", "text",
                                                       "label", "articles", "split"};
    if (!rec.is_object()) fail(line_no, "record is not an object");

    for (auto& [key, _] : rec.items()) {
        if (!known_fields.count(key)) {
            std::cerr << "warning: " << path << " line " << line_no << ": ignoring unknown field '"
                      << key << "'\n";
        }
    }

    CaseDocument doc;
    for (const char* field : {"id", "language", "text", "label", "split"}) {
        if (!rec.contains(field)) fail(line_no, std::string("field '") + field + "': missing");
        if (!rec[field].is_string()) fail(line_no, std::string("field '") + field + "': must be a string");
    }

    doc.id = rec["id"].get<std::string>();
    if (doc.id.empty()) fail(line_no, "field 'id': must be non-empty");
    doc.text = rec["text"].get<std::string>();
    if (doc.text.empty()) fail(line_no, "field 'text': must be non-empty");

    try {
        doc.language = language_from_string(rec["language"].get<std::string>());
        doc.gold_label = label_from_string(rec["label"].get<std::string>());
        doc.split = split_from_string(rec["split"].get<std::string>());
    } catch (const ConfigError& e) {
        fail(line_no, e.what());
    }

    if (rec.contains("articles")) {
        if (!rec["articles"].is_array()) fail(line_no, "field 'articles': must be an array of integers");
        std::set<int> articles;
        for (const auto& item : rec["articles"]) {
            if (!item.is_number_integer()) fail(line_no, "field 'articles': must contain only integers");
            int article = item.get<int>();
            if (article <= 0) fail(line_no, "field 'articles': article numbers must be positive");
            articles.insert(article);
        }
        doc.gold_articles = std::move(articles);
        if (binarize_echr(*doc.gold_articles) != doc.gold_label) {
            fail(line_no, "field 'label': '" + to_string(doc.gold_label) +
                              "' inconsistent with articles (positive iff articles non-empty)");
        }
    }
    return doc;
}

} // namespace

Label binarize_echr(const std::set<int>& articles) {
    return articles.empty() ? Label::negative : Label::positive;
}

std::vector<CaseDocument> load_corpus(const std::string& path, Split split,
                                      std::optional<Language> language_filter) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot open corpus file: " + path);

    std::vector<CaseDocument> docs;
    std::map<std::string, std::size_t> seen_ids; // id -> line number, within the selected split
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(line_no, std::string("invalid JSON: ") + e.what());
        }
        CaseDocument doc = parse_record(rec, line_no, path);
        if (doc.split != split) continue;
        if (language_filter && doc.language != *language_filter) continue;

        auto [it, inserted] = seen_ids.emplace(doc.id, line_no);
        if (!inserted) {
            fail(line_no, "duplicate id '" + doc.id + "' (first seen on line " +
                              std::to_string(it->second) + ")");
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

void write_corpus(const std::string& path, std::span<const CaseDocument> docs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CorpusError("cannot open corpus file for writing: " + path);
    for (const auto& doc : docs) {
        json rec;
        rec["id"] = doc.id;
        rec["language"] = to_string(doc.language);
        rec["text"] = doc.text;
        rec["label"] = to_string(doc.gold_label);
        if (doc.gold_articles) rec["articles"] = *doc.gold_articles;
        rec["split"] = to_string(doc.split);
        out << rec.dump() << "\n";
    }
    if (!out) throw CorpusError("write failed: " + path);
}

DistributionStats distribution(std::span<const CaseDocument> docs) {
    if (docs.empty()) throw std::invalid_argument("distribution: empty document list");
    DistributionStats stats;
    stats.n = docs.size();
    for (const auto& doc : docs) {
        if (doc.gold_label == Label::positive)
            ++stats.positive_count;
        else
            ++stats.negative_count;
    }
    stats.tie = stats.positive_count == stats.negative_count;
    stats.majority_label =
        stats.positive_count >= stats.negative_count ? Label::positive : Label::negative;
    std::size_t majority =
        stats.majority_label == Label::positive ? stats.positive_count : stats.negative_count;
    stats.p_majority = double(majority) / double(stats.n);
    return stats;
}

} // namespace lexprompt
