#include "lexprompt/runner.hpp"

#include "lexprompt/sha256.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace lexprompt {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

UnmappedPolicy unmapped_policy_from_string(std::string_view s) {
    if (s == "coerce_to_majority") return UnmappedPolicy::coerce_to_majority;
    if (s == "coerce_to_negative") return UnmappedPolicy::coerce_to_negative;
    if (s == "exclude_and_report") return UnmappedPolicy::exclude_and_report;
    throw ConfigError("unknown unmapped_policy '" + std::string(s) + "'");
}

std::string to_string(UnmappedPolicy policy) {
    switch (policy) {
        case UnmappedPolicy::coerce_to_majority: return "coerce_to_majority";
        case UnmappedPolicy::coerce_to_negative: return "coerce_to_negative";
        case UnmappedPolicy::exclude_and_report: return "exclude_and_report";
    }
    return "coerce_to_majority";
}

LabelScheme label_scheme_from_string(std::string_view s) {
    if (s == "generic") return LabelScheme::generic();
    if (s == "echr") return LabelScheme::echr();
    if (s == "fscs") return LabelScheme::fscs();
    throw ConfigError("unknown label_scheme '" + std::string(s) + "'");
}

ReportFormat report_format_from_string(std::string_view s) {
    if (s == "table") return ReportFormat::table;
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    throw ConfigError("unknown report format '" + std::string(s) + "' (table, csv or json)");
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + ": invalid JSON: " + e.what());
    }

    ExperimentConfig config;
    try {
        config.corpus_path = j.at("corpus").get<std::string>();
        config.split = split_from_string(j.at("split").get<std::string>());
        if (j.contains("language"))
            config.language = language_from_string(j["language"].get<std::string>());
        if (j.contains("template")) {
            std::string sel = j["template"].get<std::string>();
            try {
                config.template_language = language_from_string(sel);
            } catch (const ConfigError&) {
                config.template_path = sel;
            }
        }
        const auto& backend = j.at("backend");
        config.backend.kind = backend_kind_from_string(backend.at("kind").get<std::string>());
        config.backend.endpoint = backend.value("endpoint", std::string());
        if (backend.contains("script")) {
            for (auto& [key, value] : backend["script"].items())
                config.backend.script[key] = value.get<std::string>();
        }
        const auto& gen = j.at("generation");
        config.generation.model_id = gen.at("model").get<std::string>();
        config.generation.max_new_tokens = gen.value("max_new_tokens", 50);
        if (gen.contains("stop_after"))
            config.generation.stop_after = gen["stop_after"].get<std::string>();
        config.budget = j.value("budget", std::size_t(2048));
        if (j.contains("truncation"))
            config.truncation = truncation_side_from_string(j["truncation"].get<std::string>());
        if (j.contains("unmapped_policy"))
            config.unmapped_policy =
                unmapped_policy_from_string(j["unmapped_policy"].get<std::string>());
        if (j.contains("rules")) config.rules_path = j["rules"].get<std::string>();
        config.seed = j.value("seed", std::uint64_t(0));
        config.output_dir = j.at("output_dir").get<std::string>();
        config.in_flight = j.value("in_flight", 4);
        config.label_scheme = j.value("label_scheme", std::string("generic"));
        config.exact_token_count = j.value("exact_token_count", false);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }

    // Environment override for the inference endpoint.
    if (const char* endpoint = std::getenv("LEXPROMPT_ENDPOINT"); endpoint && *endpoint)
        config.backend.endpoint = endpoint;

    if (config.generation.max_new_tokens < 1)
        throw ConfigError("config file " + path + ": max_new_tokens must be >= 1");
    if (config.in_flight < 1)
        throw ConfigError("config file " + path + ": in_flight must be >= 1");
    label_scheme_from_string(config.label_scheme);
    return config;
}

namespace {

PromptTemplate resolve_template(const ExperimentConfig& config) {
    if (config.template_path) return load_template(*config.template_path);
    if (config.template_language) return builtin_template(*config.template_language);
    if (config.language) return builtin_template(*config.language);
    throw ConfigError("no template selected: set template (language or path) or language");
}

std::vector<ParseRule> resolve_rules(const ExperimentConfig& config, Language language) {
    if (config.rules_path) return load_rules(*config.rules_path, language);
    return default_rules(language);
}

std::string sanitize_for_filename(const std::string& s) {
    std::string out = s;
    for (char& c : out) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '-' || c == '_';
        if (!ok) c = '_';
    }
    return out.empty() ? "model" : out;
}

// See ExperimentResult::fingerprint for what is deliberately excluded.
std::string experiment_fingerprint(const ExperimentConfig& config, const std::string& template_fp,
                                   const std::string& rules_fp) {
    json j;
    j["corpus"] = config.corpus_path;
    j["split"] = to_string(config.split);
    j["language"] = config.language ? to_string(*config.language) : "";
    j["template_fp"] = template_fp;
    j["rules_fp"] = rules_fp;
    j["model"] = config.generation.model_id;
    j["max_new_tokens"] = config.generation.max_new_tokens;
    j["decoding"] = "greedy";
    j["stop_after"] = config.generation.stop_after ? *config.generation.stop_after : "";
    j["budget"] = config.budget;
    j["truncation"] = to_string(config.truncation);
    j["unmapped_policy"] = to_string(config.unmapped_policy);
    j["seed"] = config.seed;
    return sha256_hex(j.dump());
}

std::string cache_file_path(const std::string& output_dir, const ExperimentConfig& config,
                            const std::string& template_fp) {
    std::string name = sanitize_for_filename(config.generation.model_id) + "-" +
                       template_fp.substr(0, 12) + "-m" +
                       std::to_string(config.generation.max_new_tokens) + ".jsonl";
    return (fs::path(output_dir) / "cache" / name).string();
}

json distribution_to_json(const DistributionStats& stats) {
    json j;
    j["n"] = stats.n;
    j["positive"] = stats.positive_count;
    j["negative"] = stats.negative_count;
    j["majority_label"] = to_string(stats.majority_label);
    j["p_majority"] = stats.p_majority;
    j["tie"] = stats.tie;
    return j;
}

DistributionStats distribution_from_json(const json& j) {
    DistributionStats stats;
    stats.n = j.at("n").get<std::size_t>();
    stats.positive_count = j.at("positive").get<std::size_t>();
    stats.negative_count = j.at("negative").get<std::size_t>();
    stats.majority_label = label_from_string(j.at("majority_label").get<std::string>());
    stats.p_majority = j.at("p_majority").get<double>();
    stats.tie = j.at("tie").get<bool>();
    return stats;
}

json metrics_to_json(const MetricsReport& metrics) {
    json j;
    j["precision_macro"] = metrics.precision_macro;
    j["recall_macro"] = metrics.recall_macro;
    j["f1_macro"] = metrics.f1_macro;
    j["f1_micro"] = metrics.f1_micro;
    j["f1_weighted"] = metrics.f1_weighted;
    j["accuracy"] = metrics.accuracy;
    j["support"] = metrics.support;
    j["unmapped_rate"] = metrics.unmapped_rate;
    return j;
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport metrics;
    metrics.precision_macro = j.at("precision_macro").get<double>();
    metrics.recall_macro = j.at("recall_macro").get<double>();
    metrics.f1_macro = j.at("f1_macro").get<double>();
    metrics.f1_micro = j.at("f1_micro").get<double>();
    metrics.f1_weighted = j.at("f1_weighted").get<double>();
    metrics.accuracy = j.at("accuracy").get<double>();
    metrics.support = j.value("support", std::size_t(0));
    metrics.unmapped_rate = j.value("unmapped_rate", 0.0);
    return metrics;
}

json record_to_json(const PredictionRecord& record) {
    json j;
    j["doc_id"] = record.doc_id;
    j["gold"] = to_string(record.gold_label);
    j["token_count"] = record.token_count;
    j["truncated"] = record.truncated;
    j["completion"] = record.completion_text;
    j["outcome"] = to_string(record.outcome);
    j["rule_id"] = record.rule_id;
    if (record.final_label)
        j["final"] = to_string(*record.final_label);
    else
        j["final"] = nullptr;
    if (record.predicted_articles) j["articles"] = *record.predicted_articles;
    return j;
}

PredictionRecord record_from_json(const json& j) {
    PredictionRecord record;
    record.doc_id = j.at("doc_id").get<std::string>();
    record.gold_label = label_from_string(j.at("gold").get<std::string>());
    record.token_count = j.at("token_count").get<std::size_t>();
    record.truncated = j.at("truncated").get<bool>();
    record.completion_text = j.at("completion").get<std::string>();
    std::string outcome = j.at("outcome").get<std::string>();
    record.outcome = outcome == "unmapped" ? Outcome::unmapped
                                           : to_outcome(label_from_string(outcome));
    record.rule_id = j.at("rule_id").get<std::string>();
    if (!j.at("final").is_null()) record.final_label = label_from_string(j["final"].get<std::string>());
    if (j.contains("articles")) {
        std::set<int> articles;
        for (const auto& a : j["articles"]) articles.insert(a.get<int>());
        record.predicted_articles = std::move(articles);
    }
    return record;
}

struct RowSink {
    std::vector<std::pair<std::string, MetricsReport>> rows;
    void add(std::string name, const MetricsReport& metrics) {
        rows.emplace_back(std::move(name), metrics);
    }
};

// Model row plus the three baseline rows from the split's distribution.
RowSink report_rows(const ExperimentResult& result) {
    RowSink sink;
    const double p = result.gold_distribution.p_majority;
    const std::size_t n = result.gold_distribution.n;
    sink.add("minority class", expected_baseline(BaselineKind::minority, p, n));
    sink.add("majority class", expected_baseline(BaselineKind::majority, p, n));
    sink.add("random class", expected_baseline(BaselineKind::random_uniform, p, n));
    sink.add(result.model_id + " (0-shot)", result.metrics);
    return sink;
}

constexpr const char* kMetricColumns[] = {"Precision", "Recall",      "macro-F1",
                                          "micro-F1",  "weighted-F1", "Accuracy"};

std::vector<double> metric_values(const MetricsReport& m) {
    return {m.precision_macro, m.recall_macro, m.f1_macro, m.f1_micro, m.f1_weighted, m.accuracy};
}

std::string escape_csv(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    out += "\"";
    return out;
}

std::string full_precision(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string baselines_table(const DistributionStats& stats) {
    ExperimentResult shell;
    shell.gold_distribution = stats;
    std::ostringstream out;
    out << "n=" << stats.n << "  positive=" << stats.positive_count
        << "  negative=" << stats.negative_count << "  majority=" << to_string(stats.majority_label)
        << "  p_majority=" << format_metric(stats.p_majority);
    if (stats.tie) out << "  (tie, resolved to positive)";
    out << "\n\n";

    const double p = stats.p_majority;
    std::vector<std::pair<std::string, MetricsReport>> rows = {
        {"minority class", expected_baseline(BaselineKind::minority, p, stats.n)},
        {"majority class", expected_baseline(BaselineKind::majority, p, stats.n)},
        {"random class", expected_baseline(BaselineKind::random_uniform, p, stats.n)},
    };

    out << std::left;
    out.width(22);
    out << "";
    for (const char* col : kMetricColumns) {
        out.width(13);
        out << std::right << col;
    }
    out << "\n";
    for (const auto& [name, metrics] : rows) {
        std::ostringstream line;
        line << std::left;
        line.width(22);
        line << name;
        for (double v : metric_values(metrics)) {
            line.width(13);
            line << std::right << format_metric(v);
        }
        out << line.str() << "\n";
    }
    return out.str();
}

std::string emit_report(const ExperimentResult& result, ReportFormat format) {
    RowSink sink = report_rows(result);

    if (format == ReportFormat::json) {
        json j;
        if (!result.complete) {
            j["status"] = "INCOMPLETE";
            j["coverage"] = result.coverage;
        } else {
            j["status"] = "complete";
        }
        j["split"] = to_string(result.split);
        j["rows"] = json::array();
        for (const auto& [name, metrics] : sink.rows) {
            json row;
            row["name"] = name;
            row["metrics"] = metrics_to_json(metrics);
            j["rows"].push_back(row);
        }
        j["unmapped_rate"] = result.unmapped_rate;
        j["truncation_rate"] = result.truncation_rate;
        if (result.articles) {
            j["articles"] = {{"exact_match_count", result.articles->exact_match_count},
                             {"any_overlap_count", result.articles->any_overlap_count},
                             {"mean_jaccard", result.articles->mean_jaccard}};
        }
        return j.dump(2) + "\n";
    }

    if (format == ReportFormat::csv) {
        std::ostringstream out;
        if (!result.complete)
            out << "# INCOMPLETE coverage=" << full_precision(result.coverage) << "\n";
        out << "model";
        for (const char* col : kMetricColumns) out << "," << col;
        out << ",support,unmapped_rate\n";
        for (const auto& [name, metrics] : sink.rows) {
            out << escape_csv(name);
            for (double v : metric_values(metrics)) out << "," << full_precision(v);
            out << "," << metrics.support << "," << full_precision(metrics.unmapped_rate) << "\n";
        }
        return out.str();
    }

    std::ostringstream out;
    if (!result.complete) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.1f%%", result.coverage * 100.0);
        out << "=== INCOMPLETE RUN: coverage " << buf << " ("
            << result.records.size() << "/" << result.n_documents << " documents) ===\n";
    }
    out << "split: " << to_string(result.split) << "   model: " << result.model_id
        << "   n=" << result.gold_distribution.n << " (" << result.gold_distribution.positive_count
        << " " << result.scheme.display_positive << " / " << result.gold_distribution.negative_count
        << " " << result.scheme.display_negative << ")\n\n";

    out << std::left;
    out.width(26);
    out << "";
    for (const char* col : kMetricColumns) {
        out.width(13);
        out << std::right << col;
    }
    out << "\n";
    for (const auto& [name, metrics] : sink.rows) {
        std::ostringstream line;
        line << std::left;
        line.width(26);
        line << name;
        for (double v : metric_values(metrics)) {
            line.width(13);
            line << std::right << format_metric(v);
        }
        out << line.str() << "\n";
    }
    out << "\nunmapped rate: " << format_metric(result.unmapped_rate)
        << "   truncation rate: " << format_metric(result.truncation_rate)
        << "   policy support: " << result.metrics.support << "\n";
    if (result.articles) {
        out << "article citations: exact matches " << result.articles->exact_match_count
            << ", with overlap " << result.articles->any_overlap_count
            << ", mean jaccard " << format_metric(result.articles->mean_jaccard) << "\n";
    }
    return out.str();
}

std::vector<std::pair<std::string, MetricsReport>> parse_report_json(const std::string& text) {
    json j = json::parse(text);
    std::vector<std::pair<std::string, MetricsReport>> rows;
    for (const auto& row : j.at("rows"))
        rows.emplace_back(row.at("name").get<std::string>(), metrics_from_json(row.at("metrics")));
    return rows;
}

std::vector<std::pair<std::string, MetricsReport>> parse_report_csv(const std::string& text) {
    std::vector<std::pair<std::string, MetricsReport>> rows;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::string field;
        std::istringstream linein(line);
        while (std::getline(linein, field, ',')) fields.push_back(field);
        if (fields.size() < 9) throw ConfigError("csv report row has too few fields: " + line);
        MetricsReport metrics;
        metrics.precision_macro = std::stod(fields[1]);
        metrics.recall_macro = std::stod(fields[2]);
        metrics.f1_macro = std::stod(fields[3]);
        metrics.f1_micro = std::stod(fields[4]);
        metrics.f1_weighted = std::stod(fields[5]);
        metrics.accuracy = std::stod(fields[6]);
        metrics.support = std::size_t(std::stoull(fields[7]));
        metrics.unmapped_rate = std::stod(fields[8]);
        rows.emplace_back(fields[0], metrics);
    }
    return rows;
}

MetricsReport recompute_from_records(std::span<const PredictionRecord> records) {
    std::vector<Label> gold, predicted;
    std::size_t unmapped = 0;
    for (const auto& record : records) {
        if (record.outcome == Outcome::unmapped) ++unmapped;
        if (!record.final_label) continue;
        gold.push_back(record.gold_label);
        predicted.push_back(*record.final_label);
    }
    double unmapped_rate = records.empty() ? 0.0 : double(unmapped) / double(records.size());
    if (gold.empty()) {
        MetricsReport metrics;
        metrics.unmapped_rate = unmapped_rate;
        return metrics;
    }
    return compute_metrics(confusion(gold, predicted), unmapped_rate);
}

void save_result(const ExperimentResult& result, const std::string& dir) {
    fs::create_directories(dir);

    {
        std::ofstream out(fs::path(dir) / "records.jsonl", std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write records.jsonl under " + dir);
        for (const auto& record : result.records) out << record_to_json(record).dump() << "\n";
    }

    json j;
    j["fingerprint"] = result.fingerprint;
    j["template_fingerprint"] = result.template_fp;
    j["rules_fingerprint"] = result.rules_fp;
    j["model"] = result.model_id;
    j["split"] = to_string(result.split);
    j["label_scheme"] = {{"positive", result.scheme.display_positive},
                         {"negative", result.scheme.display_negative}};
    j["n_documents"] = result.n_documents;
    j["n_completed"] = result.records.size();
    j["complete"] = result.complete;
    j["coverage"] = result.coverage;
    j["failed_doc_ids"] = result.failed_doc_ids;
    j["distribution"] = distribution_to_json(result.gold_distribution);
    j["metrics"] = metrics_to_json(result.metrics);
    j["unmapped_rate"] = result.unmapped_rate;
    j["truncation_rate"] = result.truncation_rate;
    if (result.articles) {
        j["articles"] = {{"exact_match_count", result.articles->exact_match_count},
                         {"any_overlap_count", result.articles->any_overlap_count},
                         {"mean_jaccard", result.articles->mean_jaccard}};
    }
    {
        std::ofstream out(fs::path(dir) / "result.json", std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write result.json under " + dir);
        out << j.dump(2) << "\n";
    }

    std::ofstream table(fs::path(dir) / "report.txt", std::ios::binary | std::ios::trunc);
    table << emit_report(result, ReportFormat::table);
    std::ofstream csv(fs::path(dir) / "report.csv", std::ios::binary | std::ios::trunc);
    csv << emit_report(result, ReportFormat::csv);
}

ExperimentResult load_result(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "result.json", std::ios::binary);
    if (!in) throw ConfigError("cannot open result.json under " + dir);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("result.json under " + dir + ": invalid JSON: " + e.what());
    }

    ExperimentResult result;
    result.fingerprint = j.at("fingerprint").get<std::string>();
    result.template_fp = j.at("template_fingerprint").get<std::string>();
    result.rules_fp = j.at("rules_fingerprint").get<std::string>();
    result.model_id = j.at("model").get<std::string>();
    result.split = split_from_string(j.at("split").get<std::string>());
    result.scheme = {j.at("label_scheme").at("positive").get<std::string>(),
                     j.at("label_scheme").at("negative").get<std::string>()};
    result.n_documents = j.at("n_documents").get<std::size_t>();
    result.complete = j.at("complete").get<bool>();
    result.coverage = j.at("coverage").get<double>();
    for (const auto& id : j.at("failed_doc_ids")) result.failed_doc_ids.push_back(id.get<std::string>());
    result.gold_distribution = distribution_from_json(j.at("distribution"));
    result.metrics = metrics_from_json(j.at("metrics"));
    result.unmapped_rate = j.at("unmapped_rate").get<double>();
    result.truncation_rate = j.at("truncation_rate").get<double>();
    if (j.contains("articles")) {
        ArticleSummary summary;
        summary.exact_match_count = j["articles"].at("exact_match_count").get<std::size_t>();
        summary.any_overlap_count = j["articles"].at("any_overlap_count").get<std::size_t>();
        summary.mean_jaccard = j["articles"].at("mean_jaccard").get<double>();
        result.articles = summary;
    }

    std::ifstream records_in(fs::path(dir) / "records.jsonl", std::ios::binary);
    if (!records_in) throw ConfigError("cannot open records.jsonl under " + dir);
    std::string line;
    while (std::getline(records_in, line)) {
        if (line.empty()) continue;
        result.records.push_back(record_from_json(json::parse(line)));
    }
    return result;
}

namespace {

ExperimentResult run_with_template(const ExperimentConfig& config, const PromptTemplate& tmpl,
                                   const std::string& output_dir) {
    // Everything that can fail from configuration fails here, before any
    // generation is attempted.
    const std::vector<ParseRule> rules = resolve_rules(config, tmpl.language);
    std::vector<CaseDocument> docs = load_corpus(config.corpus_path, config.split, config.language);
    if (docs.empty())
        throw CorpusError("no documents in " + config.corpus_path + " match split " +
                          to_string(config.split) +
                          (config.language ? " and language " + to_string(*config.language) : ""));
    const DistributionStats dist = distribution(docs);

    const std::string template_fp = template_fingerprint(tmpl);
    const std::string rules_fp = rules_fingerprint(rules);

    fs::create_directories(output_dir);
    CompletionCache cache(cache_file_path(output_dir, config, template_fp));
    GenerationClient client(config.backend, &cache);

    TokenCounter counter = config.exact_token_count
                               ? client.remote_token_counter(config.generation.model_id)
                               : approx_token_counter();

    // Budget-vs-scaffold is the same check for every document; surface it
    // once, up front. Remote counting failures also surface here.
    {
        if (approx_token_counter().count(scaffold_text(tmpl)) >= config.budget)
            throw TemplateError("token budget " + std::to_string(config.budget) +
                                " cannot fit the prompt scaffold");
    }

    const bool all_have_articles =
        std::all_of(docs.begin(), docs.end(),
                    [](const CaseDocument& d) { return d.gold_articles.has_value(); });

    struct DocOutcome {
        bool done = false;
        PredictionRecord record;
    };
    std::vector<DocOutcome> outcomes(docs.size());
    std::vector<std::string> failed_ids;
    std::mutex failed_mutex;
    std::exception_ptr fatal;
    std::mutex fatal_mutex;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};

    auto worker = [&]() {
        while (!stop.load()) {
            std::size_t i = next.fetch_add(1);
            if (i >= docs.size()) return;
            const CaseDocument& doc = docs[i];
            try {
                RenderedPrompt prompt =
                    render(tmpl, doc, counter, config.budget, config.truncation);
                Completion completion = client.generate(prompt, config.generation);
                ParsedLabel parsed = parse_completion(completion.text, tmpl, rules);

                PredictionRecord record;
                record.doc_id = doc.id;
                record.gold_label = doc.gold_label;
                record.token_count = prompt.token_count;
                record.truncated = prompt.truncated;
                record.completion_text = completion.text;
                record.outcome = parsed.outcome;
                record.rule_id = parsed.rule_id;
                if (all_have_articles)
                    record.predicted_articles = extract_articles(completion.text).articles;
                outcomes[i].record = std::move(record);
                outcomes[i].done = true;
            } catch (const BackendError& e) {
                std::lock_guard<std::mutex> lock(failed_mutex);
                failed_ids.push_back(doc.id);
                std::cerr << "warning: doc " << doc.id << ": " << e.what() << "\n";
            } catch (...) {
                {
                    std::lock_guard<std::mutex> lock(fatal_mutex);
                    if (!fatal) fatal = std::current_exception();
                }
                stop.store(true);
                return;
            }
        }
    };

    const int threads = std::max(1, std::min<int>(config.in_flight, int(docs.size())));
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (fatal) std::rethrow_exception(fatal);

    // Serial aggregation in corpus order; completion arrival order played no
    // part, so scheduling cannot change any reported number.
    ExperimentResult result;
    result.template_fp = template_fp;
    result.rules_fp = rules_fp;
    result.fingerprint = experiment_fingerprint(config, template_fp, rules_fp);
    result.model_id = config.generation.model_id;
    result.split = config.split;
    result.scheme = label_scheme_from_string(config.label_scheme);
    result.gold_distribution = dist;
    result.n_documents = docs.size();
    result.backend_calls = client.backend_calls();

    std::size_t unmapped = 0, truncated = 0;
    for (auto& outcome : outcomes) {
        if (!outcome.done) continue;
        PredictionRecord& record = outcome.record;
        if (record.outcome == Outcome::unmapped) {
            ++unmapped;
            switch (config.unmapped_policy) {
                case UnmappedPolicy::coerce_to_majority:
                    record.final_label = dist.majority_label;
                    break;
                case UnmappedPolicy::coerce_to_negative:
                    record.final_label = Label::negative;
                    break;
                case UnmappedPolicy::exclude_and_report:
                    record.final_label = std::nullopt;
                    break;
            }
        } else {
            record.final_label =
                record.outcome == Outcome::positive ? Label::positive : Label::negative;
        }
        if (record.truncated) ++truncated;
        result.records.push_back(std::move(record));
    }

    std::sort(failed_ids.begin(), failed_ids.end());
    result.failed_doc_ids = std::move(failed_ids);
    result.complete = result.failed_doc_ids.empty();
    result.coverage =
        docs.empty() ? 1.0 : double(result.records.size()) / double(docs.size());

    const std::size_t completed = result.records.size();
    result.unmapped_rate = completed == 0 ? 0.0 : double(unmapped) / double(completed);
    result.truncation_rate = completed == 0 ? 0.0 : double(truncated) / double(completed);
    result.metrics = recompute_from_records(result.records);

    if (all_have_articles && completed > 0) {
        // Gold article sets by id for the overlap summary.
        std::map<std::string, const CaseDocument*> by_id;
        for (const auto& doc : docs) by_id[doc.id] = &doc;
        ArticleSummary summary;
        double jaccard_sum = 0.0;
        for (const auto& record : result.records) {
            ArticleMentions predicted;
            if (record.predicted_articles) predicted.articles = *record.predicted_articles;
            ArticleOverlap overlap = article_overlap(predicted, *by_id.at(record.doc_id)->gold_articles);
            if (overlap.exact_match) ++summary.exact_match_count;
            if (overlap.intersection > 0) ++summary.any_overlap_count;
            jaccard_sum += overlap.jaccard;
        }
        summary.mean_jaccard = jaccard_sum / double(completed);
        result.articles = summary;
    }

    save_result(result, output_dir);
    return result;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    if (config.output_dir.empty()) throw ConfigError("output_dir must be set");
    return run_with_template(config, resolve_template(config), config.output_dir);
}

SwapOutcome option_swap_experiment(const ExperimentConfig& config) {
    if (config.output_dir.empty()) throw ConfigError("output_dir must be set");
    const PromptTemplate tmpl = resolve_template(config);

    SwapOutcome outcome;
    outcome.original =
        run_with_template(config, tmpl, (fs::path(config.output_dir) / "original").string());
    outcome.swapped = run_with_template(config, swap_options(tmpl),
                                        (fs::path(config.output_dir) / "swapped").string());
    outcome.macro_f1_original = outcome.original.metrics.f1_macro;
    outcome.macro_f1_swapped = outcome.swapped.metrics.f1_macro;
    outcome.abs_difference = std::abs(outcome.macro_f1_original - outcome.macro_f1_swapped);

    std::ofstream out(fs::path(config.output_dir) / "swap_report.txt",
                      std::ios::binary | std::ios::trunc);
    out << swap_report_text(outcome);
    return outcome;
}

std::string swap_report_text(const SwapOutcome& outcome) {
    std::ostringstream out;
    out << "option swap comparison (split: " << to_string(outcome.original.split) << ")\n";
    out << "  macro-F1, original options: " << format_metric(outcome.macro_f1_original) << "\n";
    out << "  macro-F1, swapped options:  " << format_metric(outcome.macro_f1_swapped) << "\n";
    out << "  absolute difference:        " << format_metric(outcome.abs_difference) << "\n";
    return out.str();
}

SweepOutcome sweep_output_length(const ExperimentConfig& config, const std::vector<int>& lengths) {
    if (lengths.empty()) throw ConfigError("sweep needs at least one output length");
    for (int len : lengths)
        if (len < 1) throw ConfigError("output lengths must be >= 1");
    if (config.output_dir.empty()) throw ConfigError("output_dir must be set");

    const PromptTemplate tmpl = resolve_template(config);
    SweepOutcome outcome;
    outcome.selection_split = config.split;

    for (int len : lengths) {
        ExperimentConfig variant = config;
        variant.generation.max_new_tokens = len;
        // The cache file name carries max_new_tokens, so lengths share the
        // cache directory without colliding.
        ExperimentResult result = run_with_template(
            variant, tmpl, (fs::path(config.output_dir) / ("len_" + std::to_string(len))).string());
        outcome.entries.push_back({len, result.metrics});
        outcome.all_complete = outcome.all_complete && result.complete;
    }

    outcome.best_length = outcome.entries.front().max_new_tokens;
    double best = outcome.entries.front().metrics.f1_macro;
    for (const auto& entry : outcome.entries) {
        if (entry.metrics.f1_macro > best) {
            best = entry.metrics.f1_macro;
            outcome.best_length = entry.max_new_tokens;
        }
    }

    std::ofstream out(fs::path(config.output_dir) / "sweep_report.txt",
                      std::ios::binary | std::ios::trunc);
    out << sweep_report_text(outcome);
    return outcome;
}

std::string sweep_report_text(const SweepOutcome& outcome) {
    std::ostringstream out;
    out << "output length sweep (selected on the " << to_string(outcome.selection_split)
        << " split)\n";
    out << std::left;
    out.width(18);
    out << "  max_new_tokens";
    out.width(12);
    out << std::right << "macro-F1";
    out.width(12);
    out << std::right << "unmapped";
    out << "\n";
    for (const auto& entry : outcome.entries) {
        std::ostringstream line;
        line << std::left << "  ";
        line.width(16);
        line << entry.max_new_tokens;
        line.width(12);
        line << std::right << format_metric(entry.metrics.f1_macro);
        line.width(12);
        line << std::right << format_metric(entry.metrics.unmapped_rate);
        if (entry.max_new_tokens == outcome.best_length) line << "   <- best";
        out << line.str() << "\n";
    }
    return out.str();
}

} // namespace lexprompt
