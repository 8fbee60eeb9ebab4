// Command-line front end: ingest, render, run, baselines, sweep, swap,
// report and try. Machine output goes to stdout, diagnostics to stderr.
// Exit status: 0 success, 2 partial run, 1 error.

#include "lexprompt/runner.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

using namespace lexprompt;

namespace {

struct GlobalFlags {
    std::string config_path;
    bool verbose = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void log_verbose(const GlobalFlags& flags, const std::string& message) {
    if (flags.verbose) std::cerr << "[lexprompt] " << message << "\n";
}

ExperimentConfig config_from_flags(const GlobalFlags& flags) {
    if (flags.config_path.empty())
        throw ConfigError("this subcommand needs --config <file>");
    auto config = load_config(flags.config_path);
    if (flags.seed_set) config.seed = flags.seed;
    return config;
}

// Finds a document by id, searching the given split or all splits.
CaseDocument find_document(const std::string& corpus_path, const std::string& doc_id,
                           const std::optional<Split>& split,
                           const std::optional<Language>& language) {
    std::vector<Split> candidates;
    if (split)
        candidates = {*split};
    else
        candidates = {Split::test, Split::validation, Split::train};
    for (Split s : candidates) {
        for (auto& doc : load_corpus(corpus_path, s, language))
            if (doc.id == doc_id) return doc;
    }
    throw CorpusError("document '" + doc_id + "' not found in " + corpus_path);
}

BackendDescriptor backend_from_flag(const std::string& flag_value) {
    BackendDescriptor backend;
    if (flag_value.rfind("mock:", 0) == 0) {
        backend.kind = BackendKind::mock;
        backend.script["*"] = flag_value.substr(5);
        return backend;
    }
    backend.kind = BackendKind::http;
    backend.endpoint = flag_value;
    return backend;
}

// Longest head of `text` whose count stays within the budget (used for the
// bare document prompt of `try`).
std::string truncate_to_budget(const std::string& text, const TokenCounter& counter,
                               std::size_t budget) {
    if (counter.count(text) <= budget) return text;
    std::size_t lo = 0, hi = text.size();
    auto snap = [&](std::size_t pos) {
        while (pos > 0 && pos < text.size() &&
               (static_cast<unsigned char>(text[pos]) & 0xC0) == 0x80)
            --pos;
        return pos;
    };
    while (lo + 1 < hi) {
        std::size_t mid = snap(lo + (hi - lo) / 2);
        if (mid <= lo) break;
        if (counter.count(text.substr(0, mid)) <= budget)
            lo = mid;
        else
            hi = mid;
    }
    return text.substr(0, lo);
}

int cmd_ingest(const GlobalFlags& flags, const std::string& corpus_path,
               const std::optional<Split>& split, const std::optional<Language>& language,
               const std::string& out_path) {
    std::vector<Split> splits;
    if (split)
        splits = {*split};
    else
        splits = {Split::train, Split::validation, Split::test};

    std::vector<CaseDocument> all;
    for (Split s : splits) {
        auto docs = load_corpus(corpus_path, s, language);
        if (docs.empty()) {
            if (split) std::cout << "split " << to_string(s) << ": no documents\n";
            continue;
        }
        auto stats = distribution(docs);
        std::cout << "split " << to_string(s) << ": n=" << stats.n
                  << " positive=" << stats.positive_count << " negative=" << stats.negative_count
                  << " majority=" << to_string(stats.majority_label)
                  << " p_majority=" << format_metric(stats.p_majority);
        if (stats.tie) std::cout << " (tie)";
        std::cout << "\n";
        all.insert(all.end(), docs.begin(), docs.end());
    }
    if (all.empty()) throw CorpusError("no documents loaded from " + corpus_path);
    if (!out_path.empty()) {
        write_corpus(out_path, all);
        log_verbose(flags, "wrote " + std::to_string(all.size()) + " records to " + out_path);
    }
    return 0;
}

int cmd_render(const GlobalFlags& flags, const std::string& corpus_path, const std::string& doc_id,
               const std::optional<Split>& split, const std::optional<Language>& language,
               const std::string& template_path, std::size_t budget, TruncationSide side) {
    auto doc = find_document(corpus_path, doc_id, split, language);
    PromptTemplate tmpl =
        template_path.empty() ? builtin_template(doc.language) : load_template(template_path);
    log_verbose(flags, "rendering " + doc_id + " with the " + to_string(tmpl.language) +
                           " template");

    auto prompt = render(tmpl, doc, approx_token_counter(), budget, side);
    std::cout << prompt.text << "\n";
    std::cerr << "tokens: " << prompt.token_count << " (budget " << budget
              << ")  truncated: " << (prompt.truncated ? "true" : "false")
              << "  template: " << to_string(prompt.template_language) << "\n";
    return 0;
}

int cmd_baselines(const GlobalFlags& flags, const std::string& corpus_path, Split split,
                  const std::optional<Language>& language, bool simulate) {
    auto docs = load_corpus(corpus_path, split, language);
    if (docs.empty())
        throw CorpusError("no documents in " + corpus_path + " for split " + to_string(split));
    auto stats = distribution(docs);
    std::cout << baselines_table(stats);

    if (simulate) {
        std::vector<Label> gold;
        gold.reserve(docs.size());
        for (const auto& doc : docs) gold.push_back(doc.gold_label);
        auto predicted = simulate_random_baseline(gold, flags.seed);
        auto metrics = compute_metrics(confusion(gold, predicted));
        std::cout << "\nsimulated random (seed " << flags.seed
                  << "): precision=" << format_metric(metrics.precision_macro)
                  << " recall=" << format_metric(metrics.recall_macro)
                  << " macro-F1=" << format_metric(metrics.f1_macro)
                  << " accuracy=" << format_metric(metrics.accuracy) << "\n";
    }
    return 0;
}

int cmd_run(const GlobalFlags& flags) {
    auto config = config_from_flags(flags);
    auto result = run_experiment(config);
    std::cout << emit_report(result, ReportFormat::table);
    log_verbose(flags, "result written to " + config.output_dir);
    return result.complete ? 0 : 2;
}

int cmd_swap(const GlobalFlags& flags) {
    auto config = config_from_flags(flags);
    auto outcome = option_swap_experiment(config);
    std::cout << swap_report_text(outcome);
    return outcome.original.complete && outcome.swapped.complete ? 0 : 2;
}

int cmd_sweep(const GlobalFlags& flags, std::vector<int> lengths) {
    auto config = config_from_flags(flags);
    auto outcome = sweep_output_length(config, lengths);
    std::cout << sweep_report_text(outcome);
    return outcome.all_complete ? 0 : 2;
}

int cmd_report(const std::string& run_dir, const std::string& format) {
    auto result = load_result(run_dir);
    auto recomputed = recompute_from_records(result.records);
    if (!(recomputed == result.metrics))
        std::cerr << "warning: stored metrics do not match the persisted records\n";
    std::cout << emit_report(result, report_format_from_string(format));
    return 0;
}

int cmd_try(const GlobalFlags& flags, const std::string& corpus_path, const std::string& doc_id,
            const std::optional<Split>& split, const std::string& question,
            const std::string& options, const std::string& backend_spec, const std::string& model,
            int max_new_tokens, std::size_t budget) {
    auto doc = find_document(corpus_path, doc_id, split, std::nullopt);

    std::string backend_choice = backend_spec;
    if (backend_choice.empty()) {
        if (const char* endpoint = std::getenv("LEXPROMPT_ENDPOINT"); endpoint && *endpoint)
            backend_choice = endpoint;
        else
            throw ConfigError("no backend: pass --backend <url|mock:text> or set "
                              "LEXPROMPT_ENDPOINT");
    }
    GenerationClient client(backend_from_flag(backend_choice), nullptr);
    GenerationParams params;
    params.model_id = model;
    params.max_new_tokens = max_new_tokens;

    auto counter = approx_token_counter();
    const bool scaffolded = !question.empty() || !options.empty();

    RenderedPrompt prompt;
    PromptTemplate tmpl = builtin_template(doc.language);
    if (scaffolded) {
        if (!question.empty()) tmpl.question_text = question;
        if (!options.empty()) {
            auto comma = options.find(',');
            if (comma == std::string::npos)
                throw ConfigError("--options wants \"positive,negative\"");
            tmpl.option_positive = options.substr(0, comma);
            tmpl.option_negative = options.substr(comma + 1);
        }
        prompt = render(tmpl, doc, counter, budget);
    } else {
        // Step-1 style probe: the document alone, nothing appended.
        prompt.text = truncate_to_budget(doc.text, counter, budget);
        prompt.doc_id = doc.id;
        prompt.truncated = prompt.text.size() < doc.text.size();
        prompt.token_count = counter.count(prompt.text);
        prompt.template_language = doc.language;
    }

    std::cout << "--- prompt (" << prompt.token_count << " tokens, truncated: "
              << (prompt.truncated ? "true" : "false") << ") ---\n";
    std::cout << prompt.text << "\n";

    Completion completion;
    try {
        completion = client.generate(prompt, params);
    } catch (const BackendError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.retryable) std::cerr << "hint: the backend looks transiently down; retry\n";
        return 1;
    }
    std::cout << "--- completion (" << completion.backend_name << ") ---\n";
    std::cout << completion.text << "\n";

    std::cout << "--- parse ---\n";
    if (!scaffolded) {
        std::cout << "outcome: unmapped (bare document prompt, completion left unparsed)\n";
        return 0;
    }
    auto parsed = parse_completion(completion.text, tmpl, default_rules(tmpl.language));
    std::cout << "outcome: " << to_string(parsed.outcome) << "\n";
    std::cout << "rule: " << parsed.rule_id << "\n";
    if (parsed.matched_span) {
        auto [begin, end] = *parsed.matched_span;
        std::cout << "span: [" << begin << "," << end << ") \""
                  << completion.text.substr(begin, end - begin) << "\"\n";
    }
    log_verbose(flags, "one-shot round trip done");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"zero-shot legal judgment prediction harness"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "experiment config file (run/swap/sweep)");
    app.add_flag("--verbose", flags.verbose, "log progress to stderr");
    auto* seed_opt = app.add_option("--seed", flags.seed, "seed for simulated baselines");

    std::string corpus_path, doc_id, out_path, template_path, format = "table";
    std::string question, options, backend_spec, model = "manual", run_dir;
    std::string split_name, language_name, truncation_name = "head";
    std::size_t budget = 2048;
    int max_new_tokens = 50;
    bool simulate = false;
    std::vector<int> lengths;

    auto split_of = [&]() -> std::optional<Split> {
        if (split_name.empty()) return std::nullopt;
        return split_from_string(split_name);
    };
    auto language_of = [&]() -> std::optional<Language> {
        if (language_name.empty()) return std::nullopt;
        return language_from_string(language_name);
    };

    auto* ingest = app.add_subcommand("ingest", "validate a corpus file and print its stats");
    ingest->add_option("--corpus", corpus_path, "corpus file")->required();
    ingest->add_option("--split", split_name, "restrict to one split");
    ingest->add_option("--language", language_name, "restrict to one language");
    ingest->add_option("--out", out_path, "write the validated records here");

    auto* render_cmd = app.add_subcommand("render", "print the prompt for one document");
    render_cmd->add_option("doc_id", doc_id, "document id")->required();
    render_cmd->add_option("--corpus", corpus_path, "corpus file")->required();
    render_cmd->add_option("--split", split_name, "split holding the document");
    render_cmd->add_option("--language", language_name, "language filter");
    render_cmd->add_option("--template", template_path, "template file (default: builtin)");
    render_cmd->add_option("--budget", budget, "token budget");
    render_cmd->add_option("--truncation", truncation_name, "head or tail");

    auto* baselines = app.add_subcommand("baselines", "print the analytic baseline rows");
    baselines->add_option("--corpus", corpus_path, "corpus file")->required();
    baselines->add_option("--split", split_name, "split to evaluate")->required();
    baselines->add_option("--language", language_name, "language filter");
    baselines->add_flag("--simulate", simulate, "also run the seeded coin-flip baseline");

    auto* run = app.add_subcommand("run", "run a full experiment from a config file");
    auto* swap = app.add_subcommand("swap", "run the option-swap experiment pair");
    auto* sweep = app.add_subcommand("sweep", "sweep the output length");
    sweep->add_option("--lengths", lengths, "output lengths to try")
        ->delimiter(',')
        ->required();

    auto* report = app.add_subcommand("report", "re-emit a persisted run");
    report->add_option("--run", run_dir, "run directory (holds result.json)")->required();
    report->add_option("--format", format, "table, csv or json");

    auto* try_cmd = app.add_subcommand("try", "one-shot render/generate/parse round trip");
    try_cmd->add_option("doc_id", doc_id, "document id")->required();
    try_cmd->add_option("--corpus", corpus_path, "corpus file")->required();
    try_cmd->add_option("--split", split_name, "split holding the document");
    try_cmd->add_option("--question", question, "question text (omit for a bare document prompt)");
    try_cmd->add_option("--options", options, "answer options as \"positive,negative\"");
    try_cmd->add_option("--backend", backend_spec, "endpoint url or mock:<completion>");
    try_cmd->add_option("--model", model, "model id sent to the backend");
    try_cmd->add_option("--max-new-tokens", max_new_tokens, "output length");
    try_cmd->add_option("--budget", budget, "token budget");

    CLI11_PARSE(app, argc, argv);
    flags.seed_set = seed_opt->count() > 0;

    try {
        if (*ingest) return cmd_ingest(flags, corpus_path, split_of(), language_of(), out_path);
        if (*render_cmd)
            return cmd_render(flags, corpus_path, doc_id, split_of(), language_of(), template_path,
                              budget, truncation_side_from_string(truncation_name));
        if (*baselines)
            return cmd_baselines(flags, corpus_path, *split_of(), language_of(), simulate);
        if (*run) return cmd_run(flags);
        if (*swap) return cmd_swap(flags);
        if (*sweep) return cmd_sweep(flags, lengths);
        if (*report) return cmd_report(run_dir, format);
        if (*try_cmd)
            return cmd_try(flags, corpus_path, doc_id, split_of(), question, options, backend_spec,
                           model, max_new_tokens, budget);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
