#pragma once

#include "lexprompt/backend.hpp"
#include "lexprompt/completion_parser.hpp"
#include "lexprompt/corpus.hpp"
#include "lexprompt/metrics.hpp"
#include "lexprompt/prompt_template.hpp"
#include "lexprompt/types.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lexprompt {

// What to do with completions no rule could map. The rate of unmapped
// completions is reported either way; the policy only decides the final
// label.
enum class UnmappedPolicy { coerce_to_majority, coerce_to_negative, exclude_and_report };

UnmappedPolicy unmapped_policy_from_string(std::string_view s);
std::string to_string(UnmappedPolicy policy);

struct ExperimentConfig {
    std::string corpus_path;
    Split split = Split::validation;
    std::optional<Language> language; // corpus filter
    // Template: a file path wins over a builtin language; with neither set the
    // corpus language filter selects the builtin.
    std::optional<Language> template_language;
    std::optional<std::string> template_path;
    BackendDescriptor backend;
    GenerationParams generation;
    std::size_t budget = 2048;
    TruncationSide truncation = TruncationSide::head;
    UnmappedPolicy unmapped_policy = UnmappedPolicy::coerce_to_majority;
    std::optional<std::string> rules_path;
    std::uint64_t seed = 0;
    std::string output_dir;
    int in_flight = 4;
    std::string label_scheme = "generic"; // display names: generic, echr or fscs
    bool exact_token_count = false;       // count with the backend tokenizer
};

ExperimentConfig load_config(const std::string& path);

// Per-document audit trail behind every reported number.
struct PredictionRecord {
    std::string doc_id;
    Label gold_label = Label::negative;
    std::size_t token_count = 0;
    bool truncated = false;
    std::string completion_text;
    Outcome outcome = Outcome::unmapped;
    std::string rule_id = "none";
    // Empty only under exclude_and_report for an unmapped completion.
    std::optional<Label> final_label;
    // Cited articles from the completion; engaged only when the corpus
    // carries gold article sets.
    std::optional<std::set<int>> predicted_articles;
};

struct ArticleSummary {
    std::size_t exact_match_count = 0;
    std::size_t any_overlap_count = 0;
    double mean_jaccard = 0.0;
};

struct ExperimentResult {
    // Semantic identity of the experiment: corpus selection, template, rules,
    // generation parameters, budget, policy and seed. Deliberately excludes
    // the transport (live http vs mock vs cache replay) and the output
    // directory, so a replayed run is the same experiment.
    std::string fingerprint;
    std::string template_fp;
    std::string rules_fp;
    std::string model_id;
    Split split = Split::validation;
    LabelScheme scheme = LabelScheme::generic();
    DistributionStats gold_distribution;
    std::vector<PredictionRecord> records;
    MetricsReport metrics;
    double unmapped_rate = 0.0;
    double truncation_rate = 0.0;
    std::optional<ArticleSummary> articles;
    std::size_t n_documents = 0;
    bool complete = true;
    double coverage = 1.0;
    std::vector<std::string> failed_doc_ids;
    // In-memory only (never serialized): backend invocations this run made.
    std::uint64_t backend_calls = 0;
};

// Renders, generates (cache-first), parses and scores every document of the
// selected split, then persists result.json, records.jsonl, report.txt and
// report.csv plus the completion cache under config.output_dir. Backend
// exhaustion on individual documents yields a partial result flagged
// incomplete; an interrupted run resumes from the cache.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct SwapOutcome {
    ExperimentResult original;
    ExperimentResult swapped;
    double macro_f1_original = 0.0;
    double macro_f1_swapped = 0.0;
    double abs_difference = 0.0;
};

// Runs the experiment twice, the second time with the answer options
// exchanged (distinct cache namespace), and juxtaposes the macro-F1 scores.
SwapOutcome option_swap_experiment(const ExperimentConfig& config);

std::string swap_report_text(const SwapOutcome& outcome);

struct SweepEntry {
    int max_new_tokens = 0;
    MetricsReport metrics;
};

struct SweepOutcome {
    std::vector<SweepEntry> entries;
    int best_length = 0; // argmax of macro-F1 on the configured split
    Split selection_split = Split::validation;
    bool all_complete = true;
};

// One full run per output length, cache namespaced by length.
SweepOutcome sweep_output_length(const ExperimentConfig& config, const std::vector<int>& lengths);

std::string sweep_report_text(const SweepOutcome& outcome);

enum class ReportFormat { table, csv, json };

ReportFormat report_format_from_string(std::string_view s);

// Serialized scores: the model row plus the three analytic baseline rows
// computed from the split's gold distribution. The table form displays at
// 3 decimals; csv and json carry full precision. Partial results carry an
// INCOMPLETE banner and the coverage fraction.
std::string emit_report(const ExperimentResult& result, ReportFormat format);

// The baseline block alone, for a corpus distribution (cmd_baselines).
std::string baselines_table(const DistributionStats& stats);

// Metrics recomputed from persisted records; equals the stored MetricsReport
// exactly (replay identity).
MetricsReport recompute_from_records(std::span<const PredictionRecord> records);

void save_result(const ExperimentResult& result, const std::string& dir);
ExperimentResult load_result(const std::string& dir);

// Parsers for the machine report forms, mainly to pin the round-trip.
std::vector<std::pair<std::string, MetricsReport>> parse_report_json(const std::string& text);
std::vector<std::pair<std::string, MetricsReport>> parse_report_csv(const std::string& text);

LabelScheme label_scheme_from_string(std::string_view s);

} // namespace lexprompt
