#pragma once

#include "lexprompt/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lexprompt {

// Binary counts with "positive" as the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
};

struct MetricsReport {
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double f1_micro = 0.0; // equals accuracy for single-label binary prediction
    double f1_weighted = 0.0;
    double accuracy = 0.0;
    std::size_t support = 0;
    double unmapped_rate = 0.0;
    int rounding = 3; // display decimal places

    bool operator==(const MetricsReport&) const = default;
};

enum class BaselineKind { minority, majority, random_uniform };

BaselineKind baseline_kind_from_string(std::string_view s);
std::string to_string(BaselineKind kind);

// Counts over equal-length gold/predicted vectors. Predictions must already
// be fully mapped (unmapped coercion happens in the runner).
ConfusionMatrix confusion(std::span<const Label> gold, std::span<const Label> predicted);

// Per-class precision/recall with the 0/0 convention fixed to 0, macro as
// the unweighted two-class mean, micro from pooled counts, weighted by
// true-class frequency.
MetricsReport compute_metrics(const ConfusionMatrix& cm, double unmapped_rate = 0.0);

// Expected scores of the three analytic baselines on a split whose majority
// class holds fraction p (0.5 <= p <= 1).
//
// The minority and majority predictors are deterministic, so their closed
// forms are exact at any sample size. For the uniform random predictor the
// closed forms are the large-sample limit; with `sample_size` > 0 the random
// scores are instead the exact finite-sample expectation, computed by
// enumerating the two independent Binomial(count, 1/2) draws. The difference
// is O(1/n) and only visible at 3-decimal display on knife-edge values
// (e.g. macro-F1 at p = 0.847, n = 1000: 0.43146 exact vs 0.43155 limit).
// Above 20000 items the correction cannot move a 3-decimal display and the
// closed forms are used regardless.
MetricsReport expected_baseline(BaselineKind kind, double p_majority,
                                std::size_t sample_size = 0);

// Seeded uniform coin-flip predictor, the simulated counterpart of the
// random_uniform closed form. Same seed, same predictions, on any platform.
std::vector<Label> simulate_random_baseline(std::span<const Label> gold, std::uint64_t seed);

// Half-up decimal rounding used for display, with a tiny tolerance so values
// that are exact halves in decimal (e.g. 0.825/2) round up despite binary
// representation error.
double round_display(double value, int places = 3);

// "%.3f"-style fixed formatting of a display-rounded value.
std::string format_metric(double value, int places = 3);

} // namespace lexprompt
