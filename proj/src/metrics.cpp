#include "lexprompt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace lexprompt {

BaselineKind baseline_kind_from_string(std::string_view s) {
    if (s == "minority") return BaselineKind::minority;
    if (s == "majority") return BaselineKind::majority;
    if (s == "random_uniform" || s == "random") return BaselineKind::random_uniform;
    throw ConfigError("unknown baseline kind '" + std::string(s) + "'");
}

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::minority: return "minority";
        case BaselineKind::majority: return "majority";
        case BaselineKind::random_uniform: return "random_uniform";
    }
    return "random_uniform";
}

ConfusionMatrix confusion(std::span<const Label> gold, std::span<const Label> predicted) {
    if (gold.size() != predicted.size())
        throw std::invalid_argument("confusion: gold and predicted lengths differ (" +
                                    std::to_string(gold.size()) + " vs " +
                                    std::to_string(predicted.size()) + ")");
    if (gold.empty()) throw std::invalid_argument("confusion: empty input");

    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        bool gold_pos = gold[i] == Label::positive;
        bool pred_pos = predicted[i] == Label::positive;
        if (gold_pos && pred_pos) ++cm.tp;
        else if (!gold_pos && pred_pos) ++cm.fp;
        else if (gold_pos && !pred_pos) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

namespace {

double safe_div(double num, double den) {
    return den == 0.0 ? 0.0 : num / den;
}

double f1(double precision, double recall) {
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

} // namespace

MetricsReport compute_metrics(const ConfusionMatrix& cm, double unmapped_rate) {
    if (cm.total() == 0) throw std::invalid_argument("compute_metrics: empty confusion matrix");
    const double total = double(cm.total());

    const double precision_pos = safe_div(double(cm.tp), double(cm.tp + cm.fp));
    const double recall_pos = safe_div(double(cm.tp), double(cm.tp + cm.fn));
    const double precision_neg = safe_div(double(cm.tn), double(cm.tn + cm.fn));
    const double recall_neg = safe_div(double(cm.tn), double(cm.tn + cm.fp));
    const double f1_pos = f1(precision_pos, recall_pos);
    const double f1_neg = f1(precision_neg, recall_neg);

    const double freq_pos = double(cm.tp + cm.fn) / total;
    const double freq_neg = double(cm.tn + cm.fp) / total;

    MetricsReport report;
    report.precision_macro = (precision_pos + precision_neg) / 2.0;
    report.recall_macro = (recall_pos + recall_neg) / 2.0;
    report.f1_macro = (f1_pos + f1_neg) / 2.0;
    report.accuracy = double(cm.tp + cm.tn) / total;
    // Pooled counts collapse to accuracy when each instance gets exactly one
    // predicted label.
    report.f1_micro = report.accuracy;
    report.f1_weighted = freq_pos * f1_pos + freq_neg * f1_neg;
    report.support = cm.total();
    report.unmapped_rate = unmapped_rate;
    return report;
}

namespace {

// P(Bin(n, 1/2) = k) over a +-10 sigma window; anything outside carries no
// weight at double precision.
struct BinomialHalf {
    std::size_t lo = 0;
    std::vector<double> pmf;

    explicit BinomialHalf(std::size_t n) {
        double mu = double(n) / 2.0, sigma = std::sqrt(double(n)) / 2.0;
        lo = std::size_t(std::max(0.0, std::floor(mu - 10.0 * sigma)));
        std::size_t hi = std::size_t(std::min(double(n), std::ceil(mu + 10.0 * sigma)));
        const double log_half = -std::log(2.0);
        pmf.reserve(hi - lo + 1);
        for (std::size_t k = lo; k <= hi; ++k) {
            double logp = std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
                          std::lgamma(double(n - k) + 1.0) + double(n) * log_half;
            pmf.push_back(std::exp(logp));
        }
    }
};

// Exact E[metric] for the uniform coin-flip predictor on n_pos/n_neg gold
// labels. Correct predictions per class are independent Bin(count, 1/2)
// draws; every metric is a function of that pair.
MetricsReport expected_random_exact(std::size_t n_pos, std::size_t n_neg) {
    BinomialHalf pos(n_pos), neg(n_neg);
    double sums[6] = {0, 0, 0, 0, 0, 0};
    double weight_total = 0.0;
    for (std::size_t i = 0; i < pos.pmf.size(); ++i) {
        const std::size_t tp = pos.lo + i;
        const std::size_t fn = n_pos - tp;
        for (std::size_t j = 0; j < neg.pmf.size(); ++j) {
            const std::size_t tn = neg.lo + j;
            const std::size_t fp = n_neg - tn;
            const double w = pos.pmf[i] * neg.pmf[j];
            MetricsReport m = compute_metrics(ConfusionMatrix{tp, fp, fn, tn});
            sums[0] += w * m.precision_macro;
            sums[1] += w * m.recall_macro;
            sums[2] += w * m.f1_macro;
            sums[3] += w * m.f1_micro;
            sums[4] += w * m.f1_weighted;
            sums[5] += w * m.accuracy;
            weight_total += w;
        }
    }
    MetricsReport report;
    report.precision_macro = sums[0] / weight_total;
    report.recall_macro = sums[1] / weight_total;
    report.f1_macro = sums[2] / weight_total;
    report.f1_micro = sums[3] / weight_total;
    report.f1_weighted = sums[4] / weight_total;
    report.accuracy = sums[5] / weight_total;
    report.support = n_pos + n_neg;
    return report;
}

} // namespace

MetricsReport expected_baseline(BaselineKind kind, double p_majority, std::size_t sample_size) {
    if (!(p_majority >= 0.5 && p_majority <= 1.0))
        throw std::invalid_argument("expected_baseline: p_majority must be in [0.5, 1], got " +
                                    std::to_string(p_majority));
    const double p = p_majority;
    const double q = 1.0 - p;

    if (kind == BaselineKind::random_uniform && sample_size > 0 && sample_size <= 20000) {
        auto n_major = std::size_t(std::llround(p * double(sample_size)));
        return expected_random_exact(n_major, sample_size - n_major);
    }

    MetricsReport report;
    switch (kind) {
        case BaselineKind::majority:
            // Predicting the majority class everywhere: the majority class
            // gets precision p and recall 1, the minority class 0/0 -> 0.
            report.precision_macro = p / 2.0;
            report.recall_macro = 0.5;
            report.f1_macro = p / (1.0 + p);
            report.accuracy = p;
            report.f1_micro = p;
            report.f1_weighted = p * (2.0 * p / (1.0 + p));
            break;
        case BaselineKind::minority:
            report.precision_macro = q / 2.0;
            report.recall_macro = 0.5;
            report.f1_macro = q / (1.0 + q);
            report.accuracy = q;
            report.f1_micro = q;
            report.f1_weighted = q * (2.0 * q / (1.0 + q));
            break;
        case BaselineKind::random_uniform:
            // Uniform coin flip: each class c has expected precision f_c and
            // recall 1/2, so F1_c = f_c / (f_c + 1/2).
            report.precision_macro = 0.5;
            report.recall_macro = 0.5;
            report.f1_macro = 0.5 * (p / (p + 0.5) + q / (q + 0.5));
            report.accuracy = 0.5;
            report.f1_micro = 0.5;
            report.f1_weighted = p * (p / (p + 0.5)) + q * (q / (q + 0.5));
            break;
    }
    return report;
}

std::vector<Label> simulate_random_baseline(std::span<const Label> gold, std::uint64_t seed) {
    if (gold.empty()) throw std::invalid_argument("simulate_random_baseline: empty input");
    std::mt19937_64 gen(seed);
    std::vector<Label> predictions;
    predictions.reserve(gold.size());
    for (std::size_t i = 0; i < gold.size(); ++i) {
        // One engine draw per prediction; avoids std::uniform_int_distribution,
        // whose mapping is implementation-defined.
        predictions.push_back((gen() & 1) ? Label::positive : Label::negative);
    }
    return predictions;
}

double round_display(double value, int places) {
    double scale = std::pow(10.0, places);
    return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

std::string format_metric(double value, int places) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", places, round_display(value, places));
    return buf;
}

} // namespace lexprompt
