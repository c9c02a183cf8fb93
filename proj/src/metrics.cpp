#include "merit/metrics.hpp"

#include "merit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace merit {

double ssnr(const Waveform& clean, const Waveform& estimate, const SsnrConfig& cfg)
{
    if (clean.size() != estimate.size())
        throw Error("ssnr: length mismatch (" + std::to_string(clean.size()) + " vs " +
                    std::to_string(estimate.size()) + ")");
    if (cfg.hop == 0 || cfg.frame == 0)
        throw Error("ssnr: frame and hop must be positive");
    if (!(cfg.floor_db <= cfg.ceil_db))
        throw Error("ssnr: floor must not exceed ceil");
    const std::size_t frames = frame_count(clean.size(), cfg.frame, cfg.hop);
    double total = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        double signal = 0.0, error = 0.0;
        for (std::size_t i = f * cfg.hop; i < f * cfg.hop + cfg.frame; ++i) {
            const double c = clean.samples[i];
            const double d = c - estimate.samples[i];
            signal += c * c;
            error += d * d;
        }
        double db;
        if (error == 0.0)
            db = cfg.ceil_db;
        else if (signal == 0.0)
            db = cfg.floor_db;
        else
            db = std::clamp(10.0 * std::log10(signal / error), cfg.floor_db, cfg.ceil_db);
        total += db;
    }
    return total / static_cast<double>(frames);
}

F1Scores f1_scores(std::span<const std::size_t> predictions, std::span<const std::size_t> labels, std::size_t classes)
{
    if (predictions.size() != labels.size())
        throw Error("f1_scores: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
    if (labels.empty())
        throw Error("f1_scores: empty input");
    std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes || predictions[i] >= classes)
            throw Error("f1_scores: class index out of range");
        if (labels[i] == predictions[i]) {
            ++tp[labels[i]];
            ++correct;
        } else {
            ++fp[predictions[i]];
            ++fn[labels[i]];
        }
    }
    double macro = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
        if (denom > 0)
            macro += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    }
    F1Scores out;
    out.macro = macro / static_cast<double>(classes);
    // Global FP and FN both equal the number of errors.
    out.micro = static_cast<double>(correct) / static_cast<double>(labels.size());
    return out;
}

std::size_t MetricsReport::total() const noexcept
{
    return std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
}

F1Scores majority_baseline(std::span<const std::size_t> labels)
{
    if (labels.empty())
        throw Error("majority_baseline: empty input");
    std::array<std::size_t, kEmotionClasses> counts{};
    for (std::size_t y : labels)
        ++counts.at(y);
    const std::size_t majority =
        static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const std::vector<std::size_t> preds(labels.size(), majority);
    return f1_scores(preds, labels);
}

}  // namespace merit
