#pragma once

// Gating behavior statistics over routed utterances: how often the top-1
// expert changes between frames, how often the two tasks pick the same
// expert, and how frames are allocated across experts per condition.

#include "merit/data.hpp"
#include "merit/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace merit {

struct RoutingTrace {
    std::string id;
    std::vector<std::size_t> ser;  // top-1 expert per frame
    std::vector<std::size_t> se;
    Tensor ser_gates;  // T x N
    Tensor se_gates;
    double snr_db = 0.0;
    NoiseFamily family = NoiseFamily::Babble;
    std::size_t label = 0;
};

/// Throws if the sequences differ in length or hold an index >= n_experts.
void validate_trace(const RoutingTrace& trace, std::size_t n_experts);

/// Fraction of the T-1 frame boundaries where the expert changes. T >= 2.
double switch_rate(std::span<const std::size_t> indices);
/// Fraction of frames where both sequences pick the same expert.
double agreement(std::span<const std::size_t> ser, std::span<const std::size_t> se);

enum class GroupBy { Snr, Label, Family };

struct UsageRow {
    std::string condition;
    std::size_t frames = 0;
    std::vector<double> histogram;  // sums to 1
};

/// Normalized per-expert frame counts for each condition present in the
/// traces, ordered by SNR, label index or family.
std::vector<UsageRow> expert_usage(std::span<const RoutingTrace> traces, GroupBy key, Task task,
                                   std::size_t n_experts);

struct SwitchRow {
    std::string grouping;   // snr | label
    std::string condition;
    std::size_t utterances = 0;
    std::size_t frames = 0;
    double se_switch = 0.0;
    double ser_switch = 0.0;
    double agreement = 0.0;
};

struct AnalyticsReport {
    std::size_t n_experts = 0;
    std::vector<SwitchRow> switch_agreement;
    std::vector<UsageRow> usage_by_snr_ser, usage_by_snr_se;
    std::vector<UsageRow> usage_by_label_ser, usage_by_label_se;
};

/// Switch rates pool boundaries across utterances (sum of changes over sum
/// of T-1); agreement pools frames.
AnalyticsReport analytics_report(std::span<const RoutingTrace> traces, std::size_t n_experts);

/// Writes switch_agreement.csv, usage_by_snr.csv and usage_by_label.csv.
void write_analytics(const std::filesystem::path& dir, const AnalyticsReport& report);

std::string group_name(GroupBy key, const RoutingTrace& trace);

}  // namespace merit
