#include "merit/analytics.hpp"

#include "merit/error.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace merit {

namespace {

std::string format_number(double v)
{
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

double group_order(GroupBy key, const RoutingTrace& t)
{
    switch (key) {
    case GroupBy::Snr:
        return t.snr_db;
    case GroupBy::Label:
        return static_cast<double>(t.label);
    case GroupBy::Family:
        return static_cast<double>(t.family);
    }
    return 0.0;
}

const std::vector<std::size_t>& sequence(const RoutingTrace& t, Task task)
{
    return task == Task::Ser ? t.ser : t.se;
}

struct SwitchTally {
    std::size_t utterances = 0, frames = 0, boundaries = 0;
    std::size_t se_changes = 0, ser_changes = 0, agree = 0;
};

std::size_t count_changes(const std::vector<std::size_t>& s)
{
    std::size_t n = 0;
    for (std::size_t t = 1; t < s.size(); ++t)
        n += s[t] != s[t - 1];
    return n;
}

std::vector<SwitchRow> switch_rows(std::span<const RoutingTrace> traces, GroupBy key, const char* grouping)
{
    std::map<std::pair<double, std::string>, SwitchTally> groups;
    for (const auto& t : traces) {
        auto& g = groups[{group_order(key, t), group_name(key, t)}];
        ++g.utterances;
        g.frames += t.ser.size();
        g.boundaries += t.ser.size() - 1;
        g.se_changes += count_changes(t.se);
        g.ser_changes += count_changes(t.ser);
        for (std::size_t i = 0; i < t.ser.size(); ++i)
            g.agree += t.ser[i] == t.se[i];
    }
    std::vector<SwitchRow> rows;
    for (const auto& [k, g] : groups) {
        SwitchRow r;
        r.grouping = grouping;
        r.condition = k.second;
        r.utterances = g.utterances;
        r.frames = g.frames;
        r.se_switch = static_cast<double>(g.se_changes) / static_cast<double>(g.boundaries);
        r.ser_switch = static_cast<double>(g.ser_changes) / static_cast<double>(g.boundaries);
        r.agreement = static_cast<double>(g.agree) / static_cast<double>(g.frames);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_usage(std::ofstream& out, const char* task, const std::vector<UsageRow>& rows)
{
    for (const auto& r : rows) {
        out << r.condition << ',' << task << ',' << r.frames;
        for (double h : r.histogram)
            out << ',' << format_number(h);
        out << '\n';
    }
}

void write_usage_file(const std::filesystem::path& path, std::size_t n, const std::vector<UsageRow>& ser,
                      const std::vector<UsageRow>& se)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "condition,task,frames";
    for (std::size_t e = 0; e < n; ++e)
        out << ",expert_" << e;
    out << '\n';
    write_usage(out, "se", se);
    write_usage(out, "ser", ser);
}

}  // namespace

std::string group_name(GroupBy key, const RoutingTrace& trace)
{
    switch (key) {
    case GroupBy::Snr: {
        std::ostringstream out;
        out << trace.snr_db << "dB";
        return out.str();
    }
    case GroupBy::Label:
        return std::string(kEmotionNames.at(trace.label));
    case GroupBy::Family:
        return std::string(noise_family_spec(trace.family).name);
    }
    return {};
}

void validate_trace(const RoutingTrace& trace, std::size_t n_experts)
{
    if (trace.ser.size() != trace.se.size())
        throw Error("trace " + trace.id + ": SER and SE sequences differ in length");
    for (std::size_t i = 0; i < trace.ser.size(); ++i)
        if (trace.ser[i] >= n_experts || trace.se[i] >= n_experts)
            throw Error("trace " + trace.id + ": expert index out of range at frame " + std::to_string(i));
}

double switch_rate(std::span<const std::size_t> indices)
{
    if (indices.size() < 2)
        throw Error("switch_rate needs at least two frames");
    std::size_t changes = 0;
    for (std::size_t t = 1; t < indices.size(); ++t)
        changes += indices[t] != indices[t - 1];
    return static_cast<double>(changes) / static_cast<double>(indices.size() - 1);
}

double agreement(std::span<const std::size_t> ser, std::span<const std::size_t> se)
{
    if (ser.size() != se.size())
        throw Error("agreement: length mismatch (" + std::to_string(ser.size()) + " vs " +
                    std::to_string(se.size()) + ")");
    if (ser.empty())
        throw Error("agreement: empty sequences");
    std::size_t same = 0;
    for (std::size_t t = 0; t < ser.size(); ++t)
        same += ser[t] == se[t];
    return static_cast<double>(same) / static_cast<double>(ser.size());
}

std::vector<UsageRow> expert_usage(std::span<const RoutingTrace> traces, GroupBy key, Task task,
                                   std::size_t n_experts)
{
    if (traces.empty())
        throw Error("expert_usage: no traces");
    std::map<std::pair<double, std::string>, std::vector<std::size_t>> counts;
    for (const auto& t : traces) {
        validate_trace(t, n_experts);
        auto& c = counts[{group_order(key, t), group_name(key, t)}];
        c.resize(n_experts, 0);
        for (std::size_t e : sequence(t, task))
            ++c[e];
    }
    std::vector<UsageRow> rows;
    for (const auto& [k, c] : counts) {
        std::size_t frames = 0;
        for (std::size_t v : c)
            frames += v;
        if (frames == 0)
            continue;
        UsageRow r;
        r.condition = k.second;
        r.frames = frames;
        for (std::size_t v : c)
            r.histogram.push_back(static_cast<double>(v) / static_cast<double>(frames));
        rows.push_back(std::move(r));
    }
    return rows;
}

AnalyticsReport analytics_report(std::span<const RoutingTrace> traces, std::size_t n_experts)
{
    AnalyticsReport report;
    report.n_experts = n_experts;
    if (traces.empty())
        return report;
    for (const auto& t : traces) {
        validate_trace(t, n_experts);
        if (t.ser.size() < 2)
            throw Error("trace " + t.id + ": switch rate needs at least two frames");
    }
    report.switch_agreement = switch_rows(traces, GroupBy::Snr, "snr");
    for (auto& r : switch_rows(traces, GroupBy::Label, "label"))
        report.switch_agreement.push_back(std::move(r));
    report.usage_by_snr_ser = expert_usage(traces, GroupBy::Snr, Task::Ser, n_experts);
    report.usage_by_snr_se = expert_usage(traces, GroupBy::Snr, Task::Se, n_experts);
    report.usage_by_label_ser = expert_usage(traces, GroupBy::Label, Task::Ser, n_experts);
    report.usage_by_label_se = expert_usage(traces, GroupBy::Label, Task::Se, n_experts);
    return report;
}

void write_analytics(const std::filesystem::path& dir, const AnalyticsReport& report)
{
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "switch_agreement.csv");
    if (!out)
        throw Error("cannot write " + (dir / "switch_agreement.csv").string());
    out << "grouping,condition,utterances,frames,se_switch,ser_switch,agreement\n";
    for (const auto& r : report.switch_agreement)
        out << r.grouping << ',' << r.condition << ',' << r.utterances << ',' << r.frames << ','
            << format_number(r.se_switch) << ',' << format_number(r.ser_switch) << ','
            << format_number(r.agreement) << '\n';
    write_usage_file(dir / "usage_by_snr.csv", report.n_experts, report.usage_by_snr_ser, report.usage_by_snr_se);
    write_usage_file(dir / "usage_by_label.csv", report.n_experts, report.usage_by_label_ser,
                     report.usage_by_label_se);
}

}  // namespace merit
