#include "merit/analytics.hpp"
#include "merit/data.hpp"
#include "merit/error.hpp"
#include "merit/fft.hpp"
#include "merit/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace merit;

namespace {

Waveform random_waveform(Rng& rng, std::size_t n, double scale = 1.0)
{
    Waveform w;
    for (std::size_t i = 0; i < n; ++i)
        w.samples.push_back(scale * rng.normal());
    return w;
}

double power(const std::vector<double>& x)
{
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return s / double(x.size());
}

std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

DataConfig small_data()
{
    DataConfig cfg;
    cfg.train = 60;
    cfg.dev = 20;
    cfg.test = 40;
    return cfg;
}

}  // namespace

TEST(Corpus, SplitCountsUseLargestRemainder)
{
    const std::array<double, 4> props{10, 8, 29, 53};
    EXPECT_EQ(split_class_counts(100, props), (std::array<std::size_t, 4>{10, 8, 29, 53}));
    EXPECT_EQ(split_class_counts(512, props), (std::array<std::size_t, 4>{51, 41, 149, 271}));
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 1 + rng.index(1000);
        std::array<double, 4> p{};
        for (double& v : p)
            v = rng.uniform(0.1, 10.0);
        const auto counts = split_class_counts(n, p);
        const double total = p[0] + p[1] + p[2] + p[3];
        std::size_t sum = 0;
        for (std::size_t c = 0; c < 4; ++c) {
            const double exact = double(n) * p[c] / total;
            EXPECT_GE(double(counts[c]), std::floor(exact));
            EXPECT_LE(double(counts[c]), std::floor(exact) + 1.0);
            sum += counts[c];
        }
        EXPECT_EQ(sum, n);
    }
}

TEST(Corpus, DeterministicWithExpectedProportions)
{
    const DataConfig cfg = small_data();
    const Corpus a = generate_corpus(11, cfg), b = generate_corpus(11, cfg), c = generate_corpus(12, cfg);
    ASSERT_EQ(a.train.size(), 60u);
    ASSERT_EQ(a.dev.size(), 20u);
    ASSERT_EQ(a.test.size(), 40u);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train[i].id, b.train[i].id);
        EXPECT_EQ(a.train[i].clean.samples, b.train[i].clean.samples);
    }
    EXPECT_NE(a.train[0].clean.samples, c.train[0].clean.samples);

    std::set<std::string> ids;
    const auto check = [&](const std::vector<Utterance>& split, std::size_t n) {
        std::array<std::size_t, 4> counts{};
        for (const auto& u : split) {
            ++counts[u.label.index];
            EXPECT_TRUE(ids.insert(u.id).second) << u.id;
            EXPECT_EQ(u.clean.size(), cfg.utterance_samples);
            for (double v : u.clean.samples) {
                EXPECT_TRUE(std::isfinite(v));
                EXPECT_EQ(v, double(float(v)));
            }
        }
        EXPECT_EQ(counts, split_class_counts(n, cfg.class_proportions));
    };
    check(a.train, 60);
    check(a.dev, 20);
    check(a.test, 40);
}

TEST(Corpus, ClassesSeparableByNearestCentroid)
{
    DataConfig cfg = small_data();
    cfg.class_proportions = {1, 1, 1, 1};
    const Corpus corpus = generate_corpus(5, cfg);
    const StftConfig stft{64, 32, 64};
    const auto profile = [&](const Utterance& u) {
        const SpectralFeature f = log1p_spectrum(u.clean, stft);
        std::vector<double> m(f.bins(), 0.0);
        for (std::size_t t = 0; t < f.frames(); ++t)
            for (std::size_t k = 0; k < f.bins(); ++k)
                m[k] += f.magnitude.at(t, k) / double(f.frames());
        return m;
    };
    std::vector<std::vector<double>> centroid(4, std::vector<double>(33, 0.0));
    std::array<double, 4> n{};
    for (const auto& u : corpus.train) {
        const auto p = profile(u);
        for (std::size_t k = 0; k < p.size(); ++k)
            centroid[u.label.index][k] += p[k];
        n[u.label.index] += 1.0;
    }
    for (std::size_t c = 0; c < 4; ++c)
        for (double& v : centroid[c])
            v /= n[c];
    std::size_t correct = 0;
    for (const auto& u : corpus.test) {
        const auto p = profile(u);
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < 4; ++c) {
            double d = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k)
                d += (p[k] - centroid[c][k]) * (p[k] - centroid[c][k]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        correct += best == u.label.index;
    }
    EXPECT_GT(double(correct) / double(corpus.test.size()), 0.8);
}

TEST(Mixing, RealizesRequestedSnr)
{
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 16 + rng.index(400);
        const Waveform clean = random_waveform(rng, n, rng.uniform(0.01, 10.0));
        const Waveform noise = random_waveform(rng, n + rng.index(50), rng.uniform(0.01, 10.0));
        const double snr = rng.uniform(-20.0, 30.0);
        const Waveform mix = mix_at_snr(clean, noise, snr);
        ASSERT_EQ(mix.size(), n);
        std::vector<double> residual(n);
        for (std::size_t k = 0; k < n; ++k)
            residual[k] = mix.samples[k] - clean.samples[k];
        EXPECT_NEAR(10.0 * std::log10(power(clean.samples) / power(residual)), snr, 1e-9);
    }
}

TEST(Mixing, RejectsDegenerateInputs)
{
    Rng rng(3);
    const Waveform clean = random_waveform(rng, 32);
    EXPECT_THROW(mix_at_snr(clean, Waveform{std::vector<double>(32, 0.0), 8000.0}, 5.0), Error);
    EXPECT_THROW(mix_at_snr(Waveform{std::vector<double>(32, 0.0), 8000.0}, clean, 5.0), Error);
    EXPECT_THROW(mix_at_snr(clean, random_waveform(rng, 31), 5.0), Error);
}

TEST(Mixing, ContaminationIsDeterministicAndCloseToTarget)
{
    const Corpus corpus = generate_corpus(4, small_data());
    for (const NoiseFamily f : {NoiseFamily::Babble, NoiseFamily::Ambient, NoiseFamily::Impulsive})
        for (double snr : {-5.0, 0.0, 5.0, 10.0}) {
            const Utterance& u = corpus.test[0];
            const NoisyUtterance a = contaminate(u, f, snr, 99), b = contaminate(u, f, snr, 99);
            EXPECT_EQ(a.noisy.samples, b.noisy.samples);
            EXPECT_EQ(a.family, f);
            EXPECT_EQ(a.source_id, u.id);
            std::vector<double> residual(u.clean.size());
            for (std::size_t k = 0; k < residual.size(); ++k)
                residual[k] = a.noisy.samples[k] - u.clean.samples[k];
            EXPECT_NEAR(10.0 * std::log10(power(u.clean.samples) / power(residual)), snr, 0.01);
        }
}

TEST(Noise, FamiliesOccupyDisjointBands)
{
    const auto& fams = noise_families();
    for (std::size_t a = 0; a < fams.size(); ++a)
        for (std::size_t b = a + 1; b < fams.size(); ++b)
            EXPECT_TRUE(fams[a].band_hi <= fams[b].band_lo || fams[b].band_hi <= fams[a].band_lo);
    const std::size_t n = 4096;
    RealFft fft(n);
    for (const auto& spec : fams) {
        const Waveform w = generate_noise(spec.family, n, 8000.0, 17);
        const auto bins = fft.forward(w.samples);
        double inside = 0.0, total = 0.0;
        for (std::size_t k = 0; k < bins.size(); ++k) {
            const double p = std::norm(bins[k]);
            const double frac = double(k) / double(n);
            total += p;
            if (frac >= spec.band_lo - 1e-3 && frac < spec.band_hi + 1e-3)
                inside += p;
        }
        EXPECT_GT(inside / total, 0.999) << spec.name;
    }
}

TEST(Noise, FamilyNames)
{
    for (const auto& spec : noise_families())
        EXPECT_EQ(parse_noise_family(spec.name), spec.family);
    EXPECT_EQ(noise_family_spec(NoiseFamily::Babble).role, "seen");
    EXPECT_THROW(parse_noise_family("traffic"), Error);
}

TEST(CorpusIo, RoundTrip)
{
    Rng rng(6);
    CorpusFiles files;
    for (int i = 0; i < 4; ++i) {
        CorpusRecord r;
        r.id = "train-0000" + std::to_string(i);
        r.split = i < 2 ? "train" : "test";
        r.label = std::size_t(i) % 4;
        r.family = i % 2 ? "ambient" : "clean";
        r.snr_db = i % 2 ? -5.0 : 0.0;
        Waveform w = random_waveform(rng, 100 + std::size_t(i));
        quantize_f32(w);
        r.length = w.size();
        files.records.push_back(r);
        files.signals.push_back(w);
    }
    const auto dir = scratch_dir("merit_corpus_io");
    write_corpus(dir, files);
    const CorpusFiles back = read_corpus(dir, 8000.0);
    ASSERT_EQ(back.records.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(back.records[i].id, files.records[i].id);
        EXPECT_EQ(back.records[i].split, files.records[i].split);
        EXPECT_EQ(back.records[i].label, files.records[i].label);
        EXPECT_EQ(back.records[i].family, files.records[i].family);
        if (files.records[i].family != "clean")
            EXPECT_EQ(back.records[i].snr_db, files.records[i].snr_db);
        EXPECT_EQ(back.signals[i].samples, files.signals[i].samples);
    }
    std::filesystem::resize_file(dir / "corpus.f32", 10);
    EXPECT_THROW(read_corpus(dir, 8000.0), Error);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(read_corpus(dir, 8000.0), Error);
}

TEST(Ssnr, Examples)
{
    Rng rng(7);
    const Waveform c = random_waveform(rng, 256);
    EXPECT_DOUBLE_EQ(ssnr(c, c), 35.0);
    Waveform zero{std::vector<double>(256, 0.0), 8000.0};
    EXPECT_NEAR(ssnr(c, zero), 0.0, 1e-12);
    Waveform scaled = c;
    for (double& v : scaled.samples)
        v *= 0.9;
    EXPECT_NEAR(ssnr(c, scaled), 20.0, 1e-9);
    EXPECT_DOUBLE_EQ(ssnr(zero, c), -10.0);
    EXPECT_DOUBLE_EQ(ssnr(zero, zero), 35.0);
    EXPECT_THROW(ssnr(c, random_waveform(rng, 255)), Error);
}

TEST(Ssnr, MatchesOracleAndStaysInRange)
{
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 64 + rng.index(500);
        const Waveform c = random_waveform(rng, n);
        Waveform e = c;
        const double level = std::pow(10.0, rng.uniform(-3.0, 1.0));
        for (double& v : e.samples)
            v += level * rng.normal();
        if (rng.uniform() < 0.2)
            for (std::size_t k = 0; k < std::min<std::size_t>(n, 96); ++k)
                e.samples[k] = c.samples[k];
        const double s = ssnr(c, e);
        EXPECT_NEAR(s, oracle::ssnr(c.samples, e.samples, 64, 32, -10.0, 35.0), 1e-9);
        EXPECT_GE(s, -10.0);
        EXPECT_LE(s, 35.0);
    }
}

TEST(F1, Examples)
{
    const std::size_t labels[] = {0, 1, 2, 3, 3};
    const F1Scores perfect = f1_scores(labels, labels);
    EXPECT_DOUBLE_EQ(perfect.macro, 1.0);
    EXPECT_DOUBLE_EQ(perfect.micro, 1.0);
    const std::size_t all_three[] = {3, 3, 3, 3, 3};
    const F1Scores s = f1_scores(all_three, labels);
    EXPECT_NEAR(s.macro, (2.0 * 2.0 / (4.0 + 3.0)) / 4.0, 1e-12);
    EXPECT_NEAR(s.micro, 0.4, 1e-12);
    EXPECT_THROW(f1_scores(std::span<const std::size_t>{}, std::span<const std::size_t>{}), Error);
    EXPECT_THROW(f1_scores(all_three, std::span<const std::size_t>(labels, 4)), Error);
}

TEST(F1, MatchesConfusionMatrixOracle)
{
    Rng rng(9);
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = 1 + rng.index(60);
        std::vector<std::size_t> p(n), y(n);
        for (std::size_t k = 0; k < n; ++k) {
            y[k] = rng.index(4);
            p[k] = rng.uniform() < 0.5 ? y[k] : rng.index(4);
        }
        const F1Scores s = f1_scores(p, y);
        const auto [macro, micro] = oracle::f1(p, y, 4);
        EXPECT_NEAR(s.macro, macro, 1e-12);
        EXPECT_NEAR(s.micro, micro, 1e-12);
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            acc += p[k] == y[k];
        EXPECT_NEAR(s.micro, acc / double(n), 1e-12);
        EXPECT_GE(s.macro, 0.0);
        EXPECT_LE(s.macro, 1.0);
    }
}

TEST(F1, MajorityBaseline)
{
    const std::size_t labels[] = {3, 3, 3, 0};
    const F1Scores m = majority_baseline(labels);
    EXPECT_NEAR(m.macro, (6.0 / 7.0) / 4.0, 1e-12);
    EXPECT_NEAR(m.micro, 0.75, 1e-12);
}

TEST(Switching, Examples)
{
    EXPECT_DOUBLE_EQ(switch_rate(std::vector<std::size_t>{0, 0, 1, 1}), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(switch_rate(std::vector<std::size_t>{0, 1, 0, 1}), 1.0);
    EXPECT_DOUBLE_EQ(switch_rate(std::vector<std::size_t>{2, 2, 2}), 0.0);
    EXPECT_THROW(switch_rate(std::vector<std::size_t>{1}), Error);
    EXPECT_DOUBLE_EQ(agreement(std::vector<std::size_t>{0, 1, 2, 2}, std::vector<std::size_t>{0, 2, 2, 1}), 0.5);
    EXPECT_THROW(agreement(std::vector<std::size_t>{0}, std::vector<std::size_t>{0, 1}), Error);
    EXPECT_THROW(agreement(std::vector<std::size_t>{}, std::vector<std::size_t>{}), Error);
}

TEST(Switching, MatchesOracle)
{
    Rng rng(10);
    for (const auto& t : oracle::random_traces(rng, 300, 4)) {
        EXPECT_DOUBLE_EQ(switch_rate(t.ser), oracle::switch_rate(t.ser));
        EXPECT_DOUBLE_EQ(agreement(t.ser, t.se), oracle::agreement(t.ser, t.se));
        EXPECT_GE(switch_rate(t.se), 0.0);
        EXPECT_LE(switch_rate(t.se), 1.0);
    }
}

TEST(Analytics, TraceValidation)
{
    RoutingTrace t;
    t.id = "x";
    t.ser = {0, 1};
    t.se = {0};
    EXPECT_THROW(validate_trace(t, 2), Error);
    t.se = {0, 2};
    EXPECT_THROW(validate_trace(t, 2), Error);
    t.se = {0, 1};
    EXPECT_NO_THROW(validate_trace(t, 2));
}

TEST(Analytics, UsageHistogramsAggregateToGlobal)
{
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        const auto traces = oracle::random_traces(rng, 40, 5);
        std::vector<double> global(5, 0.0);
        double frames = 0.0;
        for (const auto& t : traces)
            for (std::size_t e : t.se) {
                global[e] += 1.0;
                frames += 1.0;
            }
        for (const GroupBy key : {GroupBy::Snr, GroupBy::Label, GroupBy::Family}) {
            const auto rows = expert_usage(traces, key, Task::Se, 5);
            std::vector<double> agg(5, 0.0);
            std::size_t total = 0;
            for (const auto& r : rows) {
                double s = 0.0;
                for (std::size_t e = 0; e < 5; ++e) {
                    s += r.histogram[e];
                    agg[e] += r.histogram[e] * double(r.frames);
                }
                EXPECT_NEAR(s, 1.0, 1e-12);
                total += r.frames;
            }
            EXPECT_EQ(double(total), frames);
            for (std::size_t e = 0; e < 5; ++e)
                EXPECT_NEAR(agg[e], global[e], 1e-9);
        }
    }
    EXPECT_THROW(expert_usage(std::vector<RoutingTrace>{}, GroupBy::Snr, Task::Ser, 3), Error);
}

TEST(Analytics, UsageOrderAndTraceOrderInvariance)
{
    Rng rng(12);
    auto traces = oracle::random_traces(rng, 80, 3);
    const auto rows = expert_usage(traces, GroupBy::Snr, Task::Ser, 3);
    std::vector<std::string> names;
    for (const auto& r : rows)
        names.push_back(r.condition);
    EXPECT_EQ(names, (std::vector<std::string>{"-5dB", "0dB", "5dB", "10dB"}));
    const auto labels = expert_usage(traces, GroupBy::Label, Task::Ser, 3);
    ASSERT_EQ(labels.size(), 4u);
    EXPECT_EQ(labels[0].condition, "anger");
    EXPECT_EQ(labels[3].condition, "neutral");

    const AnalyticsReport a = analytics_report(traces, 3);
    std::reverse(traces.begin(), traces.end());
    const AnalyticsReport b = analytics_report(traces, 3);
    ASSERT_EQ(a.switch_agreement.size(), b.switch_agreement.size());
    for (std::size_t i = 0; i < a.switch_agreement.size(); ++i) {
        EXPECT_EQ(a.switch_agreement[i].condition, b.switch_agreement[i].condition);
        EXPECT_NEAR(a.switch_agreement[i].ser_switch, b.switch_agreement[i].ser_switch, 1e-12);
        EXPECT_NEAR(a.switch_agreement[i].agreement, b.switch_agreement[i].agreement, 1e-12);
    }
    for (std::size_t i = 0; i < a.usage_by_label_se.size(); ++i)
        EXPECT_EQ(a.usage_by_label_se[i].histogram, b.usage_by_label_se[i].histogram);
}

TEST(Analytics, PooledSwitchRowsMatchOracle)
{
    Rng rng(13);
    const auto traces = oracle::random_traces(rng, 100, 4);
    const AnalyticsReport report = analytics_report(traces, 4);
    std::map<std::string, std::array<double, 6>> acc;  // utts, frames, bounds, se, ser, agree
    for (const auto& t : traces) {
        auto& a = acc[group_name(GroupBy::Snr, t)];
        const double T = double(t.ser.size());
        a[0] += 1.0;
        a[1] += T;
        a[2] += T - 1.0;
        a[3] += oracle::switch_rate(t.se) * (T - 1.0);
        a[4] += oracle::switch_rate(t.ser) * (T - 1.0);
        a[5] += oracle::agreement(t.ser, t.se) * T;
    }
    std::size_t seen = 0;
    for (const auto& r : report.switch_agreement) {
        if (r.grouping != "snr")
            continue;
        ++seen;
        const auto& a = acc.at(r.condition);
        EXPECT_EQ(double(r.utterances), a[0]);
        EXPECT_EQ(double(r.frames), a[1]);
        EXPECT_NEAR(r.se_switch, a[3] / a[2], 1e-12);
        EXPECT_NEAR(r.ser_switch, a[4] / a[2], 1e-12);
        EXPECT_NEAR(r.agreement, a[5] / a[1], 1e-12);
    }
    EXPECT_EQ(seen, acc.size());
    EXPECT_EQ(report.switch_agreement.size(), acc.size() + 4);
}

TEST(Analytics, CsvLayout)
{
    Rng rng(14);
    const auto dir = scratch_dir("merit_analytics_csv");
    write_analytics(dir, analytics_report(oracle::random_traces(rng, 30, 3), 3));
    const auto header = [&](const char* name) {
        std::ifstream in(dir / name);
        std::string line;
        std::getline(in, line);
        return line;
    };
    EXPECT_EQ(header("switch_agreement.csv"), "grouping,condition,utterances,frames,se_switch,ser_switch,agreement");
    EXPECT_EQ(header("usage_by_snr.csv"), "condition,task,frames,expert_0,expert_1,expert_2");
    EXPECT_EQ(header("usage_by_label.csv"), "condition,task,frames,expert_0,expert_1,expert_2");
    std::filesystem::remove_all(dir);
}
