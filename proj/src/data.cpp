#include "merit/data.hpp"

#include "merit/error.hpp"
#include "merit/fft.hpp"
#include "merit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace merit {

namespace {

constexpr std::array<NoiseFamilySpec, 3> kFamilies{{
    {NoiseFamily::Babble, "babble", "seen", 0.0, 0.15},
    {NoiseFamily::Ambient, "ambient", "unseen-a", 0.18, 0.32},
    {NoiseFamily::Impulsive, "impulsive", "unseen-b", 0.34, 0.5},
}};

struct EmotionFamily {
    double f0_lo, f0_hi;
    double glide_lo, glide_hi;  // relative f0 change over the utterance
    std::size_t harmonics;
    double tilt_lo, tilt_hi;    // amplitude ratio between successive harmonics
    double am_lo, am_hi;        // modulation rate, Hz
    double depth_lo, depth_hi;
    double amp_lo, amp_hi;
};

// anger, sadness, happiness, neutral
constexpr std::array<EmotionFamily, kEmotionClasses> kEmotionFamilies{{
    {240.0, 330.0, -0.05, 0.05, 5, 0.75, 0.90, 25.0, 40.0, 0.30, 0.50, 0.70, 1.00},
    {110.0, 160.0, -0.15, -0.05, 3, 0.30, 0.50, 3.0, 8.0, 0.05, 0.20, 0.25, 0.45},
    {200.0, 290.0, 0.10, 0.30, 4, 0.55, 0.75, 12.0, 22.0, 0.20, 0.40, 0.50, 0.80},
    {140.0, 210.0, -0.03, 0.03, 4, 0.45, 0.65, 6.0, 12.0, 0.10, 0.25, 0.40, 0.65},
}};

void band_limit(std::vector<double>& x, double lo, double hi)
{
    RealFft fft(x.size());
    auto spec = fft.forward(x);
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) / n;
        if (f < lo || f >= hi)
            spec[k] = 0.0;
    }
    x = fft.inverse(spec);
}

std::string format_snr(double snr_db)
{
    std::ostringstream out;
    out << std::setprecision(6) << snr_db;
    return out.str();
}

}  // namespace

const std::array<NoiseFamilySpec, 3>& noise_families()
{
    return kFamilies;
}

const NoiseFamilySpec& noise_family_spec(NoiseFamily family)
{
    for (const auto& s : kFamilies)
        if (s.family == family)
            return s;
    throw Error("unknown noise family");
}

NoiseFamily parse_noise_family(std::string_view name)
{
    for (const auto& s : kFamilies)
        if (s.name == name)
            return s.family;
    throw Error("unknown noise family '" + std::string(name) + "'");
}

Waveform generate_noise(NoiseFamily family, std::size_t length, double sample_rate, std::uint64_t seed)
{
    if (length == 0)
        throw Error("noise length must be positive");
    const NoiseFamilySpec& spec = noise_family_spec(family);
    Rng rng(seed);
    std::vector<double> x(length, 0.0);
    switch (family) {
    case NoiseFamily::Babble: {
        for (double& v : x)
            v = 0.5 * rng.normal();
        // A few overlapping harmonic talkers with syllable-rate envelopes.
        for (int talker = 0; talker < 4; ++talker) {
            const double f0 = rng.uniform(100.0, 250.0);
            const double rate = rng.uniform(4.0, 12.0);
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (std::size_t i = 0; i < length; ++i) {
                const double t = static_cast<double>(i) / sample_rate;
                const double env = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * rate * t + phase);
                double s = 0.0;
                for (int h = 1; h <= 6; ++h)
                    s += std::pow(0.7, h - 1) * std::sin(2.0 * std::numbers::pi * f0 * h * t + phase * h);
                x[i] += env * s;
            }
        }
        break;
    }
    case NoiseFamily::Ambient: {
        const double drift = rng.uniform(0.5, 3.0);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < length; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            x[i] = (1.0 + 0.3 * std::sin(2.0 * std::numbers::pi * drift * t + phase)) * rng.normal();
        }
        break;
    }
    case NoiseFamily::Impulsive: {
        for (double& v : x)
            v = 0.05 * rng.normal();
        for (std::size_t i = 0; i < length; ++i)
            if (rng.uniform() < 0.02)
                x[i] += 4.0 * rng.normal();
        break;
    }
    }
    band_limit(x, spec.band_lo, spec.band_hi);
    return {std::move(x), sample_rate};
}

std::array<std::size_t, kEmotionClasses> split_class_counts(std::size_t n,
                                                            const std::array<double, kEmotionClasses>& proportions)
{
    double total = 0.0;
    for (double p : proportions) {
        if (!(p > 0.0))
            throw Error("class proportions must be positive");
        total += p;
    }
    std::array<std::size_t, kEmotionClasses> counts{};
    std::array<double, kEmotionClasses> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < kEmotionClasses; ++c) {
        const double exact = static_cast<double>(n) * proportions[c] / total;
        counts[c] = static_cast<std::size_t>(std::floor(exact));
        remainder[c] = exact - std::floor(exact);
        assigned += counts[c];
    }
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < kEmotionClasses; ++c)
            if (remainder[c] > remainder[best])
                best = c;
        ++counts[best];
        remainder[best] = -1.0;
        ++assigned;
    }
    return counts;
}

Waveform synth_emotion_signal(EmotionLabel label, std::size_t length, double sample_rate, std::uint64_t seed)
{
    const EmotionFamily& fam = kEmotionFamilies.at(make_label(label.index).index);
    Rng rng(seed);
    const double f0 = rng.uniform(fam.f0_lo, fam.f0_hi);
    const double glide = rng.uniform(fam.glide_lo, fam.glide_hi);
    const double tilt = rng.uniform(fam.tilt_lo, fam.tilt_hi);
    const double am_rate = rng.uniform(fam.am_lo, fam.am_hi);
    const double depth = rng.uniform(fam.depth_lo, fam.depth_hi);
    const double amp = rng.uniform(fam.amp_lo, fam.amp_hi);
    const double am_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> phases(fam.harmonics);
    for (double& p : phases)
        p = rng.uniform(0.0, 2.0 * std::numbers::pi);

    double norm = 0.0;
    for (std::size_t h = 0; h < fam.harmonics; ++h)
        norm += std::pow(tilt, static_cast<double>(h));

    Waveform w;
    w.sample_rate = sample_rate;
    w.samples.resize(length);
    double phase = 0.0;  // running phase of the fundamental
    for (std::size_t i = 0; i < length; ++i) {
        const double progress = static_cast<double>(i) / static_cast<double>(length);
        const double f = f0 * (1.0 + glide * progress);
        const double t = static_cast<double>(i) / sample_rate;
        const double env = 1.0 + depth * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase);
        double s = 0.0;
        for (std::size_t h = 0; h < fam.harmonics; ++h)
            s += std::pow(tilt, static_cast<double>(h)) * std::sin(static_cast<double>(h + 1) * phase + phases[h]);
        w.samples[i] = amp * env * s / norm + 0.005 * rng.normal();
        phase += 2.0 * std::numbers::pi * f / sample_rate;
    }
    quantize_f32(w);
    return w;
}

Corpus generate_corpus(std::uint64_t seed, const DataConfig& cfg)
{
    if (cfg.train == 0 || cfg.dev == 0 || cfg.test == 0)
        throw Error("corpus splits must be non-empty");
    if (cfg.utterance_samples == 0)
        throw Error("utterance length must be positive");
    Corpus corpus;
    const std::pair<const char*, std::size_t> splits[] = {{"train", cfg.train}, {"dev", cfg.dev}, {"test", cfg.test}};
    for (const auto& [name, size] : splits) {
        const auto counts = split_class_counts(size, cfg.class_proportions);
        std::vector<std::size_t> labels;
        for (std::size_t c = 0; c < kEmotionClasses; ++c)
            labels.insert(labels.end(), counts[c], c);
        Rng shuffle(derive_seed(seed, std::string("order.") + name));
        for (std::size_t i = labels.size(); i > 1; --i)
            std::swap(labels[i - 1], labels[shuffle.index(i)]);

        auto& out = std::string_view(name) == "train" ? corpus.train
                    : std::string_view(name) == "dev" ? corpus.dev
                                                      : corpus.test;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            std::ostringstream id;
            id << name << '-' << std::setw(5) << std::setfill('0') << i;
            Utterance u;
            u.id = id.str();
            u.label = make_label(labels[i]);
            u.clean = synth_emotion_signal(u.label, cfg.utterance_samples, cfg.sample_rate, derive_seed(seed, u.id));
            out.push_back(std::move(u));
        }
    }
    return corpus;
}

double signal_power(std::span<const double> x)
{
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db)
{
    validate_waveform(clean);
    validate_waveform(noise);
    if (noise.size() < clean.size())
        throw Error("noise (" + std::to_string(noise.size()) + " samples) shorter than clean (" +
                    std::to_string(clean.size()) + ")");
    const std::span<const double> cropped(noise.samples.data(), clean.size());
    const double p_clean = signal_power(clean.samples);
    const double p_noise = signal_power(cropped);
    if (!(p_clean > 0.0))
        throw Error("clean signal has zero power");
    if (!(p_noise > 0.0))
        throw Error("noise has zero power");
    const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
    Waveform out = clean;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.samples[i] += gain * cropped[i];
    return out;
}

NoisyUtterance contaminate(const Utterance& u, NoiseFamily family, double snr_db, std::uint64_t seed)
{
    const NoiseFamilySpec& spec = noise_family_spec(family);
    const std::uint64_t noise_seed = derive_seed(seed, u.id + "/" + std::string(spec.name) + "/" + format_snr(snr_db));
    const std::size_t extra = 256;
    Waveform noise = generate_noise(family, u.clean.size() + extra, u.clean.sample_rate, noise_seed);
    const std::size_t offset = static_cast<std::size_t>(splitmix64(noise_seed) % extra);
    Waveform cropped{std::vector<double>(noise.samples.begin() + offset, noise.samples.begin() + offset + u.clean.size()),
                     noise.sample_rate};
    NoisyUtterance out;
    out.source_id = u.id;
    out.family = family;
    out.snr_db = snr_db;
    out.noisy = mix_at_snr(u.clean, cropped, snr_db);
    quantize_f32(out.noisy);
    return out;
}

void quantize_f32(Waveform& w)
{
    for (double& s : w.samples)
        s = static_cast<double>(static_cast<float>(s));
}

void write_corpus(const std::filesystem::path& dir, const CorpusFiles& files)
{
    if (files.records.size() != files.signals.size())
        throw Error("corpus records and signals differ in count");
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "corpus.tsv");
    std::ofstream blob(dir / "corpus.f32", std::ios::binary);
    if (!manifest || !blob)
        throw Error("cannot open corpus files under " + dir.string());
    manifest << "id\tsplit\tlabel\tfamily\tsnr_db\toffset\tlength\n";
    std::size_t offset = 0;
    for (std::size_t i = 0; i < files.records.size(); ++i) {
        const CorpusRecord& r = files.records[i];
        const Waveform& w = files.signals[i];
        manifest << r.id << '\t' << r.split << '\t' << kEmotionNames.at(r.label) << '\t' << r.family << '\t';
        if (r.family == "clean")
            manifest << "inf";
        else
            manifest << format_snr(r.snr_db);
        manifest << '\t' << offset << '\t' << w.size() << '\n';
        for (double s : w.samples) {
            const float f = static_cast<float>(s);
            unsigned char bytes[4];
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int b = 0; b < 4; ++b)
                bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
            blob.write(reinterpret_cast<const char*>(bytes), 4);
        }
        offset += w.size();
    }
}

CorpusFiles read_corpus(const std::filesystem::path& dir, double sample_rate)
{
    std::ifstream manifest(dir / "corpus.tsv");
    std::ifstream blob(dir / "corpus.f32", std::ios::binary);
    if (!manifest || !blob)
        throw Error("no corpus found under " + dir.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
    CorpusFiles files;
    std::string line;
    std::getline(manifest, line);
    while (std::getline(manifest, line)) {
        if (line.empty())
            continue;
        std::istringstream in(line);
        CorpusRecord r;
        std::string label, snr;
        std::getline(in, r.id, '\t');
        std::getline(in, r.split, '\t');
        std::getline(in, label, '\t');
        std::getline(in, r.family, '\t');
        std::getline(in, snr, '\t');
        in >> r.offset >> r.length;
        const auto it = std::find(kEmotionNames.begin(), kEmotionNames.end(), label);
        if (it == kEmotionNames.end())
            throw Error("corpus manifest: unknown label '" + label + "'");
        r.label = static_cast<std::size_t>(it - kEmotionNames.begin());
        r.snr_db = r.family == "clean" ? std::numeric_limits<double>::infinity() : std::stod(snr);
        if ((r.offset + r.length) * 4 > raw.size())
            throw Error("corpus manifest: record " + r.id + " points past the container end");
        Waveform w;
        w.sample_rate = sample_rate;
        w.samples.resize(r.length);
        for (std::size_t i = 0; i < r.length; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[(r.offset + i) * 4 + b])) << (8 * b);
            float f;
            std::memcpy(&f, &bits, 4);
            w.samples[i] = f;
        }
        files.records.push_back(std::move(r));
        files.signals.push_back(std::move(w));
    }
    return files;
}

}  // namespace merit
