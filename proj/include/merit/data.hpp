#pragma once

// Synthetic emotional-speech stand-in corpus and noise contamination.
//
// Each emotion class draws harmonic signals from its own parameter family
// (fundamental, glide, harmonic tilt, amplitude modulation, level), so the
// label is recoverable from short-time spectra. Three noise families occupy
// disjoint frequency bands; one contaminates training data, the other two
// are held out for evaluation.

#include "merit/heads.hpp"
#include "merit/spectral.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace merit {

enum class NoiseFamily { Babble, Ambient, Impulsive };

struct NoiseFamilySpec {
    NoiseFamily family;
    std::string_view name;
    std::string_view role;  // "seen", "unseen-a", "unseen-b"
    /// Occupied band as a fraction of the sample rate, [lo, hi).
    double band_lo;
    double band_hi;
};

const std::array<NoiseFamilySpec, 3>& noise_families();
const NoiseFamilySpec& noise_family_spec(NoiseFamily family);
NoiseFamily parse_noise_family(std::string_view name);

Waveform generate_noise(NoiseFamily family, std::size_t length, double sample_rate, std::uint64_t seed);

struct Utterance {
    std::string id;
    Waveform clean;
    EmotionLabel label;
};

struct NoisyUtterance {
    std::string source_id;
    Waveform noisy;
    NoiseFamily family = NoiseFamily::Babble;
    double snr_db = 0.0;
};

struct DataConfig {
    double sample_rate = 8000.0;
    std::size_t utterance_samples = 1024;
    std::size_t train = 512;
    std::size_t dev = 128;
    std::size_t test = 256;
    /// anger : sadness : happiness : neutral
    std::array<double, kEmotionClasses> class_proportions{10.0, 8.0, 29.0, 53.0};
};

struct Corpus {
    std::vector<Utterance> train;
    std::vector<Utterance> dev;
    std::vector<Utterance> test;
};

/// Per-class counts for a split of n utterances (largest-remainder rounding).
std::array<std::size_t, kEmotionClasses> split_class_counts(std::size_t n,
                                                            const std::array<double, kEmotionClasses>& proportions);

Waveform synth_emotion_signal(EmotionLabel label, std::size_t length, double sample_rate, std::uint64_t seed);

Corpus generate_corpus(std::uint64_t seed, const DataConfig& cfg);

double signal_power(std::span<const double> x);

/// clean + g * noise[0:len(clean)] with g chosen so that
/// 10 log10(P_clean / P_scaled_noise) == snr_db.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db);

/// Generates family noise for the utterance (seeded by id, family and level)
/// and mixes it at snr_db.
NoisyUtterance contaminate(const Utterance& u, NoiseFamily family, double snr_db, std::uint64_t seed);

/// Rounds every sample through 32-bit float, the on-disk precision.
void quantize_f32(Waveform& w);

// On-disk corpus: a tab-separated manifest with one record per signal and a
// single container of little-endian float32 samples.

struct CorpusRecord {
    std::string id;
    std::string split;   // train | dev | test
    std::size_t label = 0;
    std::string family;  // clean | babble | ambient | impulsive
    double snr_db = 0.0; // ignored for clean records
    std::size_t offset = 0;  // in samples
    std::size_t length = 0;
};

struct CorpusFiles {
    std::vector<CorpusRecord> records;
    std::vector<Waveform> signals;  // parallel to records
};

void write_corpus(const std::filesystem::path& dir, const CorpusFiles& files);
CorpusFiles read_corpus(const std::filesystem::path& dir, double sample_rate);

}  // namespace merit
