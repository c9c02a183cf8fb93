#pragma once

#include "merit/tensor.hpp"

#include <complex>
#include <cstddef>
#include <vector>

namespace merit {

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 8000.0;

    std::size_t size() const noexcept { return samples.size(); }
};

/// Throws if the waveform is empty or holds non-finite samples.
void validate_waveform(const Waveform& w);

/// Number of full frames: floor((length - frame) / hop) + 1. Throws when the
/// signal is shorter than one frame.
std::size_t frame_count(std::size_t length, std::size_t frame, std::size_t hop);

struct StftConfig {
    std::size_t window = 64;
    std::size_t hop = 32;
    std::size_t fft_size = 64;

    std::size_t bins() const noexcept { return fft_size / 2 + 1; }
};

/// Periodic Hann window.
std::vector<double> hann_window(std::size_t n);

/// Log-compressed STFT magnitudes, frames x bins.
struct SpectralFeature {
    Tensor magnitude;
    StftConfig stft;

    std::size_t frames() const noexcept { return magnitude.rows(); }
    std::size_t bins() const noexcept { return magnitude.cols(); }
};

struct ComplexSpectrogram {
    std::vector<std::complex<double>> values;  // frames x bins, row-major
    std::size_t frames = 0;
    std::size_t bins = 0;
    StftConfig stft;
    std::size_t length = 0;  // source signal length in samples
};

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);

/// log(1 + |STFT(w)|) over Hann-windowed frames.
SpectralFeature log1p_spectrum(const Waveform& w, const StftConfig& cfg);
SpectralFeature log1p_spectrum(const ComplexSpectrogram& spec);

/// Rebuilds a waveform from log1p magnitudes using the phase of `phase_source`
/// (weighted overlap-add with a Hann synthesis window). Samples with no
/// window support are copied from `fallback`.
Waveform resynthesize(const Tensor& log1p_magnitude, const ComplexSpectrogram& phase_source, const Waveform& fallback);

}  // namespace merit
