#include "merit/spectral.hpp"

#include "merit/error.hpp"
#include "merit/fft.hpp"

#include <cmath>
#include <numbers>

namespace merit {

void validate_waveform(const Waveform& w)
{
    if (w.samples.empty())
        throw Error("waveform is empty");
    for (double s : w.samples)
        if (!std::isfinite(s))
            throw NumericalError("waveform holds a non-finite sample");
}

std::size_t frame_count(std::size_t length, std::size_t frame, std::size_t hop)
{
    if (frame == 0 || hop == 0)
        throw Error("frame and hop must be positive");
    if (length < frame)
        throw Error("signal of " + std::to_string(length) + " samples is shorter than one frame (" +
                    std::to_string(frame) + ")");
    return (length - frame) / hop + 1;
}

std::vector<double> hann_window(std::size_t n)
{
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg)
{
    validate_waveform(w);
    if (cfg.fft_size < cfg.window)
        throw Error("fft_size must be at least the window length");
    const std::size_t frames = frame_count(w.size(), cfg.window, cfg.hop);
    const auto window = hann_window(cfg.window);
    RealFft fft(cfg.fft_size);
    ComplexSpectrogram out;
    out.frames = frames;
    out.bins = cfg.bins();
    out.stft = cfg;
    out.length = w.size();
    out.values.reserve(frames * out.bins);
    std::vector<double> buf(cfg.window);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * cfg.hop;
        for (std::size_t i = 0; i < cfg.window; ++i)
            buf[i] = w.samples[start + i] * window[i];
        const auto spec = fft.forward(buf);
        out.values.insert(out.values.end(), spec.begin(), spec.end());
    }
    return out;
}

SpectralFeature log1p_spectrum(const ComplexSpectrogram& spec)
{
    Tensor mag = Tensor::matrix(spec.frames, spec.bins);
    for (std::size_t k = 0; k < spec.values.size(); ++k)
        mag[k] = std::log1p(std::abs(spec.values[k]));
    return {std::move(mag), spec.stft};
}

SpectralFeature log1p_spectrum(const Waveform& w, const StftConfig& cfg)
{
    return log1p_spectrum(stft(w, cfg));
}

Waveform resynthesize(const Tensor& log1p_magnitude, const ComplexSpectrogram& phase_source, const Waveform& fallback)
{
    if (log1p_magnitude.rows() != phase_source.frames || log1p_magnitude.cols() != phase_source.bins)
        throw ShapeError("resynthesize: magnitude " + shape_string(log1p_magnitude.shape()) +
                         " does not match the phase source");
    if (fallback.size() != phase_source.length)
        throw ShapeError("resynthesize: fallback length mismatch");
    const StftConfig& cfg = phase_source.stft;
    const auto window = hann_window(cfg.window);
    RealFft fft(cfg.fft_size);

    std::vector<double> acc(phase_source.length, 0.0);
    std::vector<double> norm(phase_source.length, 0.0);
    std::vector<std::complex<double>> frame_spec(phase_source.bins);
    for (std::size_t t = 0; t < phase_source.frames; ++t) {
        for (std::size_t k = 0; k < phase_source.bins; ++k) {
            const std::complex<double> ref = phase_source.values[t * phase_source.bins + k];
            const double mag = std::expm1(log1p_magnitude.at(t, k));
            const double ref_mag = std::abs(ref);
            frame_spec[k] = ref_mag > 0.0 ? ref * (mag / ref_mag) : std::complex<double>(mag, 0.0);
        }
        const auto frame = fft.inverse(frame_spec);
        const std::size_t start = t * cfg.hop;
        for (std::size_t i = 0; i < cfg.window; ++i) {
            acc[start + i] += frame[i] * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    Waveform out;
    out.sample_rate = fallback.sample_rate;
    out.samples.resize(phase_source.length);
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.samples[i] = norm[i] > 1e-10 ? acc[i] / norm[i] : fallback.samples[i];
    return out;
}

}  // namespace merit
