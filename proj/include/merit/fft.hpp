#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

namespace merit {

/// Real-input FFT of a fixed size backed by FFTW (FFTW_ESTIMATE plans, so
/// results are deterministic run to run). Not thread-safe; use one instance
/// per thread.
class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();
    RealFft(RealFft&&) noexcept;
    RealFft& operator=(RealFft&&) noexcept;

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return n_ / 2 + 1; }

    /// Forward transform; input shorter than n is zero-padded.
    std::vector<std::complex<double>> forward(std::span<const double> input);
    /// Inverse transform normalized by 1/n (so inverse(forward(x)) == x).
    std::vector<double> inverse(std::span<const std::complex<double>> spectrum);

private:
    struct Impl;
    std::size_t n_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace merit
