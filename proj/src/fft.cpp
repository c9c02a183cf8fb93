#include "merit/fft.hpp"

#include "merit/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace merit {

namespace {
// FFTW's planner is not re-entrant.
std::mutex planner_mutex;
}  // namespace

struct RealFft::Impl {
    double* real = nullptr;
    fftw_complex* spec = nullptr;
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;

    ~Impl()
    {
        std::lock_guard lock(planner_mutex);
        if (r2c)
            fftw_destroy_plan(r2c);
        if (c2r)
            fftw_destroy_plan(c2r);
        fftw_free(real);
        fftw_free(spec);
    }
};

RealFft::RealFft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>())
{
    if (n == 0)
        throw Error("FFT size must be positive");
    const int ni = static_cast<int>(n);
    impl_->real = fftw_alloc_real(n);
    impl_->spec = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex);
    impl_->r2c = fftw_plan_dft_r2c_1d(ni, impl_->real, impl_->spec, FFTW_ESTIMATE);
    impl_->c2r = fftw_plan_dft_c2r_1d(ni, impl_->spec, impl_->real, FFTW_ESTIMATE);
}

RealFft::~RealFft() = default;
RealFft::RealFft(RealFft&&) noexcept = default;
RealFft& RealFft::operator=(RealFft&&) noexcept = default;

std::vector<std::complex<double>> RealFft::forward(std::span<const double> input)
{
    if (input.size() > n_)
        throw Error("FFT input longer than transform size");
    std::fill(impl_->real, impl_->real + n_, 0.0);
    std::copy(input.begin(), input.end(), impl_->real);
    fftw_execute(impl_->r2c);
    std::vector<std::complex<double>> out(bins());
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = {impl_->spec[k][0], impl_->spec[k][1]};
    return out;
}

std::vector<double> RealFft::inverse(std::span<const std::complex<double>> spectrum)
{
    if (spectrum.size() != bins())
        throw Error("inverse FFT expects n/2+1 bins");
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        impl_->spec[k][0] = spectrum[k].real();
        impl_->spec[k][1] = spectrum[k].imag();
    }
    fftw_execute(impl_->c2r);
    std::vector<double> out(impl_->real, impl_->real + n_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (double& v : out)
        v *= scale;
    return out;
}

}  // namespace merit
