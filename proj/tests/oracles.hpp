#pragma once

// Straight-line reference implementations used as test oracles. None of
// these call into the library's numeric code paths.

#include "merit/analytics.hpp"
#include "merit/moe.hpp"
#include "merit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const merit::Tensor& t)
{
    Matrix m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c)
            m[r][c] = t.at(r, c);
    return m;
}

inline std::vector<double> softmax(const std::vector<double>& v)
{
    double m = v[0];
    for (double x : v)
        m = std::max(m, x);
    std::vector<double> e(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        e[i] = std::exp(v[i] - m);
        s += e[i];
    }
    for (double& x : e)
        x /= s;
    return e;
}

/// relu(x W1 + b1) W2 + b2 for one frame.
inline std::vector<double> expert(const merit::Expert& e, const std::vector<double>& x)
{
    const auto& w1 = e.w1.value;
    const auto& w2 = e.w2.value;
    std::vector<double> h(w1.cols());
    for (std::size_t j = 0; j < w1.cols(); ++j) {
        double s = e.b1.value[j];
        for (std::size_t i = 0; i < x.size(); ++i)
            s += x[i] * w1.at(i, j);
        h[j] = s > 0.0 ? s : 0.0;
    }
    std::vector<double> y(w2.cols());
    for (std::size_t j = 0; j < w2.cols(); ++j) {
        double s = e.b2.value[j];
        for (std::size_t i = 0; i < h.size(); ++i)
            s += h[i] * w2.at(i, j);
        y[j] = s;
    }
    return y;
}

inline std::vector<double> gate(const merit::GatingNetwork& g, const std::vector<double>& x)
{
    std::vector<double> logits(g.n_experts());
    for (std::size_t n = 0; n < logits.size(); ++n) {
        double s = g.bias.value[n];
        for (std::size_t i = 0; i < x.size(); ++i)
            s += x[i] * g.weight.value.at(i, n);
        logits[n] = s;
    }
    return softmax(logits);
}

/// Keeps the K largest entries; an entry is kept when fewer than K entries
/// beat it, counting equal entries at lower indices as beating it.
inline std::vector<double> topk(const std::vector<double>& g, std::size_t k)
{
    std::vector<double> out(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        std::size_t better = 0;
        for (std::size_t j = 0; j < g.size(); ++j)
            if (g[j] > g[i] || (g[j] == g[i] && j < i))
                ++better;
        if (better < k)
            out[i] = g[i];
    }
    return out;
}

/// z_t = sum_n TopK(g_t, K)_n E_n(f_t), every frame evaluated independently.
inline Matrix moe(merit::ExpertPool& pool, const merit::GatingNetwork& g, const merit::Tensor& frames, std::size_t k)
{
    Matrix z;
    for (const auto& row : to_matrix(frames)) {
        const auto kept = topk(gate(g, row), k);
        std::vector<double> acc(pool.out_width(), 0.0);
        for (std::size_t n = 0; n < pool.size(); ++n) {
            if (kept[n] == 0.0)
                continue;
            const auto y = expert(pool.expert(n), row);
            for (std::size_t j = 0; j < y.size(); ++j)
                acc[j] += kept[n] * y[j];
        }
        z.push_back(acc);
    }
    return z;
}

inline double balancing(const std::vector<std::size_t>& top1, const Matrix& gates, double alpha)
{
    const std::size_t n = gates.front().size();
    const double t = static_cast<double>(gates.size());
    double total = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
        double f = 0.0, p = 0.0;
        for (std::size_t i = 0; i < gates.size(); ++i) {
            if (top1[i] == e)
                f += 1.0;
            p += gates[i][e];
        }
        total += (f / t) * (p / t);
    }
    return alpha * static_cast<double>(n) * total;
}

/// Direct DFT magnitudes of x (zero-padded to n), bins 0..n/2.
inline std::vector<double> dft_magnitude(const std::vector<double>& x, std::size_t n)
{
    std::vector<double> out(n / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        std::complex<double> s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            s += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n));
        out[k] = std::abs(s);
    }
    return out;
}

/// Per-class F1 from an explicit confusion matrix.
inline std::pair<double, double> f1(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& label,
                                    std::size_t classes)
{
    std::vector<std::vector<std::size_t>> cm(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < pred.size(); ++i)
        ++cm[label[i]][pred[i]];
    double macro = 0.0;
    double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        double tp = static_cast<double>(cm[c][c]), fp = 0.0, fn = 0.0;
        for (std::size_t o = 0; o < classes; ++o) {
            if (o == c)
                continue;
            fp += static_cast<double>(cm[o][c]);
            fn += static_cast<double>(cm[c][o]);
        }
        const double precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
        const double recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
        macro += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
    }
    return {macro / static_cast<double>(classes), tp_all / (tp_all + 0.5 * (fp_all + fn_all))};
}

inline double ssnr(const std::vector<double>& c, const std::vector<double>& e, std::size_t frame, std::size_t hop,
                   double lo, double hi)
{
    double total = 0.0;
    std::size_t frames = 0;
    for (std::size_t start = 0; start + frame <= c.size(); start += hop) {
        double sig = 0.0, err = 0.0;
        for (std::size_t i = start; i < start + frame; ++i) {
            sig += c[i] * c[i];
            err += (c[i] - e[i]) * (c[i] - e[i]);
        }
        double db = err == 0.0 ? hi : sig == 0.0 ? lo : 10.0 * std::log10(sig / err);
        total += std::min(hi, std::max(lo, db));
        ++frames;
    }
    return total / static_cast<double>(frames);
}

inline double switch_rate(const std::vector<std::size_t>& s)
{
    double changes = 0.0;
    for (std::size_t t = 0; t + 1 < s.size(); ++t)
        if (s[t] != s[t + 1])
            changes += 1.0;
    return changes / static_cast<double>(s.size() - 1);
}

inline double agreement(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    double same = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t)
        if (a[t] == b[t])
            same += 1.0;
    return same / static_cast<double>(a.size());
}

/// Random routing traces for analytics tests.
inline std::vector<merit::RoutingTrace> random_traces(merit::Rng& rng, std::size_t count, std::size_t n_experts)
{
    const double snrs[] = {-5.0, 0.0, 5.0, 10.0};
    std::vector<merit::RoutingTrace> out;
    for (std::size_t i = 0; i < count; ++i) {
        merit::RoutingTrace t;
        t.id = "u" + std::to_string(i);
        const std::size_t frames = 2 + rng.index(12);
        const bool sticky = rng.uniform() < 0.5;
        for (std::size_t f = 0; f < frames; ++f) {
            t.ser.push_back(sticky && f > 0 && rng.uniform() < 0.7 ? t.ser.back() : rng.index(n_experts));
            t.se.push_back(rng.uniform() < 0.4 ? t.ser.back() : rng.index(n_experts));
        }
        t.ser_gates = merit::Tensor::matrix(frames, n_experts, 1.0 / static_cast<double>(n_experts));
        t.se_gates = t.ser_gates;
        t.snr_db = snrs[rng.index(4)];
        t.family = static_cast<merit::NoiseFamily>(rng.index(3));
        t.label = rng.index(4);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace oracle
