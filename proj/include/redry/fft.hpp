#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "redry/common.hpp"

namespace redry {

// Iterative radix-2 FFT. Every transform size used by the toolkit
// (512/1024/2048 analysis windows) is a power of two, so no general-size
// machinery is needed.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) {
        throw ValidationError("fft: size must be a nonzero power of two");
    }
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / double(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= double(n);
    }
}

// Real-input forward FFT; returns bins 0..n/2 (the half spectrum).
inline std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
    std::vector<std::complex<double>> a(x.size());
    for (size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
    fft_inplace(a, false);
    a.resize(x.size() / 2 + 1);
    return a;
}

}  // namespace redry
