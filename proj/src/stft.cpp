#include "redry/stft.hpp"

#include <algorithm>
#include <cmath>

#include "redry/fft.hpp"

namespace redry {

void StftConfig::validate(int sample_rate) const {
    if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0) throw ValidationError("StftConfig: n_fft must be a power of two");
    if (window_size <= 0 || window_size > n_fft) throw ValidationError("StftConfig: bad window_size");
    if (hop_length <= 0 || n_fft % hop_length != 0) throw ValidationError("StftConfig: hop_length must divide n_fft");
    if (n_mels <= 0) throw ValidationError("StftConfig: bad n_mels");
    if (f_max > sample_rate / 2.0 + 1e-9) throw ValidationError("StftConfig: f_max above Nyquist");
    if (f_min < 0.0 || f_min >= f_max) throw ValidationError("StftConfig: bad f_min/f_max");
    if (log_floor <= 0.0) throw ValidationError("StftConfig: log_floor must be positive");
}

std::vector<double> hann_window(int size) {
    std::vector<double> w(size);
    for (int i = 0; i < size; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(size));
    }
    return w;
}

namespace {

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (hz < min_log_hz) return hz / f_sp;
    return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (mel < min_log_mel) return mel * f_sp;
    return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

std::vector<double> mel_band_edges(int n_mels, double f_min, double f_max) {
    const double mel_lo = hz_to_mel(f_min);
    const double mel_hi = hz_to_mel(f_max);
    std::vector<double> hz(n_mels + 2);
    for (int i = 0; i < n_mels + 2; ++i) {
        hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(n_mels + 1));
    }
    return hz;
}

}  // namespace

std::vector<double> mel_center_frequencies(int n_mels, int /*sample_rate*/, double f_min, double f_max) {
    std::vector<double> edges = mel_band_edges(n_mels, f_min, f_max);
    return std::vector<double>(edges.begin() + 1, edges.end() - 1);
}

std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate, double f_min, double f_max) {
    const int n_bins = n_fft / 2 + 1;
    std::vector<double> edges = mel_band_edges(n_mels, f_min, f_max);
    std::vector<double> fb(size_t(n_mels) * n_bins, 0.0);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
        const double norm = 2.0 / (hi - lo);  // Slaney area normalization
        for (int k = 0; k < n_bins; ++k) {
            const double freq = double(k) * double(sample_rate) / double(n_fft);
            double w = 0.0;
            if (freq > lo && freq < hi) {
                w = (freq <= center) ? (freq - lo) / (center - lo) : (hi - freq) / (hi - center);
            }
            fb[size_t(m) * n_bins + k] = w * norm;
        }
    }
    return fb;
}

int64_t reflect_index(int64_t i, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    int64_t j = i % period;
    if (j < 0) j += period;
    return (j < n) ? j : period - j;
}

std::vector<double> stft_magnitude(const std::vector<float>& samples, int n_fft,
                                   int window_size, int hop_length) {
    const int64_t n = int64_t(samples.size());
    const int n_bins = n_fft / 2 + 1;
    const int64_t frames = frame_count(n, hop_length);
    const std::vector<double> window = hann_window(window_size);
    const int pad = (n_fft - window_size) / 2;  // window centered in the FFT buffer

    std::vector<double> mag(size_t(frames) * n_bins);
    std::vector<std::complex<double>> buf(n_fft);
    for (int64_t t = 0; t < frames; ++t) {
        const int64_t center = t * hop_length;
        std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
        for (int i = 0; i < window_size; ++i) {
            const int64_t src = reflect_index(center - window_size / 2 + i, n);
            buf[size_t(pad + i)] = {double(samples[size_t(src)]) * window[size_t(i)], 0.0};
        }
        fft_inplace(buf, false);
        for (int k = 0; k < n_bins; ++k) {
            mag[size_t(t) * n_bins + k] = std::abs(buf[size_t(k)]);
        }
    }
    return mag;
}

MelSpec mel_transform(const AudioClip& clip, const StftConfig& cfg) {
    cfg.validate(clip.sample_rate);
    if (clip.sample_rate != kCanonicalSampleRate) {
        throw ValidationError("mel_transform: clip must be at 44100 Hz");
    }
    if (int64_t(clip.samples.size()) < cfg.window_size) {
        throw ValidationError("mel_transform: clip shorter than one analysis window");
    }

    const int n_bins = cfg.n_fft / 2 + 1;
    const int64_t frames = frame_count(int64_t(clip.samples.size()), cfg.hop_length);
    const std::vector<double> mag =
        stft_magnitude(clip.samples, cfg.n_fft, cfg.window_size, cfg.hop_length);
    const std::vector<double> fb =
        mel_filterbank(cfg.n_mels, cfg.n_fft, clip.sample_rate, cfg.f_min, cfg.f_max);

    MelSpec mel;
    mel.frames = int(frames);
    mel.n_mels = cfg.n_mels;
    mel.values.assign(size_t(frames) * cfg.n_mels, 0.0);
    for (int64_t t = 0; t < frames; ++t) {
        for (int m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            const double* fbrow = &fb[size_t(m) * n_bins];
            const double* magrow = &mag[size_t(t) * n_bins];
            for (int k = 0; k < n_bins; ++k) acc += fbrow[k] * magrow[k];
            mel.at(int(t), m) = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return mel;
}

}  // namespace redry
