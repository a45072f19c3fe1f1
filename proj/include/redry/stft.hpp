#pragma once

#include <cstdint>
#include <vector>

#include "redry/audio.hpp"
#include "redry/common.hpp"

namespace redry {

// Analysis parameters shared by the whole pipeline. Defaults follow the
// canonical configuration: 44.1 kHz, 2048-sample Hann window, hop 512,
// 128 Slaney-style mel bands over the full band, natural-log magnitude
// compressed with floor 1e-5.
struct StftConfig {
    int n_fft = 2048;
    int window_size = 2048;
    int hop_length = 512;
    int n_mels = 128;
    double f_min = 0.0;
    double f_max = 22050.0;
    double log_floor = 1e-5;

    void validate(int sample_rate = kCanonicalSampleRate) const;
};

// frames x n_mels matrix of log-mel values, stored row-major.
struct MelSpec {
    std::vector<double> values;
    int frames = 0;
    int n_mels = 0;

    double& at(int t, int m) { return values[size_t(t) * n_mels + m]; }
    double at(int t, int m) const { return values[size_t(t) * n_mels + m]; }
};

// Number of analysis frames of an n-sample signal under center padding.
inline int64_t frame_count(int64_t num_samples, int hop_length) {
    return num_samples / hop_length + 1;
}

// Periodic Hann window of the given size.
std::vector<double> hann_window(int size);

// Slaney-style triangular mel filterbank, n_mels x (n_fft/2 + 1), area
// normalized. Row-major.
std::vector<double> mel_filterbank(int n_mels, int n_fft, int sample_rate,
                                   double f_min, double f_max);

// Center frequency (Hz) of each mel band; used by tests to locate tones.
std::vector<double> mel_center_frequencies(int n_mels, int sample_rate,
                                           double f_min, double f_max);

// Symmetric reflection of index i into [0, n). Constant signals stay constant
// under this padding for any n >= 1.
int64_t reflect_index(int64_t i, int64_t n);

// Magnitude STFT with center (reflect) padding: frames x (n_fft/2 + 1).
std::vector<double> stft_magnitude(const std::vector<float>& samples, int n_fft,
                                   int window_size, int hop_length);

// Log-mel analysis of a canonical-rate clip. frames = len/hop + 1.
MelSpec mel_transform(const AudioClip& clip, const StftConfig& cfg);

}  // namespace redry
