#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redry/common.hpp"

namespace redry {

inline constexpr int kCanonicalSampleRate = 44100;

// Mono waveform. Samples are stored as float32 so that the 32-bit float WAV
// round-trip is exact; all downstream arithmetic promotes to double.
struct AudioClip {
    std::vector<float> samples;
    int sample_rate = kCanonicalSampleRate;

    size_t size() const { return samples.size(); }
    double duration_s() const { return double(samples.size()) / double(sample_rate); }

    // Throws ValidationError if any sample is non-finite or out of [-1, 1].
    void validate() const;
};

// Reads a PCM WAV file (16/24-bit int or 32-bit float, any channel count),
// averages channels to mono, resamples to target_rate and clamps to [-1, 1].
AudioClip load_audio(const std::string& path, int target_rate = kCanonicalSampleRate);

// Writes a 32-bit float mono WAV. load_audio(save_audio(c)) round-trips the
// samples exactly when no resampling is involved.
void save_audio(const AudioClip& clip, const std::string& path);

// Band-limited sample rate conversion (Kaiser-windowed sinc). Output length is
// round(n_in * dst / src).
std::vector<float> resample(const std::vector<float>& in, int src_rate, int dst_rate);

}  // namespace redry
