#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "redry/audio.hpp"
#include "redry/common.hpp"

namespace redry {

// Parameters of one synthetic distortion chain draw. Gains and thresholds are
// in dB; mix_alpha blends wet over dry (1 = fully wet).
struct EffectChainConfig {
    double distortion_gain_db = 35.0;
    double clip_threshold_db = -35.0;
    double mix_alpha = 1.0;
    bool apply_distortion = true;
    bool apply_clipping = true;
    uint64_t seed = 0;

    void validate() const;
};

// Gain-into-tanh waveshaper: y = tanh(x * 10^(gain_db/20)).
AudioClip apply_distortion(const AudioClip& x, double gain_db);

// Hard clip at t = 10^(threshold_db/20): y = clamp(x, -t, t).
AudioClip apply_clipping(const AudioClip& x, double threshold_db);

// y = alpha * wet + (1 - alpha) * dry, sample-wise.
AudioClip mix(const AudioClip& dry, const AudioClip& wet, double alpha);

// Applies the configured chain (distortion, then clipping) and blends with
// mix_alpha. Returns (dry, wet).
std::pair<AudioClip, AudioClip> render_pair(const AudioClip& dry, const EffectChainConfig& cfg);

// Draws gamma ~ U[20, 50] dB, tau ~ U[-50, -20] dB, each effect active with
// probability 1/2 (redrawn until at least one is active), alpha = 1.
EffectChainConfig sample_effect_config(uint64_t rng_seed);

}  // namespace redry
