#include "redry/fx.hpp"

#include <algorithm>
#include <cmath>

#include "redry/rng.hpp"

namespace redry {

void EffectChainConfig::validate() const {
    if (!std::isfinite(distortion_gain_db)) throw ValidationError("EffectChainConfig: non-finite gain");
    if (!std::isfinite(clip_threshold_db)) throw ValidationError("EffectChainConfig: non-finite threshold");
    if (!(mix_alpha >= 0.0 && mix_alpha <= 1.0)) throw ValidationError("EffectChainConfig: mix_alpha outside [0, 1]");
    if (!apply_distortion && !apply_clipping) {
        throw ValidationError("EffectChainConfig: at least one effect must be active");
    }
}

AudioClip apply_distortion(const AudioClip& x, double gain_db) {
    if (!std::isfinite(gain_db)) throw ValidationError("apply_distortion: non-finite gain");
    const double gain = std::pow(10.0, gain_db / 20.0);
    AudioClip y = x;
    for (float& s : y.samples) s = float(std::tanh(double(s) * gain));
    return y;
}

AudioClip apply_clipping(const AudioClip& x, double threshold_db) {
    if (!std::isfinite(threshold_db)) throw ValidationError("apply_clipping: non-finite threshold");
    const float t = float(std::pow(10.0, threshold_db / 20.0));
    AudioClip y = x;
    for (float& s : y.samples) s = std::clamp(s, -t, t);
    return y;
}

AudioClip mix(const AudioClip& dry, const AudioClip& wet, double alpha) {
    if (dry.samples.size() != wet.samples.size()) throw ValidationError("mix: length mismatch");
    if (dry.sample_rate != wet.sample_rate) throw ValidationError("mix: sample rate mismatch");
    if (alpha == 0.0) return dry;
    if (alpha == 1.0) return wet;
    AudioClip y = dry;
    for (size_t i = 0; i < y.samples.size(); ++i) {
        y.samples[i] = float(alpha * double(wet.samples[i]) + (1.0 - alpha) * double(dry.samples[i]));
    }
    return y;
}

std::pair<AudioClip, AudioClip> render_pair(const AudioClip& dry, const EffectChainConfig& cfg) {
    cfg.validate();
    AudioClip wet = dry;
    if (cfg.apply_distortion) wet = apply_distortion(wet, cfg.distortion_gain_db);
    if (cfg.apply_clipping) wet = apply_clipping(wet, cfg.clip_threshold_db);
    return {dry, mix(dry, wet, cfg.mix_alpha)};
}

EffectChainConfig sample_effect_config(uint64_t rng_seed) {
    Rng rng(rng_seed);
    EffectChainConfig cfg;
    cfg.seed = rng_seed;
    cfg.distortion_gain_db = rng.uniform(20.0, 50.0);
    cfg.clip_threshold_db = rng.uniform(-50.0, -20.0);
    cfg.mix_alpha = 1.0;
    do {
        cfg.apply_distortion = rng.bernoulli(0.5);
        cfg.apply_clipping = rng.bernoulli(0.5);
    } while (!cfg.apply_distortion && !cfg.apply_clipping);
    return cfg;
}

}  // namespace redry
