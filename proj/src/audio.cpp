#include "redry/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace redry {

void AudioClip::validate() const {
    if (samples.empty()) throw ValidationError("AudioClip: empty waveform");
    for (float s : samples) {
        if (!std::isfinite(s)) throw ValidationError("AudioClip: non-finite sample");
        if (s < -1.0f || s > 1.0f) throw ValidationError("AudioClip: sample outside [-1, 1]");
    }
    if (sample_rate <= 0) throw ValidationError("AudioClip: bad sample rate");
}

namespace {

uint32_t read_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t read_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

struct WavData {
    std::vector<double> mono;
    int sample_rate;
};

WavData decode_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw IoError("read failure on " + path);

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw ValidationError(path + ": not a RIFF/WAVE file");
    }

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data = nullptr;
    size_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const uint8_t* hdr = bytes.data() + pos;
        uint32_t chunk_len = read_u32(hdr + 4);
        const uint8_t* body = hdr + 8;
        if (pos + 8 + chunk_len > bytes.size()) chunk_len = uint32_t(bytes.size() - pos - 8);
        if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
            format = read_u16(body);
            channels = read_u16(body + 2);
            rate = read_u32(body + 4);
            bits = read_u16(body + 14);
            if (format == 0xFFFE && chunk_len >= 40) {
                // WAVE_FORMAT_EXTENSIBLE: first two bytes of the SubFormat GUID
                format = read_u16(body + 24);
            }
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = body;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }

    if (channels == 0 || rate == 0) throw ValidationError(path + ": missing fmt chunk");
    if (data == nullptr) throw ValidationError(path + ": missing data chunk");

    const bool pcm_int = (format == 1);
    const bool ieee_float = (format == 3);
    if (!(pcm_int && (bits == 16 || bits == 24)) && !(ieee_float && bits == 32)) {
        throw ValidationError(path + ": unsupported format (want 16/24-bit PCM or 32-bit float)");
    }

    const size_t bytes_per_sample = bits / 8;
    const size_t frame_bytes = bytes_per_sample * channels;
    const size_t n_frames = frame_bytes ? data_len / frame_bytes : 0;
    if (n_frames == 0) throw ValidationError(path + ": zero-length audio");

    WavData out;
    out.sample_rate = int(rate);
    out.mono.resize(n_frames);
    for (size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const uint8_t* p = data + i * frame_bytes + size_t(c) * bytes_per_sample;
            double v;
            if (ieee_float) {
                float fv;
                std::memcpy(&fv, p, 4);
                v = fv;
            } else if (bits == 16) {
                int16_t iv = int16_t(uint16_t(p[0]) | uint16_t(p[1]) << 8);
                v = double(iv) / 32768.0;
            } else {  // 24-bit
                int32_t iv = int32_t(uint32_t(p[0]) << 8 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 24) >> 8;
                v = double(iv) / 8388608.0;
            }
            acc += v;
        }
        out.mono[i] = acc / double(channels);
    }
    return out;
}

}  // namespace

std::vector<float> resample(const std::vector<float>& in, int src_rate, int dst_rate) {
    if (src_rate <= 0 || dst_rate <= 0) throw ValidationError("resample: bad rates");
    if (src_rate == dst_rate) return in;

    const double ratio = double(dst_rate) / double(src_rate);
    const size_t n_out = size_t(std::llround(double(in.size()) * ratio));
    const double cutoff = std::min(1.0, ratio);  // in units of src Nyquist
    const int half_width = 64;
    const double beta = 12.0;

    auto bessel_i0 = [](double x) {
        double sum = 1.0, term = 1.0;
        for (int k = 1; k < 64; ++k) {
            term *= (x / (2.0 * k)) * (x / (2.0 * k));
            sum += term;
            if (term < 1e-18 * sum) break;
        }
        return sum;
    };
    const double i0_beta = bessel_i0(beta);

    std::vector<float> out(n_out);
    for (size_t n = 0; n < n_out; ++n) {
        const double t = double(n) / ratio;  // position in source samples
        const int m0 = int(std::floor(t)) - half_width + 1;
        const int m1 = int(std::floor(t)) + half_width;
        double acc = 0.0;
        for (int m = std::max(0, m0); m <= std::min(int(in.size()) - 1, m1); ++m) {
            const double d = t - double(m);
            const double x = M_PI * d * cutoff;
            const double sinc = (std::abs(x) < 1e-12) ? 1.0 : std::sin(x) / x;
            const double u = d / double(half_width);
            if (std::abs(u) >= 1.0) continue;
            const double kaiser = bessel_i0(beta * std::sqrt(1.0 - u * u)) / i0_beta;
            acc += double(in[size_t(m)]) * sinc * kaiser * cutoff;
        }
        out[n] = float(acc);
    }
    return out;
}

AudioClip load_audio(const std::string& path, int target_rate) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
    WavData wav = decode_wav(path);

    AudioClip clip;
    clip.sample_rate = target_rate;
    if (wav.sample_rate == target_rate) {
        clip.samples.resize(wav.mono.size());
        for (size_t i = 0; i < wav.mono.size(); ++i) clip.samples[i] = float(wav.mono[i]);
    } else {
        std::vector<float> src(wav.mono.size());
        for (size_t i = 0; i < wav.mono.size(); ++i) src[i] = float(wav.mono[i]);
        clip.samples = resample(src, wav.sample_rate, target_rate);
    }
    for (float& s : clip.samples) s = std::clamp(s, -1.0f, 1.0f);
    if (clip.samples.empty()) throw ValidationError(path + ": zero-length audio after resample");
    return clip;
}

void save_audio(const AudioClip& clip, const std::string& path) {
    clip.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);

    const uint32_t n = uint32_t(clip.samples.size());
    const uint32_t data_bytes = n * 4;
    const uint32_t rate = uint32_t(clip.sample_rate);
    const uint32_t byte_rate = rate * 4;

    auto put_u32 = [&](uint32_t v) {
        uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    auto put_u16 = [&](uint16_t v) {
        uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
        f.write(reinterpret_cast<char*>(b), 2);
    };

    f.write("RIFF", 4);
    put_u32(36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    put_u32(16);
    put_u16(3);  // IEEE float
    put_u16(1);  // mono
    put_u32(rate);
    put_u32(byte_rate);
    put_u16(4);
    put_u16(32);
    f.write("data", 4);
    put_u32(data_bytes);
    for (float s : clip.samples) {
        static_assert(sizeof(float) == 4);
        f.write(reinterpret_cast<const char*>(&s), 4);
    }
    if (!f) throw IoError("write failure on " + path);
}

}  // namespace redry
