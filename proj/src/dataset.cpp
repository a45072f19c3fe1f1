#include "redry/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "redry/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace redry {

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ValidationError("manifest: unknown split '" + s + "'");
}

std::vector<const ManifestEntry*> PairManifest::split_entries(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
        if (e.split == s) out.push_back(&e);
    }
    return out;
}

namespace {

json effect_config_to_json(const EffectChainConfig& c) {
    return json{{"distortion_gain_db", c.distortion_gain_db},
                {"clip_threshold_db", c.clip_threshold_db},
                {"mix_alpha", c.mix_alpha},
                {"apply_distortion", c.apply_distortion},
                {"apply_clipping", c.apply_clipping},
                {"seed", c.seed}};
}

EffectChainConfig effect_config_from_json(const json& j) {
    EffectChainConfig c;
    c.distortion_gain_db = j.at("distortion_gain_db").get<double>();
    c.clip_threshold_db = j.at("clip_threshold_db").get<double>();
    c.mix_alpha = j.at("mix_alpha").get<double>();
    c.apply_distortion = j.at("apply_distortion").get<bool>();
    c.apply_clipping = j.at("apply_clipping").get<bool>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

}  // namespace

void PairManifest::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << json{{"schema_version", kSchemaVersion}, {"master_seed", master_seed}}.dump() << "\n";
    for (const auto& e : entries) {
        json j{{"id", e.id},
               {"dry_path", e.dry_path},
               {"wet_path", e.wet_path},
               {"duration_s", e.duration_s},
               {"split", split_name(e.split)}};
        if (e.effect_config) j["effect_config"] = effect_config_to_json(*e.effect_config);
        f << j.dump() << "\n";
    }
    if (!f) throw IoError("write failure on " + path);
}

PairManifest PairManifest::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ValidationError(path + ": empty manifest");
    json header = json::parse(line);
    if (header.at("schema_version").get<int>() != kSchemaVersion) {
        throw ValidationError(path + ": unsupported manifest schema version");
    }
    PairManifest m;
    m.master_seed = header.at("master_seed").get<uint64_t>();
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        ManifestEntry e;
        e.id = j.at("id").get<std::string>();
        e.dry_path = j.at("dry_path").get<std::string>();
        e.wet_path = j.at("wet_path").get<std::string>();
        e.duration_s = j.at("duration_s").get<double>();
        e.split = split_from_name(j.at("split").get<std::string>());
        if (j.contains("effect_config")) e.effect_config = effect_config_from_json(j["effect_config"]);
        m.entries.push_back(std::move(e));
    }
    return m;
}

PairManifest build_manifest(const std::string& dry_dir, const std::string& wet_dir,
                            double train_ratio, double val_ratio, double test_ratio,
                            uint64_t master_seed) {
    const double ratio_sum = train_ratio + val_ratio + test_ratio;
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0 || std::abs(ratio_sum - 1.0) > 1e-9) {
        throw ValidationError("build_manifest: split ratios must be non-negative and sum to 1");
    }

    auto list_wavs = [](const std::string& dir) {
        if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
        std::map<std::string, std::string> files;  // stem -> path
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".wav") {
                files[entry.path().stem().string()] = entry.path().string();
            }
        }
        return files;
    };

    const auto dry = list_wavs(dry_dir);
    const auto wet = list_wavs(wet_dir);

    std::vector<std::string> orphans;
    for (const auto& [stem, _] : dry) {
        if (!wet.count(stem)) orphans.push_back("missing wet for " + stem);
    }
    for (const auto& [stem, _] : wet) {
        if (!dry.count(stem)) orphans.push_back("missing dry for " + stem);
    }
    if (!orphans.empty()) {
        std::string msg = "build_manifest: unpaired files:";
        for (const auto& o : orphans) msg += "\n  " + o;
        throw ValidationError(msg);
    }
    if (dry.empty()) throw ValidationError("build_manifest: no WAV pairs found");

    PairManifest m;
    m.master_seed = master_seed;
    for (const auto& [stem, dry_path] : dry) {
        AudioClip d = load_audio(dry_path);
        AudioClip w = load_audio(wet.at(stem));
        if (d.samples.size() != w.samples.size()) {
            throw ValidationError("build_manifest: duration mismatch for pair " + stem);
        }
        ManifestEntry e;
        e.id = stem;
        e.dry_path = dry_path;
        e.wet_path = wet.at(stem);
        e.duration_s = d.duration_s();
        m.entries.push_back(std::move(e));
    }

    // Deterministic split: Fisher-Yates with the pinned generator, then
    // contiguous partition by rounded ratios.
    std::vector<size_t> order(m.entries.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(master_seed);
    for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
    }
    const size_t n = order.size();
    size_t n_train = size_t(std::llround(train_ratio * double(n)));
    size_t n_val = size_t(std::llround(val_ratio * double(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    for (size_t i = 0; i < n; ++i) {
        Split s = (i < n_train) ? Split::Train : (i < n_train + n_val) ? Split::Val : Split::Test;
        m.entries[order[i]].split = s;
    }
    return m;
}

TrainingExample make_example(const ManifestEntry& entry, const StftConfig& stft,
                             double crop_seconds, uint64_t rng_seed) {
    AudioClip dry = load_audio(entry.dry_path);
    AudioClip wet = load_audio(entry.wet_path);
    if (dry.samples.size() != wet.samples.size()) {
        throw ValidationError("make_example: pair length mismatch for " + entry.id);
    }

    const int hop = stft.hop_length;
    const int64_t total = int64_t(dry.samples.size());
    // Crop length floored to a whole number of hops so the waveform and its
    // mel view stay exactly aligned: L = (frames - 1) * hop.
    const int64_t crop = (int64_t(std::llround(crop_seconds * dry.sample_rate)) / hop) * hop;
    if (crop <= 0) throw ValidationError("make_example: crop too short");
    if (crop > total) throw ValidationError("make_example: crop longer than clip");
    if (crop < stft.window_size) throw ValidationError("make_example: crop shorter than analysis window");

    const int64_t max_offset_hops = (total - crop) / hop;
    Rng rng(rng_seed);
    const int64_t offset = (max_offset_hops == 0) ? 0 : int64_t(rng.uniform_index(uint64_t(max_offset_hops + 1))) * hop;

    auto cut = [&](const AudioClip& c) {
        AudioClip out;
        out.sample_rate = c.sample_rate;
        out.samples.assign(c.samples.begin() + offset, c.samples.begin() + offset + crop);
        return out;
    };

    TrainingExample ex;
    ex.source_id = entry.id;
    ex.offset_samples = offset;
    ex.dry_wave = cut(dry);
    AudioClip wet_crop = cut(wet);
    ex.dry_mel = mel_transform(ex.dry_wave, stft);
    ex.wet_mel = mel_transform(wet_crop, stft);
    return ex;
}

}  // namespace redry
