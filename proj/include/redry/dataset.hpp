#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "redry/audio.hpp"
#include "redry/fx.hpp"
#include "redry/stft.hpp"

namespace redry {

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& s);

struct ManifestEntry {
    std::string id;
    std::string dry_path;
    std::string wet_path;
    double duration_s = 0.0;
    std::optional<EffectChainConfig> effect_config;
    Split split = Split::Train;
};

// Line-delimited manifest: first line carries {schema_version, master_seed},
// each following line one entry.
struct PairManifest {
    static constexpr int kSchemaVersion = 1;
    uint64_t master_seed = 0;
    std::vector<ManifestEntry> entries;

    std::vector<const ManifestEntry*> split_entries(Split s) const;
    void save(const std::string& path) const;
    static PairManifest load(const std::string& path);
};

// Pairs same-named WAVs under dry_dir/wet_dir and assigns a deterministic
// train/val/test split. Ratios are honored within one entry.
PairManifest build_manifest(const std::string& dry_dir, const std::string& wet_dir,
                            double train_ratio, double val_ratio, double test_ratio,
                            uint64_t master_seed);

// One paired training item: hop-aligned waveform crop plus the log-mel views
// of both sides. dry_wave length equals (frames - 1) * hop_length.
struct TrainingExample {
    AudioClip dry_wave;
    MelSpec wet_mel;
    MelSpec dry_mel;
    std::string source_id;
    int64_t offset_samples = 0;
};

// Crops both signals of a pair at the same hop-aligned random offset and
// computes their mel views. crop_seconds is floored to a whole number of hops.
TrainingExample make_example(const ManifestEntry& entry, const StftConfig& stft,
                             double crop_seconds, uint64_t rng_seed);

}  // namespace redry
