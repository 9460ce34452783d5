#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "changebind/model.hpp"
#include "changebind/synth.hpp"
#include "changebind/trainer.hpp"

namespace changebind {

struct DataConfig {
    std::filesystem::path root = "data";
    std::string train_split = "train";
    /// Empty disables per-epoch validation.
    std::string val_split;
};

/// Everything a CLI run needs. Serialized as JSON:
///
///     {
///       "preset": "desk" | "full",
///       "seed": 0,
///       "out_dir": "runs/default",
///       "model": {
///         "backbone": {"stem_channels", "stage_channels": [4], "blocks_per_stage",
///                      "norm_groups", "norm_eps"},
///         "encoder":  {"embed_dim", "attn_dim", "heads", "out_dim",
///                      "use_msf", "use_cce", "use_ace", "use_baseline"},
///         "decoder":  {"norm_groups", "norm_eps", "min_channels"}
///       },
///       "train": {"lr0", "epochs", "weight_decay", "beta1", "beta2", "eps",
///                 "batch_size", "checkpoint_every"},
///       "data":  {"root", "train_split", "val_split"},
///       "synth": {"n", "size", "shapes_per_image", "change_fraction", "jitter", "noise"}
///     }
///
/// All keys are optional; the preset supplies defaults and explicit keys
/// override it. Unknown keys are a ConfigError. `seed` drives model
/// initialization, the epoch shuffle and synthesis.
struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "runs/default";
    ModelConfig model = ModelConfig::desk();
    TrainConfig train;
    DataConfig data;
    SynthConfig synth;

    void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
/// Effective configuration with every field spelled out.
nlohmann::json to_json(const RunConfig& config);

} // namespace changebind
