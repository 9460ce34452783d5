#include "changebind/change_encoder.hpp"

#include <fmt/format.h>

namespace changebind {

void EncoderFlags::validate() const {
    if (path_count() == 0) {
        throw ConfigError("change encoder: no change-encoding path enabled (need cce, ace or baseline)");
    }
}

const std::array<AblationRow, 5>& ablation_rows() {
    static const std::array<AblationRow, 5> rows{{
        {"Baseline", {false, false, false, true}},
        {"Baseline + MSF", {true, false, false, true}},
        {"Baseline + MSF + CCE", {true, true, false, false}},
        {"Baseline + MSF + ACE", {true, false, true, false}},
        {"Baseline + MSF + CCE + ACE (Ours)", {true, true, true, false}},
    }};
    return rows;
}

std::string EncoderFlags::label() const {
    for (const auto& row : ablation_rows()) {
        if (row.flags == *this) {
            return row.label;
        }
    }
    return fmt::format("custom (msf={:d} cce={:d} ace={:d} baseline={:d})", use_msf, use_cce, use_ace,
                       use_baseline);
}

void EncoderConfig::validate() const {
    if (embed_dim <= 0 || attn_dim <= 0 || out_dim <= 0) {
        throw ConfigError("change encoder: dimensions must be positive");
    }
    if (heads < 1 || attn_dim % heads != 0) {
        throw ConfigError(fmt::format("change encoder: attn_dim {} not divisible by {} heads", attn_dim, heads));
    }
    flags.validate();
}

DifferenceModule::DifferenceModule(std::int64_t in_channels, const EncoderConfig& config, Rng& rng)
    : flags_((config.validate(), config.flags)),
      cce_conv_(2 * in_channels, config.embed_dim, 3, 1, 1, true, rng),
      ace_in_proj_(2 * in_channels, config.attn_dim, rng),
      ace_attn_(config.attn_dim, config.heads, rng),
      ace_out_proj_(config.attn_dim, config.embed_dim, rng),
      base_in_proj_(in_channels, config.attn_dim, rng),
      base_attn_(config.attn_dim, config.heads, rng),
      base_out_proj_(config.attn_dim, config.embed_dim, rng),
      fuse_conv_(config.embed_dim * config.flags.path_count(), config.embed_dim, 3, 1, 1, true, rng) {}

Tensor DifferenceModule::forward(const Tensor& pre, const Tensor& post) const {
    if (pre.rank() != 4 || pre.shape() != post.shape()) {
        int axis = -1;
        for (int i = 0; i < std::min(pre.rank(), post.rank()); ++i) {
            if (pre.dim(i) != post.dim(i)) {
                axis = i;
                break;
            }
        }
        throw ShapeError(fmt::format("difference module: pre {} and post {} differ", shape_string(pre.shape()),
                                     shape_string(post.shape())),
                         axis);
    }
    if (pre.dim(1) * 2 != cce_conv_.in_channels()) {
        throw ShapeError(fmt::format("difference module: expected {} channels per date, got {}",
                                     cce_conv_.in_channels() / 2, pre.dim(1)),
                         1);
    }
    const auto h = pre.dim(2);
    const auto w = pre.dim(3);
    const Tensor x_hat = concat({pre, post}, 1);

    std::vector<Tensor> encodings;
    if (flags_.use_cce) {
        encodings.push_back(cce_conv_.forward(x_hat));
    }
    if (flags_.use_ace) {
        Tensor tokens = ace_in_proj_.forward(map_to_tokens(x_hat));
        tokens = ace_out_proj_.forward(ace_attn_.forward(tokens, &last_attention_));
        encodings.push_back(tokens_to_map(tokens, h, w));
    }
    if (flags_.use_baseline) {
        const auto n = h * w;
        Tensor tokens = concat({map_to_tokens(pre), map_to_tokens(post)}, 1);
        tokens = base_attn_.forward(base_in_proj_.forward(tokens));
        const Tensor diff = abs(sub(narrow(tokens, 1, 0, n), narrow(tokens, 1, n, n)));
        encodings.push_back(tokens_to_map(base_out_proj_.forward(diff), h, w));
    }
    const Tensor fused = encodings.size() == 1 ? encodings.front() : concat(encodings, 1);
    return fuse_conv_.forward(fused);
}

void DifferenceModule::register_parameters(ParameterSet& set, const std::string& prefix) const {
    cce_conv_.register_parameters(set, prefix + "cce.");
    ace_in_proj_.register_parameters(set, prefix + "ace.in_proj.");
    ace_attn_.register_parameters(set, prefix + "ace.attn.");
    ace_out_proj_.register_parameters(set, prefix + "ace.out_proj.");
    base_in_proj_.register_parameters(set, prefix + "baseline.in_proj.");
    base_attn_.register_parameters(set, prefix + "baseline.attn.");
    base_out_proj_.register_parameters(set, prefix + "baseline.out_proj.");
    fuse_conv_.register_parameters(set, prefix + "fuse.");
}

ChangeEncoder::ChangeEncoder(const std::array<std::int64_t, 4>& level_channels, const EncoderConfig& config,
                             Rng& rng)
    : config_((config.validate(), config)),
      diff_{DifferenceModule(level_channels[0], config, rng), DifferenceModule(level_channels[1], config, rng),
            DifferenceModule(level_channels[2], config, rng), DifferenceModule(level_channels[3], config, rng)},
      merge_conv_(config.embed_dim * (config.flags.use_msf ? 4 : 1), config.out_dim, 3, 1, 1, true, rng) {}

ChangeEncoding ChangeEncoder::encode(const FeaturePyramid& pre, const FeaturePyramid& post) const {
    std::array<Tensor, 4> encodings;
    for (std::size_t s = 0; s < 4; ++s) {
        if (config_.flags.use_msf || s == 3) {
            encodings[s] = diff_[s].forward(pre.levels[s], post.levels[s]);
        }
    }
    if (!config_.flags.use_msf) {
        // Scale-1 extent is still needed as the upsampling target.
        const auto& level1 = pre.levels[0];
        const auto& deepest = encodings[3];
        if (level1.dim(2) != deepest.dim(2) * 8 || level1.dim(3) != deepest.dim(3) * 8) {
            throw ShapeError("change encoder: pyramid levels do not follow strides 4/8/16/32");
        }
    }
    return fuse_scales(encodings);
}

ChangeEncoding ChangeEncoder::fuse_scales(const std::array<Tensor, 4>& encodings) const {
    const Tensor& deepest = encodings[3];
    if (!deepest.defined()) {
        throw UsageError("fuse_scales: deepest encoding missing");
    }
    const auto batch = deepest.dim(0);
    std::int64_t target_h = deepest.dim(2) * 8;
    std::int64_t target_w = deepest.dim(3) * 8;
    if (!config_.flags.use_msf) {
        return {merge_conv_.forward(bilinear_upsample(deepest, target_h, target_w))};
    }
    for (const auto& e : encodings) {
        if (!e.defined()) {
            throw UsageError("fuse_scales: multi-scale fusion needs all four encodings");
        }
        if (e.dim(0) != batch) {
            throw ShapeError(fmt::format("fuse_scales: batch extent {} differs from {}", e.dim(0), batch), 0);
        }
    }
    target_h = encodings[0].dim(2);
    target_w = encodings[0].dim(3);
    std::vector<Tensor> parts{encodings[0]};
    for (std::size_t s = 1; s < 4; ++s) {
        parts.push_back(bilinear_upsample(encodings[s], target_h, target_w));
    }
    return {merge_conv_.forward(concat(parts, 1))};
}

void ChangeEncoder::register_parameters(ParameterSet& set) const {
    for (std::size_t s = 0; s < 4; ++s) {
        diff_[s].register_parameters(set, fmt::format("diff.{}.", s + 1));
    }
    merge_conv_.register_parameters(set, "fuse.");
}

} // namespace changebind
