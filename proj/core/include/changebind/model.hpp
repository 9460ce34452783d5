#pragma once

#include <cstdint>

#include "changebind/backbone.hpp"
#include "changebind/change_encoder.hpp"
#include "changebind/decoder.hpp"

namespace changebind {

struct ModelConfig {
    BackboneConfig backbone;
    EncoderConfig encoder;
    DecoderConfig decoder;

    /// Small configuration for CPU-scale experiments (64x64 inputs).
    static ModelConfig desk();
    /// Channel widths of the ResNet-style reference configuration.
    static ModelConfig full();

    /// Checks every sub-config and that the decoder input width matches the
    /// encoder output width.
    void validate() const;
};

enum class Temporal { pre, post };

/// Siamese backbone -> change encoder -> decoder. Both dates go through the
/// same Backbone object.
class ChangeBindModel {
public:
    ChangeBindModel(const ModelConfig& config, std::uint64_t seed);

    ChangeBindModel(const ChangeBindModel&) = delete;
    ChangeBindModel& operator=(const ChangeBindModel&) = delete;
    ChangeBindModel(ChangeBindModel&&) = default;

    /// Change logits [B, 2, H, W] for images [B, 3, H, W].
    Tensor forward(const Tensor& pre, const Tensor& post) const;
    ChangeEncoding encode(const Tensor& pre, const Tensor& post) const;
    /// Inference without graph recording.
    ChangeMap predict(const Tensor& pre, const Tensor& post) const;

    const Backbone& branch(Temporal) const { return backbone_; }
    const ChangeEncoder& encoder() const { return encoder_; }
    const Decoder& decoder() const { return decoder_; }
    const ParameterSet& parameters() const { return parameters_; }
    const ModelConfig& config() const { return config_; }

private:
    ModelConfig config_;
    Rng rng_;
    Backbone backbone_;
    ChangeEncoder encoder_;
    Decoder decoder_;
    ParameterSet parameters_;
};

} // namespace changebind
