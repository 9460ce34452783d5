#include "changebind/model.hpp"

#include <fmt/format.h>

namespace changebind {

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.backbone = BackboneConfig::desk();
    c.decoder.in_channels = c.encoder.out_dim;
    return c;
}

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.backbone = BackboneConfig::full();
    c.encoder.embed_dim = 256;
    c.encoder.attn_dim = 256;
    c.encoder.heads = 8;
    c.encoder.out_dim = 256;
    c.decoder.in_channels = c.encoder.out_dim;
    return c;
}

void ModelConfig::validate() const {
    backbone.validate();
    encoder.validate();
    decoder.validate();
    if (decoder.in_channels != encoder.out_dim) {
        throw ConfigError(fmt::format("decoder input channels {} differ from encoder output {}", decoder.in_channels,
                                      encoder.out_dim));
    }
}

ChangeBindModel::ChangeBindModel(const ModelConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      rng_(seed),
      backbone_(config.backbone, rng_),
      encoder_(config.backbone.stage_channels, config.encoder, rng_),
      decoder_(config.decoder, rng_) {
    backbone_.register_parameters(parameters_, "backbone.");
    encoder_.register_parameters(parameters_);
    decoder_.register_parameters(parameters_, "decoder.");
}

ChangeEncoding ChangeBindModel::encode(const Tensor& pre, const Tensor& post) const {
    if (pre.shape() != post.shape()) {
        throw ShapeError(fmt::format("pre image {} and post image {} differ", shape_string(pre.shape()),
                                     shape_string(post.shape())));
    }
    const FeaturePyramid pre_features = branch(Temporal::pre).extract_pyramid(pre);
    const FeaturePyramid post_features = branch(Temporal::post).extract_pyramid(post);
    return encoder_.encode(pre_features, post_features);
}

Tensor ChangeBindModel::forward(const Tensor& pre, const Tensor& post) const {
    return decoder_.decode(encode(pre, post), std::pair{pre.dim(2), pre.dim(3)});
}

ChangeMap ChangeBindModel::predict(const Tensor& pre, const Tensor& post) const {
    NoGradGuard no_grad;
    Tensor logits = forward(pre, post);
    BinaryMask mask = predict_mask(logits);
    return {std::move(logits), std::move(mask)};
}

} // namespace changebind
