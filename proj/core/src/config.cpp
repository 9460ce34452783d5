#include "changebind/config.hpp"

#include <fstream>
#include <initializer_list>

#include <fmt/format.h>

namespace changebind {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where,
                    std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) {
        throw ConfigError(fmt::format("{}: expected an object", where));
    }
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (auto a : allowed) {
            known = known || key == a;
        }
        if (!known) {
            throw ConfigError(fmt::format("{}: unknown key \"{}\"", where, key));
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(fmt::format("{}.{}: wrong type ({})", where, key, j.at(key).type_name()));
    }
}

void read_backbone(const json& j, BackboneConfig& c) {
    const std::string w = "model.backbone";
    require_object(j, w, {"stem_channels", "stage_channels", "blocks_per_stage", "norm_groups", "norm_eps"});
    read(j, "stem_channels", c.stem_channels, w);
    read(j, "stage_channels", c.stage_channels, w);
    read(j, "blocks_per_stage", c.blocks_per_stage, w);
    read(j, "norm_groups", c.norm_groups, w);
    read(j, "norm_eps", c.norm_eps, w);
}

void read_encoder(const json& j, EncoderConfig& c) {
    const std::string w = "model.encoder";
    require_object(j, w, {"embed_dim", "attn_dim", "heads", "out_dim", "use_msf", "use_cce", "use_ace",
                          "use_baseline"});
    read(j, "embed_dim", c.embed_dim, w);
    read(j, "attn_dim", c.attn_dim, w);
    read(j, "heads", c.heads, w);
    read(j, "out_dim", c.out_dim, w);
    read(j, "use_msf", c.flags.use_msf, w);
    read(j, "use_cce", c.flags.use_cce, w);
    read(j, "use_ace", c.flags.use_ace, w);
    read(j, "use_baseline", c.flags.use_baseline, w);
}

void read_decoder(const json& j, DecoderConfig& c) {
    const std::string w = "model.decoder";
    require_object(j, w, {"norm_groups", "norm_eps", "min_channels"});
    read(j, "norm_groups", c.norm_groups, w);
    read(j, "norm_eps", c.norm_eps, w);
    read(j, "min_channels", c.min_channels, w);
}

void read_train(const json& j, TrainConfig& c) {
    const std::string w = "train";
    require_object(j, w, {"lr0", "epochs", "weight_decay", "beta1", "beta2", "eps", "batch_size",
                          "checkpoint_every"});
    read(j, "lr0", c.lr0, w);
    read(j, "epochs", c.epochs, w);
    read(j, "weight_decay", c.adamw.weight_decay, w);
    read(j, "beta1", c.adamw.beta1, w);
    read(j, "beta2", c.adamw.beta2, w);
    read(j, "eps", c.adamw.eps, w);
    read(j, "batch_size", c.batch_size, w);
    read(j, "checkpoint_every", c.checkpoint_every, w);
}

void read_data(const json& j, DataConfig& c) {
    const std::string w = "data";
    require_object(j, w, {"root", "train_split", "val_split"});
    std::string root = c.root.string();
    read(j, "root", root, w);
    c.root = root;
    read(j, "train_split", c.train_split, w);
    read(j, "val_split", c.val_split, w);
}

void read_synth(const json& j, SynthConfig& c) {
    const std::string w = "synth";
    require_object(j, w, {"n", "size", "shapes_per_image", "change_fraction", "jitter", "noise"});
    read(j, "n", c.n, w);
    read(j, "size", c.size, w);
    read(j, "shapes_per_image", c.shapes_per_image, w);
    read(j, "change_fraction", c.change_fraction, w);
    read(j, "jitter", c.jitter, w);
    read(j, "noise", c.noise, w);
}

} // namespace

void RunConfig::validate() const {
    if (preset != "desk" && preset != "full") {
        throw ConfigError(fmt::format("preset must be \"desk\" or \"full\", got \"{}\"", preset));
    }
    model.validate();
    train.validate();
    synth.validate();
    if (data.train_split.empty()) {
        throw ConfigError("data.train_split must not be empty");
    }
}

RunConfig run_config_from_json(const json& j) {
    require_object(j, "config", {"preset", "seed", "out_dir", "model", "train", "data", "synth"});
    RunConfig c;
    read(j, "preset", c.preset, "config");
    if (c.preset == "full") {
        c.model = ModelConfig::full();
    } else if (c.preset != "desk") {
        throw ConfigError(fmt::format("preset must be \"desk\" or \"full\", got \"{}\"", c.preset));
    }
    read(j, "seed", c.seed, "config");
    std::string out = c.out_dir.string();
    read(j, "out_dir", out, "config");
    c.out_dir = out;
    if (j.contains("model")) {
        const json& m = j.at("model");
        require_object(m, "model", {"backbone", "encoder", "decoder"});
        if (m.contains("backbone")) {
            read_backbone(m.at("backbone"), c.model.backbone);
        }
        if (m.contains("encoder")) {
            read_encoder(m.at("encoder"), c.model.encoder);
        }
        if (m.contains("decoder")) {
            read_decoder(m.at("decoder"), c.model.decoder);
        }
    }
    c.model.decoder.in_channels = c.model.encoder.out_dim;
    if (j.contains("train")) {
        read_train(j.at("train"), c.train);
    }
    if (j.contains("data")) {
        read_data(j.at("data"), c.data);
    }
    if (j.contains("synth")) {
        read_synth(j.at("synth"), c.synth);
    }
    c.train.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open config {}", path.string()));
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
    const auto& b = c.model.backbone;
    const auto& e = c.model.encoder;
    const auto& d = c.model.decoder;
    const auto& t = c.train;
    return {
        {"preset", c.preset},
        {"seed", c.seed},
        {"out_dir", c.out_dir.string()},
        {"model",
         {{"backbone",
           {{"stem_channels", b.stem_channels},
            {"stage_channels", b.stage_channels},
            {"blocks_per_stage", b.blocks_per_stage},
            {"norm_groups", b.norm_groups},
            {"norm_eps", b.norm_eps}}},
          {"encoder",
           {{"embed_dim", e.embed_dim},
            {"attn_dim", e.attn_dim},
            {"heads", e.heads},
            {"out_dim", e.out_dim},
            {"use_msf", e.flags.use_msf},
            {"use_cce", e.flags.use_cce},
            {"use_ace", e.flags.use_ace},
            {"use_baseline", e.flags.use_baseline}}},
          {"decoder", {{"norm_groups", d.norm_groups}, {"norm_eps", d.norm_eps}, {"min_channels", d.min_channels}}}}},
        {"train",
         {{"lr0", t.lr0},
          {"epochs", t.epochs},
          {"weight_decay", t.adamw.weight_decay},
          {"beta1", t.adamw.beta1},
          {"beta2", t.adamw.beta2},
          {"eps", t.adamw.eps},
          {"batch_size", t.batch_size},
          {"checkpoint_every", t.checkpoint_every}}},
        {"data", {{"root", c.data.root.string()}, {"train_split", c.data.train_split}, {"val_split", c.data.val_split}}},
        {"synth",
         {{"n", c.synth.n},
          {"size", c.synth.size},
          {"shapes_per_image", c.synth.shapes_per_image},
          {"change_fraction", c.synth.change_fraction},
          {"jitter", c.synth.jitter},
          {"noise", c.synth.noise}}},
    };
}

} // namespace changebind
