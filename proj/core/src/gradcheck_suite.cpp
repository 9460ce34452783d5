#include "changebind/gradcheck_suite.hpp"

#include <algorithm>
#include <numeric>

#include "changebind/gradcheck.hpp"
#include "changebind/layers.hpp"
#include "changebind/model.hpp"

namespace changebind {

namespace {

Tensor normal_tensor(Shape shape, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) {
        x = rng.normal();
    }
    return Tensor::from_values(std::move(shape), v);
}

/// Distinct values spaced at least 0.01 apart with random signs, so that
/// kinks (relu, abs, max) are never crossed by the probe step.
Tensor spaced_tensor(Shape shape, Rng& rng) {
    const auto n = shape_numel(shape);
    std::vector<double> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 1.0);
    std::shuffle(v.begin(), v.end(), rng.engine());
    for (auto& x : v) {
        x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.01 * x + 0.005 * rng.uniform());
    }
    return Tensor::from_values(std::move(shape), v);
}

struct Leaf {
    std::string name;
    Tensor tensor;
};

class Checker {
public:
    Checker(std::string name, double tolerance, double eps, std::int64_t probes)
        : entry_{std::move(name), 0.0, tolerance, 0, {}}, eps_(eps), probes_(probes) {}

    void check(const std::function<Tensor()>& loss, const std::vector<Leaf>& leaves, std::uint64_t seed) {
        std::uint64_t salt = 0;
        for (const auto& leaf : leaves) {
            GradCheckOptions opts;
            opts.eps = eps_;
            opts.max_probes = probes_;
            opts.seed = seed * 1000003ULL + salt++;
            const auto r = finite_diff_check_leaf(loss, leaf.tensor, opts);
            entry_.probes += r.probes;
            if (r.max_rel_error >= entry_.max_rel_error) {
                entry_.max_rel_error = r.max_rel_error;
                entry_.worst_tensor = leaf.name;
            }
        }
    }

    GradCheckEntry result() const { return entry_; }

private:
    GradCheckEntry entry_;
    double eps_;
    std::int64_t probes_;
};

std::vector<Leaf> leaves_of(const ParameterSet& set) {
    std::vector<Leaf> out;
    for (const auto& p : set) {
        out.push_back({p.name, p.tensor});
    }
    return out;
}

template <typename Build>
GradCheckEntry layer_entry(const std::string& name, const GradCheckSuiteOptions& o, Build build) {
    Checker checker(name, o.layer_tolerance, o.eps, o.layer_probes);
    for (auto seed : o.seeds) {
        Rng rng(seed + 0x5eed);
        std::vector<Leaf> leaves;
        std::function<Tensor()> loss;
        build(rng, leaves, loss);
        checker.check(loss, leaves, seed);
    }
    return checker.result();
}

using Leaves = std::vector<Leaf>;
using Loss = std::function<Tensor()>;

} // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& o,
                                                const std::function<void(const GradCheckEntry&)>& progress) {
    DTypeScope f64(DType::f64);
    std::vector<GradCheckEntry> entries;
    auto record = [&](GradCheckEntry e) {
        if (progress) {
            progress(e);
        }
        entries.push_back(std::move(e));
    };

    record(layer_entry("conv2d", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 3, 7, 6}, rng);
        ConvParams p{normal_tensor({4, 3, 3, 3}, rng), normal_tensor({4}, rng), 1, 1};
        auto w = normal_tensor({2, 4, 7, 6}, rng);
        leaves = {{"input", x}, {"kernel", p.kernel}, {"bias", p.bias}};
        loss = [=] { return sum(mul(conv2d(x, p), w)); };
    }));
    record(layer_entry("conv2d_stride2", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({1, 2, 8, 8}, rng);
        ConvParams p{normal_tensor({3, 2, 3, 3}, rng), {}, 2, 1};
        auto w = normal_tensor({1, 3, 4, 4}, rng);
        leaves = {{"input", x}, {"kernel", p.kernel}};
        loss = [=] { return sum(mul(conv2d(x, p), w)); };
    }));
    record(layer_entry("conv2d_1x1", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 3, 4, 5}, rng);
        ConvParams p{normal_tensor({2, 3, 1, 1}, rng), normal_tensor({2}, rng), 1, 0};
        auto w = normal_tensor({2, 2, 4, 5}, rng);
        leaves = {{"input", x}, {"kernel", p.kernel}, {"bias", p.bias}};
        loss = [=] { return sum(mul(conv2d(x, p), w)); };
    }));
    record(layer_entry("transpose_conv2d", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 3, 4, 3}, rng);
        ConvParams p{normal_tensor({3, 2, 4, 4}, rng), normal_tensor({2}, rng), 2, 1};
        auto w = normal_tensor({2, 2, 8, 6}, rng);
        leaves = {{"input", x}, {"kernel", p.kernel}, {"bias", p.bias}};
        loss = [=] { return sum(mul(transpose_conv2d(x, p), w)); };
    }));
    record(layer_entry("max_pool2d", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = spaced_tensor({2, 2, 6, 6}, rng);
        auto w = normal_tensor({2, 2, 3, 3}, rng);
        leaves = {{"input", x}};
        loss = [=] { return sum(mul(max_pool2d(x, 2, 2), w)); };
    }));
    record(layer_entry("bilinear_upsample", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 3, 3, 4}, rng);
        auto w = normal_tensor({2, 3, 12, 16}, rng);
        leaves = {{"input", x}};
        loss = [=] { return sum(mul(bilinear_upsample(x, 12, 16), w)); };
    }));
    record(layer_entry("group_norm", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 6, 3, 3}, rng);
        auto gamma = normal_tensor({6}, rng);
        auto beta = normal_tensor({6}, rng);
        auto w = normal_tensor({2, 6, 3, 3}, rng);
        leaves = {{"input", x}, {"gamma", gamma}, {"beta", beta}};
        loss = [=] { return sum(mul(group_norm(x, 3, gamma, beta, 1e-5), w)); };
    }));
    record(layer_entry("relu", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = spaced_tensor({3, 5, 4}, rng);
        auto w = normal_tensor({3, 5, 4}, rng);
        leaves = {{"input", x}};
        loss = [=] { return sum(mul(relu(x), w)); };
    }));
    record(layer_entry("abs_sub", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto a = spaced_tensor({2, 3, 4}, rng);
        auto b = normal_tensor({2, 3, 4}, rng);
        auto w = normal_tensor({2, 3, 4}, rng);
        // Keep |a - b| away from zero.
        b = scale(b, 0.001);
        leaves = {{"a", a}, {"b", b.detach()}};
        auto bl = leaves[1].tensor;
        loss = [=] { return sum(mul(abs(sub(a, bl)), w)); };
    }));
    record(layer_entry("linear", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 5, 4}, rng);
        auto weight = normal_tensor({3, 4}, rng);
        auto bias = normal_tensor({3}, rng);
        auto w = normal_tensor({2, 5, 3}, rng);
        leaves = {{"input", x}, {"weight", weight}, {"bias", bias}};
        loss = [=] { return sum(mul(linear(x, weight, bias), w)); };
    }));
    record(layer_entry("matmul", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto a = normal_tensor({2, 3, 4}, rng);
        auto b = normal_tensor({2, 4, 5}, rng);
        auto w = normal_tensor({2, 3, 5}, rng);
        leaves = {{"a", a}, {"b", b}};
        loss = [=] { return sum(mul(matmul(a, b), w)); };
    }));
    record(layer_entry("softmax", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 3, 5}, rng);
        auto w = normal_tensor({2, 3, 5}, rng);
        leaves = {{"input", x}};
        loss = [=] { return add(sum(mul(softmax(x, -1), w)), sum(mul(softmax(x, 1), w))); };
    }));
    record(layer_entry("structural", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto a = normal_tensor({2, 3, 4}, rng);
        auto b = normal_tensor({2, 2, 4}, rng);
        auto w = normal_tensor({4, 2, 3}, rng);
        leaves = {{"a", a}, {"b", b}};
        loss = [=] {
            auto c = concat({a, b}, 1);                 // [2, 5, 4]
            auto n = narrow(c, 1, 1, 3);                // [2, 3, 4]
            auto p = permute(n, {2, 0, 1});             // [4, 2, 3]
            auto r = reshape(transpose(p, 1, 2), {4, 3, 2});
            return sum(mul(transpose(r, 1, 2), w));
        };
    }));
    record(layer_entry("tokens", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto x = normal_tensor({2, 3, 2, 4}, rng);
        auto w = normal_tensor({2, 8, 3}, rng);
        auto w2 = normal_tensor({2, 3, 4, 2}, rng);
        leaves = {{"input", x}};
        loss = [=] {
            auto t = map_to_tokens(x);
            return add(sum(mul(t, w)), sum(mul(tokens_to_map(t, 4, 2), w2)));
        };
    }));
    record(layer_entry("mhsa", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        MultiHeadAttention attn(8, 2, rng);
        auto x = normal_tensor({2, 5, 8}, rng);
        auto w = normal_tensor({2, 5, 8}, rng);
        ParameterSet set;
        attn.register_parameters(set, "");
        leaves = leaves_of(set);
        leaves.push_back({"tokens", x});
        loss = [=] { return sum(mul(attn.forward(x), w)); };
    }));
    record(layer_entry("cross_entropy", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        auto logits = normal_tensor({2, 2, 3, 4}, rng);
        std::vector<double> labels(24);
        for (auto& l : labels) {
            l = static_cast<double>(rng.integer(0, 1));
        }
        auto y = Tensor::from_values({2, 3, 4}, labels);
        leaves = {{"logits", logits}};
        loss = [=] { return cross_entropy_loss(logits, y); };
    }));
    record(layer_entry("residual_block", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        ResidualBlock block(8, 8, 1, 4, 1e-5, rng);
        auto x = normal_tensor({1, 8, 6, 6}, rng);
        auto w = normal_tensor({1, 8, 6, 6}, rng);
        ParameterSet set;
        block.register_parameters(set, "");
        leaves = leaves_of(set);
        leaves.push_back({"input", x});
        loss = [=] { return sum(mul(block.forward(x), w)); };
    }));
    record(layer_entry("residual_block_projection", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        ResidualBlock block(4, 8, 2, 2, 1e-5, rng);
        auto x = normal_tensor({2, 4, 6, 6}, rng);
        auto w = normal_tensor({2, 8, 3, 3}, rng);
        ParameterSet set;
        block.register_parameters(set, "");
        leaves = leaves_of(set);
        leaves.push_back({"input", x});
        loss = [=] { return sum(mul(block.forward(x), w)); };
    }));
    record(layer_entry("conv_transpose_layer", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        ConvTranspose2d up(4, 3, 4, rng);
        auto x = normal_tensor({1, 4, 3, 3}, rng);
        auto w = normal_tensor({1, 3, 6, 6}, rng);
        ParameterSet set;
        up.register_parameters(set, "");
        leaves = leaves_of(set);
        leaves.push_back({"input", x});
        loss = [=] { return sum(mul(up.forward(x), w)); };
    }));
    record(layer_entry("decoder", o, [](Rng& rng, Leaves& leaves, Loss& loss) {
        DecoderConfig cfg;
        cfg.in_channels = 8;
        auto decoder = std::make_shared<Decoder>(cfg, rng);
        auto x = normal_tensor({1, 8, 4, 4}, rng);
        auto w = normal_tensor({1, 2, 16, 16}, rng);
        ParameterSet set;
        decoder->register_parameters(set, "");
        leaves = leaves_of(set);
        leaves.push_back({"x_bar", x});
        loss = [=] { return sum(mul(decoder->decode(ChangeEncoding{x}), w)); };
    }));
    // Scale fusion does not affect a single module, so rows differing only
    // in use_msf are checked once.
    std::vector<EncoderFlags> seen;
    for (const auto& row : ablation_rows()) {
        EncoderFlags paths = row.flags;
        paths.use_msf = true;
        if (std::find(seen.begin(), seen.end(), paths) != seen.end()) {
            continue;
        }
        seen.push_back(paths);
        std::string name = "difference_module[" + row.label + "]";
        record(layer_entry(name, o, [&](Rng& rng, Leaves& leaves, Loss& loss) {
            EncoderConfig cfg;
            cfg.embed_dim = 8;
            cfg.attn_dim = 8;
            cfg.heads = 2;
            cfg.out_dim = 8;
            cfg.flags = row.flags;
            DifferenceModule module(8, cfg, rng);
            auto pre = normal_tensor({1, 8, 4, 4}, rng);
            auto post = normal_tensor({1, 8, 4, 4}, rng);
            auto w = normal_tensor({1, 8, 4, 4}, rng);
            ParameterSet set;
            module.register_parameters(set, "");
            leaves = leaves_of(set);
            leaves.push_back({"pre", pre});
            leaves.push_back({"post", post});
            auto shared = std::make_shared<DifferenceModule>(std::move(module));
            loss = [=] { return sum(mul(shared->forward(pre, post), w)); };
        }));
    }

    if (o.include_model) {
        Checker checker("model", o.model_tolerance, o.eps, o.model_probes);
        for (auto seed : o.seeds) {
            auto model = std::make_shared<ChangeBindModel>(ModelConfig::desk(), seed);
            Rng rng(seed + 0xfeed);
            const auto s = o.model_image_size;
            auto pre = normal_tensor({1, 3, s, s}, rng);
            auto post = normal_tensor({1, 3, s, s}, rng);
            auto w = normal_tensor({1, 2, s, s}, rng);
            auto leaves = leaves_of(model->parameters());
            leaves.push_back({"pre", pre});
            leaves.push_back({"post", post});
            checker.check([=] { return sum(mul(model->forward(pre, post), w)); }, leaves, seed);
        }
        record(checker.result());
    }
    return entries;
}

} // namespace changebind
