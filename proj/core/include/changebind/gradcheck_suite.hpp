#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace changebind {

struct GradCheckSuiteOptions {
    std::vector<std::uint64_t> seeds{0, 1, 2};
    double layer_tolerance = 1e-5;
    double model_tolerance = 1e-4;
    double eps = 1e-6;
    /// Elements probed per tensor in the layer checks.
    std::int64_t layer_probes = 16;
    /// Elements probed per parameter tensor in the full-model check.
    std::int64_t model_probes = 4;
    std::int64_t model_image_size = 32;
    /// Skip the full-model check (useful for quick per-layer runs).
    bool include_model = true;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::int64_t probes = 0;
    /// Tensor (input or parameter) holding the worst element.
    std::string worst_tensor;

    bool passed() const { return max_rel_error < tolerance; }
};

/// 64-bit finite-difference checks of every layer and of the full model.
/// Each entry holds the worst relative error over all probed inputs,
/// parameters and seeds. `progress` is called after each entry completes.
std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckSuiteOptions& options = {},
                                                const std::function<void(const GradCheckEntry&)>& progress = {});

} // namespace changebind
