#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "changebind/layers.hpp"

namespace changebind {

struct AdamWConfig {
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// First/second moments per parameter (kept in 64-bit) and the shared step
/// counter.
struct OptimizerState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::int64_t step = 0;
};

/// One AdamW update with decoupled weight decay:
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
/// Parameters whose gradient is undefined are left untouched. A non-finite
/// gradient aborts with NumericError before anything is modified.
void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state,
                const AdamWConfig& config, double lr);

class AdamW {
public:
    AdamW(const ParameterSet& parameters, AdamWConfig config);

    /// Applies one update from the gradients currently stored on the
    /// parameters.
    void step(double lr);
    void zero_grad();

    const OptimizerState& state() const { return state_; }

private:
    const ParameterSet* parameters_;
    AdamWConfig config_;
    OptimizerState state_;
};

/// Linear per-epoch decay: lr0 * (1 - epoch / epochs), for epoch in [0, epochs].
double lr_schedule(int epoch, double lr0, int epochs);

} // namespace changebind
