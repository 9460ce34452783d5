#include "changebind/optim.hpp"

#include <cmath>

#include <fmt/format.h>

namespace changebind {

void AdamWConfig::validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError(fmt::format("adamw: betas ({}, {}) must lie in [0, 1)", beta1, beta2));
    }
    if (eps < 0.0 || weight_decay < 0.0) {
        throw ConfigError("adamw: eps and weight_decay must be non-negative");
    }
}

void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state,
                const AdamWConfig& config, double lr) {
    if (params.size() != grads.size()) {
        throw UsageError(fmt::format("adamw_step: {} parameters but {} gradients", params.size(), grads.size()));
    }
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
    }
    if (state.m.size() != params.size()) {
        throw UsageError("adamw_step: optimizer state belongs to a different parameter list");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!grads[p].defined()) {
            continue;
        }
        if (grads[p].shape() != params[p].shape()) {
            throw UsageError(fmt::format("adamw_step: gradient {} does not match parameter {} at index {}",
                                         shape_string(grads[p].shape()), shape_string(params[p].shape()), p));
        }
        for (std::int64_t i = 0; i < grads[p].numel(); ++i) {
            if (!std::isfinite(grads[p].at(i))) {
                throw NumericError(fmt::format("adamw_step: non-finite gradient {} in parameter {} element {}",
                                               grads[p].at(i), p, i));
            }
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!grads[p].defined()) {
            continue;
        }
        const auto n = static_cast<std::size_t>(params[p].numel());
        auto& m = state.m[p];
        auto& v = state.v[p];
        if (m.empty()) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        }
        const auto g = grads[p].to_vector();
        std::visit([&](auto& theta) {
            using T = typename std::decay_t<decltype(theta)>::value_type;
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                const double m_hat = m[i] / correction1;
                const double v_hat = v[i] / correction2;
                const double old = theta[i];
                theta[i] = static_cast<T>(old - lr * m_hat / (std::sqrt(v_hat) + config.eps) -
                                          lr * config.weight_decay * old);
            }
        }, params[p].mutable_buffer());
    }
}

AdamW::AdamW(const ParameterSet& parameters, AdamWConfig config) : parameters_(&parameters), config_(config) {
    config_.validate();
}

void AdamW::step(double lr) {
    std::vector<Tensor> params;
    std::vector<Tensor> grads;
    params.reserve(parameters_->size());
    for (const auto& [name, tensor] : *parameters_) {
        params.push_back(tensor);
        grads.push_back(tensor.has_grad() ? tensor.grad() : Tensor{});
        if (grads.back().defined()) {
            check_finite(grads.back(), fmt::format("gradient of '{}'", name));
        }
    }
    adamw_step(params, grads, state_, config_, lr);
}

void AdamW::zero_grad() {
    for (const auto& item : *parameters_) {
        Tensor t = item.tensor;
        t.zero_grad();
    }
}

double lr_schedule(int epoch, double lr0, int epochs) {
    if (epochs < 1) {
        throw UsageError(fmt::format("lr_schedule: epochs must be >= 1, got {}", epochs));
    }
    if (epoch < 0 || epoch > epochs) {
        throw UsageError(fmt::format("lr_schedule: epoch {} outside [0, {}]", epoch, epochs));
    }
    return lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(epochs));
}

} // namespace changebind
