#include "changebind/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "changebind/checkpoint.hpp"
#include "changebind/init.hpp"
#include "changebind/ops.hpp"

namespace changebind {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) {
        throw ConfigError(fmt::format("train: lr must be positive, got {}", lr0));
    }
    if (epochs < 1) {
        throw ConfigError(fmt::format("train: epochs must be >= 1, got {}", epochs));
    }
    if (batch_size < 1) {
        throw ConfigError(fmt::format("train: batch_size must be >= 1, got {}", batch_size));
    }
    if (checkpoint_every < 0) {
        throw ConfigError("train: checkpoint_every must be >= 0");
    }
    adamw.validate();
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(epoch) + 1);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

ConfusionCounts evaluate(const ChangeBindModel& model, const Dataset& data, int batch_size,
                         std::vector<BinaryMask>* predictions) {
    if (data.empty()) {
        throw ConfigError("evaluate: dataset is empty");
    }
    ConfusionCounts total;
    std::vector<std::size_t> indices(data.size());
    std::iota(indices.begin(), indices.end(), 0);
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto count = std::min<std::size_t>(static_cast<std::size_t>(batch_size), data.size() - start);
        const Batch batch = make_batch(data, std::span(indices).subspan(start, count));
        const ChangeMap map = model.predict(batch.pre, batch.post);
        total += confusion(map.mask, batch.mask);
        if (predictions) {
            for (std::size_t b = 0; b < count; ++b) {
                predictions->push_back(mask_slice(map.mask, static_cast<std::int64_t>(b)));
            }
        }
    }
    return total;
}

namespace {

nlohmann::json epoch_json(const EpochRecord& r) {
    nlohmann::json j{{"epoch", r.epoch}, {"lr", r.lr}, {"loss", r.loss}};
    if (r.val) {
        const Scores s = scores(*r.val);
        j["val_f1"] = s.f1;
        j["val_iou"] = s.iou;
        j["val_oa"] = s.oa;
    }
    return j;
}

} // namespace

TrainReport train(ChangeBindModel& model, const Dataset& data, const TrainConfig& config,
                  const TrainOptions& options) {
    config.validate();
    if (data.empty()) {
        throw ConfigError("train: dataset is empty");
    }
    std::ofstream report_file;
    if (!options.out_dir.empty()) {
        fs::create_directories(options.out_dir);
        report_file.open(options.out_dir / "report", std::ios::trunc);
        if (!report_file) {
            throw IoError(fmt::format("cannot write {}", (options.out_dir / "report").string()));
        }
    }
    auto write_line = [&](const nlohmann::json& j) {
        if (report_file.is_open()) {
            report_file << j.dump() << '\n';
            report_file.flush();
        }
    };

    const ParameterSet& params = model.parameters();
    AdamW optimizer(params, config.adamw);
    TrainReport report;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        EpochRecord record;
        record.epoch = epoch;
        record.lr = lr_schedule(epoch, config.lr0, config.epochs);
        const auto order = epoch_order(data.size(), config.seed, epoch);
        double weighted_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const auto count = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - start);
            const Batch batch = make_batch(data, std::span(order).subspan(start, count));
            optimizer.zero_grad();
            const Tensor loss = cross_entropy_loss(model.forward(batch.pre, batch.post), batch.labels);
            const double value = loss.item();
            auto abort = [&](const std::string& what) {
                std::string where;
                if (!options.out_dir.empty()) {
                    const auto path = options.out_dir / "last_good.ckpt";
                    save_parameters(path, params);
                    where = fmt::format("; last good parameters saved to {}", path.string());
                }
                throw NumericError(fmt::format("{} at epoch {} batch {}{}", what, epoch,
                                               start / static_cast<std::size_t>(config.batch_size), where));
            };
            if (!std::isfinite(value)) {
                abort(fmt::format("non-finite loss {}", value));
            }
            loss.backward();
            try {
                optimizer.step(record.lr);
            } catch (const NumericError& e) {
                abort(e.what());
            }
            weighted_loss += value * static_cast<double>(count);
        }
        optimizer.zero_grad();
        record.loss = weighted_loss / static_cast<double>(data.size());
        if (options.val && !options.val->empty()) {
            record.val = evaluate(model, *options.val, config.batch_size);
        }
        write_line(epoch_json(record));
        if (options.on_epoch) {
            options.on_epoch(record);
        }
        report.epochs.push_back(record);

        const bool last = epoch + 1 == config.epochs;
        const bool periodic = config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0;
        if (!options.out_dir.empty() && (last || periodic)) {
            const auto path = options.out_dir / (last ? std::string("final.ckpt")
                                                      : fmt::format("epoch_{:04d}.ckpt", epoch + 1));
            save_parameters(path, params);
            report.checkpoints.push_back(path);
        }
    }

    report.final_train = evaluate(model, data, config.batch_size);
    const Scores s = scores(report.final_train);
    write_line({{"final", "train"},
                {"tp", report.final_train.tp},
                {"fp", report.final_train.fp},
                {"fn", report.final_train.fn},
                {"tn", report.final_train.tn},
                {"f1", s.f1},
                {"iou", s.iou},
                {"oa", s.oa}});
    return report;
}

} // namespace changebind
