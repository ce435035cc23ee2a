#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hwmnet/dataset.hpp"
#include "hwmnet/network.hpp"

namespace hwmnet {

/// Training hyperparameters. Defaults follow the full-scale recipe (1e5
/// iterations, batch 2, 256x256 patches, cosine 1e-4 -> 1e-6); desk() swaps
/// in a test-scale variant. The patch size must divide by the network's pad
/// multiple.
struct TrainConfig {
    std::int64_t iterations = 100000;
    int batch = 2;
    int patch = 256;
    double lr_start = 1e-4;
    double lr_end = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 1000;
    std::int64_t checkpoint_every = 1000;
    LossMode loss_mode = LossMode::elementwise_mean;
    bool augment = true;
    int crops_per_image = 10;   // epoch definition: crops per record
    bool clip_grad = false;
    double clip_norm = 1.0;

    static TrainConfig desk();   // 2000 iterations, 64x64 patches

    void validate(int pad_multiple) const;
    std::string to_text() const;
    static TrainConfig from_text(const std::string& text);
};

/// lr(t) = lr_end + (lr_start - lr_end) * (1 + cos(pi t / T)) / 2, clamped to
/// lr_end past T. Endpoints are exact: lr(0) == lr_start, lr(T) == lr_end.
double cosine_lr(std::int64_t t, std::int64_t total, double lr_start, double lr_end);

/// First/second moment buffers aligned with the parameter store order.
struct AdamState {
    explicit AdamState(const ParamStore<float>& params);
    std::int64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

/// One bias-corrected Adam update from the gradients currently held by the
/// parameters. Every parameter must carry a gradient (InvalidState if not).
void adam_step(ParamStore<float>& params, AdamState& state, double lr, const TrainConfig& cfg);

struct LossSample {
    std::int64_t iteration = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainHooks {
    std::function<void(const LossSample&)> on_loss;
    std::function<void(std::int64_t iteration)> on_checkpoint;
    std::function<void(std::int64_t iteration)> on_eval;
};

/// Runs iterations [start, stop) of the schedule defined by cfg (the cosine
/// schedule always spans cfg.iterations, so an interrupted run resumed at
/// `start` reproduces the uninterrupted trajectory bitwise). Batches are a
/// pure function of (seed, iteration): each epoch lists every record
/// crops_per_image times in an order keyed by (seed, epoch), and each sample
/// draws its crop and flips from a stream keyed by (seed, record, global
/// sample index). Aborts with InvalidState diagnostics if the loss goes
/// non-finite.
std::vector<LossSample> train(HwmnetModel<float>& model, AdamState& adam,
                              const DatasetIndex& data, const TrainConfig& cfg,
                              std::int64_t start_iteration, std::int64_t stop_iteration,
                              const TrainHooks& hooks = {});

/// Serialized model + optimizer + schedule state; enough to resume training
/// bitwise or run inference.
struct Checkpoint {
    NetworkConfig net_config;
    TrainConfig train_config;
    std::int64_t iteration = 0;
    std::uint64_t rng_seed = 0;
    std::int64_t adam_step_count = 0;
    std::vector<std::string> param_names;
    std::vector<Tensor<float>> param_values;
    bool has_optimizer = false;
    std::vector<std::vector<float>> adam_m;
    std::vector<std::vector<float>> adam_v;
};

Checkpoint make_checkpoint(const HwmnetModel<float>& model, const AdamState* adam,
                           const TrainConfig& cfg, std::int64_t iteration);

/// Binary format: "HWMN" magic, u32 version, schedule state, the network and
/// train configs as text blocks, then named little-endian f32 tensors and
/// optional optimizer moments. save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint parameters (and moments, when present and requested)
/// into a model built from the same config. Name/shape mismatches raise
/// UnsupportedCheckpoint.
void apply_checkpoint(const Checkpoint& ckpt, HwmnetModel<float>& model, AdamState* adam);

}  // namespace hwmnet
