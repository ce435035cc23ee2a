#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hwmnet/blocks.hpp"
#include "hwmnet/tensor.hpp"

namespace hwmnet {

/// Architecture hyperparameters. The per-level channel schedule defaults to
/// doubling from base_width ([96,192,384,768] at four levels); the first
/// entry must equal base_width because the level-1 block consumes the shared
/// gatepost features directly. Inputs are reflect-padded to multiples of
/// 2^levels so every level, including the deepest, has even spatial dims for
/// the wavelet split.
struct NetworkConfig {
    int levels = 4;
    int base_width = 96;
    std::vector<int> width_schedule;   // empty -> base_width << level
    int in_channels = 3;
    AttentionConfig attention;
    bool global_residual = true;

    std::vector<int> widths() const;
    int pad_multiple() const { return 1 << levels; }
    void validate() const;

    /// key=value text block, one entry per line; used in checkpoints and
    /// accepted by the CLI --config flag.
    std::string to_text() const;
    static NetworkConfig from_text(const std::string& text);
};

enum class LossMode {
    elementwise_mean,  // mean over elements of sqrt(d^2 + eps^2)
    global_norm,       // sqrt(|d|_2^2 + eps^2)
};

/// Smooth L1 surrogate; differentiable everywhere including zero residual.
/// For identical inputs both modes return exactly eps.
template <typename S>
Tensor<S> charbonnier_loss(Graph<S>* g, const Tensor<S>& prediction, const Tensor<S>& target,
                           double eps = 1e-3, LossMode mode = LossMode::elementwise_mean);

/// Hierarchical enhancement network: a shared 3x3 gatepost convolution feeds
/// every resolution of the bilinearly downscaled input, the encoder trunk
/// downsamples by pixel unshuffle with a 1x1 merge, every level runs a half
/// wavelet attention block, and the decoder fuses upsampled features with
/// skip connections through selective fusion. The output is a 3x3 projection
/// added to the input when global_residual is on.
template <typename S>
class HwmnetModel {
public:
    static HwmnetModel build(const NetworkConfig& cfg, std::uint64_t seed);

    /// Expects (n, in_channels, h, w) with h, w >= pad_multiple; preserves the
    /// input spatial size via internal reflect pad + crop. Pass g == nullptr
    /// for inference (no tape).
    Tensor<S> forward(Graph<S>* g, const Tensor<S>& input) const;

    ParamStore<S>& params() { return store_; }
    const ParamStore<S>& params() const { return store_; }
    const NetworkConfig& config() const { return cfg_; }

private:
    struct EncoderLevel {
        bool has_merge = false;
        Conv2d<S> merge;   // 1x1 after pixel-unshuffle + gatepost concat
        HalfWaveletBlock<S> hwab;
    };
    struct DecoderLevel {
        Conv2d<S> up;      // 1x1 after bilinear x2
        SelectiveFusion<S> skff;
        HalfWaveletBlock<S> hwab;
    };

    NetworkConfig cfg_;
    ParamStore<S> store_;
    Conv2d<S> gatepost_;
    std::vector<EncoderLevel> encoder_;
    std::vector<DecoderLevel> decoder_;   // ordered deepest-first (level L-1 .. 1)
    Conv2d<S> output_;
};

struct LayerCost {
    std::string name;
    std::int64_t params = 0;
    std::int64_t flops = 0;
};

/// Forward-pass cost accounting. Convolutions count 2 * k^2 * ci/groups * co
/// * h_out * w_out FLOPs (1 MAC = 2 FLOPs, bias ignored); activations and
/// gates count one FLOP per element, wavelet transforms four per element,
/// bilinear resizing eight per output element, and pure data movement
/// (shuffle, concat, split, pad, crop) counts zero. Weight-shared layers
/// carry their parameters on the first application only.
struct CostReport {
    int input_h = 0, input_w = 0;   // requested size
    int eval_h = 0, eval_w = 0;     // padded size the network actually runs at
    std::int64_t total_params = 0;
    std::int64_t total_flops = 0;
    std::vector<LayerCost> layers;

    const LayerCost* find(const std::string& name) const;
};

CostReport count_cost(const NetworkConfig& cfg, int h, int w);

using HwmnetModelF = HwmnetModel<float>;
using HwmnetModelD = HwmnetModel<double>;

}  // namespace hwmnet
