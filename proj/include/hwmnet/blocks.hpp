#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hwmnet/rng.hpp"
#include "hwmnet/tensor.hpp"

namespace hwmnet {

/// Attention hyperparameters left open by the block definitions; defaults
/// follow the SENet/CBAM conventions.
struct AttentionConfig {
    int ca_reduction = 8;   // channel-attention squeeze ratio
    int sa_kernel = 7;      // spatial-attention kernel, odd
    int skff_reduction = 8; // fusion descriptor ratio, floored at 4 channels
};

/// Named, ordered collection of learnable tensors. Registration order is the
/// canonical order for initialization draws, optimizer state and checkpoint
/// layout; names are hierarchical (e.g. "enc.L2.hwab.dau.ca.fc1.weight") and
/// unique. Stored tensors share their buffers with the layer structs that
/// registered them, so in-place optimizer updates are visible everywhere.
template <typename S>
class ParamStore {
public:
    Tensor<S>& add(const std::string& name, Tensor<S> t);
    Tensor<S>& at(const std::string& name);
    const Tensor<S>& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return tensors_.size(); }
    std::int64_t total_params() const;
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor<S>& operator[](std::size_t i) { return tensors_[i]; }
    const Tensor<S>& operator[](std::size_t i) const { return tensors_[i]; }

    void zero_all();
    void zero_grads();

private:
    std::vector<std::string> names_;
    std::vector<Tensor<S>> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Convolution layer; weights drawn uniform in +-sqrt(6/fan_in), zero bias.
template <typename S>
struct Conv2d {
    Tensor<S> weight;   // (co, ci, k, k)
    Tensor<S> bias;     // (1, co, 1, 1)
    int padding = 0;
    int groups = 1;

    static Conv2d create(ParamStore<S>& store, const std::string& name, int ci, int co, int k,
                         Rng& rng);
    Tensor<S> forward(Graph<S>* g, const Tensor<S>& x) const;
};

template <typename S>
struct PReluLayer {
    Tensor<S> alpha;    // (1, c, 1, 1), initialized to 0.25

    static PReluLayer create(ParamStore<S>& store, const std::string& name, int c);
    Tensor<S> forward(Graph<S>* g, const Tensor<S>& x) const;
};

/// Squeeze-and-excitation gate: x * sigmoid(fc2(relu(fc1(GAP(x))))).
template <typename S>
struct ChannelAttention {
    Conv2d<S> fc1, fc2;   // 1x1 convolutions, c -> c/r -> c

    static ChannelAttention create(ParamStore<S>& store, const std::string& name, int c,
                                   int reduction, Rng& rng);
    Tensor<S> forward(Graph<S>* g, const Tensor<S>& x) const;
};

/// Per-position gate from pooled channel statistics:
/// x * sigmoid(conv_k([mean_c(x); max_c(x)])).
template <typename S>
struct SpatialAttention {
    Conv2d<S> conv;       // k x k, 2 -> 1

    static SpatialAttention create(ParamStore<S>& store, const std::string& name, int kernel,
                                   Rng& rng);
    Tensor<S> forward(Graph<S>* g, const Tensor<S>& x) const;
};

/// Dual attention unit: conv3x3 -> PReLU -> conv3x3 trunk, channel and
/// spatial attention applied in parallel, fused by a 1x1 convolution, plus a
/// residual connection. With all parameters zero this is the identity.
template <typename S>
struct DualAttentionUnit {
    Conv2d<S> conv1, conv2;
    PReluLayer<S> act;
    ChannelAttention<S> ca;
    SpatialAttention<S> sa;
    Conv2d<S> merge;      // 1x1, 2c -> c

    static DualAttentionUnit create(ParamStore<S>& store, const std::string& name, int c,
                                    const AttentionConfig& cfg, Rng& rng);
    Tensor<S> forward(Graph<S>* g, const Tensor<S>& x) const;
};

/// Half wavelet attention block. The input is split channel-wise; one half is
/// kept in the normal domain while the other is transformed by a single-level
/// Haar DWT, weighted by the dual attention unit on 2c subband channels at
/// half resolution, and transformed back. Both halves merge through a 3x3
/// convolution + PReLU, and a 1x1 convolution of the full input is added as
/// the shortcut.
template <typename S>
struct HalfWaveletBlock {
    DualAttentionUnit<S> dau;
    Conv2d<S> tail;       // 3x3, c -> c on the concatenated halves
    PReluLayer<S> tail_act;
    Conv2d<S> shortcut;   // 1x1, c -> c on the full input

    static HalfWaveletBlock create(ParamStore<S>& store, const std::string& name, int c,
                                   const AttentionConfig& cfg, Rng& rng);
    Tensor<S> forward(Graph<S>* g, const Tensor<S>& x) const;
};

/// Selective fusion of same-shape branches: softmax-normalized per-channel
/// weights derived from a pooled descriptor of the branch sum. Weights sum to
/// one across branches per (batch, channel).
template <typename S>
struct SelectiveFusion {
    Conv2d<S> squeeze;                 // 1x1, c -> max(c/r, 4)
    std::vector<Conv2d<S>> branch_fc;  // 1x1, descriptor -> c, one per branch

    static SelectiveFusion create(ParamStore<S>& store, const std::string& name, int c,
                                  int branches, int reduction, Rng& rng);
    Tensor<S> forward(Graph<S>* g, const std::vector<Tensor<S>>& branches) const;
};

}  // namespace hwmnet
