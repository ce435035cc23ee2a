#include "hwmnet/blocks.hpp"

#include <cmath>

#include "hwmnet/errors.hpp"
#include "hwmnet/resample.hpp"

namespace hwmnet {

// ---- ParamStore ------------------------------------------------------------

template <typename S>
Tensor<S>& ParamStore<S>::add(const std::string& name, Tensor<S> t) {
    require(t.defined(), "ParamStore: undefined tensor for '" + name + "'");
    require(index_.find(name) == index_.end(), "ParamStore: duplicate name '" + name + "'");
    t.set_requires_grad(true);
    index_.emplace(name, tensors_.size());
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
}

template <typename S>
Tensor<S>& ParamStore<S>::at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter '" + name + "'");
    return tensors_[it->second];
}

template <typename S>
const Tensor<S>& ParamStore<S>::at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter '" + name + "'");
    return tensors_[it->second];
}

template <typename S>
bool ParamStore<S>::contains(const std::string& name) const {
    return index_.find(name) != index_.end();
}

template <typename S>
std::int64_t ParamStore<S>::total_params() const {
    std::int64_t total = 0;
    for (const auto& t : tensors_) {
        total += t.numel();
    }
    return total;
}

template <typename S>
void ParamStore<S>::zero_all() {
    for (auto& t : tensors_) {
        auto d = t.mutable_data();
        std::fill(d.begin(), d.end(), S(0));
    }
}

template <typename S>
void ParamStore<S>::zero_grads() {
    for (auto& t : tensors_) {
        t.zero_grad();
    }
}

// ---- layers ------------------------------------------------------------------

template <typename S>
Conv2d<S> Conv2d<S>::create(ParamStore<S>& store, const std::string& name, int ci, int co, int k,
                            Rng& rng) {
    require(ci >= 1 && co >= 1 && k >= 1 && k % 2 == 1, "Conv2d: bad layer dims for " + name);
    const double bound = std::sqrt(6.0 / (static_cast<double>(ci) * k * k));
    std::vector<S> w(static_cast<std::size_t>(co) * ci * k * k);
    for (auto& v : w) {
        v = static_cast<S>(rng.uniform(-bound, bound));
    }
    Conv2d<S> layer;
    layer.weight = store.add(name + ".weight", Tensor<S>::from_data({co, ci, k, k}, std::move(w)));
    layer.bias = store.add(name + ".bias", Tensor<S>::zeros({1, co, 1, 1}));
    layer.padding = (k - 1) / 2;
    return layer;
}

template <typename S>
Tensor<S> Conv2d<S>::forward(Graph<S>* g, const Tensor<S>& x) const {
    return conv2d<S>(g, x, weight, bias, padding, groups);
}

template <typename S>
PReluLayer<S> PReluLayer<S>::create(ParamStore<S>& store, const std::string& name, int c) {
    PReluLayer<S> layer;
    layer.alpha = store.add(name + ".alpha", Tensor<S>::full({1, c, 1, 1}, S(0.25)));
    return layer;
}

template <typename S>
Tensor<S> PReluLayer<S>::forward(Graph<S>* g, const Tensor<S>& x) const {
    return prelu<S>(g, x, alpha);
}

// ---- channel attention ----------------------------------------------------------

template <typename S>
ChannelAttention<S> ChannelAttention<S>::create(ParamStore<S>& store, const std::string& name,
                                                int c, int reduction, Rng& rng) {
    require(reduction >= 1 && c >= reduction,
            "ChannelAttention: need channels >= reduction, got " + std::to_string(c) + " < " +
                std::to_string(reduction));
    const int squeezed = c / reduction;
    ChannelAttention<S> layer;
    layer.fc1 = Conv2d<S>::create(store, name + ".fc1", c, squeezed, 1, rng);
    layer.fc2 = Conv2d<S>::create(store, name + ".fc2", squeezed, c, 1, rng);
    return layer;
}

template <typename S>
Tensor<S> ChannelAttention<S>::forward(Graph<S>* g, const Tensor<S>& x) const {
    require(x.defined() && x.shape().c == fc1.weight.shape().c,
            "ChannelAttention: channel mismatch");
    auto gate = global_avg_pool<S>(g, x);
    gate = fc1.forward(g, gate);
    gate = relu<S>(g, gate);
    gate = fc2.forward(g, gate);
    gate = sigmoid<S>(g, gate);
    return mul<S>(g, x, gate);
}

// ---- spatial attention -----------------------------------------------------------

template <typename S>
SpatialAttention<S> SpatialAttention<S>::create(ParamStore<S>& store, const std::string& name,
                                                int kernel, Rng& rng) {
    require(kernel % 2 == 1, "SpatialAttention: kernel must be odd");
    SpatialAttention<S> layer;
    layer.conv = Conv2d<S>::create(store, name + ".conv", 2, 1, kernel, rng);
    return layer;
}

template <typename S>
Tensor<S> SpatialAttention<S>::forward(Graph<S>* g, const Tensor<S>& x) const {
    auto avg = channel_mean<S>(g, x);
    auto mx = channel_max<S>(g, x);
    auto map = conv.forward(g, concat_channels<S>(g, {avg, mx}));
    map = sigmoid<S>(g, map);
    return mul<S>(g, x, map);
}

// ---- dual attention unit ------------------------------------------------------------

template <typename S>
DualAttentionUnit<S> DualAttentionUnit<S>::create(ParamStore<S>& store, const std::string& name,
                                                  int c, const AttentionConfig& cfg, Rng& rng) {
    require(c % 2 == 0, "DualAttentionUnit: channels must be even, got " + std::to_string(c));
    require(c >= cfg.ca_reduction, "DualAttentionUnit: channels below attention reduction");
    DualAttentionUnit<S> unit;
    unit.conv1 = Conv2d<S>::create(store, name + ".conv1", c, c, 3, rng);
    unit.act = PReluLayer<S>::create(store, name + ".act", c);
    unit.conv2 = Conv2d<S>::create(store, name + ".conv2", c, c, 3, rng);
    unit.ca = ChannelAttention<S>::create(store, name + ".ca", c, cfg.ca_reduction, rng);
    unit.sa = SpatialAttention<S>::create(store, name + ".sa", cfg.sa_kernel, rng);
    unit.merge = Conv2d<S>::create(store, name + ".merge", 2 * c, c, 1, rng);
    return unit;
}

template <typename S>
Tensor<S> DualAttentionUnit<S>::forward(Graph<S>* g, const Tensor<S>& x) const {
    require(x.defined() && x.shape().c == conv1.weight.shape().c,
            "DualAttentionUnit: channel mismatch");
    auto t = conv2.forward(g, act.forward(g, conv1.forward(g, x)));
    auto fused = merge.forward(
        g, concat_channels<S>(g, {ca.forward(g, t), sa.forward(g, t)}));
    return add<S>(g, x, fused);
}

// ---- half wavelet attention block -----------------------------------------------------

template <typename S>
HalfWaveletBlock<S> HalfWaveletBlock<S>::create(ParamStore<S>& store, const std::string& name,
                                                int c, const AttentionConfig& cfg, Rng& rng) {
    require(c % 2 == 0, "HalfWaveletBlock: channels must be even, got " + std::to_string(c));
    HalfWaveletBlock<S> block;
    // the transformed half has c/2 channels; its DWT has 2c subband channels
    block.dau = DualAttentionUnit<S>::create(store, name + ".dau", 2 * c, cfg, rng);
    block.tail = Conv2d<S>::create(store, name + ".tail", c, c, 3, rng);
    block.tail_act = PReluLayer<S>::create(store, name + ".tail_act", c);
    block.shortcut = Conv2d<S>::create(store, name + ".shortcut", c, c, 1, rng);
    return block;
}

template <typename S>
Tensor<S> HalfWaveletBlock<S>::forward(Graph<S>* g, const Tensor<S>& x) const {
    require(x.defined(), "HalfWaveletBlock: undefined input");
    const Shape xs = x.shape();
    require(xs.c % 2 == 0 && xs.h % 2 == 0 && xs.w % 2 == 0,
            "HalfWaveletBlock: channels and spatial dims must be even, got " + xs.str());
    require(xs.c == tail.weight.shape().c, "HalfWaveletBlock: channel mismatch");

    auto halves = split_channels<S>(g, x, {xs.c / 2, xs.c / 2});
    const auto& identity_half = halves[0];
    const auto& transform_half = halves[1];

    auto wavelet = dwt_haar<S>(g, transform_half);      // (n, 2c, h/2, w/2)
    auto weighted = dau.forward(g, wavelet);
    auto restored = iwt_haar<S>(g, weighted);           // (n, c/2, h, w)

    auto merged = concat_channels<S>(g, {restored, identity_half});
    auto residual = tail_act.forward(g, tail.forward(g, merged));
    return add<S>(g, residual, shortcut.forward(g, x));
}

// ---- selective fusion --------------------------------------------------------------------

template <typename S>
SelectiveFusion<S> SelectiveFusion<S>::create(ParamStore<S>& store, const std::string& name,
                                              int c, int branches, int reduction, Rng& rng) {
    require(branches >= 2, "SelectiveFusion: need at least two branches");
    require(reduction >= 1, "SelectiveFusion: bad reduction");
    const int descriptor = std::max(c / reduction, 4);
    SelectiveFusion<S> layer;
    layer.squeeze = Conv2d<S>::create(store, name + ".squeeze", c, descriptor, 1, rng);
    layer.branch_fc.reserve(static_cast<std::size_t>(branches));
    for (int l = 0; l < branches; ++l) {
        layer.branch_fc.push_back(
            Conv2d<S>::create(store, name + ".fc" + std::to_string(l), descriptor, c, 1, rng));
    }
    return layer;
}

template <typename S>
Tensor<S> SelectiveFusion<S>::forward(Graph<S>* g, const std::vector<Tensor<S>>& branches) const {
    require(branches.size() == branch_fc.size(),
            "SelectiveFusion: expected " + std::to_string(branch_fc.size()) + " branches, got " +
                std::to_string(branches.size()));
    const Shape shape = branches.front().shape();
    for (const auto& b : branches) {
        require(b.defined() && b.shape() == shape, "SelectiveFusion: mismatched branch shapes");
    }

    auto total = branches[0];
    for (std::size_t l = 1; l < branches.size(); ++l) {
        total = add<S>(g, total, branches[l]);
    }
    auto descriptor = relu<S>(g, squeeze.forward(g, global_avg_pool<S>(g, total)));

    std::vector<Tensor<S>> logits;
    logits.reserve(branches.size());
    for (const auto& fc : branch_fc) {
        logits.push_back(fc.forward(g, descriptor));
    }
    auto weights = softmax_over_branches<S>(g, concat_channels<S>(g, logits),
                                            static_cast<int>(branches.size()));
    auto parts = split_channels<S>(g, weights, std::vector<int>(branches.size(), shape.c));

    Tensor<S> out;
    for (std::size_t l = 0; l < branches.size(); ++l) {
        auto contrib = mul<S>(g, branches[l], parts[l]);
        out = l == 0 ? contrib : add<S>(g, out, contrib);
    }
    return out;
}

// ---- explicit instantiations ------------------------------------------------------------

#define HWMNET_INSTANTIATE_BLOCKS(S)      \
    template class ParamStore<S>;         \
    template struct Conv2d<S>;            \
    template struct PReluLayer<S>;        \
    template struct ChannelAttention<S>;  \
    template struct SpatialAttention<S>;  \
    template struct DualAttentionUnit<S>; \
    template struct HalfWaveletBlock<S>;  \
    template struct SelectiveFusion<S>;

HWMNET_INSTANTIATE_BLOCKS(float)
HWMNET_INSTANTIATE_BLOCKS(double)

}  // namespace hwmnet
