#include "hwmnet/network.hpp"

#include <cmath>
#include <sstream>

#include "hwmnet/errors.hpp"
#include "hwmnet/resample.hpp"

namespace hwmnet {

// ---- NetworkConfig ----------------------------------------------------------

std::vector<int> NetworkConfig::widths() const {
    if (!width_schedule.empty()) {
        return width_schedule;
    }
    std::vector<int> w(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i) {
        w[static_cast<std::size_t>(i)] = base_width << i;
    }
    return w;
}

void NetworkConfig::validate() const {
    require(levels >= 2, "NetworkConfig: levels must be >= 2");
    require(in_channels >= 1, "NetworkConfig: in_channels must be positive");
    require(base_width >= 8 && base_width % 2 == 0,
            "NetworkConfig: base_width must be even and >= 8");
    const auto w = widths();
    require(static_cast<int>(w.size()) == levels,
            "NetworkConfig: width schedule length must equal levels");
    require(w.front() == base_width,
            "NetworkConfig: first width must equal base_width (the gatepost width)");
    for (int width : w) {
        require(width >= 8 && width % 2 == 0,
                "NetworkConfig: widths must be even and >= 8, got " + std::to_string(width));
    }
    require(attention.ca_reduction >= 1, "NetworkConfig: bad channel-attention reduction");
    require(attention.sa_kernel >= 1 && attention.sa_kernel % 2 == 1,
            "NetworkConfig: spatial-attention kernel must be odd");
    require(attention.skff_reduction >= 1, "NetworkConfig: bad fusion reduction");
}

std::string NetworkConfig::to_text() const {
    std::ostringstream out;
    out << "levels=" << levels << "\n";
    out << "base_width=" << base_width << "\n";
    const auto w = widths();
    out << "widths=";
    for (std::size_t i = 0; i < w.size(); ++i) {
        out << (i ? "," : "") << w[i];
    }
    out << "\n";
    out << "in_channels=" << in_channels << "\n";
    out << "ca_reduction=" << attention.ca_reduction << "\n";
    out << "sa_kernel=" << attention.sa_kernel << "\n";
    out << "skff_reduction=" << attention.skff_reduction << "\n";
    out << "global_residual=" << (global_residual ? 1 : 0) << "\n";
    return out.str();
}

NetworkConfig NetworkConfig::from_text(const std::string& text) {
    NetworkConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos, "NetworkConfig: malformed line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "levels") {
                cfg.levels = std::stoi(value);
            } else if (key == "base_width") {
                cfg.base_width = std::stoi(value);
            } else if (key == "widths") {
                cfg.width_schedule.clear();
                std::istringstream ws(value);
                std::string item;
                while (std::getline(ws, item, ',')) {
                    cfg.width_schedule.push_back(std::stoi(item));
                }
            } else if (key == "in_channels") {
                cfg.in_channels = std::stoi(value);
            } else if (key == "ca_reduction") {
                cfg.attention.ca_reduction = std::stoi(value);
            } else if (key == "sa_kernel") {
                cfg.attention.sa_kernel = std::stoi(value);
            } else if (key == "skff_reduction") {
                cfg.attention.skff_reduction = std::stoi(value);
            } else if (key == "global_residual") {
                cfg.global_residual = std::stoi(value) != 0;
            } else {
                throw std::invalid_argument("NetworkConfig: unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("NetworkConfig: bad value in line '" + line + "'");
        }
    }
    cfg.validate();
    return cfg;
}

// ---- Charbonnier loss ---------------------------------------------------------

template <typename S>
Tensor<S> charbonnier_loss(Graph<S>* g, const Tensor<S>& prediction, const Tensor<S>& target,
                           double eps, LossMode mode) {
    require(prediction.defined() && target.defined(), "charbonnier_loss: undefined tensor");
    require(prediction.shape() == target.shape(),
            "charbonnier_loss: shape mismatch " + prediction.shape().str() + " vs " +
                target.shape().str());
    require(eps > 0.0, "charbonnier_loss: eps must be positive");

    const S e = static_cast<S>(eps);
    const S e2 = e * e;
    auto pd = prediction.data();
    auto td = target.data();
    const std::int64_t count = prediction.numel();

    // accumulate in double so the reduction does not drift; for identical
    // inputs both modes come out as exactly eps
    Tensor<S> out = Tensor<S>::zeros({1, 1, 1, 1});
    double acc = 0.0;
    S value;
    if (mode == LossMode::elementwise_mean) {
        for (std::int64_t i = 0; i < count; ++i) {
            const S d = pd[i] - td[i];
            acc += static_cast<double>(std::sqrt(d * d + e2));
        }
        value = static_cast<S>(acc / static_cast<double>(count));
    } else {
        for (std::int64_t i = 0; i < count; ++i) {
            const double d = static_cast<double>(pd[i]) - static_cast<double>(td[i]);
            acc += d * d;
        }
        value = static_cast<S>(std::sqrt(acc + eps * eps));
    }
    out.mutable_data()[0] = value;

    const bool rec = g != nullptr && (prediction.requires_grad() || target.requires_grad());
    if (rec) {
        out.set_requires_grad(true);
        g->push([prediction = prediction, target = target, out, e2, mode, value]() mutable {
            if (!out.has_grad()) {
                return;
            }
            const S upstream = out.grad()[0];
            auto pd = prediction.data();
            auto td = target.data();
            const std::int64_t count = prediction.numel();
            const bool need_p = prediction.requires_grad();
            const bool need_t = target.requires_grad();
            std::span<S> gp = need_p ? prediction.ensure_grad() : std::span<S>{};
            std::span<S> gt = need_t ? target.ensure_grad() : std::span<S>{};
            for (std::int64_t i = 0; i < count; ++i) {
                const S d = pd[i] - td[i];
                S dldd;
                if (mode == LossMode::elementwise_mean) {
                    dldd = d / (std::sqrt(d * d + e2) * static_cast<S>(count));
                } else {
                    dldd = d / value;   // value = sqrt(sum d^2 + eps^2) > 0
                }
                if (need_p) {
                    gp[i] += upstream * dldd;
                }
                if (need_t) {
                    gt[i] -= upstream * dldd;
                }
            }
        });
    }
    return out;
}

// ---- model ------------------------------------------------------------------------

template <typename S>
HwmnetModel<S> HwmnetModel<S>::build(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    HwmnetModel<S> model;
    model.cfg_ = cfg;
    const auto widths = cfg.widths();
    Rng rng(seed);

    model.gatepost_ =
        Conv2d<S>::create(model.store_, "gatepost", cfg.in_channels, cfg.base_width, 3, rng);

    for (int i = 0; i < cfg.levels; ++i) {
        EncoderLevel level;
        const std::string prefix = "enc.L" + std::to_string(i + 1);
        if (i > 0) {
            level.has_merge = true;
            const int concat_c = 4 * widths[static_cast<std::size_t>(i - 1)] + cfg.base_width;
            level.merge = Conv2d<S>::create(model.store_, prefix + ".merge", concat_c,
                                            widths[static_cast<std::size_t>(i)], 1, rng);
        }
        level.hwab = HalfWaveletBlock<S>::create(model.store_, prefix + ".hwab",
                                                 widths[static_cast<std::size_t>(i)],
                                                 cfg.attention, rng);
        model.encoder_.push_back(std::move(level));
    }

    for (int level = cfg.levels - 2; level >= 0; --level) {
        DecoderLevel dec;
        const std::string prefix = "dec.L" + std::to_string(level + 1);
        dec.up = Conv2d<S>::create(model.store_, prefix + ".up",
                                   widths[static_cast<std::size_t>(level + 1)],
                                   widths[static_cast<std::size_t>(level)], 1, rng);
        dec.skff = SelectiveFusion<S>::create(model.store_, prefix + ".skff",
                                              widths[static_cast<std::size_t>(level)], 2,
                                              cfg.attention.skff_reduction, rng);
        dec.hwab = HalfWaveletBlock<S>::create(model.store_, prefix + ".hwab",
                                               widths[static_cast<std::size_t>(level)],
                                               cfg.attention, rng);
        model.decoder_.push_back(std::move(dec));
    }

    model.output_ =
        Conv2d<S>::create(model.store_, "output", widths.front(), cfg.in_channels, 3, rng);
    return model;
}

template <typename S>
Tensor<S> HwmnetModel<S>::forward(Graph<S>* g, const Tensor<S>& input) const {
    require(input.defined(), "forward: undefined input");
    const Shape is = input.shape();
    require(is.c == cfg_.in_channels, "forward: expected " + std::to_string(cfg_.in_channels) +
                                          " channels, got " + std::to_string(is.c));
    const int multiple = cfg_.pad_multiple();
    require(is.h >= multiple && is.w >= multiple,
            "forward: input " + is.str() + " smaller than pad multiple " +
                std::to_string(multiple));

    const PadSpec pad{(multiple - is.w % multiple) % multiple,
                      (multiple - is.h % multiple) % multiple};
    const bool padded = pad.right != 0 || pad.bottom != 0;
    Tensor<S> y = padded ? pad_reflect<S>(g, input, pad) : input;
    const Shape ys = y.shape();
    const int levels = cfg_.levels;

    // shared gatepost features at every resolution
    std::vector<Tensor<S>> gate(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i) {
        auto scaled = i == 0 ? y : bilinear_resize<S>(g, y, ys.h >> i, ys.w >> i);
        gate[static_cast<std::size_t>(i)] = gatepost_.forward(g, scaled);
    }

    // encoder trunk: pixel-unshuffle downsampling merged with the gatepost
    std::vector<Tensor<S>> enc(static_cast<std::size_t>(levels));
    for (int i = 0; i < levels; ++i) {
        Tensor<S> trunk;
        if (i == 0) {
            trunk = gate[0];
        } else {
            auto down = pixel_unshuffle<S>(g, enc[static_cast<std::size_t>(i - 1)], 2);
            trunk = encoder_[static_cast<std::size_t>(i)].merge.forward(
                g, concat_channels<S>(g, {down, gate[static_cast<std::size_t>(i)]}));
        }
        enc[static_cast<std::size_t>(i)] =
            encoder_[static_cast<std::size_t>(i)].hwab.forward(g, trunk);
    }

    // decoder: fuse upsampled features with the skip connection at each level
    Tensor<S> u = enc[static_cast<std::size_t>(levels - 1)];
    for (std::size_t d = 0; d < decoder_.size(); ++d) {
        const int level = levels - 2 - static_cast<int>(d);
        auto up = decoder_[d].up.forward(
            g, bilinear_resize<S>(g, u, ys.h >> level, ys.w >> level));
        auto fused = decoder_[d].skff.forward(g, {up, enc[static_cast<std::size_t>(level)]});
        u = decoder_[d].hwab.forward(g, fused);
    }

    auto out = output_.forward(g, u);
    if (cfg_.global_residual) {
        out = add<S>(g, out, y);
    }
    if (padded) {
        out = crop<S>(g, out, pad);
    }
    return out;
}

// ---- cost accounting ----------------------------------------------------------------

const LayerCost* CostReport::find(const std::string& name) const {
    for (const auto& layer : layers) {
        if (layer.name == name) {
            return &layer;
        }
    }
    return nullptr;
}

namespace {

// per-element FLOP conventions for non-convolution work
constexpr std::int64_t kPointwise = 1;   // relu / sigmoid / prelu / add / mul
constexpr std::int64_t kWavelet = 4;     // per element, either direction
constexpr std::int64_t kResize = 8;      // per output element
constexpr std::int64_t kSoftmax = 5;     // per logit element

struct CostAccumulator {
    CostReport report;

    void emit(const std::string& name, std::int64_t params, std::int64_t flops) {
        report.layers.push_back({name, params, flops});
        report.total_params += params;
        report.total_flops += flops;
    }
    // 1 MAC = 2 FLOPs; bias adds are not counted
    void conv(const std::string& name, std::int64_t ci, std::int64_t co, std::int64_t k,
              std::int64_t h, std::int64_t w, bool count_params = true) {
        emit(name, count_params ? co * ci * k * k + co : 0, 2 * k * k * ci * co * h * w);
    }
};

// mirrors HalfWaveletBlock::forward at width c on an (h, w) grid
void hwab_cost(CostAccumulator& acc, const std::string& prefix, std::int64_t c, std::int64_t h,
               std::int64_t w, const AttentionConfig& att) {
    const std::int64_t wavelet_c = 2 * c;      // subband channels of the half split
    const std::int64_t wh = h / 2, ww = w / 2;
    const std::int64_t wavelet_elems = wavelet_c * wh * ww;

    std::int64_t pointwise = 0;
    pointwise += kWavelet * (c / 2) * h * w;                    // dwt
    // dual attention unit on the wavelet channels
    acc.conv(prefix + ".dau.conv1", wavelet_c, wavelet_c, 3, wh, ww);
    pointwise += kPointwise * wavelet_elems;                    // prelu
    acc.conv(prefix + ".dau.conv2", wavelet_c, wavelet_c, 3, wh, ww);
    const std::int64_t squeezed = wavelet_c / att.ca_reduction;
    acc.conv(prefix + ".dau.ca.fc1", wavelet_c, squeezed, 1, 1, 1);
    acc.conv(prefix + ".dau.ca.fc2", squeezed, wavelet_c, 1, 1, 1);
    pointwise += wavelet_elems;                                 // gap reads
    pointwise += squeezed + 2 * wavelet_c;                      // relu + sigmoid
    pointwise += wavelet_elems;                                 // channel gate
    acc.conv(prefix + ".dau.sa.conv", 2, 1, att.sa_kernel, wh, ww);
    pointwise += 2 * wavelet_elems;                             // mean + max maps
    pointwise += wh * ww;                                       // sigmoid map
    pointwise += wavelet_elems;                                 // spatial gate
    acc.conv(prefix + ".dau.merge", 2 * wavelet_c, wavelet_c, 1, wh, ww);
    pointwise += wavelet_elems;                                 // residual add
    pointwise += kWavelet * (c / 2) * h * w;                    // iwt

    acc.conv(prefix + ".tail", c, c, 3, h, w);
    pointwise += kPointwise * c * h * w;                        // tail prelu
    acc.conv(prefix + ".shortcut", c, c, 1, h, w);
    pointwise += c * h * w;                                     // shortcut add

    // prelu slopes are the only non-conv parameters in the block
    acc.emit(prefix + ".pointwise", wavelet_c + c, pointwise);
}

void skff_cost(CostAccumulator& acc, const std::string& prefix, std::int64_t c, int branches,
               std::int64_t h, std::int64_t w, const AttentionConfig& att) {
    const std::int64_t descriptor = std::max(c / att.skff_reduction, std::int64_t{4});
    std::int64_t pointwise = 0;
    pointwise += (branches - 1) * c * h * w;    // branch sum
    pointwise += c * h * w;                     // gap reads
    acc.conv(prefix + ".squeeze", c, descriptor, 1, 1, 1);
    pointwise += descriptor;                    // relu
    for (int l = 0; l < branches; ++l) {
        acc.conv(prefix + ".fc" + std::to_string(l), descriptor, c, 1, 1, 1);
    }
    pointwise += kSoftmax * branches * c;       // branch softmax
    pointwise += 2 * branches * c * h * w - c * h * w;   // weighted sum
    acc.emit(prefix + ".pointwise", 0, pointwise);
}

}  // namespace

CostReport count_cost(const NetworkConfig& cfg, int h, int w) {
    cfg.validate();
    require(h >= cfg.pad_multiple() && w >= cfg.pad_multiple(),
            "count_cost: dims below pad multiple");

    CostAccumulator acc;
    acc.report.input_h = h;
    acc.report.input_w = w;
    const int multiple = cfg.pad_multiple();
    const std::int64_t eh = h + (multiple - h % multiple) % multiple;
    const std::int64_t ew = w + (multiple - w % multiple) % multiple;
    acc.report.eval_h = static_cast<int>(eh);
    acc.report.eval_w = static_cast<int>(ew);

    const auto widths = cfg.widths();
    const int levels = cfg.levels;
    const auto lvl_h = [&](int i) { return eh >> i; };
    const auto lvl_w = [&](int i) { return ew >> i; };

    std::int64_t resample = 0;
    for (int i = 0; i < levels; ++i) {
        if (i > 0) {
            resample += kResize * cfg.in_channels * lvl_h(i) * lvl_w(i);   // gatepost downscale
        }
        // the gatepost conv is weight-shared; parameters belong to the first use
        acc.conv("gatepost@L" + std::to_string(i + 1), cfg.in_channels, cfg.base_width, 3,
                 lvl_h(i), lvl_w(i), i == 0);
    }

    for (int i = 0; i < levels; ++i) {
        const std::string prefix = "enc.L" + std::to_string(i + 1);
        if (i > 0) {
            const std::int64_t concat_c = 4 * widths[static_cast<std::size_t>(i - 1)] + cfg.base_width;
            acc.conv(prefix + ".merge", concat_c, widths[static_cast<std::size_t>(i)], 1,
                     lvl_h(i), lvl_w(i));
        }
        hwab_cost(acc, prefix + ".hwab", widths[static_cast<std::size_t>(i)], lvl_h(i), lvl_w(i),
                  cfg.attention);
    }

    for (int level = levels - 2; level >= 0; --level) {
        const std::string prefix = "dec.L" + std::to_string(level + 1);
        resample += kResize * widths[static_cast<std::size_t>(level + 1)] * lvl_h(level) * lvl_w(level);
        acc.conv(prefix + ".up", widths[static_cast<std::size_t>(level + 1)],
                 widths[static_cast<std::size_t>(level)], 1, lvl_h(level), lvl_w(level));
        skff_cost(acc, prefix + ".skff", widths[static_cast<std::size_t>(level)], 2, lvl_h(level),
                  lvl_w(level), cfg.attention);
        hwab_cost(acc, prefix + ".hwab", widths[static_cast<std::size_t>(level)], lvl_h(level),
                  lvl_w(level), cfg.attention);
    }

    acc.conv("output", widths.front(), cfg.in_channels, 3, eh, ew);
    if (cfg.global_residual) {
        resample += cfg.in_channels * eh * ew;   // residual add
    }
    acc.emit("resample", 0, resample);

    return std::move(acc.report);
}

// ---- explicit instantiations -----------------------------------------------------------

template class HwmnetModel<float>;
template class HwmnetModel<double>;
template Tensor<float> charbonnier_loss<float>(Graph<float>*, const Tensor<float>&,
                                               const Tensor<float>&, double, LossMode);
template Tensor<double> charbonnier_loss<double>(Graph<double>*, const Tensor<double>&,
                                                 const Tensor<double>&, double, LossMode);

}  // namespace hwmnet
