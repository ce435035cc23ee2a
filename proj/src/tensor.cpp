#include "hwmnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hwmnet/errors.hpp"

namespace hwmnet {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

// ---- Tensor --------------------------------------------------------------

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape s) {
    require(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
            "Tensor: all dimensions must be positive, got " + s.str());
    Tensor<S> t;
    t.shape_ = s;
    t.data_ = std::make_shared<std::vector<S>>(static_cast<std::size_t>(s.numel()), S(0));
    return t;
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape s, S value) {
    Tensor<S> t = zeros(s);
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

template <typename S>
Tensor<S> Tensor<S>::from_data(Shape s, std::vector<S> values) {
    require(s.n >= 1 && s.c >= 1 && s.h >= 1 && s.w >= 1,
            "Tensor: all dimensions must be positive, got " + s.str());
    require(static_cast<std::int64_t>(values.size()) == s.numel(),
            "Tensor: data length " + std::to_string(values.size()) + " does not match shape " +
                s.str());
    Tensor<S> t;
    t.shape_ = s;
    t.data_ = std::make_shared<std::vector<S>>(std::move(values));
    return t;
}

template <typename S>
void Tensor<S>::set_requires_grad(bool on) {
    if (on) {
        if (!grad_) {
            grad_ = std::make_shared<GradCell>();
        }
    } else {
        grad_.reset();
    }
}

template <typename S>
std::span<const S> Tensor<S>::grad() const {
    if (!has_grad()) {
        return {};
    }
    return {grad_->buf.data(), grad_->buf.size()};
}

template <typename S>
std::span<S> Tensor<S>::ensure_grad() {
    if (!grad_) {
        grad_ = std::make_shared<GradCell>();
    }
    if (grad_->buf.empty()) {
        grad_->buf.assign(static_cast<std::size_t>(numel()), S(0));
    }
    return {grad_->buf.data(), grad_->buf.size()};
}

template <typename S>
void Tensor<S>::zero_grad() {
    if (grad_ && !grad_->buf.empty()) {
        std::fill(grad_->buf.begin(), grad_->buf.end(), S(0));
    }
}

template <typename S>
Tensor<S> Tensor<S>::clone() const {
    require(defined(), "Tensor::clone: undefined tensor");
    return from_data(shape_, *data_);
}

// ---- Graph ----------------------------------------------------------------

template <typename S>
void Graph<S>::backward(Tensor<S>& loss) {
    require(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar tensor");
    loss.ensure_grad()[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        (*it)();
    }
}

// ---- op helpers ------------------------------------------------------------

namespace {

template <typename S>
bool recording(Graph<S>* g, std::initializer_list<const Tensor<S>*> inputs) {
    if (g == nullptr) {
        return false;
    }
    for (const auto* t : inputs) {
        if (t->requires_grad()) {
            return true;
        }
    }
    return false;
}

template <typename S>
void check_defined(const Tensor<S>& t, const char* op) {
    require(t.defined(), std::string(op) + ": undefined tensor argument");
}

struct BroadcastStrides {
    std::int64_t n, c, h, w;
};

// y indexes with stride 0 along broadcast dimensions
inline BroadcastStrides broadcast_strides(const Shape& xs, const Shape& ys, const char* op) {
    const bool ok = (ys.n == xs.n || ys.n == 1) && (ys.c == xs.c || ys.c == 1) &&
                    (ys.h == xs.h || ys.h == 1) && (ys.w == xs.w || ys.w == 1);
    require(ok, std::string(op) + ": shape " + ys.str() + " not broadcastable over " + xs.str());
    const std::int64_t sw = 1;
    const std::int64_t sh = ys.w;
    const std::int64_t sc = static_cast<std::int64_t>(ys.h) * ys.w;
    const std::int64_t sn = static_cast<std::int64_t>(ys.c) * ys.h * ys.w;
    return {ys.n == 1 ? 0 : sn, ys.c == 1 ? 0 : sc, ys.h == 1 ? 0 : sh, ys.w == 1 ? 0 : sw};
}

}  // namespace

// ---- conv2d ----------------------------------------------------------------

namespace {

// direct convolution; the inner loop runs over contiguous output columns so
// it vectorizes
template <typename S>
void conv_forward(std::span<S> out, std::span<const S> x, std::span<const S> w,
                  std::span<const S> b, int n, int ci, int hi, int wi, int co, int k, int p,
                  int groups, int oh, int ow) {
    const int co_pg = co / groups;
    const int ci_total = ci * groups;
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < co; ++oc) {
            const int grp = oc / co_pg;
            S* oplane = out.data() + (static_cast<std::int64_t>(in) * co + oc) * oh * ow;
            std::fill(oplane, oplane + static_cast<std::int64_t>(oh) * ow, b[oc]);
            for (int icg = 0; icg < ci; ++icg) {
                const int ic = grp * ci + icg;
                const S* xplane =
                    x.data() + (static_cast<std::int64_t>(in) * ci_total + ic) * hi * wi;
                const S* wk = w.data() + (static_cast<std::int64_t>(oc) * ci + icg) * k * k;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const S wv = wk[ky * k + kx];
                        const int oy_lo = std::max(0, p - ky);
                        const int oy_hi = std::min(oh, hi + p - ky);
                        const int ox_lo = std::max(0, p - kx);
                        const int ox_hi = std::min(ow, wi + p - kx);
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const int iy = oy + ky - p;
                            const S* xrow = xplane + static_cast<std::int64_t>(iy) * wi +
                                            (ox_lo + kx - p);
                            S* orow = oplane + static_cast<std::int64_t>(oy) * ow + ox_lo;
                            const int len = ox_hi - ox_lo;
                            for (int t = 0; t < len; ++t) {
                                orow[t] += wv * xrow[t];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename S>
Tensor<S> conv2d(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 int padding, int groups) {
    check_defined(x, "conv2d");
    check_defined(weight, "conv2d");
    check_defined(bias, "conv2d");
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const int co = ws.n;
    const int ci = ws.c;
    const int k = ws.h;
    require(ws.h == ws.w, "conv2d: kernel must be square, got " + ws.str());
    require(k % 2 == 1, "conv2d: kernel size must be odd, got " + std::to_string(k));
    require(groups >= 1 && co % groups == 0,
            "conv2d: output channels must divide by groups");
    require(xs.c == ci * groups, "conv2d: input has " + std::to_string(xs.c) +
                                     " channels, weight expects " + std::to_string(ci * groups));
    require(bias.shape() == Shape{1, co, 1, 1},
            "conv2d: bias must be (1," + std::to_string(co) + ",1,1), got " + bias.shape().str());
    require(padding >= 0, "conv2d: padding must be non-negative");
    const int oh = xs.h + 2 * padding - k + 1;
    const int ow = xs.w + 2 * padding - k + 1;
    require(oh >= 1 && ow >= 1, "conv2d: kernel larger than padded input");

    Tensor<S> out = Tensor<S>::zeros({xs.n, co, oh, ow});
    conv_forward<S>(out.mutable_data(), x.data(), weight.data(), bias.data(), xs.n, ci, xs.h,
                    xs.w, co, k, padding, groups, oh, ow);

    if (recording<S>(g, {&x, &weight, &bias})) {
        out.set_requires_grad(true);
        const int p = padding;
        g->push([x = x, weight = weight, bias = bias, out, p, groups, oh, ow]() mutable {
            if (!out.has_grad()) {
                return;
            }
            const Shape xs = x.shape();
            const Shape ws = weight.shape();
            const int n = xs.n, hi = xs.h, wi = xs.w;
            const int co = ws.n, ci = ws.c, k = ws.h;
            const int co_pg = co / groups;
            const int ci_total = ci * groups;
            auto go = out.grad();

            if (bias.requires_grad()) {
                auto gb = bias.ensure_grad();
                for (int in = 0; in < n; ++in) {
                    for (int oc = 0; oc < co; ++oc) {
                        const S* dorow = go.data() + (static_cast<std::int64_t>(in) * co + oc) * oh * ow;
                        S acc = S(0);
                        for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) {
                            acc += dorow[i];
                        }
                        gb[oc] += acc;
                    }
                }
            }
            if (weight.requires_grad()) {
                auto gw = weight.ensure_grad();
                auto xd = x.data();
                for (int in = 0; in < n; ++in) {
                    for (int oc = 0; oc < co; ++oc) {
                        const int grp = oc / co_pg;
                        const S* doplane =
                            go.data() + (static_cast<std::int64_t>(in) * co + oc) * oh * ow;
                        for (int icg = 0; icg < ci; ++icg) {
                            const int ic = grp * ci + icg;
                            const S* xplane =
                                xd.data() + (static_cast<std::int64_t>(in) * ci_total + ic) * hi * wi;
                            S* gwk = gw.data() + (static_cast<std::int64_t>(oc) * ci + icg) * k * k;
                            for (int ky = 0; ky < k; ++ky) {
                                for (int kx = 0; kx < k; ++kx) {
                                    const int oy_lo = std::max(0, p - ky);
                                    const int oy_hi = std::min(oh, hi + p - ky);
                                    const int ox_lo = std::max(0, p - kx);
                                    const int ox_hi = std::min(ow, wi + p - kx);
                                    S acc = S(0);
                                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                        const int iy = oy + ky - p;
                                        const S* xrow = xplane +
                                                        static_cast<std::int64_t>(iy) * wi +
                                                        (ox_lo + kx - p);
                                        const S* dorow =
                                            doplane + static_cast<std::int64_t>(oy) * ow + ox_lo;
                                        const int len = ox_hi - ox_lo;
                                        for (int t = 0; t < len; ++t) {
                                            acc += xrow[t] * dorow[t];
                                        }
                                    }
                                    gwk[ky * k + kx] += acc;
                                }
                            }
                        }
                    }
                }
            }
            if (x.requires_grad()) {
                auto gx = x.ensure_grad();
                auto wd = weight.data();
                for (int in = 0; in < n; ++in) {
                    for (int oc = 0; oc < co; ++oc) {
                        const int grp = oc / co_pg;
                        const S* doplane =
                            go.data() + (static_cast<std::int64_t>(in) * co + oc) * oh * ow;
                        for (int icg = 0; icg < ci; ++icg) {
                            const int ic = grp * ci + icg;
                            S* gxplane =
                                gx.data() + (static_cast<std::int64_t>(in) * ci_total + ic) * hi * wi;
                            const S* wk =
                                wd.data() + (static_cast<std::int64_t>(oc) * ci + icg) * k * k;
                            for (int ky = 0; ky < k; ++ky) {
                                for (int kx = 0; kx < k; ++kx) {
                                    const S wv = wk[ky * k + kx];
                                    const int oy_lo = std::max(0, p - ky);
                                    const int oy_hi = std::min(oh, hi + p - ky);
                                    const int ox_lo = std::max(0, p - kx);
                                    const int ox_hi = std::min(ow, wi + p - kx);
                                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                        const int iy = oy + ky - p;
                                        S* gxrow = gxplane +
                                                   static_cast<std::int64_t>(iy) * wi +
                                                   (ox_lo + kx - p);
                                        const S* dorow =
                                            doplane + static_cast<std::int64_t>(oy) * ow + ox_lo;
                                        const int len = ox_hi - ox_lo;
                                        for (int t = 0; t < len; ++t) {
                                            gxrow[t] += wv * dorow[t];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---- pointwise activations ---------------------------------------------------

template <typename S>
Tensor<S> relu(Graph<S>* g, const Tensor<S>& x) {
    check_defined(x, "relu");
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        od[i] = xd[i] > S(0) ? xd[i] : S(0);
    }
    if (recording<S>(g, {&x})) {
        out.set_requires_grad(true);
        g->push([x = x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            auto go = out.grad();
            auto gx = x.ensure_grad();
            auto xd = x.data();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if (xd[i] > S(0)) {
                    gx[i] += go[i];
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> prelu(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& alpha) {
    check_defined(x, "prelu");
    check_defined(alpha, "prelu");
    const Shape xs = x.shape();
    require(alpha.shape() == Shape{1, xs.c, 1, 1},
            "prelu: alpha must be (1," + std::to_string(xs.c) + ",1,1), got " +
                alpha.shape().str());
    Tensor<S> out = Tensor<S>::zeros(xs);
    auto xd = x.data();
    auto ad = alpha.data();
    auto od = out.mutable_data();
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            const S a = ad[ic];
            const std::int64_t base = (static_cast<std::int64_t>(in) * xs.c + ic) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const S v = xd[base + i];
                od[base + i] = v >= S(0) ? v : a * v;
            }
        }
    }
    if (recording<S>(g, {&x, &alpha})) {
        out.set_requires_grad(true);
        g->push([x = x, alpha = alpha, out]() mutable {
            if (!out.has_grad()) {
                return;
            }
            const Shape xs = x.shape();
            const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
            auto go = out.grad();
            auto xd = x.data();
            auto ad = alpha.data();
            if (x.requires_grad()) {
                auto gx = x.ensure_grad();
                for (int in = 0; in < xs.n; ++in) {
                    for (int ic = 0; ic < xs.c; ++ic) {
                        const S a = ad[ic];
                        const std::int64_t base =
                            (static_cast<std::int64_t>(in) * xs.c + ic) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) {
                            const S slope = xd[base + i] >= S(0) ? S(1) : a;
                            gx[base + i] += slope * go[base + i];
                        }
                    }
                }
            }
            if (alpha.requires_grad()) {
                auto ga = alpha.ensure_grad();
                for (int ic = 0; ic < xs.c; ++ic) {
                    S acc = S(0);
                    for (int in = 0; in < xs.n; ++in) {
                        const std::int64_t base =
                            (static_cast<std::int64_t>(in) * xs.c + ic) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) {
                            if (xd[base + i] < S(0)) {
                                acc += xd[base + i] * go[base + i];
                            }
                        }
                    }
                    ga[ic] += acc;
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sigmoid(Graph<S>* g, const Tensor<S>& x) {
    check_defined(x, "sigmoid");
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        od[i] = S(1) / (S(1) + std::exp(-xd[i]));
    }
    if (recording<S>(g, {&x})) {
        out.set_requires_grad(true);
        g->push([x = x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            auto go = out.grad();
            auto od = out.data();
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += od[i] * (S(1) - od[i]) * go[i];
            }
        });
    }
    return out;
}

// ---- broadcast binary ops -----------------------------------------------------

namespace {

enum class BinKind { add, mul };

template <typename S>
Tensor<S> broadcast_binary(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& y, BinKind kind,
                           const char* op) {
    check_defined(x, op);
    check_defined(y, op);
    const Shape xs = x.shape();
    const Shape ys = y.shape();
    const BroadcastStrides bs = broadcast_strides(xs, ys, op);
    Tensor<S> out = Tensor<S>::zeros(xs);
    auto xd = x.data();
    auto yd = y.data();
    auto od = out.mutable_data();
    std::int64_t i = 0;
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            for (int iy = 0; iy < xs.h; ++iy) {
                const std::int64_t ybase = in * bs.n + ic * bs.c + iy * bs.h;
                for (int ix = 0; ix < xs.w; ++ix, ++i) {
                    const S yv = yd[ybase + ix * bs.w];
                    od[i] = kind == BinKind::add ? xd[i] + yv : xd[i] * yv;
                }
            }
        }
    }
    if (recording<S>(g, {&x, &y})) {
        out.set_requires_grad(true);
        g->push([x = x, y = y, out, bs, kind]() mutable {
            if (!out.has_grad()) {
                return;
            }
            const Shape xs = x.shape();
            auto go = out.grad();
            auto xd = x.data();
            auto yd = y.data();
            const bool need_x = x.requires_grad();
            const bool need_y = y.requires_grad();
            std::span<S> gx = need_x ? x.ensure_grad() : std::span<S>{};
            std::span<S> gy = need_y ? y.ensure_grad() : std::span<S>{};
            std::int64_t i = 0;
            for (int in = 0; in < xs.n; ++in) {
                for (int ic = 0; ic < xs.c; ++ic) {
                    for (int iy = 0; iy < xs.h; ++iy) {
                        const std::int64_t ybase = in * bs.n + ic * bs.c + iy * bs.h;
                        for (int ix = 0; ix < xs.w; ++ix, ++i) {
                            const std::int64_t yi = ybase + ix * bs.w;
                            if (kind == BinKind::add) {
                                if (need_x) {
                                    gx[i] += go[i];
                                }
                                if (need_y) {
                                    gy[yi] += go[i];
                                }
                            } else {
                                if (need_x) {
                                    gx[i] += yd[yi] * go[i];
                                }
                                if (need_y) {
                                    gy[yi] += xd[i] * go[i];
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

template <typename S>
Tensor<S> add(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& y) {
    return broadcast_binary(g, x, y, BinKind::add, "add");
}

template <typename S>
Tensor<S> mul(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& y) {
    return broadcast_binary(g, x, y, BinKind::mul, "mul");
}

template <typename S>
Tensor<S> scale(Graph<S>* g, const Tensor<S>& x, S factor) {
    check_defined(x, "scale");
    Tensor<S> out = Tensor<S>::zeros(x.shape());
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        od[i] = factor * xd[i];
    }
    if (recording<S>(g, {&x})) {
        out.set_requires_grad(true);
        g->push([x = x, out, factor]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += factor * go[i];
            }
        });
    }
    return out;
}

// ---- reductions -----------------------------------------------------------------

template <typename S>
Tensor<S> global_avg_pool(Graph<S>* g, const Tensor<S>& x) {
    check_defined(x, "global_avg_pool");
    const Shape xs = x.shape();
    Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c, 1, 1});
    auto xd = x.data();
    auto od = out.mutable_data();
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            const std::int64_t base = (static_cast<std::int64_t>(in) * xs.c + ic) * plane;
            S acc = S(0);
            for (std::int64_t i = 0; i < plane; ++i) {
                acc += xd[base + i];
            }
            od[static_cast<std::int64_t>(in) * xs.c + ic] = acc / static_cast<S>(plane);
        }
    }
    if (recording<S>(g, {&x})) {
        out.set_requires_grad(true);
        g->push([x = x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                for (int ic = 0; ic < xs.c; ++ic) {
                    const S d = go[static_cast<std::int64_t>(in) * xs.c + ic] /
                                static_cast<S>(plane);
                    const std::int64_t base =
                        (static_cast<std::int64_t>(in) * xs.c + ic) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        gx[base + i] += d;
                    }
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> channel_mean(Graph<S>* g, const Tensor<S>& x) {
    check_defined(x, "channel_mean");
    const Shape xs = x.shape();
    Tensor<S> out = Tensor<S>::zeros({xs.n, 1, xs.h, xs.w});
    auto xd = x.data();
    auto od = out.mutable_data();
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            const std::int64_t base = (static_cast<std::int64_t>(in) * xs.c + ic) * plane;
            const std::int64_t obase = static_cast<std::int64_t>(in) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                od[obase + i] += xd[base + i];
            }
        }
    }
    for (std::size_t i = 0; i < od.size(); ++i) {
        od[i] /= static_cast<S>(xs.c);
    }
    if (recording<S>(g, {&x})) {
        out.set_requires_grad(true);
        g->push([x = x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                const std::int64_t obase = static_cast<std::int64_t>(in) * plane;
                for (int ic = 0; ic < xs.c; ++ic) {
                    const std::int64_t base =
                        (static_cast<std::int64_t>(in) * xs.c + ic) * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        gx[base + i] += go[obase + i] / static_cast<S>(xs.c);
                    }
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> channel_max(Graph<S>* g, const Tensor<S>& x) {
    check_defined(x, "channel_max");
    const Shape xs = x.shape();
    Tensor<S> out = Tensor<S>::zeros({xs.n, 1, xs.h, xs.w});
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    // argmax saved for the backward route; ties go to the lowest channel
    auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(xs.n * plane), 0);
    auto xd = x.data();
    auto od = out.mutable_data();
    for (int in = 0; in < xs.n; ++in) {
        const std::int64_t obase = static_cast<std::int64_t>(in) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            S best = xd[(static_cast<std::int64_t>(in) * xs.c) * plane + i];
            int best_c = 0;
            for (int ic = 1; ic < xs.c; ++ic) {
                const S v = xd[(static_cast<std::int64_t>(in) * xs.c + ic) * plane + i];
                if (v > best) {
                    best = v;
                    best_c = ic;
                }
            }
            od[obase + i] = best;
            (*argmax)[static_cast<std::size_t>(obase + i)] = best_c;
        }
    }
    if (recording<S>(g, {&x})) {
        out.set_requires_grad(true);
        g->push([x = x, out, argmax]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                const std::int64_t obase = static_cast<std::int64_t>(in) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const int ic = (*argmax)[static_cast<std::size_t>(obase + i)];
                    gx[(static_cast<std::int64_t>(in) * xs.c + ic) * plane + i] += go[obase + i];
                }
            }
        });
    }
    return out;
}

// ---- concat / split ---------------------------------------------------------------

template <typename S>
Tensor<S> concat_channels(Graph<S>* g, const std::vector<Tensor<S>>& parts) {
    require(!parts.empty(), "concat_channels: no inputs");
    for (const auto& p : parts) {
        check_defined(p, "concat_channels");
    }
    const Shape first = parts.front().shape();
    int total_c = 0;
    for (const auto& p : parts) {
        const Shape ps = p.shape();
        require(ps.n == first.n && ps.h == first.h && ps.w == first.w,
                "concat_channels: mismatched dims " + ps.str() + " vs " + first.str());
        total_c += ps.c;
    }
    Tensor<S> out = Tensor<S>::zeros({first.n, total_c, first.h, first.w});
    auto od = out.mutable_data();
    const std::int64_t plane = static_cast<std::int64_t>(first.h) * first.w;
    for (int in = 0; in < first.n; ++in) {
        int coff = 0;
        for (const auto& p : parts) {
            const int pc = p.shape().c;
            auto pd = p.data();
            std::memcpy(od.data() + ((static_cast<std::int64_t>(in) * total_c + coff) * plane),
                        pd.data() + (static_cast<std::int64_t>(in) * pc * plane),
                        static_cast<std::size_t>(pc * plane) * sizeof(S));
            coff += pc;
        }
    }
    bool any = false;
    for (const auto& p : parts) {
        any = any || p.requires_grad();
    }
    if (g != nullptr && any) {
        out.set_requires_grad(true);
        g->push([parts = parts, out, total_c, plane]() mutable {
            if (!out.has_grad()) {
                return;
            }
            const Shape os = out.shape();
            auto go = out.grad();
            for (int in = 0; in < os.n; ++in) {
                int coff = 0;
                for (auto& p : parts) {
                    const int pc = p.shape().c;
                    if (p.requires_grad()) {
                        auto gp = p.ensure_grad();
                        const S* src =
                            go.data() + ((static_cast<std::int64_t>(in) * total_c + coff) * plane);
                        S* dst = gp.data() + (static_cast<std::int64_t>(in) * pc * plane);
                        for (std::int64_t i = 0; i < pc * plane; ++i) {
                            dst[i] += src[i];
                        }
                    }
                    coff += pc;
                }
            }
        });
    }
    return out;
}

template <typename S>
std::vector<Tensor<S>> split_channels(Graph<S>* g, const Tensor<S>& x,
                                      const std::vector<int>& sizes) {
    check_defined(x, "split_channels");
    const Shape xs = x.shape();
    int total = 0;
    for (int s : sizes) {
        require(s >= 1, "split_channels: sizes must be positive");
        total += s;
    }
    require(total == xs.c, "split_channels: sizes sum to " + std::to_string(total) +
                               ", tensor has " + std::to_string(xs.c) + " channels");
    std::vector<Tensor<S>> outs;
    outs.reserve(sizes.size());
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    auto xd = x.data();
    int coff = 0;
    for (int s : sizes) {
        Tensor<S> part = Tensor<S>::zeros({xs.n, s, xs.h, xs.w});
        auto pd = part.mutable_data();
        for (int in = 0; in < xs.n; ++in) {
            std::memcpy(pd.data() + (static_cast<std::int64_t>(in) * s * plane),
                        xd.data() + ((static_cast<std::int64_t>(in) * xs.c + coff) * plane),
                        static_cast<std::size_t>(s * plane) * sizeof(S));
        }
        outs.push_back(std::move(part));
        coff += s;
    }
    if (recording<S>(g, {&x})) {
        for (auto& o : outs) {
            o.set_requires_grad(true);
        }
        auto outs_copy = outs;
        g->push([x = x, outs_copy, plane]() mutable {
            if (!x.requires_grad()) {
                return;
            }
            bool any = false;
            for (const auto& o : outs_copy) {
                any = any || o.has_grad();
            }
            if (!any) {
                return;
            }
            const Shape xs = x.shape();
            auto gx = x.ensure_grad();
            int coff = 0;
            for (auto& o : outs_copy) {
                const int pc = o.shape().c;
                if (o.has_grad()) {
                    auto go = o.grad();
                    for (int in = 0; in < xs.n; ++in) {
                        S* dst = gx.data() + ((static_cast<std::int64_t>(in) * xs.c + coff) * plane);
                        const S* src = go.data() + (static_cast<std::int64_t>(in) * pc * plane);
                        for (std::int64_t i = 0; i < pc * plane; ++i) {
                            dst[i] += src[i];
                        }
                    }
                }
                coff += pc;
            }
        });
    }
    return outs;
}

// ---- softmax over branch groups ----------------------------------------------------

template <typename S>
Tensor<S> softmax_over_branches(Graph<S>* g, const Tensor<S>& logits, int branches) {
    check_defined(logits, "softmax_over_branches");
    const Shape zs = logits.shape();
    require(branches >= 2, "softmax_over_branches: need at least two branches");
    require(zs.c % branches == 0, "softmax_over_branches: " + std::to_string(zs.c) +
                                      " channels not divisible by " + std::to_string(branches));
    const int cper = zs.c / branches;
    Tensor<S> out = Tensor<S>::zeros(zs);
    auto zd = logits.data();
    auto od = out.mutable_data();
    const std::int64_t plane = static_cast<std::int64_t>(zs.h) * zs.w;
    for (int in = 0; in < zs.n; ++in) {
        for (int j = 0; j < cper; ++j) {
            for (std::int64_t i = 0; i < plane; ++i) {
                S m = zd[(static_cast<std::int64_t>(in) * zs.c + j) * plane + i];
                for (int l = 1; l < branches; ++l) {
                    m = std::max(m, zd[(static_cast<std::int64_t>(in) * zs.c + l * cper + j) * plane + i]);
                }
                S denom = S(0);
                for (int l = 0; l < branches; ++l) {
                    const std::int64_t idx =
                        (static_cast<std::int64_t>(in) * zs.c + l * cper + j) * plane + i;
                    od[idx] = std::exp(zd[idx] - m);
                    denom += od[idx];
                }
                for (int l = 0; l < branches; ++l) {
                    const std::int64_t idx =
                        (static_cast<std::int64_t>(in) * zs.c + l * cper + j) * plane + i;
                    od[idx] /= denom;
                }
            }
        }
    }
    if (recording<S>(g, {&logits})) {
        out.set_requires_grad(true);
        g->push([logits = logits, out, branches, cper, plane]() mutable {
            if (!out.has_grad() || !logits.requires_grad()) {
                return;
            }
            const Shape zs = logits.shape();
            auto go = out.grad();
            auto od = out.data();
            auto gz = logits.ensure_grad();
            for (int in = 0; in < zs.n; ++in) {
                for (int j = 0; j < cper; ++j) {
                    for (std::int64_t i = 0; i < plane; ++i) {
                        S dot = S(0);
                        for (int l = 0; l < branches; ++l) {
                            const std::int64_t idx =
                                (static_cast<std::int64_t>(in) * zs.c + l * cper + j) * plane + i;
                            dot += od[idx] * go[idx];
                        }
                        for (int l = 0; l < branches; ++l) {
                            const std::int64_t idx =
                                (static_cast<std::int64_t>(in) * zs.c + l * cper + j) * plane + i;
                            gz[idx] += od[idx] * (go[idx] - dot);
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> sum_all(Graph<S>* g, const Tensor<S>& x) {
    check_defined(x, "sum_all");
    Tensor<S> out = Tensor<S>::zeros({1, 1, 1, 1});
    S acc = S(0);
    for (S v : x.data()) {
        acc += v;
    }
    out.mutable_data()[0] = acc;
    if (recording<S>(g, {&x})) {
        out.set_requires_grad(true);
        g->push([x = x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const S d = out.grad()[0];
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += d;
            }
        });
    }
    return out;
}

// ---- gradient checking ----------------------------------------------------------

template <typename S>
double grad_check(const GraphBuilder<S>& f, const Tensor<S>& x0, double eps) {
    require(x0.defined(), "grad_check: undefined input");
    require(eps >= 1e-7 && eps <= 1e-4, "grad_check: eps must lie in [1e-7, 1e-4]");

    Tensor<S> x = x0.clone();
    x.set_requires_grad(true);
    Graph<S> g;
    Tensor<S> loss = f(g, x);
    require(loss.defined() && loss.numel() == 1, "grad_check: builder must produce a scalar");
    g.backward(loss);

    std::vector<double> analytic(static_cast<std::size_t>(x.numel()), 0.0);
    if (x.has_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            analytic[i] = static_cast<double>(gx[i]);
        }
    }

    const auto eval = [&f](const Tensor<S>& xe) {
        Graph<S> ge;
        return static_cast<double>(f(ge, xe).data()[0]);
    };

    double worst = 0.0;
    for (std::int64_t i = 0; i < x0.numel(); ++i) {
        Tensor<S> xp = x0.clone();
        xp.mutable_data()[i] += static_cast<S>(eps);
        const double lp = eval(xp);
        Tensor<S> xm = x0.clone();
        xm.mutable_data()[i] -= static_cast<S>(eps);
        const double lm = eval(xm);
        const double fd = (lp - lm) / (2.0 * eps);
        const double a = analytic[static_cast<std::size_t>(i)];
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-12});
        worst = std::max(worst, std::abs(a - fd) / denom);
    }
    return worst;
}

// ---- explicit instantiations ------------------------------------------------------

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;

#define HWMNET_INSTANTIATE_TENSOR_OPS(S)                                                     \
    template Tensor<S> conv2d<S>(Graph<S>*, const Tensor<S>&, const Tensor<S>&,             \
                                 const Tensor<S>&, int, int);                                \
    template Tensor<S> relu<S>(Graph<S>*, const Tensor<S>&);                                \
    template Tensor<S> prelu<S>(Graph<S>*, const Tensor<S>&, const Tensor<S>&);             \
    template Tensor<S> sigmoid<S>(Graph<S>*, const Tensor<S>&);                             \
    template Tensor<S> add<S>(Graph<S>*, const Tensor<S>&, const Tensor<S>&);               \
    template Tensor<S> mul<S>(Graph<S>*, const Tensor<S>&, const Tensor<S>&);               \
    template Tensor<S> scale<S>(Graph<S>*, const Tensor<S>&, S);                            \
    template Tensor<S> global_avg_pool<S>(Graph<S>*, const Tensor<S>&);                     \
    template Tensor<S> channel_mean<S>(Graph<S>*, const Tensor<S>&);                        \
    template Tensor<S> channel_max<S>(Graph<S>*, const Tensor<S>&);                         \
    template Tensor<S> concat_channels<S>(Graph<S>*, const std::vector<Tensor<S>>&);        \
    template std::vector<Tensor<S>> split_channels<S>(Graph<S>*, const Tensor<S>&,          \
                                                      const std::vector<int>&);             \
    template Tensor<S> softmax_over_branches<S>(Graph<S>*, const Tensor<S>&, int);          \
    template Tensor<S> sum_all<S>(Graph<S>*, const Tensor<S>&);                             \
    template double grad_check<S>(const GraphBuilder<S>&, const Tensor<S>&, double);

HWMNET_INSTANTIATE_TENSOR_OPS(float)
HWMNET_INSTANTIATE_TENSOR_OPS(double)

}  // namespace hwmnet
