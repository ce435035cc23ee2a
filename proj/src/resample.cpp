#include "hwmnet/resample.hpp"

#include <algorithm>
#include <cmath>

#include "hwmnet/errors.hpp"

namespace hwmnet {

namespace {

template <typename S>
bool recording(Graph<S>* g, const Tensor<S>& x) {
    return g != nullptr && x.requires_grad();
}

// forward Haar analysis; reads (n,c,2h,2w), writes subband-major (n,4c,h,w)
template <typename S>
void haar_analysis(std::span<S> out, std::span<const S> in, int n, int c, int oh, int ow) {
    const int ih = oh * 2;
    const int iw = ow * 2;
    for (int in_i = 0; in_i < n; ++in_i) {
        for (int ic = 0; ic < c; ++ic) {
            const S* xp = in.data() + (static_cast<std::int64_t>(in_i) * c + ic) * ih * iw;
            const std::int64_t obase = static_cast<std::int64_t>(in_i) * 4 * c;
            S* ll = out.data() + (obase + ic) * oh * ow;
            S* hl = out.data() + (obase + c + ic) * oh * ow;
            S* lh = out.data() + (obase + 2 * c + ic) * oh * ow;
            S* hh = out.data() + (obase + 3 * c + ic) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const S a = xp[(2 * oy) * iw + 2 * ox];
                    const S b = xp[(2 * oy) * iw + 2 * ox + 1];
                    const S cc = xp[(2 * oy + 1) * iw + 2 * ox];
                    const S d = xp[(2 * oy + 1) * iw + 2 * ox + 1];
                    const std::int64_t o = static_cast<std::int64_t>(oy) * ow + ox;
                    ll[o] = (a + b + cc + d) / S(2);
                    hl[o] = (-a - b + cc + d) / S(2);
                    lh[o] = (-a + b - cc + d) / S(2);
                    hh[o] = (a - b - cc + d) / S(2);
                }
            }
        }
    }
}

// transpose of haar_analysis; reads subband-major (n,4c,h,w), accumulates
// into (n,c,2h,2w)
template <typename S>
void haar_synthesis_accumulate(std::span<S> out, std::span<const S> in, int n, int c, int sh,
                               int sw) {
    const int oh = sh * 2;
    const int ow = sw * 2;
    for (int in_i = 0; in_i < n; ++in_i) {
        for (int ic = 0; ic < c; ++ic) {
            S* xp = out.data() + (static_cast<std::int64_t>(in_i) * c + ic) * oh * ow;
            const std::int64_t ibase = static_cast<std::int64_t>(in_i) * 4 * c;
            const S* ll = in.data() + (ibase + ic) * sh * sw;
            const S* hl = in.data() + (ibase + c + ic) * sh * sw;
            const S* lh = in.data() + (ibase + 2 * c + ic) * sh * sw;
            const S* hh = in.data() + (ibase + 3 * c + ic) * sh * sw;
            for (int sy = 0; sy < sh; ++sy) {
                for (int sx = 0; sx < sw; ++sx) {
                    const std::int64_t i = static_cast<std::int64_t>(sy) * sw + sx;
                    const S l = ll[i], v = hl[i], z = lh[i], q = hh[i];
                    xp[(2 * sy) * ow + 2 * sx] += (l - v - z + q) / S(2);
                    xp[(2 * sy) * ow + 2 * sx + 1] += (l - v + z - q) / S(2);
                    xp[(2 * sy + 1) * ow + 2 * sx] += (l + v - z - q) / S(2);
                    xp[(2 * sy + 1) * ow + 2 * sx + 1] += (l + v + z + q) / S(2);
                }
            }
        }
    }
}

}  // namespace

template <typename S>
Tensor<S> dwt_haar(Graph<S>* g, const Tensor<S>& x) {
    require(x.defined(), "dwt_haar: undefined tensor");
    const Shape xs = x.shape();
    require(xs.h % 2 == 0 && xs.w % 2 == 0,
            "dwt_haar: spatial dims must be even, got " + xs.str());
    Tensor<S> out = Tensor<S>::zeros({xs.n, 4 * xs.c, xs.h / 2, xs.w / 2});
    haar_analysis<S>(out.mutable_data(), x.data(), xs.n, xs.c, xs.h / 2, xs.w / 2);
    if (recording(g, x)) {
        out.set_requires_grad(true);
        g->push([x = x, out]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            haar_synthesis_accumulate<S>(x.ensure_grad(), out.grad(), xs.n, xs.c, xs.h / 2,
                                         xs.w / 2);
        });
    }
    return out;
}

template <typename S>
Tensor<S> iwt_haar(Graph<S>* g, const Tensor<S>& y) {
    require(y.defined(), "iwt_haar: undefined tensor");
    const Shape ys = y.shape();
    require(ys.c % 4 == 0, "iwt_haar: channel count must divide by 4, got " + ys.str());
    const int c = ys.c / 4;
    Tensor<S> out = Tensor<S>::zeros({ys.n, c, ys.h * 2, ys.w * 2});
    haar_synthesis_accumulate<S>(out.mutable_data(), y.data(), ys.n, c, ys.h, ys.w);
    if (recording(g, y)) {
        out.set_requires_grad(true);
        g->push([y = y, out, c]() mutable {
            if (!out.has_grad() || !y.requires_grad()) {
                return;
            }
            // gradient of the synthesis is the analysis applied to the
            // output gradient, accumulated into y's grad
            const Shape ys = y.shape();
            const Shape os = out.shape();
            Tensor<S> tmp = Tensor<S>::zeros(ys);
            haar_analysis<S>(tmp.mutable_data(), out.grad(), os.n, c, ys.h, ys.w);
            auto gy = y.ensure_grad();
            auto td = tmp.data();
            for (std::size_t i = 0; i < gy.size(); ++i) {
                gy[i] += td[i];
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> pixel_unshuffle(Graph<S>* g, const Tensor<S>& x, int r) {
    require(x.defined(), "pixel_unshuffle: undefined tensor");
    require(r >= 1, "pixel_unshuffle: factor must be positive");
    const Shape xs = x.shape();
    require(xs.h % r == 0 && xs.w % r == 0,
            "pixel_unshuffle: dims " + xs.str() + " not divisible by " + std::to_string(r));
    const int oh = xs.h / r;
    const int ow = xs.w / r;
    Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c * r * r, oh, ow});
    auto xd = x.data();
    auto od = out.mutable_data();
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            for (int dy = 0; dy < r; ++dy) {
                for (int dx = 0; dx < r; ++dx) {
                    const int oc = ic * r * r + dy * r + dx;
                    for (int oy = 0; oy < oh; ++oy) {
                        for (int ox = 0; ox < ow; ++ox) {
                            od[out.index(in, oc, oy, ox)] =
                                xd[x.index(in, ic, oy * r + dy, ox * r + dx)];
                        }
                    }
                }
            }
        }
    }
    if (recording(g, x)) {
        out.set_requires_grad(true);
        g->push([x = x, out, r]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            const int oh = xs.h / r;
            const int ow = xs.w / r;
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                for (int ic = 0; ic < xs.c; ++ic) {
                    for (int dy = 0; dy < r; ++dy) {
                        for (int dx = 0; dx < r; ++dx) {
                            const int oc = ic * r * r + dy * r + dx;
                            for (int oy = 0; oy < oh; ++oy) {
                                for (int ox = 0; ox < ow; ++ox) {
                                    gx[x.index(in, ic, oy * r + dy, ox * r + dx)] +=
                                        go[out.index(in, oc, oy, ox)];
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

template <typename S>
Tensor<S> pixel_shuffle(Graph<S>* g, const Tensor<S>& x, int r) {
    require(x.defined(), "pixel_shuffle: undefined tensor");
    require(r >= 1, "pixel_shuffle: factor must be positive");
    const Shape xs = x.shape();
    require(xs.c % (r * r) == 0,
            "pixel_shuffle: channels " + std::to_string(xs.c) + " not divisible by " +
                std::to_string(r * r));
    const int co = xs.c / (r * r);
    Tensor<S> out = Tensor<S>::zeros({xs.n, co, xs.h * r, xs.w * r});
    auto xd = x.data();
    auto od = out.mutable_data();
    for (int in = 0; in < xs.n; ++in) {
        for (int oc = 0; oc < co; ++oc) {
            for (int dy = 0; dy < r; ++dy) {
                for (int dx = 0; dx < r; ++dx) {
                    const int ic = oc * r * r + dy * r + dx;
                    for (int iy = 0; iy < xs.h; ++iy) {
                        for (int ix = 0; ix < xs.w; ++ix) {
                            od[out.index(in, oc, iy * r + dy, ix * r + dx)] =
                                xd[x.index(in, ic, iy, ix)];
                        }
                    }
                }
            }
        }
    }
    if (recording(g, x)) {
        out.set_requires_grad(true);
        g->push([x = x, out, r, co]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                for (int oc = 0; oc < co; ++oc) {
                    for (int dy = 0; dy < r; ++dy) {
                        for (int dx = 0; dx < r; ++dx) {
                            const int ic = oc * r * r + dy * r + dx;
                            for (int iy = 0; iy < xs.h; ++iy) {
                                for (int ix = 0; ix < xs.w; ++ix) {
                                    gx[x.index(in, ic, iy, ix)] +=
                                        go[out.index(in, oc, iy * r + dy, ix * r + dx)];
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

namespace {

struct Axis {
    std::vector<int> lo;     // floor sample
    std::vector<int> hi;     // clamped neighbor
    std::vector<double> frac;
};

// half-pixel-center source coordinates, clamped to the valid range
Axis make_axis(int in_size, int out_size) {
    Axis a;
    a.lo.resize(static_cast<std::size_t>(out_size));
    a.hi.resize(static_cast<std::size_t>(out_size));
    a.frac.resize(static_cast<std::size_t>(out_size));
    const double ratio = static_cast<double>(in_size) / out_size;
    for (int i = 0; i < out_size; ++i) {
        double s = (i + 0.5) * ratio - 0.5;
        s = std::min(std::max(s, 0.0), static_cast<double>(in_size - 1));
        const int lo = static_cast<int>(std::floor(s));
        a.lo[static_cast<std::size_t>(i)] = lo;
        a.hi[static_cast<std::size_t>(i)] = std::min(lo + 1, in_size - 1);
        a.frac[static_cast<std::size_t>(i)] = s - lo;
    }
    return a;
}

}  // namespace

template <typename S>
Tensor<S> bilinear_resize(Graph<S>* g, const Tensor<S>& x, int out_h, int out_w) {
    require(x.defined(), "bilinear_resize: undefined tensor");
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: output dims must be positive");
    const Shape xs = x.shape();
    const Axis ay = make_axis(xs.h, out_h);
    const Axis ax = make_axis(xs.w, out_w);
    Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c, out_h, out_w});
    auto xd = x.data();
    auto od = out.mutable_data();
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            const S* plane = xd.data() + (static_cast<std::int64_t>(in) * xs.c + ic) *
                                             static_cast<std::int64_t>(xs.h) * xs.w;
            S* oplane = od.data() + (static_cast<std::int64_t>(in) * xs.c + ic) *
                                        static_cast<std::int64_t>(out_h) * out_w;
            for (int oy = 0; oy < out_h; ++oy) {
                const int y0 = ay.lo[static_cast<std::size_t>(oy)];
                const int y1 = ay.hi[static_cast<std::size_t>(oy)];
                const S fy = static_cast<S>(ay.frac[static_cast<std::size_t>(oy)]);
                for (int ox = 0; ox < out_w; ++ox) {
                    const int x0 = ax.lo[static_cast<std::size_t>(ox)];
                    const int x1 = ax.hi[static_cast<std::size_t>(ox)];
                    const S fx = static_cast<S>(ax.frac[static_cast<std::size_t>(ox)]);
                    const S a = plane[static_cast<std::int64_t>(y0) * xs.w + x0];
                    const S b = plane[static_cast<std::int64_t>(y0) * xs.w + x1];
                    const S c = plane[static_cast<std::int64_t>(y1) * xs.w + x0];
                    const S d = plane[static_cast<std::int64_t>(y1) * xs.w + x1];
                    const S top = a + fx * (b - a);
                    const S bot = c + fx * (d - c);
                    oplane[static_cast<std::int64_t>(oy) * out_w + ox] = top + fy * (bot - top);
                }
            }
        }
    }
    if (recording(g, x)) {
        out.set_requires_grad(true);
        g->push([x = x, out, ay, ax, out_h, out_w]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                for (int ic = 0; ic < xs.c; ++ic) {
                    S* gplane = gx.data() + (static_cast<std::int64_t>(in) * xs.c + ic) *
                                                static_cast<std::int64_t>(xs.h) * xs.w;
                    const S* doplane = go.data() + (static_cast<std::int64_t>(in) * xs.c + ic) *
                                                       static_cast<std::int64_t>(out_h) * out_w;
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int y0 = ay.lo[static_cast<std::size_t>(oy)];
                        const int y1 = ay.hi[static_cast<std::size_t>(oy)];
                        const S fy = static_cast<S>(ay.frac[static_cast<std::size_t>(oy)]);
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int x0 = ax.lo[static_cast<std::size_t>(ox)];
                            const int x1 = ax.hi[static_cast<std::size_t>(ox)];
                            const S fx = static_cast<S>(ax.frac[static_cast<std::size_t>(ox)]);
                            const S d = doplane[static_cast<std::int64_t>(oy) * out_w + ox];
                            gplane[static_cast<std::int64_t>(y0) * xs.w + x0] +=
                                (S(1) - fy) * (S(1) - fx) * d;
                            gplane[static_cast<std::int64_t>(y0) * xs.w + x1] +=
                                (S(1) - fy) * fx * d;
                            gplane[static_cast<std::int64_t>(y1) * xs.w + x0] +=
                                fy * (S(1) - fx) * d;
                            gplane[static_cast<std::int64_t>(y1) * xs.w + x1] += fy * fx * d;
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> pad_reflect(Graph<S>* g, const Tensor<S>& x, PadSpec spec) {
    require(x.defined(), "pad_reflect: undefined tensor");
    require(spec.right >= 0 && spec.bottom >= 0, "pad_reflect: negative pad amount");
    const Shape xs = x.shape();
    require(spec.right < xs.w && spec.bottom < xs.h,
            "pad_reflect: pad (" + std::to_string(spec.right) + "," +
                std::to_string(spec.bottom) + ") must be smaller than dims " + xs.str());
    const int oh = xs.h + spec.bottom;
    const int ow = xs.w + spec.right;
    // mirror without repeating the edge sample
    const auto src_y = [&](int iy) { return iy < xs.h ? iy : 2 * xs.h - 2 - iy; };
    const auto src_x = [&](int ix) { return ix < xs.w ? ix : 2 * xs.w - 2 - ix; };
    Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c, oh, ow});
    auto xd = x.data();
    auto od = out.mutable_data();
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            for (int iy = 0; iy < oh; ++iy) {
                for (int ix = 0; ix < ow; ++ix) {
                    od[out.index(in, ic, iy, ix)] = xd[x.index(in, ic, src_y(iy), src_x(ix))];
                }
            }
        }
    }
    if (recording(g, x)) {
        out.set_requires_grad(true);
        g->push([x = x, out, spec]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            const int oh = xs.h + spec.bottom;
            const int ow = xs.w + spec.right;
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                for (int ic = 0; ic < xs.c; ++ic) {
                    for (int iy = 0; iy < oh; ++iy) {
                        const int sy = iy < xs.h ? iy : 2 * xs.h - 2 - iy;
                        for (int ix = 0; ix < ow; ++ix) {
                            const int sx = ix < xs.w ? ix : 2 * xs.w - 2 - ix;
                            gx[x.index(in, ic, sy, sx)] += go[out.index(in, ic, iy, ix)];
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> crop(Graph<S>* g, const Tensor<S>& x, PadSpec spec) {
    require(x.defined(), "crop: undefined tensor");
    require(spec.right >= 0 && spec.bottom >= 0, "crop: negative crop amount");
    const Shape xs = x.shape();
    require(spec.right < xs.w && spec.bottom < xs.h,
            "crop: amount (" + std::to_string(spec.right) + "," + std::to_string(spec.bottom) +
                ") must be smaller than dims " + xs.str());
    const int oh = xs.h - spec.bottom;
    const int ow = xs.w - spec.right;
    Tensor<S> out = Tensor<S>::zeros({xs.n, xs.c, oh, ow});
    auto xd = x.data();
    auto od = out.mutable_data();
    for (int in = 0; in < xs.n; ++in) {
        for (int ic = 0; ic < xs.c; ++ic) {
            for (int iy = 0; iy < oh; ++iy) {
                for (int ix = 0; ix < ow; ++ix) {
                    od[out.index(in, ic, iy, ix)] = xd[x.index(in, ic, iy, ix)];
                }
            }
        }
    }
    if (recording(g, x)) {
        out.set_requires_grad(true);
        g->push([x = x, out, oh, ow]() mutable {
            if (!out.has_grad() || !x.requires_grad()) {
                return;
            }
            const Shape xs = x.shape();
            auto go = out.grad();
            auto gx = x.ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                for (int ic = 0; ic < xs.c; ++ic) {
                    for (int iy = 0; iy < oh; ++iy) {
                        for (int ix = 0; ix < ow; ++ix) {
                            gx[x.index(in, ic, iy, ix)] += go[out.index(in, ic, iy, ix)];
                        }
                    }
                }
            }
        });
    }
    return out;
}

#define HWMNET_INSTANTIATE_RESAMPLE(S)                                              \
    template Tensor<S> dwt_haar<S>(Graph<S>*, const Tensor<S>&);                    \
    template Tensor<S> iwt_haar<S>(Graph<S>*, const Tensor<S>&);                    \
    template Tensor<S> pixel_unshuffle<S>(Graph<S>*, const Tensor<S>&, int);        \
    template Tensor<S> pixel_shuffle<S>(Graph<S>*, const Tensor<S>&, int);          \
    template Tensor<S> bilinear_resize<S>(Graph<S>*, const Tensor<S>&, int, int);   \
    template Tensor<S> pad_reflect<S>(Graph<S>*, const Tensor<S>&, PadSpec);        \
    template Tensor<S> crop<S>(Graph<S>*, const Tensor<S>&, PadSpec);

HWMNET_INSTANTIATE_RESAMPLE(float)
HWMNET_INSTANTIATE_RESAMPLE(double)

}  // namespace hwmnet
