#include "hwmnet/metrics.hpp"

#include <array>
#include <cmath>

#include "hwmnet/errors.hpp"

namespace hwmnet {

double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak) {
    require(a.defined() && b.defined(), "psnr: undefined tensor");
    require(a.shape() == b.shape(),
            "psnr: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    require(peak > 0.0, "psnr: peak must be positive");

    auto da = a.data();
    auto db = b.data();
    double sq = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - db[i];
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(da.size());
    if (mse == 0.0) {
        return 100.0;   // cap for identical images
    }
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;   // (K1 * L)^2 with L = 1
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> taps{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - (kWindow - 1) / 2.0;
        taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += taps[static_cast<std::size_t>(i)];
    }
    for (auto& t : taps) {
        t /= sum;
    }
    return taps;
}

// separable Gaussian filtering over fully valid windows
void filter_valid(const std::vector<double>& in, int h, int w, std::vector<double>& tmp,
                  std::vector<double>& out) {
    static const std::array<double, kWindow> taps = gaussian_taps();
    const int vw = w - kWindow + 1;
    const int vh = h - kWindow + 1;
    tmp.assign(static_cast<std::size_t>(h) * vw, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) {
                acc += taps[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(y) * w + x + k];
            }
            tmp[static_cast<std::size_t>(y) * vw + x] = acc;
        }
    }
    out.assign(static_cast<std::size_t>(vh) * vw, 0.0);
    for (int y = 0; y < vh; ++y) {
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) {
                acc += taps[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * vw + x];
            }
            out[static_cast<std::size_t>(y) * vw + x] = acc;
        }
    }
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
    require(a.defined() && b.defined(), "ssim: undefined tensor");
    require(a.shape() == b.shape(),
            "ssim: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const Shape s = a.shape();
    require(s.h >= kWindow && s.w >= kWindow,
            "ssim: image " + s.str() + " smaller than the 11x11 window");

    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    std::vector<double> x(static_cast<std::size_t>(plane));
    std::vector<double> y(static_cast<std::size_t>(plane));
    std::vector<double> xx(static_cast<std::size_t>(plane));
    std::vector<double> yy(static_cast<std::size_t>(plane));
    std::vector<double> xy(static_cast<std::size_t>(plane));
    std::vector<double> tmp, mx, my, mxx, myy, mxy;

    auto da = a.data();
    auto db = b.data();
    double total = 0.0;
    for (int in = 0; in < s.n; ++in) {
        for (int ic = 0; ic < s.c; ++ic) {
            const std::int64_t base = (static_cast<std::int64_t>(in) * s.c + ic) * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                const double va = da[base + i];
                const double vb = db[base + i];
                x[static_cast<std::size_t>(i)] = va;
                y[static_cast<std::size_t>(i)] = vb;
                xx[static_cast<std::size_t>(i)] = va * va;
                yy[static_cast<std::size_t>(i)] = vb * vb;
                xy[static_cast<std::size_t>(i)] = va * vb;
            }
            filter_valid(x, s.h, s.w, tmp, mx);
            filter_valid(y, s.h, s.w, tmp, my);
            filter_valid(xx, s.h, s.w, tmp, mxx);
            filter_valid(yy, s.h, s.w, tmp, myy);
            filter_valid(xy, s.h, s.w, tmp, mxy);

            double acc = 0.0;
            for (std::size_t i = 0; i < mx.size(); ++i) {
                const double mu_x = mx[i];
                const double mu_y = my[i];
                const double var_x = mxx[i] - mu_x * mu_x;
                const double var_y = myy[i] - mu_y * mu_y;
                const double cov = mxy[i] - mu_x * mu_y;
                const double num = (2.0 * (mu_x * mu_y) + kC1) * (2.0 * cov + kC2);
                const double den = (mu_x * mu_x + mu_y * mu_y + kC1) * (var_x + var_y + kC2);
                acc += num / den;
            }
            total += acc / static_cast<double>(mx.size());
        }
    }
    return total / (static_cast<double>(s.n) * s.c);
}

void MetricReport::add(std::string name, double psnr_db, double ssim_value) {
    images.push_back({std::move(name), psnr_db, ssim_value});
}

void MetricReport::finalize() {
    mean_psnr = 0.0;
    mean_ssim = 0.0;
    if (images.empty()) {
        return;
    }
    for (const auto& score : images) {
        mean_psnr += score.psnr_db;
        mean_ssim += score.ssim;
    }
    mean_psnr /= static_cast<double>(images.size());
    mean_ssim /= static_cast<double>(images.size());
}

}  // namespace hwmnet
