#include "hwmnet/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "hwmnet/rng.hpp"
#include "test_util.hpp"

using namespace hwmnet;
using testutil::random_tensor;

static TensorF flipped_h(const TensorF& t) {
    const Shape s = t.shape();
    auto out = TensorF::zeros(s);
    auto od = out.mutable_data();
    for (int in = 0; in < s.n; ++in) {
        for (int ic = 0; ic < s.c; ++ic) {
            for (int y = 0; y < s.h; ++y) {
                for (int x = 0; x < s.w; ++x) {
                    od[out.index(in, ic, y, x)] = t.at(in, ic, y, s.w - 1 - x);
                }
            }
        }
    }
    return out;
}

static void test_psnr() {
    Rng rng(401);
    auto x = random_tensor<float>({1, 3, 16, 16}, rng, 0.0, 1.0);
    CHECK_EQ(psnr(x, x), 100.0);

    // uniform 0.5 difference -> 10 log10(4)
    auto a = TensorF::full({1, 3, 8, 8}, 0.75f);
    auto b = TensorF::full({1, 3, 8, 8}, 0.25f);
    CHECK_CLOSE(psnr(a, b), 6.020599913279624, 1e-3);

    // quantized values k/255 with a uniform 16-step difference
    auto qa = TensorF::full({1, 3, 8, 8}, 10.0f / 255.0f);
    auto qb = TensorF::full({1, 3, 8, 8}, 26.0f / 255.0f);
    CHECK_CLOSE(psnr(qa, qb), 24.04840395556061, 1e-3);

    CHECK_THROWS(psnr(a, TensorF::zeros({1, 3, 8, 9})), std::invalid_argument);

    // strictly decreasing with noise amplitude
    double previous = 1e9;
    for (double amp : {0.05, 0.1, 0.2, 0.4}) {
        auto noisy = x.clone();
        auto nd = noisy.mutable_data();
        Rng noise_rng(77);
        for (auto& v : nd) {
            v += static_cast<float>(amp * (noise_rng.next_double() - 0.5));
        }
        const double value = psnr(x, noisy);
        CHECK_TRUE(value < previous);
        previous = value;
    }
}

static void test_ssim() {
    Rng rng(409);
    auto x = random_tensor<float>({1, 3, 16, 20}, rng, 0.0, 1.0);
    CHECK_EQ(ssim(x, x), 1.0);

    // constants 0.25 vs 0.75: luminance term only
    auto a = TensorF::full({1, 1, 12, 12}, 0.25f);
    auto b = TensorF::full({1, 1, 12, 12}, 0.75f);
    const double expected = (2.0 * 0.25 * 0.75 + 1e-4) / (0.25 * 0.25 + 0.75 * 0.75 + 1e-4);
    CHECK_CLOSE(ssim(a, b), expected, 1e-6);
    CHECK_CLOSE(ssim(a, b), 0.6000, 1e-3);

    // symmetry is exact
    auto y = random_tensor<float>({1, 3, 16, 20}, rng, 0.0, 1.0);
    CHECK_EQ(ssim(x, y), ssim(y, x));

    // bounded
    for (int i = 0; i < 5; ++i) {
        auto p = random_tensor<float>({1, 1, 14, 14}, rng, 0.0, 1.0);
        auto q = random_tensor<float>({1, 1, 14, 14}, rng, 0.0, 1.0);
        const double v = ssim(p, q);
        CHECK_TRUE(v >= -1.0 && v <= 1.0);
    }

    CHECK_THROWS(ssim(TensorF::zeros({1, 1, 10, 16}), TensorF::zeros({1, 1, 10, 16})),
                 std::invalid_argument);
    CHECK_THROWS(ssim(x, TensorF::zeros({1, 3, 16, 21})), std::invalid_argument);
}

static void test_flip_invariance() {
    Rng rng(419);
    auto a = random_tensor<float>({1, 3, 16, 16}, rng, 0.0, 1.0);
    auto b = random_tensor<float>({1, 3, 16, 16}, rng, 0.0, 1.0);
    CHECK_CLOSE(psnr(flipped_h(a), flipped_h(b)), psnr(a, b), 1e-9);
    CHECK_CLOSE(ssim(flipped_h(a), flipped_h(b)), ssim(a, b), 1e-9);
}

static void test_report() {
    MetricReport report;
    report.add("one.png", 20.0, 0.5);
    report.add("two.png", 30.0, 0.9);
    report.finalize();
    CHECK_CLOSE(report.mean_psnr, 25.0, 1e-12);
    CHECK_CLOSE(report.mean_ssim, 0.7, 1e-12);
}

int main() {
    test_psnr();
    test_ssim();
    test_flip_invariance();
    test_report();
    return testutil::finish("test_metrics");
}
