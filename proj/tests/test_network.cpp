#include "hwmnet/network.hpp"

#include <cmath>
#include <stdexcept>

#include "hwmnet/rng.hpp"
#include "test_util.hpp"

using namespace hwmnet;
using testutil::bitwise_equal;
using testutil::max_abs_diff;
using testutil::random_tensor;

static NetworkConfig tiny_config(int levels, int base) {
    NetworkConfig cfg;
    cfg.levels = levels;
    cfg.base_width = base;
    return cfg;
}

static void test_config() {
    NetworkConfig cfg = tiny_config(3, 8);
    cfg.validate();
    CHECK_EQ(cfg.pad_multiple(), 8);
    CHECK_TRUE((cfg.widths() == std::vector<int>{8, 16, 32}));

    NetworkConfig bad = cfg;
    bad.levels = 1;
    CHECK_THROWS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.width_schedule = {8, 16, 7};
    CHECK_THROWS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.width_schedule = {16, 16, 16};   // first width must match the gatepost
    CHECK_THROWS(bad.validate(), std::invalid_argument);

    CHECK_THROWS((void)HwmnetModel<float>::build(bad, 1), std::invalid_argument);

    // text round trip
    NetworkConfig parsed = NetworkConfig::from_text(cfg.to_text());
    CHECK_EQ(parsed.to_text(), cfg.to_text());
    CHECK_THROWS(NetworkConfig::from_text("bogus_key=3\n"), std::invalid_argument);
}

// independent closed-form parameter count (convolutions carry co*ci*k*k + co,
// prelu slopes one per channel)
namespace oracle {

static std::int64_t conv(std::int64_t ci, std::int64_t co, std::int64_t k) {
    return co * ci * k * k + co;
}

static std::int64_t hwab(std::int64_t c, int ca_reduction, int sa_kernel) {
    const std::int64_t wc = 2 * c;
    const std::int64_t sq = wc / ca_reduction;
    std::int64_t total = 0;
    total += conv(wc, wc, 3) + wc;            // dau.conv1 + act
    total += conv(wc, wc, 3);                 // dau.conv2
    total += conv(wc, sq, 1) + conv(sq, wc, 1);
    total += conv(2, 1, sa_kernel);
    total += conv(2 * wc, wc, 1);
    total += conv(c, c, 3) + c;               // tail + tail_act
    total += conv(c, c, 1);                   // shortcut
    return total;
}

static std::int64_t skff(std::int64_t c, int branches, int reduction) {
    const std::int64_t d = std::max(c / reduction, std::int64_t{4});
    return conv(c, d, 1) + branches * conv(d, c, 1);
}

static std::int64_t model(const NetworkConfig& cfg) {
    const auto w = cfg.widths();
    std::int64_t total = conv(cfg.in_channels, cfg.base_width, 3);
    for (int i = 0; i < cfg.levels; ++i) {
        if (i > 0) {
            total += conv(4 * w[static_cast<std::size_t>(i - 1)] + cfg.base_width,
                          w[static_cast<std::size_t>(i)], 1);
        }
        total += hwab(w[static_cast<std::size_t>(i)], cfg.attention.ca_reduction,
                      cfg.attention.sa_kernel);
    }
    for (int level = cfg.levels - 2; level >= 0; --level) {
        total += conv(w[static_cast<std::size_t>(level + 1)], w[static_cast<std::size_t>(level)], 1);
        total += skff(w[static_cast<std::size_t>(level)], 2, cfg.attention.skff_reduction);
        total += hwab(w[static_cast<std::size_t>(level)], cfg.attention.ca_reduction,
                      cfg.attention.sa_kernel);
    }
    total += conv(w.front(), cfg.in_channels, 3);
    return total;
}

}  // namespace oracle

static void test_build() {
    const NetworkConfig cfg = tiny_config(3, 8);
    auto model = HwmnetModel<float>::build(cfg, 42);

    CHECK_EQ(model.params().total_params(), oracle::model(cfg));
    CHECK_TRUE(model.params().contains("enc.L2.hwab.dau.ca.fc1.weight"));
    CHECK_TRUE(model.params().contains("dec.L1.skff.fc1.bias"));

    auto again = HwmnetModel<float>::build(cfg, 42);
    CHECK_EQ(model.params().size(), again.params().size());
    bool identical = true;
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        identical = identical && bitwise_equal(model.params()[i], again.params()[i]);
    }
    CHECK_TRUE(identical);

    auto other = HwmnetModel<float>::build(cfg, 43);
    CHECK_TRUE(!bitwise_equal(model.params()[0], other.params()[0]));
}

static void test_zero_init_identity() {
    Rng rng(301);
    auto model = HwmnetModel<float>::build(tiny_config(3, 8), 7);
    model.params().zero_all();

    auto exact = random_tensor<float>({1, 3, 32, 48}, rng, 0.0, 1.0);
    CHECK_TRUE(bitwise_equal(model.forward(nullptr, exact), exact));

    // odd sizes exercise the reflect pad + crop path
    auto padded = random_tensor<float>({2, 3, 20, 28}, rng, 0.0, 1.0);
    auto out = model.forward(nullptr, padded);
    CHECK_TRUE(bitwise_equal(out, padded));
}

static void test_forward_shapes() {
    Rng rng(307);
    auto model = HwmnetModel<float>::build(tiny_config(4, 8), 7);
    auto a = random_tensor<float>({1, 3, 100, 150}, rng, 0.0, 1.0);
    CHECK_TRUE((model.forward(nullptr, a).shape() == Shape{1, 3, 100, 150}));
    auto b = random_tensor<float>({1, 3, 48, 80}, rng, 0.0, 1.0);
    CHECK_TRUE((model.forward(nullptr, b).shape() == Shape{1, 3, 48, 80}));

    CHECK_THROWS(model.forward(nullptr, random_tensor<float>({1, 4, 64, 64}, rng)),
                 std::invalid_argument);
    CHECK_THROWS(model.forward(nullptr, random_tensor<float>({1, 3, 8, 64}, rng)),
                 std::invalid_argument);

    // outputs stay finite on in-range inputs
    auto out = model.forward(nullptr, b);
    for (float v : out.data()) {
        CHECK_TRUE(std::isfinite(v));
    }
}

static void test_charbonnier() {
    Rng rng(311);
    auto x = random_tensor<float>({1, 3, 4, 4}, rng, 0.0, 1.0);

    // identical tensors: exactly eps in both modes
    for (LossMode mode : {LossMode::elementwise_mean, LossMode::global_norm}) {
        auto loss = charbonnier_loss<float>(nullptr, x, x, 1e-3, mode);
        CHECK_EQ(loss.data()[0], 1e-3f);
    }

    // single element, d = 3e-3 -> sqrt(9e-6 + 1e-6)
    auto a = TensorF::from_data({1, 1, 1, 1}, {0.5f});
    auto b = TensorF::from_data({1, 1, 1, 1}, {0.5f - 3e-3f});
    CHECK_CLOSE(charbonnier_loss<float>(nullptr, a, b, 1e-3).data()[0], 3.1622776601683794e-3,
                1e-8);

    // L1 asymptote at d = 1
    auto c = TensorF::from_data({1, 1, 1, 1}, {1.0f});
    auto d = TensorF::from_data({1, 1, 1, 1}, {0.0f});
    CHECK_CLOSE(charbonnier_loss<float>(nullptr, c, d, 1e-3).data()[0], 1.000000499999875, 1e-6);

    CHECK_THROWS(charbonnier_loss<float>(nullptr, a, random_tensor<float>({1, 1, 1, 2}, rng)),
                 std::invalid_argument);

    // strictly above eps whenever tensors differ
    auto y = random_tensor<float>({1, 3, 4, 4}, rng, 0.0, 1.0);
    for (LossMode mode : {LossMode::elementwise_mean, LossMode::global_norm}) {
        CHECK_TRUE(charbonnier_loss<float>(nullptr, x, y, 1e-3, mode).data()[0] > 1e-3f);
    }

    // finite-difference checks, both modes
    Rng rngd(313);
    auto target = random_tensor<double>({1, 2, 3, 3}, rngd, 0.0, 1.0);
    auto point = random_tensor<double>({1, 2, 3, 3}, rngd, 0.0, 1.0);
    for (LossMode mode : {LossMode::elementwise_mean, LossMode::global_norm}) {
        const double err = grad_check<double>(
            [&](GraphD& g, const TensorD& t) {
                return charbonnier_loss<double>(&g, t, target, 1e-3, mode);
            },
            point, 1e-5);
        CHECK_TRUE(err < 1e-6);
    }
}

static void test_one_step_descent() {
    Rng rng(317);
    auto model = HwmnetModel<float>::build(tiny_config(2, 8), 11);
    auto low = random_tensor<float>({1, 3, 16, 16}, rng, 0.0, 0.5);
    auto gt = random_tensor<float>({1, 3, 16, 16}, rng, 0.3, 1.0);

    const auto eval_loss = [&]() {
        return charbonnier_loss<float>(nullptr, model.forward(nullptr, low), gt).data()[0];
    };
    const float before = eval_loss();

    GraphF g;
    auto loss = charbonnier_loss<float>(&g, model.forward(&g, low), gt);
    g.backward(loss);
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        auto& p = model.params()[i];
        if (!p.has_grad()) {
            continue;
        }
        auto data = p.mutable_data();
        auto grad = p.grad();
        for (std::size_t j = 0; j < data.size(); ++j) {
            data[j] -= 1e-4f * grad[j];
        }
    }
    CHECK_TRUE(eval_loss() < before);
}

static void test_end_to_end_gradient() {
    auto model = HwmnetModel<double>::build(tiny_config(3, 8), 5);
    Rng rng(331);
    auto target = random_tensor<double>({1, 3, 16, 16}, rng, 0.0, 1.0);
    auto point = random_tensor<double>({1, 3, 16, 16}, rng, 0.1, 0.9);
    const double err = testutil::grad_check_best<double>(
        [&](GraphD& g, const TensorD& t) {
            return charbonnier_loss<double>(&g, model.forward(&g, t), target);
        },
        point);
    CHECK_TRUE(err < 1e-4);
}

static void test_cost_report() {
    // closed-form entries at the reference accounting size
    const NetworkConfig cfg;   // defaults: 4 levels, base width 96
    auto report = count_cost(cfg, 400, 592);
    CHECK_EQ(report.eval_h, 400);
    CHECK_EQ(report.eval_w, 592);

    const auto* tail = report.find("enc.L1.hwab.tail");
    CHECK_TRUE(tail != nullptr);
    CHECK_EQ(tail->flops, 2LL * 9 * 96 * 96 * 400 * 592);       // 3.928e10
    CHECK_EQ(tail->params, 96LL * 96 * 9 + 96);

    const auto* shortcut = report.find("enc.L1.hwab.shortcut");
    CHECK_TRUE(shortcut != nullptr);
    CHECK_EQ(shortcut->flops, 2LL * 96 * 96 * 400 * 592);       // 1x1 conv closed form

    // totals equal the sum of the per-layer entries
    std::int64_t flops = 0, params = 0;
    for (const auto& layer : report.layers) {
        flops += layer.flops;
        params += layer.params;
    }
    CHECK_EQ(flops, report.total_flops);
    CHECK_EQ(params, report.total_params);

    // consistency with the published 0.92T reference: same order of magnitude
    const double ratio = static_cast<double>(report.total_flops) / 0.92e12;
    CHECK_TRUE(ratio > 0.5 && ratio < 2.0);

    // linear scaling in pixel count (descriptor/gate terms are constant and
    // negligible)
    auto doubled = count_cost(cfg, 400, 2 * 592);
    const double scale = static_cast<double>(doubled.total_flops) / report.total_flops;
    CHECK_TRUE(std::abs(scale - 2.0) < 1e-4);

    // parameter accounting matches a built model and the independent formula
    const NetworkConfig small = tiny_config(3, 8);
    auto small_report = count_cost(small, 64, 64);
    auto model = HwmnetModel<float>::build(small, 1);
    CHECK_EQ(small_report.total_params, model.params().total_params());
    CHECK_EQ(small_report.total_params, oracle::model(small));
}

int main() {
    test_config();
    test_build();
    test_zero_init_identity();
    test_forward_shapes();
    test_charbonnier();
    test_one_step_descent();
    test_end_to_end_gradient();
    test_cost_report();
    return testutil::finish("test_network");
}
