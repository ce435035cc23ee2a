#include "hwmnet/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "hwmnet/rng.hpp"
#include "test_util.hpp"

using namespace hwmnet;
using testutil::bitwise_equal;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::random_tensor_away_from_zero;

static void test_param_store() {
    Rng rng(211);
    ParamStore<float> store;
    auto conv = Conv2d<float>::create(store, "blk.conv", 4, 8, 3, rng);
    CHECK_EQ(store.size(), 2u);
    CHECK_TRUE(store.contains("blk.conv.weight"));
    CHECK_TRUE(store.contains("blk.conv.bias"));
    CHECK_EQ(store.total_params(), 8 * 4 * 3 * 3 + 8);
    CHECK_THROWS(store.add("blk.conv.weight", TensorF::zeros({1, 1, 1, 1})),
                 std::invalid_argument);

    // init bound sqrt(6/fan_in), biases zero
    const double bound = std::sqrt(6.0 / (4 * 3 * 3));
    for (float v : conv.weight.data()) {
        CHECK_TRUE(std::abs(v) <= bound);
    }
    for (float v : conv.bias.data()) {
        CHECK_EQ(v, 0.0f);
    }

    // identical seeds give identical draws
    Rng rng_a(42), rng_b(42);
    ParamStore<float> sa, sb;
    auto ca = Conv2d<float>::create(sa, "c", 3, 6, 3, rng_a);
    auto cb = Conv2d<float>::create(sb, "c", 3, 6, 3, rng_b);
    CHECK_TRUE(bitwise_equal(ca.weight, cb.weight));

    store.zero_all();
    for (float v : conv.weight.data()) {
        CHECK_EQ(v, 0.0f);
    }
}

static void test_channel_attention() {
    Rng rng(223);
    ParamStore<float> store;
    auto ca = ChannelAttention<float>::create(store, "ca", 16, 8, rng);

    // zero input stays zero
    auto zero_out = ca.forward(nullptr, TensorF::zeros({1, 16, 4, 4}));
    for (float v : zero_out.data()) {
        CHECK_EQ(v, 0.0f);
    }

    // zero excitation weights halve the input
    auto zd = store.at("ca.fc2.weight").mutable_data();
    std::fill(zd.begin(), zd.end(), 0.0f);
    auto x = random_tensor<float>({2, 16, 4, 4}, rng);
    auto halved = ca.forward(nullptr, x);
    auto xd = x.data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
        CHECK_CLOSE(halved.data()[i], xd[i] * 0.5f, 1e-6);
    }

    // gates strictly inside (0,1)
    ParamStore<float> store2;
    auto ca2 = ChannelAttention<float>::create(store2, "ca", 16, 8, rng);
    auto x2 = random_tensor_away_from_zero<float>({1, 16, 5, 5}, rng);
    auto gated = ca2.forward(nullptr, x2);
    for (std::size_t i = 0; i < x2.data().size(); ++i) {
        const float ratio = gated.data()[i] / x2.data()[i];
        CHECK_TRUE(ratio > 0.0f && ratio < 1.0f);
    }

    ParamStore<float> store3;
    CHECK_THROWS(ChannelAttention<float>::create(store3, "bad", 4, 8, rng),
                 std::invalid_argument);
}

static void test_spatial_attention() {
    Rng rng(227);
    ParamStore<float> store;
    auto sa = SpatialAttention<float>::create(store, "sa", 7, rng);

    auto zero_out = sa.forward(nullptr, TensorF::zeros({1, 8, 6, 6}));
    for (float v : zero_out.data()) {
        CHECK_EQ(v, 0.0f);
    }

    // map strictly inside (0,1)
    auto x = random_tensor_away_from_zero<float>({1, 8, 6, 6}, rng);
    auto gated = sa.forward(nullptr, x);
    for (std::size_t i = 0; i < x.data().size(); ++i) {
        const float ratio = gated.data()[i] / x.data()[i];
        CHECK_TRUE(ratio > 0.0f && ratio < 1.0f);
    }

    // channel-constant input: per-position mean equals max
    auto base = random_tensor<float>({1, 1, 5, 5}, rng);
    std::vector<float> rep;
    for (int ic = 0; ic < 4; ++ic) {
        rep.insert(rep.end(), base.data().begin(), base.data().end());
    }
    auto constant_c = TensorF::from_data({1, 4, 5, 5}, rep);
    CHECK_TRUE(bitwise_equal(channel_mean<float>(nullptr, constant_c),
                             channel_max<float>(nullptr, constant_c)));

    ParamStore<float> store2;
    CHECK_THROWS(SpatialAttention<float>::create(store2, "bad", 4, rng), std::invalid_argument);
}

static void test_dau() {
    Rng rng(229);
    ParamStore<float> store;
    const AttentionConfig cfg;
    auto dau = DualAttentionUnit<float>::create(store, "dau", 16, cfg, rng);

    // residual pass-through with zero parameters
    store.zero_all();
    auto x = random_tensor<float>({1, 16, 6, 6}, rng, 0.05, 1.0);
    CHECK_TRUE(bitwise_equal(dau.forward(nullptr, x), x));

    // shape preservation at the full-scale wavelet width
    ParamStore<float> store2;
    auto dau2 = DualAttentionUnit<float>::create(store2, "dau", 192, cfg, rng);
    auto wide = random_tensor<float>({1, 192, 32, 32}, rng);
    CHECK_TRUE((dau2.forward(nullptr, wide).shape() == Shape{1, 192, 32, 32}));

    // finite-difference check
    Rng rngd(230);
    ParamStore<double> dstore;
    auto daud = DualAttentionUnit<double>::create(dstore, "dau", 8, cfg, rngd);
    auto xd = random_tensor_away_from_zero<double>({1, 8, 8, 8}, rngd);
    auto proj = random_tensor<double>({1, 8, 8, 8}, rngd);
    const double err = testutil::grad_check_best<double>(
        [&](GraphD& g, const TensorD& t) {
            return sum_all<double>(&g, mul<double>(&g, daud.forward(&g, t), proj));
        },
        xd);
    CHECK_TRUE(err < 1e-5);
}

static void test_hwab() {
    Rng rng(233);
    const AttentionConfig cfg;
    ParamStore<float> store;
    auto hwab = HalfWaveletBlock<float>::create(store, "hwab", 16, cfg, rng);

    // both convolution paths zero out the block entirely
    store.zero_all();
    auto x = random_tensor<float>({1, 16, 8, 8}, rng);
    auto zeroed = hwab.forward(nullptr, x);
    for (float v : zeroed.data()) {
        CHECK_EQ(v, 0.0f);
    }

    // shape preservation at the full-scale level width
    ParamStore<float> store2;
    auto hwab2 = HalfWaveletBlock<float>::create(store2, "hwab", 96, cfg, rng);
    auto wide = random_tensor<float>({1, 96, 64, 64}, rng);
    CHECK_TRUE((hwab2.forward(nullptr, wide).shape() == Shape{1, 96, 64, 64}));

    // output reacts to both halves
    ParamStore<float> store3;
    auto hwab3 = HalfWaveletBlock<float>::create(store3, "hwab", 8, cfg, rng);
    auto base = random_tensor<float>({1, 8, 8, 8}, rng);
    auto out_base = hwab3.forward(nullptr, base);
    auto bump_identity = base.clone();
    bump_identity.mutable_data()[bump_identity.index(0, 1, 3, 3)] += 0.5f;
    auto bump_transform = base.clone();
    bump_transform.mutable_data()[bump_transform.index(0, 6, 3, 3)] += 0.5f;
    CHECK_TRUE(max_abs_diff(hwab3.forward(nullptr, bump_identity), out_base) > 1e-6);
    CHECK_TRUE(max_abs_diff(hwab3.forward(nullptr, bump_transform), out_base) > 1e-6);

    // shape violations
    CHECK_THROWS(hwab3.forward(nullptr, random_tensor<float>({1, 8, 7, 8}, rng)),
                 std::invalid_argument);
    CHECK_THROWS(hwab3.forward(nullptr, random_tensor<float>({1, 8, 8, 7}, rng)),
                 std::invalid_argument);
    ParamStore<float> store4;
    CHECK_THROWS(HalfWaveletBlock<float>::create(store4, "bad", 7, cfg, rng),
                 std::invalid_argument);

    // finite differences through DWT, DAU and IWT
    Rng rngd(234);
    ParamStore<double> dstore;
    auto hwabd = HalfWaveletBlock<double>::create(dstore, "hwab", 8, cfg, rngd);
    auto xd = random_tensor_away_from_zero<double>({1, 8, 16, 16}, rngd);
    auto proj = random_tensor<double>({1, 8, 16, 16}, rngd);
    const double err = testutil::grad_check_best<double>(
        [&](GraphD& g, const TensorD& t) {
            return sum_all<double>(&g, mul<double>(&g, hwabd.forward(&g, t), proj));
        },
        xd);
    CHECK_TRUE(err < 1e-5);
}

static void test_skff() {
    Rng rng(239);
    const AttentionConfig cfg;
    ParamStore<float> store;
    auto skff = SelectiveFusion<float>::create(store, "skff", 16, 2, cfg.skff_reduction, rng);

    // identical branches pass through (weights sum to one)
    auto f = random_tensor<float>({1, 16, 6, 6}, rng);
    CHECK_TRUE(max_abs_diff(skff.forward(nullptr, {f, f}), f) < 1e-6);

    // zero logit layers give equal weights of exactly one half
    auto zf0 = store.at("skff.fc0.weight").mutable_data();
    std::fill(zf0.begin(), zf0.end(), 0.0f);
    auto zf1 = store.at("skff.fc1.weight").mutable_data();
    std::fill(zf1.begin(), zf1.end(), 0.0f);
    CHECK_TRUE(bitwise_equal(skff.forward(nullptr, {f, f}), f));
    auto a = random_tensor<float>({1, 16, 6, 6}, rng);
    auto b = random_tensor<float>({1, 16, 6, 6}, rng);
    auto fused = skff.forward(nullptr, {a, b});
    for (std::size_t i = 0; i < fused.data().size(); ++i) {
        CHECK_CLOSE(fused.data()[i], 0.5f * (a.data()[i] + b.data()[i]), 1e-6);
    }

    // fused output stays inside the branch envelope (weights in (0,1), sum 1)
    ParamStore<float> store2;
    auto skff2 = SelectiveFusion<float>::create(store2, "skff", 8, 3, cfg.skff_reduction, rng);
    std::vector<TensorF> branches = {random_tensor<float>({2, 8, 4, 4}, rng),
                                     random_tensor<float>({2, 8, 4, 4}, rng),
                                     random_tensor<float>({2, 8, 4, 4}, rng)};
    auto fused2 = skff2.forward(nullptr, branches);
    for (std::size_t i = 0; i < fused2.data().size(); ++i) {
        float lo = branches[0].data()[i], hi = branches[0].data()[i];
        for (const auto& br : branches) {
            lo = std::min(lo, br.data()[i]);
            hi = std::max(hi, br.data()[i]);
        }
        CHECK_TRUE(fused2.data()[i] >= lo - 1e-6f && fused2.data()[i] <= hi + 1e-6f);
    }

    CHECK_THROWS(skff.forward(nullptr, {a, random_tensor<float>({1, 16, 5, 6}, rng)}),
                 std::invalid_argument);

    // gradient through fusion
    Rng rngd(240);
    ParamStore<double> dstore;
    auto skffd = SelectiveFusion<double>::create(dstore, "skff", 8, 2, cfg.skff_reduction, rngd);
    auto other = random_tensor<double>({1, 8, 4, 4}, rngd);
    auto proj = random_tensor<double>({1, 8, 4, 4}, rngd);
    const double err = testutil::grad_check_best<double>(
        [&](GraphD& g, const TensorD& t) {
            return sum_all<double>(&g, mul<double>(&g, skffd.forward(&g, {t, other}), proj));
        },
        random_tensor<double>({1, 8, 4, 4}, rngd));
    CHECK_TRUE(err < 1e-5);
}

int main() {
    test_param_store();
    test_channel_attention();
    test_spatial_attention();
    test_dau();
    test_hwab();
    test_skff();
    return testutil::finish("test_blocks");
}
