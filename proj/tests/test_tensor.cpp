#include "hwmnet/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hwmnet/rng.hpp"
#include "test_util.hpp"

using namespace hwmnet;
using testutil::bitwise_equal;
using testutil::max_abs_diff;
using testutil::naive_conv2d;
using testutil::random_tensor;
using testutil::random_tensor_away_from_zero;

static void test_conv2d_examples() {
    // zero input stays zero regardless of weights
    Rng rng(7);
    auto x0 = TensorF::zeros({1, 1, 3, 3});
    auto w = random_tensor<float>({1, 1, 3, 3}, rng);
    auto b = TensorF::zeros({1, 1, 1, 1});
    auto y = conv2d<float>(nullptr, x0, w, b, 1);
    CHECK_TRUE((y.shape() == Shape{1, 1, 3, 3}));
    for (float v : y.data()) {
        CHECK_EQ(v, 0.0f);
    }

    // 1x1 scalar kernel doubles the input
    auto x = TensorF::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto w2 = TensorF::from_data({1, 1, 1, 1}, {2});
    auto y2 = conv2d<float>(nullptr, x, w2, b, 0);
    const std::vector<float> expect = {2, 4, 6, 8};
    for (int i = 0; i < 4; ++i) {
        CHECK_EQ(y2.data()[i], expect[i]);
    }

    // random case against the nested-loop oracle
    auto xr = random_tensor<float>({1, 3, 8, 8}, rng);
    auto wr = random_tensor<float>({4, 3, 3, 3}, rng);
    auto br = random_tensor<float>({1, 4, 1, 1}, rng);
    auto got = conv2d<float>(nullptr, xr, wr, br, 1);
    auto ref = naive_conv2d(xr, wr, br, 1);
    CHECK_TRUE(max_abs_diff(got, ref) < 1e-6);

    // shape errors
    CHECK_THROWS(conv2d<float>(nullptr, xr, random_tensor<float>({4, 2, 3, 3}, rng), br, 1),
                 std::invalid_argument);
    CHECK_THROWS(conv2d<float>(nullptr, xr, random_tensor<float>({4, 3, 2, 2}, rng), br, 1),
                 std::invalid_argument);
}

static void test_conv2d_oracle_sweep() {
    // >=100 random shapes, k in {1,3,5,7}, including grouped cases
    Rng rng(11);
    int cases = 0;
    double worst_rel = 0.0;
    const int kernels[] = {1, 3, 5, 7};
    for (int i = 0; i < 104; ++i) {
        const int k = kernels[i % 4];
        const int groups = (i % 7 == 3) ? 2 : 1;
        const int ci = 1 + static_cast<int>(rng.next_below(4));
        const int co_pg = 1 + static_cast<int>(rng.next_below(4));
        const int n = 1 + static_cast<int>(rng.next_below(2));
        const int h = k + static_cast<int>(rng.next_below(10));
        const int w = k + static_cast<int>(rng.next_below(10));
        const int pad = static_cast<int>(rng.next_below(static_cast<std::int64_t>(k / 2 + 2)));
        auto x = random_tensor<float>({n, ci * groups, h, w}, rng);
        auto wt = random_tensor<float>({co_pg * groups, ci, k, k}, rng);
        auto b = random_tensor<float>({1, co_pg * groups, 1, 1}, rng);
        if (h + 2 * pad - k + 1 < 1 || w + 2 * pad - k + 1 < 1) {
            continue;
        }
        auto got = conv2d<float>(nullptr, x, wt, b, pad, groups);
        auto ref = naive_conv2d(x, wt, b, pad, groups);
        double mag = 0.0;
        for (float v : ref.data()) {
            mag = std::max(mag, std::abs(static_cast<double>(v)));
        }
        worst_rel = std::max(worst_rel, max_abs_diff(got, ref) / std::max(mag, 1.0));
        ++cases;
    }
    CHECK_TRUE(cases >= 100);
    CHECK_TRUE(worst_rel < 1e-5);
}

static void test_conv2d_linearity_and_determinism() {
    Rng rng(23);
    auto x = random_tensor<float>({2, 3, 9, 7}, rng);
    auto y = random_tensor<float>({2, 3, 9, 7}, rng);
    auto w = random_tensor<float>({4, 3, 3, 3}, rng);
    auto b0 = TensorF::zeros({1, 4, 1, 1});
    const float a = 0.7f;
    const float c = -1.3f;

    auto lhs_in = add<float>(nullptr, scale<float>(nullptr, x, a), scale<float>(nullptr, y, c));
    auto lhs = conv2d<float>(nullptr, lhs_in, w, b0, 1);
    auto rhs = add<float>(nullptr, scale<float>(nullptr, conv2d<float>(nullptr, x, w, b0, 1), a),
                          scale<float>(nullptr, conv2d<float>(nullptr, y, w, b0, 1), c));
    CHECK_TRUE(max_abs_diff(lhs, rhs) < 1e-5);

    auto r1 = conv2d<float>(nullptr, x, w, b0, 1);
    auto r2 = conv2d<float>(nullptr, x, w, b0, 1);
    CHECK_TRUE(bitwise_equal(r1, r2));
}

static void test_elementwise() {
    auto x = TensorF::from_data({1, 1, 1, 2}, {-1, 2});
    auto r = relu<float>(nullptr, x);
    CHECK_EQ(r.data()[0], 0.0f);
    CHECK_EQ(r.data()[1], 2.0f);

    auto alpha = TensorF::from_data({1, 1, 1, 1}, {0.25f});
    auto xp = TensorF::from_data({1, 1, 1, 1}, {-2});
    CHECK_EQ(prelu<float>(nullptr, xp, alpha).data()[0], -0.5f);

    auto zero = TensorF::zeros({1, 1, 1, 1});
    CHECK_EQ(sigmoid<float>(nullptr, zero).data()[0], 0.5f);

    // per-channel broadcast
    auto t = TensorF::from_data({1, 2, 1, 2}, {1, 2, 3, 4});
    auto gch = TensorF::from_data({1, 2, 1, 1}, {10, 100});
    auto prod = mul<float>(nullptr, t, gch);
    CHECK_EQ(prod.data()[0], 10.0f);
    CHECK_EQ(prod.data()[1], 20.0f);
    CHECK_EQ(prod.data()[2], 300.0f);
    CHECK_EQ(prod.data()[3], 400.0f);

    // per-position broadcast
    auto gpos = TensorF::from_data({1, 1, 1, 2}, {1, -1});
    auto summed = add<float>(nullptr, t, gpos);
    CHECK_EQ(summed.data()[0], 2.0f);
    CHECK_EQ(summed.data()[1], 1.0f);
    CHECK_EQ(summed.data()[2], 4.0f);
    CHECK_EQ(summed.data()[3], 3.0f);

    CHECK_THROWS(add<float>(nullptr, t, TensorF::zeros({1, 3, 1, 1})), std::invalid_argument);
}

static void test_global_avg_pool() {
    auto c = TensorF::full({2, 3, 4, 5}, 0.625f);
    auto pooled = global_avg_pool<float>(nullptr, c);
    CHECK_TRUE((pooled.shape() == Shape{2, 3, 1, 1}));
    for (float v : pooled.data()) {
        CHECK_CLOSE(v, 0.625f, 1e-7);
    }

    auto x = TensorF::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK_CLOSE(global_avg_pool<float>(nullptr, x).data()[0], 2.5f, 1e-7);

    CHECK_THROWS(global_avg_pool<float>(nullptr, TensorF{}), std::invalid_argument);

    // gradient is uniform 1/(h*w), via finite differences in double
    Rng rng(5);
    auto xd = random_tensor<double>({1, 2, 3, 4}, rng);
    const double err = grad_check<double>(
        [](GraphD& g, const TensorD& t) {
            return sum_all<double>(&g, global_avg_pool<double>(&g, t));
        },
        xd, 1e-5);
    CHECK_TRUE(err < 1e-6);
}

static void test_concat_split() {
    Rng rng(17);
    auto a = random_tensor<float>({1, 2, 4, 4}, rng);
    auto b = random_tensor<float>({1, 3, 4, 4}, rng);
    auto cat = concat_channels<float>(nullptr, {a, b});
    CHECK_TRUE((cat.shape() == Shape{1, 5, 4, 4}));

    auto parts = split_channels<float>(nullptr, cat, {2, 3});
    CHECK_TRUE(bitwise_equal(parts[0], a));
    CHECK_TRUE(bitwise_equal(parts[1], b));

    CHECK_THROWS(concat_channels<float>(nullptr, {a, random_tensor<float>({1, 3, 5, 4}, rng)}),
                 std::invalid_argument);
    CHECK_THROWS(split_channels<float>(nullptr, cat, {2, 2}), std::invalid_argument);

    // gradients route each slice to its source
    auto xd = random_tensor<double>({1, 4, 3, 3}, rng);
    auto proj = random_tensor<double>({1, 8, 3, 3}, rng);
    const double err = grad_check<double>(
        [&](GraphD& g, const TensorD& t) {
            auto halves = split_channels<double>(&g, t, {1, 3});
            auto joined = concat_channels<double>(&g, {halves[1], t, halves[0]});
            return sum_all<double>(&g, mul<double>(&g, joined, proj));
        },
        xd, 1e-5);
    CHECK_TRUE(err < 1e-6);
}

static void test_softmax_over_branches() {
    // equal logits: exact halves
    auto z = TensorF::full({1, 6, 1, 1}, 0.37f);
    auto w = softmax_over_branches<float>(nullptr, z, 2);
    for (float v : w.data()) {
        CHECK_EQ(v, 0.5f);
    }

    // logits (0, ln 3) -> (0.25, 0.75)
    auto z2 = TensorF::from_data({1, 2, 1, 1}, {0.0f, std::log(3.0f)});
    auto w2 = softmax_over_branches<float>(nullptr, z2, 2);
    CHECK_CLOSE(w2.data()[0], 0.25f, 1e-6);
    CHECK_CLOSE(w2.data()[1], 0.75f, 1e-6);

    // normalization on random input
    Rng rng(29);
    auto z3 = random_tensor<float>({2, 12, 1, 1}, rng, -3.0, 3.0);
    auto w3 = softmax_over_branches<float>(nullptr, z3, 3);
    for (int in = 0; in < 2; ++in) {
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int l = 0; l < 3; ++l) {
                const float v = w3.at(in, l * 4 + j, 0, 0);
                CHECK_TRUE(v >= 0.0f);
                s += v;
            }
            CHECK_CLOSE(s, 1.0, 1e-6);
        }
    }

    CHECK_THROWS(softmax_over_branches<float>(nullptr, z3, 5), std::invalid_argument);

    auto zd = random_tensor<double>({1, 8, 1, 1}, rng, -2.0, 2.0);
    auto proj = random_tensor<double>({1, 8, 1, 1}, rng);
    const double err = grad_check<double>(
        [&](GraphD& g, const TensorD& t) {
            return sum_all<double>(&g, mul<double>(&g, softmax_over_branches<double>(&g, t, 4), proj));
        },
        zd, 1e-5);
    CHECK_TRUE(err < 1e-6);
}

static void test_backward_basics() {
    // loss = sum(x) -> grad all ones
    Rng rng(31);
    auto x = random_tensor<float>({1, 2, 3, 3}, rng);
    x.set_requires_grad(true);
    GraphF g;
    auto loss = sum_all<float>(&g, x);
    g.backward(loss);
    CHECK_TRUE(x.has_grad());
    for (float v : x.grad()) {
        CHECK_EQ(v, 1.0f);
    }

    // loss = sum(x*x) at [1,-2] -> grad [2,-4]; exercises accumulation when
    // one tensor feeds an op twice
    auto x2 = TensorF::from_data({1, 1, 1, 2}, {1, -2});
    x2.set_requires_grad(true);
    GraphF g2;
    auto loss2 = sum_all<float>(&g2, mul<float>(&g2, x2, x2));
    g2.backward(loss2);
    CHECK_EQ(x2.grad()[0], 2.0f);
    CHECK_EQ(x2.grad()[1], -4.0f);

    // non-scalar loss rejected
    auto x3 = random_tensor<float>({1, 1, 2, 2}, rng);
    x3.set_requires_grad(true);
    GraphF g3;
    auto y3 = relu<float>(&g3, x3);
    CHECK_THROWS(g3.backward(y3), std::invalid_argument);

    // tensors not feeding the loss keep untouched (absent) grads
    auto used = random_tensor<float>({1, 1, 2, 2}, rng);
    auto unused = random_tensor<float>({1, 1, 2, 2}, rng);
    used.set_requires_grad(true);
    unused.set_requires_grad(true);
    GraphF g4;
    auto dead = relu<float>(&g4, unused);
    auto loss4 = sum_all<float>(&g4, used);
    g4.backward(loss4);
    CHECK_TRUE(used.has_grad());
    CHECK_TRUE(!unused.has_grad());
    (void)dead;
}

static void test_composite_grad_check() {
    // conv -> prelu -> pool composite against central differences
    Rng rng(37);
    auto w = random_tensor<double>({3, 2, 3, 3}, rng);
    auto b = random_tensor<double>({1, 3, 1, 1}, rng);
    auto alpha = TensorD::full({1, 3, 1, 1}, 0.25);
    auto x = random_tensor_away_from_zero<double>({1, 2, 6, 6}, rng);
    const double err = grad_check<double>(
        [&](GraphD& g, const TensorD& t) {
            auto y = conv2d<double>(&g, t, w, b, 1);
            y = prelu<double>(&g, y, alpha);
            return sum_all<double>(&g, global_avg_pool<double>(&g, y));
        },
        x, 1e-5);
    CHECK_TRUE(err < 1e-6);

    // same composite, gradient w.r.t. the convolution weight
    const double werr = grad_check<double>(
        [&](GraphD& g, const TensorD& wt) {
            auto y = conv2d<double>(&g, x, wt, b, 1);
            y = prelu<double>(&g, y, alpha);
            return sum_all<double>(&g, global_avg_pool<double>(&g, y));
        },
        w, 1e-5);
    CHECK_TRUE(werr < 1e-6);

    // channel reductions (mean and max)
    auto xm = random_tensor<double>({1, 4, 5, 5}, rng);
    auto proj = random_tensor<double>({1, 1, 5, 5}, rng);
    const double merr = grad_check<double>(
        [&](GraphD& g, const TensorD& t) {
            return sum_all<double>(&g, mul<double>(&g, channel_mean<double>(&g, t), proj));
        },
        xm, 1e-5);
    CHECK_TRUE(merr < 1e-6);
    const double xerr = grad_check<double>(
        [&](GraphD& g, const TensorD& t) {
            return sum_all<double>(&g, mul<double>(&g, channel_max<double>(&g, t), proj));
        },
        xm, 1e-5);
    CHECK_TRUE(xerr < 1e-6);
}

static void test_grad_check_trivial() {
    Rng rng(41);
    auto x = random_tensor<double>({1, 2, 2, 2}, rng);
    const double err = grad_check<double>(
        [](GraphD& g, const TensorD& t) { return sum_all<double>(&g, t); }, x, 1e-5);
    CHECK_TRUE(err < 1e-9);

    CHECK_THROWS(grad_check<double>(
                     [](GraphD& g, const TensorD& t) { return sum_all<double>(&g, t); }, x, 1e-2),
                 std::invalid_argument);
}

static void test_finiteness() {
    Rng rng(43);
    auto x = random_tensor<float>({2, 4, 8, 8}, rng);
    auto w = random_tensor<float>({4, 4, 3, 3}, rng);
    auto b = random_tensor<float>({1, 4, 1, 1}, rng);
    auto y = conv2d<float>(nullptr, x, w, b, 1);
    y = sigmoid<float>(nullptr, y);
    y = mul<float>(nullptr, y, global_avg_pool<float>(nullptr, y));
    for (float v : y.data()) {
        CHECK_TRUE(std::isfinite(v));
    }
}

int main() {
    test_conv2d_examples();
    test_conv2d_oracle_sweep();
    test_conv2d_linearity_and_determinism();
    test_elementwise();
    test_global_avg_pool();
    test_concat_split();
    test_softmax_over_branches();
    test_backward_basics();
    test_composite_grad_check();
    test_grad_check_trivial();
    test_finiteness();
    return testutil::finish("test_tensor");
}
