#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rsan/ops.hpp"
#include "rsan/rng.hpp"
#include "rsan/tensor.hpp"
#include "test_support.hpp"

using namespace rsan;
using test_support::finite_difference;
using test_support::max_rel_err;
using test_support::random_tensor;

namespace {

// Naive per-region matrix-vector oracle for region_linear.
Tensor region_linear_oracle(const Tensor& v, const Tensor& p) {
    const std::size_t C = v.extent(0), H = v.extent(1), W = v.extent(2);
    const std::size_t K = p.extent(1);
    Tensor out({K, H, W});
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            for (std::size_t k = 0; k < K; ++k) {
                double acc = 0.0;
                for (std::size_t c = 0; c < C; ++c) acc += v.at(c, i, j) * p.at(c, k);
                out.at(k, i, j) = acc;
            }
        }
    }
    return out;
}

// Quadruple-loop oracle for the valid depthwise correlation.
Tensor depthwise_oracle(const Tensor& v, const Tensor& kernel) {
    const std::size_t C = v.extent(0), H = v.extent(1), W = v.extent(2);
    const std::size_t h = kernel.extent(1), w = kernel.extent(2);
    Tensor out({C, H - h + 1, W - w + 1});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i + h <= H; ++i) {
            for (std::size_t j = 0; j + w <= W; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < h; ++p) {
                    for (std::size_t q = 0; q < w; ++q) {
                        acc += v.at(c, i + p, j + q) * kernel.at(c, p, q);
                    }
                }
                out.at(c, i, j) = acc;
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("region_linear identity projection") {
    Tensor v({2, 1, 1}, {1.0, 1.0});
    Tensor p({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const Tensor out = ops::region_linear(v, p);
    REQUIRE(out.shape() == Shape{2, 1, 1});
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 1.0);
}

TEST_CASE("region_linear summation case") {
    // v[c,i,j] = c + 1 on 2x2x2, all-ones projection: every output is 3.
    Tensor v({2, 2, 2});
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t r = 0; r < 4; ++r) v[c * 4 + r] = static_cast<double>(c + 1);
    }
    Tensor p({2, 3}, std::vector<double>(6, 1.0));
    const Tensor out = ops::region_linear(v, p);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 3.0);
}

TEST_CASE("region_linear matches the per-region loop oracle bitwise") {
    Rng rng(11);
    const Tensor v = random_tensor({3, 4, 4}, rng);
    const Tensor p = random_tensor({3, 5}, rng);
    const Tensor got = ops::region_linear(v, p);
    const Tensor expect = region_linear_oracle(v, p);
    REQUIRE(got.shape() == expect.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == expect[i]);
}

TEST_CASE("region_linear shape mismatch names both shapes") {
    Tensor v({3, 2, 2});
    Tensor p({4, 5});
    try {
        ops::region_linear(v, p);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3x2x2") != std::string::npos);
        CHECK(msg.find("4x5") != std::string::npos);
    }
}

TEST_CASE("global_avg_pool constant field") {
    Tensor v({3, 2, 2}, std::vector<double>(12, 5.0));
    const Tensor g = ops::global_avg_pool(v);
    REQUIRE(g.shape() == Shape{3});
    for (std::size_t c = 0; c < 3; ++c) CHECK(g[c] == 5.0);
}

TEST_CASE("global_avg_pool arithmetic mean") {
    Tensor v({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(ops::global_avg_pool(v)[0] == 2.5);
}

TEST_CASE("global_avg_pool matches loop oracle") {
    Rng rng(12);
    const Tensor v = random_tensor({8, 3, 3}, rng);
    const Tensor g = ops::global_avg_pool(v);
    for (std::size_t c = 0; c < 8; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) acc += v.at(c, i, j);
        }
        CHECK(std::abs(g[c] - acc / 9.0) < 1e-12);
    }
}

TEST_CASE("depthwise_conv identity kernel") {
    Rng rng(13);
    const Tensor v = random_tensor({2, 3, 3}, rng);
    Tensor k({2, 1, 1}, {1.0, 1.0});
    const Tensor out = ops::depthwise_conv_valid(v, k);
    REQUIRE(out.shape() == v.shape());
    for (std::size_t i = 0; i < v.numel(); ++i) CHECK(out[i] == v[i]);
}

TEST_CASE("depthwise_conv box sum") {
    Tensor v({1, 2, 2}, {1.0, 1.0, 1.0, 1.0});
    Tensor k({1, 2, 2}, {1.0, 1.0, 1.0, 1.0});
    const Tensor out = ops::depthwise_conv_valid(v, k);
    REQUIRE(out.shape() == Shape{1, 1, 1});
    CHECK(out[0] == 4.0);
}

TEST_CASE("depthwise_conv matches quadruple-loop oracle") {
    Rng rng(14);
    const Tensor v = random_tensor({4, 5, 5}, rng);
    const Tensor k = random_tensor({4, 3, 3}, rng);
    const Tensor got = ops::depthwise_conv_valid(v, k);
    const Tensor expect = depthwise_oracle(v, k);
    REQUIRE(got.shape() == expect.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) CHECK(std::abs(got[i] - expect[i]) < 1e-12);
}

TEST_CASE("depthwise_conv rejects oversized kernels") {
    Tensor v({1, 2, 2});
    Tensor k({1, 3, 3});
    CHECK_THROWS_AS(ops::depthwise_conv_valid(v, k), DimensionError);
}

TEST_CASE("forward ops agree with oracles on random shapes up to 8x8x8") {
    Rng rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t C = 1 + rng.uniform_index(8);
        const std::size_t H = 1 + rng.uniform_index(8);
        const std::size_t W = 1 + rng.uniform_index(8);
        const std::size_t K = 1 + rng.uniform_index(8);
        const Tensor v = random_tensor({C, H, W}, rng);
        const Tensor p = random_tensor({C, K}, rng);
        const Tensor rl = ops::region_linear(v, p);
        const Tensor rl_expect = region_linear_oracle(v, p);
        for (std::size_t i = 0; i < rl.numel(); ++i) {
            REQUIRE(std::abs(rl[i] - rl_expect[i]) < 1e-12);
        }
        const std::size_t h = 1 + rng.uniform_index(H);
        const std::size_t w = 1 + rng.uniform_index(W);
        const Tensor kern = random_tensor({C, h, w}, rng);
        const Tensor dw = ops::depthwise_conv_valid(v, kern);
        const Tensor dw_expect = depthwise_oracle(v, kern);
        for (std::size_t i = 0; i < dw.numel(); ++i) {
            REQUIRE(std::abs(dw[i] - dw_expect[i]) < 1e-12);
        }
    }
}

TEST_CASE("global_max_argmax ties break to the row-major first location") {
    Tensor t({2, 2}, {1.0, 1.0, 1.0, 1.0});
    const ops::MaxResult r = ops::global_max_argmax(t);
    CHECK(r.value == 1.0);
    CHECK(r.location == std::vector<std::size_t>{0, 0});
}

TEST_CASE("global_max_argmax unique maximum") {
    Tensor t({2, 2}, {0.0, 3.0, 2.0, 1.0});
    const ops::MaxResult r = ops::global_max_argmax(t);
    CHECK(r.value == 3.0);
    CHECK(r.location == std::vector<std::size_t>{0, 1});
}

TEST_CASE("global_max_argmax matches a linear scan oracle") {
    Rng rng(16);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t H = 1 + rng.uniform_index(6);
        const std::size_t W = 1 + rng.uniform_index(6);
        const Tensor t = random_tensor({H, W}, rng);
        std::size_t best = 0;
        for (std::size_t i = 1; i < t.numel(); ++i) {
            if (t[i] > t[best]) best = i;
        }
        const ops::MaxResult r = ops::global_max_argmax(t);
        CHECK(r.flat_index == best);
        CHECK(r.value == t[best]);
    }
}

TEST_CASE("global_max_argmax is permutation-covariant over spatial entries") {
    Rng rng(17);
    const Tensor t = random_tensor({3, 3}, rng);
    const ops::MaxResult base = ops::global_max_argmax(t);
    // Reverse the flat layout; the winner must move to the mirrored slot.
    Tensor rev(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) rev[t.numel() - 1 - i] = t[i];
    const ops::MaxResult mirrored = ops::global_max_argmax(rev);
    CHECK(mirrored.value == base.value);
    CHECK(mirrored.flat_index == t.numel() - 1 - base.flat_index);
}

TEST_CASE("global_max_argmax rejects an empty tensor") {
    Tensor empty;
    CHECK_THROWS_AS(ops::global_max_argmax(empty), DomainError);
}

TEST_CASE("cosine self-similarity and orthogonality") {
    Tensor u({3}, {1.0, 2.0, -3.0});
    CHECK(ops::cosine(u, u) == Catch::Approx(1.0).margin(1e-15));
    Tensor a({2}, {1.0, 0.0});
    Tensor b({2}, {0.0, 1.0});
    CHECK(ops::cosine(a, b) == 0.0);
}

TEST_CASE("cosine is exactly scale-invariant") {
    Rng rng(18);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor u = random_tensor({5}, rng);
        const Tensor w = random_tensor({5}, rng);
        const double c = rng.uniform(0.1, 10.0);
        Tensor cu(u.shape());
        for (std::size_t i = 0; i < u.numel(); ++i) cu[i] = c * u[i];
        CHECK(std::abs(ops::cosine(cu, w) - ops::cosine(u, w)) < 1e-12);
    }
}

TEST_CASE("cosine rejects zero-norm operands") {
    Tensor z({3});
    Tensor u({3}, {1.0, 0.0, 0.0});
    CHECK_THROWS_AS(ops::cosine(z, u), DegenerateVectorError);
    CHECK_THROWS_AS(ops::cosine(u, z), DegenerateVectorError);
}

// ---------------------------------------------------------------------------
// Adjoints vs central finite differences

TEST_CASE("region_linear adjoints match finite differences") {
    Rng rng(19);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor v = random_tensor({3, 4, 4}, rng);
        Tensor p = random_tensor({3, 4}, rng);
        const Tensor weights = random_tensor({4, 4, 4}, rng);
        const auto scalar = [&]() {
            const Tensor out = ops::region_linear(v, p);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.numel(); ++i) acc += out[i] * weights[i];
            return acc;
        };
        const Tensor grad_p = ops::region_linear_backward_projection(v, weights);
        const Tensor grad_v = ops::region_linear_backward_input(p, weights);
        CHECK(max_rel_err(grad_p, finite_difference(scalar, p)) < 1e-5);
        CHECK(max_rel_err(grad_v, finite_difference(scalar, v)) < 1e-5);
    }
}

TEST_CASE("depthwise_conv adjoints match finite differences") {
    Rng rng(20);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor v = random_tensor({3, 5, 5}, rng);
        Tensor k = random_tensor({3, 2, 3}, rng);
        const Tensor weights = random_tensor({3, 4, 3}, rng);
        const auto scalar = [&]() {
            const Tensor out = ops::depthwise_conv_valid(v, k);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.numel(); ++i) acc += out[i] * weights[i];
            return acc;
        };
        const Tensor grad_k = ops::depthwise_conv_backward_kernel(v, k.shape(), weights);
        const Tensor grad_v = ops::depthwise_conv_backward_input(v.shape(), k, weights);
        CHECK(max_rel_err(grad_k, finite_difference(scalar, k)) < 1e-5);
        CHECK(max_rel_err(grad_v, finite_difference(scalar, v)) < 1e-5);
    }
}

TEST_CASE("global_avg_pool adjoint matches finite differences") {
    Rng rng(21);
    Tensor v = random_tensor({4, 3, 3}, rng);
    const Tensor weights = random_tensor({4}, rng);
    const auto scalar = [&]() {
        const Tensor g = ops::global_avg_pool(v);
        double acc = 0.0;
        for (std::size_t c = 0; c < g.numel(); ++c) acc += g[c] * weights[c];
        return acc;
    };
    const Tensor grad = ops::global_avg_pool_backward(v.shape(), weights);
    CHECK(max_rel_err(grad, finite_difference(scalar, v)) < 1e-5);
}

TEST_CASE("cosine adjoint matches finite differences") {
    Rng rng(22);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor u = random_tensor({6}, rng, 0.2, 1.5);
        Tensor w = random_tensor({6}, rng, 0.2, 1.5);
        Tensor gu, gw;
        ops::cosine_backward(u, w, 1.0, gu, gw);
        const auto scalar = [&]() { return ops::cosine(u, w); };
        CHECK(max_rel_err(gu, finite_difference(scalar, u)) < 1e-5);
        CHECK(max_rel_err(gw, finite_difference(scalar, w)) < 1e-5);
    }
}

TEST_CASE("gradient through a strict max is the indicator of the arg position") {
    Tensor t({2, 3}, {0.1, 0.9, 0.3, 0.2, 0.8, 0.0});
    const ops::MaxResult r = ops::global_max_argmax(t);
    const Tensor grad = ops::global_max_backward<double>(t.shape(), r, 1.0);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        CHECK(grad[i] == (i == r.flat_index ? 1.0 : 0.0));
    }
}

TEST_CASE("max adjoint rejects state from a different forward pass") {
    ops::MaxResult bogus;
    bogus.flat_index = 99;
    CHECK_THROWS_AS(ops::global_max_backward<double>({2, 2}, bogus, 1.0), UsageError);
}

TEST_CASE("relu and its adjoint") {
    Tensor t({4}, {-1.0, 0.0, 2.0, -0.5});
    const Tensor out = ops::relu(t);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 2.0);
    CHECK(out[3] == 0.0);
    Tensor up({4}, {1.0, 1.0, 1.0, 1.0});
    const Tensor grad = ops::relu_backward(t, up);
    CHECK(grad[0] == 0.0);
    CHECK(grad[1] == 0.0);  // subgradient 0 at the kink
    CHECK(grad[2] == 1.0);
    CHECK(grad[3] == 0.0);
    Tensor wrong({3});
    CHECK_THROWS_AS(ops::relu_backward(t, wrong), UsageError);
}

TEST_CASE("non-finite results are an error state") {
    Tensor v({1, 1, 1}, {1e308});
    Tensor p({1, 1}, {1e308});
    CHECK_THROWS_AS(ops::region_linear(v, p), DomainError);
}

TEST_CASE("float storage keeps 64-bit accumulation") {
    // Summing 1e8-magnitude cancellations in float would lose everything;
    // the double accumulator keeps the small residual.
    TensorF v({3, 1, 1}, {3.0e7f, 1.0f, -3.0e7f});
    TensorF p({3, 1}, {1.0f, 1.0f, 1.0f});
    const TensorF out = ops::region_linear(v, p);
    CHECK(out[0] == 1.0f);
}
