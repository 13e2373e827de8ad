#include <gtest/gtest.h>

#include <cmath>

#include "pat/errors.hpp"
#include "support.hpp"

using namespace pat;
using namespace pat::testing;

namespace {

GradCheckResult check(const std::vector<Tensor>& params, const ScalarFn& f) {
    return finite_diff_check(f, named(params), GradCheckOptions{1e-5, 32, 0});
}

}  // namespace

TEST(Matmul, MatchesTripleLoop) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng() % 7, k = 1 + rng() % 9, n = 1 + rng() % 6;
        Tensor a = uniform({m, k}, rng), b = uniform({k, n}, rng), bt = transpose(b);
        Tensor c = matmul(a, b), c2 = matmul_nt(a, bt);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0;
                for (std::size_t t = 0; t < k; ++t) s += double(a.at(i * k + t)) * double(b.at(t * n + j));
                EXPECT_NEAR(c.at(i * n + j), s, 1e-12);
                EXPECT_NEAR(c2.at(i * n + j), s, 1e-12);
            }
    }
}

TEST(Matmul, InnerDimMismatchThrows) {
    Tensor a({2, 3}), b({4, 2});
    EXPECT_THROW(matmul(a, b), DimensionError);
    EXPECT_THROW(matmul_nt(a, b), DimensionError);
}

TEST(Softmax, RowsSumToOneAndMatchDirectFormula) {
    std::mt19937_64 rng(2);
    Tensor x = uniform({5, 9}, rng, -30, 30);
    Tensor y = softmax_lastdim(x);
    for (std::size_t r = 0; r < 5; ++r) {
        double mx = -1e300, z = 0, s = 0;
        for (std::size_t j = 0; j < 9; ++j) mx = std::max(mx, double(x.at(r * 9 + j)));
        for (std::size_t j = 0; j < 9; ++j) z += std::exp(double(x.at(r * 9 + j)) - mx);
        for (std::size_t j = 0; j < 9; ++j) {
            EXPECT_NEAR(y.at(r * 9 + j), std::exp(double(x.at(r * 9 + j)) - mx) / z, 1e-14);
            s += y.at(r * 9 + j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Broadcast, RowSuffixAndScalar) {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor v({3}, {10, 20, 30});
    Tensor s({1}, {2});
    Tensor r = mul(add(a, v), s);
    const std::vector<Scalar> want{22, 44, 66, 28, 50, 72};
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(r.at(i), want[i]);
    EXPECT_THROW(add(a, Tensor({2})), DimensionError);
}

TEST(Numeric, NonFiniteOutputIsRejected) {
    Tensor z({2}, {0, 1});
    EXPECT_THROW(log(z), NumericError);
    Tensor big({1}, {1000});
    EXPECT_THROW(exp(big), NumericError);
}

TEST(Cosine, ZeroRowGivesZero) {
    Tensor a({2, 2}, {0, 0, 1, 0});
    Tensor b({1, 2}, {1, 0});
    Tensor c = cosine_similarity(a, b);
    EXPECT_EQ(c.at(0), 0);
    EXPECT_DOUBLE_EQ(c.at(1), 1);
}

TEST(TopK, TiesResolveToLowestIndex) {
    std::vector<Scalar> row{1, 3, 3, 2, 3};
    auto idx = topk_indices(row, 3);
    EXPECT_EQ(idx, (std::vector<std::size_t>{1, 2, 4}));
    EXPECT_EQ(max_lastdim(Tensor({1, 5}, row)).indices[0], 1u);
}

TEST(Autograd, LeafGradientsAccumulateAcrossBackwardCalls) {
    Tensor w = Tensor::parameter({2}, {1, 2});
    backward(sum(scale(w, 3)));
    backward(sum(scale(w, 3)));
    EXPECT_DOUBLE_EQ(w.grad()[0], 6);
    w.zero_grad();
    EXPECT_FALSE(w.has_grad() && w.grad()[0] != 0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
    Tensor w = Tensor::parameter({2}, {1, 2});
    Tensor y;
    {
        NoGradGuard g;
        y = sum(w);
    }
    EXPECT_FALSE(y.requires_grad());
}

TEST(Gradcheck, ElementwiseAndReductions) {
    std::mt19937_64 rng(5);
    Tensor a = param({3, 4}, rng), v = param({4}, rng), s1 = param({1}, rng), pos = param({3, 4}, rng, 0.1, 2);
    Tensor w = uniform({3, 4}, rng), w4 = uniform({4}, rng), w3 = uniform({3}, rng);
    EXPECT_LT(check({a, v, s1}, [&] { return probe(sub(mul(add(a, v), v), s1), w); }).max_rel_error, 1e-6);
    EXPECT_LT(check({pos}, [&] { return probe(add(add(exp(pos), log(pos)), log10(pos)), w); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a}, [&] { return probe(add(sigmoid(scale(a, 3)), gelu(scale(a, 2))), w); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a}, [&] { return add(probe(sum_axis(a, 0), w4), probe(mean_axis(a, 1), w3)); }).max_rel_error,
              1e-6);
}

TEST(Gradcheck, LinearAlgebraAndIndexing) {
    std::mt19937_64 rng(6);
    Tensor a = param({3, 4}, rng), b = param({4, 5}, rng), c = param({5, 4}, rng), d2 = param({3, 2}, rng);
    Tensor w35 = uniform({3, 5}, rng), w43 = uniform({4, 3}, rng), w36 = uniform({3, 6}, rng);
    Tensor w32 = uniform({3, 2}, rng), w24 = uniform({2, 4}, rng), w34 = uniform({3, 4}, rng);
    EXPECT_LT(check({a, b}, [&] { return probe(matmul(a, b), w35); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a, c}, [&] { return probe(matmul_nt(a, c), w35); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a}, [&] { return probe(transpose(a), w43); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a, d2}, [&] { return probe(concat({a, d2}, 1), w36); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a}, [&] { return probe(slice(a, 1, 1, 3), w32); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a}, [&] { return probe(split(a, 0, {1, 2})[1], w24); }).max_rel_error, 1e-6);
    const std::vector<std::vector<std::size_t>> gi{{0, 2}, {1, 1}, {3, 0}}, si{{0, 2}, {1, 3}, {3, 0}};
    EXPECT_LT(check({a}, [&] { return probe(gather_lastdim(a, gi), w32); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a, d2}, [&] { return probe(scatter_lastdim(a, si, d2), w34); }).max_rel_error, 1e-6);
}

TEST(Gradcheck, NetworkPrimitives) {
    std::mt19937_64 rng(7);
    Tensor a = param({3, 4}, rng), c = param({5, 4}, rng), g = param({4}, rng), b = param({4}, rng);
    Tensor w34 = uniform({3, 4}, rng), w35 = uniform({3, 5}, rng), w3 = uniform({3}, rng);
    const std::vector<int> t{0, 3, 1};
    EXPECT_LT(check({a}, [&] { return probe(softmax_lastdim(scale(a, 3)), w34); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a, g, b}, [&] { return probe(layer_norm(a, g, b), w34); }).max_rel_error, 1e-5);
    EXPECT_LT(check({a, c}, [&] { return probe(cosine_similarity(a, c), w35); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a}, [&] { return cross_entropy(scale(a, 5), t); }).max_rel_error, 1e-6);
    EXPECT_LT(check({a}, [&] { return probe(max_lastdim(a).values, w3); }).max_rel_error, 1e-6);
}

TEST(Gradcheck, ReportsAWrongAnalyticGradient) {
    Tensor x = Tensor::parameter({3}, {0.5, -1, 2});
    auto f = [&] { return sum(mul(x, x)); };
    std::vector<std::vector<Scalar>> wrong{{0.5, -1, 2}};  // half of 2x
    auto r = finite_diff_check(f, named({x}), wrong);
    EXPECT_GT(r.max_rel_error, 0.3);
}

TEST(DetachedTape, ReplayReturnsRecordedValues) {
    DetachedTape tape(DetachedTape::Mode::Record);
    Tensor x = Tensor::parameter({1}, {1});
    {
        DetachedTapeScope scope(&tape);
        Tensor a = detached([&] { return scale(x, 2); });
        EXPECT_DOUBLE_EQ(a.item(), 2);
        EXPECT_FALSE(a.requires_grad());
    }
    x.data()[0] = 5;
    tape.set_mode(DetachedTape::Mode::Replay);
    DetachedTapeScope scope(&tape);
    EXPECT_DOUBLE_EQ(detached([&] { return scale(x, 2); }).item(), 2);
}
