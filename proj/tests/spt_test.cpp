#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pat/errors.hpp"
#include "pat/spt.hpp"
#include "support.hpp"

using namespace pat;
using namespace pat::testing;

TEST(LogMaskBias, EndpointsAndBase) {
    Tensor m({3}, {1, 0, 0.5});
    Tensor b = log_mask_bias(m);
    EXPECT_NEAR(b.at(0), std::log10(1 + 1e-7), 1e-15);
    EXPECT_DOUBLE_EQ(b.at(1), std::log10(1e-7));
    EXPECT_NEAR(b.at(1), -7.0, 1e-12);
    EXPECT_NEAR(std::exp(double(b.at(1))), 9.12e-4, 1e-6);
    EXPECT_NEAR(log_mask_bias(m, LogBase::E).at(1), std::log(1e-7), 1e-12);
}

// softmax(A + log10(m + eps)) == exp(A) (m + eps)^(1/ln 10), normalized.
TEST(LogMaskBias, MaskedSoftmaxFactorizes) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng() % 4, n = 2 + rng() % 30;
        Tensor a = uniform({rows, n}, rng, -4, 4);
        Tensor m = uniform({rows, n}, rng, 0, 1);
        for (auto& v : m.data())
            if (rng() % 4 == 0) v = 0;
        Tensor s = softmax_lastdim(add(a, log_mask_bias(m)));
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> f(n);
            double z = 0;
            for (std::size_t j = 0; j < n; ++j) {
                f[j] = std::exp(a.at(r * n + j)) * std::pow(m.at(r * n + j) + 1e-7, 1.0 / std::log(10.0));
                z += f[j];
            }
            for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(s.at(r * n + j), f[j] / z, 1e-6);
        }
    }
}

TEST(Suppress, ContractOnRandomRows) {
    std::mt19937_64 rng(22);
    SuppressionConfig cfg;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t h = 5 + rng() % 8, w = 5 + rng() % 8, rows = 1 + rng() % 3;
        Tensor l = uniform({rows, h * w}, rng, -5, 5);
        Tensor out = gaussian_suppress(l, h, w, cfg);
        for (std::size_t r = 0; r < rows; ++r) {
            std::size_t changed = 0;
            auto top = topk_indices(l.data().subspan(r * h * w, h * w), 15);
            for (std::size_t j = 0; j < h * w; ++j) {
                const Scalar before = l.at(r * h * w + j), after = out.at(r * h * w + j);
                const bool is_top = std::find(top.begin(), top.end(), j) != top.end();
                if (!is_top) {
                    EXPECT_EQ(before, after);
                    continue;
                }
                changed += before != after;
                const long u = long(j / w), v = long(j % w);
                double lo = 1e300, hi = -1e300;
                for (long dy = -5; dy <= 5; ++dy)
                    for (long dx = -5; dx <= 5; ++dx) {
                        const long y = u + dy, x = v + dx;
                        if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) continue;
                        const double val = l.at(r * h * w + std::size_t(y) * w + std::size_t(x));
                        lo = std::min(lo, val), hi = std::max(hi, val);
                    }
                EXPECT_GE(after, lo - 1e-12);
                EXPECT_LE(after, hi + 1e-12);
            }
            EXPECT_EQ(changed, 15u);  // distinct random values: every top-K cell moves
        }
    }
}

TEST(Suppress, ConstantRowIsUnchanged) {
    SuppressionConfig cfg;
    Tensor l({2, 64}, Scalar(0.37));
    Tensor out = gaussian_suppress(l, 8, 8, cfg);
    for (std::size_t i = 0; i < l.numel(); ++i) EXPECT_EQ(out.at(i), l.at(i));
}

TEST(Suppress, CentreSpikeShrinksByTheNormalizedCentreWeight) {
    SuppressionConfig cfg;
    cfg.top_k = 1;
    const std::size_t h = 15, w = 15;
    Tensor l({1, h * w}, Scalar(0));
    l.data()[7 * w + 7] = 10;
    Tensor out = gaussian_suppress(l, h, w, cfg);
    double total = 0;
    for (long m = -5; m <= 5; ++m)
        for (long n = -5; n <= 5; ++n) total += std::exp(-double(m * m + n * n) / 8.0);
    const double g00 = 1.0 / total;
    EXPECT_NEAR(out.at(7 * w + 7), 10 * g00, 1e-12);
    EXPECT_LT(out.at(7 * w + 7), 10);
    for (std::size_t j = 0; j < h * w; ++j)
        if (j != 7 * w + 7) {
            EXPECT_EQ(out.at(j), 0);
        }
}

TEST(Suppress, MatchesLoopOracleAndHandlesBorders) {
    std::mt19937_64 rng(23);
    SuppressionConfig cfg;
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t h = 4 + rng() % 6, w = 4 + rng() % 6;
        Tensor l = uniform({1, h * w}, rng, -3, 3);
        const auto want = oracle::suppress_row(oracle::copy(l), h, w, 15, 5, 2.0);
        Tensor out = gaussian_suppress(l, h, w, cfg);
        for (std::size_t j = 0; j < h * w; ++j) EXPECT_NEAR(out.at(j), want[j], 1e-12);
    }
}

TEST(Suppress, DisabledIsIdentityAndBadConfigThrows) {
    Tensor l({1, 16}, Scalar(1));
    SuppressionConfig off;
    off.enabled = false;
    EXPECT_EQ(gaussian_suppress(l, 4, 4, off).impl(), l.impl());
    SuppressionConfig bad;
    bad.sigma = 0;
    EXPECT_THROW(gaussian_suppress(l, 4, 4, bad), ConfigError);
    EXPECT_THROW(gaussian_suppress(l, 3, 4, SuppressionConfig{}), DimensionError);
}

TEST(SemanticTransfer, MatchesLoopOracle) {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 4 + rng() % 5, n_p = 1 + rng() % 4, h = 4 + rng() % 3, w = 4 + rng() % 3;
        ParamStore store;
        TransferParams p = TransferParams::make(store, "t", d, rng);
        Tensor prompts = uniform({n_p, d}, rng), x = uniform({h * w, d}, rng);
        Tensor masks = trial % 2 ? uniform({n_p, h * w}, rng, 0, 1) : uniform({h * w}, rng, 0, 1);
        SuppressionConfig cfg;
        cfg.enabled = trial % 3 != 0;
        Tensor got = semantic_transfer(prompts, x, masks, p, h, w, cfg);
        const auto want = oracle::transfer(prompts, x, masks, p, h, w, cfg.enabled);
        ASSERT_EQ(got.numel(), want.size());
        for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.at(i), want[i], 1e-6);
    }
}

TEST(SemanticTransfer, OneHotMaskPoolsThatToken) {
    std::mt19937_64 rng(25);
    const std::size_t d = 6, h = 4, w = 4;
    ParamStore store;
    TransferParams p = TransferParams::make(store, "t", d, rng);
    for (auto* t : {&p.proj.fc2.weight, &p.proj.fc2.bias})
        for (auto& v : t->data()) v = 0;  // proj == 0
    Tensor prompts = uniform({2, d}, rng, -0.3, 0.3), x = uniform({h * w, d}, rng, -0.3, 0.3);
    Tensor masks({2, h * w}, Scalar(0));
    masks.data()[5] = 1;
    masks.data()[h * w + 11] = 1;
    SuppressionConfig off;
    off.enabled = false;
    Tensor y = semantic_transfer(prompts, x, masks, p, h, w, off);
    Tensor xv = matmul(x, p.w_v);
    for (std::size_t t = 0; t < d; ++t) {
        EXPECT_NEAR(y.at(t), xv.at(5 * d + t), 2e-2);
        EXPECT_NEAR(y.at(d + t), xv.at(11 * d + t), 2e-2);
    }
}

// With logits in [-3, 3], at least 99% of attention lands on tokens whose
// mask exceeds 0.01, provided the masked-in region is not tiny relative to
// the masked-out one.
TEST(SemanticTransfer, MaskAttenuatesOutsideTokens) {
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 64;
        Tensor a = uniform({1, n}, rng, -3, 3);
        Tensor m({1, n}, Scalar(0));
        for (std::size_t j = 0; j < n; ++j)
            if (j % 2 == 0) m.data()[j] = Scalar(0.5 + 0.5 * double(rng() % 100) / 100.0);
        Tensor s = softmax_lastdim(add(a, log_mask_bias(m)));
        double inside = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (m.at(j) > 0.01) inside += s.at(j);
        EXPECT_GE(inside, 0.99);
    }
}

TEST(SemanticTransfer, ShapeErrors) {
    std::mt19937_64 rng(27);
    ParamStore store;
    TransferParams p = TransferParams::make(store, "t", 4, rng);
    Tensor prompts({2, 4}), x({16, 4});
    EXPECT_THROW(semantic_transfer(prompts, x, Tensor({3, 16}), p, 4, 4, {}), DimensionError);
    EXPECT_THROW(semantic_transfer(prompts, x, Tensor({16}), p, 4, 3, {}), DimensionError);
    EXPECT_THROW(semantic_transfer(Tensor({2, 5}), x, Tensor({16}), p, 4, 4, {}), DimensionError);
}

TEST(SemanticTransfer, GradientsPassFiniteDifferences) {
    for (bool suppress : {true, false}) {
        std::mt19937_64 rng(28);
        ParamStore store;
        TransferParams p = TransferParams::make(store, "t", 6, rng);
        Tensor prompts = param({3, 6}, rng), x = param({16, 6}, rng);
        Tensor masks = uniform({3, 16}, rng, 0, 1);
        Tensor w = uniform({3, 6}, rng);
        SuppressionConfig cfg;
        cfg.top_k = 5;
        cfg.enabled = suppress;
        auto params = named({prompts, x});
        append(params, store.entries());
        auto r = finite_diff_check([&] { return probe(semantic_transfer(prompts, x, masks, p, 4, 4, cfg), w); }, params,
                                   GradCheckOptions{1e-5, 32, 0});
        EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
    }
}
