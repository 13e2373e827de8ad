#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "../oracles.hpp"
#include "pat/matching.hpp"
#include "pat/pmg.hpp"
#include "pat/spt.hpp"

namespace pat::accept {

namespace {

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<Scalar> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor(std::move(shape), std::move(v));
}

std::string fmt(const char* label, double value) {
    std::ostringstream os;
    os << label << value;
    return os.str();
}

}  // namespace

Outcome masked_softmax_factorization(int instances) {
    std::mt19937_64 rng(1001);
    double worst = 0;
    for (int t = 0; t < instances; ++t) {
        const std::size_t rows = 1 + rng() % 4, n = 2 + rng() % 60;
        Tensor a = uniform({rows, n}, rng, -5, 5), m = uniform({rows, n}, rng, 0, 1);
        for (auto& v : m.data())
            if (rng() % 4 == 0) v = 0;
        Tensor s = softmax_lastdim(add(a, log_mask_bias(m)));
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> f(n);
            double z = 0;
            for (std::size_t j = 0; j < n; ++j)
                z += f[j] = std::exp(a.at(r * n + j)) * std::pow(m.at(r * n + j) + kMaskEpsilon, 1 / std::log(10.0));
            for (std::size_t j = 0; j < n; ++j) worst = std::max(worst, std::abs(s.at(r * n + j) - f[j] / z));
        }
    }
    return {worst <= 1e-6, fmt("max abs diff ", worst)};
}

Outcome part_mask_normalization(int instances) {
    std::mt19937_64 rng(1002);
    double worst = 0;
    const std::size_t before = part_mask_checks();
    for (int t = 0; t < instances; ++t) {
        const std::size_t n_p = 1 + rng() % 8, n_l = 4 + rng() % 60, d = 2 + rng() % 16;
        Tensor fg = uniform({n_l}, rng, 0, 1);
        if (t % 5 == 0)
            for (auto& v : fg.data()) v = v > 0.5 ? 1 : 0;
        PartMaskSet s = generate_part_masks(uniform({n_l, d}, rng, -4, 4), uniform({n_p, d}, rng, -4, 4), fg);
        for (std::size_t j = 0; j < n_l; ++j) {
            double sum = 0;
            for (std::size_t i = 0; i < n_p; ++i) sum += s.masks.at(i * n_l + j);
            worst = std::max(worst, std::abs(sum - fg.at(j)));
        }
    }
    const bool counted = part_mask_checks_enabled() && part_mask_checks() == before + std::size_t(instances);
    return {worst <= 1e-5 && counted, fmt("max |sum - fg| ", worst) + (counted ? "" : ", runtime check not active")};
}

Outcome suppression_contract(int instances) {
    std::mt19937_64 rng(1003);
    SuppressionConfig cfg;
    std::size_t bad_rows = 0, rows_seen = 0;
    for (int t = 0; t < instances; ++t) {
        const std::size_t h = 4 + rng() % 10, w = 4 + rng() % 10, rows = 1 + rng() % 3, n = h * w;
        Tensor l = uniform({rows, n}, rng, -6, 6);
        if (t % 10 == 0)
            for (std::size_t j = 0; j < n; ++j) l.data()[j] = 1.5;
        Tensor out = gaussian_suppress(l, h, w, cfg);
        for (std::size_t r = 0; r < rows; ++r, ++rows_seen) {
            bool constant = true;
            for (std::size_t j = 1; j < n; ++j) constant = constant && l.at(r * n + j) == l.at(r * n);
            auto top = topk_indices(l.data().subspan(r * n, n), cfg.top_k);
            std::size_t changed = 0;
            bool ok = true;
            for (std::size_t j = 0; j < n; ++j) {
                const double before = l.at(r * n + j), after = out.at(r * n + j);
                const bool is_top = std::find(top.begin(), top.end(), j) != top.end();
                if (before != after) ++changed;
                if (!is_top) {
                    ok = ok && before == after;
                    continue;
                }
                double lo = 1e300, hi = -1e300;
                const long u = long(j / w), v = long(j % w), rad = long(cfg.radius);
                for (long dy = -rad; dy <= rad; ++dy)
                    for (long dx = -rad; dx <= rad; ++dx) {
                        const long y = u + dy, x = v + dx;
                        if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) continue;
                        const double val = l.at(r * n + std::size_t(y) * w + std::size_t(x));
                        lo = std::min(lo, val), hi = std::max(hi, val);
                    }
                ok = ok && after >= lo && after <= hi;
            }
            ok = ok && changed == (constant ? 0 : std::min(cfg.top_k, n));
            bad_rows += !ok;
        }
    }
    return {bad_rows == 0, std::to_string(bad_rows) + " of " + std::to_string(rows_seen) + " rows violate"};
}

Outcome loop_oracles(int instances) {
    std::mt19937_64 rng(1004);
    double transfer = 0, match = 0, reg = 0, pseudo = 0;
    for (int t = 0; t < instances; ++t) {
        const std::size_t d = 4 + rng() % 6, n_p = 1 + rng() % 5, h = 4 + rng() % 3, w = 4 + rng() % 3, n = h * w;
        ParamStore store;
        TransferParams p = TransferParams::make(store, "t", d, rng);
        Tensor prompts = uniform({n_p, d}, rng, -1, 1), x = uniform({n, d}, rng, -1, 1);
        Tensor masks = t % 2 ? uniform({n_p, n}, rng, 0, 1) : uniform({n}, rng, 0, 1);
        SuppressionConfig cfg;
        cfg.enabled = t % 3 != 0;
        cfg.top_k = std::min<std::size_t>(15, n);
        const auto want_t = oracle::transfer(prompts, x, masks, p, h, w, cfg.enabled);
        Tensor got_t = semantic_transfer(prompts, x, masks, p, h, w, cfg);
        for (std::size_t i = 0; i < want_t.size(); ++i) transfer = std::max(transfer, std::abs(got_t.at(i) - want_t[i]));

        Tensor b = uniform({1, d}, rng, -1, 1);
        const double temp = 1 + double(rng() % 30);
        const auto want_m = oracle::match(x, prompts, b, temp);
        Tensor got_m = match_predict(x, prompts, b, temp);
        for (std::size_t i = 0; i < want_m.size(); ++i) match = std::max(match, std::abs(got_m.at(i) - want_m[i]));

        const std::size_t parts = 2 + rng() % 4;
        Tensor mq = uniform({parts, n}, rng, 0, 1), ms = uniform({parts, n}, rng, 0, 1);
        reg = std::max(reg, std::abs(part_regularization_loss(mq, ms).item() - oracle::part_regularization(mq, ms)));

        Tensor xs = uniform({n + 3, d}, rng, -1, 1), ms1 = uniform({n + 3}, rng, 0, 1);
        const bool normalize = t % 2;
        const auto want_p = oracle::pseudo_mask(x, xs, ms1, normalize);
        Tensor got_p = pseudo_query_mask(x, xs, ms1, normalize);
        for (std::size_t i = 0; i < want_p.size(); ++i) pseudo = std::max(pseudo, std::abs(got_p.at(i) - want_p[i]));
    }
    std::ostringstream os;
    os << "max abs diff transfer " << transfer << ", match " << match << ", part_reg " << reg << ", pseudo " << pseudo;
    return {std::max({transfer, match, reg, pseudo}) <= 1e-6, os.str()};
}

}  // namespace pat::accept
