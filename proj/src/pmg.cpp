#include "pat/pmg.hpp"

#include <atomic>
#include <cmath>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

namespace {
std::atomic<std::size_t> g_checks{0};
}

PartFilterLearner PartFilterLearner::make(ParamStore& store, std::size_t n_parts, std::size_t d,
                                          std::mt19937_64& rng) {
    PartFilterLearner l;
    for (std::size_t i = 0; i < n_parts; ++i)
        l.g.push_back(Mlp2::make(store, "pmg.g" + std::to_string(i), d, d, d, rng));
    return l;
}

Tensor learn_part_filters(const Tensor& prompts, const PartFilterLearner& learner) {
    if (prompts.rank() != 2) throw DimensionError("learn_part_filters: prompts must be [N_p, d]");
    if (prompts.dim(0) != learner.size()) {
        throw ConfigError("learn_part_filters: " + std::to_string(prompts.dim(0)) + " prompts for " +
                          std::to_string(learner.size()) + " part learners");
    }
    std::vector<Tensor> rows;
    rows.reserve(learner.size());
    for (std::size_t i = 0; i < learner.size(); ++i) {
        Tensor p = slice(prompts, 0, i, i + 1);
        rows.push_back(add(p, learner.g[i](p)));
    }
    return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

std::size_t part_mask_checks() { return g_checks.load(); }

bool part_mask_checks_enabled() {
#ifdef PAT_RUNTIME_CHECKS
    return true;
#else
    return false;
#endif
}

PartMaskSet generate_part_masks(const Tensor& x, const Tensor& filters, const Tensor& fg_mask) {
    if (x.rank() != 2 || filters.rank() != 2 || x.dim(1) != filters.dim(1)) {
        throw DimensionError("generate_part_masks: x " + shape_str(x.shape()) + " vs filters " +
                             shape_str(filters.shape()));
    }
    if (fg_mask.numel() != x.dim(0)) throw DimensionError("generate_part_masks: fg_mask size differs from N_l");
    const std::size_t n_p = filters.dim(0), n_l = x.dim(0);
    Tensor act = matmul_nt(x, filters);                   // [N_l, N_p]
    Tensor probs = transpose(softmax_lastdim(act));       // [N_p, N_l]
    Tensor fg = fg_mask.rank() == 1 ? fg_mask : reshape(fg_mask, {n_l});
    PartMaskSet out;
    out.masks = mul(probs, fg);
    out.fg_mask = fg;
    out.degenerate = true;
    for (Scalar v : fg.data())
        if (v != Scalar(0)) out.degenerate = false;
#ifdef PAT_RUNTIME_CHECKS
    auto m = out.masks.data();
    auto f = fg.data();
    for (std::size_t j = 0; j < n_l; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < n_p; ++i) s += m[i * n_l + j];
        if (std::abs(s - double(f[j])) > 1e-5) {
            throw NumericError("part masks do not sum to the foreground mask at token " + std::to_string(j) + ": " +
                               std::to_string(s) + " vs " + std::to_string(f[j]));
        }
    }
    g_checks.fetch_add(1);
#else
    (void)n_p;
#endif
    return out;
}

Tensor pseudo_query_mask(const Tensor& x_q, const Tensor& x_s, const Tensor& m_s, bool normalize) {
    if (m_s.numel() != x_s.dim(0)) throw DimensionError("pseudo_query_mask: support mask size differs from N_l");
    return detached([&] {
        Tensor a = cosine_similarity(x_q.detach(), x_s.detach());  // [N_q, N_s]
        Tensor score = matmul(a, reshape(m_s.detach(), {m_s.numel(), 1}));
        if (normalize) {
            double mass = 0;
            for (Scalar v : m_s.data()) mass += v;
            score = scale(score, Scalar(1.0 / (mass + 1e-6)));
        }
        return reshape(sigmoid(score), {x_q.dim(0)});
    });
}

}  // namespace PAT_ABI
}  // namespace pat
