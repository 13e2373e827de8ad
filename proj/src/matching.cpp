#include "pat/matching.hpp"

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

MatchParams MatchParams::make(ParamStore& store) {
    MatchParams m;
    m.lambda_raw = store.add_zeros("match.lambda", {1});
    return m;
}

FusedPrompts fuse_prompts(const Tensor& p_q, const Tensor& p_s, const Tensor& b_final, const Tensor& lambda) {
    if (p_q.shape() != p_s.shape()) {
        throw DimensionError("fuse_prompts: " + shape_str(p_q.shape()) + " vs " + shape_str(p_s.shape()));
    }
    if (lambda.numel() != 1) throw DimensionError("fuse_prompts: lambda must be a single value");
    FusedPrompts f;
    f.p_bar = add(p_s, mul(sub(p_q, p_s), lambda));
    f.b_bar = reshape(mean_axis(b_final, 0), {1, b_final.dim(1)});
    return f;
}

Tensor match_predict(const Tensor& x_q, const Tensor& p_bar, const Tensor& b_bar, double temperature) {
    if (!(temperature > 0)) throw ConfigError("match_predict: temperature must be positive");
    const std::size_t n_l = x_q.dim(0);
    Tensor b = b_bar.rank() == 1 ? reshape(b_bar, {1, b_bar.dim(0)}) : b_bar;
    Tensor bg = cosine_similarity(x_q, b);  // [N_l, 1]
    Tensor fg = reshape(max_lastdim(cosine_similarity(x_q, p_bar)).values, {n_l, 1});
    return scale(concat({bg, fg}, 1), Scalar(temperature));
}

Tensor part_similarity(const Tensor& masks) {
    const std::size_t n = masks.dim(0);
    if (n < 2) return Tensor::scalar(0);
    Tensor c = cosine_similarity(masks, masks);
    std::vector<std::vector<std::size_t>> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = {i};
    Tensor off = sub(sum(c), sum(gather_lastdim(c, diag)));
    return scale(off, Scalar(1.0 / double(n * (n - 1))));
}

Tensor part_regularization_loss(const Tensor& masks_q, const Tensor& masks_s) {
    return scale(add(part_similarity(masks_q), part_similarity(masks_s)), Scalar(0.5));
}

Tensor masked_average(const Tensor& x, const Tensor& mask) {
    if (mask.numel() != x.dim(0)) throw DimensionError("masked_average: mask size differs from token count");
    double mass = 0;
    for (Scalar v : mask.data()) mass += v;
    if (mass <= 1e-12) return Tensor({1, x.dim(1)}, Scalar(0));
    // The normalizer is a constant: loss masks are GT or detached pseudo-masks.
    return scale(matmul(reshape(mask, {1, mask.numel()}), x), Scalar(1.0 / mass));
}

Tensor prompt_contrast_loss(const Tensor& p, const Tensor& b, const Tensor& x, const Tensor& fg_mask,
                            const Tensor& bg_mask) {
    const std::size_t d = x.dim(1);
    Tensor p_hat = reshape(mean_axis(p, 0), {1, d});
    Tensor b_hat = reshape(mean_axis(b, 0), {1, d});
    Tensor w_f = masked_average(x, fg_mask);
    Tensor w_b = masked_average(x, bg_mask);
    auto e = [](const Tensor& u, const Tensor& v) { return exp(cosine_similarity(u, v)); };
    Tensor num = add(e(p_hat, w_f), e(b_hat, w_b));
    Tensor den = add(add(e(p_hat, b_hat), e(p_hat, w_b)), e(b_hat, w_f));
    return reshape(sub(log(den), log(num)), {1});
}

LossTerms total_loss(const Tensor& logits, std::span<const int> gt, const Tensor& reg, const Tensor& dis, double alpha,
                     double beta) {
    LossTerms t;
    t.ce = cross_entropy(logits, gt);
    t.reg = reg;
    t.dis = dis;
    t.total = t.ce;
    if (reg.defined() && alpha != 0) t.total = add(t.total, scale(reshape(reg, {1}), Scalar(alpha)));
    if (dis.defined() && beta != 0) t.total = add(t.total, scale(reshape(dis, {1}), Scalar(beta)));
    return t;
}

ZeroShotHead ZeroShotHead::make(ParamStore& store, std::size_t d, std::mt19937_64& rng) {
    ZeroShotHead h;
    h.conv1 = Linear::make(store, "zeroshot.conv1", d + 1, d, rng);
    h.conv2 = Linear::make(store, "zeroshot.conv2", d, 2, rng);
    return h;
}

Tensor zeroshot_predict(const Tensor& x_q, const Tensor& fg_prompts, const ZeroShotHead& head) {
    const std::size_t n_l = x_q.dim(0);
    Tensor score = reshape(max_lastdim(cosine_similarity(x_q, fg_prompts)).values, {n_l, 1});
    return head.conv2(gelu(head.conv1(concat({score, x_q}, 1))));
}

std::vector<int> predict_labels(const Tensor& logits) {
    auto idx = argmax_lastdim(logits);
    return std::vector<int>(idx.begin(), idx.end());
}

}  // namespace PAT_ABI
}  // namespace pat
