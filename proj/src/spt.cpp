#include "pat/spt.hpp"

#include <cmath>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

void SuppressionConfig::validate() const {
    if (top_k < 1) throw ConfigError("suppression: top_k must be >= 1");
    if (radius < 1) throw ConfigError("suppression: radius must be >= 1");
    if (!(sigma > 0)) throw ConfigError("suppression: sigma must be positive");
}

TransferParams TransferParams::make(ParamStore& store, const std::string& name, std::size_t d, std::mt19937_64& rng) {
    TransferParams p;
    p.w_q = store.add_xavier(name + ".w_q", d, d, rng);
    p.w_k = store.add_xavier(name + ".w_k", d, d, rng);
    p.w_v = store.add_xavier(name + ".w_v", d, d, rng);
    p.proj = Mlp2::make(store, name + ".proj", d, d, d, rng);
    return p;
}

Tensor log_mask_bias(const Tensor& mask, LogBase base, double eps) {
    Tensor shifted = add_scalar(mask, Scalar(eps));
    return base == LogBase::Ten ? log10(shifted) : log(shifted);
}

std::vector<double> gaussian_window(std::size_t radius, double sigma) {
    const long r = long(radius);
    const std::size_t w = 2 * radius + 1;
    std::vector<double> k(w * w);
    const double norm = 1.0 / (2.0 * M_PI * sigma * sigma);
    for (long m = -r; m <= r; ++m)
        for (long n = -r; n <= r; ++n)
            k[std::size_t((m + r) * long(w) + (n + r))] = norm * std::exp(-double(m * m + n * n) / (2 * sigma * sigma));
    return k;
}

namespace {

// Index/weight lists for one suppressed position, weights already normalized.
struct Stencil {
    std::size_t target;
    std::vector<std::size_t> src;
    std::vector<Scalar> weight;
};

}  // namespace

Tensor gaussian_suppress(const Tensor& logits, std::size_t height, std::size_t width, const SuppressionConfig& cfg) {
    if (logits.rank() != 2 || logits.dim(1) != height * width) {
        throw DimensionError("gaussian_suppress: logits " + shape_str(logits.shape()) + " do not match grid " +
                             std::to_string(height) + "x" + std::to_string(width));
    }
    cfg.validate();
    if (!cfg.enabled) return logits;
    const std::size_t rows = logits.dim(0), n = logits.dim(1);
    const std::size_t k = std::min(cfg.top_k, n);
    const long r = long(cfg.radius), span = 2 * r + 1;
    const std::vector<double> kernel = gaussian_window(cfg.radius, cfg.sigma);

    auto in = logits.data();
    std::vector<Scalar> out(in.begin(), in.end());
    std::vector<std::vector<Stencil>> stencils(rows);
    for (std::size_t row = 0; row < rows; ++row) {
        std::span<const Scalar> vals = in.subspan(row * n, n);
        for (std::size_t pos : topk_indices(vals, k)) {
            const long u = long(pos / width), v = long(pos % width);
            Stencil s;
            s.target = pos;
            double total = 0;
            for (long m = -r; m <= r; ++m)
                for (long c = -r; c <= r; ++c) {
                    const long y = u - m, x = v - c;
                    if (y < 0 || x < 0 || y >= long(height) || x >= long(width)) continue;
                    const double w = kernel[std::size_t((m + r) * span + (c + r))];
                    s.src.push_back(std::size_t(y) * width + std::size_t(x));
                    s.weight.push_back(Scalar(w));
                    total += w;
                }
            // Offsets from the centre keep constant windows bit-exact.
            const double centre = double(vals[pos]);
            double acc = 0;
            for (std::size_t i = 0; i < s.src.size(); ++i) {
                const double w = double(s.weight[i]) / total;
                s.weight[i] = Scalar(w);
                acc += w * (double(vals[s.src[i]]) - centre);
            }
            out[row * n + pos] = Scalar(centre + acc);
            stencils[row].push_back(std::move(s));
        }
    }
    TensorImpl* pl = logits.impl();
    return make_op_result("gaussian_suppress", logits.shape(), std::move(out), {logits},
                          [pl, rows, n, stencils = std::move(stencils)](TensorImpl& o) {
                              if (!pl->requires_grad) return;
                              auto g = pl->grad_buffer();
                              for (std::size_t row = 0; row < rows; ++row) {
                                  const Scalar* go = o.grad.data() + row * n;
                                  Scalar* gi = g.data() + row * n;
                                  std::vector<bool> replaced(n, false);
                                  for (const auto& s : stencils[row]) replaced[s.target] = true;
                                  for (std::size_t j = 0; j < n; ++j)
                                      if (!replaced[j]) gi[j] += go[j];
                                  for (const auto& s : stencils[row])
                                      for (std::size_t i = 0; i < s.src.size(); ++i) gi[s.src[i]] += go[s.target] * s.weight[i];
                              }
                          });
}

Tensor semantic_transfer(const Tensor& prompts, const Tensor& x, const Tensor& masks, const TransferParams& params,
                         std::size_t height, std::size_t width, const SuppressionConfig& cfg, LogBase base) {
    if (prompts.rank() != 2 || x.rank() != 2 || prompts.dim(1) != x.dim(1)) {
        throw DimensionError("semantic_transfer: prompts " + shape_str(prompts.shape()) + " vs tokens " +
                             shape_str(x.shape()));
    }
    const std::size_t n_p = prompts.dim(0), n_l = x.dim(0), d = x.dim(1);
    if (n_l != height * width) throw DimensionError("semantic_transfer: N_l does not match the grid");
    const bool shared = masks.rank() == 1;
    if ((shared && masks.dim(0) != n_l) || (!shared && (masks.rank() != 2 || masks.dim(0) != n_p || masks.dim(1) != n_l))) {
        throw DimensionError("semantic_transfer: masks " + shape_str(masks.shape()) + " do not match [" +
                             std::to_string(n_p) + ", " + std::to_string(n_l) + "]");
    }
    Tensor q = matmul(prompts, params.w_q);
    Tensor k = matmul(x, params.w_k);
    Tensor v = matmul(x, params.w_v);
    Tensor a = add(scale(matmul_nt(q, k), Scalar(1.0 / std::sqrt(double(d)))), log_mask_bias(masks, base));
    if (cfg.enabled) a = gaussian_suppress(a, height, width, cfg);
    Tensor y = matmul(softmax_lastdim(a), v);
    return add(y, params.proj(y));
}

}  // namespace PAT_ABI
}  // namespace pat
