#pragma once

// Explicit-loop reference implementations on plain row-major vectors.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pat/nn.hpp"
#include "pat/spt.hpp"

namespace pat::oracle {

using Mat = std::vector<double>;  // row-major

inline Mat copy(const Tensor& t) { return Mat(t.data().begin(), t.data().end()); }

inline Mat linear(const Mat& x, std::size_t rows, const Linear& l) {
    const std::size_t in = l.weight.dim(0), out = l.weight.dim(1);
    Mat y(rows * out);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) {
            double s = l.bias.at(o);
            for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * double(l.weight.at(i * out + o));
            y[r * out + o] = s;
        }
    return y;
}

inline Mat mlp2(const Mat& x, std::size_t rows, const Mlp2& m) {
    Mat h = linear(x, rows, m.fc1);
    for (auto& v : h) v = 0.5 * v * (1 + std::erf(v / std::sqrt(2.0)));
    return linear(h, rows, m.fc2);
}

inline Mat matmul(const Mat& a, const Mat& b, std::size_t m, std::size_t k, std::size_t n) {
    Mat c(m * n, 0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
    return c;
}

inline double cosine(const double* a, const double* b, std::size_t d) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < d; ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
    if (aa <= 1e-24 || bb <= 1e-24) return 0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// Top-K by value (ties to the lowest index), each replaced by the in-bounds
// normalized Gaussian average of the original row.
inline std::vector<double> suppress_row(const std::vector<double>& row, std::size_t h, std::size_t w, std::size_t k,
                                        long r, double sigma) {
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    std::vector<double> out = row;
    for (std::size_t t = 0; t < std::min(k, row.size()); ++t) {
        const long u = long(order[t] / w), v = long(order[t] % w);
        double num = 0, den = 0;
        for (long m = -r; m <= r; ++m)
            for (long n = -r; n <= r; ++n) {
                const long y = u - m, x = v - n;
                if (y < 0 || x < 0 || y >= long(h) || x >= long(w)) continue;
                const double g = std::exp(-double(m * m + n * n) / (2 * sigma * sigma));
                num += g * row[std::size_t(y) * w + std::size_t(x)];
                den += g;
            }
        out[order[t]] = num / den;
    }
    return out;
}

// Mask-biased cross-attention from prompts to tokens, optional suppression,
// then the residual projection.
inline Mat transfer(const Tensor& prompts, const Tensor& x, const Tensor& masks, const TransferParams& p,
                    std::size_t h, std::size_t w, bool suppress) {
    const std::size_t n_p = prompts.dim(0), n_l = x.dim(0), d = x.dim(1);
    const Mat q = matmul(copy(prompts), copy(p.w_q), n_p, d, d);
    const Mat k = matmul(copy(x), copy(p.w_k), n_l, d, d);
    const Mat v = matmul(copy(x), copy(p.w_v), n_l, d, d);
    Mat y(n_p * d, 0);
    for (std::size_t i = 0; i < n_p; ++i) {
        std::vector<double> row(n_l);
        for (std::size_t j = 0; j < n_l; ++j) {
            double s = 0;
            for (std::size_t t = 0; t < d; ++t) s += q[i * d + t] * k[j * d + t];
            const double m = masks.rank() == 1 ? masks.at(j) : masks.at(i * n_l + j);
            row[j] = s / std::sqrt(double(d)) + std::log10(m + 1e-7);
        }
        if (suppress) row = suppress_row(row, h, w, 15, 5, 2.0);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0;
        for (double& r : row) z += (r = std::exp(r - mx));
        for (std::size_t j = 0; j < n_l; ++j)
            for (std::size_t t = 0; t < d; ++t) y[i * d + t] += row[j] / z * v[j * d + t];
    }
    const Mat f = mlp2(y, n_p, p.proj);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += f[i];
    return y;
}

// Temperature-scaled [cos(x, b), max_k cos(x, p_k)] per token.
inline Mat match(const Tensor& x, const Tensor& p, const Tensor& b, double temperature) {
    const std::size_t n = x.dim(0), n_p = p.dim(0), d = x.dim(1);
    const Mat xs = copy(x), ps = copy(p), bs = copy(b);
    Mat out(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -2;
        for (std::size_t k = 0; k < n_p; ++k) best = std::max(best, cosine(&xs[i * d], &ps[k * d], d));
        out[2 * i] = temperature * cosine(&xs[i * d], bs.data(), d);
        out[2 * i + 1] = temperature * best;
    }
    return out;
}

// Mean off-diagonal cosine between part masks, over both streams.
inline double part_regularization(const Tensor& mq, const Tensor& ms) {
    const std::size_t n_p = mq.dim(0), n_l = mq.dim(1);
    double s = 0;
    for (const Tensor* m : {&mq, &ms}) {
        const Mat v = copy(*m);
        for (std::size_t i = 0; i < n_p; ++i)
            for (std::size_t j = 0; j < n_p; ++j)
                if (i != j) s += cosine(&v[i * n_l], &v[j * n_l], n_l);
    }
    return s / double(2 * n_p * (n_p - 1));
}

// sigmoid(sum_j cos(xq_i, xs_j) m_j), the sum optionally divided by the mask mass.
inline Mat pseudo_mask(const Tensor& xq, const Tensor& xs, const Tensor& m, bool normalize) {
    const std::size_t nq = xq.dim(0), ns = xs.dim(0), d = xq.dim(1);
    const Mat q = copy(xq), s = copy(xs), mm = copy(m);
    double mass = 0;
    for (double v : mm) mass += v;
    Mat out(nq);
    for (std::size_t i = 0; i < nq; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < ns; ++j) acc += cosine(&q[i * d], &s[j * d], d) * mm[j];
        if (normalize) acc /= mass + 1e-6;
        out[i] = 1 / (1 + std::exp(-acc));
    }
    return out;
}

}  // namespace pat::oracle
