#include "pat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

namespace {

double evaluate(const ScalarFn& f, DetachedTape& tape) {
    NoGradGuard guard;
    tape.set_mode(DetachedTape::Mode::Replay);
    DetachedTapeScope scope(&tape);
    Tensor v = f();
    const double x = double(v.item());
    if (!std::isfinite(x)) throw NumericError("finite_diff_check: objective is not finite");
    return x;
}

GradCheckResult check_against(const ScalarFn& f, const std::vector<NamedTensor>& params,
                              const std::vector<std::vector<Scalar>>& analytic, const GradCheckOptions& opts,
                              DetachedTape& tape) {
    if (analytic.size() != params.size()) throw ContractError("finite_diff_check: one gradient per parameter");
    std::mt19937_64 rng(opts.seed);
    GradCheckResult result;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor p = params[t].tensor;
        if (analytic[t].size() != p.numel()) throw ContractError("finite_diff_check: gradient size mismatch");
        std::vector<std::size_t> coords(p.numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > opts.coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.coords_per_tensor);
            std::sort(coords.begin(), coords.end());
        }
        GradCheckGroup group{params[t].name, coords.size(), 0.0};
        auto data = p.data();
        for (std::size_t c : coords) {
            const Scalar saved = data[c];
            data[c] = Scalar(double(saved) + opts.step);
            const double up = evaluate(f, tape);
            data[c] = Scalar(double(saved) - opts.step);
            const double down = evaluate(f, tape);
            data[c] = saved;
            const double numeric = (up - down) / (2.0 * opts.step);
            const double a = double(analytic[t][c]);
            const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8);
            group.max_rel_error = std::max(group.max_rel_error, rel);
            if (result.worst.empty() || rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = params[t].name + "[" + std::to_string(c) + "]";
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
        result.coords += coords.size();
        result.groups.push_back(group);
    }
    return result;
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                  const GradCheckOptions& opts) {
    std::vector<NamedTensor> ps = params;
    for (auto& p : ps) p.tensor.zero_grad();
    DetachedTape tape(DetachedTape::Mode::Record);
    Tensor loss;
    {
        DetachedTapeScope scope(&tape);
        loss = f();
    }
    if (!std::isfinite(double(loss.item()))) throw NumericError("finite_diff_check: objective is not finite");
    backward(loss);
    std::vector<std::vector<Scalar>> analytic;
    for (auto& p : ps) {
        if (p.tensor.has_grad()) {
            analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
        } else {
            analytic.emplace_back(p.tensor.numel(), Scalar(0));
        }
    }
    return check_against(f, params, analytic, opts, tape);
}

GradCheckResult finite_diff_check(const ScalarFn& f, const std::vector<NamedTensor>& params,
                                  const std::vector<std::vector<Scalar>>& analytic, const GradCheckOptions& opts) {
    DetachedTape tape(DetachedTape::Mode::Record);
    {
        NoGradGuard guard;
        DetachedTapeScope scope(&tape);
        f();
    }
    return check_against(f, params, analytic, opts, tape);
}

}  // namespace PAT_ABI
}  // namespace pat
