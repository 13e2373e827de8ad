#include "pat/prompt_init.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

EmbeddingProvider EmbeddingProvider::stub(std::size_t dim) {
    if (dim == 0) throw ConfigError("embedding: dim must be positive");
    EmbeddingProvider p;
    p.mode_ = Mode::Stub;
    p.dim_ = dim;
    return p;
}

EmbeddingProvider EmbeddingProvider::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open embedding file");
    EmbeddingProvider p;
    p.mode_ = Mode::File;
    std::string line;
    std::size_t offset = 0;
    if (!std::getline(in, line) || line.rfind("d=", 0) != 0) throw ParseError(path, 0, "expected header 'd=<dim>'");
    try {
        p.dim_ = std::stoul(line.substr(2));
    } catch (const std::exception&) {
        throw ParseError(path, 2, "bad dimension in header");
    }
    if (p.dim_ == 0) throw ParseError(path, 2, "dimension must be positive");
    offset += line.size() + 1;
    while (std::getline(in, line)) {
        const std::size_t start = offset;
        offset += line.size() + 1;
        std::istringstream ls(line);
        std::string name;
        if (!(ls >> name)) continue;
        std::vector<Scalar> v;
        double x;
        while (ls >> x) v.push_back(Scalar(x));
        if (!ls.eof()) throw ParseError(path, start, "non-numeric value for '" + name + "'");
        if (v.size() != p.dim_) {
            throw ParseError(path, start,
                             "'" + name + "' has " + std::to_string(v.size()) + " values, expected " +
                                 std::to_string(p.dim_));
        }
        p.table_[name] = std::move(v);
    }
    return p;
}

std::vector<Scalar> EmbeddingProvider::embed(const std::string& class_name) const {
    if (mode_ == Mode::File) {
        auto it = table_.find(class_name);
        if (it == table_.end()) {
            std::string known;
            for (const auto& [k, v] : table_) known += (known.empty() ? "" : ", ") + k;
            throw LookupError("no embedding for '" + class_name + "' (known: " + known + ")");
        }
        return it->second;
    }
    // Box-Muller on raw mt19937_64 output keeps the stub identical across standard libraries.
    std::mt19937_64 rng(fnv1a(class_name));
    auto unit = [&rng] { return (double(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0); };
    std::vector<double> v(dim_);
    for (std::size_t i = 0; i < dim_; i += 2) {
        const double r = std::sqrt(-2.0 * std::log(unit()));
        const double t = 2.0 * M_PI * unit();
        v[i] = r * std::cos(t);
        if (i + 1 < dim_) v[i + 1] = r * std::sin(t);
    }
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    std::vector<Scalar> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = Scalar(v[i] / n);
    return out;
}

PromptParams PromptParams::make(ParamStore& store, std::size_t n_fg, std::size_t n_bg, std::size_t text_dim,
                                std::size_t d, std::mt19937_64& rng) {
    PromptParams p;
    if (n_fg > 0) p.seeds = store.add("prompt.seeds", {n_fg, d}, xavier_uniform(n_fg, d, n_fg * d, rng));
    p.align = Mlp2::make(store, "prompt.align", text_dim, 2 * d, d, rng);
    if (n_bg > 0) p.bg_init = store.add("prompt.bg", {n_bg, d}, xavier_uniform(n_bg, d, n_bg * d, rng));
    return p;
}

Tensor text_prompt(const std::string& class_name, const EmbeddingProvider& provider, const PromptParams& params) {
    const std::size_t in = params.align.fc1.weight.dim(0);
    if (provider.dim() != in) {
        throw ConfigError("prompt init: text embedding dim " + std::to_string(provider.dim()) +
                          " does not match alignment MLP input " + std::to_string(in));
    }
    Tensor e({1, provider.dim()}, provider.embed(class_name));
    Tensor m = params.align(e);
    return reshape(m, {m.dim(1)});
}

InitialPrompts init_prompts(const std::string& class_name, const EmbeddingProvider& provider,
                            const PromptParams& params, PromptInitMode mode, bool with_bg,
                            const Tensor& support_average) {
    InitialPrompts out;
    if (params.n_fg() > 0) {
        const std::size_t d = params.seeds.dim(1);
        switch (mode) {
            case PromptInitMode::Text: {
                Tensor m = text_prompt(class_name, provider, params);
                if (m.numel() != d) {
                    throw ConfigError("prompt init: alignment MLP outputs " + std::to_string(m.numel()) +
                                      " values, prompts have d=" + std::to_string(d));
                }
                out.fg = add(params.seeds, m);
                break;
            }
            case PromptInitMode::Random:
                out.fg = params.seeds;
                break;
            case PromptInitMode::SupportAverage:
                if (!support_average.defined() || support_average.numel() != d) {
                    throw ContractError("prompt init: support-average mode needs a [d] support mean");
                }
                out.fg = add(params.seeds, support_average);
                break;
        }
    }
    if (with_bg && params.n_bg() > 0) out.bg = params.bg_init;
    return out;
}

}  // namespace PAT_ABI
}  // namespace pat
