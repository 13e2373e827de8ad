#include "pat/nn.hpp"

#include <cstring>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

Tensor ParamStore::add(std::string name, Shape shape, std::vector<Scalar> init) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
    Tensor t = Tensor::parameter(std::move(shape), std::move(init));
    entries_.push_back({std::move(name), t});
    return t;
}

Tensor ParamStore::add_zeros(std::string name, Shape shape) {
    const std::size_t n = shape_numel(shape);
    return add(std::move(name), std::move(shape), std::vector<Scalar>(n, Scalar(0)));
}

Tensor ParamStore::add_ones(std::string name, Shape shape) {
    const std::size_t n = shape_numel(shape);
    return add(std::move(name), std::move(shape), std::vector<Scalar>(n, Scalar(1)));
}

Tensor ParamStore::add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    return add(std::move(name), {fan_in, fan_out}, xavier_uniform(fan_in, fan_out, fan_in * fan_out, rng));
}

const Tensor* ParamStore::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e.tensor;
    return nullptr;
}

std::size_t ParamStore::numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (other.entries_.size() != entries_.size()) throw ConfigError("parameter stores differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& dst = entries_[i];
        const auto& src = other.entries_[i];
        if (dst.name != src.name || dst.tensor.shape() != src.tensor.shape()) {
            throw ConfigError("parameter mismatch at '" + dst.name + "'");
        }
        auto d = dst.tensor.data();
        auto s = src.tensor.data();
        std::copy(s.begin(), s.end(), d.begin());
    }
}

std::uint64_t ParamStore::fingerprint() const {
    // FNV-1a over names and raw value bytes
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& e : entries_) {
        mix(e.name.data(), e.name.size());
        mix(e.tensor.data().data(), e.tensor.numel() * sizeof(Scalar));
    }
    return h;
}

Linear Linear::make(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                    std::mt19937_64& rng) {
    Linear l;
    l.weight = store.add_xavier(name + ".weight", in, out, rng);
    l.bias = store.add_zeros(name + ".bias", {out});
    return l;
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Mlp2 Mlp2::make(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                std::mt19937_64& rng) {
    return {Linear::make(store, name + ".fc1", in, hidden, rng), Linear::make(store, name + ".fc2", hidden, out, rng)};
}

Tensor Mlp2::operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }

}  // namespace PAT_ABI
}  // namespace pat
