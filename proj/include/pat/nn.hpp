#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {
inline namespace PAT_ABI {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Ordered, uniquely named collection of trainable tensors.
class ParamStore {
   public:
    Tensor add(std::string name, Shape shape, std::vector<Scalar> init);
    Tensor add_zeros(std::string name, Shape shape);
    Tensor add_ones(std::string name, Shape shape);
    Tensor add_xavier(std::string name, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

    const std::vector<NamedTensor>& entries() const { return entries_; }
    const Tensor* find(const std::string& name) const;
    std::size_t size() const { return entries_.size(); }
    std::size_t numel() const;

    void zero_grad();
    // Copies values (not handles) from a store with identical names and shapes.
    void copy_values_from(const ParamStore& other);
    std::uint64_t fingerprint() const;

   private:
    std::vector<NamedTensor> entries_;
};

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear make(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const;
};

// Two-layer perceptron with GELU between the layers.
struct Mlp2 {
    Linear fc1;
    Linear fc2;

    static Mlp2 make(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                     std::size_t out, std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const;
};

}  // namespace PAT_ABI
}  // namespace pat
