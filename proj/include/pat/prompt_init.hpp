#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "pat/nn.hpp"

namespace pat {
inline namespace PAT_ABI {

// Source of class-name text embeddings. Stub mode hashes the name into a
// unit-norm pseudo-random vector; file mode serves vectors loaded from disk.
class EmbeddingProvider {
   public:
    enum class Mode { Stub, File };

    static EmbeddingProvider stub(std::size_t dim = 64);
    // First line "d=<dim>", then "<name> v1 ... v<dim>" per line.
    static EmbeddingProvider from_file(const std::string& path);

    Mode mode() const { return mode_; }
    std::size_t dim() const { return dim_; }
    std::vector<Scalar> embed(const std::string& class_name) const;

   private:
    Mode mode_ = Mode::Stub;
    std::size_t dim_ = 64;
    std::map<std::string, std::vector<Scalar>> table_;
};

enum class PromptInitMode { Text, Random, SupportAverage };

struct PromptParams {
    Tensor seeds;   // t_i: [N_p, d]
    Mlp2 align;     // text dim -> 2d -> d
    Tensor bg_init; // [N_b, d]

    std::size_t n_fg() const { return seeds.defined() ? seeds.dim(0) : 0; }
    std::size_t n_bg() const { return bg_init.defined() ? bg_init.dim(0) : 0; }

    static PromptParams make(ParamStore& store, std::size_t n_fg, std::size_t n_bg, std::size_t text_dim,
                             std::size_t d, std::mt19937_64& rng);
};

struct InitialPrompts {
    Tensor fg;  // [N_p, d]
    Tensor bg;  // [N_b, d]; undefined when BG prompts are off
};

// FG prompts p_i = align(embed(class_name)) + t_i; BG prompts are the learned
// initial values. Random mode drops the text term; SupportAverage replaces it
// with `support_average` ([d], masked mean of support tokens).
InitialPrompts init_prompts(const std::string& class_name, const EmbeddingProvider& provider,
                            const PromptParams& params, PromptInitMode mode = PromptInitMode::Text,
                            bool with_bg = true, const Tensor& support_average = {});

// Mapped text vector align(embed(name)) as a [d] tensor.
Tensor text_prompt(const std::string& class_name, const EmbeddingProvider& provider, const PromptParams& params);

}  // namespace PAT_ABI
}  // namespace pat
