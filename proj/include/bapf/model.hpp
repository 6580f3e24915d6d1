#pragma once

#include <string>
#include <vector>

#include "bapf/ba_layer.hpp"
#include "bapf/params.hpp"
#include "bapf/tensor.hpp"

namespace bapf {

struct Ablation {
    bool use_ba = true;
    bool use_pf = true;
    bool use_se = true;
    bool use_nonlocal = false;  // replaces BA at the same place
    bool use_value = true;
    bool use_distance = true;

    /// Applies one `key=value` override (keys are the field names; values
    /// true/false/1/0).
    void apply(const std::string& assignment);
    std::string describe() const;
};

struct GeneratorArch {
    int64_t input_size = 64;
    int64_t base_channels = 16;
    int depth = 5;     // input_size / 2^depth == 2
    int ba_level = 3;  // encoder level at input_size / 8
    int64_t se_reduction = 4;
    Ablation ablation;

    static GeneratorArch make(int64_t input_size, int64_t base_channels, const Ablation& ablation = {});
    void validate() const;

    /// Channels of encoder level k (1-based): base * 2^(k-1), capped at 8 * base.
    int64_t channels(int level) const;
    int64_t level_size(int level) const { return input_size >> level; }
    BAConfig ba_config() const;
    /// Encoder levels covered by the filling block, deepest first.
    std::vector<int> pf_levels() const;
};

/// s = sigmoid(W2 relu(W1 gap(x))), output x * s per channel.
template <typename T>
Tensor<T> se_forward(const Tensor<T>& x, const ModelParams<T>& params, const std::string& prefix = "se");

template <typename T>
void init_se_params(ModelParams<T>& params, const std::string& prefix, int64_t channels, int64_t reduction, Rng& rng);

/// Image with holes zeroed, stacked with the hole mask: [4,H,W].
template <typename T>
Tensor<T> generator_input(const Tensor<T>& image, const Tensor<T>& hole_mask);

/// Encoder features, index k - 1 holding level k.
template <typename T>
std::vector<Tensor<T>> generator_encode(const Tensor<T>& input, const GeneratorArch& arch, const ModelParams<T>& params);

/// Decoder over (possibly transformed) skip features; returns the tanh image.
template <typename T>
Tensor<T> generator_decode(const std::vector<Tensor<T>>& skips, const GeneratorArch& arch, const ModelParams<T>& params);

/// Intermediate maps exposed for debug dumps.
template <typename T>
struct ForwardTrace {
    std::vector<Tensor<T>> pf_pconv_vmasks;  // deepest first
    std::vector<int> pf_levels;
    Tensor<T> ba_weights;  // value-step weights at the BA level, [H*W, k*k]
    int64_t ba_size = 0;
    bool pf_degenerate = false;
};

template <typename T>
Tensor<T> generator_forward(const Tensor<T>& image, const Tensor<T>& hole_mask, const GeneratorArch& arch,
                            const ModelParams<T>& params, Stage stage, ForwardTrace<T>* trace = nullptr);

/// Shared encoder/decoder weights.
template <typename T>
void init_generator_shared(ModelParams<T>& params, const GeneratorArch& arch, Rng& rng);

/// PF, SE and BA (or non-local) weights used only by the texture stage.
template <typename T>
void init_generator_texture(ModelParams<T>& params, const GeneratorArch& arch, Rng& rng);

/// Parameters belonging to the generator (everything except discriminators).
template <typename T>
int64_t generator_param_count(const ModelParams<T>& params);

bool is_shared_param(const std::string& name);
bool is_discriminator_param(const std::string& name);

/// Copies every shared tensor of a structure-stage set and freshly
/// initializes the texture-only modules. Discriminators are not carried over.
template <typename T>
ModelParams<T> init_from_stage1(const ModelParams<T>& stage1, const GeneratorArch& arch, Rng& rng);

/// Recovers the architecture of a stored generator; `input_size` comes from
/// the data. Value/distance flags cannot be told apart when only one is on,
/// so they are taken from `hint`.
template <typename T>
GeneratorArch arch_from_params(const ModelParams<T>& params, int64_t input_size, const Ablation& hint = {});

enum class DiscKind { Patch, FeaturePatch };

std::string disc_prefix(DiscKind kind);

/// Stride-2 4×4 convs, LeakyReLU(0.2) between them, a 1-channel raw score
/// map at the end. Layer count is read from the parameters.
template <typename T>
Tensor<T> discriminator_forward(DiscKind kind, const Tensor<T>& x, const ModelParams<T>& params);

/// `layers` convs: in -> base -> 2 base ... -> 1.
template <typename T>
void init_discriminator(ModelParams<T>& params, DiscKind kind, int64_t in_channels, int64_t base, int layers, Rng& rng);

}  // namespace bapf
