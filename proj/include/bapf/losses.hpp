#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bapf/params.hpp"
#include "bapf/tensor.hpp"

namespace bapf {

struct LossWeights {
    double lambda_r = 1.0;
    double lambda_p = 0.1;
    double lambda_s = 250.0;
    double lambda_d = 0.2;

    void validate() const;
};

/// Frozen three-stage conv net standing in for a pretrained perceptual
/// network: 3x3 convs 3->8 (stride 1), 8->16 (stride 2), 16->32 (stride 2),
/// each followed by ReLU. He-normal weights drawn from `seed`, zero biases.
template <typename T>
class SurrogateExtractor {
public:
    explicit SurrogateExtractor(uint64_t seed = 7);

    std::vector<Tensor<T>> features(const Tensor<T>& image) const;
    const ModelParams<T>& params() const { return params_; }
    static constexpr int kStages = 3;
    static int64_t stage_channels(int stage) { return int64_t{8} << stage; }

private:
    ModelParams<T> params_;
};

/// mean |out - target|; the subgradient at a tie is 0.
template <typename T>
Tensor<T> recon_l1(const Tensor<T>& out, const Tensor<T>& target);

/// Sum over extractor stages of the mean absolute feature difference.
template <typename T>
Tensor<T> perceptual(const Tensor<T>& out, const Tensor<T>& target, const SurrogateExtractor<T>& ext);

/// phi[C,H,W] -> phi_flat phi_flat^T / (C H W).
template <typename T>
Tensor<T> gram(const Tensor<T>& phi);

/// Mean over extractor stages of the mean absolute Gram difference.
template <typename T>
Tensor<T> style(const Tensor<T>& out, const Tensor<T>& target, const SurrogateExtractor<T>& ext);

template <typename T>
struct AdversarialPair {
    Tensor<T> generator;
    Tensor<T> discriminator;
};

/// Relativistic average least-squares terms written as
///   L_G = -D(r,f)^2 - (1 - D(f,r))^2,  L_D = -(1 - D(r,f))^2 - D(f,r)^2
/// with D(a,b) = mean(a) - mean(b) over raw score maps.
template <typename T>
AdversarialPair<T> ralsgan(const Tensor<T>& scores_real, const Tensor<T>& scores_fake);

/// The negated pair, which is what the trainer minimizes: both are
/// non-negative and bounded below, with optima at D(r,f) = -1/2 for the
/// generator and +1/2 for the discriminator.
template <typename T>
AdversarialPair<T> ralsgan_objectives(const Tensor<T>& scores_real, const Tensor<T>& scores_fake);

template <typename T>
struct LossTerms {
    Tensor<T> reconstruction;
    Tensor<T> adversarial;
    Tensor<T> perceptual;  // texture stage only
    Tensor<T> style;       // texture stage only
};

/// structure: l_r rec + l_d adv; texture: l_r rec + l_p prec + l_s style + l_d adv.
template <typename T>
Tensor<T> total_objective(Stage stage, const LossTerms<T>& terms, const LossWeights& w);

}  // namespace bapf
