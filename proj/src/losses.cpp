#include "bapf/losses.hpp"

#include <cmath>

#include "bapf/nn_ops.hpp"
#include "bapf/ops.hpp"

namespace bapf {

void LossWeights::validate() const {
    if (lambda_r < 0 || lambda_p < 0 || lambda_s < 0 || lambda_d < 0) throw std::invalid_argument("loss weights must be >= 0");
}

namespace {

ConvSpec extractor_spec(int stage) {
    const int64_t in = stage == 0 ? 3 : SurrogateExtractor<float>::stage_channels(stage - 1);
    return ConvSpec{in, SurrogateExtractor<float>::stage_channels(stage), 3, stage == 0 ? 1 : 2, 1, true};
}

template <typename T>
void require_same(const char* who, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
}

}  // namespace

template <typename T>
SurrogateExtractor<T>::SurrogateExtractor(uint64_t seed) {
    Rng rng(seed, "surrogate-extractor");
    for (int s = 0; s < kStages; ++s) {
        const auto spec = extractor_spec(s);
        const double fan_in = static_cast<double>(spec.in_channels * spec.kernel * spec.kernel);
        init_conv(params_, "stage" + std::to_string(s), spec.weight_shape(), spec.out_channels, rng, std::sqrt(2.0 / fan_in));
    }
    params_.set_trainable(false);
}

template <typename T>
std::vector<Tensor<T>> SurrogateExtractor<T>::features(const Tensor<T>& image) const {
    std::vector<Tensor<T>> out;
    Tensor<T> h = image;
    for (int s = 0; s < kStages; ++s) {
        const std::string p = "stage" + std::to_string(s);
        h = relu(conv2d(h, extractor_spec(s), params_.at(p + ".weight"), params_.at(p + ".bias")));
        out.push_back(h);
    }
    return out;
}

template <typename T>
Tensor<T> recon_l1(const Tensor<T>& out, const Tensor<T>& target) {
    require_same("recon_l1", out, target);
    return mean(abs(sub(out, target)));
}

template <typename T>
Tensor<T> perceptual(const Tensor<T>& out, const Tensor<T>& target, const SurrogateExtractor<T>& ext) {
    require_same("perceptual", out, target);
    const auto fo = ext.features(out);
    const auto ft = ext.features(target);
    Tensor<T> total = mean(abs(sub(fo[0], ft[0])));
    for (size_t i = 1; i < fo.size(); ++i) total = add(total, mean(abs(sub(fo[i], ft[i]))));
    return total;
}

template <typename T>
Tensor<T> gram(const Tensor<T>& phi) {
    if (phi.rank() != 3) throw std::invalid_argument("gram: expected [C,H,W], got " + shape_str(phi.shape()));
    const auto flat = reshape(phi, {phi.dim(0), phi.dim(1) * phi.dim(2)});
    return scale(matmul(flat, transpose(flat)), 1.0 / static_cast<double>(phi.numel()));
}

template <typename T>
Tensor<T> style(const Tensor<T>& out, const Tensor<T>& target, const SurrogateExtractor<T>& ext) {
    require_same("style", out, target);
    const auto fo = ext.features(out);
    const auto ft = ext.features(target);
    Tensor<T> total = mean(abs(sub(gram(fo[0]), gram(ft[0]))));
    for (size_t i = 1; i < fo.size(); ++i) total = add(total, mean(abs(sub(gram(fo[i]), gram(ft[i])))));
    return scale(total, 1.0 / static_cast<double>(fo.size()));
}

template <typename T>
AdversarialPair<T> ralsgan(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    const auto d_rf = sub(mean(scores_real), mean(scores_fake));
    const auto d_fr = sub(mean(scores_fake), mean(scores_real));
    const auto one_minus = [](const Tensor<T>& d) { return add_scalar(scale(d, -1.0), 1.0); };
    return {scale(add(square(d_rf), square(one_minus(d_fr))), -1.0),
            scale(add(square(one_minus(d_rf)), square(d_fr)), -1.0)};
}

template <typename T>
AdversarialPair<T> ralsgan_objectives(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    auto p = ralsgan(scores_real, scores_fake);
    return {scale(p.generator, -1.0), scale(p.discriminator, -1.0)};
}

template <typename T>
Tensor<T> total_objective(Stage stage, const LossTerms<T>& t, const LossWeights& w) {
    auto need = [](const Tensor<T>& x, const char* name) -> const Tensor<T>& {
        if (!x.defined()) throw std::invalid_argument(std::string("total objective: missing ") + name + " term");
        if (x.numel() != 1) throw std::invalid_argument(std::string("total objective: ") + name + " term is not a scalar");
        return x;
    };
    Tensor<T> total = add(scale(need(t.reconstruction, "reconstruction"), w.lambda_r),
                          scale(need(t.adversarial, "adversarial"), w.lambda_d));
    if (stage == Stage::Texture) {
        total = add(total, scale(need(t.perceptual, "perceptual"), w.lambda_p));
        total = add(total, scale(need(t.style, "style"), w.lambda_s));
    }
    return total;
}

#define BAPF_INSTANTIATE_LOSSES(T)                                                                                     \
    template class SurrogateExtractor<T>;                                                                              \
    template Tensor<T> recon_l1(const Tensor<T>&, const Tensor<T>&);                                                   \
    template Tensor<T> perceptual(const Tensor<T>&, const Tensor<T>&, const SurrogateExtractor<T>&);                   \
    template Tensor<T> gram(const Tensor<T>&);                                                                         \
    template Tensor<T> style(const Tensor<T>&, const Tensor<T>&, const SurrogateExtractor<T>&);                        \
    template AdversarialPair<T> ralsgan(const Tensor<T>&, const Tensor<T>&);                                           \
    template AdversarialPair<T> ralsgan_objectives(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> total_objective(Stage, const LossTerms<T>&, const LossWeights&);

BAPF_INSTANTIATE_LOSSES(float)
BAPF_INSTANTIATE_LOSSES(double)

}  // namespace bapf
