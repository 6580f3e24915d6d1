#include "bapf/gradcheck_suite.hpp"

#include <algorithm>

#include "bapf/ba_layer.hpp"
#include "bapf/gradcheck.hpp"
#include "bapf/losses.hpp"
#include "bapf/model.hpp"
#include "bapf/nn_ops.hpp"
#include "bapf/ops.hpp"
#include "bapf/pf_block.hpp"

namespace bapf {

namespace {

using TD = Tensor<double>;

TD random_mask(Rng& rng, int64_t size, double p_valid) {
    std::vector<double> v(static_cast<size_t>(size * size));
    for (auto& x : v) x = rng.bernoulli(p_valid) ? 1.0 : 0.0;
    v[0] = 1.0;
    return TD({1, size, size}, std::move(v));
}

// Checks f with respect to `x` and each named parameter in turn.
double check_params(const std::function<TD(const ModelParams<double>&)>& f, const ModelParams<double>& p,
                    const std::vector<std::string>& names, std::optional<int64_t> max_coords = std::nullopt) {
    double worst = 0;
    for (const auto& n : names) {
        worst = std::max(worst, finite_diff_check(
                                    [&](const TD& v) {
                                        auto q = p.clone();
                                        q.set(n, v);
                                        return f(q);
                                    },
                                    p.at(n).detach(), 1e-4, max_coords));
    }
    return worst;
}

void randomize(ModelParams<double>& p, Rng& rng, double stddev) {
    for (const auto& n : p.names()) p.set(n, rng.normal_tensor<double>(p.at(n).shape(), stddev));
}

double conv_case(uint64_t seed) {
    Rng rng(seed, "gc/conv2d");
    const ConvSpec spec{2, 3, 3, 2, 1, true};
    const TD x = rng.normal_tensor<double>({2, 6, 6});
    ModelParams<double> p;
    p.set("w", rng.normal_tensor<double>(spec.weight_shape()));
    p.set("b", rng.normal_tensor<double>({3}));
    auto f = [&](const TD& in, const ModelParams<double>& q) {
        return random_projection(conv2d(in, spec, q.at("w"), q.at("b")), 1);
    };
    return std::max(finite_diff_check([&](const TD& v) { return f(v, p); }, x),
                    check_params([&](const ModelParams<double>& q) { return f(x, q); }, p, {"w", "b"}));
}

double convt_case(uint64_t seed) {
    Rng rng(seed, "gc/conv_transpose2d");
    const ConvSpec spec{3, 2, 4, 2, 1, true};
    const TD x = rng.normal_tensor<double>({3, 3, 3});
    ModelParams<double> p;
    p.set("w", rng.normal_tensor<double>(spec.transposed_weight_shape()));
    p.set("b", rng.normal_tensor<double>({2}));
    auto f = [&](const TD& in, const ModelParams<double>& q) {
        return random_projection(conv_transpose2d(in, spec, q.at("w"), q.at("b")), 1);
    };
    return std::max(finite_diff_check([&](const TD& v) { return f(v, p); }, x),
                    check_params([&](const ModelParams<double>& q) { return f(x, q); }, p, {"w", "b"}));
}

double pconv_case(uint64_t seed) {
    Rng rng(seed, "gc/partial_conv2d");
    const ConvSpec spec{2, 3, 3, 1, 1, true};
    const TD x = rng.normal_tensor<double>({2, 6, 6});
    const TD m = random_mask(rng, 6, 0.5);
    ModelParams<double> p;
    p.set("w", rng.normal_tensor<double>(spec.weight_shape()));
    p.set("b", rng.normal_tensor<double>({3}));
    auto f = [&](const TD& in, const ModelParams<double>& q) {
        return random_projection(partial_conv2d(in, m, spec, q.at("w"), q.at("b")).output, 1);
    };
    return std::max(finite_diff_check([&](const TD& v) { return f(v, p); }, x),
                    check_params([&](const ModelParams<double>& q) { return f(x, q); }, p, {"w", "b"}));
}

double upsample_case(uint64_t seed) {
    Rng rng(seed, "gc/bilinear_upsample");
    return finite_diff_check([](const TD& v) { return random_projection(bilinear_upsample(v, 8, 6), 1); },
                             rng.normal_tensor<double>({2, 4, 3}));
}

double softmax_case(uint64_t seed) {
    Rng rng(seed, "gc/softmax");
    const auto support = window_support(4, 4, 3);
    return std::max(
        finite_diff_check([](const TD& v) { return random_projection(softmax_lastdim(v), 1); },
                          rng.normal_tensor<double>({5, 7})),
        finite_diff_check([&](const TD& v) { return random_projection(softmax_lastdim(v, support), 2); },
                          rng.normal_tensor<double>({16, 9})));
}

double distance_case(uint64_t seed) {
    Rng rng(seed, "gc/distance_step");
    return finite_diff_check([](const TD& v) { return random_projection(distance_step(v, BAConfig{}), 1); },
                             rng.normal_tensor<double>({2, 6, 6}));
}

double value_case(uint64_t seed) {
    Rng rng(seed, "gc/value_step");
    return finite_diff_check([](const TD& v) { return random_projection(value_step(v, BAConfig{}), 1); },
                             rng.normal_tensor<double>({2, 5, 5}));
}

double fuse_case(uint64_t seed) {
    Rng rng(seed, "gc/ba_fuse");
    const TD a = rng.normal_tensor<double>({2, 4, 4});
    const TD b = rng.normal_tensor<double>({2, 4, 4});
    ModelParams<double> p;
    p.set("w", rng.normal_tensor<double>({2, 4, 1, 1}));
    p.set("b", rng.normal_tensor<double>({2}));
    auto f = [&](const TD& x, const TD& y, const ModelParams<double>& q) {
        return random_projection(ba_fuse(x, y, q.at("w"), q.at("b")), 1);
    };
    return std::max({finite_diff_check([&](const TD& v) { return f(v, b, p); }, a),
                     finite_diff_check([&](const TD& v) { return f(a, v, p); }, b),
                     check_params([&](const ModelParams<double>& q) { return f(a, b, q); }, p, {"w", "b"})});
}

double ba_case(uint64_t seed) {
    Rng rng(seed, "gc/ba_forward");
    ModelParams<double> p;
    init_ba_params(p, "ba", 2, BAConfig{});
    randomize(p, rng, 0.5);
    const TD x = rng.normal_tensor<double>({2, 6, 6});
    return std::max(finite_diff_check([&](const TD& v) { return random_projection(ba_forward(v, BAConfig{}, p), 1); }, x),
                    check_params([&](const ModelParams<double>& q) { return random_projection(ba_forward(x, BAConfig{}, q), 1); },
                                 p, p.names()));
}

double nonlocal_case(uint64_t seed) {
    Rng rng(seed, "gc/nonlocal_forward");
    ModelParams<double> p;
    init_nonlocal_params(p, "nl", 2, rng);
    randomize(p, rng, 0.5);
    const TD x = rng.normal_tensor<double>({2, 4, 4});
    // phi.bias shifts every logit of a row by the same amount, so its true
    // gradient is exactly zero and a relative error is meaningless there.
    auto names = p.names();
    std::erase(names, std::string("nl.phi.bias"));
    return std::max(finite_diff_check([&](const TD& v) { return random_projection(nonlocal_forward(v, p), 1); }, x),
                    check_params([&](const ModelParams<double>& q) { return random_projection(nonlocal_forward(x, q), 1); },
                                 p, names));
}

double se_case(uint64_t seed) {
    Rng rng(seed, "gc/se_forward");
    ModelParams<double> p;
    init_se_params(p, "se", 8, 4, rng);
    randomize(p, rng, 0.5);
    const TD x = rng.normal_tensor<double>({8, 3, 3});
    return std::max(finite_diff_check([&](const TD& v) { return random_projection(se_forward(v, p), 1); }, x),
                    check_params([&](const ModelParams<double>& q) { return random_projection(se_forward(x, q), 1); }, p,
                                 p.names()));
}

double pf_case(uint64_t seed) {
    Rng rng(seed, "gc/pf_fill_level");
    ModelParams<double> p;
    init_pf_params(p, {{2, 3}, {1, 2}}, rng);
    randomize(p, rng, 0.3);
    const TD feat = rng.normal_tensor<double>({2, 6, 6});
    const TD deeper = rng.normal_tensor<double>({3, 3, 3});
    const TD vmask = random_mask(rng, 6, 0.6);
    const std::string prefix = pf_level_prefix(1);
    auto f = [&](const TD& x, const TD& d, const ModelParams<double>& q) {
        return random_projection(pf_fill_level(x, vmask, d, q, prefix).feature, 1);
    };
    return std::max({finite_diff_check([&](const TD& v) { return f(v, deeper, p); }, feat),
                     finite_diff_check([&](const TD& v) { return f(feat, v, p); }, deeper),
                     check_params([&](const ModelParams<double>& q) { return f(feat, deeper, q); }, p,
                                  p.names_with_prefix(prefix))});
}

double generator_case(uint64_t seed) {
    const auto arch = GeneratorArch::make(16, 4);
    Rng rng(seed, "gc/generator-tiny");
    ModelParams<double> p(Stage::Texture);
    init_generator_shared(p, arch, rng);
    init_generator_texture(p, arch, rng);
    randomize(p, rng, 0.3);
    const TD img = rng.uniform_tensor<double>({3, 16, 16}, -1, 1);
    std::vector<double> hv(256, 0.0);
    for (int y = 2; y < 8; ++y)
        for (int x = 5; x < 11; ++x) hv[static_cast<size_t>(y * 16 + x)] = 1.0;
    const TD hole({1, 16, 16}, std::move(hv));
    auto f = [&](const TD& in, const ModelParams<double>& q) {
        return random_projection(generator_forward(in, hole, arch, q, Stage::Texture), 3);
    };
    return std::max(finite_diff_check([&](const TD& v) { return f(v, p); }, img, 1e-4, 64),
                    check_params([&](const ModelParams<double>& q) { return f(img, q); }, p,
                                 {"enc1.weight", "enc2.weight", "pf.l3.pconv.weight", "pf.l3.pconv.bias", "se.fc1.weight",
                                  "se.fc2.weight", "ba.fuse.weight", "dec2.weight", "dec1.bias"},
                                 32));
}

struct ImagePair {
    TD out, target;
};

ImagePair image_pair(uint64_t seed, const char* purpose) {
    Rng rng(seed, purpose);
    return {rng.uniform_tensor<double>({3, 8, 8}, -1, 1), rng.uniform_tensor<double>({3, 8, 8}, -1, 1)};
}

// The extractor is piecewise linear; a step of 1e-4 can straddle a ReLU kink
// on random images, so these cases use a smaller one.
constexpr double kKinkEps = 1e-6;

const SurrogateExtractor<double>& extractor() {
    static const SurrogateExtractor<double> ext;
    return ext;
}

double recon_case(uint64_t seed) {
    const auto [out, target] = image_pair(seed, "gc/recon_l1");
    return finite_diff_check([&](const TD& v) { return recon_l1(v, target); }, out);
}

double perceptual_case(uint64_t seed) {
    const auto [out, target] = image_pair(seed, "gc/perceptual");
    return finite_diff_check([&](const TD& v) { return perceptual(v, target, extractor()); }, out, kKinkEps);
}

double style_case(uint64_t seed) {
    const auto [out, target] = image_pair(seed, "gc/style");
    return finite_diff_check([&](const TD& v) { return style(v, target, extractor()); }, out, kKinkEps);
}

double gram_case(uint64_t seed) {
    Rng rng(seed, "gc/gram");
    return finite_diff_check([](const TD& v) { return random_projection(gram(v), 1); }, rng.normal_tensor<double>({3, 4, 5}));
}

double ralsgan_case(uint64_t seed) {
    Rng rng(seed, "gc/ralsgan");
    const TD real = rng.normal_tensor<double>({1, 4, 4});
    const TD fake = rng.normal_tensor<double>({1, 4, 4});
    return std::max({finite_diff_check([&](const TD& v) { return ralsgan(real, v).generator; }, fake),
                     finite_diff_check([&](const TD& v) { return ralsgan(v, fake).generator; }, real),
                     finite_diff_check([&](const TD& v) { return ralsgan(real, v).discriminator; }, fake),
                     finite_diff_check([&](const TD& v) { return ralsgan(v, fake).discriminator; }, real),
                     finite_diff_check([&](const TD& v) { return ralsgan_objectives(real, v).generator; }, fake),
                     finite_diff_check([&](const TD& v) { return ralsgan_objectives(v, fake).discriminator; }, real)});
}

double total_case(uint64_t seed) {
    Rng rng(seed, "gc/total_objective");
    const TD x = rng.normal_tensor<double>({4});
    const LossWeights w;
    double worst = 0;
    for (Stage stage : {Stage::Structure, Stage::Texture}) {
        worst = std::max(worst, finite_diff_check(
                                    [&](const TD& v) {
                                        LossTerms<double> t{slice(v, 0, 1), slice(v, 1, 2), slice(v, 2, 3), slice(v, 3, 4)};
                                        return total_objective(stage, t, w);
                                    },
                                    x));
    }
    return worst;
}

}  // namespace

const std::vector<GradcheckCase>& gradcheck_registry() {
    static const std::vector<GradcheckCase> cases{
        {"conv2d", 1e-4, conv_case},
        {"conv_transpose2d", 1e-4, convt_case},
        {"partial_conv2d", 1e-4, pconv_case},
        {"bilinear_upsample", 1e-4, upsample_case},
        {"softmax", 1e-4, softmax_case},
        {"distance_step", 1e-4, distance_case},
        {"value_step", 1e-4, value_case},
        {"ba_fuse", 1e-4, fuse_case},
        {"ba_forward", 1e-4, ba_case},
        {"nonlocal_forward", 1e-4, nonlocal_case},
        {"se_forward", 1e-4, se_case},
        {"pf_fill_level", 1e-4, pf_case},
        {"generator_tiny", 1e-3, generator_case},
        {"recon_l1", 1e-4, recon_case},
        {"perceptual", 1e-4, perceptual_case},
        {"style", 1e-4, style_case},
        {"gram", 1e-4, gram_case},
        {"ralsgan", 1e-4, ralsgan_case},
        {"total_objective", 1e-4, total_case},
    };
    return cases;
}

std::vector<GradcheckResult> run_gradchecks(const std::string& filter, const std::vector<uint64_t>& seeds) {
    std::vector<GradcheckResult> out;
    for (const auto& c : gradcheck_registry()) {
        if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
        for (uint64_t s : seeds) out.push_back({c.name, s, c.run(s), c.threshold});
    }
    return out;
}

}  // namespace bapf
