#include "bapf/model.hpp"

#include <algorithm>
#include <sstream>

#include "bapf/nn_ops.hpp"
#include "bapf/ops.hpp"
#include "bapf/pf_block.hpp"

namespace bapf {

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw std::invalid_argument("ablation '" + key + "': expected a boolean, got '" + v + "'");
}

constexpr double kLeak = 0.2;

ConvSpec down(int64_t in, int64_t out, bool bias) { return ConvSpec{in, out, 4, 2, 1, bias}; }

}  // namespace

void Ablation::apply(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("ablation override must be key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const bool v = parse_bool(key, assignment.substr(eq + 1));
    if (key == "use_ba")
        use_ba = v;
    else if (key == "use_pf")
        use_pf = v;
    else if (key == "use_se")
        use_se = v;
    else if (key == "use_nonlocal")
        use_nonlocal = v;
    else if (key == "use_value")
        use_value = v;
    else if (key == "use_distance")
        use_distance = v;
    else
        throw std::invalid_argument("unknown ablation key '" + key + "'");
}

std::string Ablation::describe() const {
    std::ostringstream os;
    os << "use_ba=" << use_ba << " use_pf=" << use_pf << " use_se=" << use_se << " use_nonlocal=" << use_nonlocal
       << " use_value=" << use_value << " use_distance=" << use_distance;
    return os.str();
}

GeneratorArch GeneratorArch::make(int64_t input_size, int64_t base_channels, const Ablation& ablation) {
    GeneratorArch a;
    a.input_size = input_size;
    a.base_channels = base_channels;
    a.ablation = ablation;
    a.depth = 0;
    while (a.depth < 30 && (input_size >> a.depth) > 2) ++a.depth;
    a.ba_level = 3;
    a.validate();
    return a;
}

void GeneratorArch::validate() const {
    if (input_size < 16 || (input_size & (input_size - 1)) != 0) {
        throw std::invalid_argument("generator input size must be a power of two >= 16, got " + std::to_string(input_size));
    }
    if ((input_size >> depth) != 2 || (int64_t{2} << depth) != input_size) {
        throw std::invalid_argument("generator depth " + std::to_string(depth) + " does not reach a 2x2 bottleneck");
    }
    if (ba_level < 1 || ba_level > depth) throw std::invalid_argument("BA level outside the encoder");
    if (base_channels < 1) throw std::invalid_argument("base channels must be positive");
    if (se_reduction < 1) throw std::invalid_argument("SE reduction must be positive");
}

int64_t GeneratorArch::channels(int level) const {
    return std::min(base_channels << (level - 1), 8 * base_channels);
}

BAConfig GeneratorArch::ba_config() const {
    BAConfig c;
    c.enable_value = ablation.use_value;
    c.enable_distance = ablation.use_distance;
    return c;
}

std::vector<int> GeneratorArch::pf_levels() const {
    std::vector<int> out;
    for (int k = depth; k >= ba_level; --k) out.push_back(k);
    return out;
}

template <typename T>
Tensor<T> se_forward(const Tensor<T>& x, const ModelParams<T>& params, const std::string& prefix) {
    const auto& w1 = params.at(prefix + ".fc1.weight");
    const auto& w2 = params.at(prefix + ".fc2.weight");
    const int64_t c = x.dim(0);
    if (w1.rank() != 2 || w1.dim(1) != c || w2.rank() != 2 || w2.dim(0) != c || w2.dim(1) != w1.dim(0)) {
        throw std::invalid_argument("se: weights " + shape_str(w1.shape()) + ", " + shape_str(w2.shape()) +
                                    " do not fit input " + shape_str(x.shape()));
    }
    const auto z = reshape(global_avg_pool(x), {c, 1});
    const auto s = sigmoid(matmul(w2, relu(matmul(w1, z))));
    return channel_scale(x, reshape(s, {c}));
}

template <typename T>
void init_se_params(ModelParams<T>& params, const std::string& prefix, int64_t channels, int64_t reduction, Rng& rng) {
    if (reduction < 1 || channels % reduction != 0) {
        throw std::invalid_argument("se: " + std::to_string(channels) + " channels not divisible by reduction " +
                                    std::to_string(reduction));
    }
    const int64_t hidden = channels / reduction;
    init_conv(params, prefix + ".fc1", Shape{hidden, channels}, 0, rng);
    init_conv(params, prefix + ".fc2", Shape{channels, hidden}, 0, rng);
}

template <typename T>
Tensor<T> generator_input(const Tensor<T>& image, const Tensor<T>& hole_mask) {
    if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("generator: image must be [3,H,W]");
    require_binary_mask("generator", hole_mask);
    return concat<T>({spatial_gate(image, complement_mask(hole_mask)), hole_mask.detach()});
}

template <typename T>
std::vector<Tensor<T>> generator_encode(const Tensor<T>& input, const GeneratorArch& arch, const ModelParams<T>& params) {
    if (input.rank() != 3 || input.dim(0) != 4 || input.dim(1) != arch.input_size || input.dim(2) != arch.input_size) {
        throw std::invalid_argument("generator: input " + shape_str(input.shape()) + " does not match size " +
                                    std::to_string(arch.input_size));
    }
    std::vector<Tensor<T>> e;
    e.push_back(leaky_relu(conv2d(input, down(4, arch.channels(1), true), params.at("enc1.weight"), params.at("enc1.bias")),
                           kLeak));
    for (int k = 2; k <= arch.depth; ++k) {
        const auto w = params.at("enc" + std::to_string(k) + ".weight");
        e.push_back(leaky_relu(instance_norm(conv2d(e.back(), down(arch.channels(k - 1), arch.channels(k), false), w)), kLeak));
    }
    return e;
}

template <typename T>
Tensor<T> generator_decode(const std::vector<Tensor<T>>& skips, const GeneratorArch& arch, const ModelParams<T>& params) {
    if (static_cast<int>(skips.size()) != arch.depth) throw std::invalid_argument("generator: wrong number of skips");
    const int d = arch.depth;
    Tensor<T> x = relu(instance_norm(conv_transpose2d(skips[static_cast<size_t>(d - 1)],
                                                      down(arch.channels(d), arch.channels(d - 1), false),
                                                      params.at("dec" + std::to_string(d) + ".weight"))));
    for (int k = d - 1; k >= 2; --k) {
        const auto in = concat<T>({x, skips[static_cast<size_t>(k - 1)]});
        x = relu(instance_norm(conv_transpose2d(in, down(2 * arch.channels(k), arch.channels(k - 1), false),
                                                params.at("dec" + std::to_string(k) + ".weight"))));
    }
    const auto in = concat<T>({x, skips[0]});
    return tanh(conv_transpose2d(in, down(2 * arch.channels(1), 3, true), params.at("dec1.weight"), params.at("dec1.bias")));
}

template <typename T>
Tensor<T> generator_forward(const Tensor<T>& image, const Tensor<T>& hole_mask, const GeneratorArch& arch,
                            const ModelParams<T>& params, Stage stage, ForwardTrace<T>* trace) {
    auto e = generator_encode(generator_input(image, hole_mask), arch, params);
    if (stage == Stage::Texture) {
        const auto& ab = arch.ablation;
        if (ab.use_pf) {
            const auto pyr = build_mask_pyramid(hole_mask, arch.depth + 1);
            FeatureStack<T> stack;
            for (int k : arch.pf_levels())
                stack.push_back({e[static_cast<size_t>(k - 1)], complement_mask(pyr[static_cast<size_t>(k)]), k});
            auto filled = pf_forward(stack, params);
            for (const auto& lv : filled.levels) e[static_cast<size_t>(lv.level - 1)] = lv.feature;
            if (trace) {
                trace->pf_pconv_vmasks = filled.pconv_vmasks;
                trace->pf_levels = arch.pf_levels();
                trace->pf_degenerate = filled.degenerate;
            }
        }
        auto& f = e[static_cast<size_t>(arch.ba_level - 1)];
        if (ab.use_se) f = se_forward(f, params);
        if (ab.use_nonlocal) {
            f = nonlocal_forward(f, params);
        } else if (ab.use_ba) {
            const auto cfg = arch.ba_config();
            if (trace && cfg.enable_value) {
                NoGradGuard ng;
                trace->ba_weights = value_step_weights(f, cfg);
                trace->ba_size = f.dim(1);
            }
            f = ba_forward(f, cfg, params);
        }
    }
    return generator_decode(e, arch, params);
}

template <typename T>
void init_generator_shared(ModelParams<T>& params, const GeneratorArch& arch, Rng& rng) {
    arch.validate();
    init_conv(params, "enc1", down(4, arch.channels(1), true).weight_shape(), arch.channels(1), rng);
    for (int k = 2; k <= arch.depth; ++k)
        init_conv(params, "enc" + std::to_string(k), down(arch.channels(k - 1), arch.channels(k), false).weight_shape(), 0,
                  rng);
    const int d = arch.depth;
    init_conv(params, "dec" + std::to_string(d), down(arch.channels(d), arch.channels(d - 1), false).transposed_weight_shape(),
              0, rng);
    for (int k = d - 1; k >= 2; --k)
        init_conv(params, "dec" + std::to_string(k),
                  down(2 * arch.channels(k), arch.channels(k - 1), false).transposed_weight_shape(), 0, rng);
    init_conv(params, "dec1", down(2 * arch.channels(1), 3, true).transposed_weight_shape(), 3, rng);
}

template <typename T>
void init_generator_texture(ModelParams<T>& params, const GeneratorArch& arch, Rng& rng) {
    arch.validate();
    const auto& ab = arch.ablation;
    const int64_t c = arch.channels(arch.ba_level);
    if (ab.use_pf) {
        std::vector<std::pair<int, int64_t>> ch;
        for (int k : arch.pf_levels()) ch.emplace_back(k, arch.channels(k));
        init_pf_params(params, ch, rng);
    }
    if (ab.use_se) init_se_params(params, "se", c, arch.se_reduction, rng);
    if (ab.use_nonlocal) {
        Rng local = rng.split("nl");
        init_nonlocal_params(params, "nl", c, local);
    } else if (ab.use_ba) {
        init_ba_params(params, "ba", c, arch.ba_config());
    }
}

bool is_shared_param(const std::string& name) { return name.starts_with("enc") || name.starts_with("dec"); }

bool is_discriminator_param(const std::string& name) { return name.starts_with("dpatch.") || name.starts_with("dfeat."); }

template <typename T>
int64_t generator_param_count(const ModelParams<T>& params) {
    int64_t n = 0;
    for (const auto& [name, t] : params.entries())
        if (!is_discriminator_param(name)) n += t.numel();
    return n;
}

template <typename T>
ModelParams<T> init_from_stage1(const ModelParams<T>& stage1, const GeneratorArch& arch, Rng& rng) {
    if (stage1.stage() != Stage::Structure) throw std::invalid_argument("weight transfer expects a structure-stage set");
    ModelParams<T> expected;
    Rng scratch(0, "shape-probe");
    init_generator_shared(expected, arch, scratch);
    ModelParams<T> out(Stage::Texture);
    for (const auto& [name, t] : expected.entries()) {
        if (!stage1.contains(name)) throw std::invalid_argument("weight transfer: structure set lacks '" + name + "'");
        const auto& src = stage1.at(name);
        if (src.shape() != t.shape()) {
            throw std::invalid_argument("weight transfer: '" + name + "' is " + shape_str(src.shape()) + ", expected " +
                                        shape_str(t.shape()));
        }
        out.set(name, src.clone());
    }
    init_generator_texture(out, arch, rng);
    return out;
}

template <typename T>
GeneratorArch arch_from_params(const ModelParams<T>& params, int64_t input_size, const Ablation& hint) {
    auto arch = GeneratorArch::make(input_size, params.at("enc1.weight").dim(0), hint);
    if (!params.contains("enc" + std::to_string(arch.depth) + ".weight") ||
        params.contains("enc" + std::to_string(arch.depth + 1) + ".weight")) {
        throw std::invalid_argument("stored generator depth does not match input size " + std::to_string(input_size));
    }
    auto& ab = arch.ablation;
    ab.use_pf = params.has_prefix("pf.");
    ab.use_se = params.has_prefix("se.");
    ab.use_nonlocal = params.has_prefix("nl.");
    ab.use_ba = params.has_prefix("ba.");
    if (ab.use_ba) {
        const auto& w = params.at("ba.fuse.weight");
        if (w.dim(1) == 2 * w.dim(0)) {
            ab.use_value = ab.use_distance = true;
        } else if (hint.use_value == hint.use_distance) {
            throw std::invalid_argument("stored BA uses a single step; say which with use_value/use_distance");
        }
    }
    return arch;
}

std::string disc_prefix(DiscKind kind) { return kind == DiscKind::Patch ? "dpatch" : "dfeat"; }

template <typename T>
Tensor<T> discriminator_forward(DiscKind kind, const Tensor<T>& x, const ModelParams<T>& params) {
    const std::string p = disc_prefix(kind);
    Tensor<T> h = x;
    for (int i = 0;; ++i) {
        const std::string name = p + ".conv" + std::to_string(i);
        if (!params.contains(name + ".weight")) {
            if (i == 0) throw std::invalid_argument("discriminator '" + p + "' has no layers");
            break;
        }
        const auto& w = params.at(name + ".weight");
        h = conv2d(h, down(w.dim(1), w.dim(0), true), w, params.at(name + ".bias"));
        if (params.contains(p + ".conv" + std::to_string(i + 1) + ".weight")) h = leaky_relu(h, kLeak);
    }
    return h;
}

template <typename T>
void init_discriminator(ModelParams<T>& params, DiscKind kind, int64_t in_channels, int64_t base, int layers, Rng& rng) {
    if (layers < 1) throw std::invalid_argument("discriminator needs at least one layer");
    const std::string p = disc_prefix(kind);
    int64_t in = in_channels;
    for (int i = 0; i < layers; ++i) {
        const int64_t out = i + 1 == layers ? 1 : std::min(base << i, 8 * base);
        init_conv(params, p + ".conv" + std::to_string(i), down(in, out, true).weight_shape(), out, rng);
        in = out;
    }
}

#define BAPF_INSTANTIATE_MODEL(T)                                                                                       \
    template Tensor<T> se_forward(const Tensor<T>&, const ModelParams<T>&, const std::string&);                        \
    template void init_se_params(ModelParams<T>&, const std::string&, int64_t, int64_t, Rng&);                         \
    template Tensor<T> generator_input(const Tensor<T>&, const Tensor<T>&);                                            \
    template std::vector<Tensor<T>> generator_encode(const Tensor<T>&, const GeneratorArch&, const ModelParams<T>&);   \
    template Tensor<T> generator_decode(const std::vector<Tensor<T>>&, const GeneratorArch&, const ModelParams<T>&);   \
    template Tensor<T> generator_forward(const Tensor<T>&, const Tensor<T>&, const GeneratorArch&,                     \
                                         const ModelParams<T>&, Stage, ForwardTrace<T>*);                              \
    template void init_generator_shared(ModelParams<T>&, const GeneratorArch&, Rng&);                                  \
    template void init_generator_texture(ModelParams<T>&, const GeneratorArch&, Rng&);                                 \
    template int64_t generator_param_count(const ModelParams<T>&);                                                     \
    template ModelParams<T> init_from_stage1(const ModelParams<T>&, const GeneratorArch&, Rng&);                       \
    template GeneratorArch arch_from_params(const ModelParams<T>&, int64_t, const Ablation&);                          \
    template Tensor<T> discriminator_forward(DiscKind, const Tensor<T>&, const ModelParams<T>&);                       \
    template void init_discriminator(ModelParams<T>&, DiscKind, int64_t, int64_t, int, Rng&);

BAPF_INSTANTIATE_MODEL(float)
BAPF_INSTANTIATE_MODEL(double)

}  // namespace bapf
