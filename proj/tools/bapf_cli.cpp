// bapf: train, infer, gradcheck, bench, maskgen, synth.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "bapf/ba_layer.hpp"
#include "bapf/checkpoint.hpp"
#include "bapf/data.hpp"
#include "bapf/gradcheck_suite.hpp"
#include "bapf/model.hpp"
#include "bapf/nn_ops.hpp"
#include "bapf/pf_block.hpp"
#include "bapf/train.hpp"

namespace fs = std::filesystem;
using namespace bapf;

namespace {

struct TrainArgs {
    std::string stage = "both";
    std::vector<std::string> ablate;
    TrainConfig cfg;
};

int cmd_train(TrainArgs& a) {
    a.cfg.stage = parse_train_stage(a.stage);
    for (const auto& kv : a.ablate) a.cfg.ablation.apply(kv);
    const auto report = run_training(a.cfg, &std::cerr);
    for (const auto& s : report.stages) {
        std::printf("%s: %d steps, eval hole L1 %.6f -> %.6f, %.1f s\n", std::string(stage_name(s.stage)).c_str(), s.steps,
                    s.eval_hole_l1_start, s.eval_hole_l1_end, s.seconds);
    }
    std::printf("checkpoint %s, log %s\n", report.checkpoint.c_str(), report.log.c_str());
    return 0;
}

struct InferArgs {
    std::string ckpt, image, mask, out, dump_dir;
    std::vector<std::string> ablate;
    int64_t size = 0;
    bool composite = false;
};

Tensor<float> resize_mask_nearest(const Tensor<float>& m, int64_t h, int64_t w) {
    const int64_t ih = m.dim(1), iw = m.dim(2);
    if (ih == h && iw == w) return m;
    std::vector<float> v(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            v[static_cast<size_t>(y * w + x)] = m[(y * ih / h) * iw + (x * iw / w)];
    return Tensor<float>({1, h, w}, std::move(v));
}

int cmd_infer(const InferArgs& a) {
    auto params = load_checkpoint(a.ckpt);
    Stage stage = params.stage();
    if (stage == Stage::Structure)
        std::cerr << "warning: '" << a.ckpt << "' is a structure-stage checkpoint; running the structure path\n";

    const RawImage raw = read_png(a.image, 3);
    const int64_t h = raw.height, w = raw.width;
    const int64_t net = a.size > 0 ? a.size : w;
    if (a.size == 0 && h != w) throw std::invalid_argument("non-square image: pass --size to pick the network resolution");

    Ablation hint;
    for (const auto& kv : a.ablate) hint.apply(kv);
    const auto arch = arch_from_params(params, net, hint);

    const auto full = image_to_tensor(raw);
    const auto hole_full = resize_mask_nearest(load_mask(a.mask, std::max(h, w)), h, w);
    const auto img = resize_bilinear(full, net, net);
    const auto hole = resize_mask_nearest(hole_full, net, net);

    ForwardTrace<float> trace;
    Tensor<float> pred;
    {
        NoGradGuard ng;
        pred = generator_forward(img, hole, arch, params, stage, &trace);
    }
    pred = resize_bilinear(pred, h, w);
    RawImage out = tensor_to_image(pred);
    if (a.composite) {
        // Known pixels are copied byte for byte.
        const auto hv = hole_full.data();
        for (int64_t i = 0; i < h * w; ++i) {
            if (hv[static_cast<size_t>(i)] > 0.5f) continue;
            for (int c = 0; c < 3; ++c) out.pixels[static_cast<size_t>(i * 3 + c)] = raw.pixels[static_cast<size_t>(i * 3 + c)];
        }
    }
    write_png(a.out, out);

    if (!a.dump_dir.empty()) {
        fs::create_directories(a.dump_dir);
        for (size_t i = 0; i < trace.pf_pconv_vmasks.size(); ++i) {
            // Saved as hole maps (1 = still invalid after the partial conv).
            save_mask((fs::path(a.dump_dir) / ("pf_l" + std::to_string(trace.pf_levels[i]) + "_pconv.pgm")).string(),
                      complement_mask(trace.pf_pconv_vmasks[i]));
        }
        if (trace.ba_weights.defined()) {
            // Weight each position keeps on itself, stretched to [-1, 1] for viewing.
            const int64_t n = trace.ba_size;
            const int64_t k = trace.ba_weights.dim(1);
            const auto wv = trace.ba_weights.data();
            std::vector<float> v(static_cast<size_t>(3 * n * n));
            for (int64_t p = 0; p < n * n; ++p) {
                const float c = wv[static_cast<size_t>(p * k + k / 2)];
                for (int ch = 0; ch < 3; ++ch) v[static_cast<size_t>(ch * n * n + p)] = 2.0f * c - 1.0f;
            }
            save_image((fs::path(a.dump_dir) / "ba_center_weight.png").string(), Tensor<float>({3, n, n}, std::move(v)));
        }
    }
    std::printf("wrote %s (%lldx%lld, %s path%s)\n", a.out.c_str(), static_cast<long long>(w), static_cast<long long>(h),
                std::string(stage_name(stage)).c_str(), a.composite ? ", composited" : "");
    return 0;
}

int cmd_gradcheck(const std::string& op, const std::vector<uint64_t>& seeds) {
    const auto results = run_gradchecks(op, seeds);
    if (results.empty()) {
        std::fprintf(stderr, "no registered op matches '%s'\n", op.c_str());
        return 2;
    }
    int failed = 0;
    for (const auto& r : results) {
        std::printf("%-20s seed %llu  max rel err %.3e  (threshold %.0e)  %s\n", r.name.c_str(),
                    static_cast<unsigned long long>(r.seed), r.max_rel_error, r.threshold, r.passed() ? "ok" : "FAIL");
        if (!r.passed()) ++failed;
    }
    std::printf("%zu checks, %d failed\n", results.size(), failed);
    return failed ? 1 : 0;
}

Shape parse_shape(const std::string& s) {
    Shape out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, 'x')) {
        size_t used = 0;
        const long long v = std::stoll(part, &used);
        if (used != part.size() || v < 1) throw std::invalid_argument("bad shape '" + s + "' (expected CxHxW)");
        out.push_back(v);
    }
    if (out.size() != 3) throw std::invalid_argument("bad shape '" + s + "' (expected CxHxW)");
    return out;
}

int cmd_bench(const std::string& op, const std::string& shape_str_arg, int iters) {
    if (iters < 1) throw std::invalid_argument("iters must be positive");
    const Shape shape = parse_shape(shape_str_arg);
    const int64_t c = shape[0], h = shape[1], w = shape[2];
    Rng rng(0, "bench");
    const auto x = rng.normal_tensor<float>(shape);
    ModelParams<float> p;
    std::function<void()> fn;
    if (op == "conv2d") {
        const ConvSpec spec{c, c, 3, 1, 1, true};
        init_conv(p, "c", spec.weight_shape(), c, rng);
        fn = [&, spec] { conv2d(x, spec, p.at("c.weight"), p.at("c.bias")); };
    } else if (op == "partial_conv2d") {
        const ConvSpec spec{c, c, 3, 1, 1, true};
        init_conv(p, "c", spec.weight_shape(), c, rng);
        std::vector<float> m(static_cast<size_t>(h * w));
        for (auto& v : m) v = rng.bernoulli(0.7) ? 1.0f : 0.0f;
        const Tensor<float> mask({1, h, w}, std::move(m));
        fn = [&, spec, mask] { partial_conv2d(x, mask, spec, p.at("c.weight"), p.at("c.bias")); };
    } else if (op == "distance_step") {
        fn = [&] { distance_step(x, BAConfig{}); };
    } else if (op == "value_step") {
        fn = [&] { value_step(x, BAConfig{}); };
    } else if (op == "ba_forward") {
        init_ba_params(p, "ba", c, BAConfig{});
        fn = [&] { ba_forward(x, BAConfig{}, p); };
    } else if (op == "nonlocal_forward") {
        init_nonlocal_params(p, "nl", c, rng);
        fn = [&] { nonlocal_forward(x, p); };
    } else if (op == "se_forward") {
        init_se_params(p, "se", c, 4, rng);
        fn = [&] { se_forward(x, p); };
    } else if (op == "generator") {
        if (c != 3 || h != w) throw std::invalid_argument("generator bench needs shape 3xSxS");
        const auto arch = GeneratorArch::make(h, 16);
        init_generator_shared(p, arch, rng);
        init_generator_texture(p, arch, rng);
        const auto hole = generate_irregular_mask(MaskSpec::parse("10-20", 0), h);
        fn = [&, arch, hole] { generator_forward(x, hole, arch, p, Stage::Texture); };
    } else {
        throw std::invalid_argument("unknown bench op '" + op +
                                    "' (conv2d|partial_conv2d|distance_step|value_step|ba_forward|nonlocal_forward|"
                                    "se_forward|generator)");
    }
    NoGradGuard ng;
    for (int i = 0; i < 10; ++i) fn();
    std::vector<double> ms;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
    double var = 0;
    for (double v : ms) var += (v - mean) * (v - mean);
    const double stddev = std::sqrt(var / static_cast<double>(ms.size()));
    std::sort(ms.begin(), ms.end());
    auto pct = [&](double q) { return ms[static_cast<size_t>(std::ceil(q * static_cast<double>(ms.size()))) - 1]; };
    std::printf("op %s shape %s iters %d  median %.3f ms  p90 %.3f ms  stddev %.3f ms\n", op.c_str(), shape_str(shape).c_str(),
                iters, pct(0.5), pct(0.9), stddev);
    return 0;
}

int cmd_maskgen(const std::string& ratio, int count, const std::string& out_dir, uint64_t seed, int64_t size) {
    if (count < 1) throw std::invalid_argument("count must be positive");
    fs::create_directories(out_dir);
    for (int i = 0; i < count; ++i) {
        const auto spec = MaskSpec::parse(ratio, seed + static_cast<uint64_t>(i));
        const auto m = generate_irregular_mask(spec, size);
        char name[128];
        std::snprintf(name, sizeof name, "mask_%s_s%llu_%04d.png", spec.bin().c_str(), static_cast<unsigned long long>(seed), i);
        save_mask((fs::path(out_dir) / name).string(), m);
        std::printf("%s %.4f\n", name, mask_ratio(m));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Image inpainting with bilateral attention and pyramid filling"};
    app.require_subcommand(1);
    // Keys go under a [train] section; parent options are accepted after the subcommand name.
    app.set_config("--config", "", "TOML/INI file; flags on the command line take precedence");
    app.fallthrough();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Two-step training");
    train->add_option("--data", ta.cfg.data_dir, "Directory of PNG images")->required();
    train->add_option("--stage", ta.stage, "structure | texture | both")->check(CLI::IsMember({"structure", "texture", "both"}));
    train->add_option("--steps", ta.cfg.steps, "Steps (texture gets half of this under 'both')");
    train->add_option("--size", ta.cfg.size, "Input size")->check(CLI::IsMember({16, 32, 64, 128, 256}));
    train->add_option("--seed", ta.cfg.seed);
    train->add_option("--out", ta.cfg.out, "Checkpoint path")->required();
    train->add_option("--init", ta.cfg.init_ckpt, "Structure checkpoint for --stage texture");
    train->add_flag("--no-first", ta.cfg.no_first, "Texture stage from scratch");
    train->add_option("--ablate", ta.ablate, "k=v, e.g. use_ba=false");
    train->add_option("--lambda-r", ta.cfg.weights.lambda_r);
    train->add_option("--lambda-p", ta.cfg.weights.lambda_p);
    train->add_option("--lambda-s", ta.cfg.weights.lambda_s);
    train->add_option("--lambda-d", ta.cfg.weights.lambda_d);
    train->add_option("--lr", ta.cfg.adam.lr);
    train->add_option("--beta1", ta.cfg.adam.beta1);
    train->add_option("--beta2", ta.cfg.adam.beta2);
    train->add_option("--base-channels", ta.cfg.base_channels);
    train->add_option("--disc-channels", ta.cfg.disc_channels);
    train->add_option("--mask-bins", ta.cfg.mask_bins, "Hole-ratio bins to sample from");
    train->add_option("--eval-images", ta.cfg.eval_images);

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "Run a checkpoint on one image");
    infer->add_option("--ckpt", ia.ckpt)->required();
    infer->add_option("--image", ia.image)->required();
    infer->add_option("--mask", ia.mask, "Hole mask (white = hole), PNG or PGM")->required();
    infer->add_option("--out", ia.out)->required();
    infer->add_flag("--composite", ia.composite, "Keep known pixels from the input");
    infer->add_option("--size", ia.size, "Network resolution (default: image size)");
    infer->add_option("--ablate", ia.ablate, "Ablation hint for single-step BA checkpoints");
    infer->add_option("--dump-dir", ia.dump_dir, "Write PF masks and a BA weight map here");

    std::string gc_op;
    std::vector<uint64_t> gc_seeds;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference suite");
    gc->add_option("--op", gc_op, "Substring filter on op names");
    gc->add_option("--seed", gc_seeds, "Seeds (default 0 1 2)");
    bool gc_list = false;
    gc->add_flag("--list", gc_list, "List registered ops");

    std::string bench_op = "generator", bench_shape = "3x64x64";
    int bench_iters = 20;
    auto* bench = app.add_subcommand("bench", "Forward-pass timing");
    bench->add_option("--op", bench_op);
    bench->add_option("--shape", bench_shape, "CxHxW");
    bench->add_option("--iters", bench_iters);

    std::string mg_ratio = "10-20", mg_out;
    int mg_count = 1;
    uint64_t mg_seed = 0;
    int64_t mg_size = 256;
    auto* maskgen = app.add_subcommand("maskgen", "Irregular hole masks");
    maskgen->add_option("--ratio", mg_ratio, "Hole-ratio bin in percent, e.g. 10-20");
    maskgen->add_option("--count", mg_count);
    maskgen->add_option("--out", mg_out)->required();
    maskgen->add_option("--seed", mg_seed);
    maskgen->add_option("--size", mg_size);

    std::string syn_out;
    int syn_count = 32;
    int64_t syn_size = 64;
    uint64_t syn_seed = 0;
    auto* synth = app.add_subcommand("synth", "Striped and checkered toy textures");
    synth->add_option("--out", syn_out)->required();
    synth->add_option("--count", syn_count);
    synth->add_option("--size", syn_size);
    synth->add_option("--seed", syn_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(ta);
        if (*infer) return cmd_infer(ia);
        if (*gc) {
            if (gc_list) {
                for (const auto& c : gradcheck_registry()) std::printf("%s %.0e\n", c.name.c_str(), c.threshold);
                return 0;
            }
            if (gc_seeds.empty()) gc_seeds = {0, 1, 2};
            return cmd_gradcheck(gc_op, gc_seeds);
        }
        if (*bench) return cmd_bench(bench_op, bench_shape, bench_iters);
        if (*maskgen) return cmd_maskgen(mg_ratio, mg_count, mg_out, mg_seed, mg_size);
        if (*synth) {
            const auto files = write_synthetic_set(syn_out, syn_count, syn_size, syn_seed);
            std::printf("wrote %zu images to %s\n", files.size(), syn_out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
