#include "bapf/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "bapf/checkpoint.hpp"
#include "bapf/data.hpp"
#include "bapf/ops.hpp"

namespace bapf {

TrainStage parse_train_stage(const std::string& s) {
    if (s == "structure") return TrainStage::Structure;
    if (s == "texture") return TrainStage::Texture;
    if (s == "both") return TrainStage::Both;
    throw std::invalid_argument("unknown stage '" + s + "' (structure|texture|both)");
}

void TrainConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("steps must be positive");
    if (stage == TrainStage::Both && steps < 2) throw std::invalid_argument("stage both needs at least 2 steps");
    if (data_dir.empty()) throw std::invalid_argument("no dataset directory given");
    if (out.empty()) throw std::invalid_argument("no output checkpoint path given");
    if (stage == TrainStage::Texture && init_ckpt.empty() && !no_first)
        throw std::invalid_argument("texture stage needs a structure checkpoint (--init) or --no-first");
    if (mask_bins.empty()) throw std::invalid_argument("no mask bins");
    for (const auto& b : mask_bins) MaskSpec::parse(b, 0);
    if (eval_images < 1) throw std::invalid_argument("eval_images must be positive");
    weights.validate();
    GeneratorArch::make(size, base_channels, ablation).validate();
}

double eval_hole_l1(const ModelParams<float>& params, const GeneratorArch& arch, Stage stage,
                    const std::vector<Tensor<float>>& images, const std::vector<Tensor<float>>& holes) {
    NoGradGuard ng;
    double total = 0;
    int counted = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        const auto out = generator_forward(images[i], holes[i], arch, params, stage);
        const auto o = out.data();
        const auto g = images[i].data();
        const auto h = holes[i].data();
        const size_t plane = h.size();
        double s = 0;
        double n = 0;
        for (size_t c = 0; c < 3; ++c) {
            for (size_t p = 0; p < plane; ++p) {
                if (h[p] > 0.5f) {
                    s += std::abs(static_cast<double>(o[c * plane + p]) - g[c * plane + p]);
                    n += 1;
                }
            }
        }
        if (n > 0) {
            total += s / n;
            ++counted;
        }
    }
    return counted ? total / counted : 0.0;
}

namespace {

int disc_layers(int64_t extent, int wanted) {
    int layers = 0;
    while (layers < wanted && (extent >> (layers + 1)) >= 1) ++layers;
    return layers;
}

std::vector<std::string> names_where(const ModelParams<float>& params, bool discriminator) {
    std::vector<std::string> out;
    for (const auto& n : params.names())
        if (is_discriminator_param(n) == discriminator) out.push_back(n);
    return out;
}

void set_trainable(ModelParams<float>& params, const std::vector<std::string>& names, bool value) {
    for (const auto& n : names) params.at(n).set_requires_grad(value);
}

void init_discriminators(ModelParams<float>& params, const TrainConfig& cfg, Rng rng) {
    const int64_t feat = cfg.size / 2;  // surrogate stage 2 resolution
    init_discriminator(params, DiscKind::Patch, 3, cfg.disc_channels, disc_layers(cfg.size, 4), rng);
    auto r2 = rng.split("feature");
    init_discriminator(params, DiscKind::FeaturePatch, SurrogateExtractor<float>::stage_channels(1), cfg.disc_channels,
                       disc_layers(feat, 3), r2);
}

struct Dataset {
    std::vector<Tensor<float>> images;
    std::vector<Tensor<float>> structure;  // filled on first use
};

struct EvalSet {
    std::vector<Tensor<float>> images;
    std::vector<Tensor<float>> holes;
};

struct StepLosses {
    double rec = 0, adv = 0, prec = 0, sty = 0, total = 0, disc = 0, hole_l1 = 0;
    bool degenerate = false;
};

class Trainer {
public:
    Trainer(const TrainConfig& cfg, std::ostream* progress, std::ostream& csv)
        : cfg_(cfg), progress_(progress), csv_(csv), ext_(7) {
        for (const auto& path : list_pngs(cfg.data_dir)) data_.images.push_back(load_image(path, cfg.size).rgb);
        if (data_.images.empty()) throw std::runtime_error("dataset '" + cfg.data_dir + "' contains no PNG images");
        data_.structure.resize(data_.images.size());
        const Rng er(cfg.seed, "eval");
        const int n = std::min<int>(cfg.eval_images, static_cast<int>(data_.images.size()));
        for (int i = 0; i < n; ++i) {
            eval_.images.push_back(data_.images[static_cast<size_t>(i)]);
            auto r = er.split(static_cast<uint64_t>(i));
            const auto& bin = cfg.mask_bins[static_cast<size_t>(i) % cfg.mask_bins.size()];
            eval_.holes.push_back(generate_irregular_mask(MaskSpec::parse(bin, r.next_u64()), cfg.size));
        }
    }

    StageReport run(ModelParams<float>& params, const GeneratorArch& arch, Stage stage, int steps, Adam& gopt, Adam& dopt) {
        StageReport rep;
        rep.stage = stage;
        rep.steps = steps;
        const auto t0 = std::chrono::steady_clock::now();
        rep.eval_hole_l1_start = eval_hole_l1(params, arch, stage, eval_.images, eval_.holes);
        const Rng base = Rng(cfg_.seed, "train").split(std::string(stage_name(stage)));
        for (int s = 1; s <= steps; ++s) {
            Rng rng = base.split(static_cast<uint64_t>(s));
            const auto l = step(params, arch, stage, rng, gopt, dopt);
            if (l.degenerate) ++rep.pf_degenerate_steps;
            ++global_step_;
            char row[512];
            std::snprintf(row, sizeof row, "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", global_step_,
                          std::string(stage_name(stage)).c_str(), l.rec, l.adv, l.prec, l.sty, l.total, l.disc, l.hole_l1);
            csv_ << row;
            if (progress_ && (s == 1 || s % 25 == 0 || s == steps)) {
                *progress_ << stage_name(stage) << " step " << s << "/" << steps << " total=" << l.total
                           << " disc=" << l.disc << " hole_l1=" << l.hole_l1 << "\n";
            }
        }
        rep.eval_hole_l1_end = eval_hole_l1(params, arch, stage, eval_.images, eval_.holes);
        rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (progress_) {
            *progress_ << stage_name(stage) << " eval hole L1 " << rep.eval_hole_l1_start << " -> " << rep.eval_hole_l1_end
                       << " (" << rep.seconds << " s";
            if (rep.pf_degenerate_steps) *progress_ << ", degenerate PF fill on " << rep.pf_degenerate_steps << " steps";
            *progress_ << ")\n";
        }
        return rep;
    }

private:
    const Tensor<float>& structure_of(size_t i) {
        if (!data_.structure[i].defined()) data_.structure[i] = structure_target(data_.images[i]);
        return data_.structure[i];
    }

    AdversarialPair<float> adversarial(const Tensor<float>& real, const Tensor<float>& fake, const ModelParams<float>& params) {
        const auto a = ralsgan_objectives(discriminator_forward(DiscKind::Patch, real, params),
                                          discriminator_forward(DiscKind::Patch, fake, params));
        const auto b = ralsgan_objectives(discriminator_forward(DiscKind::FeaturePatch, ext_.features(real)[1], params),
                                          discriminator_forward(DiscKind::FeaturePatch, ext_.features(fake)[1], params));
        return {add(a.generator, b.generator), add(a.discriminator, b.discriminator)};
    }

    StepLosses step(ModelParams<float>& params, const GeneratorArch& arch, Stage stage, Rng& rng, Adam& gopt, Adam& dopt) {
        const auto idx = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(data_.images.size()) - 1));
        const bool flip = cfg_.flip && rng.bernoulli(0.5);
        const auto& bin = cfg_.mask_bins[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(cfg_.mask_bins.size()) - 1))];
        const auto hole = generate_irregular_mask(MaskSpec::parse(bin, rng.next_u64()), cfg_.size);
        auto gt = data_.images[idx];
        auto target = stage == Stage::Structure ? structure_of(idx) : gt;
        if (flip) {
            gt = hflip(gt);
            target = hflip(target);
        }

        StepLosses l;
        ForwardTrace<float> trace;
        params.zero_grad();
        const auto out = generator_forward(gt, hole, arch, params, stage, &trace);
        l.degenerate = trace.pf_degenerate;

        // Discriminator update on the detached prediction.
        {
            const auto pair = adversarial(target, out.detach(), params);
            backward(pair.discriminator);
            l.disc = pair.discriminator.item();
            dopt.step(params);
        }

        // Generator update against the refreshed discriminators.
        set_trainable(params, dopt.names(), false);
        LossTerms<float> terms;
        terms.reconstruction = recon_l1(out, target);
        terms.adversarial = adversarial(target, out, params).generator;
        if (stage == Stage::Texture) {
            terms.perceptual = perceptual(out, gt, ext_);
            terms.style = style(out, gt, ext_);
        }
        const auto total = total_objective(stage, terms, cfg_.weights);
        backward(total);
        gopt.step(params);
        set_trainable(params, dopt.names(), true);

        l.rec = terms.reconstruction.item();
        l.adv = terms.adversarial.item();
        if (stage == Stage::Texture) {
            l.prec = terms.perceptual.item();
            l.sty = terms.style.item();
        }
        l.total = total.item();
        {
            const auto o = out.data();
            const auto g = gt.data();
            const auto h = hole.data();
            double s = 0, n = 0;
            for (size_t c = 0; c < 3; ++c)
                for (size_t p = 0; p < h.size(); ++p)
                    if (h[p] > 0.5f) {
                        s += std::abs(static_cast<double>(o[c * h.size() + p]) - g[c * h.size() + p]);
                        n += 1;
                    }
            l.hole_l1 = n > 0 ? s / n : 0.0;
        }
        return l;
    }

    const TrainConfig& cfg_;
    std::ostream* progress_;
    std::ostream& csv_;
    SurrogateExtractor<float> ext_;
    Dataset data_;
    EvalSet eval_;
    int global_step_ = 0;
};

nlohmann::json stage_json(const StageReport& r) {
    return {{"stage", std::string(stage_name(r.stage))},
            {"steps", r.steps},
            {"eval_hole_l1_start", r.eval_hole_l1_start},
            {"eval_hole_l1_end", r.eval_hole_l1_end},
            {"pf_degenerate_steps", r.pf_degenerate_steps},
            {"seconds", r.seconds}};
}

}  // namespace

TrainReport run_training(const TrainConfig& cfg, std::ostream* progress) {
    cfg.validate();
    std::ofstream csv(cfg.log_path());
    if (!csv) throw std::runtime_error("cannot write loss log '" + cfg.log_path() + "'");
    csv << "step,stage,reconstruction,adversarial,perceptual,style,total,discriminator,hole_l1\n";

    Trainer trainer(cfg, progress, csv);
    const Rng root(cfg.seed, "init");
    const auto arch = GeneratorArch::make(cfg.size, cfg.base_channels, cfg.ablation);
    TrainReport report;
    ModelParams<float> params;

    auto run_stage = [&](Stage stage, int steps) {
        Adam gopt(cfg.adam, names_where(params, false));
        Adam dopt(cfg.adam, names_where(params, true));
        report.stages.push_back(trainer.run(params, arch, stage, steps, gopt, dopt));
        report.total_steps += steps;
        std::ofstream o(cfg.optimizer_path(), std::ios::binary);
        gopt.save(o);
        dopt.save(o);
    };

    if (cfg.stage != TrainStage::Texture) {
        params = ModelParams<float>(Stage::Structure);
        auto r = root.split("structure");
        init_generator_shared(params, arch, r);
        init_discriminators(params, cfg, root.split("structure-disc"));
        run_stage(Stage::Structure, cfg.steps);
        if (cfg.stage == TrainStage::Structure) {
            save_checkpoint(cfg.out, params);
        } else {
            save_checkpoint(cfg.structure_path(), params);
        }
    }
    if (cfg.stage != TrainStage::Structure) {
        if (cfg.stage == TrainStage::Texture) {
            if (cfg.no_first) {
                params = ModelParams<float>(Stage::Structure);
                auto r = root.split("structure");
                init_generator_shared(params, arch, r);
            } else {
                params = load_checkpoint(cfg.init_ckpt);
            }
        }
        auto r = root.split("texture");
        params = init_from_stage1(params, arch, r);
        init_discriminators(params, cfg, root.split("texture-disc"));
        run_stage(Stage::Texture, cfg.stage == TrainStage::Both ? cfg.steps / 2 : cfg.steps);
        save_checkpoint(cfg.out, params);
    }
    report.checkpoint = cfg.out;
    report.log = cfg.log_path();

    nlohmann::json summary = {{"size", cfg.size},
                              {"seed", cfg.seed},
                              {"base_channels", cfg.base_channels},
                              {"ablation", cfg.ablation.describe()},
                              {"total_steps", report.total_steps},
                              {"stages", nlohmann::json::array()}};
    for (const auto& s : report.stages) summary["stages"].push_back(stage_json(s));
    std::ofstream js(cfg.summary_path());
    js << summary.dump(2) << "\n";
    return report;
}

}  // namespace bapf
