// Command-line front end: data generation, training, evaluation, inference
// and verification.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "pat/checkpoint.hpp"
#include "pat/dataset_io.hpp"
#include "pat/errors.hpp"
#include "pat/evaluate.hpp"
#include "pat/gradcheck_suite.hpp"
#include "pat/image.hpp"
#include "pat/trainer.hpp"

namespace fs = std::filesystem;
using namespace pat;

namespace {

struct Loaded {
    TrainConfig cfg;
    ModelParams params;
};

// Config next to the checkpoint unless given explicitly.
Loaded load_model(const std::string& ckpt, const std::string& config_path) {
    std::string path = config_path;
    if (path.empty()) path = (fs::path(ckpt).parent_path() / "config.json").string();
    Loaded l{load_train_config(path), {}};
    l.params = ModelParams::make(l.cfg.model, l.cfg.seed);
    load_checkpoint(ckpt, l.params.store);
    return l;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << "\n";
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ','))
            if (!part.empty()) out.push_back(part);
    }
    return out;
}

int run_train(const TrainConfig& cfg, const Dataset& ds, const std::string& out_dir, bool quiet) {
    fs::create_directories(out_dir);
    ModelParams params = ModelParams::make(cfg.model, cfg.seed);
    const EmbeddingProvider provider = make_provider(cfg.model);
    const auto t0 = std::chrono::steady_clock::now();
    auto curve = train(params, cfg, ds, provider, [&](const LossRecord& r) {
        if (!quiet && (r.episode + 1) % 100 == 0) {
            std::fprintf(stderr, "episode %zu loss %.4f ce %.4f\n", r.episode + 1, r.total, r.ce);
        }
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_checkpoint((fs::path(out_dir) / "model.ckpt").string(), params.store);
    save_train_config((fs::path(out_dir) / "config.json").string(), cfg);
    write_loss_curve((fs::path(out_dir) / "loss.csv").string(), curve);
    std::printf("trained %zu episodes in %.1fs, final loss %.4f\n", curve.size(), secs,
                curve.empty() ? 0.0 : curve.back().total);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt-and-transfer few-shot segmentation on synthetic shapes"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shape dataset");
    std::string gen_out;
    int gen_classes = 10, gen_per_class = 40, gen_size = 64, gen_channels = 1;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--classes", gen_classes, "Number of classes (4-12)");
    gen->add_option("--per-class", gen_per_class, "Samples per class");
    gen->add_option("--size", gen_size, "Image side in pixels");
    gen->add_option("--channels", gen_channels, "1 or 3")->check(CLI::IsMember({1, 3}));
    gen->add_option("--seed", gen_seed, "Random seed");

    auto* trn = app.add_subcommand("train", "Episodic training");
    std::string trn_data, trn_config, trn_out;
    std::optional<std::uint64_t> trn_seed;
    std::optional<std::size_t> trn_episodes;
    bool trn_quiet = false;
    trn->add_option("--data", trn_data, "Dataset directory")->required();
    trn->add_option("--config", trn_config, "Flat JSON training config")->required();
    trn->add_option("--out", trn_out, "Output directory (model.ckpt, config.json, loss.csv)")->required();
    trn->add_option("--seed", trn_seed, "Override the config seed");
    trn->add_option("--episodes", trn_episodes, "Override the episode count");
    trn->add_flag("--quiet", trn_quiet, "No progress output");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ev_data, ev_ckpt, ev_config, ev_report, ev_annotation = "dense", ev_split = "unseen";
    EvalProtocol ev_proto;
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
    ev->add_option("--config", ev_config, "Config (default: config.json next to the checkpoint)");
    ev->add_option("--shots", ev_proto.shots, "Support shots")->check(CLI::IsMember({1, 5}));
    ev->add_option("--annotation", ev_annotation, "Support annotation")
        ->check(CLI::IsMember({"dense", "scribble", "bbox"}));
    ev->add_option("--episodes", ev_proto.episodes, "Evaluation episodes");
    ev->add_option("--split", ev_split, "Class split")->check(CLI::IsMember({"seen", "unseen"}));
    ev->add_option("--seed", ev_proto.seed, "Sampling seed");
    ev->add_option("--report", ev_report, "JSON report path");

    auto* demo = app.add_subcommand("demo", "Segment one query from labelled supports");
    std::string demo_ckpt, demo_config, demo_query, demo_out, demo_class = "object";
    std::vector<std::string> demo_supports;
    demo->add_option("--ckpt", demo_ckpt, "Checkpoint file")->required();
    demo->add_option("--config", demo_config, "Config (default: next to the checkpoint)");
    demo->add_option("--support", demo_supports, "IMG,MASK pair; repeat for more shots")->required();
    demo->add_option("--query", demo_query, "Query image")->required();
    demo->add_option("--out", demo_out, "Predicted mask (PGM)")->required();
    demo->add_option("--class-name", demo_class, "Class name for the text prompt");

    auto* zs = app.add_subcommand("zeroshot", "Segment a query from a class name alone");
    std::string zs_ckpt, zs_config, zs_class, zs_query, zs_out;
    zs->add_option("--ckpt", zs_ckpt, "Checkpoint of a zero-shot model")->required();
    zs->add_option("--config", zs_config, "Config (default: next to the checkpoint)");
    zs->add_option("--class-name", zs_class, "Class name")->required();
    zs->add_option("--query", zs_query, "Query image")->required();
    zs->add_option("--out", zs_out, "Predicted mask (PGM)")->required();

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the full training loss");
    suite::SuiteOptions gc_opts;
    bool gc_no_suppression = false;
    gc->add_option("--seed", gc_opts.seed, "Fixture seed");
    gc->add_option("--step", gc_opts.step, "Central-difference step");
    gc->add_option("--coords", gc_opts.coords_per_tensor, "Sampled coordinates per tensor");
    gc->add_flag("--no-suppression", gc_no_suppression, "Disable Gaussian suppression");
    gc->add_flag("--zeroshot", gc_opts.zeroshot, "Check the zero-shot objective");

    auto* ab = app.add_subcommand("ablate", "Train and evaluate with components switched off");
    std::string ab_data, ab_config, ab_out, ab_split = "unseen";
    std::vector<std::string> ab_toggles;
    std::size_t ab_eval_episodes = 200;
    bool ab_reference = false;
    ab->add_option("--data", ab_data, "Dataset directory")->required();
    ab->add_option("--config", ab_config, "Base training config")->required();
    ab->add_option("--toggle", ab_toggles, "Components to disable: fg,bg,spt,pmg,gauss,text")->required();
    ab->add_option("--out", ab_out, "Output directory");
    ab->add_option("--eval-episodes", ab_eval_episodes, "Evaluation episodes");
    ab->add_option("--split", ab_split, "Evaluation split")->check(CLI::IsMember({"seen", "unseen"}));
    ab->add_flag("--reference", ab_reference, "Also train and evaluate the unmodified config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* sub = nullptr;
        for (const CLI::App* s : app.get_subcommands()) sub = s;
        std::cerr << (sub ? sub->help() : app.help());
        return 2;
    }

    try {
        if (*gen) {
            GenerateOptions o;
            o.channels = gen_channels;
            const Dataset ds = generate_dataset(gen_classes, gen_per_class, gen_size, gen_seed, o);
            write_dataset(gen_out, ds);
            std::printf("wrote %zu samples in %zu classes to %s\n", ds.samples.size(), ds.classes.size(),
                        gen_out.c_str());
            return 0;
        }
        if (*trn) {
            TrainConfig cfg = load_train_config(trn_config);
            if (trn_seed) cfg.seed = *trn_seed;
            if (trn_episodes) cfg.episodes = *trn_episodes;
            return run_train(cfg, read_dataset(trn_data), trn_out, trn_quiet);
        }
        if (*ev) {
            Loaded m = load_model(ev_ckpt, ev_config);
            ev_proto.annotation = annotation_from_name(ev_annotation);
            ev_proto.split = ev_split;
            const Dataset ds = read_dataset(ev_data);
            const EvalReport r = evaluate(m.params, m.cfg, ds, ev_proto, make_provider(m.cfg.model));
            std::printf("mIoU %.4f  FB-IoU %.4f  (%zu episodes)\n", r.miou, r.fb_iou, r.episodes);
            if (!ev_report.empty()) write_json(ev_report, r.to_json());
            return 0;
        }
        if (*demo) {
            Loaded m = load_model(demo_ckpt, demo_config);
            std::vector<Image> images;
            std::vector<Mask> masks;
            for (const auto& pair : demo_supports) {
                const auto comma = pair.find(',');
                if (comma == std::string::npos) throw ConfigError("--support expects IMG,MASK, got '" + pair + "'");
                images.push_back(read_pnm(pair.substr(0, comma)));
                masks.push_back(read_mask_pgm(pair.substr(comma + 1)));
            }
            const Image query = read_pnm(demo_query);
            EpisodeView view;
            for (std::size_t k = 0; k < images.size(); ++k) {
                view.support_images.push_back(&images[k]);
                view.support_masks.push_back(&masks[k]);
            }
            view.query = &query;
            view.class_name = demo_class;
            NoGradGuard guard;
            ForwardOutput out = forward_episode(m.params, m.cfg.model, make_provider(m.cfg.model), view);
            const auto& ec = m.cfg.model.encoder;
            write_mask_pgm(demo_out, upsample_labels(predict_tokens(out), ec.grid(), ec.patch_size));
            return 0;
        }
        if (*zs) {
            Loaded m = load_model(zs_ckpt, zs_config);
            m.cfg.model.zeroshot = true;
            const Image query = read_pnm(zs_query);
            EpisodeView view;
            view.query = &query;
            view.class_name = zs_class;
            NoGradGuard guard;
            ForwardOutput out = forward_episode(m.params, m.cfg.model, make_provider(m.cfg.model), view);
            const auto& ec = m.cfg.model.encoder;
            write_mask_pgm(zs_out, upsample_labels(predict_tokens(out), ec.grid(), ec.patch_size));
            return 0;
        }
        if (*gc) {
            gc_opts.suppression = !gc_no_suppression;
            const suite::SuiteResult r = suite::full_loss_gradcheck(gc_opts);
            for (const auto& g : r.groups) std::printf("%-34s %3zu  %.3e\n", g.name.c_str(), g.coords, g.max_rel_error);
            std::printf("max rel-err %.3e at %s over %zu coordinates (%.1fs)\n", r.max_rel_error, r.worst.c_str(),
                        r.coords, r.seconds);
            return r.max_rel_error < 1e-4 ? 0 : 1;
        }
        if (*ab) {
            const TrainConfig base = load_train_config(ab_config);
            const Dataset ds = read_dataset(ab_data);
            const std::vector<std::string> toggles = split_list(ab_toggles);
            std::vector<std::pair<std::string, TrainConfig>> runs;
            if (ab_reference) runs.emplace_back("reference", base);
            TrainConfig ablated = base;
            std::string label;
            for (const auto& t : toggles) {
                apply_toggle(ablated.model, t);
                label += (label.empty() ? "no-" : "+no-") + t;
            }
            runs.emplace_back(label, ablated);
            nlohmann::json summary = nlohmann::json::object();
            for (auto& [name, cfg] : runs) {
                ModelParams params = ModelParams::make(cfg.model, cfg.seed);
                const EmbeddingProvider provider = make_provider(cfg.model);
                train(params, cfg, ds, provider);
                EvalProtocol proto;
                proto.split = ab_split;
                proto.episodes = ab_eval_episodes;
                proto.seed = cfg.seed;
                const EvalReport r = evaluate(params, cfg, ds, proto, provider);
                std::printf("%-24s mIoU %.4f  FB-IoU %.4f\n", name.c_str(), r.miou, r.fb_iou);
                summary[name] = r.to_json();
            }
            if (!ab_out.empty()) {
                fs::create_directories(ab_out);
                write_json((fs::path(ab_out) / "ablation.json").string(), summary);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
