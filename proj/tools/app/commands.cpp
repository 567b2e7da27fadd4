#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "anatpaste/augment.hpp"
#include "anatpaste/classifier.hpp"
#include "anatpaste/error.hpp"
#include "anatpaste/lungseg.hpp"
#include "anatpaste/parallel.hpp"
#include "anatpaste/phantom.hpp"
#include "anatpaste/rng.hpp"
#include "config.hpp"
#include "csv_io.hpp"
#include "image_io.hpp"
#include "pipeline.hpp"

namespace anatpaste::app {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
    std::string config;
    std::vector<std::string> set;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> parallel;
    std::string out;
    bool snapshots = false;
};

void warn(std::string_view msg) { fmt::print(stderr, "warning: {}\n", msg); }
void info(std::string_view msg) { fmt::print(stderr, "{}\n", msg); }

PipelineConfig resolve_config(const GlobalOptions& g) {
    PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_config(g.config);
    for (const auto& kv : g.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error(Errc::ConfigError, fmt::format("--set '{}' needs key=value", kv));
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed) cfg.seed = *g.seed;
    if (g.mode) cfg.set("aug.mode", *g.mode);
    if (g.runs) cfg.runs = *g.runs;
    if (g.parallel) cfg.parallel = *g.parallel;
    if (!g.out.empty()) cfg.out = g.out;
    cfg.validate();
    return cfg;
}

struct InputImage {
    std::string id;  // file stem
    std::string path;
};

bool is_image_file(const fs::path& p) {
    const auto ext = p.extension().string();
    return ext == ".png" || ext == ".pgm";
}

// Files are taken as given; directories contribute their images (or those of
// an images/ subdirectory) in name order.
std::vector<InputImage> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<InputImage> out;
    for (const auto& in : inputs) {
        fs::path p(in);
        if (fs::is_directory(p)) {
            if (fs::is_directory(p / "images")) p /= "images";
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(p)) {
                if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) out.push_back({f.stem().string(), f.string()});
        } else if (fs::exists(p)) {
            out.push_back({p.stem().string(), p.string()});
        } else {
            throw Error(Errc::IoError, fmt::format("{}: no such file or directory", in));
        }
    }
    std::vector<std::string> ids;
    for (const auto& i : out) ids.push_back(i.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw Error(Errc::InvalidArgument, "two inputs share a file name; output names would collide");
    }
    return out;
}

void make_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error(Errc::IoError, fmt::format("{}: {}", p.string(), ec.message()));
}

std::string out_dir(const PipelineConfig& cfg, const GlobalOptions& g, std::string_view fallback) {
    return g.out.empty() ? std::string(fallback) : cfg.out;
}

// ---------------------------------------------------------------- phantom

int cmd_phantom(const GlobalOptions& g, std::size_t n_normal, std::size_t n_abnormal, std::uint64_t first_index) {
    PipelineConfig cfg = resolve_config(g);
    if (g.seed) cfg.phantom.seed = *g.seed;
    const fs::path root(out_dir(cfg, g, "phantoms"));
    for (const char* sub : {"images", "gt_lung", "gt_lesion"}) make_dir(root / sub);
    const auto samples = phantom::generate_corpus(cfg.phantom, n_normal, n_abnormal, first_index, cfg.parallel);
    parallel_for(samples.size(), cfg.parallel, [&](std::size_t i) {
        const auto& s = samples[i];
        write_image((root / "images" / (s.id + ".png")).string(), s.image);
        write_mask((root / "gt_lung" / (s.id + ".png")).string(), s.gt_lung);
        write_mask((root / "gt_lesion" / (s.id + ".png")).string(), s.gt_lesion);
    });
    write_file((root / "manifest.csv").string(), phantom::manifest_csv(samples));
    info(fmt::format("wrote {} phantoms to {}", samples.size(), root.string()));
    return kExitOk;
}

// ---------------------------------------------------------------- segment

int cmd_segment(const GlobalOptions& g, const std::vector<std::string>& inputs) {
    const PipelineConfig cfg = resolve_config(g);
    const auto images = expand_inputs(inputs);
    const fs::path root(out_dir(cfg, g, "masks"));
    make_dir(root);
    if (g.snapshots) make_dir(root / "snapshots");
    std::vector<std::string> warnings(images.size());
    parallel_for(images.size(), cfg.parallel, [&](std::size_t i) {
        const GrayImage im = read_image(images[i].path);
        const auto res = seg::segment_lungs(im, cfg.seg.resolve(im.width(), im.height()), g.snapshots);
        if (res.degenerate) warnings[i] = fmt::format("{}: constant image, wrote an empty mask", images[i].path);
        else if (!res.mask.any()) warnings[i] = fmt::format("{}: no lung region found, wrote an empty mask", images[i].path);
        write_mask((root / (images[i].id + ".png")).string(), res.mask);
        if (res.snapshots) {
            const auto& s = *res.snapshots;
            const fs::path base = root / "snapshots" / images[i].id;
            write_image(base.string() + "_equalized.png", s.equalized);
            write_mask(base.string() + "_binarized.png", s.binarized);
            write_mask(base.string() + "_opened.png", s.opened);
            write_mask(base.string() + "_cleared.png", s.cleared);
            write_mask(base.string() + "_dilated.png", s.dilated);
        }
    });
    for (const auto& w : warnings) {
        if (!w.empty()) warn(w);
    }
    info(fmt::format("segmented {} images into {}", images.size(), root.string()));
    return kExitOk;
}

// ---------------------------------------------------------------- augment

int cmd_augment(const GlobalOptions& g, const std::vector<std::string>& inputs, const std::string& mask_dir,
                std::size_t count) {
    const PipelineConfig cfg = resolve_config(g);
    const auto images = expand_inputs(inputs);
    const fs::path root(out_dir(cfg, g, "augmented"));
    make_dir(root / "images");
    make_dir(root / "masks");
    const aug::Augmenter& augmenter = cfg.augment;

    std::vector<std::string> rows(images.size() * count);
    std::vector<std::string> warnings(images.size());
    parallel_for(images.size(), cfg.parallel, [&](std::size_t i) {
        const GrayImage im = read_image(images[i].path);
        BinaryMask lung;
        if (augmenter.needs_lung()) {
            if (!mask_dir.empty()) {
                lung = read_mask((fs::path(mask_dir) / (images[i].id + ".png")).string());
            } else {
                lung = seg::segment_lungs(im, cfg.seg.resolve(im.width(), im.height())).mask;
            }
        }
        for (std::size_t k = 0; k < count; ++k) {
            const std::string id = fmt::format("{}_{:03}", images[i].id, k);
            Rng rng = Rng::derive(cfg.seed, {i, k});
            std::string& row = rows[i * count + k];
            try {
                const auto o = augmenter(im, lung, rng);
                write_image((root / "images" / (id + ".png")).string(), o.anomaly_image);
                write_image((root / "masks" / (id + ".png")).string(), o.soft_mask);
                row = fmt::format("{},{},{},{},ok,{},{},{},{},{},{},{},{},{},{},{},{},{},{}", id, images[i].id, k,
                                  aug::to_string(augmenter.mode), o.patch_src_rect.x, o.patch_src_rect.y,
                                  o.patch_dst_rect.x, o.patch_dst_rect.y, o.patch_dst_rect.width,
                                  o.patch_dst_rect.height,
                                  o.shape.kind == img::ShapeKind::ellipse ? "ellipse" : "rectangle", o.shape.cx,
                                  o.shape.cy, o.shape.half_a, o.shape.half_b, o.fill_value, o.blur_radius,
                                  o.rotation_deg);
            } catch (const Error& e) {
                if (e.code() != Errc::NoValidPlacement && e.code() != Errc::NoLungRegion) throw;
                row = fmt::format("{},{},{},{},{},,,,,,,,,,,,,", id, images[i].id, k, aug::to_string(augmenter.mode),
                                  to_string(e.code()));
                if (warnings[i].empty()) warnings[i] = fmt::format("{}: {}", images[i].path, e.what());
            }
        }
    });
    for (const auto& w : warnings) {
        if (!w.empty()) warn(w);
    }
    std::string csv =
        "id,source,rep,mode,status,src_x,src_y,dst_x,dst_y,width,height,shape,cx,cy,half_a,half_b,fill,blur_radius,"
        "rotation_deg\n";
    for (const auto& r : rows) csv += r + '\n';
    write_file((root / "provenance.csv").string(), csv);
    info(fmt::format("wrote {} augmentations to {}", rows.size(), root.string()));
    return kExitOk;
}

// ---------------------------------------------------------------- train

Split split_from_inputs(const std::vector<std::string>& inputs, std::size_t workers) {
    const auto files = expand_inputs(inputs);
    Split s;
    s.images.resize(files.size());
    for (const auto& f : files) {
        s.ids.push_back(f.id);
        s.labels.push_back(-1);
        s.groups.emplace_back();
    }
    parallel_for(files.size(), workers, [&](std::size_t i) { s.images[i] = read_image(files[i].path); });
    return s;
}

// Labels for ids listed in manifest.csv files found next to the inputs.
void attach_labels(Split& split, const std::vector<std::string>& inputs) {
    std::map<std::string, int> labels;
    for (const auto& in : inputs) {
        const fs::path manifest = fs::path(in) / "manifest.csv";
        if (!fs::is_directory(in) || !fs::exists(manifest)) continue;
        const std::string text = read_file(manifest.string());
        std::istringstream ss(text);
        std::string line;
        std::getline(ss, line);
        while (std::getline(ss, line)) {
            const auto f = split_csv_line(line);
            if (f.size() >= 2) labels[std::string(f[0])] = f[1] == "abnormal" ? 1 : 0;
        }
    }
    for (std::size_t i = 0; i < split.size(); ++i) {
        if (auto it = labels.find(split.ids[i]); it != labels.end()) split.labels[i] = it->second;
    }
}

int cmd_train(const GlobalOptions& g, const std::vector<std::string>& inputs) {
    const PipelineConfig cfg = resolve_config(g);
    Split train;
    if (inputs.empty()) {
        train = load_corpus(cfg).train;
    } else {
        train = split_from_inputs(inputs, cfg.parallel);
    }
    if (train.size() == 0) throw Error(Errc::EmptyDataset, "no training images");
    std::vector<BinaryMask> lungs;
    if (cfg.augment.needs_lung()) {
        lungs.resize(train.size());
        parallel_for(train.size(), cfg.parallel, [&](std::size_t i) {
            const GrayImage& im = train.images[i];
            lungs[i] = seg::segment_lungs(im, cfg.seg.resolve(im.width(), im.height())).mask;
        });
    }
    nn::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    tc.workers = cfg.parallel;
    info(fmt::format("training on {} images, mode {}, seed {}", train.size(), aug::to_string(cfg.augment.mode), tc.seed));
    const auto result = nn::train(train.images, lungs, cfg.augment, cfg.descriptor, tc);

    const fs::path root(out_dir(cfg, g, "model"));
    make_dir(root);
    std::ostringstream ckpt;
    nn::save_checkpoint(ckpt, result.model, cfg.descriptor);
    write_file((root / "model.ckpt").string(), ckpt.str());
    write_file((root / "train_log.csv").string(), train_log_csv(result.log));
    std::vector<nn::FeatureVector> desc(train.size());
    parallel_for(train.size(), cfg.parallel,
                 [&](std::size_t i) { desc[i] = nn::extract_features(train.images[i], cfg.descriptor); });
    write_file((root / "features_train.csv").string(), features_csv({train.ids, embed(result.model, desc, cfg.parallel)}));
    info(fmt::format("final mean loss {}; wrote {}", result.log.back().mean_loss, root.string()));
    return kExitOk;
}

// ---------------------------------------------------------------- score

int cmd_score(const GlobalOptions& g, const std::string& model_path, const std::string& reference_path,
              const std::vector<std::string>& inputs) {
    const PipelineConfig cfg = resolve_config(g);
    std::istringstream ckpt_in(read_file(model_path));
    const auto [model, descriptor] = [&] {
        try {
            return nn::load_checkpoint(ckpt_in);
        } catch (const Error& e) {
            throw Error(e.code(), fmt::format("{}: {}", model_path, e.detail()));
        }
    }();
    const std::string reference_text = read_file(reference_path);
    FeatureTable reference = [&] {
        try {
            return parse_features_csv(reference_text);
        } catch (const Error& e) {
            throw Error(e.code(), fmt::format("{}: {}", reference_path, e.detail()));
        }
    }();
    Split queries = split_from_inputs(inputs, cfg.parallel);
    attach_labels(queries, inputs);
    std::vector<nn::FeatureVector> desc(queries.size());
    parallel_for(queries.size(), cfg.parallel,
                 [&](std::size_t i) { desc[i] = nn::extract_features(queries.images[i], descriptor); });
    const auto kd = kde::KdeModel::fit(reference.rows, cfg.kde_bandwidth);
    const auto scores = kde::anomaly_scores(kd, queries.ids, embed(model, desc, cfg.parallel));
    std::vector<ScoreRow> rows;
    for (std::size_t i = 0; i < scores.entries.size(); ++i) {
        const auto& e = scores.entries[i];
        rows.push_back({e.id, e.raw, e.anomaly_score, queries.labels[i]});
    }
    const std::string out = g.out.empty() ? std::string("scores.csv") : g.out;
    if (fs::path(out).has_parent_path()) make_dir(fs::path(out).parent_path());
    write_file(out, scores_csv(rows));
    info(fmt::format("scored {} images into {}", rows.size(), out));
    return kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const GlobalOptions& g, const std::string& scores_path, std::optional<double> threshold) {
    const PipelineConfig cfg = resolve_config(g);
    const std::string csv = read_file(scores_path);
    std::vector<ScoreRow> rows;
    try {
        rows = parse_scores_csv(csv);
    } catch (const Error& e) {
        throw Error(e.code(), fmt::format("{}: {}", scores_path, e.detail()));
    }
    std::vector<eval::LabeledScore> data;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].label < 0) {
            throw Error(Errc::ParseError, fmt::format("{}: line {}: row '{}' has no label", scores_path, i + 2, rows[i].id));
        }
        data.push_back({rows[i].id, rows[i].score, rows[i].label, {}});
    }
    const double t = threshold ? *threshold : eval::best_f1_threshold(data).threshold;
    const auto report = eval::metrics_at(data, t);
    if (!report.auc) throw Error(Errc::SingleClass, "scores contain a single class; AUC is undefined");
    const std::string text = fmt::format("threshold_source: {}\n", threshold ? "given" : "best_f1") + metrics_text(report, {});
    fmt::print("{}", text);
    if (!g.out.empty()) {
        const fs::path root(g.out);
        make_dir(root);
        write_file((root / "metrics.txt").string(), text);
        write_file((root / "metrics.csv").string(), metrics_csv(report, {}));
        write_file((root / "roc.csv").string(), roc_csv(eval::roc_curve(data)));
    }
    return kExitOk;
}

// ---------------------------------------------------------------- pipeline

int cmd_pipeline(const GlobalOptions& g) {
    const PipelineConfig cfg = resolve_config(g);
    const Corpus corpus = load_corpus(cfg);
    info(fmt::format("corpus: {} train, {} validation, {} test", corpus.train.size(), corpus.val.size(), corpus.test.size()));
    const auto result = run_pipeline(cfg, corpus, info);
    write_artifacts(cfg.out, cfg, corpus, result);
    info(fmt::format("wrote {}", cfg.out));
    return kExitOk;
}

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::ConfigError: return kExitUsage;
        case Errc::IoError:
        case Errc::ParseError: return kExitIo;
        default: return kExitComputation;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"AnatPaste anomaly detection: lung-constrained augmentation, pair classifier and density scoring"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    GlobalOptions g;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", g.config, "Configuration file of `key = value` lines")->check(CLI::ExistingFile);
        sub->add_option("--set", g.set, "Override one configuration key (key=value); repeatable");
        sub->add_option("--seed", g.seed, "Base seed");
        sub->add_option("--parallel", g.parallel, "Worker threads; outputs do not depend on it")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", g.out, "Output directory (or file for score)");
    };
    auto add_mode = [&](CLI::App* sub) {
        sub->add_option("--mode", g.mode, "Augmentation mode")
            ->check(CLI::IsMember({"anat", "anat-noseg", "anat-noblur", "cutpaste-scar"}));
    };

    std::size_t n_normal = 100, n_abnormal = 100, count = 1;
    std::uint64_t first_index = 0;
    std::vector<std::string> inputs;
    std::string mask_dir, model_path, reference_path, scores_path;
    std::optional<double> threshold;
    bool show_keys = false;

    auto* phantom_cmd = app.add_subcommand("phantom", "Generate synthetic radiographs with ground-truth masks");
    add_common(phantom_cmd);
    phantom_cmd->add_option("--normal", n_normal, "Number of normal images")->capture_default_str();
    phantom_cmd->add_option("--abnormal", n_abnormal, "Number of images with lesions")->capture_default_str();
    phantom_cmd->add_option("--first-index", first_index, "Index of the first sample")->capture_default_str();

    auto* segment_cmd = app.add_subcommand("segment", "Segment lung fields");
    add_common(segment_cmd);
    segment_cmd->add_option("inputs", inputs, "Image files or directories")->required();
    segment_cmd->add_flag("--snapshots", g.snapshots, "Also write every intermediate stage");

    auto* augment_cmd = app.add_subcommand("augment", "Synthesize anomalies");
    add_common(augment_cmd);
    add_mode(augment_cmd);
    augment_cmd->add_option("inputs", inputs, "Image files or directories")->required();
    augment_cmd->add_option("--masks", mask_dir, "Directory of lung masks named like the images");
    augment_cmd->add_option("--count", count, "Augmentations per image")->capture_default_str()->check(CLI::PositiveNumber);

    auto* train_cmd = app.add_subcommand("train", "Train the pair classifier on normal images");
    add_common(train_cmd);
    add_mode(train_cmd);
    train_cmd->add_option("inputs", inputs, "Normal images or directories (default: the configured corpus)");

    auto* score_cmd = app.add_subcommand("score", "Score images against training features");
    add_common(score_cmd);
    score_cmd->add_option("--model", model_path, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
    score_cmd->add_option("--reference", reference_path, "features_train.csv written by train")
        ->required()
        ->check(CLI::ExistingFile);
    score_cmd->add_option("inputs", inputs, "Image files or directories")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Metrics for a scores CSV");
    add_common(eval_cmd);
    eval_cmd->add_option("scores", scores_path, "Scores CSV (id,raw,score,label)")->required();
    eval_cmd->add_option("--threshold", threshold, "Decision threshold (default: best F1)");

    auto* pipeline_cmd = app.add_subcommand("pipeline", "Train, score and evaluate over several seeded runs");
    add_common(pipeline_cmd);
    add_mode(pipeline_cmd);
    pipeline_cmd->add_option("--runs", g.runs, "Number of runs")->check(CLI::PositiveNumber);
    pipeline_cmd->add_flag("--show-config", show_keys, "Print the resolved configuration and exit");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (phantom_cmd->parsed()) return cmd_phantom(g, n_normal, n_abnormal, first_index);
        if (segment_cmd->parsed()) return cmd_segment(g, inputs);
        if (augment_cmd->parsed()) return cmd_augment(g, inputs, mask_dir, count);
        if (train_cmd->parsed()) return cmd_train(g, inputs);
        if (score_cmd->parsed()) return cmd_score(g, model_path, reference_path, inputs);
        if (eval_cmd->parsed()) return cmd_eval(g, scores_path, threshold);
        if (pipeline_cmd->parsed()) {
            if (show_keys) {
                fmt::print("{}", resolve_config(g).to_text());
                return kExitOk;
            }
            return cmd_pipeline(g);
        }
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitUnexpected;
    }
    return kExitUsage;
}

}  // namespace anatpaste::app
