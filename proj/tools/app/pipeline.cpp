#include "pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "anatpaste/error.hpp"
#include "anatpaste/lungseg.hpp"
#include "anatpaste/parallel.hpp"
#include "anatpaste/phantom.hpp"
#include "csv_io.hpp"
#include "image_io.hpp"

namespace anatpaste::app {

namespace fs = std::filesystem;

namespace {


template <typename Fn>
auto in_stage(std::string_view stage, std::size_t run, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), run == 0 ? fmt::format("{}: {}", stage, e.detail())
                                       : fmt::format("run {} {}: {}", run, stage, e.detail()));
    }
}

Split split_from_samples(std::vector<phantom::PhantomSample>&& samples) {
    Split s;
    for (auto& p : samples) {
        s.ids.push_back(p.id);
        s.labels.push_back(p.label);
        s.groups.push_back(p.label == 1 ? phantom::lesion_stratum(p) : std::string());
        s.images.push_back(std::move(p.image));
    }
    return s;
}

std::string find_image(const fs::path& dir, const std::string& id) {
    for (const char* ext : {".png", ".pgm"}) {
        const fs::path p = dir / "images" / (id + ext);
        if (fs::exists(p)) return p.string();
    }
    throw Error(Errc::IoError, fmt::format("{}: no image for id '{}'", (dir / "images").string(), id));
}

// Stratum from the manifest's lesion list, using the phantom module's rule.
std::string stratum_from_field(std::string_view lesions, std::size_t line_no) {
    phantom::PhantomSample sample;
    while (!lesions.empty()) {
        const auto semi = lesions.find(';');
        std::string_view item = lesions.substr(0, semi);
        lesions = semi == std::string_view::npos ? std::string_view{} : lesions.substr(semi + 1);
        std::vector<double> parts;
        while (!item.empty()) {
            const auto colon = item.find(':');
            parts.push_back(parse_double_field(item.substr(0, colon), line_no));
            item = colon == std::string_view::npos ? std::string_view{} : item.substr(colon + 1);
        }
        if (parts.size() != 4) throw Error(Errc::ParseError, fmt::format("line {}: lesion needs cx:cy:r:a", line_no));
        sample.lesions.push_back({parts[0], parts[1], parts[2], parts[3]});
    }
    return sample.lesions.empty() ? std::string() : phantom::lesion_stratum(sample);
}

Split read_split_dir(const std::string& dir, std::size_t workers) {
    const fs::path root(dir);
    const std::string manifest_path = (root / "manifest.csv").string();
    const std::string text = read_file(manifest_path);
    Split s;
    std::vector<std::string_view> header;
    std::size_t line_no = 0;
    std::string_view rest = text;
    int lesion_col = -1;
    try {
        while (!rest.empty()) {
            const auto nl = rest.find('\n');
            std::string_view line = rest.substr(0, nl);
            rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty()) continue;
            const auto fields = split_csv_line(line);
            if (header.empty()) {
                if (fields.size() < 2 || fields[0] != "id" || fields[1] != "class") {
                    throw Error(Errc::ParseError, fmt::format("line {}: header must start with 'id,class'", line_no));
                }
                header = fields;
                for (std::size_t j = 0; j < fields.size(); ++j) {
                    if (fields[j] == "lesions") lesion_col = static_cast<int>(j);
                }
                continue;
            }
            if (fields.size() != header.size()) {
                throw Error(Errc::ParseError,
                            fmt::format("line {}: expected {} fields, found {}", line_no, header.size(), fields.size()));
            }
            int label = 0;
            if (fields[1] == "abnormal") label = 1;
            else if (fields[1] != "normal") {
                throw Error(Errc::ParseError, fmt::format("line {}: class must be normal or abnormal", line_no));
            }
            s.ids.emplace_back(fields[0]);
            s.labels.push_back(label);
            s.groups.push_back(label == 1 && lesion_col >= 0
                                   ? stratum_from_field(fields[static_cast<std::size_t>(lesion_col)], line_no)
                                   : std::string());
        }
    } catch (const Error& e) {
        throw Error(e.code(), fmt::format("{}: {}", manifest_path, e.detail()));
    }
    s.images.resize(s.ids.size());
    parallel_for(s.ids.size(), workers, [&](std::size_t i) { s.images[i] = read_image(find_image(root, s.ids[i])); });
    return s;
}

kde::ScoreSet score_split(const kde::KdeModel& model, const Split& split, const std::vector<nn::FeatureVector>& emb,
                          const std::optional<kde::Normalization>& frozen) {
    return kde::anomaly_scores(model, split.ids, emb, frozen);
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string("nan"); }

}  // namespace

Corpus load_corpus(const PipelineConfig& cfg) {
    Corpus c;
    const auto& d = cfg.data;
    if (d.source == "phantom") {
        in_stage("phantom generation", 0, [&] {
            auto train = phantom::generate_corpus(cfg.phantom, d.n_train, 0, 0, cfg.parallel);
            std::uint64_t next = d.n_train;
            auto val = phantom::generate_corpus(cfg.phantom, d.n_val_normal, d.n_val_abnormal, next, cfg.parallel);
            next += d.n_val_normal + d.n_val_abnormal;
            auto test = phantom::generate_corpus(cfg.phantom, d.n_test_normal, d.n_test_abnormal, next, cfg.parallel);
            std::vector<phantom::PhantomSample> all;
            for (auto* part : {&train, &val, &test}) {
                for (const auto& p : *part) {
                    phantom::PhantomSample meta = p;
                    all.push_back(std::move(meta));
                }
            }
            c.manifest = phantom::manifest_csv(all);
            c.train = split_from_samples(std::move(train));
            c.val = split_from_samples(std::move(val));
            c.test = split_from_samples(std::move(test));
        });
    } else {
        c.train = in_stage("loading train split", 0, [&] { return read_split_dir(d.train_dir, cfg.parallel); });
        c.val = in_stage("loading validation split", 0, [&] { return read_split_dir(d.val_dir, cfg.parallel); });
        c.test = in_stage("loading test split", 0, [&] { return read_split_dir(d.test_dir, cfg.parallel); });
        for (int label : c.train.labels) {
            if (label != 0) throw Error(Errc::InvalidArgument, "training split must contain normal images only");
        }
    }
    if (c.train.size() == 0) throw Error(Errc::EmptyDataset, "training split is empty");
    if (c.val.size() == 0) throw Error(Errc::EmptyDataset, "validation split is empty");
    if (c.test.size() == 0) throw Error(Errc::EmptyDataset, "test split is empty");
    check_disjoint(c);
    return c;
}

void check_disjoint(const Corpus& corpus) {
    std::set<std::string> seen;
    for (const Split* s : {&corpus.train, &corpus.val, &corpus.test}) {
        for (const auto& id : s->ids) {
            if (!seen.insert(id).second) {
                throw Error(Errc::InvalidArgument, fmt::format("id '{}' appears in more than one split or twice", id));
            }
        }
    }
}

std::vector<nn::FeatureVector> embed(const nn::MlpModel& model, const std::vector<nn::FeatureVector>& descriptors,
                                     std::size_t workers) {
    std::vector<nn::FeatureVector> out(descriptors.size());
    parallel_for(descriptors.size(), workers, [&](std::size_t i) { out[i] = nn::forward(model, descriptors[i]).penultimate; });
    return out;
}

std::vector<eval::LabeledScore> labeled(const kde::ScoreSet& scores, const Split& split) {
    std::vector<eval::LabeledScore> out;
    out.reserve(scores.entries.size());
    for (std::size_t i = 0; i < scores.entries.size(); ++i) {
        if (scores.entries[i].id != split.ids[i]) {
            throw Error(Errc::MisalignedEnsemble, fmt::format("score id '{}' does not match split id '{}'",
                                                              scores.entries[i].id, split.ids[i]));
        }
        out.push_back({split.ids[i], scores.entries[i].anomaly_score, split.labels[i], split.groups[i]});
    }
    return out;
}

namespace {

// Threshold from validation, applied to test.
void evaluate(const PipelineConfig& cfg, const Corpus& corpus, const kde::ScoreSet& val, const kde::ScoreSet& test,
              eval::MetricsReport& val_report, eval::MetricsReport& test_report,
              std::map<std::string, eval::MetricsReport>& groups) {
    const auto val_data = labeled(val, corpus.val);
    const auto test_data = labeled(test, corpus.test);
    const double threshold = eval::best_f1_threshold(val_data).threshold;
    val_report = eval::metrics_at(val_data, threshold);
    test_report = eval::metrics_at(test_data, threshold);
    groups.clear();
    if (cfg.group_metrics) groups = eval::metrics_by_group(test_data, threshold);
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const Corpus& corpus, const Logger& log) {
    cfg.validate();
    check_disjoint(corpus);
    const std::size_t workers = cfg.parallel;
    auto say = [&](const std::string& msg) {
        if (log) log(msg);
    };

    std::vector<nn::FeatureVector> train_desc(corpus.train.size()), val_desc(corpus.val.size()),
        test_desc(corpus.test.size());
    in_stage("descriptor extraction", 0, [&] {
        parallel_for(train_desc.size(), workers,
                     [&](std::size_t i) { train_desc[i] = nn::extract_features(corpus.train.images[i], cfg.descriptor); });
        parallel_for(val_desc.size(), workers,
                     [&](std::size_t i) { val_desc[i] = nn::extract_features(corpus.val.images[i], cfg.descriptor); });
        parallel_for(test_desc.size(), workers,
                     [&](std::size_t i) { test_desc[i] = nn::extract_features(corpus.test.images[i], cfg.descriptor); });
    });

    std::vector<BinaryMask> lungs(corpus.train.size());
    if (cfg.augment.needs_lung()) {
        in_stage("lung segmentation", 0, [&] {
            parallel_for(lungs.size(), workers, [&](std::size_t i) {
                const GrayImage& im = corpus.train.images[i];
                lungs[i] = seg::segment_lungs(im, cfg.seg.resolve(im.width(), im.height())).mask;
            });
        });
        for (std::size_t i = 0; i < lungs.size(); ++i) {
            if (!lungs[i].any()) {
                throw Error(Errc::NoLungRegion,
                            fmt::format("lung segmentation: training image '{}' has no lung region", corpus.train.ids[i]));
            }
        }
    }

    const auto frozen_from = [&](const kde::ScoreSet& val) -> std::optional<kde::Normalization> {
        if (cfg.normalization == NormalizationSource::validation) return val.normalization;
        return std::nullopt;
    };

    PipelineResult result;
    for (std::size_t r = 0; r < cfg.runs; ++r) {
        const std::size_t run = r + 1;
        RunResult rr;
        rr.run = run;
        rr.seed = cfg.seed + r;
        nn::TrainConfig tc = cfg.train;
        tc.seed = rr.seed;
        tc.workers = workers;
        say(fmt::format("run {}/{}: training with seed {}", run, cfg.runs, rr.seed));

        nn::EpochHook hook;
        if (cfg.select_best_val) {
            hook = [&](const nn::MlpModel& model, std::size_t) {
                const auto tr = embed(model, train_desc, workers);
                const auto kd = kde::KdeModel::fit(tr, cfg.kde_bandwidth);
                const auto vs = score_split(kd, corpus.val, embed(model, val_desc, workers), std::nullopt);
                return eval::auc(labeled(vs, corpus.val));
            };
        }
        rr.training = in_stage("training", run, [&] {
            return nn::train_pairs(
                train_desc.size(), cfg.descriptor.dimension(), [&](std::size_t i) { return train_desc[i]; },
                [&](std::size_t i, Rng& rng) {
                    const auto outcome = cfg.augment(corpus.train.images[i], lungs[i], rng);
                    return nn::extract_features(outcome.anomaly_image, cfg.descriptor);
                },
                tc, hook);
        });

        in_stage("scoring", run, [&] {
            rr.train_embedding = embed(rr.training.model, train_desc, workers);
            rr.val_embedding = embed(rr.training.model, val_desc, workers);
            rr.test_embedding = embed(rr.training.model, test_desc, workers);
            const auto kd = kde::KdeModel::fit(rr.train_embedding, cfg.kde_bandwidth);
            rr.val_scores = score_split(kd, corpus.val, rr.val_embedding, std::nullopt);
            rr.test_scores = score_split(kd, corpus.test, rr.test_embedding, frozen_from(rr.val_scores));
        });
        in_stage("evaluation", run, [&] {
            evaluate(cfg, corpus, rr.val_scores, rr.test_scores, rr.val_report, rr.test_report, rr.test_groups);
        });
        say(fmt::format("run {}/{}: test AUC {}", run, cfg.runs, fmt_opt(rr.test_report.auc)));
        result.runs.push_back(std::move(rr));
    }

    in_stage("ensemble", 0, [&] {
        std::vector<kde::ScoreSet> vals, tests;
        for (const auto& rr : result.runs) {
            vals.push_back(rr.val_scores);
            tests.push_back(rr.test_scores);
        }
        auto& e = result.ensemble;
        e.val_scores = kde::ensemble_average(vals);
        e.test_scores = kde::ensemble_average(tests);
        evaluate(cfg, corpus, e.val_scores, e.test_scores, e.val_report, e.test_report, e.test_groups);
    });
    say(fmt::format("ensemble: test AUC {}", fmt_opt(result.ensemble.test_report.auc)));
    return result;
}

std::string metrics_text(const eval::MetricsReport& report, const std::map<std::string, eval::MetricsReport>& groups) {
    auto block = [](const eval::MetricsReport& m, std::string_view prefix) {
        return fmt::format(
            "{0}auc: {1}\n{0}accuracy: {2}\n{0}f1: {3}\n{0}threshold: {4}\n{0}tp: {5}\n{0}fp: {6}\n{0}tn: {7}\n{0}fn: {8}\n",
            prefix, fmt_opt(m.auc), m.accuracy, m.f1, m.threshold, m.confusion.tp, m.confusion.fp, m.confusion.tn,
            m.confusion.fn);
    };
    std::string out = block(report, "");
    for (const auto& [name, m] : groups) out += block(m, fmt::format("group.{}.", name));
    return out;
}

std::string metrics_csv(const eval::MetricsReport& report, const std::map<std::string, eval::MetricsReport>& groups) {
    auto row = [](std::string_view scope, const eval::MetricsReport& m) {
        return fmt::format("{},{},{},{},{},{},{},{},{}\n", scope, fmt_opt(m.auc), m.accuracy, m.f1, m.threshold,
                           m.confusion.tp, m.confusion.fp, m.confusion.tn, m.confusion.fn);
    };
    std::string out = "scope,auc,accuracy,f1,threshold,tp,fp,tn,fn\n" + row("all", report);
    for (const auto& [name, m] : groups) out += row(name, m);
    return out;
}

namespace {

std::string scores_file(const kde::ScoreSet& scores, const Split& split) {
    std::vector<ScoreRow> rows;
    for (std::size_t i = 0; i < scores.entries.size(); ++i) {
        const auto& e = scores.entries[i];
        rows.push_back({e.id, e.raw, e.anomaly_score, split.labels[i]});
    }
    return scores_csv(rows);
}

std::string features_file(const Split& split, const std::vector<nn::FeatureVector>& rows) {
    return features_csv({split.ids, rows});
}


struct Stat {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single run
};

Stat stat_of(const std::vector<double>& v) {
    Stat s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

void write_roc(const std::string& path, const kde::ScoreSet& scores, const Split& split) {
    const auto data = labeled(scores, split);
    bool pos = false, neg = false;
    for (const auto& d : data) (d.label == 1 ? pos : neg) = true;
    if (pos && neg) write_file(path, roc_csv(eval::roc_curve(data)));
}

}  // namespace

void write_artifacts(const std::string& dir, const PipelineConfig& cfg, const Corpus& corpus,
                     const PipelineResult& result) {
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error(Errc::IoError, fmt::format("{}: {}", root.string(), ec.message()));
    write_file((root / "config.txt").string(), cfg.to_text(false));
    if (!corpus.manifest.empty()) write_file((root / "manifest.csv").string(), corpus.manifest);

    for (const auto& rr : result.runs) {
        const fs::path rd = root / fmt::format("run_{:02}", rr.run);
        fs::create_directories(rd, ec);
        if (ec) throw Error(Errc::IoError, fmt::format("{}: {}", rd.string(), ec.message()));
        {
            std::ostringstream ckpt;
            nn::save_checkpoint(ckpt, rr.training.model, cfg.descriptor);
            write_file((rd / "model.ckpt").string(), ckpt.str());
        }
        write_file((rd / "train_log.csv").string(), train_log_csv(rr.training.log));
        if (cfg.write_features) {
            write_file((rd / "features_train.csv").string(), features_file(corpus.train, rr.train_embedding));
            write_file((rd / "features_val.csv").string(), features_file(corpus.val, rr.val_embedding));
            write_file((rd / "features_test.csv").string(), features_file(corpus.test, rr.test_embedding));
        }
        write_file((rd / "scores_val.csv").string(), scores_file(rr.val_scores, corpus.val));
        write_file((rd / "scores_test.csv").string(), scores_file(rr.test_scores, corpus.test));
        write_file((rd / "metrics.txt").string(),
                   fmt::format("run: {}\nseed: {}\nselected_epoch: {}\n", rr.run, rr.seed, rr.training.best_epoch) +
                       metrics_text(rr.test_report, rr.test_groups));
        write_file((rd / "metrics.csv").string(), metrics_csv(rr.test_report, rr.test_groups));
        write_roc((rd / "roc_test.csv").string(), rr.test_scores, corpus.test);
    }

    const fs::path ed = root / "ensemble";
    fs::create_directories(ed, ec);
    if (ec) throw Error(Errc::IoError, fmt::format("{}: {}", ed.string(), ec.message()));
    const auto& e = result.ensemble;
    write_file((ed / "scores_val.csv").string(), scores_file(e.val_scores, corpus.val));
    write_file((ed / "scores_test.csv").string(), scores_file(e.test_scores, corpus.test));
    write_file((ed / "metrics.txt").string(),
               fmt::format("runs: {}\n", result.runs.size()) + metrics_text(e.test_report, e.test_groups));
    write_file((ed / "metrics.csv").string(), metrics_csv(e.test_report, e.test_groups));
    write_roc((ed / "roc_test.csv").string(), e.test_scores, corpus.test);

    // Summary: one row per run, then mean/std across runs and the ensemble.
    std::string csv = "scope,auc,accuracy,f1,threshold\n";
    std::vector<double> aucs, accs, f1s;
    for (const auto& rr : result.runs) {
        const auto& m = rr.test_report;
        csv += fmt::format("run_{:02},{},{},{},{}\n", rr.run, fmt_opt(m.auc), m.accuracy, m.f1, m.threshold);
        aucs.push_back(m.auc.value_or(std::nan("")));
        accs.push_back(m.accuracy);
        f1s.push_back(m.f1);
    }
    const Stat auc_s = stat_of(aucs), acc_s = stat_of(accs), f1_s = stat_of(f1s);
    csv += fmt::format("mean,{},{},{},\n", auc_s.mean, acc_s.mean, f1_s.mean);
    csv += fmt::format("std,{},{},{},\n", auc_s.std, acc_s.std, f1_s.std);
    csv += fmt::format("ensemble,{},{},{},{}\n", fmt_opt(e.test_report.auc), e.test_report.accuracy, e.test_report.f1,
                       e.test_report.threshold);
    write_file((root / "summary.csv").string(), csv);

    std::string txt = fmt::format("mode: {}\nruns: {}\nseeds: {}..{}\n", aug::to_string(cfg.augment.mode),
                                  result.runs.size(), cfg.seed, cfg.seed + result.runs.size() - 1);
    txt += fmt::format("test auc: {:.4f} +- {:.4f}\n", auc_s.mean, auc_s.std);
    txt += fmt::format("test accuracy: {:.4f} +- {:.4f}\n", acc_s.mean, acc_s.std);
    txt += fmt::format("test f1: {:.4f} +- {:.4f}\n", f1_s.mean, f1_s.std);
    txt += fmt::format("ensemble test auc: {}\n", e.test_report.auc ? fmt::format("{:.4f}", *e.test_report.auc) : "nan");
    txt += fmt::format("ensemble test accuracy: {:.4f}\nensemble test f1: {:.4f}\nensemble threshold: {}\n",
                       e.test_report.accuracy, e.test_report.f1, e.test_report.threshold);
    write_file((root / "summary.txt").string(), txt);
}

}  // namespace anatpaste::app
