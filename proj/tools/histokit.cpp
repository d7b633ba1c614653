// histokit command-line entry point.
//
// Exit codes: 0 success, 1 processing error, 2 usage error. Every subcommand writes a JSON
// run report (inputs, seed, version, summary, failures) next to its outputs, also on failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "histokit/histokit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace histokit;

namespace {

struct UsageError : Error {
    using Error::Error;
};

struct Common {
    unsigned jobs = 1;
    bool fail_fast = false;
    std::string report;
};

unsigned default_jobs() {
    const char* env = std::getenv("HISTOKIT_JOBS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw UsageError(std::string("HISTOKIT_JOBS must be an integer in [1, 1024], got '") + env + "'");
    return static_cast<unsigned>(v);
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--jobs", c.jobs, "worker threads (default: HISTOKIT_JOBS or 1)")->check(CLI::Range(1, 1024));
    cmd->add_flag("--fail-fast", c.fail_fast, "stop at the first failing item");
    cmd->add_option("--report", c.report, "run report path (default: next to the outputs)");
}

class RunReport {
public:
    RunReport(std::string command, fs::path default_path) : path_(std::move(default_path)) {
        j_["command"] = std::move(command);
        j_["version"] = kVersion;
        j_["seed"] = nullptr;
        j_["inputs"] = json::array();
        j_["summary"] = json::object();
        j_["failures"] = json::array();
        j_["status"] = "ok";
    }

    void input(const std::string& key, const json& value) { j_["inputs"].push_back({{key, value}}); }
    void seed(std::uint64_t s) { j_["seed"] = s; }
    json& summary() { return j_["summary"]; }
    void failure(const std::string& item, const std::string& what) {
        j_["failures"].push_back({{"item", item}, {"error", what}});
        j_["status"] = "failed";
    }
    void fatal(const std::string& what) {
        j_["error"] = what;
        j_["status"] = "failed";
    }

    void write() const {
        if (path_.empty()) return;
        try {
            if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
            std::ofstream out(path_);
            out << j_.dump(2) << '\n';
            if (!out) throw IoError("write failed");
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: cannot write run report %s: %s\n", path_.string().c_str(), e.what());
        }
    }

private:
    json j_;
    fs::path path_;
};

fs::path report_beside_file(const fs::path& out) {
    fs::path p = out;
    return p.replace_extension(".report.json");
}

// Per-item work with failures collected in item order; with fail_fast, items not yet
// started after a failure are skipped. Returns the number of failed items.
std::size_t for_items(const std::vector<std::string>& names, const Common& c, RunReport& report,
                      const std::function<void(std::size_t)>& fn) {
    std::vector<std::string> errors(names.size());
    std::vector<std::uint8_t> failed(names.size(), 0);
    std::atomic<bool> stop{false};
    parallel_for(names.size(), c.jobs, [&](std::size_t i) {
        if (stop.load()) return;
        try {
            fn(i);
        } catch (const std::exception& e) {
            errors[i] = e.what();
            failed[i] = 1;
            if (c.fail_fast) stop.store(true);
        }
    });
    std::size_t n = 0;
    for (std::size_t i = 0; i < names.size(); ++i)
        if (failed[i]) {
            std::fprintf(stderr, "error: %s: %s\n", names[i].c_str(), errors[i].c_str());
            report.failure(names[i], errors[i]);
            ++n;
        }
    return n;
}

std::map<std::string, fs::path> png_files_by_stem(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::map<std::string, fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out[e.path().stem().string()] = e.path();
    return out;
}

// Stems paired across two directories; unmatched stems raise unless allow_missing.
std::vector<std::string> paired_stems(const std::map<std::string, fs::path>& a, const std::map<std::string, fs::path>& b,
                                      const std::string& what_a, const std::string& what_b, bool allow_missing) {
    std::vector<std::string> both, unmatched;
    for (const auto& [stem, _] : a) {
        if (b.count(stem)) both.push_back(stem);
        else unmatched.push_back(stem + " (no " + what_b + ")");
    }
    for (const auto& [stem, _] : b)
        if (!a.count(stem)) unmatched.push_back(stem + " (no " + what_a + ")");
    if (!unmatched.empty()) {
        if (!allow_missing) throw Error("unmatched files: " + unmatched.front() + (unmatched.size() > 1 ? " and " + std::to_string(unmatched.size() - 1) + " more" : ""));
        for (const auto& u : unmatched) std::fprintf(stderr, "warning: skipping %s\n", u.c_str());
    }
    return both;
}

std::vector<fs::path> expand_probmaps(const std::vector<std::string>& args) {
    std::vector<fs::path> out;
    for (const auto& a : args) {
        if (fs::is_directory(a)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(a)) {
                const std::string name = e.path().filename().string();
                const std::string suf = ".probmap.json";
                if (name.size() > suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0)
                    found.push_back(wsi::probmap_stem(e.path()));
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(wsi::probmap_stem(a));
        }
    }
    if (out.empty()) throw Error("no probability maps given");
    return out;
}

// Summed in ascending order, matching the dataset score, so tile order does not matter.
double sorted_mean(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::ofstream open_output(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw IoError("cannot create " + p.string());
    return out;
}

// slide_id,label CSV with a header naming both columns; extra columns are ignored.
std::map<std::string, std::string> read_labels_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(p.string() + ": empty file");
    const auto header = wsi::split_csv_line(line);
    const auto id_col = std::find(header.begin(), header.end(), "slide_id");
    const auto label_col = std::find(header.begin(), header.end(), "label");
    if (id_col == header.end() || label_col == header.end()) throw Error(p.string() + ": header needs slide_id and label");
    const auto ii = static_cast<std::size_t>(id_col - header.begin());
    const auto li = static_cast<std::size_t>(label_col - header.begin());
    std::map<std::string, std::string> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = wsi::split_csv_line(line);
        if (f.size() != header.size()) throw Error(p.string() + " line " + std::to_string(lineno) + ": wrong field count");
        if (!out.emplace(f[ii], f[li]).second) throw Error(p.string() + ": duplicate slide_id " + f[ii]);
    }
    return out;
}

// --- subcommands -----------------------------------------------------------------------

struct NormalizeArgs {
    std::string target, reference, input, output;
};

int cmd_normalize(const NormalizeArgs& a, const Common& c) {
    const bool dir_mode = fs::is_directory(a.input);
    RunReport report("normalize", c.report.empty() ? (dir_mode ? fs::path(a.output) / "run_report.json" : report_beside_file(a.output))
                                                    : fs::path(c.report));
    report.input("input", a.input);
    try {
        stain::StainStats target;
        if (!a.target.empty()) {
            report.input("target", a.target);
            target = stain::load_stats(a.target);
        } else {
            report.input("reference", a.reference);
            target = stain::compute_stats(io::load_rgb(a.reference));
        }
        report.summary()["target"] = stain::stats_to_json(target);
        std::vector<std::string> names;
        std::vector<std::pair<fs::path, fs::path>> jobs;
        if (dir_mode) {
            for (const auto& [stem, path] : png_files_by_stem(a.input)) {
                names.push_back(stem);
                jobs.emplace_back(path, fs::path(a.output) / (stem + ".png"));
            }
        } else {
            names.push_back(a.input);
            jobs.emplace_back(a.input, a.output);
        }
        const auto failed = for_items(names, c, report, [&](std::size_t i) {
            io::save_rgb(jobs[i].second, stain::reinhard_normalize(io::load_rgb(jobs[i].first), target));
        });
        report.summary()["images"] = names.size();
        report.summary()["failed"] = failed;
        report.write();
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct SegmentArgs {
    std::string blob, border, output;
    double mpp = 0.25;
    double min_area_um2 = 13.0;
    bool allow_missing = false;
};

int cmd_segment(const SegmentArgs& a, const Common& c) {
    const bool dir_mode = fs::is_directory(a.blob);
    RunReport report("segment", c.report.empty() ? (dir_mode ? fs::path(a.output) / "run_report.json" : report_beside_file(a.output))
                                                  : fs::path(c.report));
    report.input("blob", a.blob);
    report.input("border", a.border);
    try {
        seg::SegmentationConfig cfg;
        cfg.mpp = Mpp(a.mpp);
        cfg.min_area_um2 = a.min_area_um2;
        cfg.validate();
        report.summary()["mpp"] = a.mpp;
        report.summary()["min_area_um2"] = a.min_area_um2;
        report.summary()["min_area_px"] = cfg.min_area_px();

        std::vector<std::string> names;
        std::vector<std::array<fs::path, 3>> work;
        if (dir_mode) {
            const auto blobs = png_files_by_stem(a.blob);
            const auto borders = png_files_by_stem(a.border);
            for (const auto& stem : paired_stems(blobs, borders, "blob", "border", a.allow_missing)) {
                names.push_back(stem);
                work.push_back({blobs.at(stem), borders.at(stem), fs::path(a.output) / (stem + ".png")});
            }
        } else {
            names.push_back(a.blob);
            work.push_back({a.blob, a.border, a.output});
        }
        std::vector<seg::SegmentationReport> per(names.size());
        const auto failed = for_items(names, c, report, [&](std::size_t i) {
            const auto res = seg::segment_instances(io::load_binary_mask(work[i][0]), io::load_binary_mask(work[i][1]), cfg);
            io::save_labeled_mask(work[i][2], res.labels);
            per[i] = res.report;
        });
        json tiles = json::array();
        std::size_t instances = 0, filtered = 0, dropped = 0;
        for (std::size_t i = 0; i < names.size(); ++i) {
            instances += per[i].instances;
            filtered += per[i].filtered_instances;
            dropped += per[i].dropped_pixels;
            tiles.push_back({{"tile", names[i]},
                             {"cores", per[i].cores},
                             {"instances", per[i].instances},
                             {"filtered_instances", per[i].filtered_instances},
                             {"dropped_pixels", per[i].dropped_pixels}});
        }
        report.summary()["tiles"] = tiles;
        report.summary()["instances"] = instances;
        report.summary()["filtered_instances"] = filtered;
        report.summary()["dropped_pixels"] = dropped;
        report.summary()["failed"] = failed;
        report.write();
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct EvalSegArgs {
    std::string gt_dir, pred_dir, out;
    bool allow_missing = false;
};

int cmd_eval_seg(const EvalSegArgs& a, const Common& c) {
    RunReport report("eval-seg", c.report.empty() ? report_beside_file(a.out) : fs::path(c.report));
    report.input("gt_dir", a.gt_dir);
    report.input("pred_dir", a.pred_dir);
    try {
        const auto gt = png_files_by_stem(a.gt_dir);
        const auto pred = png_files_by_stem(a.pred_dir);
        const auto names = paired_stems(gt, pred, "ground truth", "prediction", a.allow_missing);
        if (names.empty()) throw Error("no tiles to score");
        std::vector<metrics::TileScore> scores(names.size());
        std::vector<std::uint8_t> ok(names.size(), 0);
        const auto failed = for_items(names, c, report, [&](std::size_t i) {
            scores[i] = metrics::score_tile(io::load_labeled_mask(gt.at(names[i])), io::load_labeled_mask(pred.at(names[i])));
            ok[i] = 1;
        });
        std::vector<metrics::TileScore> good;
        auto out = open_output(a.out);
        out << "tile,dice1,dice2,average\n" << std::setprecision(10);
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (!ok[i]) continue;
            good.push_back(scores[i]);
            out << names[i] << ',' << scores[i].dice1 << ',' << scores[i].dice2 << ',' << scores[i].average << '\n';
        }
        if (!good.empty()) {
            std::vector<double> d1, d2;
            for (const auto& s : good) {
                d1.push_back(s.dice1);
                d2.push_back(s.dice2);
            }
            const double m1 = sorted_mean(d1), m2 = sorted_mean(d2), avg = metrics::mean_score(good);
            out << "dataset_mean," << m1 << ',' << m2 << ',' << avg << '\n';
            report.summary()["dice1"] = m1;
            report.summary()["dice2"] = m2;
            report.summary()["average"] = avg;
            std::printf("tiles=%zu dice1=%.6f dice2=%.6f average=%.6f\n", good.size(), m1, m2, avg);
        }
        if (!out) throw IoError("write failed: " + a.out);
        report.summary()["tiles"] = good.size();
        report.summary()["failed"] = failed;
        report.write();
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct GenPatchesArgs {
    std::string tiles, masks, out, dataset;
    std::uint64_t seed = 0;
    bool augment = false;
    bool allow_missing = false;
};

int cmd_gen_patches(const GenPatchesArgs& a, const Common& c) {
    RunReport report("gen-patches", c.report.empty() ? fs::path(a.out) / "run_report.json" : fs::path(c.report));
    report.input("tiles", a.tiles);
    report.input("masks", a.masks);
    report.seed(a.seed);
    try {
        const auto dataset = patches::parse_dataset(a.dataset);
        const auto tiles = png_files_by_stem(a.tiles);
        const auto masks = png_files_by_stem(a.masks);
        const auto names = paired_stems(tiles, masks, "tile", "mask", a.allow_missing);
        std::vector<std::vector<patches::Patch>> sets(names.size());
        const fs::path out(a.out);
        fs::create_directories(out / "images");
        fs::create_directories(out / "masks");
        // augmented copies are consecutive: source patch j / copy k
        auto patch_id = [&](std::size_t i, std::size_t j) {
            std::ostringstream id;
            const std::size_t per = a.augment ? patches::kAugmentationsPerPatch : 1;
            id << names[i] << '_' << patches::to_string(dataset) << '_' << std::setw(4) << std::setfill('0') << j / per;
            if (a.augment) id << "_a" << j % per;
            return id.str();
        };
        const auto failed = for_items(names, c, report, [&](std::size_t i) {
            auto set = patches::generate_patches(io::load_rgb(tiles.at(names[i])), io::load_labeled_mask(masks.at(names[i])),
                                                 dataset, a.seed, i, a.augment);
            for (std::size_t j = 0; j < set.size(); ++j) {
                io::save_rgb(out / "images" / (patch_id(i, j) + ".png"), set[j].image);
                io::save_labeled_mask(out / "masks" / (patch_id(i, j) + ".png"), set[j].mask);
            }
            sets[i] = std::move(set);
        });
        auto manifest = open_output(out / "manifest.csv");
        manifest << "patch_id,source_tile,row,col,size,dataset,augmented\n";
        std::size_t total = 0;
        for (std::size_t i = 0; i < names.size(); ++i)
            for (std::size_t j = 0; j < sets[i].size(); ++j) {
                const auto& p = sets[i][j];
                manifest << patch_id(i, j) << ',' << names[i] << ',' << p.row << ',' << p.col << ',' << p.size << ','
                         << patches::to_string(dataset) << ',' << (a.augment ? 1 : 0) << '\n';
                ++total;
            }
        report.summary()["dataset"] = patches::to_string(dataset);
        report.summary()["augment"] = a.augment;
        report.summary()["tiles"] = names.size();
        report.summary()["patches"] = total;
        report.summary()["failed"] = failed;
        report.write();
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct ExtractArgs {
    std::vector<std::string> probmaps;
    std::string labels, out;
};

int cmd_extract_features(const ExtractArgs& a, const Common& c) {
    RunReport report("extract-features", c.report.empty() ? report_beside_file(a.out) : fs::path(c.report));
    for (const auto& p : a.probmaps) report.input("probmap", p);
    if (!a.labels.empty()) report.input("labels", a.labels);
    try {
        const auto stems = expand_probmaps(a.probmaps);
        std::map<std::string, std::string> labels;
        if (!a.labels.empty()) labels = read_labels_csv(a.labels);
        std::vector<std::string> names;
        for (const auto& s : stems) names.push_back(s.filename().string());
        std::vector<std::optional<wsi::FeatureVector>> rows(stems.size());
        const auto failed = for_items(names, c, report, [&](std::size_t i) {
            const auto map = wsi::load_probmap(stems[i]);
            auto fv = wsi::extract_features(map);
            fv.slide_id = map.slide_id.empty() ? names[i] : map.slide_id;
            if (!a.labels.empty()) {
                const auto it = labels.find(fv.slide_id);
                if (it == labels.end()) throw Error("no label for slide " + fv.slide_id);
                fv.label = wsi::parse_slide_class(it->second);
            }
            rows[i] = std::move(fv);
        });
        std::vector<wsi::FeatureVector> ok;
        for (auto& r : rows)
            if (r) ok.push_back(std::move(*r));
        auto out = open_output(a.out);
        wsi::write_features_csv(out, ok);
        if (!out) throw IoError("write failed: " + a.out);
        report.summary()["slides"] = ok.size();
        report.summary()["failed"] = failed;
        report.write();
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct TrainArgs {
    std::string in, out;
    std::uint64_t seed = 0;
    int trees = 10;
    std::size_t k = 25;
};

int cmd_train_rf(const TrainArgs& a, const Common& c) {
    RunReport report("train-rf", c.report.empty() ? report_beside_file(a.out) : fs::path(c.report));
    report.input("features", a.in);
    report.seed(a.seed);
    try {
        std::ifstream in(a.in);
        if (!in) throw IoError("cannot open " + a.in);
        const auto rows = wsi::read_features_csv(in);
        for (const auto& r : rows)
            if (!r.label) throw Error("training slide " + r.slide_id + " has no label");
        const auto selected = wsi::select_features(rows, a.k);
        std::vector<forest::Features> x;
        std::vector<double> y;
        std::vector<wsi::SlideClass> labels;
        for (const auto& r : rows) {
            x.push_back(r.values);
            y.push_back(wsi::target_of(*r.label));
            labels.push_back(*r.label);
        }
        forest::ForestParams params;
        params.trees = a.trees;
        params.mtry = forest::default_mtry(selected.size());
        params.seed = a.seed;
        auto fit = forest::fit_forest(x, y, selected, params, c.jobs);
        std::vector<double> scores(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            scores[i] = std::isnan(fit.oob_scores[i]) ? forest::predict_score(fit.model, x[i]) : fit.oob_scores[i];
        const auto choice = wsi::choose_threshold(scores, labels);
        fit.model.decision_threshold = choice.threshold;
        std::vector<wsi::SlideClass> pred;
        for (const auto& xi : x) pred.push_back(wsi::classify_features(fit.model, xi));
        const double acc = wsi::classification_accuracy(pred, labels);
        auto out = open_output(a.out);
        out << forest::model_to_json(fit.model).dump(1) << '\n';
        if (!out) throw IoError("write failed: " + a.out);
        report.summary()["slides"] = rows.size();
        report.summary()["selected_features"] = selected;
        report.summary()["threshold"] = choice.threshold;
        report.summary()["threshold_fallback"] = choice.fallback;
        report.summary()["training_accuracy"] = acc;
        std::printf("slides=%zu threshold=%.6f training_accuracy=%.6f\n", rows.size(), choice.threshold, acc);
        report.write();
        return 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct ClassifyArgs {
    std::string model, out;
    std::vector<std::string> probmaps;
};

int cmd_classify(const ClassifyArgs& a, const Common& c) {
    fs::path default_report = a.out.empty() ? fs::path(a.model).replace_extension(".classify.report.json") : report_beside_file(a.out);
    RunReport report("classify", c.report.empty() ? default_report : fs::path(c.report));
    report.input("model", a.model);
    for (const auto& p : a.probmaps) report.input("probmap", p);
    try {
        std::ifstream min(a.model);
        if (!min) throw IoError("cannot open " + a.model);
        json mj;
        try {
            min >> mj;
        } catch (const json::exception& e) {
            throw Error("malformed model file " + a.model + ": " + e.what());
        }
        const auto model = forest::model_from_json(mj);
        const auto stems = expand_probmaps(a.probmaps);
        std::vector<std::string> names;
        for (const auto& s : stems) names.push_back(s.filename().string());
        struct Row {
            std::string id;
            wsi::SlideClass label;
            double score;
        };
        std::vector<std::optional<Row>> rows(stems.size());
        const auto failed = for_items(names, c, report, [&](std::size_t i) {
            const auto map = wsi::load_probmap(stems[i]);
            const auto fv = wsi::extract_features(map);
            const double score = forest::predict_score(model, fv.values);
            rows[i] = Row{map.slide_id.empty() ? names[i] : map.slide_id, wsi::classify_features(model, fv.values), score};
        });
        std::ostringstream csv;
        csv << "slide_id,label,score\n" << std::setprecision(10);
        std::size_t n = 0;
        for (const auto& r : rows)
            if (r) {
                csv << r->id << ',' << wsi::to_string(r->label) << ',' << r->score << '\n';
                ++n;
            }
        if (a.out.empty()) {
            std::cout << csv.str();
        } else {
            auto out = open_output(a.out);
            out << csv.str();
            if (!out) throw IoError("write failed: " + a.out);
        }
        report.summary()["slides"] = n;
        report.summary()["threshold"] = model.decision_threshold;
        report.summary()["failed"] = failed;
        report.write();
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct EvalClsArgs {
    std::string pred, truth;
    bool allow_missing = false;
};

int cmd_eval_cls(const EvalClsArgs& a, const Common& c) {
    RunReport report("eval-cls", c.report.empty() ? fs::path(a.pred).replace_extension(".eval.report.json") : fs::path(c.report));
    report.input("pred", a.pred);
    report.input("truth", a.truth);
    try {
        const auto pred = read_labels_csv(a.pred);
        const auto truth = read_labels_csv(a.truth);
        std::vector<wsi::SlideClass> p, t;
        for (const auto& [id, label] : truth) {
            const auto it = pred.find(id);
            if (it == pred.end()) {
                if (!a.allow_missing) throw Error("no prediction for slide " + id);
                std::fprintf(stderr, "warning: no prediction for slide %s\n", id.c_str());
                continue;
            }
            t.push_back(wsi::parse_slide_class(label));
            p.push_back(wsi::parse_slide_class(it->second));
        }
        for (const auto& [id, _] : pred)
            if (!truth.count(id)) {
                if (!a.allow_missing) throw Error("no ground truth for slide " + id);
                std::fprintf(stderr, "warning: no ground truth for slide %s\n", id.c_str());
            }
        const double acc = wsi::classification_accuracy(p, t);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < p.size(); ++i) correct += p[i] == t[i];
        std::printf("accuracy=%.6f (%zu/%zu)\n", acc, correct, p.size());
        report.summary()["accuracy"] = acc;
        report.summary()["correct"] = correct;
        report.summary()["slides"] = p.size();
        report.write();
        return 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

struct SynthArgs {
    std::string kind, spec, out, slide_class = "alternate";
    std::optional<std::uint64_t> seed;
    std::size_t count = 1;
};

int cmd_synth(const SynthArgs& a, const Common& c) {
    RunReport report("synth " + a.kind, c.report.empty() ? fs::path(a.out) / "run_report.json" : fs::path(c.report));
    if (!a.spec.empty()) report.input("spec", a.spec);
    try {
        json spec_json = json::object();
        if (!a.spec.empty()) {
            std::ifstream in(a.spec);
            if (!in) throw IoError("cannot open " + a.spec);
            try {
                in >> spec_json;
            } catch (const json::exception& e) {
                throw Error("malformed spec " + a.spec + ": " + e.what());
            }
        }
        if (a.seed) spec_json["seed"] = *a.seed;
        const fs::path out(a.out);
        std::vector<std::string> names;
        for (std::size_t i = 0; i < a.count; ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, a.kind == "tile" ? "tile_%03zu" : "slide_%03zu", i);
            names.emplace_back(buf);
        }
        std::size_t failed = 0;
        if (a.kind == "tile") {
            const auto spec = synth::tile_spec_from_json(spec_json);
            report.seed(spec.seed);
            std::vector<std::size_t> counts(names.size(), 0);
            failed = for_items(names, c, report, [&](std::size_t i) {
                auto s = spec;
                s.seed = derive_seed(spec.seed, {i});
                const auto t = synth::gen_synthetic_tile(s);
                io::save_rgb(out / "images" / (names[i] + ".png"), t.image);
                io::save_labeled_mask(out / "labels" / (names[i] + ".png"), t.labels);
                io::save_binary_mask(out / "blob" / (names[i] + ".png"), t.blob);
                io::save_binary_mask(out / "border" / (names[i] + ".png"), t.border);
                counts[i] = instance_count(t.labels);
            });
            report.summary()["instances"] = counts;
        } else {
            const auto spec = synth::slide_spec_from_json(spec_json);
            report.seed(spec.seed);
            std::vector<wsi::SlideClass> classes(names.size());
            for (std::size_t i = 0; i < names.size(); ++i) {
                if (a.slide_class == "alternate") classes[i] = i % 2 ? wsi::SlideClass::LUSC : wsi::SlideClass::LUAD;
                else classes[i] = wsi::parse_slide_class(a.slide_class);
            }
            failed = for_items(names, c, report, [&](std::size_t i) {
                auto s = spec;
                s.seed = derive_seed(spec.seed, {i});
                auto map = synth::gen_synthetic_probmap(s, classes[i]);
                map.slide_id = names[i];
                wsi::save_probmap(out / names[i], map);
            });
            auto truth = open_output(out / "truth.csv");
            truth << "slide_id,label\n";
            for (std::size_t i = 0; i < names.size(); ++i) truth << names[i] << ',' << wsi::to_string(classes[i]) << '\n';
        }
        report.summary()["count"] = names.size();
        report.summary()["failed"] = failed;
        report.write();
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        report.fatal(e.what());
        report.write();
        throw;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"histokit: nucleus segmentation and slide classification toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Common common;
    try {
        common.jobs = default_jobs();
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    std::function<int()> action;

    NormalizeArgs norm;
    auto* normalize = app.add_subcommand("normalize", "Reinhard stain normalization of RGB tiles");
    auto* target_opt = normalize->add_option("--target", norm.target, "target stats JSON")->check(CLI::ExistingFile);
    auto* ref_opt = normalize->add_option("--reference", norm.reference, "reference image for target stats")->check(CLI::ExistingFile);
    target_opt->excludes(ref_opt);
    normalize->add_option("input", norm.input, "input PNG or directory")->required()->check(CLI::ExistingPath);
    normalize->add_option("output", norm.output, "output PNG or directory")->required();
    add_common(normalize, common);
    normalize->callback([&] {
        if (norm.target.empty() && norm.reference.empty()) throw CLI::RequiredError("--target or --reference");
        action = [&] { return cmd_normalize(norm, common); };
    });

    SegmentArgs sega;
    auto* segment = app.add_subcommand("segment", "instance segmentation from blob and border masks");
    segment->add_option("--blob", sega.blob, "blob mask PNG or directory")->required()->check(CLI::ExistingPath);
    segment->add_option("--border", sega.border, "border mask PNG or directory")->required()->check(CLI::ExistingPath);
    segment->add_option("--mpp", sega.mpp, "microns per pixel")->capture_default_str();
    segment->add_option("--min-area-um2", sega.min_area_um2, "artifact area threshold")->capture_default_str();
    segment->add_flag("--allow-missing", sega.allow_missing, "skip unpaired files in directory mode");
    segment->add_option("output", sega.output, "labeled PNG or directory")->required();
    add_common(segment, common);
    segment->callback([&] { action = [&] { return cmd_segment(sega, common); }; });

    EvalSegArgs evs;
    auto* eval_seg = app.add_subcommand("eval-seg", "DICE_1 / DICE_2 scores of predicted against ground truth masks");
    eval_seg->add_option("--gt-dir", evs.gt_dir, "ground truth labeled PNGs")->required()->check(CLI::ExistingDirectory);
    eval_seg->add_option("--pred-dir", evs.pred_dir, "predicted labeled PNGs")->required()->check(CLI::ExistingDirectory);
    eval_seg->add_option("--out", evs.out, "scores CSV")->required();
    eval_seg->add_flag("--allow-missing", evs.allow_missing, "skip unpaired files");
    add_common(eval_seg, common);
    eval_seg->callback([&] { action = [&] { return cmd_eval_seg(evs, common); }; });

    GenPatchesArgs gpa;
    auto* gen_patches = app.add_subcommand("gen-patches", "training patches from tiles and labeled masks");
    gen_patches->add_option("--tiles", gpa.tiles, "RGB tile directory")->required()->check(CLI::ExistingDirectory);
    gen_patches->add_option("--masks", gpa.masks, "labeled mask directory")->required()->check(CLI::ExistingDirectory);
    gen_patches->add_option("--out", gpa.out, "output directory")->required();
    gen_patches->add_option("--dataset", gpa.dataset, "nbl, nbd or sn")->required()->check(CLI::IsMember({"nbl", "nbd", "sn"}));
    gen_patches->add_option("--seed", gpa.seed, "random seed")->capture_default_str();
    gen_patches->add_flag("--augment", gpa.augment, "three random geometric augmentations per patch (102x102 output)");
    gen_patches->add_flag("--allow-missing", gpa.allow_missing, "skip unpaired files");
    add_common(gen_patches, common);
    gen_patches->callback([&] { action = [&] { return cmd_gen_patches(gpa, common); }; });

    ExtractArgs exa;
    auto* extract = app.add_subcommand("extract-features", "50 slide features per probability map");
    extract->add_option("--probmap", exa.probmaps, "probability map stems or directories")->required();
    extract->add_option("--labels", exa.labels, "slide_id,label CSV for training data")->check(CLI::ExistingFile);
    extract->add_option("--out", exa.out, "features CSV")->required();
    add_common(extract, common);
    extract->callback([&] { action = [&] { return cmd_extract_features(exa, common); }; });

    TrainArgs tra;
    auto* train = app.add_subcommand("train-rf", "train the slide classifier on labeled features");
    train->add_option("--in", tra.in, "features CSV")->required()->check(CLI::ExistingFile);
    train->add_option("--out", tra.out, "model JSON")->required();
    train->add_option("--seed", tra.seed, "random seed")->capture_default_str();
    train->add_option("--trees", tra.trees, "forest size")->capture_default_str()->check(CLI::Range(1, 10000));
    train->add_option("--select", tra.k, "features kept by Fisher score")->capture_default_str()->check(CLI::Range(1, 50));
    add_common(train, common);
    train->callback([&] { action = [&] { return cmd_train_rf(tra, common); }; });

    ClassifyArgs cla;
    auto* classify = app.add_subcommand("classify", "LUAD / LUSC label per probability map");
    classify->add_option("--model", cla.model, "model JSON")->required()->check(CLI::ExistingFile);
    classify->add_option("--probmap", cla.probmaps, "probability map stems or directories")->required();
    classify->add_option("--out", cla.out, "predictions CSV (default: stdout)");
    add_common(classify, common);
    classify->callback([&] { action = [&] { return cmd_classify(cla, common); }; });

    EvalClsArgs eca;
    auto* eval_cls = app.add_subcommand("eval-cls", "slide classification accuracy");
    eval_cls->add_option("--pred", eca.pred, "predictions CSV")->required()->check(CLI::ExistingFile);
    eval_cls->add_option("--truth", eca.truth, "ground truth CSV")->required()->check(CLI::ExistingFile);
    eval_cls->add_flag("--allow-missing", eca.allow_missing, "skip slides missing from either file");
    add_common(eval_cls, common);
    eval_cls->callback([&] { action = [&] { return cmd_eval_cls(eca, common); }; });

    SynthArgs sya;
    auto* synth_cmd = app.add_subcommand("synth", "synthetic tiles or probability maps");
    synth_cmd->add_option("kind", sya.kind, "tile or probmap")->required()->check(CLI::IsMember({"tile", "probmap"}));
    synth_cmd->add_option("--spec", sya.spec, "spec JSON (missing fields keep defaults)")->check(CLI::ExistingFile);
    synth_cmd->add_option("--out", sya.out, "output directory")->required();
    synth_cmd->add_option("--seed", sya.seed, "base seed (overrides the spec)");
    synth_cmd->add_option("--count", sya.count, "number of items")->capture_default_str()->check(CLI::Range(1, 100000));
    synth_cmd->add_option("--class", sya.slide_class, "probmap true class: LUAD, LUSC or alternate")
        ->capture_default_str()
        ->check(CLI::IsMember({"LUAD", "LUSC", "alternate"}));
    add_common(synth_cmd, common);
    synth_cmd->callback([&] { action = [&] { return cmd_synth(sya, common); }; });

    if (argc > 1 && argv[1][0] != '-') {
        const auto subs = app.get_subcommands([](const CLI::App*) { return true; });
        const bool known = std::any_of(subs.begin(), subs.end(), [&](const CLI::App* s) { return s->get_name() == argv[1]; });
        if (!known) {
            std::fprintf(stderr, "error: unknown subcommand '%s'\n\n", argv[1]);
            std::fputs(app.help().c_str(), stderr);
            return 2;
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n\n", e.what());
        std::fputs(app.help().c_str(), stderr);
        return 2;
    }

    try {
        return action();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
