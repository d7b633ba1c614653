#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "histokit/error.hpp"
#include "histokit/forest.hpp"
#include "histokit/probmap.hpp"
#include "histokit/wsi_features.hpp"

namespace histokit::wsi {

struct ThresholdChoice {
    double threshold = 0.5;
    double accuracy = 0.0;
    bool fallback = false; // set when the scores cannot separate anything
};

/// Threshold with the best training accuracy (LUSC when score >= threshold), searched over
/// midpoints of consecutive distinct scores; ties go to the midpoint closest to 0.5.
inline ThresholdChoice choose_threshold(std::span<const double> scores, std::span<const SlideClass> labels) {
    if (scores.size() != labels.size()) throw Error("score and label counts differ");
    const bool has_luad = std::find(labels.begin(), labels.end(), SlideClass::LUAD) != labels.end();
    const bool has_lusc = std::find(labels.begin(), labels.end(), SlideClass::LUSC) != labels.end();
    ThresholdChoice best{0.5, 0.0, true};
    if (!has_luad || !has_lusc) {
        std::fprintf(stderr, "warning: threshold selection saw a single class; using 0.5\n");
        return best;
    }
    std::vector<double> distinct(scores.begin(), scores.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) return best;

    auto accuracy_at = [&](double t) {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const SlideClass pred = scores[i] >= t ? SlideClass::LUSC : SlideClass::LUAD;
            ok += pred == labels[i];
        }
        return static_cast<double>(ok) / static_cast<double>(scores.size());
    };
    best.fallback = false;
    best.accuracy = -1.0;
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        const double t = 0.5 * (distinct[i] + distinct[i + 1]);
        const double acc = accuracy_at(t);
        if (acc > best.accuracy || (acc == best.accuracy && std::abs(t - 0.5) < std::abs(best.threshold - 0.5))) {
            best.threshold = t;
            best.accuracy = acc;
        }
    }
    return best;
}

inline SlideClass classify_features(const forest::RandomForestModel& model, const forest::Features& features) {
    return forest::predict_score(model, features) >= model.decision_threshold ? SlideClass::LUSC : SlideClass::LUAD;
}

inline SlideClass classify_wsi(const forest::RandomForestModel& model, const ProbabilityMap& map) {
    return classify_features(model, extract_features(map).values);
}

inline double classification_accuracy(std::span<const SlideClass> predictions, std::span<const SlideClass> labels) {
    if (predictions.size() != labels.size()) throw Error("prediction and label counts differ");
    if (predictions.empty()) throw Error("cannot compute accuracy of zero cases");
    std::size_t ok = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) ok += predictions[i] == labels[i];
    return static_cast<double>(ok) / static_cast<double>(labels.size());
}

struct TrainingOutcome {
    forest::RandomForestModel model;
    ThresholdChoice threshold;
    double training_accuracy = 0.0;
};

/// Feature selection, forest fit and threshold choice on labeled slides. The threshold is
/// fit on out-of-bag scores (in-sample scores where a slide was never out of bag).
inline TrainingOutcome train_slide_classifier(const std::vector<FeatureVector>& train, std::uint64_t seed,
                                              std::size_t k = 25, unsigned jobs = 1) {
    const auto selected = select_features(train, k);
    std::vector<forest::Features> x;
    std::vector<double> y;
    std::vector<SlideClass> labels;
    for (const auto& fv : train) {
        x.push_back(fv.values);
        y.push_back(target_of(*fv.label));
        labels.push_back(*fv.label);
    }
    forest::ForestParams params;
    params.mtry = forest::default_mtry(selected.size());
    params.seed = seed;
    auto fit = forest::fit_forest(x, y, selected, params, jobs);
    std::vector<double> scores(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        scores[i] = std::isnan(fit.oob_scores[i]) ? forest::predict_score(fit.model, x[i]) : fit.oob_scores[i];
    }
    TrainingOutcome out{std::move(fit.model), choose_threshold(scores, labels), 0.0};
    out.model.decision_threshold = out.threshold.threshold;
    std::vector<SlideClass> pred;
    for (const auto& xi : x) pred.push_back(classify_features(out.model, xi));
    out.training_accuracy = classification_accuracy(pred, labels);
    return out;
}

// ---------------------------------------------------------------------------------------
// Feature CSV: slide_id,label,<50 feature names>; label is LUAD, LUSC or empty.

inline void write_features_csv(std::ostream& out, const std::vector<FeatureVector>& rows) {
    out << "slide_id,label";
    for (const auto& n : feature_names()) out << ',' << n;
    out << '\n';
    out << std::setprecision(17);
    for (const auto& fv : rows) {
        out << fv.slide_id << ',' << (fv.label ? to_string(*fv.label) : "");
        for (double v : fv.values) out << ',' << v;
        out << '\n';
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::vector<FeatureVector> read_features_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("empty feature file");
    const auto header = split_csv_line(line);
    if (header.size() != kFeatureCount + 2 || header[0] != "slide_id" || header[1] != "label") {
        throw Error("feature file header must be slide_id,label followed by 50 features");
    }
    std::vector<FeatureVector> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != kFeatureCount + 2) throw Error("feature file line " + std::to_string(lineno) + ": wrong field count");
        FeatureVector fv;
        fv.slide_id = f[0];
        if (!f[1].empty()) fv.label = parse_slide_class(f[1]);
        for (std::size_t j = 0; j < kFeatureCount; ++j) {
            try {
                std::size_t pos = 0;
                fv.values[j] = std::stod(f[j + 2], &pos);
                if (pos != f[j + 2].size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw Error("feature file line " + std::to_string(lineno) + ": bad number '" + f[j + 2] + "'");
            }
            if (!std::isfinite(fv.values[j])) throw Error("feature file line " + std::to_string(lineno) + ": non-finite value");
        }
        rows.push_back(std::move(fv));
    }
    return rows;
}

} // namespace histokit::wsi
