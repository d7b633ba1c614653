#pragma once

// Bagged regression forest over slide features.
//
// Every tree is grown on a bootstrap sample (n draws with replacement) from its own seed
// stream, derive_seed(seed, {tree}). At each node `mtry` candidate features are drawn
// without replacement from the selected set; if none of them admits a valid partition
// (all values equal, or min_leaf cannot be met on both sides) the remaining selected
// features are tried in the same random order. The split minimizing the summed squared
// error of the children is taken when it lowers the node's error. Nodes with fewer than
// 2 * min_leaf samples, or zero error, become leaves holding the mean target.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "histokit/error.hpp"
#include "histokit/parallel.hpp"
#include "histokit/rng.hpp"
#include "histokit/wsi_features.hpp"

namespace histokit::forest {

using Features = std::array<double, wsi::kFeatureCount>;

struct Node {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0; // leaf output
    int left = -1;
    int right = -1;
    friend bool operator==(const Node&, const Node&) = default;
};

struct Tree {
    std::vector<Node> nodes; // nodes[0] is the root

    [[nodiscard]] double predict(const Features& x) const {
        int i = 0;
        while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
        return nodes[i].value;
    }
    friend bool operator==(const Tree&, const Tree&) = default;
};

struct ForestParams {
    int trees = 10;
    int mtry = 9; // ceil(25 / 3)
    int min_leaf = 5;
    std::uint64_t seed = 0;
};

struct RandomForestModel {
    static constexpr int kSchemaVersion = 1;

    std::vector<Tree> trees;
    std::vector<std::size_t> selected_features;
    double decision_threshold = 0.5;
    ForestParams params;

    friend bool operator==(const RandomForestModel& a, const RandomForestModel& b) {
        return a.trees == b.trees && a.selected_features == b.selected_features &&
               a.decision_threshold == b.decision_threshold && a.params.trees == b.params.trees &&
               a.params.mtry == b.params.mtry && a.params.min_leaf == b.params.min_leaf &&
               a.params.seed == b.params.seed;
    }
};

/// ceil(d / 3), at least 1.
inline int default_mtry(std::size_t selected) { return std::max(1, static_cast<int>((selected + 2) / 3)); }

namespace detail {

// Mean computed as an offset from the first value so that constant inputs stay exact.
inline double stable_mean(std::span<const double> v) {
    const double base = v.front();
    double d = 0.0;
    for (double x : v) d += x - base;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return std::clamp(base + d / static_cast<double>(v.size()), *lo, *hi);
}

class TreeBuilder {
public:
    TreeBuilder(std::span<const Features> x, std::span<const double> y, std::span<const std::size_t> selected,
                const ForestParams& p, Rng& rng)
        : x_(x), y_(y), selected_(selected.begin(), selected.end()), p_(p), rng_(rng) {}

    Tree build(std::vector<std::size_t> samples) {
        tree_.nodes.clear();
        grow(std::move(samples));
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double sse = std::numeric_limits<double>::infinity();
    };

    static double sse_of(std::span<const double> ys) {
        if (ys.empty()) return 0.0;
        const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
        double s = 0.0;
        for (double v : ys) s += (v - mean) * (v - mean);
        return s;
    }

    // Best split on one feature, or feature = -1 when none is valid.
    Split best_on(std::size_t feature, const std::vector<std::size_t>& samples) const {
        std::vector<std::pair<double, double>> vy(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) vy[i] = {x_[samples[i]][feature], y_[samples[i]]};
        std::sort(vy.begin(), vy.end());
        const std::size_t n = vy.size();
        const std::size_t m = static_cast<std::size_t>(p_.min_leaf);
        std::vector<double> prefix(n + 1, 0.0), prefix_sq(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            prefix[i + 1] = prefix[i] + vy[i].second;
            prefix_sq[i + 1] = prefix_sq[i] + vy[i].second * vy[i].second;
        }
        Split best;
        for (std::size_t i = m; i + m <= n; ++i) {
            if (!(vy[i - 1].first < vy[i].first)) continue;
            const double nl = static_cast<double>(i), nr = static_cast<double>(n - i);
            const double sl = prefix[i], sr = prefix[n] - prefix[i];
            const double ql = prefix_sq[i], qr = prefix_sq[n] - prefix_sq[i];
            const double sse = std::max(0.0, ql - sl * sl / nl) + std::max(0.0, qr - sr * sr / nr);
            if (sse < best.sse) {
                best.sse = sse;
                best.feature = static_cast<int>(feature);
                double t = 0.5 * (vy[i - 1].first + vy[i].first);
                if (!(t < vy[i].first)) t = vy[i - 1].first;
                best.threshold = t;
            }
        }
        return best;
    }

    int grow(std::vector<std::size_t> samples) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({});
        std::vector<double> ys(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) ys[i] = y_[samples[i]];
        tree_.nodes[id].value = stable_mean(ys);
        const double parent_sse = sse_of(ys);
        if (samples.size() < 2 * static_cast<std::size_t>(p_.min_leaf) || parent_sse <= 0.0) return id;

        // Random order over the selected features; the first mtry are the node's candidates.
        std::vector<std::size_t> order = selected_;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_.below(order.size() - i));
            std::swap(order[i], order[j]);
        }
        Split best;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (k >= static_cast<std::size_t>(p_.mtry) && best.feature >= 0) break;
            const Split s = best_on(order[k], samples);
            if (s.feature >= 0 && s.sse < best.sse) best = s;
        }
        if (best.feature < 0 || !(best.sse < parent_sse * (1.0 - 1e-12))) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t s : samples) (x_[s][best.feature] <= best.threshold ? left : right).push_back(s);
        tree_.nodes[id].feature = best.feature;
        tree_.nodes[id].threshold = best.threshold;
        tree_.nodes[id].value = 0.0;
        const int l = grow(std::move(left));
        const int r = grow(std::move(right));
        tree_.nodes[id].left = l;
        tree_.nodes[id].right = r;
        return id;
    }

    std::span<const Features> x_;
    std::span<const double> y_;
    std::vector<std::size_t> selected_;
    ForestParams p_;
    Rng& rng_;
    Tree tree_;
};

} // namespace detail

struct TrainedForest {
    RandomForestModel model;
    std::vector<double> oob_scores; // NaN where a sample was in every bootstrap
};

inline TrainedForest fit_forest(std::span<const Features> x, std::span<const double> y,
                                std::span<const std::size_t> selected, const ForestParams& params, unsigned jobs = 1) {
    if (x.size() != y.size()) throw Error("feature and target counts differ");
    if (params.trees < 1 || params.mtry < 1 || params.min_leaf < 1) throw Error("invalid forest parameters");
    if (x.size() < 2 * static_cast<std::size_t>(params.min_leaf)) {
        throw Error("need at least " + std::to_string(2 * params.min_leaf) + " training samples");
    }
    if (selected.empty()) throw Error("no features selected");
    for (std::size_t f : selected)
        if (f >= wsi::kFeatureCount) throw Error("selected feature index out of range");

    const std::size_t n = x.size();
    TrainedForest out;
    out.model.selected_features.assign(selected.begin(), selected.end());
    out.model.params = params;
    out.model.trees.resize(static_cast<std::size_t>(params.trees));
    std::vector<std::vector<std::uint8_t>> in_bag(static_cast<std::size_t>(params.trees), std::vector<std::uint8_t>(n, 0));

    parallel_for(static_cast<std::size_t>(params.trees), jobs, [&](std::size_t t) {
        Rng rng(derive_seed(params.seed, {t}));
        std::vector<std::size_t> bag(n);
        for (auto& s : bag) {
            s = static_cast<std::size_t>(rng.below(n));
            in_bag[t][s] = 1;
        }
        detail::TreeBuilder builder(x, y, selected, params, rng);
        out.model.trees[t] = builder.build(std::move(bag));
    });

    out.oob_scores.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        int k = 0;
        for (std::size_t t = 0; t < out.model.trees.size(); ++t)
            if (!in_bag[t][i]) {
                sum += out.model.trees[t].predict(x[i]);
                ++k;
            }
        if (k > 0) out.oob_scores[i] = sum / k;
    }
    return out;
}

inline RandomForestModel train_random_forest(std::span<const Features> x, std::span<const double> y,
                                             std::span<const std::size_t> selected, const ForestParams& params,
                                             unsigned jobs = 1) {
    return fit_forest(x, y, selected, params, jobs).model;
}

/// Mean of the tree outputs.
inline double predict_score(const RandomForestModel& model, const Features& x) {
    if (model.trees.empty()) throw Error("model has no trees");
    std::vector<double> outputs;
    outputs.reserve(model.trees.size());
    for (const auto& t : model.trees) outputs.push_back(t.predict(x));
    return detail::stable_mean(outputs);
}

// ---------------------------------------------------------------------------------------
// JSON model file

namespace detail {

inline nlohmann::json node_to_json(const Tree& t, int i) {
    const Node& n = t.nodes[i];
    if (n.feature < 0) return {{"leaf", n.value}};
    return {{"feature", n.feature}, {"threshold", n.threshold}, {"left", node_to_json(t, n.left)},
            {"right", node_to_json(t, n.right)}};
}

inline int node_from_json(Tree& t, const nlohmann::json& j) {
    const int id = static_cast<int>(t.nodes.size());
    t.nodes.push_back({});
    if (j.contains("leaf")) {
        t.nodes[id].value = j.at("leaf").get<double>();
        return id;
    }
    const int feature = j.at("feature").get<int>();
    if (feature < 0 || feature >= static_cast<int>(wsi::kFeatureCount)) throw Error("model split feature out of range");
    t.nodes[id].feature = feature;
    t.nodes[id].threshold = j.at("threshold").get<double>();
    const int l = node_from_json(t, j.at("left"));
    const int r = node_from_json(t, j.at("right"));
    t.nodes[id].left = l;
    t.nodes[id].right = r;
    return id;
}

} // namespace detail

inline nlohmann::json model_to_json(const RandomForestModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(detail::node_to_json(t, 0));
    return {{"schema_version", RandomForestModel::kSchemaVersion},
            {"feature_schema", wsi::feature_names()},
            {"selected_features", m.selected_features},
            {"threshold", m.decision_threshold},
            {"seed", m.params.seed},
            {"n_trees", m.params.trees},
            {"mtry", m.params.mtry},
            {"min_leaf", m.params.min_leaf},
            {"trees", trees}};
}

inline RandomForestModel model_from_json(const nlohmann::json& j) {
    RandomForestModel m;
    try {
        if (j.at("schema_version").get<int>() != RandomForestModel::kSchemaVersion) {
            throw Error("unsupported model schema version");
        }
        m.selected_features = j.at("selected_features").get<std::vector<std::size_t>>();
        m.decision_threshold = j.at("threshold").get<double>();
        m.params.seed = j.at("seed").get<std::uint64_t>();
        m.params.trees = j.at("n_trees").get<int>();
        m.params.mtry = j.at("mtry").get<int>();
        m.params.min_leaf = j.at("min_leaf").get<int>();
        for (const auto& tj : j.at("trees")) {
            Tree t;
            detail::node_from_json(t, tj);
            m.trees.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed model: ") + e.what());
    }
    if (m.trees.empty()) throw Error("model has no trees");
    return m;
}

} // namespace histokit::forest
