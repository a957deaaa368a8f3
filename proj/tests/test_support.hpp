#pragma once

// Fixtures shared by the unit and acceptance suites.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fog/common.hpp"
#include "fog/dataset.hpp"
#include "fog/forest.hpp"
#include "fog/tree.hpp"

namespace fog::testing {

/// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture()
        : previous_(set_warning_handler([this](std::string_view m) { messages.emplace_back(m); })) {}
    ~WarningCapture() { set_warning_handler(std::move(previous_)); }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    std::vector<std::string> messages;

private:
    WarningHandler previous_;
};

inline Dataset make_dataset(std::vector<std::vector<double>> rows, std::vector<Label> labels,
                            std::size_t n_labels) {
    Dataset ds;
    ds.name = "synthetic";
    ds.n_features = rows.front().size();
    ds.n_labels = n_labels;
    for (const auto& r : rows) {
        ds.features.insert(ds.features.end(), r.begin(), r.end());
    }
    ds.labels = std::move(labels);
    for (std::size_t c = 0; c < n_labels; ++c) {
        ds.label_values.push_back(static_cast<double>(c));
    }
    ds.validate();
    return ds;
}

inline Dataset xor_dataset() {
    return make_dataset({{0, 0}, {1, 1}, {0, 1}, {1, 0}}, {0, 0, 1, 1}, 2);
}

/// Uniform features in [0,1); labels from noisy axis-aligned rules so trees
/// have something to learn.
inline Dataset random_dataset(std::size_t n, std::size_t n_features, std::size_t n_labels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Dataset ds;
    ds.name = "random";
    ds.n_features = n_features;
    ds.n_labels = n_labels;
    for (std::size_t c = 0; c < n_labels; ++c) {
        ds.label_values.push_back(static_cast<double>(c));
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t f = 0; f < n_features; ++f) {
            const double v = u(rng);
            ds.features.push_back(v);
            s += (f % 2 == 0 ? v : 0.5 * v);
        }
        auto y = static_cast<std::size_t>(s * 2.0) % n_labels;
        if (u(rng) < 0.1) {
            y = static_cast<std::size_t>(u(rng) * static_cast<double>(n_labels)) % n_labels;
        }
        ds.labels.push_back(y);
    }
    ds.validate();
    return ds;
}

/// A random full binary tree with random thresholds and dense random leaf
/// distributions (no one-hot leaves).
inline DecisionTree random_tree(std::size_t n_features, std::size_t n_labels, std::size_t depth,
                                std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<TreeNode> nodes;
    std::vector<std::size_t> subset(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
        subset[f] = f;
    }
    auto grow = [&](auto&& self, std::size_t d) -> std::size_t {
        const std::size_t id = nodes.size();
        nodes.emplace_back();
        if (d == depth || (d > 0 && u(rng) < 0.2)) {
            std::vector<double> dist(n_labels);
            double sum = 0.0;
            for (auto& p : dist) {
                p = 0.05 + u(rng);
                sum += p;
            }
            for (auto& p : dist) {
                p /= sum;
            }
            nodes[id].leaf_distribution = std::move(dist);
            return id;
        }
        nodes[id].feature_offset = static_cast<std::size_t>(u(rng) * static_cast<double>(n_features)) % n_features;
        nodes[id].threshold = u(rng);
        const auto l = self(self, d + 1);
        const auto r = self(self, d + 1);
        nodes[id].left = static_cast<std::int32_t>(l);
        nodes[id].right = static_cast<std::int32_t>(r);
        return id;
    };
    grow(grow, 0);
    return DecisionTree(std::move(nodes), depth, n_features, n_labels, subset);
}

inline RandomForest random_forest(std::size_t n_trees, std::size_t n_features, std::size_t n_labels,
                                  std::size_t depth, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<DecisionTree> trees;
    for (std::size_t i = 0; i < n_trees; ++i) {
        trees.push_back(random_tree(n_features, n_labels, depth, rng));
    }
    return RandomForest(std::move(trees));
}

inline std::vector<double> random_input(std::size_t n_features, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x(n_features);
    for (auto& v : x) {
        v = u(rng);
    }
    return x;
}

/// Grove source returning fixed distributions per grove regardless of input.
struct ScriptedGroves {
    std::vector<std::vector<double>> outputs;
    std::size_t comparisons_per_grove = 2;

    std::size_t n_groves() const { return outputs.size(); }
    std::size_t n_labels() const { return outputs.front().size(); }
    GroveOutput grove_output(std::size_t index, std::span<const double>) const {
        return {outputs[index], std::vector<std::size_t>(comparisons_per_grove, 1)};
    }
};

static_assert(GroveSource<ScriptedGroves>);

} // namespace fog::testing
