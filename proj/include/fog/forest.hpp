#pragma once

// Random forests, their split into groves, and budgeted tree-by-tree training.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fog/common.hpp"
#include "fog/costmodel.hpp"
#include "fog/dataset.hpp"
#include "fog/tree.hpp"

namespace fog {

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

/// Mean distribution of a group of trees plus each member's comparison count.
struct GroveOutput {
    std::vector<double> prob;
    std::vector<std::size_t> tree_comparisons;

    std::size_t comparisons() const {
        return std::accumulate(tree_comparisons.begin(), tree_comparisons.end(), std::size_t{0});
    }
};

/// Unweighted mean of the members' leaf distributions.
inline GroveOutput mean_of_trees(std::span<const DecisionTree> trees, std::span<const double> x) {
    GroveOutput out;
    out.prob.assign(trees.front().n_labels(), 0.0);
    out.tree_comparisons.reserve(trees.size());
    for (const auto& t : trees) {
        auto r = t.predict_prob(x);
        for (std::size_t c = 0; c < out.prob.size(); ++c) {
            out.prob[c] += r.prob[c];
        }
        out.tree_comparisons.push_back(r.comparisons);
    }
    for (auto& p : out.prob) {
        p /= static_cast<double>(trees.size());
    }
    return out;
}

/// Counters for evaluating one group of trees: the comparisons plus one add
/// per label per tree and one divide per label for the mean.
inline OpTrace grove_compute_trace(const GroveOutput& out) {
    OpTrace t;
    t.comparisons = out.comparisons();
    t.accumulate_ops = (out.tree_comparisons.size() + 1) * out.prob.size();
    return t;
}

class RandomForest {
public:
    RandomForest() = default;
    explicit RandomForest(std::vector<DecisionTree> estimators) : estimators_(std::move(estimators)) {
        if (estimators_.empty()) {
            throw Error("a forest needs at least one tree");
        }
        for (const auto& t : estimators_) {
            if (t.n_labels() != estimators_.front().n_labels() ||
                t.n_features() != estimators_.front().n_features()) {
                throw Error("forest trees disagree on feature or label counts");
            }
        }
    }

    const std::vector<DecisionTree>& estimators() const noexcept { return estimators_; }
    std::size_t size() const noexcept { return estimators_.size(); }
    std::size_t n_labels() const { return estimators_.front().n_labels(); }
    std::size_t n_features() const { return estimators_.front().n_features(); }

    friend bool operator==(const RandomForest&, const RandomForest&) = default;

private:
    std::vector<DecisionTree> estimators_;
};

struct Vote {
    std::vector<double> prob;
    Label label = 0;
};

/// Mean of all tree distributions; label is its argmax.
inline Vote rf_predict_soft(const RandomForest& rf, std::span<const double> x) {
    auto out = mean_of_trees(rf.estimators(), x);
    const auto label = argmax(out.prob);
    return {std::move(out.prob), label};
}

/// Each tree votes for its own argmax; the label with most votes wins.
inline Label rf_predict_majority(const RandomForest& rf, std::span<const double> x) {
    std::vector<double> votes(rf.n_labels(), 0.0);
    for (const auto& t : rf.estimators()) {
        votes[argmax(t.predict_prob(x).prob)] += 1.0;
    }
    return argmax(votes);
}

struct Grove {
    std::vector<DecisionTree> estimators;
    std::size_t index = 0;

    GroveOutput predict_prob(std::span<const double> x) const { return mean_of_trees(estimators, x); }
};

inline GroveOutput grove_predict_prob(const Grove& g, std::span<const double> x) { return g.predict_prob(x); }

/// Anything that can evaluate grove `index` of a ring on an input.
template <class T>
concept GroveSource = requires(const T& src, std::size_t index, std::span<const double> x) {
    { src.n_groves() } -> std::convertible_to<std::size_t>;
    { src.n_labels() } -> std::convertible_to<std::size_t>;
    { src.grove_output(index, x) } -> std::same_as<GroveOutput>;
};

class FieldOfGroves {
public:
    FieldOfGroves() = default;
    FieldOfGroves(std::vector<Grove> groves, std::size_t k) : groves_(std::move(groves)), k_(k) {
        if (groves_.empty()) {
            throw Error("a field needs at least one grove");
        }
        for (std::size_t i = 0; i < groves_.size(); ++i) {
            const auto& g = groves_[i];
            if (g.estimators.empty()) {
                throw Error("grove " + std::to_string(i) + " is empty");
            }
            if (g.estimators.size() > k_ || (i + 1 < groves_.size() && g.estimators.size() != k_)) {
                throw Error("grove " + std::to_string(i) + " does not hold k trees");
            }
            if (g.estimators.front().n_labels() != n_labels()) {
                throw Error("groves disagree on label count");
            }
        }
    }

    std::size_t n_groves() const noexcept { return groves_.size(); }
    std::size_t trees_per_grove() const noexcept { return k_; }
    std::size_t n_labels() const { return groves_.front().estimators.front().n_labels(); }
    std::size_t n_features() const { return groves_.front().estimators.front().n_features(); }
    std::size_t n_trees() const {
        std::size_t n = 0;
        for (const auto& g : groves_) {
            n += g.estimators.size();
        }
        return n;
    }
    bool uniform() const { return groves_.back().estimators.size() == k_; }
    const std::vector<Grove>& groves() const noexcept { return groves_; }
    const Grove& grove(std::size_t i) const { return groves_.at(i); }

    GroveOutput grove_output(std::size_t index, std::span<const double> x) const {
        return groves_[index].predict_prob(x);
    }

    /// Trees in ring order, i.e. the source forest.
    RandomForest as_forest() const {
        std::vector<DecisionTree> all;
        for (const auto& g : groves_) {
            all.insert(all.end(), g.estimators.begin(), g.estimators.end());
        }
        return RandomForest(std::move(all));
    }

    friend bool operator==(const FieldOfGroves& a, const FieldOfGroves& b) {
        if (a.k_ != b.k_ || a.groves_.size() != b.groves_.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.groves_.size(); ++i) {
            if (a.groves_[i].estimators != b.groves_[i].estimators) {
                return false;
            }
        }
        return true;
    }

private:
    std::vector<Grove> groves_;
    std::size_t k_ = 0;
};

static_assert(GroveSource<FieldOfGroves>);

/// Consecutive chunks of k estimators, in order. A short final grove is kept
/// with a warning because equal-weight averaging then biases toward it.
inline FieldOfGroves split(const RandomForest& rf, std::size_t k) {
    if (k == 0) {
        throw Error("grove size k must be at least 1");
    }
    std::vector<Grove> groves;
    const auto& trees = rf.estimators();
    for (std::size_t i = 0; i < trees.size(); i += k) {
        Grove g;
        g.index = groves.size();
        const auto end = std::min(trees.size(), i + k);
        g.estimators.assign(trees.begin() + static_cast<std::ptrdiff_t>(i),
                            trees.begin() + static_cast<std::ptrdiff_t>(end));
        groves.push_back(std::move(g));
    }
    if (trees.size() % k != 0) {
        warn("forest of " + std::to_string(trees.size()) + " trees does not divide into groves of " +
             std::to_string(k) + "; last grove holds " + std::to_string(trees.size() % k));
    }
    return FieldOfGroves(std::move(groves), k);
}

inline std::size_t features_per_tree(const TreeParams& params, std::size_t n_features) {
    if (params.features_per_tree != 0) {
        return std::min(params.features_per_tree, n_features);
    }
    return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features))));
}

/// Tree `index` of a forest seeded with `seed`: a sorted random feature subset
/// and a bootstrap sample, both derived from seed + index.
inline DecisionTree train_forest_tree(const Dataset& train, const TreeParams& params, std::uint64_t seed,
                                      std::size_t index) {
    const std::uint64_t tree_seed = seed + index;
    std::mt19937_64 rng(tree_seed);
    std::vector<std::size_t> all(train.n_features);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> subset;
    std::sample(all.begin(), all.end(), std::back_inserter(subset), features_per_tree(params, train.n_features),
                rng);
    TreeParams tp = params;
    tp.bootstrap = true;
    return train_cart(train, tp, std::move(subset), mix64(tree_seed));
}

inline RandomForest train_forest(const Dataset& train, std::size_t n_trees, const TreeParams& params,
                                 std::uint64_t seed) {
    if (n_trees == 0) {
        throw Error("forest size must be at least 1");
    }
    std::vector<DecisionTree> trees;
    trees.reserve(n_trees);
    for (std::size_t i = 0; i < n_trees; ++i) {
        trees.push_back(train_forest_tree(train, params, seed, i));
    }
    return RandomForest(std::move(trees));
}

/// Trains an n-tree forest and splits it into groves of k.
inline FieldOfGroves gc_train(std::size_t n, std::size_t k, const Dataset& train, const TreeParams& params,
                              std::uint64_t seed) {
    if (n == 0) {
        throw Error("number of trees n must be at least 1");
    }
    if (k == 0 || k > n) {
        throw Error("grove size k must satisfy 1 <= k <= n");
    }
    return split(train_forest(train, n, params, seed), k);
}

enum class BudgetMetric { energy, delay, edp, accuracy };

inline BudgetMetric parse_budget_metric(std::string_view s) {
    if (s == "energy") return BudgetMetric::energy;
    if (s == "delay") return BudgetMetric::delay;
    if (s == "edp") return BudgetMetric::edp;
    if (s == "accuracy") return BudgetMetric::accuracy;
    throw Error("unknown budget metric '" + std::string(s) + "'");
}

struct Budget {
    BudgetMetric metric = BudgetMetric::edp;
    double limit = std::numeric_limits<double>::infinity(); // J, s, J*s or accuracy fraction
};

/// Average per-classification cost of running a whole forest as one
/// processing-element pass.
struct ForestCost {
    std::size_t n_trees = 0;
    double accuracy = 0.0;
    double energy_j = 0.0;
    double delay_cycles = 0.0;
    double delay_s = 0.0;
    double edp = 0.0;
    bool within_budget = true;
};

inline ForestCost forest_cost(std::span<const DecisionTree> trees, const Dataset& data, const CostParams& cost,
                              std::size_t parallelism = 0) {
    ForestCost fc;
    fc.n_trees = trees.size();
    std::size_t correct = 0;
    double energy = 0.0;
    double cycles = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto out = mean_of_trees(trees, data.row(i));
        correct += argmax(out.prob) == data.labels[i];
        energy += energy_of(grove_compute_trace(out), cost);
        cycles += static_cast<double>(pe_latency_cycles(out.tree_comparisons, parallelism, out.prob.size(), cost));
    }
    const double n = static_cast<double>(data.size());
    fc.accuracy = static_cast<double>(correct) / n;
    fc.energy_j = energy / n;
    fc.delay_cycles = cycles / n;
    fc.delay_s = seconds_of(fc.delay_cycles, cost);
    fc.edp = edp(fc.energy_j, fc.delay_cycles, cost);
    return fc;
}

inline double budget_value(const ForestCost& fc, BudgetMetric metric) {
    switch (metric) {
    case BudgetMetric::energy: return fc.energy_j;
    case BudgetMetric::delay: return fc.delay_s;
    case BudgetMetric::edp: return fc.edp;
    case BudgetMetric::accuracy: return fc.accuracy;
    }
    return 0.0;
}

struct BudgetedForest {
    RandomForest forest;
    /// One point per forest size tried; the last may be the rejected one.
    std::vector<ForestCost> trajectory;
};

/// Adds trees one at a time while the average validation cost stays within
/// the budget (for an accuracy budget: until validation accuracy reaches it),
/// up to `max_trees`.
inline BudgetedForest budget_rf_train(const Dataset& train, const Dataset& validation, const Budget& budget,
                                      const CostParams& cost, const TreeParams& params, std::size_t max_trees,
                                      std::uint64_t seed, std::size_t parallelism = 0) {
    if (!(budget.limit > 0.0)) {
        throw Error("budget limit must be positive");
    }
    if (max_trees == 0) {
        throw Error("max_trees must be at least 1");
    }
    std::vector<DecisionTree> trees;
    std::vector<ForestCost> trajectory;
    for (std::size_t i = 0; i < max_trees; ++i) {
        trees.push_back(train_forest_tree(train, params, seed, i));
        auto fc = forest_cost(trees, validation, cost, parallelism);
        if (budget.metric == BudgetMetric::accuracy) {
            trajectory.push_back(fc);
            if (fc.accuracy >= budget.limit) {
                break;
            }
            continue;
        }
        fc.within_budget = budget_value(fc, budget.metric) <= budget.limit;
        trajectory.push_back(fc);
        if (!fc.within_budget) {
            trees.pop_back();
            break;
        }
    }
    if (trees.empty()) {
        throw Error("budget is too small for a single tree");
    }
    return {RandomForest(std::move(trees)), std::move(trajectory)};
}

// Field model file: a header line pair followed by concatenated tree records.
//
//   fog-field v1
//   n_groves 8 k 2 n_features 16 n_labels 10
inline void write_field(std::ostream& out, const FieldOfGroves& fog) {
    out << "fog-field v1\n";
    out << "n_groves " << fog.n_groves() << " k " << fog.trees_per_grove() << " n_features " << fog.n_features()
        << " n_labels " << fog.n_labels() << '\n';
    for (const auto& g : fog.groves()) {
        for (const auto& t : g.estimators) {
            write_tree(out, t);
        }
    }
}

inline FieldOfGroves read_field(std::istream& in) {
    const auto header_text = detail::next_record_line(in);
    auto header = detail::words(header_text);
    if (header.size() != 2 || header[0] != "fog-field") {
        throw Error("not a field model file");
    }
    if (header[1] != "v1") {
        throw Error("unsupported field model version '" + std::string(header[1]) + "'");
    }
    const auto meta_text = detail::next_record_line(in);
    auto meta = detail::words(meta_text);
    if (meta.size() != 8 || meta[0] != "n_groves" || meta[2] != "k" || meta[4] != "n_features" ||
        meta[6] != "n_labels") {
        throw Error("malformed field model header");
    }
    const auto n_groves = parse_unsigned(meta[1], "n_groves");
    const auto k = parse_unsigned(meta[3], "k");
    const auto n_features = parse_unsigned(meta[5], "n_features");
    const auto n_labels = parse_unsigned(meta[7], "n_labels");
    std::vector<DecisionTree> trees;
    while (true) {
        in >> std::ws;
        if (in.eof()) {
            break;
        }
        auto t = read_tree(in);
        if (t.n_features() != n_features || t.n_labels() != n_labels) {
            throw Error("tree record disagrees with field header");
        }
        trees.push_back(std::move(t));
    }
    if (trees.empty() || k == 0 || (trees.size() + k - 1) / k != n_groves) {
        throw Error("field header does not match its tree records");
    }
    return split(RandomForest(std::move(trees)), k);
}

inline void save_field(const std::string& path, const FieldOfGroves& fog) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write model file '" + path + "'");
    }
    write_field(out, fog);
}

inline FieldOfGroves load_field(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open model file '" + path + "'");
    }
    return read_field(in);
}

} // namespace fog
