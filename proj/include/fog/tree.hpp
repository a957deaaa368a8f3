#pragma once

// CART decision trees stored as reprogrammable node arrays: every internal node
// holds a threshold weight and a feature offset into the input payload.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fog/common.hpp"
#include "fog/dataset.hpp"

namespace fog {

inline constexpr std::int32_t kNoChild = -1;

struct TreeNode {
    std::size_t feature_offset = 0;
    double threshold = 0.0;
    std::int32_t left = kNoChild;
    std::int32_t right = kNoChild;
    std::vector<double> leaf_distribution; // non-empty exactly for leaves

    bool is_leaf() const noexcept { return !leaf_distribution.empty(); }

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct TreeParams {
    std::size_t max_depth = 12;
    std::size_t min_leaf = 1;
    /// Features drawn per tree by the forest trainer; 0 selects ceil(sqrt(n_features)).
    std::size_t features_per_tree = 0;
    /// Draw a bootstrap sample (with replacement, same size) from the seed.
    bool bootstrap = false;
};

/// Probabilities from one evaluation plus the number of node comparisons spent.
struct TreeOutput {
    std::span<const double> prob;
    std::size_t comparisons = 0;
};

class DecisionTree {
public:
    DecisionTree() = default;
    DecisionTree(std::vector<TreeNode> nodes, std::size_t max_depth, std::size_t n_features,
                 std::size_t n_labels, std::vector<std::size_t> feature_subset)
        : nodes_(std::move(nodes)),
          max_depth_(max_depth),
          n_features_(n_features),
          n_labels_(n_labels),
          feature_subset_(std::move(feature_subset)) {
        validate();
    }

    /// Walks root to leaf; x[offset] > threshold goes right.
    TreeOutput predict_prob(std::span<const double> x) const {
        std::size_t node = 0;
        std::size_t comparisons = 0;
        while (!nodes_[node].is_leaf()) {
            const auto& n = nodes_[node];
            node = static_cast<std::size_t>(x[n.feature_offset] > n.threshold ? n.right : n.left);
            ++comparisons;
        }
        return {nodes_[node].leaf_distribution, comparisons};
    }

    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t max_depth() const noexcept { return max_depth_; }
    std::size_t n_features() const noexcept { return n_features_; }
    std::size_t n_labels() const noexcept { return n_labels_; }
    const std::vector<std::size_t>& feature_subset() const noexcept { return feature_subset_; }

    /// Depth of the deepest leaf (0 for a single-leaf tree).
    std::size_t depth() const {
        std::size_t deepest = 0;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [node, d] = stack.back();
            stack.pop_back();
            if (nodes_[node].is_leaf()) {
                deepest = std::max(deepest, d);
            } else {
                stack.emplace_back(static_cast<std::size_t>(nodes_[node].left), d + 1);
                stack.emplace_back(static_cast<std::size_t>(nodes_[node].right), d + 1);
            }
        }
        return deepest;
    }

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

private:
    void validate() const;

    std::vector<TreeNode> nodes_;
    std::size_t max_depth_ = 0;
    std::size_t n_features_ = 0;
    std::size_t n_labels_ = 0;
    std::vector<std::size_t> feature_subset_;
};

inline void DecisionTree::validate() const {
    if (nodes_.empty()) {
        throw Error("tree has no nodes");
    }
    if (n_labels_ == 0) {
        throw Error("tree has no labels");
    }
    std::vector<char> referenced(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        if (n.is_leaf()) {
            if (n.left != kNoChild || n.right != kNoChild) {
                throw Error("leaf " + std::to_string(i) + " has children");
            }
            if (n.leaf_distribution.size() != n_labels_) {
                throw Error("leaf " + std::to_string(i) + " distribution has wrong length");
            }
            double sum = 0.0;
            for (double p : n.leaf_distribution) {
                if (!(p >= 0.0)) {
                    throw Error("leaf " + std::to_string(i) + " has a negative probability");
                }
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw Error("leaf " + std::to_string(i) + " distribution does not sum to 1");
            }
            continue;
        }
        if (n.feature_offset >= n_features_) {
            throw Error("node " + std::to_string(i) + " feature offset out of range");
        }
        if (std::find(feature_subset_.begin(), feature_subset_.end(), n.feature_offset) == feature_subset_.end()) {
            throw Error("node " + std::to_string(i) + " uses a feature outside the tree's subset");
        }
        for (auto child : {n.left, n.right}) {
            if (child <= 0 || static_cast<std::size_t>(child) >= nodes_.size()) {
                throw Error("node " + std::to_string(i) + " has an invalid child reference");
            }
            if (referenced[static_cast<std::size_t>(child)]++) {
                throw Error("node " + std::to_string(child) + " has more than one parent (cycle or DAG)");
            }
        }
    }
    // With a unique parent per non-root node and the root never referenced,
    // every node is reachable iff the structure is a tree; a cycle would leave
    // its members unreachable from the root.
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t visited = 0;
    while (!stack.empty()) {
        auto [node, d] = stack.back();
        stack.pop_back();
        if (seen[node]++) {
            throw Error("tree contains a cycle");
        }
        ++visited;
        if (!nodes_[node].is_leaf()) {
            if (d + 1 > max_depth_) {
                throw Error("tree exceeds its max depth");
            }
            stack.emplace_back(static_cast<std::size_t>(nodes_[node].left), d + 1);
            stack.emplace_back(static_cast<std::size_t>(nodes_[node].right), d + 1);
        }
    }
    if (visited != nodes_.size()) {
        throw Error("tree contains unreachable nodes or a cycle");
    }
}

namespace detail {

struct SplitCandidate {
    double impurity = std::numeric_limits<double>::infinity();
    std::size_t feature = 0;
    double threshold = 0.0;
    bool found = false;
};

// Sum over both children of (n - sum_c count_c^2 / n), i.e. sample-weighted Gini.
inline double weighted_gini(std::span<const std::size_t> counts, std::size_t n) {
    if (n == 0) {
        return 0.0;
    }
    double sq = 0.0;
    for (auto c : counts) {
        sq += static_cast<double>(c) * static_cast<double>(c);
    }
    return static_cast<double>(n) - sq / static_cast<double>(n);
}

class CartBuilder {
public:
    CartBuilder(const Dataset& data, const TreeParams& params, std::span<const std::size_t> features)
        : data_(data), params_(params), features_(features.begin(), features.end()) {}

    std::vector<TreeNode> build(std::vector<std::size_t> samples) {
        grow(std::move(samples), 0);
        return std::move(nodes_);
    }

private:
    std::size_t make_leaf(std::span<const std::size_t> samples) {
        TreeNode leaf;
        leaf.leaf_distribution.assign(data_.n_labels, 0.0);
        for (auto s : samples) {
            leaf.leaf_distribution[data_.labels[s]] += 1.0;
        }
        for (auto& p : leaf.leaf_distribution) {
            p /= static_cast<double>(samples.size());
        }
        nodes_.push_back(std::move(leaf));
        return nodes_.size() - 1;
    }

    SplitCandidate best_split(std::vector<std::size_t>& samples) const {
        SplitCandidate best;
        const std::size_t n = samples.size();
        const std::size_t L = data_.n_labels;
        std::vector<std::size_t> total(L, 0);
        for (auto s : samples) {
            ++total[data_.labels[s]];
        }
        std::vector<std::size_t> left(L), right(L);
        for (auto f : features_) {
            std::sort(samples.begin(), samples.end(), [&](std::size_t a, std::size_t b) {
                const double va = data_.features[a * data_.n_features + f];
                const double vb = data_.features[b * data_.n_features + f];
                return va < vb || (va == vb && a < b);
            });
            std::fill(left.begin(), left.end(), 0);
            right = total;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto y = data_.labels[samples[i]];
                ++left[y];
                --right[y];
                const double v = data_.features[samples[i] * data_.n_features + f];
                const double next = data_.features[samples[i + 1] * data_.n_features + f];
                if (!(v < next)) {
                    continue;
                }
                const std::size_t n_left = i + 1;
                if (n_left < params_.min_leaf || n - n_left < params_.min_leaf) {
                    continue;
                }
                const double impurity = weighted_gini(left, n_left) + weighted_gini(right, n - n_left);
                if (impurity < best.impurity) {
                    best.impurity = impurity;
                    best.feature = f;
                    best.threshold = v + (next - v) / 2.0;
                    best.found = true;
                }
            }
        }
        return best;
    }

    std::size_t grow(std::vector<std::size_t> samples, std::size_t depth) {
        const bool pure = std::all_of(samples.begin(), samples.end(), [&](std::size_t s) {
            return data_.labels[s] == data_.labels[samples.front()];
        });
        if (pure || depth >= params_.max_depth || samples.size() < 2 * params_.min_leaf) {
            return make_leaf(samples);
        }
        const auto split = best_split(samples);
        if (!split.found) {
            return make_leaf(samples);
        }
        std::vector<std::size_t> left, right;
        for (auto s : samples) {
            (data_.features[s * data_.n_features + split.feature] > split.threshold ? right : left).push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        const std::size_t id = nodes_.size();
        TreeNode node;
        node.feature_offset = split.feature;
        node.threshold = split.threshold;
        nodes_.push_back(std::move(node));
        const auto l = grow(std::move(left), depth + 1);
        const auto r = grow(std::move(right), depth + 1);
        nodes_[id].left = static_cast<std::int32_t>(l);
        nodes_[id].right = static_cast<std::int32_t>(r);
        return id;
    }

    const Dataset& data_;
    const TreeParams& params_;
    std::vector<std::size_t> features_;
    std::vector<TreeNode> nodes_;
};

} // namespace detail

/// Greedy CART growth by Gini impurity. Candidate thresholds are midpoints
/// between consecutive distinct values; ties keep the lowest feature index and
/// then the lowest threshold. With `params.bootstrap` the rows are resampled
/// with replacement from `rng_seed`.
inline DecisionTree train_cart(const Dataset& train, const TreeParams& params,
                               std::vector<std::size_t> feature_subset, std::uint64_t rng_seed = 0) {
    if (train.size() == 0) {
        throw Error("cannot train a tree on an empty dataset");
    }
    if (feature_subset.empty()) {
        throw Error("tree feature subset is empty");
    }
    if (params.max_depth < 1) {
        throw Error("max_depth must be at least 1");
    }
    if (params.min_leaf < 1) {
        throw Error("min_leaf must be at least 1");
    }
    std::sort(feature_subset.begin(), feature_subset.end());
    feature_subset.erase(std::unique(feature_subset.begin(), feature_subset.end()), feature_subset.end());
    for (auto f : feature_subset) {
        if (f >= train.n_features) {
            throw Error("feature subset index out of range");
        }
    }
    std::vector<std::size_t> samples(train.size());
    if (params.bootstrap) {
        std::mt19937_64 rng(rng_seed);
        std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
        for (auto& s : samples) {
            s = pick(rng);
        }
    } else {
        std::iota(samples.begin(), samples.end(), std::size_t{0});
    }
    detail::CartBuilder builder(train, params, feature_subset);
    auto nodes = builder.build(std::move(samples));
    return DecisionTree(std::move(nodes), params.max_depth, train.n_features, train.n_labels,
                        std::move(feature_subset));
}

inline DecisionTree train_cart(const Dataset& train, const TreeParams& params) {
    std::vector<std::size_t> all(train.n_features);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return train_cart(train, params, std::move(all));
}

// Text record, one node per line:
//
//   tree v1
//   n_features 16 n_labels 10 max_depth 12 n_nodes 5
//   feature_subset 1,4,9
//   node 0 feat 4 thr 0.5 L 1 R 2
//   leaf 1 dist 1,0,...
//   end
inline constexpr std::string_view kTreeRecordVersion = "v1";

inline void write_tree(std::ostream& out, const DecisionTree& tree) {
    out << "tree " << kTreeRecordVersion << '\n';
    out << "n_features " << tree.n_features() << " n_labels " << tree.n_labels() << " max_depth "
        << tree.max_depth() << " n_nodes " << tree.nodes().size() << '\n';
    out << "feature_subset ";
    for (std::size_t i = 0; i < tree.feature_subset().size(); ++i) {
        out << (i ? "," : "") << tree.feature_subset()[i];
    }
    out << '\n';
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
        const auto& n = tree.nodes()[i];
        if (n.is_leaf()) {
            out << "leaf " << i << " dist ";
            for (std::size_t c = 0; c < n.leaf_distribution.size(); ++c) {
                out << (c ? "," : "") << format_double(n.leaf_distribution[c]);
            }
        } else {
            out << "node " << i << " feat " << n.feature_offset << " thr " << format_double(n.threshold)
                << " L " << n.left << " R " << n.right;
        }
        out << '\n';
    }
    out << "end\n";
}

inline std::string serialize_tree(const DecisionTree& tree) {
    std::ostringstream out;
    write_tree(out, tree);
    return out.str();
}

namespace detail {

inline std::string next_record_line(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            return std::string(trim(line));
        }
    }
    throw Error("unexpected end of tree record");
}

inline std::vector<std::string_view> words(std::string_view line) {
    std::vector<std::string_view> out;
    for (auto w : split_view(line, ' ')) {
        if (!w.empty()) {
            out.push_back(w);
        }
    }
    return out;
}

inline std::int32_t parse_child(std::string_view text) {
    const auto v = parse_unsigned(text, "child id");
    if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max())) {
        throw Error("child id too large");
    }
    return static_cast<std::int32_t>(v);
}

} // namespace detail

/// Reads one record written by `write_tree`; structure is validated.
inline DecisionTree read_tree(std::istream& in) {
    const auto header_text = detail::next_record_line(in);
    auto header = detail::words(header_text);
    if (header.size() != 2 || header[0] != "tree") {
        throw Error("malformed tree record header");
    }
    if (header[1] != kTreeRecordVersion) {
        throw Error("unsupported tree record version '" + std::string(header[1]) + "'");
    }
    const auto meta_text = detail::next_record_line(in);
    auto meta = detail::words(meta_text);
    if (meta.size() != 8 || meta[0] != "n_features" || meta[2] != "n_labels" || meta[4] != "max_depth" ||
        meta[6] != "n_nodes") {
        throw Error("malformed tree record metadata");
    }
    const auto n_features = parse_unsigned(meta[1], "n_features");
    const auto n_labels = parse_unsigned(meta[3], "n_labels");
    const auto max_depth = parse_unsigned(meta[5], "max_depth");
    const auto n_nodes = parse_unsigned(meta[7], "n_nodes");
    if (n_nodes == 0 || n_nodes > (1u << 30)) {
        throw Error("implausible node count in tree record");
    }
    const auto subset_text = detail::next_record_line(in);
    auto subset_line = detail::words(subset_text);
    if (subset_line.size() != 2 || subset_line[0] != "feature_subset") {
        throw Error("malformed feature_subset line");
    }
    std::vector<std::size_t> subset;
    for (auto f : split_view(subset_line[1], ',')) {
        subset.push_back(parse_unsigned(f, "feature_subset"));
    }
    std::vector<TreeNode> nodes(n_nodes);
    std::vector<char> defined(n_nodes, 0);
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
        const auto line = detail::next_record_line(in);
        auto w = detail::words(line);
        if (w.size() < 2) {
            throw Error("malformed node line");
        }
        const auto id = parse_unsigned(w[1], "node id");
        if (id >= n_nodes || defined[id]++) {
            throw Error("node id " + std::string(w[1]) + " out of range or duplicated");
        }
        auto& node = nodes[id];
        if (w[0] == "node") {
            if (w.size() != 10 || w[2] != "feat" || w[4] != "thr" || w[6] != "L" || w[8] != "R") {
                throw Error("malformed node line");
            }
            node.feature_offset = parse_unsigned(w[3], "feat");
            node.threshold = parse_double(w[5], "thr");
            node.left = detail::parse_child(w[7]);
            node.right = detail::parse_child(w[9]);
        } else if (w[0] == "leaf") {
            if (w.size() != 4 || w[2] != "dist") {
                throw Error("malformed leaf line");
            }
            for (auto p : split_view(w[3], ',')) {
                node.leaf_distribution.push_back(parse_double(p, "dist"));
            }
        } else {
            throw Error("unknown tree record line '" + std::string(w[0]) + "'");
        }
    }
    if (detail::next_record_line(in) != "end") {
        throw Error("tree record missing 'end'");
    }
    return DecisionTree(std::move(nodes), max_depth, n_features, n_labels, std::move(subset));
}

inline DecisionTree deserialize_tree(const std::string& record) {
    std::istringstream in(record);
    return read_tree(in);
}

} // namespace fog
