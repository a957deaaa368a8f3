#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fog/forest.hpp"
#include "test_support.hpp"

namespace fog {
namespace {

DecisionTree constant_tree(std::vector<double> dist, std::size_t n_features = 2) {
    TreeNode leaf;
    leaf.leaf_distribution = std::move(dist);
    const auto n_labels = leaf.leaf_distribution.size();
    return DecisionTree({leaf}, 1, n_features, n_labels, {0});
}

/// Forest whose tree i always answers one-hot on label i % n_labels.
RandomForest tagged_forest(std::size_t n_trees, std::size_t n_labels = 32) {
    std::vector<DecisionTree> trees;
    for (std::size_t i = 0; i < n_trees; ++i) {
        std::vector<double> d(n_labels, 0.0);
        d[i % n_labels] = 1.0;
        trees.push_back(constant_tree(d));
    }
    return RandomForest(std::move(trees));
}

std::size_t tag_of(const DecisionTree& t) { return argmax(t.nodes()[0].leaf_distribution); }

TEST(Split, ConsecutiveChunks) {
    auto fog = split(tagged_forest(16), 2);
    ASSERT_EQ(fog.n_groves(), 8u);
    EXPECT_EQ(fog.trees_per_grove(), 2u);
    for (std::size_t j = 0; j < 8; ++j) {
        ASSERT_EQ(fog.grove(j).estimators.size(), 2u);
        EXPECT_EQ(tag_of(fog.grove(j).estimators[0]), 2 * j);
        EXPECT_EQ(tag_of(fog.grove(j).estimators[1]), 2 * j + 1);
        EXPECT_EQ(fog.grove(j).index, j);
    }
    EXPECT_EQ(fog.as_forest(), tagged_forest(16));
}

TEST(Split, Extremes) {
    auto one = split(tagged_forest(16), 16);
    EXPECT_EQ(one.n_groves(), 1u);
    EXPECT_EQ(one.grove(0).estimators.size(), 16u);
    auto singles = split(tagged_forest(16), 1);
    EXPECT_EQ(singles.n_groves(), 16u);
    auto fours = split(tagged_forest(16), 4);
    EXPECT_EQ(fours.n_groves(), 4u);
    EXPECT_TRUE(fours.uniform());
    EXPECT_THROW(split(tagged_forest(4), 0), Error);
}

TEST(Split, RemainderGroveWarns) {
    testing::WarningCapture capture;
    auto fog = split(tagged_forest(5), 2);
    ASSERT_EQ(fog.n_groves(), 3u);
    EXPECT_EQ(fog.grove(0).estimators.size(), 2u);
    EXPECT_EQ(fog.grove(1).estimators.size(), 2u);
    EXPECT_EQ(fog.grove(2).estimators.size(), 1u);
    EXPECT_FALSE(fog.uniform());
    EXPECT_EQ(fog.n_trees(), 5u);
    EXPECT_EQ(capture.messages.size(), 1u);
}

TEST(GroveMean, MatchesDirectAverage) {
    auto rf = testing::random_forest(8, 6, 4, 5, 3);
    auto fog = split(rf, 4);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        auto x = testing::random_input(6, rng);
        for (std::size_t g = 0; g < fog.n_groves(); ++g) {
            std::vector<double> expected(4, 0.0);
            std::size_t comps = 0;
            for (std::size_t t = 4 * g; t < 4 * g + 4; ++t) {
                auto out = rf.estimators()[t].predict_prob(x);
                for (std::size_t c = 0; c < 4; ++c) {
                    expected[c] += out.prob[c] / 4.0;
                }
                comps += out.comparisons;
            }
            auto got = grove_predict_prob(fog.grove(g), x);
            for (std::size_t c = 0; c < 4; ++c) {
                EXPECT_NEAR(got.prob[c], expected[c], 1e-12);
            }
            EXPECT_EQ(got.comparisons(), comps);
        }
    }
}

TEST(RfPredict, SoftVoteTieGoesToLowestLabel) {
    RandomForest rf({constant_tree({1, 0}), constant_tree({0, 1})});
    auto v = rf_predict_soft(rf, std::vector<double>{0, 0});
    EXPECT_EQ(v.prob, (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(v.label, 0u);
}

TEST(RfPredict, MajorityVote) {
    RandomForest rf({constant_tree({0.6, 0.4}), constant_tree({0.9, 0.1}), constant_tree({0.0, 1.0})});
    EXPECT_EQ(rf_predict_majority(rf, std::vector<double>{0, 0}), 0u);
    EXPECT_EQ(rf_predict_soft(rf, std::vector<double>{0, 0}).label, 0u);
    RandomForest flipped({constant_tree({0.45, 0.55}), constant_tree({0.45, 0.55}), constant_tree({1.0, 0.0})});
    EXPECT_EQ(rf_predict_majority(flipped, std::vector<double>{0, 0}), 1u);
    EXPECT_EQ(rf_predict_soft(flipped, std::vector<double>{0, 0}).label, 0u);
}

TEST(GroveTrace, CountsComparisonsAndAccumulates) {
    GroveOutput out{{0.5, 0.25, 0.25}, {3, 4}};
    auto t = grove_compute_trace(out);
    EXPECT_EQ(t.comparisons, 7u);
    EXPECT_EQ(t.accumulate_ops, 9u);
}

TEST(GcTrain, ProducesRequestedShapeDeterministically) {
    auto ds = testing::random_dataset(300, 9, 3, 17);
    TreeParams p;
    p.max_depth = 5;
    auto fog = gc_train(8, 2, ds, p, 42);
    EXPECT_EQ(fog.n_groves(), 4u);
    EXPECT_EQ(fog.n_trees(), 8u);
    for (const auto& g : fog.groves()) {
        for (const auto& t : g.estimators) {
            EXPECT_EQ(t.feature_subset().size(), 3u);
            EXPECT_LE(t.depth(), 5u);
        }
    }
    EXPECT_EQ(fog, gc_train(8, 2, ds, p, 42));
    EXPECT_FALSE(fog == gc_train(8, 2, ds, p, 43));
    EXPECT_THROW(gc_train(0, 1, ds, p, 1), Error);
    EXPECT_THROW(gc_train(4, 5, ds, p, 1), Error);
}

TEST(GcTrain, ForestIsPrefixStable) {
    auto ds = testing::random_dataset(200, 4, 2, 8);
    TreeParams p;
    p.max_depth = 4;
    auto small = train_forest(ds, 3, p, 9);
    auto large = train_forest(ds, 6, p, 9);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(small.estimators()[i], large.estimators()[i]);
    }
}

TEST(FieldFile, RoundTrip) {
    auto ds = testing::random_dataset(300, 7, 4, 2);
    TreeParams p;
    p.max_depth = 6;
    auto fog = gc_train(6, 4, ds, p, 5);
    std::stringstream buf;
    write_field(buf, fog);
    auto back = read_field(buf);
    EXPECT_EQ(back, fog);
    EXPECT_EQ(back.n_groves(), 2u);

    std::stringstream again;
    write_field(again, back);
    std::stringstream first;
    write_field(first, fog);
    EXPECT_EQ(again.str(), first.str());
}

TEST(FieldFile, RejectsInconsistentHeader) {
    auto fog = split(tagged_forest(4, 3), 2);
    std::stringstream buf;
    write_field(buf, fog);
    auto text = buf.str();
    text.replace(text.find("n_groves 2"), 10, "n_groves 3");
    std::istringstream in(text);
    EXPECT_THROW(read_field(in), Error);
    std::istringstream junk("hello\n");
    EXPECT_THROW(read_field(junk), Error);
}

/// Direct per-size EDP: energy from comparison and accumulate counts, delay
/// from the deepest path plus one step per label.
double oracle_edp(const std::vector<DecisionTree>& trees, const Dataset& data, const CostParams& c) {
    double energy = 0.0;
    double delay = 0.0;
    const double m = static_cast<double>(trees.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        double comps = 0.0;
        double deepest = 0.0;
        for (const auto& t : trees) {
            const double k = static_cast<double>(t.predict_prob(data.row(i)).comparisons);
            comps += k;
            deepest = std::max(deepest, k);
        }
        const double l = static_cast<double>(data.n_labels);
        energy += comps * c.e_compare + (m + 1.0) * l * c.e_accumulate;
        delay += std::max(1.0, deepest + l);
    }
    const double n = static_cast<double>(data.size());
    return (energy / n) * (delay / n) / c.clock_hz;
}

class BudgetTraining : public ::testing::Test {
protected:
    void SetUp() override {
        auto all = testing::random_dataset(600, 8, 3, 77);
        auto parts = split(all, SplitSpec{0.6, 0.3, 0.1, 4});
        train = parts.train;
        val = parts.validation;
        params.max_depth = 6;
    }
    Dataset train;
    Dataset val;
    TreeParams params;
    CostParams cost;
};

TEST_F(BudgetTraining, InfiniteBudgetUsesEveryTree) {
    auto r = budget_rf_train(train, val, Budget{}, cost, params, 16, 3);
    EXPECT_EQ(r.forest.size(), 16u);
    EXPECT_EQ(r.trajectory.size(), 16u);
    EXPECT_EQ(r.forest, train_forest(train, 16, params, 3));
}

TEST_F(BudgetTraining, TinyBudgetIsAnError) {
    EXPECT_THROW(budget_rf_train(train, val, Budget{BudgetMetric::edp, 1e-40}, cost, params, 16, 3), Error);
    EXPECT_THROW(budget_rf_train(train, val, Budget{BudgetMetric::edp, 0.0}, cost, params, 16, 3), Error);
}

TEST_F(BudgetTraining, StopsAtOracleSize) {
    std::vector<DecisionTree> trees;
    std::vector<double> per_size;
    for (std::size_t i = 0; i < 16; ++i) {
        trees.push_back(train_forest_tree(train, params, 3, i));
        per_size.push_back(oracle_edp(trees, val, cost));
    }
    const double limit = 2.0 * per_size[0];
    std::size_t expected = 0;
    while (expected < per_size.size() && per_size[expected] <= limit) {
        ++expected;
    }
    ASSERT_GT(expected, 0u);
    ASSERT_LT(expected, 16u);

    auto r = budget_rf_train(train, val, Budget{BudgetMetric::edp, limit}, cost, params, 16, 3);
    EXPECT_EQ(r.forest.size(), expected);
    ASSERT_EQ(r.trajectory.size(), expected + 1);
    EXPECT_FALSE(r.trajectory.back().within_budget);
    for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
        EXPECT_NEAR(r.trajectory[i].edp, per_size[i], 1e-9 * per_size[i]);
        EXPECT_EQ(r.trajectory[i].n_trees, i + 1);
    }
}

TEST_F(BudgetTraining, EnergyGrowsWithForestSize) {
    auto r = budget_rf_train(train, val, Budget{}, cost, params, 12, 3);
    for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
        EXPECT_GT(r.trajectory[i].energy_j, r.trajectory[i - 1].energy_j);
        EXPECT_GE(r.trajectory[i].edp, r.trajectory[i - 1].edp * 0.999);
    }
}

TEST_F(BudgetTraining, AccuracyTargetStopsEarly) {
    auto r = budget_rf_train(train, val, Budget{BudgetMetric::accuracy, 0.01}, cost, params, 16, 3);
    EXPECT_EQ(r.forest.size(), 1u);
    EXPECT_EQ(parse_budget_metric("delay"), BudgetMetric::delay);
    EXPECT_THROW(parse_budget_metric("power"), Error);
}

} // namespace
} // namespace fog
