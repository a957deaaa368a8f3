#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fog/eval.hpp"
#include "test_support.hpp"

namespace fog {
namespace {

using testing::ScriptedGroves;

ScriptedGroves worked_example() {
    return ScriptedGroves{{{0.32, 0.35, 0.33}, {0.28, 0.45, 0.27}, {0.10, 0.10, 0.80}}};
}

Dataset inputs(std::size_t n, std::size_t n_features = 2, std::size_t n_labels = 3, std::uint64_t seed = 1) {
    return testing::random_dataset(n, n_features, n_labels, seed);
}

TEST(MaxDiff, Examples) {
    EXPECT_NEAR(max_diff(std::vector<double>{0.32, 0.35, 0.33}), 0.02, 1e-12);
    EXPECT_EQ(max_diff(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}), 0.0);
    EXPECT_EQ(max_diff(std::vector<double>{0, 0, 1}), 1.0);
    EXPECT_NEAR(max_diff(std::vector<std::vector<double>>{{0.9, 0.1}, {0.6, 0.4}}), 0.2, 1e-12);
    EXPECT_THROW(max_diff(std::vector<double>{1.0}), Error);
}

TEST(Confidence, MultiOutputSegments) {
    EvalConfig cfg;
    cfg.multi_output = true;
    cfg.output_widths = {2, 2};
    EXPECT_NEAR(confidence(std::vector<double>{0.9, 0.1, 0.6, 0.4}, cfg), 0.2, 1e-12);
    EXPECT_NO_THROW(cfg.validate(1, 4));
    EXPECT_THROW(cfg.validate(1, 5), Error);
    cfg.output_widths = {1, 3};
    EXPECT_THROW(cfg.validate(1, 4), Error);
}

TEST(EvalConfig, Validation) {
    EvalConfig cfg;
    cfg.thresh = 0.0;
    EXPECT_THROW(cfg.validate(4, 2), Error);
    cfg.thresh = 1.0;
    EXPECT_THROW(cfg.validate(4, 2), Error);
    cfg.thresh = 0.5;
    cfg.max_hops = 0;
    EXPECT_THROW(cfg.validate(4, 2), Error);
    cfg.max_hops = 5;
    EXPECT_THROW(cfg.validate(4, 2), Error);
    cfg.max_hops = 4;
    EXPECT_NO_THROW(cfg.validate(4, 2));
}

TEST(GcEval, WorkedExample) {
    auto fog = worked_example();
    auto data = inputs(1);
    EvalConfig cfg;
    cfg.thresh = 0.1;
    cfg.max_hops = 3;
    const std::vector<std::size_t> start{0};
    auto r = gc_eval(fog, data, cfg, start).front();
    EXPECT_EQ(r.hops, 2u);
    EXPECT_EQ(r.label, 1u);
    EXPECT_NEAR(r.prob_norm[0], 0.30, 1e-9);
    EXPECT_NEAR(r.prob_norm[1], 0.40, 1e-9);
    EXPECT_NEAR(r.prob_norm[2], 0.30, 1e-9);
    EXPECT_NEAR(r.confidence, 0.10, 1e-9);
    EXPECT_EQ(r.comparisons, 4u);
}

TEST(GcEval, FirstGroveAloneIsNotConfident) {
    auto fog = worked_example();
    auto data = inputs(1);
    EvalConfig cfg;
    cfg.thresh = 0.1;
    cfg.max_hops = 1;
    const std::vector<std::size_t> start{0};
    auto r = gc_eval(fog, data, cfg, start).front();
    EXPECT_EQ(r.hops, 1u);
    EXPECT_NEAR(r.confidence, 0.02, 1e-12);
    EXPECT_EQ(r.label, 1u);
}

TEST(GcEval, MaxHopsOneAlwaysStopsAfterOneGrove) {
    auto rf = testing::random_forest(8, 4, 5, 4, 2);
    auto fog = split(rf, 2);
    auto data = inputs(200, 4, 5, 3);
    EvalConfig cfg;
    cfg.thresh = 0.999;
    cfg.max_hops = 1;
    for (const auto& r : gc_eval(fog, data, cfg)) {
        EXPECT_EQ(r.hops, 1u);
    }
}

TEST(GcEval, FullTraversalEqualsSoftVote) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const std::size_t n = 4u << (seed % 3);
        const std::size_t k = seed % 2 == 0 ? 2 : 4;
        auto rf = testing::random_forest(n, 6, 4, 5, seed + 100);
        auto fog = split(rf, k);
        auto data = inputs(150, 6, 4, seed);
        EvalConfig cfg;
        cfg.thresh = std::nextafter(1.0, 0.0);
        cfg.max_hops = fog.n_groves();
        cfg.seed = seed;
        for (const auto& r : gc_eval(fog, data, cfg)) {
            auto soft = rf_predict_soft(rf, data.row(r.input_id));
            EXPECT_EQ(r.label, soft.label);
            EXPECT_EQ(r.hops, fog.n_groves());
            for (std::size_t c = 0; c < 4; ++c) {
                EXPECT_NEAR(r.prob_norm[c], soft.prob[c], 1e-9);
            }
        }
    }
}

TEST(GcEval, HopsAreMonotoneInThreshold) {
    auto rf = testing::random_forest(16, 5, 4, 5, 9);
    auto fog = split(rf, 2);
    auto data = inputs(300, 5, 4, 7);
    EvalConfig cfg;
    cfg.max_hops = fog.n_groves();
    cfg.seed = 3;
    std::vector<std::size_t> previous(data.size(), 0);
    for (int i = 1; i < 20; ++i) {
        cfg.thresh = i / 20.0;
        auto results = gc_eval(fog, data, cfg);
        for (std::size_t j = 0; j < results.size(); ++j) {
            EXPECT_GE(results[j].hops, previous[j]);
            previous[j] = results[j].hops;
        }
    }
}

TEST(GcEval, OutputsAreNormalizedAndLabelIsArgmax) {
    auto rf = testing::random_forest(12, 5, 6, 6, 4);
    auto fog = split(rf, 3);
    auto data = inputs(300, 5, 6, 2);
    EvalConfig cfg;
    cfg.thresh = 0.3;
    cfg.max_hops = fog.n_groves();
    for (const auto& r : gc_eval(fog, data, cfg)) {
        EXPECT_NEAR(std::accumulate(r.prob_norm.begin(), r.prob_norm.end(), 0.0), 1.0, 1e-9);
        EXPECT_EQ(r.label, argmax(r.prob_norm));
        EXPECT_GE(r.hops, 1u);
        EXPECT_LE(r.hops, cfg.max_hops);
    }
}

TEST(GcEval, DeterministicAndOrderIndependent) {
    auto rf = testing::random_forest(8, 3, 3, 5, 6);
    auto fog = split(rf, 2);
    auto data = inputs(100, 3, 3, 8);
    EvalConfig cfg;
    cfg.thresh = 0.4;
    cfg.max_hops = 4;
    cfg.seed = 12;
    auto a = gc_eval(fog, data, cfg);
    auto b = gc_eval(fog, data, cfg);
    std::set<std::size_t> starts;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].prob_norm, b[i].prob_norm);
        EXPECT_EQ(a[i].start_grove, b[i].start_grove);
        EXPECT_EQ(a[i].start_grove, start_grove(12, i, 4));
        starts.insert(a[i].start_grove);
        auto single = evaluate_input(fog, data.row(i), i, start_grove(12, i, 4), cfg);
        EXPECT_EQ(single.prob_norm, a[i].prob_norm);
    }
    EXPECT_EQ(starts.size(), 4u);
}

/// Records which groves were asked, in order.
struct RecordingGroves {
    ScriptedGroves inner;
    mutable std::vector<std::size_t> visited;

    std::size_t n_groves() const { return inner.n_groves(); }
    std::size_t n_labels() const { return inner.n_labels(); }
    GroveOutput grove_output(std::size_t index, std::span<const double> x) const {
        visited.push_back(index);
        return inner.grove_output(index, x);
    }
};

TEST(GcEval, VisitsGrovesAroundTheRing) {
    RecordingGroves fog{ScriptedGroves{{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}}, {}};
    auto data = inputs(1, 2, 2);
    EvalConfig cfg;
    cfg.thresh = 0.5;
    cfg.max_hops = 5;
    const std::vector<std::size_t> start{3};
    auto r = gc_eval(fog, data, cfg, start).front();
    EXPECT_EQ(r.hops, 5u);
    EXPECT_EQ(fog.visited, (std::vector<std::size_t>{3, 4, 0, 1, 2}));
}

std::vector<EvalResult> hand_results() {
    // labels 0 1 1 2 0 1, hops 1 2 3 1 1 4
    const std::vector<std::pair<Label, std::size_t>> spec{{0, 1}, {1, 2}, {1, 3}, {2, 1}, {0, 1}, {1, 4}};
    std::vector<EvalResult> out;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        EvalResult r;
        r.input_id = i;
        r.label = spec[i].first;
        r.hops = spec[i].second;
        out.push_back(r);
    }
    return out;
}

TEST(Metrics, HandCountedAccuracyAndHops) {
    auto results = hand_results();
    const std::vector<Label> truth{0, 1, 2, 2, 1, 1};
    EXPECT_DOUBLE_EQ(accuracy(results, truth), 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(avg_hops(results), 12.0 / 6.0);
    const std::vector<Label> perfect{0, 1, 1, 2, 0, 1};
    EXPECT_EQ(accuracy(results, perfect), 1.0);
    for (auto& r : results) {
        r.hops = 1;
    }
    EXPECT_EQ(avg_hops(results), 1.0);
    EXPECT_THROW(accuracy(results, std::vector<Label>{0, 1}), Error);
}

TEST(ResultsCsv, HeaderAndRows) {
    auto fog = worked_example();
    auto data = inputs(1);
    EvalConfig cfg;
    cfg.thresh = 0.1;
    cfg.max_hops = 2;
    const std::vector<std::size_t> start{0};
    auto results = gc_eval(fog, data, cfg, start);
    std::ostringstream out;
    write_results_csv(out, results);
    const auto text = out.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), "id,label,confidence,hops,start_grove,prob_0,prob_1,prob_2");
    const auto row = text.substr(text.find('\n') + 1);
    auto fields = split_view(trim(row), ',');
    ASSERT_EQ(fields.size(), 8u);
    EXPECT_EQ(fields[0], "0");
    EXPECT_EQ(fields[1], "1");
    EXPECT_NEAR(parse_double(fields[2], "confidence"), 0.1, 1e-12);
    EXPECT_EQ(fields[3], "2");
    EXPECT_EQ(fields[4], "0");
    EXPECT_NEAR(parse_double(fields[6], "prob_1"), 0.4, 1e-12);
}

} // namespace
} // namespace fog
