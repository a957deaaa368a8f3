#pragma once

// Architecture-free field-of-groves evaluation: start at a random grove, keep
// a running mean of grove distributions around the ring and stop as soon as
// the gap between the two most probable labels reaches the threshold.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fog/common.hpp"
#include "fog/dataset.hpp"
#include "fog/forest.hpp"

namespace fog {

/// Absolute slack on the confidence test. A running mean such as
/// (0.35+0.45)/2 - (0.33+0.27)/2 lands one ulp under 0.1 in binary floating
/// point; the slack keeps such exact-decimal ties on the stopping side.
inline constexpr double kConfidenceSlack = 1e-12;

/// Gap between the two largest entries.
inline double max_diff(std::span<const double> prob) {
    if (prob.size() < 2) {
        throw Error("confidence needs at least two classes");
    }
    double first = -std::numeric_limits<double>::infinity();
    double second = -std::numeric_limits<double>::infinity();
    for (double p : prob) {
        if (p > first) {
            second = first;
            first = p;
        } else if (p > second) {
            second = p;
        }
    }
    return first - second;
}

/// Multi-output confidence: the smallest per-output gap.
inline double max_diff(const std::vector<std::vector<double>>& outputs) {
    if (outputs.empty()) {
        throw Error("confidence needs at least one output");
    }
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& o : outputs) {
        lowest = std::min(lowest, max_diff(o));
    }
    return lowest;
}

struct EvalConfig {
    double thresh = 0.5;
    std::size_t max_hops = 1;
    std::uint64_t seed = 0;
    /// When false every input visits max_hops groves regardless of confidence.
    bool early_exit = true;
    /// When set, the probability array is the concatenation of several outputs
    /// whose widths are listed in `output_widths`.
    bool multi_output = false;
    std::vector<std::size_t> output_widths;

    void validate(std::size_t n_groves, std::size_t n_labels) const {
        if (!(thresh > 0.0 && thresh < 1.0)) {
            throw Error("threshold must lie in (0,1)");
        }
        if (max_hops < 1 || max_hops > n_groves) {
            throw Error("max_hops must lie in [1, n_groves]");
        }
        if (multi_output) {
            std::size_t total = 0;
            for (auto w : output_widths) {
                if (w < 2) {
                    throw Error("each output needs at least two classes");
                }
                total += w;
            }
            if (output_widths.empty() || total != n_labels) {
                throw Error("output widths must partition the label array");
            }
        }
    }
};

/// Confidence of a (possibly multi-output) probability array under `cfg`.
inline double confidence(std::span<const double> prob, const EvalConfig& cfg) {
    if (!cfg.multi_output) {
        return max_diff(prob);
    }
    double lowest = std::numeric_limits<double>::infinity();
    std::size_t offset = 0;
    for (auto w : cfg.output_widths) {
        lowest = std::min(lowest, max_diff(prob.subspan(offset, w)));
        offset += w;
    }
    return lowest;
}

inline bool is_confident(double conf, double thresh) { return conf >= thresh - kConfidenceSlack; }

/// Start grove for an input: one counter-based draw from (seed, input id), so
/// results do not depend on batch order or parallel scheduling.
inline std::size_t start_grove(std::uint64_t seed, std::size_t input_id, std::size_t n_groves) {
    return static_cast<std::size_t>(mix64(mix64(seed) ^ static_cast<std::uint64_t>(input_id)) % n_groves);
}

struct EvalResult {
    std::size_t input_id = 0;
    std::vector<double> prob_norm;
    Label label = 0;
    std::size_t hops = 0;
    std::size_t start_grove = 0;
    double confidence = 0.0;
    /// Operation counters accumulated over the groves consulted.
    std::size_t comparisons = 0;
};

/// Evaluates one input starting at `start`.
template <GroveSource Source>
EvalResult evaluate_input(const Source& fog, std::span<const double> x, std::size_t input_id, std::size_t start,
                          const EvalConfig& cfg) {
    const std::size_t n_groves = fog.n_groves();
    const std::size_t n_labels = fog.n_labels();
    EvalResult r;
    r.input_id = input_id;
    r.start_grove = start;
    std::vector<double> prob(n_labels, 0.0);
    r.prob_norm.assign(n_labels, 0.0);
    for (std::size_t j = 0; j < cfg.max_hops; ++j) {
        const std::size_t index = (start + j) % n_groves;
        const auto out = fog.grove_output(index, x);
        r.comparisons += out.comparisons();
        for (std::size_t c = 0; c < n_labels; ++c) {
            prob[c] += out.prob[c];
            r.prob_norm[c] = prob[c] / static_cast<double>(j + 1);
        }
        r.hops = j + 1;
        r.confidence = confidence(r.prob_norm, cfg);
        if (cfg.early_exit && is_confident(r.confidence, cfg.thresh)) {
            break;
        }
    }
    r.label = argmax(r.prob_norm);
    return r;
}

/// Evaluates every row of `data` with explicit start groves.
template <GroveSource Source>
std::vector<EvalResult> gc_eval(const Source& fog, const Dataset& data, const EvalConfig& cfg,
                                std::span<const std::size_t> starts) {
    cfg.validate(fog.n_groves(), fog.n_labels());
    if (starts.size() != data.size()) {
        throw Error("need one start grove per input");
    }
    std::vector<EvalResult> results;
    results.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (starts[i] >= fog.n_groves()) {
            throw Error("start grove out of range");
        }
        results.push_back(evaluate_input(fog, data.row(i), i, starts[i], cfg));
    }
    return results;
}

template <GroveSource Source>
std::vector<std::size_t> start_groves(const Source& fog, std::size_t n_inputs, std::uint64_t seed) {
    std::vector<std::size_t> starts(n_inputs);
    for (std::size_t i = 0; i < n_inputs; ++i) {
        starts[i] = start_grove(seed, i, fog.n_groves());
    }
    return starts;
}

/// Evaluates every row of `data`; input ids are row indices.
template <GroveSource Source>
std::vector<EvalResult> gc_eval(const Source& fog, const Dataset& data, const EvalConfig& cfg) {
    const auto starts = start_groves(fog, data.size(), cfg.seed);
    return gc_eval(fog, data, cfg, starts);
}

inline double accuracy(std::span<const EvalResult> results, std::span<const Label> truth) {
    if (results.size() != truth.size() || results.empty()) {
        throw Error("results and labels are not aligned");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].input_id >= truth.size()) {
            throw Error("result id has no matching label");
        }
        correct += results[i].label == truth[results[i].input_id];
    }
    return static_cast<double>(correct) / static_cast<double>(results.size());
}

inline double avg_hops(std::span<const EvalResult> results) {
    if (results.empty()) {
        throw Error("no results");
    }
    double total = 0.0;
    for (const auto& r : results) {
        total += static_cast<double>(r.hops);
    }
    return total / static_cast<double>(results.size());
}

/// `id,label,confidence,hops,start_grove,prob_0..prob_{L-1}`
inline void write_results_csv(std::ostream& out, std::span<const EvalResult> results) {
    const std::size_t n_labels = results.empty() ? 0 : results.front().prob_norm.size();
    out << "id,label,confidence,hops,start_grove";
    for (std::size_t c = 0; c < n_labels; ++c) {
        out << ",prob_" << c;
    }
    out << '\n';
    for (const auto& r : results) {
        out << r.input_id << ',' << r.label << ',' << format_double(r.confidence) << ',' << r.hops << ','
            << r.start_grove;
        for (double p : r.prob_norm) {
            out << ',' << format_double(p);
        }
        out << '\n';
    }
}

} // namespace fog
