#pragma once

// Tabular classification data: CSV loading, seeded splitting, min-max scaling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fog/common.hpp"

namespace fog {

using Label = std::size_t;

/// Row-major feature matrix with contiguous label ids in [0, n_labels).
struct Dataset {
    std::string name;
    std::size_t n_features = 0;
    std::size_t n_labels = 0;
    std::vector<double> features;   // n_samples * n_features
    std::vector<Label> labels;      // n_samples
    std::vector<double> label_values; // original label for each id
    bool normalized = false;

    std::size_t size() const noexcept { return labels.size(); }

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * n_features, n_features};
    }

    /// Rows in the given order; label metadata is shared with the parent.
    Dataset subset(std::span<const std::size_t> indices) const {
        Dataset out;
        out.name = name;
        out.n_features = n_features;
        out.n_labels = n_labels;
        out.label_values = label_values;
        out.normalized = normalized;
        out.features.reserve(indices.size() * n_features);
        out.labels.reserve(indices.size());
        for (auto i : indices) {
            auto r = row(i);
            out.features.insert(out.features.end(), r.begin(), r.end());
            out.labels.push_back(labels[i]);
        }
        return out;
    }

    /// Throws if the invariants do not hold.
    void validate() const {
        if (labels.empty()) {
            throw Error("dataset '" + name + "' has no samples");
        }
        if (n_features == 0 || features.size() != labels.size() * n_features) {
            throw Error("dataset '" + name + "' has ragged feature rows");
        }
        for (auto y : labels) {
            if (y >= n_labels) {
                throw Error("dataset '" + name + "' has label id out of range");
            }
        }
    }
};

struct CsvOptions {
    /// Column holding the class label; nullopt selects the last column.
    std::optional<std::size_t> label_column;
    bool has_header = false;
};

namespace detail {

inline Dataset build_dataset(std::string name, std::size_t n_features,
                             std::vector<double> features, const std::vector<double>& raw_labels) {
    Dataset ds;
    ds.name = std::move(name);
    ds.n_features = n_features;
    ds.features = std::move(features);
    std::vector<double> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    ds.label_values = distinct;
    ds.n_labels = distinct.size();
    ds.labels.reserve(raw_labels.size());
    for (double v : raw_labels) {
        auto it = std::lower_bound(distinct.begin(), distinct.end(), v);
        ds.labels.push_back(static_cast<Label>(it - distinct.begin()));
    }
    if (ds.n_labels == 1) {
        warn("dataset '" + ds.name + "' contains a single class");
    }
    ds.validate();
    return ds;
}

} // namespace detail

/// Parses comma-separated numeric rows; labels are remapped to contiguous ids
/// in ascending order of their original value.
inline Dataset parse_csv(std::istream& in, std::string name, const CsvOptions& opts = {}) {
    std::string line;
    std::size_t line_no = 0;
    std::size_t n_columns = 0;
    std::vector<double> features;
    std::vector<double> raw_labels;
    bool skipped_header = !opts.has_header;
    while (std::getline(in, line)) {
        ++line_no;
        auto text = trim(line);
        if (text.empty()) {
            continue;
        }
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        auto cells = split_view(text, ',');
        if (n_columns == 0) {
            n_columns = cells.size();
            if (n_columns < 2) {
                throw Error(name + ":" + std::to_string(line_no) + ": need at least one feature and a label");
            }
            if (opts.label_column && *opts.label_column >= n_columns) {
                throw Error(name + ": label column " + std::to_string(*opts.label_column) +
                            " out of range");
            }
        } else if (cells.size() != n_columns) {
            throw Error(name + ":" + std::to_string(line_no) + ": expected " + std::to_string(n_columns) +
                        " columns, found " + std::to_string(cells.size()));
        }
        const std::size_t label_col = opts.label_column.value_or(n_columns - 1);
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string where = name + ":" + std::to_string(line_no) + " column " + std::to_string(c);
            const double v = parse_double(cells[c], where);
            if (c == label_col) {
                if (!std::isfinite(v) || v != std::floor(v)) {
                    throw Error(where + ": label must be an integer");
                }
                raw_labels.push_back(v);
            } else {
                features.push_back(v);
            }
        }
    }
    if (raw_labels.empty()) {
        throw Error(name + ": empty dataset");
    }
    return detail::build_dataset(std::move(name), n_columns - 1, std::move(features), raw_labels);
}

inline Dataset load_csv(const std::string& path, const CsvOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open dataset file '" + path + "'");
    }
    auto name = path;
    if (auto slash = name.find_last_of('/'); slash != std::string::npos) {
        name = name.substr(slash + 1);
    }
    if (auto dot = name.find_last_of('.'); dot != std::string::npos && dot > 0) {
        name = name.substr(0, dot);
    }
    return parse_csv(in, name, opts);
}

struct SplitSpec {
    double train_fraction = 0.6;
    double validation_fraction = 0.3;
    double test_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const {
        for (double f : {train_fraction, validation_fraction, test_fraction}) {
            if (!(f > 0.0 && f < 1.0)) {
                throw Error("split fractions must lie in (0,1)");
            }
        }
        if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9) {
            throw Error("split fractions must sum to 1");
        }
    }
};

struct SplitData {
    Dataset train;
    Dataset validation;
    Dataset test;
};

/// Seeded shuffle followed by floor allocation of the validation and test
/// partitions; the remainder goes to train.
inline SplitData split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    const std::size_t n = ds.size();
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.validation_fraction + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.test_fraction + 1e-9));
    if (n_val == 0 || n_test == 0 || n_val + n_test >= n) {
        throw Error("split of " + std::to_string(n) + " samples leaves an empty partition");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = n - n_val - n_test;
    std::span<const std::size_t> all(order);
    return {ds.subset(all.subspan(0, n_train)), ds.subset(all.subspan(n_train, n_val)),
            ds.subset(all.subspan(n_train + n_val, n_test))};
}

/// Per-column affine map onto [0,1] fitted on one dataset and reusable on others.
class MinMaxScaler {
public:
    MinMaxScaler() = default;

    static MinMaxScaler fit(const Dataset& ds) {
        MinMaxScaler s;
        s.lo_.assign(ds.n_features, std::numeric_limits<double>::infinity());
        s.hi_.assign(ds.n_features, -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            auto r = ds.row(i);
            for (std::size_t f = 0; f < ds.n_features; ++f) {
                s.lo_[f] = std::min(s.lo_[f], r[f]);
                s.hi_[f] = std::max(s.hi_[f], r[f]);
            }
        }
        return s;
    }

    double apply(std::size_t feature, double v) const {
        const double span = hi_[feature] - lo_[feature];
        if (!(span > 0.0)) {
            return 0.0;
        }
        return std::clamp((v - lo_[feature]) / span, 0.0, 1.0);
    }

    Dataset transform(const Dataset& ds) const {
        if (ds.n_features != lo_.size()) {
            throw Error("scaler was fitted on a different feature count");
        }
        Dataset out = ds;
        for (std::size_t i = 0; i < out.size(); ++i) {
            for (std::size_t f = 0; f < out.n_features; ++f) {
                auto& v = out.features[i * out.n_features + f];
                v = apply(f, v);
            }
        }
        out.normalized = true;
        return out;
    }

    const std::vector<double>& lower() const noexcept { return lo_; }
    const std::vector<double>& upper() const noexcept { return hi_; }

private:
    std::vector<double> lo_;
    std::vector<double> hi_;
};

struct Normalized {
    Dataset data;
    MinMaxScaler scaler;
};

inline Normalized minmax_normalize(const Dataset& ds) {
    auto scaler = MinMaxScaler::fit(ds);
    return {scaler.transform(ds), std::move(scaler)};
}

} // namespace fog
