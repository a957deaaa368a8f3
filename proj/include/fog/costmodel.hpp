#pragma once

// Linear energy/latency accounting for grove hardware. Per-operation constants
// are calibration knobs; only ratios between configurations are meaningful.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fog/common.hpp"

namespace fog {

struct CostParams {
    double e_compare = 3e-12;        // J per decision-node comparison
    double e_mem_byte_read = 1e-12;  // J per data-queue byte read
    double e_mem_byte_write = 1.5e-12; // J per data-queue byte written
    double e_handshake_byte = 2e-12; // J per byte copied grove to grove
    double e_accumulate = 2e-12;     // J per probability add or divide
    std::uint64_t t_compare = 1;     // cycles per comparison (also per accumulate step)
    std::uint64_t t_mem_access = 1;  // cycles per queue word access
    std::uint64_t t_handshake = 2;   // cycles per byte of a grove-to-grove copy
    double clock_hz = 1e9;

    void validate() const {
        for (double e : {e_compare, e_mem_byte_read, e_mem_byte_write, e_handshake_byte, e_accumulate}) {
            if (!(e >= 0.0) || !std::isfinite(e)) {
                throw Error("cost energies must be finite and non-negative");
            }
        }
        if (t_compare < 1 || t_mem_access < 1 || t_handshake < 1) {
            throw Error("cost cycle counts must be at least 1");
        }
        if (!(clock_hz > 0.0) || !std::isfinite(clock_hz)) {
            throw Error("clock_hz must be positive");
        }
    }

    friend bool operator==(const CostParams&, const CostParams&) = default;
};

/// Operation counters for one classification (or any merged set of them).
struct OpTrace {
    std::uint64_t comparisons = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t bytes_written = 0;
    std::uint64_t handshake_bytes = 0;
    std::uint64_t accumulate_ops = 0;
    std::uint64_t cycles = 0;

    OpTrace& operator+=(const OpTrace& o) noexcept {
        comparisons += o.comparisons;
        bytes_read += o.bytes_read;
        bytes_written += o.bytes_written;
        handshake_bytes += o.handshake_bytes;
        accumulate_ops += o.accumulate_ops;
        cycles += o.cycles;
        return *this;
    }

    friend OpTrace operator+(OpTrace a, const OpTrace& b) noexcept { return a += b; }
    friend bool operator==(const OpTrace&, const OpTrace&) = default;
};

inline double energy_of(const OpTrace& t, const CostParams& p) {
    return static_cast<double>(t.comparisons) * p.e_compare +
           static_cast<double>(t.bytes_read) * p.e_mem_byte_read +
           static_cast<double>(t.bytes_written) * p.e_mem_byte_write +
           static_cast<double>(t.handshake_bytes) * p.e_handshake_byte +
           static_cast<double>(t.accumulate_ops) * p.e_accumulate;
}

inline double seconds_of(double cycles, const CostParams& p) { return cycles / p.clock_hz; }

/// Energy-delay product in J*s.
inline double edp(double energy_j, double latency_cycles, const CostParams& p) {
    return energy_j * seconds_of(latency_cycles, p);
}

/// Compute latency of one processing-element pass: member trees run in
/// serialized batches of `parallelism`, each batch taking the deepest path it
/// visited, followed by one accumulate step per label.
inline std::uint64_t pe_latency_cycles(std::span<const std::size_t> tree_comparisons, std::size_t parallelism,
                                       std::size_t n_labels, const CostParams& p) {
    if (parallelism == 0) {
        parallelism = std::max<std::size_t>(tree_comparisons.size(), 1);
    }
    std::uint64_t cycles = 0;
    for (std::size_t b = 0; b < tree_comparisons.size(); b += parallelism) {
        const auto end = std::min(tree_comparisons.size(), b + parallelism);
        const auto deepest = *std::max_element(tree_comparisons.begin() + static_cast<std::ptrdiff_t>(b),
                                               tree_comparisons.begin() + static_cast<std::ptrdiff_t>(end));
        cycles += static_cast<std::uint64_t>(deepest) * p.t_compare;
    }
    cycles += static_cast<std::uint64_t>(n_labels) * p.t_compare;
    return std::max<std::uint64_t>(cycles, 1);
}

/// Flat `key = value` text with '#' comments. Keys keep their first-seen order.
class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& in, const std::string& source) {
        KeyValueFile kv;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view text = line;
            if (auto hash = text.find('#'); hash != std::string_view::npos) {
                text = text.substr(0, hash);
            }
            text = trim(text);
            if (text.empty()) {
                continue;
            }
            const auto eq = text.find('=');
            if (eq == std::string_view::npos) {
                throw Error(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
            }
            std::string key(trim(text.substr(0, eq)));
            std::string value(trim(text.substr(eq + 1)));
            if (key.empty()) {
                throw Error(source + ":" + std::to_string(line_no) + ": empty key");
            }
            if (kv.values_.count(key)) {
                throw Error(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
            }
            kv.order_.push_back(key);
            kv.values_.emplace(std::move(key), std::move(value));
        }
        return kv;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw Error("cannot open config file '" + path + "'");
        }
        return parse(in, path);
    }

    const std::vector<std::string>& keys() const noexcept { return order_; }
    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& at(const std::string& key) const { return values_.at(key); }

    void set(const std::string& key, std::string value) {
        if (!values_.count(key)) {
            order_.push_back(key);
        }
        values_[key] = std::move(value);
    }

private:
    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
};

inline CostParams cost_params_from(const KeyValueFile& kv, const std::string& source = "cost config") {
    CostParams p;
    auto energy = [&](const std::string& key, double& field) {
        field = parse_double(kv.at(key), key);
        if (!(field >= 0.0)) {
            throw Error(source + ": '" + key + "' must be non-negative");
        }
    };
    auto cycles = [&](const std::string& key, std::uint64_t& field) {
        const double v = parse_double(kv.at(key), key);
        if (!(v >= 1.0) || v != std::floor(v)) {
            throw Error(source + ": '" + key + "' must be an integer >= 1");
        }
        field = static_cast<std::uint64_t>(v);
    };
    for (const auto& key : kv.keys()) {
        if (key == "e_compare") energy(key, p.e_compare);
        else if (key == "e_mem_byte_read") energy(key, p.e_mem_byte_read);
        else if (key == "e_mem_byte_write") energy(key, p.e_mem_byte_write);
        else if (key == "e_handshake_byte") energy(key, p.e_handshake_byte);
        else if (key == "e_accumulate") energy(key, p.e_accumulate);
        else if (key == "t_compare") cycles(key, p.t_compare);
        else if (key == "t_mem_access") cycles(key, p.t_mem_access);
        else if (key == "t_handshake") cycles(key, p.t_handshake);
        else if (key == "clock_hz") {
            p.clock_hz = parse_double(kv.at(key), key);
        } else {
            throw Error(source + ": unknown cost key '" + key + "'");
        }
    }
    p.validate();
    return p;
}

/// Missing keys keep their defaults; unknown keys and negative values are errors.
inline CostParams load_cost_params(const std::string& path) {
    return cost_params_from(KeyValueFile::load(path), path);
}

inline std::string format_cost_params(const CostParams& p) {
    std::ostringstream out;
    out << "e_compare = " << format_double(p.e_compare) << '\n'
        << "e_mem_byte_read = " << format_double(p.e_mem_byte_read) << '\n'
        << "e_mem_byte_write = " << format_double(p.e_mem_byte_write) << '\n'
        << "e_handshake_byte = " << format_double(p.e_handshake_byte) << '\n'
        << "e_accumulate = " << format_double(p.e_accumulate) << '\n'
        << "t_compare = " << p.t_compare << '\n'
        << "t_mem_access = " << p.t_mem_access << '\n'
        << "t_handshake = " << p.t_handshake << '\n'
        << "clock_hz = " << format_double(p.clock_hz) << '\n';
    return out.str();
}

} // namespace fog
