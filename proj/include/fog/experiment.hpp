#pragma once

// Experiment harness behind the command-line tool: one key-value config,
// deterministic train/evaluate/simulate/sweep/report steps, CSV outputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fog/common.hpp"
#include "fog/costmodel.hpp"
#include "fog/dataset.hpp"
#include "fog/eval.hpp"
#include "fog/forest.hpp"
#include "fog/simarch.hpp"
#include "fog/tree.hpp"

namespace fog {

struct Topology {
    std::size_t n_groves = 0;
    std::size_t trees_per_grove = 0;

    std::size_t n_trees() const { return n_groves * trees_per_grove; }
    friend bool operator==(const Topology&, const Topology&) = default;
};

/// Accuracy tolerance for picking the cheapest near-maximal threshold.
inline constexpr double kOptTolerance = 0.005;

inline std::vector<double> default_threshold_grid() {
    std::vector<double> grid;
    for (int i = 1; i < 20; ++i) {
        grid.push_back(i / 20.0);
    }
    return grid;
}

struct ExperimentConfig {
    std::filesystem::path dataset;
    std::optional<std::size_t> label_column;
    bool has_header = false;
    bool normalize = true;
    SplitSpec split;
    bool split_seed_set = false;

    TreeParams tree;
    std::size_t n = 16;
    std::size_t k = 2;

    double thresh = 0.5;
    std::vector<double> thresholds = default_threshold_grid();
    std::size_t max_hops = 0; // 0: every grove
    std::vector<Topology> topologies{{8, 2}, {4, 4}};
    double opt_tolerance = kOptTolerance;

    std::filesystem::path cost_config;
    std::filesystem::path model;
    std::filesystem::path out = "out";
    std::uint64_t seed = 1;

    std::optional<BudgetMetric> budget_metric;
    double budget_limit = std::numeric_limits<double>::infinity();
    std::size_t budget_max_trees = 16;

    std::size_t queue_capacity_bytes = 0;
    std::size_t parallelism = 0;
    Arrival arrival = Arrival::batch_at_zero;
    std::uint64_t arrival_interval = 1;

    std::string dataset_name() const { return dataset.stem().string(); }

    void validate() const {
        if (dataset.empty()) {
            throw Error("no dataset configured");
        }
        split.validate();
        if (n == 0 || k == 0 || k > n) {
            throw Error("need 1 <= k <= n");
        }
        auto check_thresh = [](double t) {
            if (!(t > 0.0 && t < 1.0)) {
                throw Error("threshold " + format_double(t) + " is outside (0,1)");
            }
        };
        check_thresh(thresh);
        if (thresholds.empty()) {
            throw Error("threshold list is empty");
        }
        for (double t : thresholds) {
            check_thresh(t);
        }
        if (topologies.empty()) {
            throw Error("topology list is empty");
        }
        for (const auto& t : topologies) {
            if (t.n_groves == 0 || t.trees_per_grove == 0) {
                throw Error("topologies need at least one grove of one tree");
            }
        }
        if (!(opt_tolerance >= 0.0)) {
            throw Error("opt_tolerance must be non-negative");
        }
        if (budget_metric && budget_max_trees == 0) {
            throw Error("budget_max_trees must be at least 1");
        }
    }
};

namespace detail {

inline bool parse_bool(std::string_view v, std::string_view key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error("'" + std::string(key) + "' expects true or false, got '" + std::string(v) + "'");
}

inline std::vector<double> parse_double_list(std::string_view v, std::string_view key) {
    std::vector<double> out;
    for (auto item : split_view(v, ',')) {
        out.push_back(parse_double(trim(item), key));
    }
    return out;
}

inline std::vector<Topology> parse_topologies(std::string_view v) {
    std::vector<Topology> out;
    for (auto item : split_view(v, ',')) {
        item = trim(item);
        const auto x = item.find('x');
        if (x == std::string_view::npos) {
            throw Error("topology '" + std::string(item) + "' is not of the form GROVESxTREES");
        }
        out.push_back({parse_unsigned(item.substr(0, x), "topology"), parse_unsigned(item.substr(x + 1), "topology")});
    }
    return out;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, std::string_view v) {
    std::filesystem::path p{std::string(v)};
    return p.is_absolute() || base.empty() ? p : base / p;
}

} // namespace detail

/// Builds a config from key-value pairs. Relative paths resolve against `base`.
inline ExperimentConfig experiment_config_from(const KeyValueFile& kv, const std::filesystem::path& base) {
    ExperimentConfig c;
    for (const auto& key : kv.keys()) {
        const std::string& v = kv.at(key);
        if (key == "dataset") c.dataset = detail::resolve(base, v);
        else if (key == "label_column") {
            if (v == "last") c.label_column.reset();
            else c.label_column = parse_unsigned(v, key);
        } else if (key == "has_header") c.has_header = detail::parse_bool(v, key);
        else if (key == "normalize") c.normalize = detail::parse_bool(v, key);
        else if (key == "train_fraction") c.split.train_fraction = parse_double(v, key);
        else if (key == "validation_fraction") c.split.validation_fraction = parse_double(v, key);
        else if (key == "test_fraction") c.split.test_fraction = parse_double(v, key);
        else if (key == "split_seed") {
            c.split.seed = parse_unsigned(v, key);
            c.split_seed_set = true;
        } else if (key == "max_depth") c.tree.max_depth = parse_unsigned(v, key);
        else if (key == "min_leaf") c.tree.min_leaf = parse_unsigned(v, key);
        else if (key == "features_per_tree") c.tree.features_per_tree = parse_unsigned(v, key);
        else if (key == "n") c.n = parse_unsigned(v, key);
        else if (key == "k") c.k = parse_unsigned(v, key);
        else if (key == "thresh") c.thresh = parse_double(v, key);
        else if (key == "thresholds") c.thresholds = detail::parse_double_list(v, key);
        else if (key == "max_hops") c.max_hops = parse_unsigned(v, key);
        else if (key == "topologies") c.topologies = detail::parse_topologies(v);
        else if (key == "opt_tolerance") c.opt_tolerance = parse_double(v, key);
        else if (key == "cost_config") c.cost_config = v.empty() ? std::filesystem::path{} : detail::resolve(base, v);
        else if (key == "model") c.model = v.empty() ? std::filesystem::path{} : detail::resolve(base, v);
        else if (key == "out") c.out = detail::resolve(base, v);
        else if (key == "seed") c.seed = parse_unsigned(v, key);
        else if (key == "budget_metric") {
            if (v == "none") c.budget_metric.reset();
            else c.budget_metric = parse_budget_metric(v);
        } else if (key == "budget_limit") c.budget_limit = parse_double(v, key);
        else if (key == "budget_max_trees") c.budget_max_trees = parse_unsigned(v, key);
        else if (key == "queue_capacity_bytes") c.queue_capacity_bytes = parse_unsigned(v, key);
        else if (key == "parallelism") c.parallelism = parse_unsigned(v, key);
        else if (key == "arrival") {
            if (v == "batch") c.arrival = Arrival::batch_at_zero;
            else if (v == "interval") c.arrival = Arrival::fixed_interval;
            else throw Error("arrival must be 'batch' or 'interval'");
        } else if (key == "arrival_interval") c.arrival_interval = parse_unsigned(v, key);
        else throw Error("unknown config key '" + key + "'");
    }
    if (!c.split_seed_set) {
        c.split.seed = c.seed;
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return experiment_config_from(KeyValueFile::load(path.string()), path.parent_path());
}

inline CostParams cost_params_for(const ExperimentConfig& c) {
    return c.cost_config.empty() ? CostParams{} : load_cost_params(c.cost_config.string());
}

/// Train/validation/test partitions, scaled with the training split's ranges.
struct PreparedData {
    SplitData parts;
    std::optional<MinMaxScaler> scaler;
};

inline PreparedData prepare_data(const ExperimentConfig& c) {
    CsvOptions opts;
    opts.label_column = c.label_column;
    opts.has_header = c.has_header;
    auto raw = load_csv(c.dataset.string(), opts);
    raw.name = c.dataset_name();
    PreparedData p{split(raw, c.split), std::nullopt};
    if (c.normalize) {
        p.scaler = MinMaxScaler::fit(p.parts.train);
        p.parts.train = p.scaler->transform(p.parts.train);
        p.parts.validation = p.scaler->transform(p.parts.validation);
        p.parts.test = p.scaler->transform(p.parts.test);
    }
    return p;
}

struct TrainedModel {
    FieldOfGroves fog;
    std::vector<ForestCost> trajectory; // budget mode only
};

/// Trains the configured model, or loads it when `model` is set.
inline TrainedModel obtain_model(const ExperimentConfig& c, const PreparedData& data, const CostParams& cost) {
    if (!c.model.empty()) {
        auto fog = load_field(c.model.string());
        if (fog.n_features() != data.parts.train.n_features || fog.n_labels() != data.parts.train.n_labels) {
            throw Error("model '" + c.model.string() + "' does not match the dataset shape");
        }
        return {std::move(fog), {}};
    }
    if (c.budget_metric) {
        auto r = budget_rf_train(data.parts.train, data.parts.validation, Budget{*c.budget_metric, c.budget_limit},
                                 cost, c.tree, c.budget_max_trees, c.seed);
        const auto k = std::min(c.k, r.forest.size());
        return {split(r.forest, k), std::move(r.trajectory)};
    }
    return {gc_train(c.n, c.k, data.parts.train, c.tree, c.seed), {}};
}

inline std::size_t resolved_max_hops(const ExperimentConfig& c, std::size_t n_groves) {
    return c.max_hops == 0 ? n_groves : std::min(c.max_hops, n_groves);
}

/// One simulated operating point.
struct OperatingPoint {
    std::string dataset;
    std::string split;
    std::string classifier;
    double threshold = 0.0;
    std::size_t max_hops = 0;
    std::size_t n_groves = 0;
    std::size_t trees_per_grove = 0;
    double accuracy = 0.0;
    double avg_hops = 0.0;
    double energy_j = 0.0;
    double latency_cycles = 0.0;
    double edp = 0.0;
};

inline SimConfig sim_config_for(const ExperimentConfig& c, const FieldOfGroves& fog, double thresh,
                                std::size_t max_hops, bool early_exit = true) {
    SimConfig s;
    s.early_exit = early_exit;
    s.n_groves = fog.n_groves();
    s.trees_per_grove = fog.trees_per_grove();
    s.queue_capacity_bytes = c.queue_capacity_bytes;
    s.parallelism = c.parallelism;
    s.thresh = thresh;
    s.max_hops = max_hops;
    s.seed = c.seed;
    s.arrival = c.arrival;
    s.arrival_interval = c.arrival_interval;
    return s;
}

inline double sim_accuracy(const SimStats& stats, const Dataset& data) {
    std::size_t correct = 0;
    for (const auto& r : stats.records) {
        correct += r.label == data.labels[r.id];
    }
    return static_cast<double>(correct) / static_cast<double>(stats.records.size());
}

/// Simulates `data` through `fog`. Start groves depend only on (seed, input
/// id, grove count), so points sharing a topology share start assignments.
inline OperatingPoint simulate_point(const ExperimentConfig& c, const FieldOfGroves& fog, const Dataset& data,
                                     std::string split_name, std::string classifier, double thresh,
                                     std::size_t max_hops, const CostParams& cost, bool early_exit = true) {
    const auto stats = simulate(fog, data, sim_config_for(c, fog, thresh, max_hops, early_exit), cost);
    OperatingPoint p;
    p.dataset = c.dataset_name();
    p.split = std::move(split_name);
    p.classifier = std::move(classifier);
    p.threshold = thresh;
    p.max_hops = max_hops;
    p.n_groves = fog.n_groves();
    p.trees_per_grove = fog.trees_per_grove();
    p.accuracy = sim_accuracy(stats, data);
    p.avg_hops = stats.mean_hops;
    p.energy_j = stats.mean_energy_j;
    p.latency_cycles = stats.mean_latency_cycles;
    p.edp = stats.edp;
    return p;
}

inline constexpr std::string_view kSweepHeader =
    "dataset,n_groves,trees_per_grove,threshold,accuracy,avg_hops,energy_J,latency_cycles,edp";

inline void write_sweep_row(std::ostream& out, const OperatingPoint& p) {
    out << p.dataset << ',' << p.n_groves << ',' << p.trees_per_grove << ',' << format_double(p.threshold) << ','
        << format_double(p.accuracy) << ',' << format_double(p.avg_hops) << ',' << format_double(p.energy_j) << ','
        << format_double(p.latency_cycles) << ',' << format_double(p.edp) << '\n';
}

inline constexpr std::string_view kPointsHeader = "dataset,split,classifier,threshold,max_hops,n_groves,"
                                                  "trees_per_grove,accuracy,avg_hops,energy_J,latency_cycles,edp";

inline void write_point_row(std::ostream& out, const OperatingPoint& p) {
    out << p.dataset << ',' << p.split << ',' << p.classifier << ',' << format_double(p.threshold) << ','
        << p.max_hops << ',' << p.n_groves << ',' << p.trees_per_grove << ',' << format_double(p.accuracy) << ','
        << format_double(p.avg_hops) << ',' << format_double(p.energy_j) << ',' << format_double(p.latency_cycles)
        << ',' << format_double(p.edp) << '\n';
}

inline std::vector<OperatingPoint> read_points(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != kPointsHeader) {
        throw Error("points file has an unexpected header");
    }
    std::vector<OperatingPoint> out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            continue;
        }
        const auto f = split_view(trim(line), ',');
        if (f.size() != 12) {
            throw Error("points row has " + std::to_string(f.size()) + " fields, expected 12");
        }
        OperatingPoint p;
        p.dataset = std::string(f[0]);
        p.split = std::string(f[1]);
        p.classifier = std::string(f[2]);
        p.threshold = parse_double(f[3], "threshold");
        p.max_hops = parse_unsigned(f[4], "max_hops");
        p.n_groves = parse_unsigned(f[5], "n_groves");
        p.trees_per_grove = parse_unsigned(f[6], "trees_per_grove");
        p.accuracy = parse_double(f[7], "accuracy");
        p.avg_hops = parse_double(f[8], "avg_hops");
        p.energy_j = parse_double(f[9], "energy_J");
        p.latency_cycles = parse_double(f[10], "latency_cycles");
        p.edp = parse_double(f[11], "edp");
        out.push_back(std::move(p));
    }
    return out;
}

/// Summary table rows: RF_soft, RF_majority, FoG_full, FoG_max, FoG_opt (test split).
struct ReportTable {
    std::vector<OperatingPoint> rows;
    const OperatingPoint& row(std::string_view classifier) const {
        for (const auto& r : rows) {
            if (r.classifier == classifier) {
                return r;
            }
        }
        throw Error("report has no '" + std::string(classifier) + "' row");
    }
};

namespace detail {

inline const OperatingPoint* find_point(const std::vector<OperatingPoint>& points, std::string_view split,
                                        std::string_view classifier, std::optional<double> thresh = {}) {
    for (const auto& p : points) {
        if (p.split == split && p.classifier == classifier && (!thresh || p.threshold == *thresh)) {
            return &p;
        }
    }
    return nullptr;
}

} // namespace detail

/// Rebuilds the summary from measured points alone. FoG_opt is the smallest
/// swept threshold whose validation accuracy is within `tolerance` of FoG_max
/// on validation; its test-split point is reported.
inline ReportTable report_from_points(const std::vector<OperatingPoint>& points, double tolerance) {
    auto need = [&](std::string_view split, std::string_view cls, std::optional<double> t = {}) {
        const auto* p = detail::find_point(points, split, cls, t);
        if (!p) {
            throw Error("points file lacks " + std::string(cls) + " on " + std::string(split));
        }
        return *p;
    };
    const auto max_val = need("validation", "FoG_max");
    std::vector<double> grid;
    for (const auto& p : points) {
        if (p.split == "validation" && p.classifier == "FoG") {
            grid.push_back(p.threshold);
        }
    }
    std::sort(grid.begin(), grid.end());
    std::optional<double> chosen;
    for (double t : grid) {
        if (need("validation", "FoG", t).accuracy >= max_val.accuracy - tolerance) {
            chosen = t;
            break;
        }
    }
    ReportTable table;
    table.rows.push_back(need("test", "RF_soft"));
    table.rows.push_back(need("test", "RF_majority"));
    table.rows.push_back(need("test", "FoG_full"));
    table.rows.push_back(need("test", "FoG_max"));
    auto opt = chosen ? need("test", "FoG", *chosen) : need("test", "FoG_max");
    opt.classifier = "FoG_opt";
    table.rows.push_back(std::move(opt));
    return table;
}

inline void write_report(std::ostream& out, const ReportTable& table) {
    out << kPointsHeader << '\n';
    for (const auto& r : table.rows) {
        write_point_row(out, r);
    }
}

// ---------------------------------------------------------------------------
// Commands. Each writes into the configured output directory and returns a
// short human-readable summary.

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& file) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / file);
    if (!out) {
        throw Error("cannot write '" + (dir / file).string() + "'");
    }
    return out;
}

inline double rf_accuracy(const RandomForest& rf, const Dataset& data, bool soft) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto label = soft ? rf_predict_soft(rf, data.row(i)).label : rf_predict_majority(rf, data.row(i));
        correct += label == data.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace detail

inline std::string cmd_train(const ExperimentConfig& c) {
    const auto cost = cost_params_for(c);
    const auto data = prepare_data(c);
    auto model = obtain_model(c, data, cost);
    std::filesystem::create_directories(c.out);
    save_field((c.out / "model.fog").string(), model.fog);

    const auto rf = model.fog.as_forest();
    const double soft = detail::rf_accuracy(rf, data.parts.validation, true);
    const double majority = detail::rf_accuracy(rf, data.parts.validation, false);
    auto report = detail::open_output(c.out, "train_report.csv");
    report << "dataset,n_trees,n_groves,trees_per_grove,max_depth,features_per_tree,normalized,seed,"
              "train_size,validation_size,test_size,validation_accuracy_soft,validation_accuracy_majority\n";
    report << c.dataset_name() << ',' << model.fog.n_trees() << ',' << model.fog.n_groves() << ','
           << model.fog.trees_per_grove() << ',' << c.tree.max_depth << ','
           << features_per_tree(c.tree, data.parts.train.n_features) << ',' << (c.normalize ? "true" : "false")
           << ',' << c.seed << ',' << data.parts.train.size() << ',' << data.parts.validation.size() << ','
           << data.parts.test.size() << ',' << format_double(soft) << ',' << format_double(majority) << '\n';

    if (c.budget_metric) {
        auto traj = detail::open_output(c.out, "budget_trajectory.csv");
        traj << "n_trees,accuracy,energy_J,delay_cycles,edp,within_budget\n";
        for (const auto& p : model.trajectory) {
            traj << p.n_trees << ',' << format_double(p.accuracy) << ',' << format_double(p.energy_j) << ','
                 << format_double(p.delay_cycles) << ',' << format_double(p.edp) << ','
                 << (p.within_budget ? "true" : "false") << '\n';
        }
    }
    std::ostringstream msg;
    msg << "trained " << model.fog.n_trees() << " trees in " << model.fog.n_groves() << " groves of "
        << model.fog.trees_per_grove() << "; validation accuracy " << format_double(soft) << " (soft), "
        << format_double(majority) << " (majority)";
    return msg.str();
}

inline std::string cmd_eval(const ExperimentConfig& c) {
    const auto cost = cost_params_for(c);
    const auto data = prepare_data(c);
    const auto model = obtain_model(c, data, cost);
    EvalConfig e;
    e.thresh = c.thresh;
    e.max_hops = resolved_max_hops(c, model.fog.n_groves());
    e.seed = c.seed;
    const auto& test = data.parts.test;
    const auto results = gc_eval(model.fog, test, e);
    auto out = detail::open_output(c.out, "eval_results.csv");
    write_results_csv(out, results);
    std::ostringstream msg;
    msg << "test accuracy " << format_double(accuracy(results, test.labels)) << ", average hops "
        << format_double(avg_hops(results));
    return msg.str();
}

inline std::string cmd_simulate(const ExperimentConfig& c, bool write_events) {
    const auto cost = cost_params_for(c);
    const auto data = prepare_data(c);
    const auto model = obtain_model(c, data, cost);
    const auto& test = data.parts.test;
    auto cfg = sim_config_for(c, model.fog, c.thresh, resolved_max_hops(c, model.fog.n_groves()));
    cfg.record_events = write_events;
    const auto stats = simulate(model.fog, test, cfg, cost);

    auto rec = detail::open_output(c.out, "sim_records.csv");
    rec << "id,label,hops,start_grove,confidence,energy_J,arrival_cycle,done_cycle,latency_cycles\n";
    for (const auto& r : stats.records) {
        rec << r.id << ',' << r.label << ',' << r.hops << ',' << r.start_grove << ',' << format_double(r.confidence)
            << ',' << format_double(r.energy_j) << ',' << r.arrival_cycle << ',' << r.done_cycle << ','
            << r.latency_cycles << '\n';
    }
    auto sum = detail::open_output(c.out, "sim_summary.csv");
    sum << "dataset,n_groves,trees_per_grove,threshold,max_hops,inputs,accuracy,avg_hops,energy_J,latency_cycles,"
           "edp,makespan_cycles,throughput_per_s,gamma,queue_slots,processor_stall_cycles,handshake_wait_cycles\n";
    const double acc = sim_accuracy(stats, test);
    sum << c.dataset_name() << ',' << model.fog.n_groves() << ',' << model.fog.trees_per_grove() << ','
        << format_double(cfg.thresh) << ',' << cfg.max_hops << ',' << stats.records.size() << ','
        << format_double(acc) << ',' << format_double(stats.mean_hops) << ',' << format_double(stats.mean_energy_j)
        << ',' << format_double(stats.mean_latency_cycles) << ',' << format_double(stats.edp) << ','
        << stats.makespan_cycles << ',' << format_double(stats.throughput_per_s) << ',' << stats.gamma << ','
        << stats.queue_slots << ',' << stats.processor_stall_cycles << ',' << stats.handshake_wait_cycles << '\n';
    if (write_events) {
        auto ev = detail::open_output(c.out, "sim_events.csv");
        write_event_log(ev, stats.events);
    }
    std::ostringstream msg;
    msg << "simulated " << stats.records.size() << " inputs: accuracy " << format_double(acc) << ", average hops "
        << format_double(stats.mean_hops) << ", energy " << format_double(stats.mean_energy_j * 1e9)
        << " nJ/classification, EDP " << format_double(stats.edp) << " J*s";
    return msg.str();
}

/// Rows for every (topology, threshold) pair on the test split.
inline std::vector<OperatingPoint> sweep_topology(const ExperimentConfig& c) {
    const auto cost = cost_params_for(c);
    const auto data = prepare_data(c);
    std::vector<OperatingPoint> rows;
    for (const auto& topo : c.topologies) {
        const auto fog = gc_train(topo.n_trees(), topo.trees_per_grove, data.parts.train, c.tree, c.seed);
        const auto hops = resolved_max_hops(c, fog.n_groves());
        for (double t : c.thresholds) {
            rows.push_back(simulate_point(c, fog, data.parts.test, "test", "FoG", t, hops, cost));
        }
    }
    return rows;
}

inline std::string cmd_sweep_topology(const ExperimentConfig& c) {
    const auto rows = sweep_topology(c);
    auto out = detail::open_output(c.out, "sweep_topology.csv");
    out << kSweepHeader << '\n';
    for (const auto& r : rows) {
        write_sweep_row(out, r);
    }
    return "wrote " + std::to_string(rows.size()) + " topology sweep rows";
}

inline std::vector<OperatingPoint> sweep_threshold(const ExperimentConfig& c) {
    const auto cost = cost_params_for(c);
    const auto data = prepare_data(c);
    const auto model = obtain_model(c, data, cost);
    const auto hops = resolved_max_hops(c, model.fog.n_groves());
    std::vector<OperatingPoint> rows;
    for (double t : c.thresholds) {
        rows.push_back(simulate_point(c, model.fog, data.parts.test, "test", "FoG", t, hops, cost));
    }
    return rows;
}

inline std::string cmd_sweep_threshold(const ExperimentConfig& c) {
    const auto rows = sweep_threshold(c);
    auto out = detail::open_output(c.out, "sweep_threshold.csv");
    out << kSweepHeader << '\n';
    for (const auto& r : rows) {
        write_sweep_row(out, r);
    }
    return "wrote " + std::to_string(rows.size()) + " threshold sweep rows";
}

/// Measures every point the summary table needs, on validation and test.
inline std::vector<OperatingPoint> report_points(const ExperimentConfig& c) {
    const auto cost = cost_params_for(c);
    const auto data = prepare_data(c);
    const auto model = obtain_model(c, data, cost);
    const auto& fog = model.fog;
    const auto rf = fog.as_forest();
    const auto whole = split(rf, rf.size()); // the forest as one processing element
    // FoG_max keeps early exit at the largest threshold below one, so groves
    // that agree on a one-hot vote still stop it; FoG_full visits every grove.
    const double near_one = std::nextafter(1.0, 0.0);
    const auto hops = fog.n_groves();

    std::vector<OperatingPoint> points;
    for (const auto* part : {&data.parts.validation, &data.parts.test}) {
        const std::string name = part == &data.parts.test ? "test" : "validation";
        auto rf_point = simulate_point(c, whole, *part, name, "RF_soft", near_one, 1, cost);
        rf_point.accuracy = detail::rf_accuracy(rf, *part, true);
        points.push_back(rf_point);
        rf_point.classifier = "RF_majority";
        rf_point.accuracy = detail::rf_accuracy(rf, *part, false);
        points.push_back(rf_point);
        points.push_back(simulate_point(c, fog, *part, name, "FoG_full", near_one, hops, cost, false));
        points.push_back(simulate_point(c, fog, *part, name, "FoG_max", near_one, hops, cost));
        for (double t : c.thresholds) {
            points.push_back(simulate_point(c, fog, *part, name, "FoG", t, hops, cost));
        }
    }
    return points;
}

inline std::string cmd_report(const ExperimentConfig& c) {
    const auto points = report_points(c);
    {
        auto out = detail::open_output(c.out, "report_points.csv");
        out << kPointsHeader << '\n';
        for (const auto& p : points) {
            write_point_row(out, p);
        }
    }
    const auto table = report_from_points(points, c.opt_tolerance);
    auto out = detail::open_output(c.out, "report.csv");
    write_report(out, table);
    std::ostringstream msg;
    for (const auto& r : table.rows) {
        msg << r.classifier << ": accuracy " << format_double(r.accuracy) << ", energy "
            << format_double(r.energy_j * 1e9) << " nJ, threshold " << format_double(r.threshold) << '\n';
    }
    auto text = msg.str();
    text.pop_back();
    return text;
}

/// Regenerates report.csv content from a persisted points file.
inline std::string report_from_points_file(const std::filesystem::path& path, double tolerance) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open points file '" + path.string() + "'");
    }
    std::ostringstream out;
    write_report(out, report_from_points(read_points(in), tolerance));
    return out.str();
}

/// Mean single-pass forest energy on the validation split and the factor that
/// would scale the energy constants to `target_nj`.
inline std::string cmd_calibrate(const ExperimentConfig& c, double target_nj) {
    if (!(target_nj > 0.0)) {
        throw Error("calibration target must be positive");
    }
    const auto cost = cost_params_for(c);
    const auto data = prepare_data(c);
    const auto model = obtain_model(c, data, cost);
    const auto rf = model.fog.as_forest();
    const auto whole = split(rf, rf.size());
    const auto p = simulate_point(c, whole, data.parts.validation, "validation", "RF_soft",
                                  std::nextafter(1.0, 0.0), 1, cost);
    const double nj = p.energy_j * 1e9;
    std::ostringstream msg;
    msg << "forest energy " << format_double(nj) << " nJ/classification; scale energy constants by "
        << format_double(target_nj / nj) << " to reach " << format_double(target_nj) << " nJ";
    return msg.str();
}

} // namespace fog
