// Command-line front end for training, evaluating and simulating grove rings.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fog/experiment.hpp"

namespace {

namespace fs = std::filesystem;

struct Overrides {
    std::string config;
    std::optional<std::string> dataset;
    std::optional<std::string> n;
    std::optional<std::string> k;
    std::optional<std::string> thresh;
    std::optional<std::string> thresholds;
    std::optional<std::string> topologies;
    std::optional<std::string> max_hops;
    std::optional<std::string> seed;
    std::optional<std::string> cost_config;
    std::optional<std::string> out;
    std::optional<std::string> model;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "experiment config file (key = value)");
    cmd->add_option("--dataset", o.dataset, "CSV file, label in the last column");
    cmd->add_option("--n", o.n, "total number of trees");
    cmd->add_option("--k", o.k, "trees per grove");
    cmd->add_option("--thresh", o.thresh, "confidence threshold in (0,1)");
    cmd->add_option("--thresholds", o.thresholds, "comma-separated threshold grid");
    cmd->add_option("--topologies", o.topologies, "comma-separated GROVESxTREES list, e.g. 8x2,4x4");
    cmd->add_option("--max-hops", o.max_hops, "grove visits per input (0 = all groves)");
    cmd->add_option("--seed", o.seed, "seed for splitting, training and start groves");
    cmd->add_option("--cost-config", o.cost_config, "cost constants file");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--model", o.model, "use a saved model instead of training");
}

fog::ExperimentConfig build_config(const Overrides& o) {
    fog::KeyValueFile kv;
    fs::path base;
    if (!o.config.empty()) {
        kv = fog::KeyValueFile::load(o.config);
        base = fs::path(o.config).parent_path();
    }
    auto set = [&](const char* key, const std::optional<std::string>& v) {
        if (v) {
            kv.set(key, *v);
        }
    };
    auto set_path = [&](const char* key, const std::optional<std::string>& v) {
        if (v) {
            kv.set(key, v->empty() ? *v : fs::absolute(*v).string());
        }
    };
    set_path("dataset", o.dataset);
    set("n", o.n);
    set("k", o.k);
    set("thresh", o.thresh);
    set("thresholds", o.thresholds);
    set("topologies", o.topologies);
    set("max_hops", o.max_hops);
    set("seed", o.seed);
    set_path("cost_config", o.cost_config);
    set_path("out", o.out);
    set_path("model", o.model);
    return fog::experiment_config_from(kv, base);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Field-of-groves random forest classifier and accelerator model"};
    app.require_subcommand(1);

    Overrides o;
    auto* train = app.add_subcommand("train", "train a forest and split it into groves");
    auto* eval = app.add_subcommand("eval", "classify the test split with the functional model");
    auto* sim = app.add_subcommand("simulate", "run the test split through the grove ring model");
    auto* topo = app.add_subcommand("sweep-topology", "accuracy and cost for each topology and threshold");
    auto* thr = app.add_subcommand("sweep-threshold", "accuracy and cost across the threshold grid");
    auto* report = app.add_subcommand("report", "RF vs FoG summary table");
    auto* calib = app.add_subcommand("calibrate", "scale factor for the energy constants");
    for (auto* cmd : {train, eval, sim, topo, thr, report, calib}) {
        add_common(cmd, o);
    }
    bool events = false;
    sim->add_flag("--events", events, "also write the per-cycle event log");
    std::string from_points;
    report->add_option("--from-points", from_points, "rebuild report.csv from a saved report_points.csv");
    double target_nj = 14.0;
    calib->add_option("--target-nj", target_nj, "desired forest energy per classification in nJ");

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed() && !from_points.empty()) {
            double tolerance = fog::kOptTolerance;
            if (!o.config.empty()) {
                tolerance = build_config(o).opt_tolerance;
            }
            std::cout << fog::report_from_points_file(from_points, tolerance);
            return 0;
        }
        const auto cfg = build_config(o);
        std::string summary;
        if (train->parsed()) summary = fog::cmd_train(cfg);
        else if (eval->parsed()) summary = fog::cmd_eval(cfg);
        else if (sim->parsed()) summary = fog::cmd_simulate(cfg, events);
        else if (topo->parsed()) summary = fog::cmd_sweep_topology(cfg);
        else if (thr->parsed()) summary = fog::cmd_sweep_threshold(cfg);
        else if (report->parsed()) summary = fog::cmd_report(cfg);
        else if (calib->parsed()) summary = fog::cmd_calibrate(cfg, target_nj);
        std::cout << summary << '\n';
    } catch (const std::exception& e) {
        std::cerr << "fog: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
