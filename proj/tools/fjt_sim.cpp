// Fractional joint-transmission simulator.
//
//   fjt_sim solve    --config desk.ini --seed 3 --out dp.csv
//   fjt_sim adp      --config desk.ini --set n_explorations=5
//   fjt_sim baseline --config desk.ini --kind greedy --trace greedy_trace.csv
//   fjt_sim sweep    --config desk.ini --e2-sweep 0.1,0.4,0.8,1.2
//
// Exit codes: 0 success, 1 bad arguments or config, 2 numerical failure,
// 3 I/O failure.

#include "fjt/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Overrides {
    std::string config;
    std::string e2_sweep;
    std::string algo;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::string trace;
    std::vector<std::string> set;
    int threads = -1;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_algo) {
    cmd->add_option("-c,--config", o.config, "INI config file")->check(CLI::ExistingFile);
    cmd->add_option("--e2-sweep", o.e2_sweep, "comma-separated E2 values in W");
    if (with_algo) cmd->add_option("--algo", o.algo, "comma-separated algorithms: dp, adp, greedy, conventional, fixed_bs");
    cmd->add_option("--seed", o.seeds, "seed(s); repeat for several");
    cmd->add_option("-o,--out", o.out, "CSV output path");
    cmd->add_option("--trace", o.trace, "per-frame trace output path");
    cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    cmd->add_option("--set", o.set, "extra key=value config override; repeatable");
}

fjt::ExperimentConfig build_config(const Overrides& o) {
    fjt::ExperimentConfig cfg = o.config.empty() ? fjt::ExperimentConfig{} : fjt::load_config(o.config);
    for (const auto& kv : o.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw fjt::config_error("--set expects key=value, got '" + kv + "'");
        fjt::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!o.e2_sweep.empty()) fjt::apply_setting(cfg, "e2_sweep", o.e2_sweep);
    if (!o.algo.empty()) fjt::apply_setting(cfg, "algorithms", o.algo);
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (!o.out.empty()) cfg.output = o.out;
    if (!o.trace.empty()) cfg.trace = o.trace;
    if (o.threads >= 0) cfg.threads = o.threads;
    return cfg;
}

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void run(const fjt::ExperimentConfig& cfg) {
    const auto out = fjt::run_experiment(cfg);
    try {
        fjt::write_csv(cfg.output, out.records);
    } catch (const std::runtime_error& e) {
        throw io_error(e.what());
    }
    if (!cfg.trace.empty()) {
        std::ofstream f(cfg.trace);
        if (!f) throw io_error("cannot open trace file '" + cfg.trace + "'");
        fjt::write_trace(f, out.trace);
    }
    for (const auto& r : out.records)
        std::cout << r.algorithm << " E2=" << r.e2 << " seed=" << r.seed << " rate=" << r.avg_sum_rate
                  << " alpha=" << r.avg_alpha << '\n';
    std::cout << "wrote " << out.records.size() << " records to " << cfg.output << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fractional joint-transmission simulator"};
    app.require_subcommand(1);
    Overrides o;
    std::string kind = "greedy";

    auto* solve = app.add_subcommand("solve", "exact DP policy");
    add_common(solve, o, false);
    auto* adp = app.add_subcommand("adp", "approximate DP policy");
    add_common(adp, o, false);
    auto* baseline = app.add_subcommand("baseline", "baseline policy");
    add_common(baseline, o, false);
    baseline->add_option("--kind", kind, "conventional, greedy or fixed_bs")
        ->check(CLI::IsMember({"conventional", "greedy", "fixed_bs"}));
    auto* sweep = app.add_subcommand("sweep", "all configured algorithms over the E2 sweep");
    add_common(sweep, o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        auto cfg = build_config(o);
        if (solve->parsed()) cfg.algorithms = {fjt::Algorithm::dp};
        if (adp->parsed()) cfg.algorithms = {fjt::Algorithm::adp};
        if (baseline->parsed()) cfg.algorithms = {fjt::parse_algorithm(kind)};
        cfg.validate();
        run(cfg);
    } catch (const fjt::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const fjt::domain_error& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 1;
    } catch (const io_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
