#include <omp.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "grs/platform_io.hpp"
#include "grs/simlab.hpp"

namespace grs::io {

namespace {

std::uint64_t default_seed() {
    if (const char* env = std::getenv(kSeedEnv)) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw Error(std::string(kSeedEnv) + " is not an unsigned integer: '" + env + "'");
        }
    }
    return 0;
}

struct Shared {
    std::uint64_t seed = 0;
    std::vector<double> alphas;
    std::string format = "table";
    std::string out_path;
    int threads = 0;
    CLI::Option* seed_opt = nullptr;
};

void add_shared(CLI::App& cmd, Shared& s, bool with_alpha = true) {
    s.seed_opt = cmd.add_option("--seed", s.seed, "Seed (default: $" + std::string(kSeedEnv) + " or 0)");
    if (with_alpha) cmd.add_option("--alpha", s.alphas, "Significance level; repeatable");
    cmd.add_option("--format", s.format, "table | delimited | structured")
        ->check(CLI::IsMember({"table", "delimited", "csv", "structured", "json"}));
    cmd.add_option("--out", s.out_path, "Output file (default: stdout)");
    cmd.add_option("--threads", s.threads, "OpenMP threads (default: runtime choice)")->check(CLI::PositiveNumber);
}

void resolve(Shared& s) {
    if (s.seed_opt->count() == 0) s.seed = default_seed();
    if (s.threads > 0) omp_set_num_threads(s.threads);
}

// Writes to --out when given, otherwise to `out`.
template <class Fn>
void with_output(const Shared& s, std::ostream& out, Fn&& fn) {
    if (s.out_path.empty()) {
        fn(out);
        return;
    }
    std::ofstream file(s.out_path);
    if (!file) throw Error("cannot write '" + s.out_path + "'");
    fn(file);
    if (!file) throw Error("write failed for '" + s.out_path + "'");
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Rank-once/test-many A/B analysis with the global-rank-sum test", "grs"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    // rank
    Shared rank_s;
    std::string rank_metrics;
    bool rank_header = false;
    auto* rank = app.add_subcommand("rank", "Build the global rank table and export it");
    rank->add_option("--metrics", rank_metrics, "user_id,value file")->required();
    rank->add_flag("--header", rank_header, "Metrics file has a header line");
    add_shared(*rank, rank_s, false);

    // test
    Shared test_s;
    AnalysisRequest request;
    std::string metrics_path, assignments_path, timing_log;
    std::vector<std::string> methods;
    auto* test = app.add_subcommand("test", "Evaluate every experiment in an assignments file");
    test->add_option("--metrics", metrics_path, "user_id,value file")->required();
    test->add_option("--assignments", assignments_path, "experiment_id,user_id,group file")->required();
    test->add_flag("--metrics-header", request.metrics_header, "Metrics file has a header line");
    test->add_flag("--assignments-header", request.assignments_header, "Assignments file has a header line");
    test->add_option("--method", methods, "t_test | rank_sum | global_rank_sum; repeatable (default: all)")
        ->check(CLI::IsMember({"t_test", "rank_sum", "global_rank_sum"}));
    test->add_option("--timing-log", timing_log, "Write per-phase timings here");
    add_shared(*test, test_s);

    // simulate
    Shared sim_s;
    sim::SimulationConfig config;
    std::string config_path, ranking_base;
    std::vector<double> gammas;
    bool with_timings = false;
    auto* simulate = app.add_subcommand("simulate", "Run the type-I calibration or power study");
    simulate->add_option("--config", config_path, "JSON config; flags override it");
    auto* mu_opt = simulate->add_option("--mu", config.mu, "Log-normal location");
    auto* sigma_opt = simulate->add_option("--sigma", config.sigma, "Log-normal scale");
    auto* pop_opt = simulate->add_option("--population", config.population_size, "Population size N");
    auto* nt_opt = simulate->add_option("--n-treatment", config.n_treatment, "Treatment size");
    auto* nc_opt = simulate->add_option("--n-control", config.n_control, "Control size");
    auto* reps_opt = simulate->add_option("--reps", config.replications, "Replications");
    simulate->add_option("--gamma", gammas, "Lift ratio; repeatable, > 0 runs the power study");
    simulate->add_option("--ranking-base", ranking_base, "full_population | experiment_only")
        ->check(CLI::IsMember({"full_population", "experiment_only"}));
    simulate->add_flag("--timings", with_timings, "Include phase timings in structured output");
    add_shared(*simulate, sim_s);

    // bench
    Shared bench_s;
    sim::SimulationConfig bench_config;
    bench_config.population_size = 1'000'000;
    std::int64_t experiment_size = 0;
    std::vector<std::int64_t> counts{1, 10, 50, 100, 200, 500};
    int runs = 3;
    auto* bench = app.add_subcommand("bench", "Time traditional vs global rank-sum evaluation");
    bench->add_option("--population", bench_config.population_size, "Population size N");
    bench->add_option("--experiment-size", experiment_size, "Users per experiment (default: N/5)");
    bench->add_option("--experiments", counts, "Experiment counts; repeatable");
    bench->add_option("--runs", runs, "Timed runs per count; the median is reported")->check(CLI::PositiveNumber);
    bench->add_option("--mu", bench_config.mu, "Log-normal location");
    bench->add_option("--sigma", bench_config.sigma, "Log-normal scale");
    add_shared(*bench, bench_s, false);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*rank) {
            resolve(rank_s);
            const auto records = load_metrics(rank_metrics, rank_header);
            const auto table = compute_global_ranks(records, rank_s.seed);
            with_output(rank_s, out, [&](std::ostream& o) { write_rank_table(o, table); });
        } else if (*test) {
            resolve(test_s);
            request.metrics_path = metrics_path;
            request.assignments_path = assignments_path;
            request.options.tiebreak_seed = test_s.seed;
            if (!test_s.alphas.empty()) request.options.alphas = test_s.alphas;
            if (!methods.empty()) {
                request.options.methods.clear();
                for (const auto& m : methods) request.options.methods.push_back(parse_method(m));
            }
            request.output_format = parse_output_format(test_s.format);
            request.timing_log_path = timing_log;
            const auto report = analyze(request);
            with_output(test_s, out, [&](std::ostream& o) { write_report(o, report, request.output_format); });
        } else if (*simulate) {
            sim::SimulationConfig base;
            // --seed beats the config file, which beats the environment.
            base.seed = default_seed();
            if (!config_path.empty()) sim::load_simulation_config(config_path, base);
            if (sim_s.seed_opt->count()) base.seed = sim_s.seed;
            if (sim_s.threads > 0) omp_set_num_threads(sim_s.threads);
            if (mu_opt->count()) base.mu = config.mu;
            if (sigma_opt->count()) base.sigma = config.sigma;
            if (pop_opt->count()) base.population_size = config.population_size;
            if (nt_opt->count()) base.n_treatment = config.n_treatment;
            if (nc_opt->count()) base.n_control = config.n_control;
            if (reps_opt->count()) base.replications = config.replications;
            if (!ranking_base.empty()) base.ranking_base = sim::parse_ranking_base(ranking_base);
            if (!sim_s.alphas.empty()) base.alphas = sim_s.alphas;
            if (gammas.empty()) gammas.push_back(base.lift_ratio);

            const bool power = std::any_of(gammas.begin(), gammas.end(), [](double g) { return g != 0.0; });
            std::vector<sim::StudyReport> reports;
            for (double g : gammas) {
                auto c = base;
                c.lift_ratio = g;
                reports.push_back(power ? sim::run_power_study(c) : sim::run_calibration_study(c));
            }
            const auto format = parse_output_format(sim_s.format);
            with_output(sim_s, out, [&](std::ostream& o) {
                switch (format) {
                case OutputFormat::table:
                    sim::write_study_table(o, reports, power ? sim::RowLabel::lift_ratio : sim::RowLabel::mu_sigma);
                    break;
                case OutputFormat::delimited: sim::write_study_delimited(o, reports); break;
                case OutputFormat::structured: sim::write_study_structured(o, reports, with_timings); break;
                }
            });
        } else if (*bench) {
            resolve(bench_s);
            bench_config.seed = bench_s.seed;
            const auto m = experiment_size > 0 ? experiment_size : bench_config.population_size / 5;
            bench_config.n_treatment = m / 2;
            bench_config.n_control = m - m / 2;
            std::vector<sim::TimingRow> rows;
            for (auto e : counts) rows.push_back(sim::run_timing_benchmark(e, bench_config, {runs, true}));
            const auto format = parse_output_format(bench_s.format);
            with_output(bench_s, out, [&](std::ostream& o) {
                switch (format) {
                case OutputFormat::table: sim::write_timing_table(o, rows); break;
                case OutputFormat::delimited: sim::write_timing_delimited(o, rows); break;
                case OutputFormat::structured: sim::write_timing_structured(o, rows); break;
                }
            });
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace grs::io
