// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Arguments select a subset by number, e.g. `acceptance 1 3`.

#include <omp.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "grs/hypotest.hpp"
#include "grs/platform_io.hpp"
#include "grs/rankcore.hpp"
#include "grs/simlab.hpp"

using namespace grs;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::filesystem::path scratch_dir() {
    const auto dir = std::filesystem::temp_directory_path() / ("grs_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = io::run_cli(args, out, err);
    if (code != 0) std::fprintf(stderr, "grs %s failed: %s\n", args.front().c_str(), err.str().c_str());
    return code;
}

std::vector<Rank> distinct_ranks(std::mt19937_64& gen, std::size_t m, std::uint64_t max_rank) {
    std::set<Rank> s;
    while (s.size() < m) s.insert(static_cast<Rank>(gen() % max_rank) + 1);
    std::vector<Rank> out(s.begin(), s.end());
    std::shuffle(out.begin(), out.end(), gen);
    return out;
}

// 1. Exact split moments against the finite-population variance, the latter
// computed from exact integer sums.
Outcome exact_oracle() {
    std::mt19937_64 gen(1);
    double worst = 0;
    int checks = 0;
    bool mean_zero = true;
    for (int instance = 0; instance < 200; ++instance) {
        const std::size_t m = 4 + gen() % 9;
        const auto r = distinct_ranks(gen, m, 1'000'000);
        __int128 s = 0, q = 0;
        for (auto x : r) {
            s += x;
            q += static_cast<__int128>(x) * x;
        }
        const __int128 spread = static_cast<__int128>(m) * q - s * s; // M(M-1) sigma^2
        for (std::size_t nt = 1; nt < m; ++nt) {
            const std::size_t nc = m - nt;
            // (1/nt + 1/nc) sigma^2 = spread / (nt nc (M - 1))
            const long double want =
                static_cast<long double>(spread) / (static_cast<long double>(nt) * nc * (m - 1));
            const auto got = exact_split_moments(r, static_cast<std::int64_t>(nt));
            mean_zero = mean_zero && got.mean == 0.0;
            worst = std::max(worst, static_cast<double>(std::fabs(got.variance - want) / want));
            ++checks;
        }
    }
    return {mean_zero && worst <= 1e-12,
            fmt("%d splits checked, mean exactly 0: %s, max relative variance error %.3g (limit 1e-12)", checks,
                mean_zero ? "yes" : "no", worst)};
}

// 2. grs on local ranks equals rs * sqrt((M - 1) / M).
Outcome bridge() {
    std::mt19937_64 gen(2);
    double worst = 0;
    for (int e = 0; e < 1000; ++e) {
        const std::size_t m = 2 + gen() % 5000;
        const std::size_t nt = 1 + gen() % (m - 1);
        std::vector<Rank> local(m);
        std::iota(local.begin(), local.end(), 1);
        std::shuffle(local.begin(), local.end(), gen);
        const std::span<const Rank> all(local);
        const double rs = rank_sum_statistic(all.first(nt), all.subspan(nt));
        const double grs = global_rank_sum_statistic(all.first(nt), all.subspan(nt));
        worst = std::max(worst, std::fabs(grs - rs * std::sqrt((m - 1.0) / m)));
    }
    return {worst <= 1e-10, fmt("1000 experiments, max |grs - rs*sqrt((M-1)/M)| = %.3g (limit 1e-10)", worst)};
}

// 3. Worked example through the rank table and the `test` pipeline.
Outcome worked_example() {
    const double values[] = {10, 9, 30, 23, 19, 3, 5, 27, 15, 18};
    std::vector<MetricRecord> recs;
    for (int i = 0; i < 10; ++i) recs.push_back({std::to_string(i + 1), values[i]});
    const auto table = compute_global_ranks(recs, 0);
    std::vector<Rank> global;
    for (const auto& r : recs) global.push_back(table.rank_of(r.user_id));
    const bool global_ok = global == std::vector<Rank>{4, 3, 10, 8, 7, 1, 2, 9, 5, 6};

    const std::vector<std::string> e1{"1", "2", "3", "4", "5", "6"}, e2{"5", "6", "7", "8", "9", "10"};
    const bool local_ok = local_ranks(table, e1) == std::vector<Rank>{3, 2, 6, 5, 4, 1} &&
                          local_ranks(table, e2) == std::vector<Rank>{5, 1, 2, 6, 3, 4};

    std::istringstream assignments("e1,1,t\ne1,2,t\ne1,3,t\ne1,4,c\ne1,5,c\ne1,6,c\n"
                                   "e2,5,t\ne2,6,c\ne2,7,t\ne2,8,t\ne2,9,c\ne2,10,c\n");
    io::EvaluationOptions options;
    options.methods = {Method::global_rank_sum};
    const auto report = io::evaluate(recs, io::parse_assignments(assignments), options);
    const double g1 = report.rows.at(0).result->statistic;
    const double g2 = report.rows.at(1).result->statistic;
    const bool stats_ok = std::fabs(g1 - 0.1204) <= 1e-4 && std::fabs(g2 - 0.8076) <= 1e-4;
    return {global_ok && local_ok && stats_ok,
            fmt("global ranks %s, local ranks %s, grs = %.6f and %.6f (want 0.1204, 0.8076 within 1e-4)",
                global_ok ? "match" : "differ", local_ok ? "match" : "differ", g1, g2)};
}

sim::SimulationConfig desk_config(double mu, double sigma) {
    sim::SimulationConfig c;
    c.mu = mu;
    c.sigma = sigma;
    c.population_size = 100'000;
    c.n_treatment = 10'000;
    c.n_control = 10'000;
    c.replications = 2'000;
    c.alphas = {0.01, 0.05, 0.10};
    c.seed = 2024;
    return c;
}

bool in_band(double rate) { return rate >= 0.035 && rate <= 0.065; }

std::string rates_at_05(const sim::StudyReport& r) {
    return fmt("t %.2f%%, rs %.2f%%, grs %.2f%%", 100 * r.rejection_rate(Method::t_test, 1),
               100 * r.rejection_rate(Method::rank_sum, 1), 100 * r.rejection_rate(Method::global_rank_sum, 1));
}

// 4. Null calibration of both rank tests.
Outcome calibration() {
    const auto r = sim::run_calibration_study(desk_config(-3, 3));
    double gap = 0;
    for (std::size_t a = 0; a < 3; ++a) {
        gap = std::max(gap, std::fabs(r.rejection_rate(Method::rank_sum, a) - r.rejection_rate(Method::global_rank_sum, a)));
    }
    const bool ok = in_band(r.rejection_rate(Method::rank_sum, 1)) &&
                    in_band(r.rejection_rate(Method::global_rank_sum, 1)) && gap <= 0.005;
    return {ok, fmt("(-3,3) at alpha 0.05: %s; max rs/grs gap over alphas %.2fpp (limit 0.5pp)",
                    rates_at_05(r).c_str(), 100 * gap)};
}

// 5. t-test under-rejection on a heavier tail.
Outcome t_under_rejection() {
    const auto r = sim::run_calibration_study(desk_config(-5, 7));
    const bool ok = r.rejection_rate(Method::t_test, 1) < 0.03 && in_band(r.rejection_rate(Method::rank_sum, 1)) &&
                    in_band(r.rejection_rate(Method::global_rank_sum, 1));
    return {ok, fmt("(-5,7) at alpha 0.05: %s (t < 3%%, rank tests in [3.5%%, 6.5%%])", rates_at_05(r).c_str())};
}

// 6. Power under lift at full experiment size.
Outcome power() {
    auto c = desk_config(-5, 7);
    c.population_size = 1'000'000;
    c.n_treatment = 100'000;
    c.n_control = 100'000;
    c.alphas = {0.05};
    const double gammas[] = {0.01, 0.05, 0.10, 0.20};
    std::vector<sim::StudyReport> reports;
    for (double g : gammas) {
        c.lift_ratio = g;
        reports.push_back(sim::run_power_study(c));
    }
    const auto reps = static_cast<double>(c.replications);
    bool monotone = true;
    for (Method m : {Method::rank_sum, Method::global_rank_sum}) {
        for (std::size_t i = 0; i + 1 < reports.size(); ++i) {
            const double p0 = reports[i].rejection_rate(m, 0), p1 = reports[i + 1].rejection_rate(m, 0);
            const double se = std::sqrt(std::max(p0 * (1 - p0), p1 * (1 - p1)) / reps);
            monotone = monotone && p1 >= p0 - 2 * se;
        }
    }
    const auto& top = reports.back();
    const bool ok = top.rejection_rate(Method::rank_sum, 0) >= 0.99 &&
                    top.rejection_rate(Method::global_rank_sum, 0) >= 0.99 &&
                    top.rejection_rate(Method::t_test, 0) < 0.10 && monotone;
    std::string grid;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        grid += fmt("%s%g%%: rs %.2f%% grs %.2f%% t %.2f%%", i ? "; " : "", 100 * gammas[i],
                    100 * reports[i].rejection_rate(Method::rank_sum, 0),
                    100 * reports[i].rejection_rate(Method::global_rank_sum, 0),
                    100 * reports[i].rejection_rate(Method::t_test, 0));
    }
    return {ok, grid + (monotone ? "; monotone" : "; NOT monotone")};
}

// 7. Sort-per-experiment versus sort-once crossover.
Outcome timing() {
    sim::SimulationConfig c;
    c.population_size = 1'000'000;
    c.n_treatment = 100'000;
    c.n_control = 100'000;
    c.seed = 2024;
    std::vector<sim::TimingRow> rows;
    for (std::int64_t e : {1, 10, 50, 100}) rows.push_back(sim::run_timing_benchmark(e, c));
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) monotone = monotone && rows[i + 1].diff_ratio() < rows[i].diff_ratio();
    const bool ok = rows[0].traditional_seconds < rows[0].global_seconds &&
                    rows[3].global_seconds <= 0.5 * rows[3].traditional_seconds && monotone;
    std::string detail;
    for (const auto& r : rows) {
        detail += fmt("%sE=%lld %+.1f%%", detail.empty() ? "" : ", ", static_cast<long long>(r.experiments),
                      100 * r.diff_ratio());
    }
    return {ok, detail + (monotone ? " (monotone)" : " (NOT monotone)")};
}

void write_synthetic_inputs(const std::filesystem::path& dir, int experiments, std::filesystem::path& metrics,
                            std::filesystem::path& assignments) {
    const auto pop = sim::gen_lognormal_population(20'000, -3, 3, 7);
    metrics = dir / "metrics.csv";
    assignments = dir / ("assignments_" + std::to_string(experiments) + ".csv");
    std::ofstream m(metrics);
    m.precision(17);
    for (const auto& r : pop) m << r.user_id << ',' << r.value << '\n';
    std::ofstream a(assignments);
    for (int e = 0; e < experiments; ++e) {
        const auto exp = sim::sample_experiment(pop, 50, 50, static_cast<std::uint64_t>(e));
        for (const auto& member : exp.members) {
            a << "exp" << e << ',' << member.user_id << ',' << (member.group == Group::treatment ? 't' : 'c') << '\n';
        }
    }
}

// 8. One population sort per `test` invocation.
Outcome single_sort() {
    const auto dir = scratch_dir();
    bool ok = true;
    std::string detail;
    for (int e : {1, 10, 1000}) {
        std::filesystem::path metrics, assignments;
        write_synthetic_inputs(dir, e, metrics, assignments);
        const auto log = dir / "timing.log";
        const auto before = global_sort_count();
        const int code = run({"test", "--metrics", metrics.string(), "--assignments", assignments.string(), "--method",
                              "global_rank_sum", "--timing-log", log.string(), "--out", (dir / "r.csv").string()});
        const auto sorts = global_sort_count() - before;
        const bool logged = read_file(log).find("phase=ranking sorts=1 ") != std::string::npos;
        ok = ok && code == 0 && sorts == 1 && logged;
        detail += fmt("%sE=%d: %llu sort%s", detail.empty() ? "" : ", ", e, static_cast<unsigned long long>(sorts),
                      logged ? "" : " (log mismatch)");
    }
    std::filesystem::remove_all(dir);
    return {ok, detail};
}

// 9. Byte-identical structured reports across repeated runs and thread counts.
Outcome determinism() {
    const auto dir = scratch_dir();
    std::filesystem::path metrics, assignments;
    write_synthetic_inputs(dir, 300, metrics, assignments);
    const std::vector<std::string> simulate{"simulate", "--mu",  "-5",  "--sigma", "7", "--population", "200000",
                                            "--n-treatment", "20000", "--n-control", "20000", "--reps", "200",
                                            "--gamma", "0.05", "--seed", "42", "--format", "structured"};
    const std::vector<std::string> test{"test",     "--metrics", metrics.string(), "--assignments", assignments.string(),
                                        "--seed", "42",        "--alpha", "0.01", "--alpha", "0.05",
                                        "--format", "structured"};
    bool ok = true;
    std::string detail;
    for (const auto& [name, base] : {std::pair{"simulate", simulate}, std::pair{"test", test}}) {
        std::vector<std::string> outputs;
        for (const char* threads : {"1", "4", "1", "4"}) {
            auto args = base;
            const auto out = dir / (std::string(name) + "_" + threads + "_" + std::to_string(outputs.size()) + ".json");
            args.insert(args.end(), {"--threads", threads, "--out", out.string()});
            ok = ok && run(args) == 0;
            outputs.push_back(read_file(out));
        }
        const bool same = !outputs[0].empty() &&
                          std::all_of(outputs.begin(), outputs.end(), [&](const auto& s) { return s == outputs[0]; });
        ok = ok && same;
        detail += fmt("%s%s: %zu bytes %s", detail.empty() ? "" : ", ", name, outputs[0].size(),
                      same ? "identical over 4 runs (threads 1,4,1,4)" : "DIFFER");
    }
    std::filesystem::remove_all(dir);
    return {ok, detail};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"exact split oracle", exact_oracle},  {"statistic cross-check", bridge},
        {"worked example", worked_example},    {"type-I calibration", calibration},
        {"t-test under-rejection", t_under_rejection}, {"power", power},
        {"timing crossover", timing},          {"single sort", single_sort},
        {"determinism", determinism}};

    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("criterion %d %-24s %s  %s [%.1fs]\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
