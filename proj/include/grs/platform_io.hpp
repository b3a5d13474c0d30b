#pragma once

// File formats, the rank-once/test-many analysis pipeline and the command
// line front end.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grs/hypotest.hpp"
#include "grs/rankcore.hpp"

namespace grs::io {

// Ingestion ----------------------------------------------------------------
//
// Delimited text, one record per line. Blank lines and lines starting with
// '#' are skipped. Errors carry the source name and 1-based line number.

/// `user_id,value` records; ids unique, values finite.
std::vector<MetricRecord> parse_metrics(std::istream& in, bool has_header = false,
                                        const std::string& source = "<metrics>");
std::vector<MetricRecord> load_metrics(const std::filesystem::path& path, bool has_header = false);

/// `experiment_id,user_id,group` rows with group in {t, c}. Returns one
/// assignment per experiment id, sorted by id. Users may appear in several
/// experiments but only once per experiment.
std::vector<ExperimentAssignment> parse_assignments(std::istream& in, bool has_header = false,
                                                    const std::string& source = "<assignments>");
std::vector<ExperimentAssignment> load_assignments(const std::filesystem::path& path, bool has_header = false);

// Rank table export --------------------------------------------------------
//
//   #population_size=N tiebreak_seed=S
//   user_id,rank
//   ...

void write_rank_table(std::ostream& out, const GlobalRankTable& table);
GlobalRankTable read_rank_table(std::istream& in, const std::string& source = "<ranks>");

// Pipeline -----------------------------------------------------------------

enum class OutputFormat : std::uint8_t { table, delimited, structured };

OutputFormat parse_output_format(std::string_view name);

struct EvaluationOptions {
    std::uint64_t tiebreak_seed = 0;
    std::vector<double> alphas{0.05};
    std::vector<Method> methods{Method::t_test, Method::rank_sum, Method::global_rank_sum};
};

/// One (experiment, method) outcome. `result` is empty for error rows; the
/// diagnostic is in `note`.
struct ReportRow {
    std::string experiment_id;
    Method method;
    std::int64_t n_treatment = 0;
    std::int64_t n_control = 0;
    std::optional<TestResult> result;
    std::string note;
};

struct PipelineStats {
    /// Full-population sorts counted by `global_sort_count` during evaluation.
    int ranking_phases = 0;
    double load_seconds = 0;
    double ranking_seconds = 0;
    double evaluation_seconds = 0;
    double write_seconds = 0;
};

struct AnalysisReport {
    std::vector<double> alphas;
    std::vector<ReportRow> rows; // sorted by experiment id, then method
    PipelineStats stats;
};

/// Ranks the population once (only when a rank method is requested), then
/// evaluates every experiment independently. A failing experiment becomes
/// error rows; it never aborts the run.
AnalysisReport evaluate(std::span<const MetricRecord> metrics,
                        std::span<const ExperimentAssignment> experiments,
                        const EvaluationOptions& options);

struct AnalysisRequest {
    std::filesystem::path metrics_path;
    std::filesystem::path assignments_path;
    bool metrics_header = false;
    bool assignments_header = false;
    EvaluationOptions options;
    std::filesystem::path output_path; // empty: do not write
    OutputFormat output_format = OutputFormat::delimited;
    std::filesystem::path timing_log_path; // empty: do not write
};

AnalysisReport analyze(const AnalysisRequest& request);

void write_report(std::ostream& out, const AnalysisReport& report, OutputFormat format);

/// One `phase=<name> seconds=<s>` line per phase; the ranking line also
/// carries the sort count and reads `sorts=0 seconds=0` when nothing was
/// ranked.
void write_timing_log(std::ostream& out, const PipelineStats& stats);

// Command line -------------------------------------------------------------

/// Environment variable holding the default seed; `--seed` overrides it.
inline constexpr const char* kSeedEnv = "GRS_SEED";

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

} // namespace grs::io
