#pragma once

// Monte Carlo studies on log-normal populations: type-I calibration, power
// under a multiplicative lift, and the sort-once versus sort-per-experiment
// timing comparison.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grs/hypotest.hpp"
#include "grs/kernels.hpp"
#include "grs/random.hpp"
#include "grs/rankcore.hpp"

namespace grs::sim {

/// What the global-rank-sum test ranks against once treatment values are
/// lifted.
enum class RankingBase : std::uint8_t {
    full_population, ///< re-rank the whole population with lifted treatment values
    experiment_only, ///< rank only the experiment's observed values
};

std::string_view to_string(RankingBase b) noexcept;
RankingBase parse_ranking_base(std::string_view name);

struct SimulationConfig {
    double mu = -3.0;
    double sigma = 3.0;
    std::int64_t population_size = 1'000'000;
    std::int64_t n_treatment = 100'000;
    std::int64_t n_control = 100'000;
    std::int64_t replications = 5'000;
    double lift_ratio = 0.0;
    std::vector<double> alphas{0.01, 0.05, 0.10};
    std::uint64_t seed = 0;
    RankingBase ranking_base = RankingBase::full_population;

    /// Throws `Error` on any violated invariant.
    void validate() const;
};

struct PhaseTimings {
    double population_seconds = 0;
    double ranking_seconds = 0;
    double replication_seconds = 0;
};

struct StudyReport {
    SimulationConfig config;
    /// rejections[method][alpha index], methods in `kStudyMethods` order.
    std::vector<std::vector<std::int64_t>> rejections;
    std::uint64_t ranking_sorts = 0;
    PhaseTimings timings;

    double rejection_rate(Method method, std::size_t alpha_index) const;
};

inline constexpr Method kStudyMethods[] = {Method::t_test, Method::rank_sum, Method::global_rank_sum};

// Generation ---------------------------------------------------------------

/// n values exp(Z), Z ~ N(mu, sigma^2). Generated in fixed-size blocks, one
/// random stream per block, so output does not depend on thread count.
std::vector<double> gen_lognormal_values(std::int64_t n, double mu, double sigma, std::uint64_t seed);

/// Same values as `gen_lognormal_values`, with synthetic ids "1".."n".
std::vector<MetricRecord> gen_lognormal_population(std::int64_t n, double mu, double sigma,
                                                   std::uint64_t seed);

/// Tiebreak keys of the synthetic ids "1".."n".
std::vector<std::uint64_t> synthetic_tiebreak_keys(std::int64_t n, std::uint64_t seed);

struct SplitIndices {
    std::vector<std::uint32_t> treatment;
    std::vector<std::uint32_t> control;
};

/// Uniform random subset of size n_treatment + n_control split uniformly
/// into the two groups. Keeps an identity permutation as scratch and restores
/// it after every draw, so each draw depends only on its stream.
class SplitSampler {
public:
    SplitSampler(std::int64_t population, std::int64_t n_treatment, std::int64_t n_control);

    SplitIndices sample(RandomStream& rng);

private:
    std::vector<std::uint32_t> perm_;
    std::vector<std::uint32_t> swaps_;
    std::int64_t n_treatment_;
    std::int64_t n_control_;
};

ExperimentAssignment sample_experiment(std::span<const MetricRecord> population,
                                       std::int64_t n_treatment, std::int64_t n_control,
                                       std::uint64_t seed);

/// Observed population: treatment values scaled by (1 + gamma), everyone
/// else unchanged. Users absent from the population are an error.
std::vector<MetricRecord> apply_lift(const ExperimentAssignment& assignment,
                                     std::span<const MetricRecord> population, double gamma);

struct ExperimentRanks {
    std::vector<Rank> treatment;
    std::vector<Rank> control;
};

/// Global ranks of the experiment's users after lifting the treatment values
/// by (1 + gamma), obtained by merging the lifted treatment keys back into
/// the already-sorted base population without re-sorting it. Holds
/// per-thread scratch;
/// the base arrays must outlive it.
class LiftReranker {
public:
    LiftReranker(std::span<const kernels::SortKey> sorted_base, std::span<const Rank> base_ranks);

    ExperimentRanks rerank(std::span<const std::uint32_t> treatment,
                           std::span<const std::uint32_t> control, double gamma);

private:
    struct Lifted {
        kernels::SortKey key;
        std::uint32_t slot;
    };

    std::span<const kernels::SortKey> sorted_;
    std::span<const Rank> base_ranks_;
    std::vector<std::uint32_t> slot_;  // by sorted position; treatment slot + 1, or 0
    std::vector<std::uint64_t> bits_;  // treatment membership by sorted position
    std::vector<std::uint64_t> members_; // experiment membership by sorted position
    std::vector<std::uint32_t> below_; // treatment members in earlier words
    std::vector<Lifted> lifted_;
    std::vector<std::pair<std::size_t, std::size_t>> controls_; // (position, control slot) in base order
};

/// One-shot convenience over `LiftReranker`.
ExperimentRanks rerank_with_lift(std::span<const kernels::SortKey> sorted_base,
                                 std::span<const std::uint32_t> treatment,
                                 std::span<const std::uint32_t> control, double gamma);

// Studies ------------------------------------------------------------------

/// Null study; requires lift_ratio == 0.
StudyReport run_calibration_study(const SimulationConfig& config);

/// Lifted study. lift_ratio == 0 is accepted and reproduces the calibration
/// report for the same seed.
StudyReport run_power_study(const SimulationConfig& config);

struct TimingRow {
    std::int64_t experiments = 0;
    double traditional_seconds = 0;
    double global_seconds = 0;
    /// Keeps both paths observable to the optimizer.
    double checksum = 0;

    /// (global - traditional) / traditional.
    double diff_ratio() const { return (global_seconds - traditional_seconds) / traditional_seconds; }
};

struct TimingOptions {
    int runs = 3;
    bool warmup = true;
};

/// Times `n_experiments` rank-sum evaluations done the traditional way (sort
/// every experiment) against the global way (sort the population once, then
/// look ranks up). Reports the median of `runs` timed runs per path.
TimingRow run_timing_benchmark(std::int64_t n_experiments, const SimulationConfig& config,
                               const TimingOptions& options = {});

// Reports ------------------------------------------------------------------

enum class RowLabel : std::uint8_t { mu_sigma, lift_ratio };

void write_study_table(std::ostream& out, std::span<const StudyReport> reports, RowLabel label);
void write_study_delimited(std::ostream& out, std::span<const StudyReport> reports);
/// Timings are left out unless requested so that reports stay comparable
/// across runs.
void write_study_structured(std::ostream& out, std::span<const StudyReport> reports,
                            bool include_timings = false);

void write_timing_table(std::ostream& out, std::span<const TimingRow> rows);
void write_timing_delimited(std::ostream& out, std::span<const TimingRow> rows);
void write_timing_structured(std::ostream& out, std::span<const TimingRow> rows);

/// Reads a JSON object whose keys mirror `SimulationConfig` fields; absent
/// keys keep the values already in `config`.
void load_simulation_config(const std::string& path, SimulationConfig& config);

} // namespace grs::sim
