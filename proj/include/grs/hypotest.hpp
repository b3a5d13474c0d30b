#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grs/types.hpp"

namespace grs {

/// One experiment's group labels, in input order.
struct ExperimentAssignment {
    struct Member {
        std::string user_id;
        Group group;

        friend bool operator==(const Member&, const Member&) = default;
    };

    std::string experiment_id;
    std::vector<Member> members;

    std::size_t count(Group g) const noexcept;
    /// Both groups non-empty.
    bool testable() const noexcept { return count(Group::treatment) > 0 && count(Group::control) > 0; }

    friend bool operator==(const ExperimentAssignment&, const ExperimentAssignment&) = default;
};

enum class Method : std::uint8_t { t_test, rank_sum, global_rank_sum };

std::string_view to_string(Method m) noexcept;
/// Accepts the names produced by `to_string`.
Method parse_method(std::string_view name);

enum class Verdict : std::uint8_t { accept, reject };

std::string_view to_string(Verdict v) noexcept;

struct AlphaVerdict {
    double alpha;
    Verdict verdict;

    friend bool operator==(const AlphaVerdict&, const AlphaVerdict&) = default;
};

/// Two-sided p-value and per-level decisions for a statistic.
struct Decision {
    double p_value;
    std::vector<AlphaVerdict> verdicts;
};

struct TestResult {
    Method method;
    double statistic;
    double p_value;
    std::int64_t n_treatment;
    std::int64_t n_control;
    std::vector<AlphaVerdict> decisions;
    /// Set when M = N_t + N_c is below `kSmallSampleWarning`; the normal
    /// reference is asymptotic and small experiments are only approximate.
    bool small_sample = false;
};

inline constexpr std::int64_t kSmallSampleWarning = 30;

// Statistics ---------------------------------------------------------------

/// Welch-style t: (mean_t - mean_c) / sqrt(s_t^2 / N_t + s_c^2 / N_c) with
/// unbiased sample variances.
double welch_t_statistic(std::span<const double> treatment, std::span<const double> control);

/// Classic rank-sum statistic on within-experiment ranks, which together
/// must be exactly {1, ..., M}.
double rank_sum_statistic(std::span<const Rank> treatment_local, std::span<const Rank> control_local);

/// Global-rank-sum statistic on raw global ranks:
/// (mean_t - mean_c) / (sigma * sqrt(1/N_t + 1/N_c)), sigma^2 the (M - 1)
/// denominator variance of the experiment's ranks.
double global_rank_sum_statistic(std::span<const Rank> treatment_global,
                                 std::span<const Rank> control_global);

/// Rank-sum statistic from group sums of local ranks; no validation of the
/// rank set.
double rank_sum_from_moments(const RankMoments& m);

/// Global-rank-sum statistic from accumulated moments.
double global_rank_sum_from_moments(const RankMoments& m);

// Normal reference ---------------------------------------------------------

double normal_cdf(double z) noexcept;

/// Upper tail 1 - Phi(z), without cancellation for large z.
double normal_sf(double z) noexcept;

/// Inverse of `normal_cdf` on (0, 1).
double normal_quantile(double q);

/// p = 2 (1 - Phi(|statistic|)); reject at level alpha iff p < alpha.
Decision decide(double statistic, std::span<const double> alphas);

/// Validates the alpha list (each in (0, 1)).
void validate_alphas(std::span<const double> alphas);

TestResult make_result(Method method, double statistic, std::int64_t n_treatment,
                       std::int64_t n_control, std::span<const double> alphas);

// Exact permutation-null oracle ---------------------------------------------

struct SplitMoments {
    double mean;
    double variance;
    std::uint64_t splits;
};

inline constexpr std::uint64_t kExactSplitBudget = 1'000'000;

/// Enumerates every size-`n_treatment` subset of `experiment_ranks` as the
/// treatment group and returns the exact mean and variance of
/// mean_t - mean_c over all splits.
SplitMoments exact_split_moments(std::span<const Rank> experiment_ranks, std::int64_t n_treatment);

} // namespace grs
