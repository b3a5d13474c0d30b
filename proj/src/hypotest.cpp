#include "grs/hypotest.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace grs {

namespace {

struct MeanVariance {
    long double mean;
    long double variance; // unbiased
};

// Two-pass with a correction term for the residual rounding of the mean.
MeanVariance mean_variance(std::span<const double> x) {
    long double sum = 0;
    for (double v : x) sum += v;
    const long double n = static_cast<long double>(x.size());
    const long double mean = sum / n;
    long double ss = 0, comp = 0;
    for (double v : x) {
        const long double d = v - mean;
        ss += d * d;
        comp += d;
    }
    return {mean, (ss - comp * comp / n) / (n - 1)};
}

void check_groups(const RankMoments& m) {
    if (m.n_treatment < 1 || m.n_control < 1) throw Error("empty treatment or control group");
    if (m.n_treatment + m.n_control < 2) throw Error("need at least two observations");
}

} // namespace

std::size_t ExperimentAssignment::count(Group g) const noexcept {
    std::size_t n = 0;
    for (const auto& m : members) n += (m.group == g);
    return n;
}

std::string_view to_string(Method m) noexcept {
    switch (m) {
    case Method::t_test: return "t_test";
    case Method::rank_sum: return "rank_sum";
    case Method::global_rank_sum: return "global_rank_sum";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    if (name == "t_test") return Method::t_test;
    if (name == "rank_sum") return Method::rank_sum;
    if (name == "global_rank_sum") return Method::global_rank_sum;
    throw Error("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Verdict v) noexcept {
    return v == Verdict::reject ? "reject" : "accept";
}

double welch_t_statistic(std::span<const double> treatment, std::span<const double> control) {
    if (treatment.size() < 2 || control.size() < 2) throw Error("insufficient samples");
    for (auto group : {treatment, control}) {
        for (double v : group) {
            if (!std::isfinite(v)) throw Error("non-finite value in t-test input");
        }
    }
    const auto t = mean_variance(treatment);
    const auto c = mean_variance(control);
    const long double var = t.variance / static_cast<long double>(treatment.size()) +
                            c.variance / static_cast<long double>(control.size());
    if (!(var > 0)) throw Error("zero variance");
    return static_cast<double>((t.mean - c.mean) / std::sqrt(var));
}

double rank_sum_from_moments(const RankMoments& m) {
    check_groups(m);
    const WideInt num = m.sum_treatment * m.n_control - m.sum_control * m.n_treatment;
    const long double nt = static_cast<long double>(m.n_treatment);
    const long double nc = static_cast<long double>(m.n_control);
    const long double big_m = nt + nc;
    return static_cast<double>(static_cast<long double>(num) *
                               std::sqrt(12.0L / (nt * nc * big_m * (big_m * big_m - 1))));
}

double global_rank_sum_from_moments(const RankMoments& m) {
    check_groups(m);
    const std::int64_t big_m = m.n_treatment + m.n_control;
    const WideInt total = m.sum_treatment + m.sum_control;
    // M * sum(R^2) - (sum R)^2 = M (M - 1) sigma^2, exact in integers.
    const WideInt spread = static_cast<WideInt>(big_m) * m.sum_squares - total * total;
    if (spread <= 0) throw Error("zero rank variance");
    const WideInt num = m.sum_treatment * m.n_control - m.sum_control * m.n_treatment;
    const long double nt_nc = static_cast<long double>(m.n_treatment) * static_cast<long double>(m.n_control);
    return static_cast<double>(static_cast<long double>(num) /
                               std::sqrt(static_cast<long double>(spread) * nt_nc /
                                         static_cast<long double>(big_m - 1)));
}

double rank_sum_statistic(std::span<const Rank> treatment_local, std::span<const Rank> control_local) {
    const std::size_t total = treatment_local.size() + control_local.size();
    if (total < 2) throw Error("need at least two observations");
    if (treatment_local.empty() || control_local.empty()) throw Error("empty treatment or control group");

    std::vector<bool> seen(total, false);
    RankMoments m;
    m.n_treatment = static_cast<std::int64_t>(treatment_local.size());
    m.n_control = static_cast<std::int64_t>(control_local.size());
    auto take = [&](Rank r, WideInt& sum) {
        if (r < 1 || r > static_cast<Rank>(total) || seen[static_cast<std::size_t>(r - 1)]) {
            throw Error("invalid local ranks");
        }
        seen[static_cast<std::size_t>(r - 1)] = true;
        sum += r;
    };
    for (Rank r : treatment_local) take(r, m.sum_treatment);
    for (Rank r : control_local) take(r, m.sum_control);
    return rank_sum_from_moments(m);
}

double global_rank_sum_statistic(std::span<const Rank> treatment_global,
                                 std::span<const Rank> control_global) {
    RankMoments m;
    m.n_treatment = static_cast<std::int64_t>(treatment_global.size());
    m.n_control = static_cast<std::int64_t>(control_global.size());
    for (Rank r : treatment_global) {
        if (r < 1) throw Error("global ranks must be positive");
        m.sum_treatment += r;
        m.sum_squares += static_cast<WideInt>(r) * r;
    }
    for (Rank r : control_global) {
        if (r < 1) throw Error("global ranks must be positive");
        m.sum_control += r;
        m.sum_squares += static_cast<WideInt>(r) * r;
    }
    return global_rank_sum_from_moments(m);
}

void validate_alphas(std::span<const double> alphas) {
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0)) throw Error("alpha must lie in (0, 1), got " + std::to_string(a));
    }
}

Decision decide(double statistic, std::span<const double> alphas) {
    validate_alphas(alphas);
    if (std::isnan(statistic)) throw Error("statistic is NaN");
    Decision d;
    d.p_value = std::erfc(std::fabs(statistic) / std::numbers::sqrt2);
    d.verdicts.reserve(alphas.size());
    for (double a : alphas) {
        d.verdicts.push_back({a, d.p_value < a ? Verdict::reject : Verdict::accept});
    }
    return d;
}

TestResult make_result(Method method, double statistic, std::int64_t n_treatment,
                       std::int64_t n_control, std::span<const double> alphas) {
    auto d = decide(statistic, alphas);
    return TestResult{method,
                      statistic,
                      d.p_value,
                      n_treatment,
                      n_control,
                      std::move(d.verdicts),
                      n_treatment + n_control < kSmallSampleWarning};
}

SplitMoments exact_split_moments(std::span<const Rank> experiment_ranks, std::int64_t n_treatment) {
    const auto m = static_cast<std::int64_t>(experiment_ranks.size());
    if (m < 2 || n_treatment < 1 || n_treatment > m - 1) {
        throw Error("exact oracle needs 1 <= n_treatment <= M - 1");
    }
    if (m > 62) throw Error("instance too large for exact oracle");

    // C(M, n_treatment), stopping once past the budget.
    std::uint64_t splits = 1;
    for (std::int64_t k = 1; k <= n_treatment; ++k) {
        splits = splits * static_cast<std::uint64_t>(m - n_treatment + k) / static_cast<std::uint64_t>(k);
        if (splits > kExactSplitBudget) throw Error("instance too large for exact oracle");
    }

    WideInt total = 0;
    for (Rank r : experiment_ranks) {
        if (r < -(Rank{1} << 32) || r > (Rank{1} << 32)) throw Error("exact oracle ranks out of range");
        total += r;
    }

    const std::int64_t n_control = m - n_treatment;
    WideInt sum_num = 0, sum_num_sq = 0;
    // Gosper's hack walks every n_treatment-bit mask below 2^M.
    std::uint64_t mask = (std::uint64_t{1} << n_treatment) - 1;
    const std::uint64_t limit = std::uint64_t{1} << m;
    while (mask < limit) {
        WideInt s_t = 0;
        for (std::int64_t i = 0; i < m; ++i) {
            if (mask >> i & 1) s_t += experiment_ranks[static_cast<std::size_t>(i)];
        }
        const WideInt num = s_t * n_control - (total - s_t) * n_treatment;
        sum_num += num;
        sum_num_sq += num * num;

        const std::uint64_t low = mask & (~mask + 1);
        const std::uint64_t ripple = mask + low;
        mask = (((ripple ^ mask) >> 2) / low) | ripple;
    }

    const long double denom = static_cast<long double>(n_treatment) * static_cast<long double>(n_control);
    const long double count = static_cast<long double>(splits);
    const long double mean_num = static_cast<long double>(sum_num) / count;
    const long double var_num = static_cast<long double>(sum_num_sq) / count - mean_num * mean_num;
    return {static_cast<double>(mean_num / denom), static_cast<double>(var_num / (denom * denom)), splits};
}

} // namespace grs
