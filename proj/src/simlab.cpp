#include "grs/simlab.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <unordered_map>

namespace grs::sim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::int64_t kGenerationBlock = 1 << 16;

void check_population_size(std::int64_t n) {
    if (n < 1) throw Error("population size must be at least 1");
    if (n > std::numeric_limits<std::uint32_t>::max()) throw Error("population size exceeds 2^32 - 1");
}

} // namespace

std::string_view to_string(RankingBase b) noexcept {
    return b == RankingBase::full_population ? "full_population" : "experiment_only";
}

RankingBase parse_ranking_base(std::string_view name) {
    if (name == "full_population") return RankingBase::full_population;
    if (name == "experiment_only") return RankingBase::experiment_only;
    throw Error("unknown ranking base '" + std::string(name) + "'");
}

void SimulationConfig::validate() const {
    if (!std::isfinite(mu)) throw Error("mu must be finite");
    if (!(sigma > 0) || !std::isfinite(sigma)) throw Error("sigma must be positive and finite");
    check_population_size(population_size);
    if (n_treatment < 2 || n_control < 2) throw Error("each group needs at least two users");
    if (n_treatment + n_control > population_size) throw Error("n_treatment + n_control exceeds population size");
    if (replications < 1) throw Error("replications must be at least 1");
    if (!(lift_ratio >= 0) || !std::isfinite(lift_ratio)) throw Error("lift_ratio must be finite and >= 0");
    if (alphas.empty()) throw Error("at least one alpha is required");
    validate_alphas(alphas);
    if (!std::is_sorted(alphas.begin(), alphas.end())) throw Error("alphas must be sorted ascending");
}

double StudyReport::rejection_rate(Method method, std::size_t alpha_index) const {
    const auto m = static_cast<std::size_t>(method);
    return static_cast<double>(rejections.at(m).at(alpha_index)) / static_cast<double>(config.replications);
}

// Generation ---------------------------------------------------------------

std::vector<double> gen_lognormal_values(std::int64_t n, double mu, double sigma, std::uint64_t seed) {
    check_population_size(n);
    if (!std::isfinite(mu)) throw Error("mu must be finite");
    if (!(sigma > 0) || !std::isfinite(sigma)) throw Error("sigma must be positive and finite");

    std::vector<double> values(static_cast<std::size_t>(n));
    const std::int64_t blocks = (n + kGenerationBlock - 1) / kGenerationBlock;
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < blocks; ++b) {
        RandomStream rng(seed, RandomStream::Domain::population, static_cast<std::uint64_t>(b));
        const std::int64_t hi = std::min(n, (b + 1) * kGenerationBlock);
        for (std::int64_t i = b * kGenerationBlock; i < hi; ++i) {
            values[static_cast<std::size_t>(i)] = std::exp(mu + sigma * rng.normal());
        }
    }
    return values;
}

std::vector<MetricRecord> gen_lognormal_population(std::int64_t n, double mu, double sigma,
                                                   std::uint64_t seed) {
    const auto values = gen_lognormal_values(n, mu, sigma, seed);
    std::vector<MetricRecord> out;
    out.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back({std::to_string(i + 1), values[i]});
    return out;
}

std::vector<std::uint64_t> synthetic_tiebreak_keys(std::int64_t n, std::uint64_t seed) {
    check_population_size(n);
    std::vector<std::uint64_t> keys(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        keys[static_cast<std::size_t>(i)] = tiebreak_key(std::to_string(i + 1), seed);
    }
    return keys;
}

SplitSampler::SplitSampler(std::int64_t population, std::int64_t n_treatment, std::int64_t n_control)
    : n_treatment_(n_treatment), n_control_(n_control) {
    check_population_size(population);
    if (n_treatment < 1 || n_control < 1) throw Error("both groups must be non-empty");
    if (n_treatment + n_control > population) throw Error("requested experiment is larger than the population");
    perm_.resize(static_cast<std::size_t>(population));
    for (std::size_t i = 0; i < perm_.size(); ++i) perm_[i] = static_cast<std::uint32_t>(i);
    swaps_.resize(static_cast<std::size_t>(n_treatment + n_control));
}

SplitIndices SplitSampler::sample(RandomStream& rng) {
    const std::size_t n = perm_.size();
    const auto m = static_cast<std::size_t>(n_treatment_ + n_control_);
    const auto nt = static_cast<std::size_t>(n_treatment_);
    // Partial Fisher-Yates: the first m slots are a uniform random m-subset in
    // uniform random order.
    for (std::size_t k = 0; k < m; ++k) {
        const auto j = k + static_cast<std::size_t>(rng.below(n - k));
        swaps_[k] = static_cast<std::uint32_t>(j);
        std::swap(perm_[k], perm_[j]);
    }
    SplitIndices out;
    out.treatment.assign(perm_.begin(), perm_.begin() + static_cast<std::ptrdiff_t>(nt));
    out.control.assign(perm_.begin() + static_cast<std::ptrdiff_t>(nt), perm_.begin() + static_cast<std::ptrdiff_t>(m));
    for (std::size_t k = m; k-- > 0;) std::swap(perm_[k], perm_[swaps_[k]]);
    return out;
}

ExperimentAssignment sample_experiment(std::span<const MetricRecord> population,
                                       std::int64_t n_treatment, std::int64_t n_control,
                                       std::uint64_t seed) {
    SplitSampler sampler(static_cast<std::int64_t>(population.size()), n_treatment, n_control);
    RandomStream rng(seed, RandomStream::Domain::assignment, 0);
    const auto split = sampler.sample(rng);
    ExperimentAssignment out;
    out.experiment_id = "sim";
    out.members.reserve(split.treatment.size() + split.control.size());
    for (auto i : split.treatment) out.members.push_back({population[i].user_id, Group::treatment});
    for (auto i : split.control) out.members.push_back({population[i].user_id, Group::control});
    return out;
}

std::vector<MetricRecord> apply_lift(const ExperimentAssignment& assignment,
                                     std::span<const MetricRecord> population, double gamma) {
    if (!(gamma >= 0) || !std::isfinite(gamma)) throw Error("lift ratio must be finite and >= 0");
    std::unordered_map<std::string_view, Group> groups;
    groups.reserve(assignment.members.size());
    for (const auto& m : assignment.members) {
        if (!groups.emplace(m.user_id, m.group).second) {
            throw Error("user '" + m.user_id + "' appears twice in experiment '" + assignment.experiment_id + "'");
        }
    }
    std::vector<MetricRecord> out(population.begin(), population.end());
    std::size_t matched = 0;
    for (auto& rec : out) {
        const auto it = groups.find(rec.user_id);
        if (it == groups.end()) continue;
        ++matched;
        if (it->second == Group::treatment) rec.value *= 1.0 + gamma;
    }
    if (matched != groups.size()) throw Error("assignment references users missing from the population");
    return out;
}

LiftReranker::LiftReranker(std::span<const kernels::SortKey> sorted_base, std::span<const Rank> base_ranks)
    : sorted_(sorted_base),
      base_ranks_(base_ranks),
      slot_(sorted_base.size(), 0),
      bits_(sorted_base.size() / 64 + 1, 0),
      members_(bits_.size(), 0),
      below_(bits_.size(), 0) {
    if (sorted_base.size() != base_ranks.size()) throw Error("sorted keys and ranks differ in length");
}

// A member's rank after the lift is one plus the number of non-treatment users
// below it in the base order plus the number of lifted treatment keys below
// it. Both counts are found by sweeping the members in base order, so only
// their neighbourhoods of the sorted base are read.
ExperimentRanks LiftReranker::rerank(std::span<const std::uint32_t> treatment,
                                     std::span<const std::uint32_t> control, double gamma) {
    const auto nt = static_cast<std::uint32_t>(treatment.size());
    auto position = [&](std::uint32_t idx) { return static_cast<std::size_t>(base_ranks_[idx] - 1); };
    auto mark = [&](std::size_t p, std::uint32_t slot, bool treated) {
        slot_[p] = slot;
        members_[p >> 6] |= std::uint64_t{1} << (p & 63);
        if (treated) bits_[p >> 6] |= std::uint64_t{1} << (p & 63);
    };
    for (std::uint32_t k = 0; k < nt; ++k) mark(position(treatment[k]), k + 1, true);
    for (std::uint32_t k = 0; k < control.size(); ++k) mark(position(control[k]), nt + k + 1, false);

    const double factor = 1.0 + gamma;
    lifted_.clear();
    controls_.clear();
    std::uint32_t seen = 0;
    for (std::size_t w = 0; w < members_.size(); ++w) {
        below_[w] = seen;
        seen += static_cast<std::uint32_t>(std::popcount(bits_[w]));
        for (auto word = members_[w]; word != 0; word &= word - 1) {
            const std::size_t p = w * 64 + static_cast<std::size_t>(std::countr_zero(word));
            if (slot_[p] <= nt) {
                auto key = sorted_[p];
                key.value *= factor;
                lifted_.push_back({key, slot_[p]});
            } else {
                controls_.push_back({p, slot_[p] - nt - 1});
            }
            slot_[p] = 0;
        }
        members_[w] = 0;
    }
    auto treated_below = [&](std::size_t p) {
        const auto mask = (std::uint64_t{1} << (p & 63)) - 1;
        return std::size_t{below_[p >> 6]} + static_cast<std::size_t>(std::popcount(bits_[p >> 6] & mask));
    };

    // A common positive factor keeps base order unless rounding creates new
    // ties; re-sort in that case.
    auto lifted_less = [](const Lifted& a, const Lifted& b) { return kernels::key_less(a.key, b.key); };
    if (!std::is_sorted(lifted_.begin(), lifted_.end(), lifted_less)) {
        std::sort(lifted_.begin(), lifted_.end(), lifted_less);
    }

    ExperimentRanks r;
    r.treatment.resize(treatment.size());
    r.control.resize(control.size());
    const std::size_t n = sorted_.size();
    std::size_t at = 0;
    for (std::size_t j = 0; j < lifted_.size(); ++j) {
        const auto& l = lifted_[j];
        // Gallop forward from the previous answer.
        std::size_t step = 1, hi = at;
        while (hi < n && kernels::key_less(sorted_[hi], l.key)) {
            at = hi + 1;
            hi = std::min(n, hi + step);
            step *= 2;
        }
        at = static_cast<std::size_t>(std::lower_bound(sorted_.begin() + static_cast<std::ptrdiff_t>(at),
                                                       sorted_.begin() + static_cast<std::ptrdiff_t>(hi), l.key,
                                                       kernels::key_less) -
                                      sorted_.begin());
        r.treatment[l.slot - 1] = static_cast<Rank>(at - treated_below(at) + j + 1);
    }
    std::size_t lifted_below = 0;
    for (const auto& [q, k] : controls_) {
        while (lifted_below < lifted_.size() && kernels::key_less(lifted_[lifted_below].key, sorted_[q])) {
            ++lifted_below;
        }
        r.control[k] = static_cast<Rank>(q - treated_below(q) + lifted_below + 1);
    }
    std::fill(bits_.begin(), bits_.end(), 0);
    return r;
}

ExperimentRanks rerank_with_lift(std::span<const kernels::SortKey> sorted_base,
                                 std::span<const std::uint32_t> treatment,
                                 std::span<const std::uint32_t> control, double gamma) {
    const auto ranks = kernels::omp::ranks_from_sorted(sorted_base);
    LiftReranker reranker(sorted_base, ranks);
    return reranker.rerank(treatment, control, gamma);
}

// Studies ------------------------------------------------------------------

namespace {

RankMoments moments_of(std::span<const Rank> ranks, std::size_t n_treatment) {
    RankMoments m;
    m.n_treatment = static_cast<std::int64_t>(n_treatment);
    m.n_control = static_cast<std::int64_t>(ranks.size() - n_treatment);
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        const WideInt r = ranks[i];
        (i < n_treatment ? m.sum_treatment : m.sum_control) += r;
        m.sum_squares += r * r;
    }
    return m;
}

// Ranks of the experiment's observed values among themselves.
std::vector<Rank> experiment_local_ranks(std::span<const double> values, std::span<const std::uint64_t> keys,
                                         const SplitIndices& split, double factor) {
    std::vector<kernels::SortKey> exp;
    exp.reserve(split.treatment.size() + split.control.size());
    std::uint32_t slot = 0;
    for (auto i : split.treatment) exp.push_back({values[i] * factor, keys[i], slot++});
    for (auto i : split.control) exp.push_back({values[i], keys[i], slot++});
    std::sort(exp.begin(), exp.end(), kernels::key_less);
    return kernels::serial::ranks_from_sorted(exp);
}

StudyReport run_study(const SimulationConfig& config) {
    config.validate();
    StudyReport report;
    report.config = config;

    const double gamma = config.lift_ratio;
    const double factor = 1.0 + gamma;
    const auto n = config.population_size;
    const auto nt = static_cast<std::size_t>(config.n_treatment);
    const std::size_t n_alpha = config.alphas.size();
    constexpr std::size_t n_methods = std::size(kStudyMethods);

    auto start = Clock::now();
    const auto values = gen_lognormal_values(n, config.mu, config.sigma, config.seed);
    const auto keys = synthetic_tiebreak_keys(n, config.seed);
    report.timings.population_seconds = seconds_since(start);

    start = Clock::now();
    const auto sorted = sort_population(values, keys);
    const auto base_ranks = kernels::omp::ranks_from_sorted(sorted);
    report.ranking_sorts = 1;
    report.timings.ranking_seconds = seconds_since(start);

    const auto reps = static_cast<std::size_t>(config.replications);
    std::vector<std::uint8_t> outcomes(reps * n_methods * n_alpha, 0);
    std::vector<std::string> errors(reps);
    const bool lifted_global = gamma > 0 && config.ranking_base == RankingBase::full_population;

    start = Clock::now();
#pragma omp parallel
    {
        SplitSampler sampler(n, config.n_treatment, config.n_control);
        std::optional<LiftReranker> reranker;
        if (lifted_global) reranker.emplace(sorted, base_ranks);
        std::vector<double> tv, cv;
        std::vector<Rank> exp_global;

#pragma omp for schedule(dynamic, 4)
        for (std::size_t rep = 0; rep < reps; ++rep) {
            try {
                RandomStream rng(config.seed, RandomStream::Domain::replication, rep);
                const auto split = sampler.sample(rng);

                tv.clear();
                cv.clear();
                for (auto i : split.treatment) tv.push_back(values[i] * factor);
                for (auto i : split.control) cv.push_back(values[i]);
                double stats[n_methods];
                stats[0] = welch_t_statistic(tv, cv);

                if (config.ranking_base == RankingBase::experiment_only) {
                    const auto local = experiment_local_ranks(values, keys, split, factor);
                    const auto m = moments_of(local, nt);
                    stats[1] = rank_sum_from_moments(m);
                    stats[2] = global_rank_sum_from_moments(m);
                } else {
                    exp_global.clear();
                    if (lifted_global) {
                        auto er = reranker->rerank(split.treatment, split.control, gamma);
                        exp_global.insert(exp_global.end(), er.treatment.begin(), er.treatment.end());
                        exp_global.insert(exp_global.end(), er.control.begin(), er.control.end());
                    } else {
                        for (auto i : split.treatment) exp_global.push_back(base_ranks[i]);
                        for (auto i : split.control) exp_global.push_back(base_ranks[i]);
                    }
                    const auto local = kernels::omp::local_ranks(exp_global, n);
                    stats[1] = rank_sum_from_moments(moments_of(local, nt));
                    stats[2] = global_rank_sum_from_moments(moments_of(exp_global, nt));
                }

                for (std::size_t k = 0; k < n_methods; ++k) {
                    const auto d = decide(stats[k], config.alphas);
                    for (std::size_t a = 0; a < n_alpha; ++a) {
                        outcomes[(rep * n_methods + k) * n_alpha + a] = d.verdicts[a].verdict == Verdict::reject;
                    }
                }
            } catch (const std::exception& e) {
                errors[rep] = e.what();
            }
        }
    }
    report.timings.replication_seconds = seconds_since(start);

    for (std::size_t rep = 0; rep < reps; ++rep) {
        if (!errors[rep].empty()) throw Error("replication " + std::to_string(rep) + ": " + errors[rep]);
    }

    report.rejections.assign(n_methods, std::vector<std::int64_t>(n_alpha, 0));
    for (std::size_t rep = 0; rep < reps; ++rep) {
        for (std::size_t k = 0; k < n_methods; ++k) {
            for (std::size_t a = 0; a < n_alpha; ++a) {
                report.rejections[k][a] += outcomes[(rep * n_methods + k) * n_alpha + a];
            }
        }
    }
    return report;
}

} // namespace

StudyReport run_calibration_study(const SimulationConfig& config) {
    if (config.lift_ratio != 0.0) throw Error("calibration study requires lift_ratio = 0");
    return run_study(config);
}

StudyReport run_power_study(const SimulationConfig& config) {
    return run_study(config);
}

// Timing -------------------------------------------------------------------

namespace {

struct PathTimes {
    double traditional = 0;
    double global = 0;
    double checksum = 0;
};

PathTimes time_once(std::int64_t n_experiments, const SimulationConfig& config, std::span<const double> values,
                    std::span<const std::uint64_t> keys, SplitSampler& sampler) {
    PathTimes t;
    const auto nt = static_cast<std::size_t>(config.n_treatment);

    // Traditional: every experiment sorts its own values.
    for (std::int64_t e = 0; e < n_experiments; ++e) {
        RandomStream rng(config.seed, RandomStream::Domain::benchmark, static_cast<std::uint64_t>(e));
        const auto split = sampler.sample(rng);
        const auto start = Clock::now();
        std::vector<kernels::SortKey> exp;
        exp.reserve(split.treatment.size() + split.control.size());
        std::uint32_t slot = 0;
        for (auto i : split.treatment) exp.push_back({values[i], keys[i], slot++});
        for (auto i : split.control) exp.push_back({values[i], keys[i], slot++});
        kernels::omp::sort_keys(exp);
        const auto local = kernels::omp::ranks_from_sorted(exp);
        t.checksum += rank_sum_from_moments(moments_of(local, nt));
        t.traditional += seconds_since(start);
    }

    // Global: one population sort, then rank lookups.
    auto start = Clock::now();
    const auto sorted = sort_population(values, keys);
    const auto ranks = kernels::omp::ranks_from_sorted(sorted);
    t.global += seconds_since(start);
    for (std::int64_t e = 0; e < n_experiments; ++e) {
        RandomStream rng(config.seed, RandomStream::Domain::benchmark, static_cast<std::uint64_t>(e));
        const auto split = sampler.sample(rng);
        start = Clock::now();
        t.checksum += global_rank_sum_from_moments(kernels::omp::rank_moments(ranks, split.treatment, split.control));
        t.global += seconds_since(start);
    }
    return t;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

} // namespace

TimingRow run_timing_benchmark(std::int64_t n_experiments, const SimulationConfig& config,
                               const TimingOptions& options) {
    if (n_experiments < 1) throw Error("n_experiments must be at least 1");
    if (options.runs < 1) throw Error("timing runs must be at least 1");
    config.validate();

    const auto values = gen_lognormal_values(config.population_size, config.mu, config.sigma, config.seed);
    const auto keys = synthetic_tiebreak_keys(config.population_size, config.seed);
    SplitSampler sampler(config.population_size, config.n_treatment, config.n_control);

    if (options.warmup) (void)time_once(1, config, values, keys, sampler);

    std::vector<double> trad, glob;
    TimingRow row;
    row.experiments = n_experiments;
    for (int r = 0; r < options.runs; ++r) {
        const auto t = time_once(n_experiments, config, values, keys, sampler);
        trad.push_back(t.traditional);
        glob.push_back(t.global);
        row.checksum = t.checksum;
    }
    row.traditional_seconds = median(trad);
    row.global_seconds = median(glob);
    return row;
}

} // namespace grs::sim
