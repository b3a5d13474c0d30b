#include "grs/platform_io.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "grs/format.hpp"
#include "grs/kernels.hpp"

namespace grs::io {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    for (;;) {
        const auto comma = line.find(',');
        out.push_back(trim(line.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    return out;
}

Error line_error(const std::string& source, std::size_t line, const std::string& what) {
    return Error(source + ":" + std::to_string(line) + ": " + what);
}

// Calls `fn(fields, line_number)` for every data line.
template <class Fn>
void for_each_row(std::istream& in, bool has_header, const std::string& source, Fn&& fn) {
    std::string line;
    std::size_t number = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++number;
        const auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        fn(split_fields(view), number);
    }
    if (in.bad()) throw Error(source + ": read error");
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return in;
}

std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// Canonical method order, restricted to what was requested.
std::vector<Method> requested_methods(std::span<const Method> methods) {
    if (methods.empty()) throw Error("no test methods requested");
    std::vector<Method> out;
    for (Method m : {Method::t_test, Method::rank_sum, Method::global_rank_sum}) {
        if (std::find(methods.begin(), methods.end(), m) != methods.end()) out.push_back(m);
    }
    return out;
}

} // namespace

// Ingestion ----------------------------------------------------------------

std::vector<MetricRecord> parse_metrics(std::istream& in, bool has_header, const std::string& source) {
    std::vector<MetricRecord> records;
    std::unordered_set<std::string> seen;
    for_each_row(in, has_header, source, [&](const std::vector<std::string_view>& f, std::size_t line) {
        if (f.size() != 2) throw line_error(source, line, "expected 'user_id,value'");
        if (f[0].empty()) throw line_error(source, line, "empty user_id");
        double value = 0;
        const auto* end = f[1].data() + f[1].size();
        const auto [ptr, ec] = std::from_chars(f[1].data(), end, value);
        if (ec != std::errc() || ptr != end) {
            throw line_error(source, line, "malformed value '" + std::string(f[1]) + "'");
        }
        std::string id(f[0]);
        if (!std::isfinite(value)) throw line_error(source, line, "non-finite value for user '" + id + "'");
        if (!seen.insert(id).second) throw line_error(source, line, "duplicate user_id '" + id + "'");
        records.push_back({std::move(id), value});
    });
    if (records.empty()) throw Error(source + ": empty population");
    return records;
}

std::vector<MetricRecord> load_metrics(const std::filesystem::path& path, bool has_header) {
    auto in = open_input(path);
    return parse_metrics(in, has_header, path.string());
}

std::vector<ExperimentAssignment> parse_assignments(std::istream& in, bool has_header, const std::string& source) {
    std::map<std::string, ExperimentAssignment, std::less<>> experiments;
    std::map<std::string, std::unordered_set<std::string>, std::less<>> members;
    for_each_row(in, has_header, source, [&](const std::vector<std::string_view>& f, std::size_t line) {
        if (f.size() != 3) throw line_error(source, line, "expected 'experiment_id,user_id,group'");
        if (f[0].empty() || f[1].empty()) throw line_error(source, line, "empty experiment_id or user_id");
        Group group;
        if (f[2] == "t") group = Group::treatment;
        else if (f[2] == "c") group = Group::control;
        else throw line_error(source, line, "unknown group label '" + std::string(f[2]) + "'");

        std::string exp_id(f[0]);
        std::string user(f[1]);
        if (!members[exp_id].insert(user).second) {
            throw line_error(source, line, "duplicate (experiment, user) pair ('" + exp_id + "', '" + user + "')");
        }
        auto& e = experiments[exp_id];
        e.experiment_id = exp_id;
        e.members.push_back({std::move(user), group});
    });
    std::vector<ExperimentAssignment> out;
    out.reserve(experiments.size());
    for (auto& [id, e] : experiments) out.push_back(std::move(e));
    return out;
}

std::vector<ExperimentAssignment> load_assignments(const std::filesystem::path& path, bool has_header) {
    auto in = open_input(path);
    return parse_assignments(in, has_header, path.string());
}

// Rank table ---------------------------------------------------------------

void write_rank_table(std::ostream& out, const GlobalRankTable& table) {
    out << "#population_size=" << table.population_size() << " tiebreak_seed=" << table.tiebreak_seed() << '\n';
    const auto ids = table.user_ids();
    const auto ranks = table.ranks();
    for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << ranks[i] << '\n';
}

GlobalRankTable read_rank_table(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw Error(source + ": missing metadata line");
    std::uint64_t declared = 0, seed = 0;
    {
        std::istringstream meta(std::string(trim(line)));
        std::string a, b;
        meta >> a >> b;
        const std::string pn = "#population_size=", ts = "tiebreak_seed=";
        if (a.rfind(pn, 0) != 0 || b.rfind(ts, 0) != 0) throw Error(source + ":1: malformed metadata line");
        try {
            declared = std::stoull(a.substr(pn.size()));
            seed = std::stoull(b.substr(ts.size()));
        } catch (const std::exception&) {
            throw Error(source + ":1: malformed metadata line");
        }
    }
    std::vector<std::string> ids;
    std::vector<Rank> ranks;
    for_each_row(in, false, source, [&](const std::vector<std::string_view>& f, std::size_t line_no) {
        // line numbers restart after the metadata line
        if (f.size() != 2) throw line_error(source, line_no + 1, "expected 'user_id,rank'");
        Rank r = 0;
        const auto* end = f[1].data() + f[1].size();
        const auto [ptr, ec] = std::from_chars(f[1].data(), end, r);
        if (ec != std::errc() || ptr != end) throw line_error(source, line_no + 1, "malformed rank");
        ids.emplace_back(f[0]);
        ranks.push_back(r);
    });
    if (ids.size() != declared) {
        throw Error(source + ": metadata declares " + std::to_string(declared) + " users, found " +
                    std::to_string(ids.size()));
    }
    return GlobalRankTable::from_ranks(std::move(ids), std::move(ranks), seed);
}

// Pipeline -----------------------------------------------------------------

OutputFormat parse_output_format(std::string_view name) {
    if (name == "table") return OutputFormat::table;
    if (name == "delimited" || name == "csv") return OutputFormat::delimited;
    if (name == "structured" || name == "json") return OutputFormat::structured;
    throw Error("unknown output format '" + std::string(name) + "'");
}

AnalysisReport evaluate(std::span<const MetricRecord> metrics,
                        std::span<const ExperimentAssignment> experiments,
                        const EvaluationOptions& options) {
    validate_alphas(options.alphas);
    const auto methods = requested_methods(options.methods);
    const bool need_ranks = std::any_of(methods.begin(), methods.end(),
                                        [](Method m) { return m != Method::t_test; });

    AnalysisReport report;
    report.alphas = options.alphas;

    const auto sorts_before = global_sort_count();
    std::optional<GlobalRankTable> table;
    std::unordered_map<std::string_view, std::size_t> index;
    if (need_ranks) {
        const auto start = Clock::now();
        table.emplace(compute_global_ranks(metrics, options.tiebreak_seed));
        report.stats.ranking_seconds = seconds_since(start);
    } else {
        if (metrics.empty()) throw Error("empty population");
        index.reserve(metrics.size());
        for (std::size_t i = 0; i < metrics.size(); ++i) {
            if (!std::isfinite(metrics[i].value)) throw Error("non-finite value for user '" + metrics[i].user_id + "'");
            if (!index.emplace(metrics[i].user_id, i).second) {
                throw Error("duplicate user_id '" + metrics[i].user_id + "'");
            }
        }
    }
    auto locate = [&](const std::string& id) -> std::optional<std::size_t> {
        if (table) return table->find(id);
        const auto it = index.find(id);
        if (it == index.end()) return std::nullopt;
        return it->second;
    };

    std::vector<const ExperimentAssignment*> order;
    order.reserve(experiments.size());
    for (const auto& e : experiments) order.push_back(&e);
    std::sort(order.begin(), order.end(),
              [](const auto* a, const auto* b) { return a->experiment_id < b->experiment_id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->experiment_id == order[i - 1]->experiment_id) {
            throw Error("experiment '" + order[i]->experiment_id + "' given more than once");
        }
    }

    const auto start = Clock::now();
    std::vector<std::vector<ReportRow>> per_experiment(order.size());
    const auto population = static_cast<Rank>(metrics.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& exp = *order[k];
        auto& rows = per_experiment[k];
        const auto nt = static_cast<std::int64_t>(exp.count(Group::treatment));
        const auto nc = static_cast<std::int64_t>(exp.count(Group::control));
        auto fail_all = [&](const std::string& note) {
            for (Method m : methods) rows.push_back({exp.experiment_id, m, nt, nc, std::nullopt, note});
        };

        std::vector<std::size_t> t_idx, c_idx;
        std::string problem;
        std::unordered_set<std::string_view> seen;
        for (const auto& member : exp.members) {
            if (!seen.insert(member.user_id).second) {
                problem = "user '" + member.user_id + "' appears twice";
                break;
            }
            const auto pos = locate(member.user_id);
            if (!pos) {
                problem = "user '" + member.user_id + "' not found in metrics";
                break;
            }
            (member.group == Group::treatment ? t_idx : c_idx).push_back(*pos);
        }
        if (problem.empty() && !exp.testable()) {
            problem = nt == 0 ? "untestable: empty treatment group" : "untestable: empty control group";
        }
        if (!problem.empty()) {
            fail_all(problem);
            continue;
        }

        for (Method m : methods) {
            ReportRow row{exp.experiment_id, m, nt, nc, std::nullopt, {}};
            try {
                double stat = 0;
                if (m == Method::t_test) {
                    std::vector<double> tv, cv;
                    for (auto i : t_idx) tv.push_back(metrics[i].value);
                    for (auto i : c_idx) cv.push_back(metrics[i].value);
                    stat = welch_t_statistic(tv, cv);
                } else {
                    const auto ranks = table->ranks();
                    std::vector<Rank> global;
                    global.reserve(t_idx.size() + c_idx.size());
                    for (auto i : t_idx) global.push_back(ranks[i]);
                    for (auto i : c_idx) global.push_back(ranks[i]);
                    const std::span<const Rank> all(global);
                    if (m == Method::rank_sum) {
                        const auto local = kernels::omp::local_ranks(all, population);
                        const std::span<const Rank> lv(local);
                        stat = rank_sum_statistic(lv.first(t_idx.size()), lv.subspan(t_idx.size()));
                    } else {
                        stat = global_rank_sum_statistic(all.first(t_idx.size()), all.subspan(t_idx.size()));
                    }
                }
                row.result = make_result(m, stat, nt, nc, options.alphas);
                if (row.result->small_sample) {
                    row.note = "warning: fewer than " + std::to_string(kSmallSampleWarning) +
                               " users, normal approximation is rough";
                }
            } catch (const Error& e) {
                row.note = e.what();
            }
            rows.push_back(std::move(row));
        }
    }
    report.stats.evaluation_seconds = seconds_since(start);
    report.stats.ranking_phases = static_cast<int>(global_sort_count() - sorts_before);

    for (auto& rows : per_experiment) {
        for (auto& r : rows) report.rows.push_back(std::move(r));
    }
    return report;
}

AnalysisReport analyze(const AnalysisRequest& request) {
    auto start = Clock::now();
    const auto metrics = load_metrics(request.metrics_path, request.metrics_header);
    const auto experiments = load_assignments(request.assignments_path, request.assignments_header);
    const double load_seconds = seconds_since(start);

    auto report = evaluate(metrics, experiments, request.options);
    report.stats.load_seconds = load_seconds;

    if (!request.output_path.empty()) {
        start = Clock::now();
        std::ofstream out(request.output_path);
        if (!out) throw Error("cannot write '" + request.output_path.string() + "'");
        write_report(out, report, request.output_format);
        if (!out) throw Error("write failed for '" + request.output_path.string() + "'");
        report.stats.write_seconds = seconds_since(start);
    }
    if (!request.timing_log_path.empty()) {
        std::ofstream log(request.timing_log_path);
        if (!log) throw Error("cannot write '" + request.timing_log_path.string() + "'");
        write_timing_log(log, report.stats);
    }
    return report;
}

namespace {

std::string decision_header(double alpha) { return "decision@" + format_alpha(alpha); }

std::vector<std::vector<std::string>> report_cells(const AnalysisReport& report) {
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : report.rows) {
        std::vector<std::string> c{r.experiment_id, std::string(to_string(r.method)),
                                   std::to_string(r.n_treatment), std::to_string(r.n_control)};
        if (r.result) {
            c.push_back(format_sig(r.result->statistic));
            c.push_back(format_sig(r.result->p_value));
            for (const auto& d : r.result->decisions) c.emplace_back(to_string(d.verdict));
        } else {
            c.insert(c.end(), 2 + report.alphas.size(), "");
        }
        c.push_back(r.note);
        cells.push_back(std::move(c));
    }
    return cells;
}

std::vector<std::string> report_header(const AnalysisReport& report) {
    std::vector<std::string> h{"experiment_id", "method", "n_t", "n_c", "statistic", "p_value"};
    for (double a : report.alphas) h.push_back(decision_header(a));
    h.emplace_back("note");
    return h;
}

} // namespace

void write_report(std::ostream& out, const AnalysisReport& report, OutputFormat format) {
    switch (format) {
    case OutputFormat::delimited: {
        const auto header = report_header(report);
        for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
        out << '\n';
        for (const auto& row : report_cells(report)) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(row[i]);
            out << '\n';
        }
        break;
    }
    case OutputFormat::table: {
        const auto header = report_header(report);
        const auto cells = report_cells(report);
        std::vector<std::size_t> width(header.size());
        for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
        for (const auto& row : cells) {
            for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
        }
        auto emit = [&](const std::vector<std::string>& row) {
            std::string line;
            for (std::size_t i = 0; i < row.size(); ++i) {
                line += row[i];
                if (i + 1 < row.size()) line += std::string(width[i] - row[i].size() + 2, ' ');
            }
            while (!line.empty() && line.back() == ' ') line.pop_back();
            out << line << '\n';
        };
        emit(header);
        for (const auto& row : cells) emit(row);
        break;
    }
    case OutputFormat::structured: {
        nlohmann::ordered_json doc;
        doc["alphas"] = report.alphas;
        doc["rows"] = nlohmann::ordered_json::array();
        for (const auto& r : report.rows) {
            nlohmann::ordered_json j;
            j["experiment_id"] = r.experiment_id;
            j["method"] = std::string(to_string(r.method));
            j["n_t"] = r.n_treatment;
            j["n_c"] = r.n_control;
            if (r.result) {
                j["statistic"] = std::stod(format_sig(r.result->statistic));
                j["p_value"] = std::stod(format_sig(r.result->p_value));
                nlohmann::ordered_json d;
                for (const auto& v : r.result->decisions) d[format_alpha(v.alpha)] = std::string(to_string(v.verdict));
                j["decisions"] = std::move(d);
            } else {
                j["statistic"] = nullptr;
                j["p_value"] = nullptr;
                j["decisions"] = nullptr;
            }
            j["note"] = r.note;
            doc["rows"].push_back(std::move(j));
        }
        out << doc.dump(2) << '\n';
        break;
    }
    }
}

void write_timing_log(std::ostream& out, const PipelineStats& stats) {
    out << "phase=load seconds=" << format_sig(stats.load_seconds) << '\n';
    out << "phase=ranking sorts=" << stats.ranking_phases << " seconds=" << format_sig(stats.ranking_seconds)
        << '\n';
    out << "phase=evaluation seconds=" << format_sig(stats.evaluation_seconds) << '\n';
    out << "phase=write seconds=" << format_sig(stats.write_seconds) << '\n';
}

} // namespace grs::io
