#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "grs/format.hpp"
#include "grs/simlab.hpp"

namespace grs::sim {

namespace {

constexpr std::string_view kMethodTitles[] = {"t-test", "rank-sum test", "global-rank-sum test"};

std::string row_label(const StudyReport& r, RowLabel label) {
    if (label == RowLabel::lift_ratio) return format_sig(r.config.lift_ratio * 100.0) + "%";
    return "(" + format_sig(r.config.mu) + "," + format_sig(r.config.sigma) + ")";
}

nlohmann::ordered_json config_json(const SimulationConfig& c) {
    nlohmann::ordered_json j;
    j["mu"] = c.mu;
    j["sigma"] = c.sigma;
    j["population_size"] = c.population_size;
    j["n_treatment"] = c.n_treatment;
    j["n_control"] = c.n_control;
    j["replications"] = c.replications;
    j["lift_ratio"] = c.lift_ratio;
    j["alphas"] = c.alphas;
    j["seed"] = c.seed;
    j["ranking_base"] = std::string(to_string(c.ranking_base));
    return j;
}

} // namespace

void write_study_table(std::ostream& out, std::span<const StudyReport> reports, RowLabel label) {
    if (reports.empty()) return;
    const auto& alphas = reports.front().config.alphas;
    std::size_t cell = 10;
    for (auto title : kMethodTitles) cell = std::max(cell, (title.size() + alphas.size()) / alphas.size());
    const auto w = static_cast<int>(cell);
    const auto group_width = static_cast<int>(cell * alphas.size());
    const std::string first = label == RowLabel::lift_ratio ? "lift ratio" : "(mu,sigma)";
    std::size_t label_width = first.size();
    for (const auto& r : reports) label_width = std::max(label_width, row_label(r, label).size());
    const auto lw = static_cast<int>(label_width + 2);

    auto emit = [&](const std::ostringstream& line) {
        auto text = line.str();
        text.erase(text.find_last_not_of(' ') + 1);
        out << text << '\n';
    };
    std::ostringstream line;
    line << std::left << std::setw(lw) << first;
    for (auto title : kMethodTitles) line << "| " << std::setw(group_width) << title;
    emit(line);
    line.str("");
    line << std::setw(lw) << "";
    for (std::size_t k = 0; k < std::size(kMethodTitles); ++k) {
        line << "| ";
        for (double a : alphas) line << std::setw(w) << ("a=" + format_alpha(a));
    }
    emit(line);
    for (const auto& r : reports) {
        line.str("");
        line << std::setw(lw) << row_label(r, label);
        for (std::size_t k = 0; k < std::size(kStudyMethods); ++k) {
            line << "| ";
            for (std::size_t a = 0; a < r.config.alphas.size(); ++a) {
                line << std::setw(w) << format_percent(r.rejection_rate(kStudyMethods[k], a));
            }
        }
        emit(line);
    }
}

void write_study_delimited(std::ostream& out, std::span<const StudyReport> reports) {
    out << "mu,sigma,lift_ratio,method,alpha,rejections,replications,rejection_rate_pct\n";
    for (const auto& r : reports) {
        for (std::size_t k = 0; k < std::size(kStudyMethods); ++k) {
            for (std::size_t a = 0; a < r.config.alphas.size(); ++a) {
                out << format_sig(r.config.mu) << ',' << format_sig(r.config.sigma) << ','
                    << format_sig(r.config.lift_ratio) << ',' << to_string(kStudyMethods[k]) << ','
                    << format_alpha(r.config.alphas[a]) << ',' << r.rejections[k][a] << ','
                    << r.config.replications << ','
                    << format_sig(100.0 * r.rejection_rate(kStudyMethods[k], a), 4) << '\n';
            }
        }
    }
}

void write_study_structured(std::ostream& out, std::span<const StudyReport> reports, bool include_timings) {
    nlohmann::ordered_json doc;
    doc["studies"] = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        nlohmann::ordered_json s;
        s["config"] = config_json(r.config);
        s["replications"] = r.config.replications;
        s["ranking_sorts"] = r.ranking_sorts;
        s["results"] = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < std::size(kStudyMethods); ++k) {
            for (std::size_t a = 0; a < r.config.alphas.size(); ++a) {
                nlohmann::ordered_json cell;
                cell["method"] = std::string(to_string(kStudyMethods[k]));
                cell["alpha"] = r.config.alphas[a];
                cell["rejections"] = r.rejections[k][a];
                cell["rejection_rate"] = r.rejection_rate(kStudyMethods[k], a);
                s["results"].push_back(std::move(cell));
            }
        }
        if (include_timings) {
            s["timings"] = {{"population_seconds", r.timings.population_seconds},
                            {"ranking_seconds", r.timings.ranking_seconds},
                            {"replication_seconds", r.timings.replication_seconds}};
        }
        doc["studies"].push_back(std::move(s));
    }
    out << doc.dump(2) << '\n';
}

void write_timing_table(std::ostream& out, std::span<const TimingRow> rows) {
    out << std::left << std::setw(14) << "experiments" << std::setw(22) << "rank-sum seconds"
        << std::setw(29) << "global-rank-sum seconds" << "diff ratio\n";
    for (const auto& r : rows) {
        out << std::setw(14) << r.experiments << std::setw(22) << format_sig(r.traditional_seconds, 4)
            << std::setw(29) << format_sig(r.global_seconds, 4) << format_percent(r.diff_ratio()) << '\n';
    }
    out << std::right;
}

void write_timing_delimited(std::ostream& out, std::span<const TimingRow> rows) {
    out << "experiments,traditional_seconds,global_seconds,diff_ratio_pct\n";
    for (const auto& r : rows) {
        out << r.experiments << ',' << format_sig(r.traditional_seconds) << ',' << format_sig(r.global_seconds)
            << ',' << format_sig(100.0 * r.diff_ratio(), 4) << '\n';
    }
}

void write_timing_structured(std::ostream& out, std::span<const TimingRow> rows) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        doc.push_back({{"experiments", r.experiments},
                       {"traditional_seconds", r.traditional_seconds},
                       {"global_seconds", r.global_seconds},
                       {"diff_ratio", r.diff_ratio()}});
    }
    out << doc.dump(2) << '\n';
}

void load_simulation_config(const std::string& path, SimulationConfig& config) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("config file '" + path + "': " + e.what());
    }
    if (!j.is_object()) throw Error("config file '" + path + "' must hold a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "mu") config.mu = value.get<double>();
            else if (key == "sigma") config.sigma = value.get<double>();
            else if (key == "population_size") config.population_size = value.get<std::int64_t>();
            else if (key == "n_treatment") config.n_treatment = value.get<std::int64_t>();
            else if (key == "n_control") config.n_control = value.get<std::int64_t>();
            else if (key == "replications") config.replications = value.get<std::int64_t>();
            else if (key == "lift_ratio") config.lift_ratio = value.get<double>();
            else if (key == "alphas") config.alphas = value.get<std::vector<double>>();
            else if (key == "seed") config.seed = value.get<std::uint64_t>();
            else if (key == "ranking_base") config.ranking_base = parse_ranking_base(value.get<std::string>());
            else throw Error("config file '" + path + "': unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error("config file '" + path + "': " + e.what());
    }
}

} // namespace grs::sim
