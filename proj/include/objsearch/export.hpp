#ifndef OBJSEARCH_EXPORT_HPP
#define OBJSEARCH_EXPORT_HPP

#include <array>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "objsearch/env.hpp"
#include "objsearch/error.hpp"
#include "objsearch/eval.hpp"
#include "objsearch/scene.hpp"
#include "objsearch/trainer.hpp"

namespace objsearch {

inline constexpr std::string_view kReportHeader = "episode,object,start_col,start_row,start_heading,start_tilt,outcome,length";
inline constexpr std::string_view kSummaryHeader = "object,episodes,successes,success_rate,avg_length";
inline constexpr std::string_view kCurveHeader = "episode,object,scene,length,total_reward,mean_entropy";
inline constexpr std::string_view kEntropyHeader = "col,row,entropy";

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : "-"; }

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& body) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    body(out);
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

} // namespace detail

/// One row per episode.
inline void write_report_csv(std::ostream& out, const EvalReport& report) {
    out << kReportHeader << '\n';
    for (const auto& e : report.episodes)
        out << e.episode << ',' << e.object << ',' << e.start.cell.col << ',' << e.start.cell.row << ','
            << e.start.heading << ',' << e.start.tilt << ',' << outcome_name(e.outcome) << ',' << e.length << '\n';
}

/// Parses the output of write_report_csv and re-aggregates.
inline EvalReport read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) throw ParseError("report CSV: missing or wrong header");
    EvalReport report;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 8) throw ParseError("report CSV line " + std::to_string(lineno) + ": expected 8 fields");
        try {
            EpisodeSummary e;
            e.episode = std::stoull(f[0]);
            e.object = f[1];
            e.start = {{std::stoi(f[2]), std::stoi(f[3])}, std::stoi(f[4]), std::stoi(f[5])};
            if (f[6] == "Success")
                e.outcome = Outcome::Success;
            else if (f[6] == "StepLimit")
                e.outcome = Outcome::StepLimit;
            else
                throw ParseError("unknown outcome '" + f[6] + "'");
            e.length = std::stoull(f[7]);
            report.episodes.push_back(e);
        } catch (const std::logic_error&) {
            throw ParseError("report CSV line " + std::to_string(lineno) + ": bad number");
        }
    }
    report.aggregate();
    return report;
}

/// Per-object rows followed by an "all" row; an absent average is "-".
inline void write_summary_csv(std::ostream& out, const EvalReport& report) {
    out << kSummaryHeader << '\n';
    std::size_t successes = 0;
    for (const auto& b : report.per_object) {
        out << b.object << ',' << b.episodes << ',' << b.successes << ',' << detail::format_double(b.success_rate) << ','
            << detail::format_optional(b.avg_length) << '\n';
        successes += b.successes;
    }
    out << "all," << report.episodes.size() << ',' << successes << ',' << detail::format_double(report.success_rate)
        << ',' << detail::format_optional(report.avg_length) << '\n';
}

inline void write_curve_csv(std::ostream& out, const std::vector<EpisodeRecord>& curve) {
    out << kCurveHeader << '\n';
    for (const auto& r : curve)
        out << r.episode << ',' << r.object << ',' << r.scene << ',' << r.length << ','
            << detail::format_double(r.total_reward) << ',' << detail::format_double(r.mean_entropy) << '\n';
}

/// Long format, one row per cell; blocked cells carry "-".
inline void write_entropy_csv(std::ostream& out, const EntropyMap& map) {
    out << kEntropyHeader << '\n';
    for (int row = 0; row < map.height; ++row)
        for (int col = 0; col < map.width; ++col)
            out << col << ',' << row << ',' << detail::format_optional(map.at(col, row)) << '\n';
}

/// Cells visited by a trace: the start, then the state after each action.
inline std::vector<Cell> trace_path(const EpisodeTrace& trace) {
    std::vector<Cell> path{trace.start.cell};
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
        path.push_back(i + 1 < trace.steps.size() ? trace.steps[i + 1].state.cell : trace.final_state.cell);
    return path;
}

/// Top-down view: grid, blocked cells, goal cells of every object (one
/// colour per object) and, when the trace has steps, the path polyline.
inline void write_trajectory_svg(std::ostream& out, const Scene& scene, const EpisodeTrace* trace) {
    static constexpr std::array<std::string_view, 6> palette{"#d62728", "#1f77b4", "#2ca02c",
                                                             "#9467bd", "#ff7f0e", "#8c564b"};
    constexpr int cell = 40;
    const int w = scene.grid().width;
    const int h = scene.grid().height;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * cell << "\" height=\"" << h * cell
        << "\" viewBox=\"0 0 " << w * cell << ' ' << h * cell << "\">\n";
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            out << "  <rect class=\"cell\" x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell
                << "\" height=\"" << cell << "\" fill=\"" << (scene.blocked({c, r}) ? "#555555" : "#ffffff")
                << "\" stroke=\"#999999\"/>\n";
    const auto n_obj = scene.objects().size();
    for (std::size_t k = 0; k < n_obj; ++k) {
        std::set<std::pair<int, int>> cells;
        for (const auto& g : scene.goal_states(k)) cells.insert({g.cell.col, g.cell.row});
        const double offset = (static_cast<double>(k) + 1.0) / (static_cast<double>(n_obj) + 1.0);
        for (const auto& [c, r] : cells)
            out << "  <circle class=\"goal\" data-object=\"" << scene.objects()[k].id << "\" cx=\""
                << c * cell + offset * cell << "\" cy=\"" << r * cell + cell / 2 << "\" r=\"5\" fill=\""
                << palette[k % palette.size()] << "\"/>\n";
    }
    if (trace && !trace->steps.empty()) {
        out << "  <polyline class=\"path\" fill=\"none\" stroke=\"#000000\" stroke-width=\"2\" points=\"";
        const auto path = trace_path(*trace);
        for (std::size_t i = 0; i < path.size(); ++i)
            out << (i ? " " : "") << path[i].col * cell + cell / 2 << ',' << path[i].row * cell + cell / 2;
        out << "\"/>\n";
    }
    out << "</svg>\n";
}

inline void save_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    detail::write_file(path, [&](std::ostream& o) { write_report_csv(o, report); });
}

inline void save_summary_csv(const std::filesystem::path& path, const EvalReport& report) {
    detail::write_file(path, [&](std::ostream& o) { write_summary_csv(o, report); });
}

inline void save_curve_csv(const std::filesystem::path& path, const std::vector<EpisodeRecord>& curve) {
    detail::write_file(path, [&](std::ostream& o) { write_curve_csv(o, curve); });
}

inline void save_entropy_csv(const std::filesystem::path& path, const EntropyMap& map) {
    detail::write_file(path, [&](std::ostream& o) { write_entropy_csv(o, map); });
}

inline void save_trajectory_svg(const std::filesystem::path& path, const Scene& scene, const EpisodeTrace* trace) {
    detail::write_file(path, [&](std::ostream& o) { write_trajectory_svg(o, scene, trace); });
}

inline void save_trace_csv(const std::filesystem::path& path, const EpisodeTrace& trace) {
    detail::write_file(path, [&](std::ostream& o) { write_trace_csv(o, trace); });
}

} // namespace objsearch

#endif // OBJSEARCH_EXPORT_HPP
