#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rangescore/errors.hpp"
#include "rangescore/scoring.hpp"

namespace rangescore {

/// Posture axes in chart order, clockwise from the top.
inline constexpr std::array<std::string_view, 5> posture_dimension_names{
    "comprehension", "defense", "implementation", "responsiveness", "coverage"};

struct posture_dims {
    double comprehension = 0.0;
    double defense = 0.0;
    double implementation = 0.0;
    double responsiveness = 0.0;
    double coverage = 0.0;

    std::array<double, 5> values() const { return {comprehension, defense, implementation, responsiveness, coverage}; }
    bool operator==(const posture_dims&) const = default;
};

struct team_posture {
    std::string team_id;
    posture_dims dims;
    double final_mean = 0.0;
    std::map<std::string, posture_dims> per_tactic;
    std::size_t n_attacks = 0;

    bool operator==(const team_posture&) const = default;
};

namespace detail {

struct posture_accumulator {
    double weight = 0.0, comprehension = 0.0, defense = 0.0, implementation = 0.0, responsiveness = 0.0;
    double covered = 0.0, final = 0.0;

    void add(const evaluation_result& r, double w) {
        weight += w;
        comprehension += w * r.intermediates.comprehension;
        defense += w * r.intermediates.defense;
        implementation += w * r.intermediates.implementation;
        responsiveness += w * r.intermediates.responsiveness;
        final += w * r.final;
        covered += r.blue_id ? w : 0.0;
    }

    posture_dims dims() const {
        if (weight <= 0.0) return {};
        return {comprehension / weight, defense / weight, implementation / weight, responsiveness / weight,
                covered / weight};
    }
};

} // namespace detail

/// Mean of each score over a team's attacks; unanswered attacks count as
/// zeros and lower coverage. Results flagged `excluded` are skipped.
inline team_posture aggregate_posture(std::string team_id, std::span<const evaluation_result> results,
                                      posture_weighting weighting = posture_weighting::uniform) {
    if (results.empty()) throw error("posture for team " + team_id + ": no evaluation results");
    detail::posture_accumulator all;
    std::map<std::string, detail::posture_accumulator> by_tactic;
    team_posture out;
    out.team_id = std::move(team_id);
    for (auto& r : results) {
        if (r.excluded) continue;
        double w = weighting == posture_weighting::uniform ? 1.0 : static_cast<double>(r.attack_size);
        all.add(r, w);
        by_tactic[r.tactic_id].add(r, w);
        ++out.n_attacks;
    }
    if (out.n_attacks == 0) throw error("posture for team " + out.team_id + ": every attack was excluded");
    out.dims = all.dims();
    out.final_mean = all.weight > 0.0 ? all.final / all.weight : 0.0;
    for (auto& [tactic, acc] : by_tactic) out.per_tactic[tactic] = acc.dims();
    return out;
}

// ---------------------------------------------------------------------------
// Radar chart

struct chart_options {
    int size = 480;
    int rings = 4;
    std::string title;  // defaults to the team id
    std::string fill = "#2e86c1";
    std::string stroke = "#1b4f72";
};

namespace detail {

inline std::string fmt(double v) {
    if (std::fabs(v) < 0.005) v = 0.0;
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

/// Static SVG 1.1 radar chart: one axis per posture dimension in
/// `posture_dimension_names` order, 0 at the centre and 1 on the rim.
inline std::string render_posture_svg(const team_posture& posture, const chart_options& options = {}) {
    auto values = posture.dims.values();
    const std::size_t n = values.size();
    const double size = options.size;
    const double cx = size / 2.0, cy = size / 2.0 + 10.0;
    const double radius = size * 0.32;

    auto point = [&](std::size_t axis, double fraction) {
        double angle = -std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * static_cast<double>(axis) / static_cast<double>(n);
        return std::pair{cx + fraction * radius * std::cos(angle), cy + fraction * radius * std::sin(angle)};
    };
    auto polygon_points = [&](auto fraction_of) {
        std::string pts;
        for (std::size_t i = 0; i < n; ++i) {
            auto [x, y] = point(i, fraction_of(i));
            if (!pts.empty()) pts += ' ';
            pts += detail::fmt(x) + "," + detail::fmt(y);
        }
        return pts;
    };

    std::string title = options.title.empty() ? "Cyber posture: " + posture.team_id : options.title;
    std::string svg;
    svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(options.size) +
           "\" height=\"" + std::to_string(options.size + 20) + "\" viewBox=\"0 0 " + std::to_string(options.size) +
           " " + std::to_string(options.size + 20) + "\">\n";
    svg += "  <title>" + detail::xml_escape(title) + "</title>\n";
    svg += "  <rect class=\"background\" x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    svg += "  <text class=\"title\" x=\"" + detail::fmt(cx) +
           "\" y=\"24\" text-anchor=\"middle\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"16\">" +
           detail::xml_escape(title) + "</text>\n";

    for (int ring = 1; ring <= options.rings; ++ring) {
        double f = static_cast<double>(ring) / options.rings;
        svg += "  <polygon class=\"grid\" points=\"" + polygon_points([&](std::size_t) { return f; }) +
               "\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto [x, y] = point(i, 1.0);
        svg += "  <line class=\"axis\" x1=\"" + detail::fmt(cx) + "\" y1=\"" + detail::fmt(cy) + "\" x2=\"" +
               detail::fmt(x) + "\" y2=\"" + detail::fmt(y) + "\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
    }
    svg += "  <polygon class=\"data\" points=\"" +
           polygon_points([&](std::size_t i) { return std::clamp(values[i], 0.0, 1.0); }) + "\" fill=\"" +
           options.fill + "\" fill-opacity=\"0.35\" stroke=\"" + options.stroke + "\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
        auto [x, y] = point(i, std::clamp(values[i], 0.0, 1.0));
        svg += "  <circle class=\"point\" cx=\"" + detail::fmt(x) + "\" cy=\"" + detail::fmt(y) + "\" r=\"3\" fill=\"" +
               options.stroke + "\"/>\n";
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto [x, y] = point(i, 1.16);
        const char* anchor = std::fabs(x - cx) < 1.0 ? "middle" : (x > cx ? "start" : "end");
        svg += "  <text class=\"label\" x=\"" + detail::fmt(x) + "\" y=\"" + detail::fmt(y + 4.0) +
               "\" text-anchor=\"" + anchor + "\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">" +
               std::string(posture_dimension_names[i]) + " " + detail::fmt(values[i]) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

// ---------------------------------------------------------------------------
// Evaluation document

inline constexpr int evaluation_format_version = 1;

struct unmatched_blue {
    std::string team_id;
    std::string report_id;

    bool operator==(const unmatched_blue&) const = default;
};

struct evaluation_document {
    int format_version = evaluation_format_version;
    std::string catalog_version;
    scoring_config config;
    std::vector<evaluation_result> results;
    std::vector<team_posture> postures;
    std::vector<unmatched_blue> unmatched_blues;
    std::vector<std::string> warnings;

    bool operator==(const evaluation_document&) const = default;
};

namespace detail {

inline nlohmann::json dims_json(const posture_dims& d) {
    return {{"comprehension", d.comprehension},
            {"defense", d.defense},
            {"implementation", d.implementation},
            {"responsiveness", d.responsiveness},
            {"coverage", d.coverage}};
}

inline posture_dims dims_from(const nlohmann::json& j) {
    return {j.at("comprehension").get<double>(), j.at("defense").get<double>(), j.at("implementation").get<double>(),
            j.at("responsiveness").get<double>(), j.at("coverage").get<double>()};
}

inline node_kind kind_from(const std::string& s) {
    for (auto k : {node_kind::tactic, node_kind::technique, node_kind::subtechnique, node_kind::mitigation,
                   node_kind::detection})
        if (to_string(k) == s) return k;
    throw error("unknown node kind " + s);
}

inline pairing_method pairing_from(const std::string& s) {
    for (auto m : {pairing_method::explicit_ref, pairing_method::heuristic, pairing_method::unpaired})
        if (to_string(m) == s) return m;
    throw error("unknown pairing method " + s);
}

inline nlohmann::json match_json(const match_result& m) {
    nlohmann::json j;
    j["tactic_credit"] = m.tactic_credit;
    j["attack_matches"] = nlohmann::json::array();
    for (auto& a : m.attack_matches)
        j["attack_matches"].push_back({{"ref_path", a.ref_path}, {"resp_path", a.resp_path}, {"credit", a.credit}});
    j["near_misses"] = nlohmann::json::array();
    for (auto& a : m.near_misses)
        j["near_misses"].push_back({{"resp_path", a.resp_path},
                                    {"ref_path", a.ref_path},
                                    {"resp_technique", a.resp_technique()},
                                    {"nearest_ref_technique", a.nearest_ref_technique()},
                                    {"distance", a.distance},
                                    {"credit", a.credit}});
    j["defense_matches"] = nlohmann::json::array();
    for (auto& a : m.defense_matches)
        j["defense_matches"].push_back({{"ref_path", a.ref_path},
                                        {"resp_path", a.resp_path},
                                        {"kind", std::string(to_string(a.kind))},
                                        {"desirable", a.desirable},
                                        {"credit", a.credit}});
    j["pruned_paths"] = m.pruned_paths;
    j["per_node_defense"] = nlohmann::json::array();
    for (auto& [path, c] : m.per_node_defense)
        j["per_node_defense"].push_back({{"ref_path", path}, {"mitigation", c.mitigation}, {"detection", c.detection}});
    j["false_positive_attack_nodes"] = m.false_positive_attack_nodes;
    return j;
}

inline match_result match_from(const nlohmann::json& j) {
    match_result m;
    m.tactic_credit = j.at("tactic_credit").get<int>();
    for (auto& a : j.at("attack_matches"))
        m.attack_matches.push_back({a.at("ref_path").get<node_path>(), a.at("resp_path").get<node_path>(),
                                    a.at("credit").get<double>()});
    for (auto& a : j.at("near_misses"))
        m.near_misses.push_back({a.at("resp_path").get<node_path>(), a.at("ref_path").get<node_path>(),
                                 a.at("distance").get<std::size_t>(), a.at("credit").get<double>()});
    for (auto& a : j.at("defense_matches"))
        m.defense_matches.push_back({a.at("ref_path").get<node_path>(), a.at("resp_path").get<node_path>(),
                                     kind_from(a.at("kind").get<std::string>()), a.at("desirable").get<bool>(),
                                     a.at("credit").get<double>()});
    m.pruned_paths = j.at("pruned_paths").get<std::vector<node_path>>();
    for (auto& a : j.at("per_node_defense"))
        m.per_node_defense[a.at("ref_path").get<node_path>()] = {a.at("mitigation").get<double>(),
                                                                 a.at("detection").get<double>()};
    m.false_positive_attack_nodes = j.at("false_positive_attack_nodes").get<std::size_t>();
    return m;
}

} // namespace detail

inline nlohmann::json to_json(const evaluation_result& r) {
    nlohmann::json j;
    j["red_id"] = r.red_id;
    j["blue_id"] = r.blue_id ? nlohmann::json(*r.blue_id) : nlohmann::json(nullptr);
    j["team_id"] = r.team_id;
    j["tactic_id"] = r.tactic_id;
    j["pairing_method"] = std::string(to_string(r.pairing));
    j["intermediates"] = {{"comprehension", r.intermediates.comprehension},
                          {"defense", r.intermediates.defense},
                          {"implementation", r.intermediates.implementation},
                          {"responsiveness", r.intermediates.responsiveness}};
    j["final"] = r.final;
    j["match"] = detail::match_json(r.match);
    j["anomalies"] = r.anomalies;
    j["attack_size"] = r.attack_size;
    j["excluded"] = r.excluded;
    return j;
}

inline evaluation_result evaluation_result_from_json(const nlohmann::json& j) {
    evaluation_result r;
    r.red_id = j.at("red_id").get<std::string>();
    if (!j.at("blue_id").is_null()) r.blue_id = j.at("blue_id").get<std::string>();
    r.team_id = j.at("team_id").get<std::string>();
    r.tactic_id = j.at("tactic_id").get<std::string>();
    r.pairing = detail::pairing_from(j.at("pairing_method").get<std::string>());
    auto& s = j.at("intermediates");
    r.intermediates = {s.at("comprehension").get<double>(), s.at("defense").get<double>(),
                       s.at("implementation").get<double>(), s.at("responsiveness").get<double>()};
    r.final = j.at("final").get<double>();
    r.match = detail::match_from(j.at("match"));
    r.anomalies = j.at("anomalies").get<std::vector<std::string>>();
    r.attack_size = j.at("attack_size").get<std::size_t>();
    r.excluded = j.at("excluded").get<bool>();
    return r;
}

inline nlohmann::json to_json(const team_posture& p) {
    nlohmann::json j;
    j["team_id"] = p.team_id;
    j["dims"] = detail::dims_json(p.dims);
    j["final_mean"] = p.final_mean;
    j["per_tactic"] = nlohmann::json::object();
    for (auto& [tactic, dims] : p.per_tactic) j["per_tactic"][tactic] = detail::dims_json(dims);
    j["n_attacks"] = p.n_attacks;
    return j;
}

inline team_posture team_posture_from_json(const nlohmann::json& j) {
    team_posture p;
    p.team_id = j.at("team_id").get<std::string>();
    p.dims = detail::dims_from(j.at("dims"));
    p.final_mean = j.at("final_mean").get<double>();
    for (auto& [tactic, dims] : j.at("per_tactic").items()) p.per_tactic[tactic] = detail::dims_from(dims);
    p.n_attacks = j.at("n_attacks").get<std::size_t>();
    return p;
}

/// Serializes the whole evaluation. Keys are emitted in sorted order so
/// identical inputs give byte-identical documents.
inline std::string export_results(const evaluation_document& doc) {
    nlohmann::json j;
    j["format_version"] = doc.format_version;
    j["catalog_version"] = doc.catalog_version;
    j["config"] = to_json(doc.config);
    j["pairs"] = nlohmann::json::array();
    for (auto& r : doc.results) j["pairs"].push_back(to_json(r));
    j["postures"] = nlohmann::json::array();
    for (auto& p : doc.postures) j["postures"].push_back(to_json(p));
    j["unmatched_blues"] = nlohmann::json::array();
    for (auto& u : doc.unmatched_blues) j["unmatched_blues"].push_back({{"team_id", u.team_id}, {"report_id", u.report_id}});
    j["warnings"] = doc.warnings;
    return j.dump(2) + "\n";
}

inline evaluation_document parse_evaluation_document(std::string_view text) {
    evaluation_document doc;
    try {
        auto j = nlohmann::json::parse(text);
        doc.format_version = j.at("format_version").get<int>();
        if (doc.format_version != evaluation_format_version)
            throw error("unsupported evaluation format_version " + std::to_string(doc.format_version));
        doc.catalog_version = j.at("catalog_version").get<std::string>();
        doc.config = scoring_config_from_json(j.at("config"));
        for (auto& r : j.at("pairs")) doc.results.push_back(evaluation_result_from_json(r));
        for (auto& p : j.at("postures")) doc.postures.push_back(team_posture_from_json(p));
        for (auto& u : j.at("unmatched_blues"))
            doc.unmatched_blues.push_back({u.at("team_id").get<std::string>(), u.at("report_id").get<std::string>()});
        doc.warnings = j.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw error(std::string("malformed evaluation document: ") + e.what());
    }
    return doc;
}

/// Re-aggregates postures, one per team, from the per-pair results.
inline std::vector<team_posture> aggregate_all(const std::vector<evaluation_result>& results,
                                               posture_weighting weighting) {
    std::map<std::string, std::vector<evaluation_result>> by_team;
    for (auto& r : results) by_team[r.team_id].push_back(r);
    std::vector<team_posture> out;
    for (auto& [team, rs] : by_team) {
        bool any = std::any_of(rs.begin(), rs.end(), [](const evaluation_result& r) { return !r.excluded; });
        if (any) out.push_back(aggregate_posture(team, rs, weighting));
    }
    return out;
}

} // namespace rangescore
