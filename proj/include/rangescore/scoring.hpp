#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "rangescore/adtree.hpp"
#include "rangescore/capec.hpp"
#include "rangescore/catalog.hpp"
#include "rangescore/errors.hpp"
#include "rangescore/matching.hpp"
#include "rangescore/reports.hpp"

namespace rangescore {

struct intermediate_scores {
    double comprehension = 0.0;
    double defense = 0.0;
    double implementation = 0.0;
    double responsiveness = 0.0;

    bool operator==(const intermediate_scores&) const = default;
};

/// Relative importance of each intermediate score in the final score.
struct score_weights {
    double comprehension = 1.0;
    double defense = 1.0;
    double implementation = 1.0;
    double responsiveness = 1.0;

    bool operator==(const score_weights&) const = default;
};

enum class posture_weighting { uniform, attack_size };

struct scoring_config {
    double gamma = 0.5;
    double valid_factor = 0.75;
    double false_positive_penalty = 0.0;
    std::chrono::seconds t_max{3600};
    std::chrono::seconds skew_tolerance{60};
    std::chrono::seconds pairing_window{7200};
    score_weights weights;
    bool include_failed_attacks = true;
    posture_weighting posture = posture_weighting::uniform;

    match_params matching() const { return {gamma, valid_factor, false_positive_penalty}; }
    bool operator==(const scoring_config&) const = default;
};

/// Checks parameter ranges; throws config_error.
inline void validate(const scoring_config& c) {
    if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw config_error("gamma must lie in (0, 1)");
    if (!(c.valid_factor >= 0.0 && c.valid_factor <= 1.0)) throw config_error("valid_factor must lie in [0, 1]");
    if (!(c.false_positive_penalty >= 0.0)) throw config_error("false_positive_penalty must be non-negative");
    if (c.t_max.count() <= 0) throw config_error("t_max_seconds must be positive");
    if (c.skew_tolerance.count() < 0) throw config_error("skew_tolerance_seconds must be non-negative");
    if (c.pairing_window.count() < 0) throw config_error("pairing_window_seconds must be non-negative");
    auto& w = c.weights;
    if (w.comprehension < 0 || w.defense < 0 || w.implementation < 0 || w.responsiveness < 0)
        throw config_error("score weights must be non-negative");
    if (w.comprehension + w.defense + w.implementation + w.responsiveness <= 0)
        throw config_error("score weights must not all be zero");
}

inline nlohmann::json to_json(const scoring_config& c) {
    return {
        {"gamma", c.gamma},
        {"valid_factor", c.valid_factor},
        {"false_positive_penalty", c.false_positive_penalty},
        {"t_max_seconds", c.t_max.count()},
        {"skew_tolerance_seconds", c.skew_tolerance.count()},
        {"pairing_window_seconds", c.pairing_window.count()},
        {"score_weights",
         {{"comprehension", c.weights.comprehension},
          {"defense", c.weights.defense},
          {"implementation", c.weights.implementation},
          {"responsiveness", c.weights.responsiveness}}},
        {"include_failed_attacks", c.include_failed_attacks},
        {"posture_weighting", c.posture == posture_weighting::uniform ? "uniform" : "attack_size"},
    };
}

/// Reads the scoring keys of a configuration document; unknown keys other
/// than `paths` and `roster` are rejected.
inline scoring_config scoring_config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw config_error("configuration must be a JSON object");
    scoring_config c;
    static const std::set<std::string> known{"gamma", "valid_factor", "false_positive_penalty", "t_max_seconds",
                                             "skew_tolerance_seconds", "pairing_window_seconds", "score_weights",
                                             "include_failed_attacks", "posture_weighting", "paths", "roster"};
    for (auto& [k, v] : doc.items())
        if (!known.count(k)) throw config_error("unknown configuration key \"" + k + "\"");
    auto number = [&](const nlohmann::json& obj, const char* key, double fallback) {
        if (!obj.contains(key)) return fallback;
        if (!obj[key].is_number()) throw config_error(std::string(key) + " must be a number");
        return obj[key].get<double>();
    };
    auto secs = [&](const char* key, std::chrono::seconds fallback) {
        if (!doc.contains(key)) return fallback;
        if (!doc[key].is_number_integer()) throw config_error(std::string(key) + " must be an integer");
        return std::chrono::seconds{doc[key].get<long long>()};
    };
    c.gamma = number(doc, "gamma", c.gamma);
    c.valid_factor = number(doc, "valid_factor", c.valid_factor);
    c.false_positive_penalty = number(doc, "false_positive_penalty", c.false_positive_penalty);
    c.t_max = secs("t_max_seconds", c.t_max);
    c.skew_tolerance = secs("skew_tolerance_seconds", c.skew_tolerance);
    c.pairing_window = secs("pairing_window_seconds", c.pairing_window);
    if (doc.contains("score_weights")) {
        auto& w = doc["score_weights"];
        if (!w.is_object()) throw config_error("score_weights must be an object");
        c.weights.comprehension = number(w, "comprehension", 1.0);
        c.weights.defense = number(w, "defense", 1.0);
        c.weights.implementation = number(w, "implementation", 1.0);
        c.weights.responsiveness = number(w, "responsiveness", 1.0);
    }
    if (doc.contains("include_failed_attacks")) {
        if (!doc["include_failed_attacks"].is_boolean()) throw config_error("include_failed_attacks must be a boolean");
        c.include_failed_attacks = doc["include_failed_attacks"].get<bool>();
    }
    if (doc.contains("posture_weighting")) {
        auto mode = doc["posture_weighting"].is_string() ? doc["posture_weighting"].get<std::string>() : "";
        if (mode == "uniform") c.posture = posture_weighting::uniform;
        else if (mode == "attack_size") c.posture = posture_weighting::attack_size;
        else throw config_error("posture_weighting must be \"uniform\" or \"attack_size\"");
    }
    validate(c);
    return c;
}

// ---------------------------------------------------------------------------
// Intermediate scores

/// Weighted share of the reference attack skeleton the response identified.
/// Near-misses contribute their partial credit; the tactic root carries the
/// strategy component.
inline double comprehension_score(const report_adtree& reference, const match_result& result,
                                  double false_positive_penalty = 0.0) {
    double total = 0.0;
    std::size_t attack_nodes = 0;
    reference.visit_bfs([&](const node& n, const node_path&) {
        if (is_attack(n.kind)) {
            total += n.weight;
            ++attack_nodes;
        }
    });
    if (total <= 0.0) return 0.0;

    double earned = reference.root.weight * result.tactic_credit;
    for (auto& m : result.attack_matches)
        if (auto n = reference.find(m.ref_path)) earned += n->weight * m.credit;
    for (auto& m : result.near_misses)
        if (auto n = reference.find(m.ref_path)) earned += n->weight * m.credit;

    double score = earned / total;
    if (false_positive_penalty > 0.0 && attack_nodes > 0)
        score -= false_positive_penalty * static_cast<double>(result.false_positive_attack_nodes) /
                 static_cast<double>(attack_nodes);
    return std::clamp(score, 0.0, 1.0);
}

/// Weighted mean, over reference attack nodes that own defense leaves, of
/// the mitigation/detection credit mix at that node.
inline double defense_score(const report_adtree& reference, const match_result& result,
                            const category_weights& weights) {
    double numerator = 0.0;
    double denominator = 0.0;
    reference.visit_bfs([&](const node& n, const node_path& path) {
        if (!is_attack(n.kind)) return;
        bool has_mit = false, has_det = false;
        for (auto& c : n.children) {
            has_mit |= c.kind == node_kind::mitigation;
            has_det |= c.kind == node_kind::detection;
        }
        if (!has_mit && !has_det) return;
        double wm = has_mit ? weights.mitigations : 0.0;
        double wd = has_det ? weights.detections : 0.0;
        if (wm + wd <= 0.0) return;
        defense_credit credit;
        if (auto it = result.per_node_defense.find(path); it != result.per_node_defense.end()) credit = it->second;
        double node_credit = (wm * credit.mitigation + wd * credit.detection) / (wm + wd);
        numerator += n.weight * node_credit;
        denominator += n.weight;
    });
    return denominator > 0.0 ? numerator / denominator : 0.0;
}

inline double defense_score(const report_adtree& reference, const match_result& result, const field_weights& weights) {
    return defense_score(reference, result, resolve_weights(weights));
}

/// Fraction of correctly identified mitigations that the team also applied.
inline double implementation_score(const match_result& result, const blue_report& blue) {
    std::set<std::string> identified;
    for (auto& m : result.defense_matches)
        if (m.kind == node_kind::mitigation) identified.insert(m.resp_path.back());
    if (identified.empty()) return 0.0;
    std::size_t applied = 0;
    for (auto& claim : blue.mitigations)
        if (claim.applied && identified.count(claim.mitigation_id)) ++applied;
    return static_cast<double>(applied) / static_cast<double>(identified.size());
}

struct responsiveness_outcome {
    double score = 0.0;
    bool early_anomaly = false;  // blue started before red beyond the skew tolerance
};

/// Linear decay from 1 at zero delay to 0 at `t_max`.
inline responsiveness_outcome responsiveness_score(timestamp red_start, std::optional<timestamp> blue_start,
                                                   std::chrono::seconds t_max, std::chrono::seconds skew_tolerance) {
    if (t_max.count() <= 0) throw config_error("t_max must be positive");
    if (!blue_start) return {};
    auto delta = *blue_start - red_start;
    if (delta < -std::chrono::duration_cast<std::chrono::milliseconds>(skew_tolerance)) return {0.0, true};
    double late = std::max(std::chrono::duration<double>(delta).count(), 0.0);
    double score = 1.0 - late / std::chrono::duration<double>(t_max).count();
    return {std::clamp(score, 0.0, 1.0), false};
}

inline double final_score(const intermediate_scores& s, const score_weights& v) {
    double total = v.comprehension + v.defense + v.implementation + v.responsiveness;
    if (v.comprehension < 0 || v.defense < 0 || v.implementation < 0 || v.responsiveness < 0)
        throw config_error("score weights must be non-negative");
    if (total <= 0.0) throw config_error("score weights must not all be zero");
    return (v.comprehension * s.comprehension + v.defense * s.defense + v.implementation * s.implementation +
            v.responsiveness * s.responsiveness) /
           total;
}

// ---------------------------------------------------------------------------
// Pipeline

struct evaluation_result {
    std::string red_id;
    std::optional<std::string> blue_id;
    std::string team_id;
    std::string tactic_id;
    pairing_method pairing = pairing_method::unpaired;
    intermediate_scores intermediates;
    double final = 0.0;
    match_result match;
    std::vector<std::string> anomalies;
    std::size_t attack_size = 0;  // reference attack nodes, tactic included
    bool excluded = false;        // failed attack left out by configuration

    bool operator==(const evaluation_result&) const = default;
};

/// Build, weight, match, prune, score. Catalog and CAPEC graph are only read.
inline evaluation_result evaluate_pair(const report_pair& pair, const attack_catalog& catalog,
                                       const capec_graph& capec, const scoring_config& config,
                                       std::string team_id = {}) {
    evaluation_result out;
    out.red_id = pair.red.report_id;
    out.team_id = std::move(team_id);
    out.tactic_id = pair.red.tactic_id;
    out.pairing = pair.method;
    if (pair.blue) out.blue_id = pair.blue->report_id;

    auto weights = resolve_weights(pair.red.weights);
    auto reference = assign_reference_weights(build_reference_tree(pair.red, catalog), weights);
    reference.visit_bfs([&](const node& n, const node_path&) { out.attack_size += is_attack(n.kind) ? 1 : 0; });

    if (!config.include_failed_attacks && pair.red.outcome == attack_outcome::failure) {
        out.excluded = true;
        out.anomalies.push_back("excluded: failed attack");
        return out;
    }
    if (!pair.blue) {
        out.anomalies.push_back("no response");
        out.final = final_score(out.intermediates, config.weights);
        return out;
    }

    auto& blue = *pair.blue;
    auto response = build_response_tree(blue, catalog);
    out.match = match_trees(reference, response, capec, config.matching());

    out.intermediates.comprehension = comprehension_score(reference, out.match, config.false_positive_penalty);
    out.intermediates.defense = defense_score(reference, out.match, weights);
    out.intermediates.implementation = implementation_score(out.match, blue);
    auto resp = responsiveness_score(pair.red.start_time, blue.detection_start_time, config.t_max,
                                     config.skew_tolerance);
    out.intermediates.responsiveness = resp.score;
    out.final = final_score(out.intermediates, config.weights);

    if (resp.early_anomaly)
        out.anomalies.push_back("detection starts before the attack beyond the skew tolerance");
    if (blue.target != pair.red.target)
        out.anomalies.push_back("target mismatch: red " + pair.red.target + ", blue " + blue.target);
    return out;
}

} // namespace rangescore
