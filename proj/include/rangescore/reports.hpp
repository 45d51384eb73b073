#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "rangescore/catalog.hpp"
#include "rangescore/errors.hpp"
#include "rangescore/timestamp.hpp"

namespace rangescore {

enum class attack_outcome { success, partial, failure };

inline std::string_view to_string(attack_outcome o) {
    switch (o) {
    case attack_outcome::success: return "success";
    case attack_outcome::partial: return "partial";
    case attack_outcome::failure: return "failure";
    }
    return "success";
}

/// Optional White-Team weights, each in [0,1].
struct field_weights {
    std::optional<double> tactic;
    std::optional<double> techniques;
    std::optional<double> subtechniques;
    std::optional<double> desirable_mitigations;
    std::optional<double> desirable_detection;

    bool empty() const noexcept {
        return !tactic && !techniques && !subtechniques && !desirable_mitigations && !desirable_detection;
    }
    bool operator==(const field_weights&) const = default;
};

struct red_report {
    std::string report_id;
    std::string objective;
    std::string tactic_id;
    std::set<std::string> technique_ids;
    std::set<std::string> subtechnique_ids;
    std::string target;
    timestamp start_time{};
    attack_outcome outcome = attack_outcome::success;
    std::set<std::string> desirable_mitigation_ids;
    std::set<std::string> desirable_detection_ids;  // resolved component ids
    field_weights weights;

    bool operator==(const red_report&) const = default;
};

struct mitigation_claim {
    std::string mitigation_id;
    bool applied = false;

    bool operator==(const mitigation_claim&) const = default;
};

struct blue_report {
    std::string report_id;
    std::optional<std::string> attack_ref;
    std::optional<std::string> presumed_tactic_id;
    std::set<std::string> presumed_technique_ids;
    std::set<std::string> presumed_subtechnique_ids;
    std::vector<mitigation_claim> mitigations;
    std::set<std::string> detection_types;  // resolved component ids
    std::string target;
    timestamp detection_start_time{};

    bool operator==(const blue_report&) const = default;
};

/// White-Team additions for one red report, merged at parse time.
struct red_overlay {
    std::string report_id;
    std::set<std::string> desirable_mitigation_ids;
    std::set<std::string> desirable_detection_ids;
    field_weights weights;
};

using overlay_map = std::map<std::string, red_overlay>;

namespace detail {

class report_reader {
public:
    report_reader(const nlohmann::json& doc, std::string kind) : doc_(doc), kind_(std::move(kind)) {
        if (!doc_.is_object()) fail("", kind_ + " document must be a JSON object");
        if (auto it = doc_.find("report_id"); it != doc_.end() && it->is_string())
            id_ = it->get<std::string>();
    }

    [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
        throw validation_error(id_, field, msg);
    }

    const std::string& id() const noexcept { return id_; }

    void allow_only(std::initializer_list<std::string_view> keys) const {
        for (auto& [k, v] : doc_.items())
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) fail(k, "unexpected field");
    }

    bool has(const char* key) const { return doc_.contains(key) && !doc_[key].is_null(); }

    std::string string(const char* key, bool required = true) const {
        if (!has(key)) {
            if (required) fail(key, "missing required field");
            return {};
        }
        if (!doc_[key].is_string()) fail(key, "must be a string");
        return doc_[key].get<std::string>();
    }

    std::vector<std::string> strings(const char* key) const {
        std::vector<std::string> out;
        if (!has(key)) return out;
        if (!doc_[key].is_array()) fail(key, "must be a list of strings");
        for (auto& v : doc_[key]) {
            if (!v.is_string()) fail(key, "must be a list of strings");
            out.push_back(v.get<std::string>());
        }
        return out;
    }

    timestamp time(const char* key) const {
        auto text = string(key);
        try {
            return parse_rfc3339(text);
        } catch (const std::invalid_argument& e) {
            fail(key, std::string("invalid RFC 3339 timestamp: ") + e.what());
        }
    }

    field_weights weights(const char* key) const {
        field_weights w;
        if (!has(key)) return w;
        auto& obj = doc_[key];
        if (!obj.is_object()) fail(key, "must be an object");
        auto read = [&](const char* name, std::optional<double>& slot) {
            if (!obj.contains(name) || obj[name].is_null()) return;
            std::string field = std::string(key) + "." + name;
            if (!obj[name].is_number()) fail(field, "weight must be a number");
            double v = obj[name].get<double>();
            if (!(v >= 0.0 && v <= 1.0)) fail(field, "weight outside [0,1]");
            slot = v;
        };
        for (auto& [k, v] : obj.items()) {
            static const std::set<std::string> known{"tactic", "techniques", "subtechniques",
                                                     "desirable_mitigations", "desirable_detection"};
            if (!known.count(k)) fail(std::string(key) + "." + k, "unexpected field");
        }
        read("tactic", w.tactic);
        read("techniques", w.techniques);
        read("subtechniques", w.subtechniques);
        read("desirable_mitigations", w.desirable_mitigations);
        read("desirable_detection", w.desirable_detection);
        return w;
    }

    const nlohmann::json& raw(const char* key) const { return doc_[key]; }

private:
    const nlohmann::json& doc_;
    std::string kind_;
    std::string id_;
};

inline nlohmann::json parse_document(std::string_view document, std::string_view kind) {
    try {
        return nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("", "", std::string(kind) + " document is not valid JSON: " + e.what());
    }
}

inline std::set<std::string> resolve_mitigations(const report_reader& r, const char* key,
                                                 const std::vector<std::string>& ids,
                                                 const attack_catalog& catalog) {
    std::set<std::string> out;
    for (auto& id : ids) {
        if (catalog.classify(id) != node_class::mitigation) r.fail(key, "unknown mitigation id " + id);
        out.insert(id);
    }
    return out;
}

inline std::set<std::string> resolve_detections(const report_reader& r, const char* key,
                                                const std::vector<std::string>& refs,
                                                const attack_catalog& catalog) {
    std::set<std::string> out;
    for (auto& ref : refs) {
        auto id = catalog.resolve_detection(ref);
        if (!id) r.fail(key, "unresolvable detection \"" + ref + "\"");
        out.insert(*id);
    }
    return out;
}

inline void merge_weights(field_weights& base, const field_weights& over) {
    if (over.tactic) base.tactic = over.tactic;
    if (over.techniques) base.techniques = over.techniques;
    if (over.subtechniques) base.subtechniques = over.subtechniques;
    if (over.desirable_mitigations) base.desirable_mitigations = over.desirable_mitigations;
    if (over.desirable_detection) base.desirable_detection = over.desirable_detection;
}

inline nlohmann::json weights_to_json(const field_weights& w) {
    nlohmann::json out = nlohmann::json::object();
    auto put = [&](const char* k, const std::optional<double>& v) {
        if (v) out[k] = *v;
    };
    put("tactic", w.tactic);
    put("techniques", w.techniques);
    put("subtechniques", w.subtechniques);
    put("desirable_mitigations", w.desirable_mitigations);
    put("desirable_detection", w.desirable_detection);
    return out;
}

} // namespace detail

/// Parses and validates a Red Team report, merging `overlay` when given.
inline red_report parse_red_report(std::string_view document, const attack_catalog& catalog,
                                   const red_overlay* overlay = nullptr) {
    auto doc = detail::parse_document(document, "red report");
    detail::report_reader r(doc, "red report");
    r.allow_only({"report_id", "objective", "tactic_id", "technique_ids", "subtechnique_ids", "target",
                  "start_time", "outcome", "desirable_mitigation_ids", "desirable_detection_ids",
                  "field_weights"});

    red_report red;
    red.report_id = r.string("report_id");
    if (red.report_id.empty()) r.fail("report_id", "must not be empty");
    red.objective = r.string("objective", false);
    red.tactic_id = r.string("tactic_id");
    if (catalog.classify(red.tactic_id) != node_class::tactic) r.fail("tactic_id", "unknown tactic id " + red.tactic_id);

    for (auto& id : r.strings("technique_ids")) {
        auto cls = catalog.classify(id);
        if (cls == node_class::subtechnique) r.fail("technique_ids", id + " is a sub-technique");
        if (cls != node_class::technique) r.fail("technique_ids", "unknown technique id " + id);
        if (!catalog.technique_in_tactic(id, red.tactic_id))
            r.fail("technique_ids", id + " is not valid for tactic " + red.tactic_id);
        red.technique_ids.insert(id);
    }
    if (red.technique_ids.empty()) r.fail("technique_ids", "at least one technique is required");

    for (auto& id : r.strings("subtechnique_ids")) {
        if (catalog.classify(id) != node_class::subtechnique) r.fail("subtechnique_ids", "unknown sub-technique id " + id);
        auto parent = *catalog.find_technique(id)->parent_id;
        if (!red.technique_ids.count(parent))
            r.fail("subtechnique_ids", id + " requires its parent " + parent + " in technique_ids");
        if (!catalog.technique_in_tactic(id, red.tactic_id))
            r.fail("subtechnique_ids", id + " is not valid for tactic " + red.tactic_id);
        red.subtechnique_ids.insert(id);
    }

    red.target = r.string("target");
    red.start_time = r.time("start_time");

    auto outcome = r.string("outcome");
    if (outcome == "success") red.outcome = attack_outcome::success;
    else if (outcome == "partial") red.outcome = attack_outcome::partial;
    else if (outcome == "failure") red.outcome = attack_outcome::failure;
    else r.fail("outcome", "must be one of success, partial, failure");

    red.desirable_mitigation_ids =
        detail::resolve_mitigations(r, "desirable_mitigation_ids", r.strings("desirable_mitigation_ids"), catalog);
    red.desirable_detection_ids =
        detail::resolve_detections(r, "desirable_detection_ids", r.strings("desirable_detection_ids"), catalog);
    red.weights = r.weights("field_weights");

    if (overlay) {
        red.desirable_mitigation_ids.insert(overlay->desirable_mitigation_ids.begin(),
                                            overlay->desirable_mitigation_ids.end());
        red.desirable_detection_ids.insert(overlay->desirable_detection_ids.begin(),
                                           overlay->desirable_detection_ids.end());
        detail::merge_weights(red.weights, overlay->weights);
    }
    return red;
}

inline red_report parse_red_report(std::string_view document, const attack_catalog& catalog,
                                   const overlay_map& overlays) {
    auto red = parse_red_report(document, catalog);
    if (auto it = overlays.find(red.report_id); it != overlays.end()) {
        red.desirable_mitigation_ids.insert(it->second.desirable_mitigation_ids.begin(),
                                            it->second.desirable_mitigation_ids.end());
        red.desirable_detection_ids.insert(it->second.desirable_detection_ids.begin(),
                                           it->second.desirable_detection_ids.end());
        detail::merge_weights(red.weights, it->second.weights);
    }
    return red;
}

inline blue_report parse_blue_report(std::string_view document, const attack_catalog& catalog) {
    auto doc = detail::parse_document(document, "blue report");
    detail::report_reader r(doc, "blue report");
    r.allow_only({"report_id", "attack_ref", "presumed_tactic_id", "presumed_technique_ids",
                  "presumed_subtechnique_ids", "mitigations", "detection_types", "target",
                  "detection_start_time"});

    blue_report blue;
    blue.report_id = r.string("report_id");
    if (blue.report_id.empty()) r.fail("report_id", "must not be empty");
    if (r.has("attack_ref")) blue.attack_ref = r.string("attack_ref");
    if (r.has("presumed_tactic_id")) {
        blue.presumed_tactic_id = r.string("presumed_tactic_id");
        if (catalog.classify(*blue.presumed_tactic_id) != node_class::tactic)
            r.fail("presumed_tactic_id", "unknown tactic id " + *blue.presumed_tactic_id);
    }
    for (auto& id : r.strings("presumed_technique_ids")) {
        if (catalog.classify(id) != node_class::technique)
            r.fail("presumed_technique_ids", "unknown technique id " + id);
        blue.presumed_technique_ids.insert(id);
    }
    for (auto& id : r.strings("presumed_subtechnique_ids")) {
        if (catalog.classify(id) != node_class::subtechnique)
            r.fail("presumed_subtechnique_ids", "unknown sub-technique id " + id);
        blue.presumed_subtechnique_ids.insert(id);
    }

    if (r.has("mitigations")) {
        auto& list = r.raw("mitigations");
        if (!list.is_array()) r.fail("mitigations", "must be a list");
        std::set<std::string> seen;
        for (auto& m : list) {
            if (!m.is_object() || !m.contains("mitigation_id") || !m["mitigation_id"].is_string())
                r.fail("mitigations", "entries need a string mitigation_id");
            for (auto& [k, v] : m.items())
                if (k != "mitigation_id" && k != "applied") r.fail("mitigations." + k, "unexpected field");
            mitigation_claim claim{m["mitigation_id"].get<std::string>(), false};
            if (m.contains("applied")) {
                if (!m["applied"].is_boolean()) r.fail("mitigations.applied", "must be a boolean");
                claim.applied = m["applied"].get<bool>();
            }
            if (catalog.classify(claim.mitigation_id) != node_class::mitigation)
                r.fail("mitigations", "unknown mitigation id " + claim.mitigation_id);
            if (!seen.insert(claim.mitigation_id).second)
                r.fail("mitigations", "duplicate mitigation_id " + claim.mitigation_id);
            blue.mitigations.push_back(std::move(claim));
        }
    }
    blue.detection_types = detail::resolve_detections(r, "detection_types", r.strings("detection_types"), catalog);
    blue.target = r.string("target");
    blue.detection_start_time = r.time("detection_start_time");
    return blue;
}

/// Parses a White-Team overlay document: `{"overlays": [{report_id, ...}]}`.
inline overlay_map parse_overlay(std::string_view document, const attack_catalog& catalog) {
    auto doc = detail::parse_document(document, "overlay");
    if (!doc.is_object() || !doc.contains("overlays") || !doc["overlays"].is_array())
        throw validation_error("", "overlays", "overlay document needs an \"overlays\" list");
    overlay_map out;
    for (auto& entry : doc["overlays"]) {
        detail::report_reader r(entry, "overlay");
        r.allow_only({"report_id", "desirable_mitigation_ids", "desirable_detection_ids", "field_weights"});
        red_overlay o;
        o.report_id = r.string("report_id");
        o.desirable_mitigation_ids =
            detail::resolve_mitigations(r, "desirable_mitigation_ids", r.strings("desirable_mitigation_ids"), catalog);
        o.desirable_detection_ids =
            detail::resolve_detections(r, "desirable_detection_ids", r.strings("desirable_detection_ids"), catalog);
        o.weights = r.weights("field_weights");
        if (!out.emplace(o.report_id, o).second) r.fail("report_id", "duplicate overlay entry");
    }
    return out;
}

inline nlohmann::json to_json(const red_report& red) {
    nlohmann::json out;
    out["report_id"] = red.report_id;
    out["objective"] = red.objective;
    out["tactic_id"] = red.tactic_id;
    out["technique_ids"] = red.technique_ids;
    out["subtechnique_ids"] = red.subtechnique_ids;
    out["target"] = red.target;
    out["start_time"] = format_rfc3339(red.start_time);
    out["outcome"] = std::string(to_string(red.outcome));
    out["desirable_mitigation_ids"] = red.desirable_mitigation_ids;
    out["desirable_detection_ids"] = red.desirable_detection_ids;
    if (!red.weights.empty()) out["field_weights"] = detail::weights_to_json(red.weights);
    return out;
}

inline nlohmann::json to_json(const blue_report& blue) {
    nlohmann::json out;
    out["report_id"] = blue.report_id;
    if (blue.attack_ref) out["attack_ref"] = *blue.attack_ref;
    if (blue.presumed_tactic_id) out["presumed_tactic_id"] = *blue.presumed_tactic_id;
    out["presumed_technique_ids"] = blue.presumed_technique_ids;
    out["presumed_subtechnique_ids"] = blue.presumed_subtechnique_ids;
    out["mitigations"] = nlohmann::json::array();
    for (auto& m : blue.mitigations)
        out["mitigations"].push_back({{"mitigation_id", m.mitigation_id}, {"applied", m.applied}});
    out["detection_types"] = blue.detection_types;
    out["target"] = blue.target;
    out["detection_start_time"] = format_rfc3339(blue.detection_start_time);
    return out;
}

inline std::string serialize(const red_report& red) { return to_json(red).dump(2) + "\n"; }
inline std::string serialize(const blue_report& blue) { return to_json(blue).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Pairing

enum class pairing_method { explicit_ref, heuristic, unpaired };

inline std::string_view to_string(pairing_method m) {
    switch (m) {
    case pairing_method::explicit_ref: return "explicit";
    case pairing_method::heuristic: return "heuristic";
    case pairing_method::unpaired: return "unpaired";
    }
    return "unpaired";
}

struct report_pair {
    red_report red;
    std::optional<blue_report> blue;
    pairing_method method = pairing_method::unpaired;
};

struct pairing_policy {
    std::chrono::seconds window{std::chrono::hours{2}};
};

struct pairing_result {
    std::vector<report_pair> pairs;          // one per red report, ordered by red report_id
    std::vector<blue_report> unmatched;      // ordered by report_id
    std::vector<std::string> warnings;
};

/// Pairs Blue responses to Red attacks one-to-one.
///
/// Explicit `attack_ref` links are honoured first. Remaining blues without a
/// reference pair with same-target reds whose start lies within the window,
/// nearest in time first; ties go to the lexicographically smaller red, then
/// blue, report_id. Blues referencing a missing or already-claimed red are
/// reported as unmatched.
inline pairing_result pair_reports(std::vector<red_report> reds, std::vector<blue_report> blues,
                                   const pairing_policy& policy = {}) {
    auto by_id = [](const auto& a, const auto& b) { return a.report_id < b.report_id; };
    std::sort(reds.begin(), reds.end(), by_id);
    std::sort(blues.begin(), blues.end(), by_id);

    pairing_result result;
    std::map<std::string, std::size_t> red_index;
    for (std::size_t i = 0; i < reds.size(); ++i) {
        if (!red_index.emplace(reds[i].report_id, i).second)
            throw validation_error(reds[i].report_id, "report_id", "duplicate red report id");
    }
    for (std::size_t i = 1; i < blues.size(); ++i)
        if (blues[i].report_id == blues[i - 1].report_id)
            throw validation_error(blues[i].report_id, "report_id", "duplicate blue report id");

    std::vector<std::optional<std::size_t>> red_to_blue(reds.size());
    std::vector<pairing_method> method(reds.size(), pairing_method::unpaired);
    std::vector<bool> blue_used(blues.size(), false);

    for (std::size_t b = 0; b < blues.size(); ++b) {
        if (!blues[b].attack_ref) continue;
        auto it = red_index.find(*blues[b].attack_ref);
        if (it == red_index.end()) {
            result.warnings.push_back("blue report " + blues[b].report_id + " references unknown red report " +
                                      *blues[b].attack_ref);
            continue;
        }
        if (red_to_blue[it->second]) {
            result.warnings.push_back("blue report " + blues[b].report_id + " references red report " +
                                      *blues[b].attack_ref + " already claimed by " +
                                      blues[*red_to_blue[it->second]].report_id);
            continue;
        }
        red_to_blue[it->second] = b;
        method[it->second] = pairing_method::explicit_ref;
        blue_used[b] = true;
    }

    struct candidate {
        std::chrono::milliseconds gap;
        std::size_t red, blue;
    };
    std::vector<candidate> candidates;
    for (std::size_t b = 0; b < blues.size(); ++b) {
        if (blue_used[b] || blues[b].attack_ref) continue;
        for (std::size_t r = 0; r < reds.size(); ++r) {
            if (red_to_blue[r] || reds[r].target != blues[b].target) continue;
            auto gap = blues[b].detection_start_time - reds[r].start_time;
            if (gap < gap.zero()) gap = -gap;
            if (gap <= policy.window) candidates.push_back({gap, r, b});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const candidate& x, const candidate& y) {
        return std::tie(x.gap, reds[x.red].report_id, blues[x.blue].report_id) <
               std::tie(y.gap, reds[y.red].report_id, blues[y.blue].report_id);
    });
    for (auto& c : candidates) {
        if (red_to_blue[c.red] || blue_used[c.blue]) continue;
        red_to_blue[c.red] = c.blue;
        method[c.red] = pairing_method::heuristic;
        blue_used[c.blue] = true;
    }

    for (std::size_t r = 0; r < reds.size(); ++r) {
        report_pair pair{std::move(reds[r]), std::nullopt, method[r]};
        if (red_to_blue[r]) pair.blue = blues[*red_to_blue[r]];
        result.pairs.push_back(std::move(pair));
    }
    for (std::size_t b = 0; b < blues.size(); ++b)
        if (!blue_used[b]) result.unmatched.push_back(std::move(blues[b]));
    return result;
}

} // namespace rangescore
