#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>

#include "json.hpp"
#include "rangescore/errors.hpp"
#include "rangescore/io.hpp"

namespace rangescore {

/// What kind of ATT&CK object an identifier names.
enum class node_class { tactic, technique, subtechnique, mitigation, detection_component, unknown };

inline std::string_view to_string(node_class c) {
    switch (c) {
    case node_class::tactic: return "tactic";
    case node_class::technique: return "technique";
    case node_class::subtechnique: return "sub-technique";
    case node_class::mitigation: return "mitigation";
    case node_class::detection_component: return "detection-component";
    case node_class::unknown: break;
    }
    return "unknown";
}

struct technique_entry {
    std::string id;
    std::string name;
    std::set<std::string> tactic_ids;
    std::optional<std::string> parent_id;  // present iff sub-technique
    std::set<std::string> mitigation_ids;
    std::set<std::string> detection_component_ids;
    std::set<std::string> subtechnique_ids;

    bool is_subtechnique() const noexcept { return parent_id.has_value(); }
};

/// Raw maps used to construct an attack_catalog.
struct catalog_data {
    std::map<std::string, std::string> tactics;          // TA id -> name
    std::map<std::string, technique_entry> techniques;   // T id -> entry (incl. sub-techniques)
    std::map<std::string, std::string> mitigations;      // M id -> name
    std::map<std::string, std::string> data_components;  // component id -> name
    std::string snapshot_version;
};

namespace detail {

inline std::string normalize_name(std::string_view s) {
    auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    auto last = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(first, last - first + 1));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace detail

/// Immutable index over an enterprise ATT&CK snapshot.
///
/// Revoked and deprecated objects never enter the maps, and every
/// relationship endpoint refers to an id present in them. Safe to share
/// across threads once constructed.
class attack_catalog {
public:
    attack_catalog() = default;

    /// Validates the invariants; throws catalog_error on violation.
    explicit attack_catalog(catalog_data data) : data_(std::move(data)) {
        for (auto& [id, t] : data_.techniques) {
            bool dotted = id.find('.') != std::string::npos;
            if (dotted != t.parent_id.has_value())
                throw catalog_error("technique " + id + ": sub-technique flag disagrees with id");
            if (t.parent_id) {
                auto parent = data_.techniques.find(*t.parent_id);
                if (parent == data_.techniques.end())
                    throw catalog_error("sub-technique " + id + " has no parent " + *t.parent_id);
                if (!t.subtechnique_ids.empty())
                    throw catalog_error("sub-technique " + id + " lists sub-techniques");
            }
            for (auto& ta : t.tactic_ids)
                if (!data_.tactics.count(ta))
                    throw catalog_error("technique " + id + " references unknown tactic " + ta);
            for (auto& m : t.mitigation_ids)
                if (!data_.mitigations.count(m))
                    throw catalog_error("technique " + id + " references unknown mitigation " + m);
            for (auto& c : t.detection_component_ids)
                if (!data_.data_components.count(c))
                    throw catalog_error("technique " + id + " references unknown component " + c);
        }
        for (auto& [id, t] : data_.techniques)
            if (t.parent_id) data_.techniques.at(*t.parent_id).subtechnique_ids.insert(id);
        for (auto& [id, name] : data_.data_components) {
            auto key = detail::normalize_name(name);
            auto [it, inserted] = component_by_name_.emplace(key, id);
            if (!inserted && it->second != id) ambiguous_names_.insert(key);
        }
    }

    const std::map<std::string, std::string>& tactics() const noexcept { return data_.tactics; }
    const std::map<std::string, technique_entry>& techniques() const noexcept { return data_.techniques; }
    const std::map<std::string, std::string>& mitigations() const noexcept { return data_.mitigations; }
    const std::map<std::string, std::string>& data_components() const noexcept { return data_.data_components; }
    const std::string& snapshot_version() const noexcept { return data_.snapshot_version; }

    const technique_entry* find_technique(std::string_view id) const {
        auto it = data_.techniques.find(std::string(id));
        return it == data_.techniques.end() ? nullptr : &it->second;
    }

    std::size_t subtechnique_count() const {
        return static_cast<std::size_t>(std::count_if(
            data_.techniques.begin(), data_.techniques.end(),
            [](const auto& kv) { return kv.second.is_subtechnique(); }));
    }

    node_class classify(std::string_view id) const {
        std::string key(id);
        if (data_.tactics.count(key)) return node_class::tactic;
        if (auto t = find_technique(key))
            return t->is_subtechnique() ? node_class::subtechnique : node_class::technique;
        if (data_.mitigations.count(key)) return node_class::mitigation;
        if (data_.data_components.count(key)) return node_class::detection_component;
        return node_class::unknown;
    }

    /// Resolves a detection reference given either as a component id or as a
    /// component name (trimmed, case-insensitive).
    std::optional<std::string> resolve_detection(std::string_view name_or_id) const {
        std::string key(name_or_id);
        if (data_.data_components.count(key)) return key;
        auto norm = detail::normalize_name(name_or_id);
        if (ambiguous_names_.count(norm)) return std::nullopt;
        auto it = component_by_name_.find(norm);
        if (it == component_by_name_.end()) return std::nullopt;
        return it->second;
    }

    bool technique_in_tactic(std::string_view technique_id, std::string_view tactic_id) const {
        auto t = find_technique(technique_id);
        return t && t->tactic_ids.count(std::string(tactic_id));
    }

    bool mitigation_valid_for(std::string_view mitigation_id, std::string_view technique_id) const {
        auto t = find_technique(technique_id);
        return t && t->mitigation_ids.count(std::string(mitigation_id));
    }

    bool detection_valid_for(std::string_view component_id, std::string_view technique_id) const {
        auto t = find_technique(technique_id);
        return t && t->detection_component_ids.count(std::string(component_id));
    }

private:
    catalog_data data_;
    std::map<std::string, std::string> component_by_name_;
    std::set<std::string> ambiguous_names_;
};

/// Classification of `id` against the catalog maps; `unknown` when absent.
inline node_class lookup_node(const attack_catalog& catalog, std::string_view id) {
    return catalog.classify(id);
}

namespace detail {

inline bool is_retired(const nlohmann::json& obj) {
    return obj.value("revoked", false) || obj.value("x_mitre_deprecated", false);
}

inline std::optional<std::string> attack_external_id(const nlohmann::json& obj) {
    auto refs = obj.find("external_references");
    if (refs == obj.end() || !refs->is_array()) return std::nullopt;
    for (auto& ref : *refs) {
        if (ref.value("source_name", "") == "mitre-attack" && ref.contains("external_id") &&
            ref["external_id"].is_string())
            return ref["external_id"].get<std::string>();
    }
    return std::nullopt;
}

} // namespace detail

/// Builds a catalog from a parsed STIX 2.1 bundle.
inline attack_catalog parse_attack_snapshot(const nlohmann::json& bundle) {
    if (!bundle.is_object() || bundle.value("type", "") != "bundle" || !bundle.contains("objects") ||
        !bundle["objects"].is_array())
        throw catalog_error("not a STIX bundle");

    catalog_data data;
    std::map<std::string, std::string> tactic_by_shortname;
    std::map<std::string, std::string> stix_to_attack;  // STIX id -> ATT&CK id
    std::map<std::string, std::set<std::string>> phases_of;  // technique -> kill-chain phases
    std::map<std::string, bool> sub_flag;
    std::string collection_version;

    auto add_unique = [](std::map<std::string, std::string>& map, const std::string& key,
                         const std::string& value, std::string_view what) {
        if (!map.emplace(key, value).second)
            throw catalog_error("duplicate " + std::string(what) + " id " + key);
    };

    for (auto& obj : bundle["objects"]) {
        if (!obj.is_object() || detail::is_retired(obj)) continue;
        auto type = obj.value("type", "");
        auto stix_id = obj.value("id", "");
        if (type == "x-mitre-tactic") {
            auto ext = detail::attack_external_id(obj);
            if (!ext) continue;
            add_unique(data.tactics, *ext, obj.value("name", ""), "tactic");
            tactic_by_shortname[obj.value("x_mitre_shortname", "")] = *ext;
            stix_to_attack[stix_id] = *ext;
        } else if (type == "attack-pattern") {
            auto ext = detail::attack_external_id(obj);
            if (!ext) continue;
            technique_entry entry;
            entry.id = *ext;
            entry.name = obj.value("name", "");
            if (data.techniques.count(entry.id))
                throw catalog_error("duplicate technique id " + entry.id);
            if (auto kc = obj.find("kill_chain_phases"); kc != obj.end() && kc->is_array())
                for (auto& phase : *kc)
                    if (phase.value("kill_chain_name", "") == "mitre-attack")
                        phases_of[entry.id].insert(phase.value("phase_name", ""));
            sub_flag[entry.id] = obj.value("x_mitre_is_subtechnique", false);
            stix_to_attack[stix_id] = entry.id;
            data.techniques.emplace(entry.id, std::move(entry));
        } else if (type == "course-of-action") {
            auto ext = detail::attack_external_id(obj);
            if (!ext) continue;
            add_unique(data.mitigations, *ext, obj.value("name", ""), "mitigation");
            stix_to_attack[stix_id] = *ext;
        } else if (type == "x-mitre-data-component") {
            auto id = detail::attack_external_id(obj).value_or(stix_id);
            add_unique(data.data_components, id, obj.value("name", ""), "data component");
            stix_to_attack[stix_id] = id;
        } else if (type == "x-mitre-collection") {
            collection_version = obj.value("x_mitre_version", "");
        }
    }

    if (data.techniques.empty()) throw catalog_error("empty catalog: bundle has no usable attack-pattern objects");

    for (auto& [id, phases] : phases_of)
        for (auto& phase : phases)
            if (auto it = tactic_by_shortname.find(phase); it != tactic_by_shortname.end())
                data.techniques.at(id).tactic_ids.insert(it->second);

    auto endpoint = [&](const nlohmann::json& rel, const char* key) -> const std::string* {
        auto it = stix_to_attack.find(rel.value(key, ""));
        return it == stix_to_attack.end() ? nullptr : &it->second;
    };

    for (auto& rel : bundle["objects"]) {
        if (!rel.is_object() || rel.value("type", "") != "relationship" || detail::is_retired(rel)) continue;
        auto kind = rel.value("relationship_type", "");
        auto src = endpoint(rel, "source_ref");
        auto tgt = endpoint(rel, "target_ref");
        if (!src || !tgt) continue;
        auto tech = data.techniques.find(*tgt);
        if (tech == data.techniques.end()) continue;
        if (kind == "mitigates" && data.mitigations.count(*src)) {
            tech->second.mitigation_ids.insert(*src);
        } else if (kind == "detects" && data.data_components.count(*src)) {
            tech->second.detection_component_ids.insert(*src);
        } else if (kind == "subtechnique-of") {
            auto sub = data.techniques.find(*src);
            if (sub != data.techniques.end()) sub->second.parent_id = *tgt;
        }
    }

    for (auto& [id, entry] : data.techniques) {
        if (entry.parent_id || !sub_flag[id]) continue;
        auto dot = id.find('.');
        if (dot != std::string::npos) entry.parent_id = id.substr(0, dot);
    }

    data.snapshot_version = collection_version.empty() ? bundle.value("id", "") : collection_version;
    return attack_catalog(std::move(data));
}

/// Loads the pinned ATT&CK STIX bundle. Every failure, including an
/// unreadable file, surfaces as catalog_error.
inline attack_catalog load_attack_snapshot(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const io_error& e) {
        throw catalog_error(e.what());
    }
    nlohmann::json bundle;
    try {
        bundle = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw catalog_error("not a STIX bundle: " + path.string() + ": " + e.what());
    }
    return parse_attack_snapshot(bundle);
}

} // namespace rangescore
