#pragma once

// Shared fixtures for the test binaries: the pinned data files, a small
// hand-built catalog, and oracles written independently of the library.

#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rangescore.hpp"

namespace testing_support {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path data_dir() { return RANGESCORE_DATA_DIR; }
inline fs::path attack_path() { return data_dir() / "attack" / "enterprise-attack.json"; }
inline fs::path capec_map_path() { return data_dir() / "capec" / "attack-capec-mapping.json"; }
inline fs::path capec_hierarchy_path() { return data_dir() / "capec" / "capec-hierarchy.json"; }

inline const rangescore::attack_catalog& snapshot() {
    static const auto catalog = rangescore::load_attack_snapshot(attack_path());
    return catalog;
}

inline const rangescore::capec_graph& capec() {
    static const auto graph = rangescore::load_capec_graph(capec_map_path(), capec_hierarchy_path());
    return graph;
}

inline json read_json(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream buf;
    buf << in.rdbuf();
    return json::parse(buf.str());
}

inline rangescore::timestamp at(const char* text) { return rangescore::parse_rfc3339(text); }

/// Component id for a data component name in the pinned snapshot.
inline std::string component(const std::string& name) {
    auto id = snapshot().resolve_detection(name);
    if (!id) throw std::runtime_error("no data component named " + name);
    return *id;
}

/// Tiny catalog:
///   TA1 "alpha": T1 (M1, M2; D1, D2), T2 (M2; D2), T2.001 (M3; D1), T3 (nothing)
///   TA2 "beta":  T4 (M1; D3)
inline rangescore::attack_catalog mini_catalog() {
    using rangescore::technique_entry;
    rangescore::catalog_data d;
    d.tactics = {{"TA1", "alpha"}, {"TA2", "beta"}};
    d.mitigations = {{"M1", "one"}, {"M2", "two"}, {"M3", "three"}};
    d.data_components = {{"D1", "Process Creation"}, {"D2", "File Access"}, {"D3", "Network Flow"}};
    d.techniques["T1"] = technique_entry{"T1", "one", {"TA1"}, std::nullopt, {"M1", "M2"}, {"D1", "D2"}, {}};
    d.techniques["T2"] = technique_entry{"T2", "two", {"TA1"}, std::nullopt, {"M2"}, {"D2"}, {}};
    d.techniques["T2.001"] = technique_entry{"T2.001", "two one", {"TA1"}, "T2", {"M3"}, {"D1"}, {}};
    d.techniques["T3"] = technique_entry{"T3", "three", {"TA1"}, std::nullopt, {}, {}, {}};
    d.techniques["T4"] = technique_entry{"T4", "four", {"TA2"}, std::nullopt, {"M1"}, {"D3"}, {}};
    d.snapshot_version = "mini";
    return rangescore::attack_catalog(std::move(d));
}

/// CAPEC graph for the mini catalog: T1 -> C1, T2 -> C2, T4 -> C4;
/// hierarchy C2 child of C1, C3 child of C1, C4 child of C3. T3 unmapped.
inline rangescore::capec_graph mini_capec() {
    rangescore::capec_graph::adjacency_map map{{"T1", {"C1"}}, {"T2", {"C2"}}, {"T4", {"C4"}}};
    rangescore::capec_graph::adjacency_map hier{{"C2", {"C1"}}, {"C3", {"C1"}}, {"C4", {"C3"}}};
    return rangescore::capec_graph(map, hier);
}

// ---------------------------------------------------------------------------
// Oracles

/// Shortest CAPEC path computed straight from the two data files: an
/// all-pairs breadth-first search over an adjacency list rebuilt here.
class capec_oracle {
public:
    capec_oracle(const json& mapping, const json& hierarchy) {
        for (auto& rec : mapping.at("mappings"))
            for (auto& c : rec.at("capec_ids")) map_[rec.at("technique_id").get<std::string>()].push_back(c);
        for (auto& rec : hierarchy.at("patterns")) {
            std::string child = rec.at("capec_id");
            adj_[child];
            for (auto& p : rec.at("parent_ids")) {
                std::string parent = p;
                if (parent == child) continue;
                adj_[child].push_back(parent);
                adj_[parent].push_back(child);
            }
        }
    }

    std::vector<std::string> patterns(const std::string& tech) const {
        auto it = map_.find(tech);
        if (it != map_.end() && !it->second.empty()) return it->second;
        auto dot = tech.find('.');
        if (dot == std::string::npos) return {};
        it = map_.find(tech.substr(0, dot));
        return it == map_.end() ? std::vector<std::string>{} : it->second;
    }

    std::optional<std::size_t> distance(const std::string& a, const std::string& b) const {
        std::optional<std::size_t> best;
        for (auto& ca : patterns(a))
            for (auto& cb : patterns(b)) {
                auto d = bfs(ca, cb);
                if (d && (!best || *d < *best)) best = d;
            }
        return best;
    }

private:
    std::optional<std::size_t> bfs(const std::string& from, const std::string& to) const {
        if (from == to) return 0;
        std::map<std::string, std::size_t> seen{{from, 0}};
        std::deque<std::string> q{from};
        while (!q.empty()) {
            auto v = q.front();
            q.pop_front();
            auto it = adj_.find(v);
            if (it == adj_.end()) continue;
            for (auto& n : it->second) {
                if (seen.count(n)) continue;
                seen[n] = seen[v] + 1;
                if (n == to) return seen[n];
                q.push_back(n);
            }
        }
        return std::nullopt;
    }

    std::map<std::string, std::vector<std::string>> map_;
    std::map<std::string, std::vector<std::string>> adj_;
};

/// Best total gamma^d over every partial one-to-one assignment, by
/// exhaustive recursion.
inline double brute_force_assignment(const rangescore::distance_matrix& dist, double gamma) {
    std::vector<bool> used(dist.empty() ? 0 : dist[0].size(), false);
    std::function<double(std::size_t)> go = [&](std::size_t i) -> double {
        if (i == dist.size()) return 0.0;
        double best = go(i + 1);  // leave response i unassigned
        for (std::size_t j = 0; j < used.size(); ++j) {
            if (used[j] || !dist[i][j]) continue;
            used[j] = true;
            double credit = 1.0;
            for (std::size_t k = 0; k < *dist[i][j]; ++k) credit *= gamma;
            best = std::max(best, credit + go(i + 1));
            used[j] = false;
        }
        return best;
    };
    return go(0);
}

struct stix_counts {
    std::size_t attack_patterns = 0, subtechniques = 0, courses_of_action = 0, tactics = 0, data_components = 0;
};

/// Counts live STIX objects by type, skipping revoked and deprecated ones
/// and courses of action without an ATT&CK mitigation id.
inline stix_counts count_stix(const json& bundle) {
    stix_counts c;
    for (auto& o : bundle.at("objects")) {
        if (o.value("revoked", false) || o.value("x_mitre_deprecated", false)) continue;
        std::string type = o.at("type");
        if (type == "attack-pattern") {
            ++c.attack_patterns;
            if (o.value("x_mitre_is_subtechnique", false)) ++c.subtechniques;
        } else if (type == "course-of-action") {
            for (auto& r : o.value("external_references", json::array()))
                if (r.value("source_name", "") == "mitre-attack" && r.value("external_id", "").rfind("M", 0) == 0) {
                    ++c.courses_of_action;
                    break;
                }
        } else if (type == "x-mitre-tactic") {
            ++c.tactics;
        } else if (type == "x-mitre-data-component") {
            ++c.data_components;
        }
    }
    return c;
}

} // namespace testing_support
