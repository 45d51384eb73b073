#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "rangescore/adtree.hpp"
#include "rangescore/capec.hpp"

namespace rangescore {

struct match_params {
    double gamma = 0.5;                  // near-miss decay per CAPEC hop
    double valid_factor = 0.75;          // credit for a valid but non-desirable defense
    double false_positive_penalty = 0.0; // comprehension penalty per pruned attack node
};

struct attack_match {
    node_path ref_path;
    node_path resp_path;
    double credit = 1.0;

    bool operator==(const attack_match&) const = default;
};

struct near_miss {
    node_path resp_path;
    node_path ref_path;
    std::size_t distance = 0;
    double credit = 0.0;

    const std::string& resp_technique() const { return resp_path.back(); }
    const std::string& nearest_ref_technique() const { return ref_path.back(); }
    bool operator==(const near_miss&) const = default;
};

struct defense_match {
    node_path ref_path;
    node_path resp_path;
    node_kind kind = node_kind::mitigation;
    bool desirable = false;
    double credit = 0.0;  // 1.0 or valid_factor

    bool operator==(const defense_match&) const = default;
};

struct defense_credit {
    double mitigation = 0.0;
    double detection = 0.0;

    bool operator==(const defense_credit&) const = default;
};

struct match_result {
    int tactic_credit = 0;
    std::vector<attack_match> attack_matches;
    std::vector<near_miss> near_misses;
    std::vector<defense_match> defense_matches;
    std::vector<node_path> pruned_paths;  // response paths, level order
    std::map<node_path, defense_credit> per_node_defense;  // keyed by reference attack path
    std::size_t false_positive_attack_nodes = 0;

    bool operator==(const match_result&) const = default;
};

/// One chosen pairing between leftover response and reference nodes.
struct assignment_edge {
    std::size_t resp;
    std::size_t ref;
    std::size_t distance;

    bool operator==(const assignment_edge&) const = default;
};

using distance_matrix = std::vector<std::vector<std::optional<std::size_t>>>;

/// Greedy nearest-first assignment: candidate pairs are taken in order of
/// (distance, response id, reference id) whenever both ends are still free.
inline std::vector<assignment_edge> greedy_assignment(const std::vector<std::string>& resp_ids,
                                                      const std::vector<std::string>& ref_ids,
                                                      const distance_matrix& dist) {
    std::vector<assignment_edge> candidates;
    for (std::size_t i = 0; i < resp_ids.size(); ++i)
        for (std::size_t j = 0; j < ref_ids.size(); ++j)
            if (dist[i][j]) candidates.push_back({i, j, *dist[i][j]});
    std::sort(candidates.begin(), candidates.end(), [&](const assignment_edge& a, const assignment_edge& b) {
        return std::tie(a.distance, resp_ids[a.resp], ref_ids[a.ref]) <
               std::tie(b.distance, resp_ids[b.resp], ref_ids[b.ref]);
    });
    std::vector<bool> resp_used(resp_ids.size()), ref_used(ref_ids.size());
    std::vector<assignment_edge> chosen;
    for (auto& c : candidates) {
        if (resp_used[c.resp] || ref_used[c.ref]) continue;
        resp_used[c.resp] = ref_used[c.ref] = true;
        chosen.push_back(c);
    }
    return chosen;
}

namespace detail {

struct attack_ref {
    std::string id;
    node_path path;
};

inline std::vector<attack_ref> attack_nodes_of(const report_adtree& tree, node_kind kind) {
    std::vector<attack_ref> out;
    tree.visit_bfs([&](const node& n, const node_path& p) {
        if (n.kind == kind) out.push_back({n.id, p});
    });
    return out;
}

inline bool has_desirable_child(const node& attack, node_kind kind) {
    return std::any_of(attack.children.begin(), attack.children.end(),
                       [&](const node& c) { return c.kind == kind && c.desirable; });
}

} // namespace detail

/// Compares a response tree with its reference level by level.
///
/// The roots match when their tactic ids agree. Attack nodes match on equal
/// id; leftover response techniques (then sub-techniques) are assigned to
/// leftover reference nodes of the same kind by greedy CAPEC distance, with
/// a distance of at least one hop for distinct ids. Defense leaves match a
/// reference leaf of the same id under the reference node their parent was
/// matched to. Everything else is pruned.
inline match_result match_trees(const report_adtree& reference, const report_adtree& response,
                                const capec_graph& capec, const match_params& params) {
    match_result result;
    result.tactic_credit = reference.root.id == response.root.id ? 1 : 0;

    std::map<node_path, node_path> mapped;  // response attack path -> reference attack path

    for (auto kind : {node_kind::technique, node_kind::subtechnique}) {
        auto refs = detail::attack_nodes_of(reference, kind);
        auto resps = detail::attack_nodes_of(response, kind);
        std::vector<bool> ref_used(refs.size(), false);
        std::vector<std::size_t> leftover_resp;
        for (std::size_t i = 0; i < resps.size(); ++i) {
            auto it = std::find_if(refs.begin(), refs.end(), [&](const auto& r) { return r.id == resps[i].id; });
            if (it == refs.end()) {
                leftover_resp.push_back(i);
                continue;
            }
            auto j = static_cast<std::size_t>(it - refs.begin());
            ref_used[j] = true;
            result.attack_matches.push_back({refs[j].path, resps[i].path, 1.0});
            mapped[resps[i].path] = refs[j].path;
        }

        std::vector<std::size_t> leftover_ref;
        for (std::size_t j = 0; j < refs.size(); ++j)
            if (!ref_used[j]) leftover_ref.push_back(j);
        if (leftover_resp.empty() || leftover_ref.empty()) continue;

        std::vector<std::string> resp_ids, ref_ids;
        for (auto i : leftover_resp) resp_ids.push_back(resps[i].id);
        for (auto j : leftover_ref) ref_ids.push_back(refs[j].id);
        distance_matrix dist(resp_ids.size(), std::vector<std::optional<std::size_t>>(ref_ids.size()));
        for (std::size_t a = 0; a < resp_ids.size(); ++a)
            for (std::size_t b = 0; b < ref_ids.size(); ++b)
                if (auto d = capec_distance(capec, resp_ids[a], ref_ids[b]))
                    dist[a][b] = std::max<std::size_t>(*d, 1);

        for (auto& e : greedy_assignment(resp_ids, ref_ids, dist)) {
            auto& rp = resps[leftover_resp[e.resp]];
            auto& fp = refs[leftover_ref[e.ref]];
            result.near_misses.push_back({rp.path, fp.path, e.distance, technique_credit(e.distance, params.gamma)});
            mapped[rp.path] = fp.path;
        }
    }

    std::set<node_path> matched_leaves;
    response.visit_bfs([&](const node& n, const node_path& path) {
        if (!is_defense(n.kind) || path.size() < 3) return;
        node_path parent(path.begin(), path.end() - 1);
        auto it = mapped.find(parent);
        if (it == mapped.end()) return;
        auto ref_parent = reference.find(it->second);
        auto ref_leaf = ref_parent ? ref_parent->child(n.id) : nullptr;
        if (!ref_leaf || ref_leaf->kind != n.kind) return;
        double credit = (ref_leaf->desirable || !detail::has_desirable_child(*ref_parent, n.kind))
                            ? 1.0
                            : params.valid_factor;
        auto ref_path = it->second;
        ref_path.push_back(n.id);
        result.defense_matches.push_back({ref_path, path, n.kind, ref_leaf->desirable, credit});
        matched_leaves.insert(path);
    });

    for (auto& [resp_path, ref_path] : mapped) result.per_node_defense[ref_path];
    for (auto& dm : result.defense_matches) {
        node_path ref_parent(dm.ref_path.begin(), dm.ref_path.end() - 1);
        auto& slot = result.per_node_defense[ref_parent];
        auto& target = dm.kind == node_kind::mitigation ? slot.mitigation : slot.detection;
        target = std::max(target, dm.credit);
    }

    response.visit_bfs([&](const node& n, const node_path& path) {
        if (path.size() == 1) return;
        if (is_attack(n.kind)) {
            if (!mapped.count(path)) {
                result.pruned_paths.push_back(path);
                ++result.false_positive_attack_nodes;
            }
        } else if (!matched_leaves.count(path)) {
            result.pruned_paths.push_back(path);
        }
    });
    return result;
}

/// Drops every response node without a match record. A matched node whose
/// response parent was dropped is re-attached under the response node that
/// matched its reference parent, or under the root when there is none.
inline report_adtree prune_response(const report_adtree& response, const match_result& result) {
    std::map<node_path, node_path> resp_to_ref;
    for (auto& m : result.attack_matches) resp_to_ref[m.resp_path] = m.ref_path;
    for (auto& m : result.near_misses) resp_to_ref[m.resp_path] = m.ref_path;
    std::map<node_path, node_path> ref_to_resp;
    for (auto& [resp, ref] : resp_to_ref) ref_to_resp[ref] = resp;
    std::set<node_path> kept_leaves;
    for (auto& m : result.defense_matches) kept_leaves.insert(m.resp_path);

    report_adtree out;
    out.root = response.root;
    out.root.children.clear();

    std::map<node_path, node_path> placed;  // response path -> path in `out`
    placed[{response.root.id}] = {response.root.id};

    auto insert = [&](const node_path& parent_out, const node& n) -> node_path {
        node* cur = &out.root;
        for (std::size_t i = 1; i < parent_out.size(); ++i) cur = cur->child(parent_out[i]);
        cur->children.push_back({n.kind, n.id, n.weight, n.desirable, {}});
        auto path = parent_out;
        path.push_back(n.id);
        return path;
    };

    response.visit_bfs([&](const node& n, const node_path& path) {
        if (path.size() == 1) return;
        node_path parent(path.begin(), path.end() - 1);
        bool keep = is_attack(n.kind) ? resp_to_ref.count(path) > 0 : kept_leaves.count(path) > 0;
        if (!keep) return;
        auto parent_out = placed.find(parent);
        if (parent_out != placed.end()) {
            placed[path] = insert(parent_out->second, n);
            return;
        }
        // Parent pruned: follow the reference parent of this node's match.
        node_path target{response.root.id};
        if (auto ref = resp_to_ref.find(path); ref != resp_to_ref.end() && ref->second.size() > 1) {
            node_path ref_parent(ref->second.begin(), ref->second.end() - 1);
            if (auto resp_parent = ref_to_resp.find(ref_parent); resp_parent != ref_to_resp.end())
                if (auto p = placed.find(resp_parent->second); p != placed.end()) target = p->second;
        }
        placed[path] = insert(target, n);
    });
    return out;
}

} // namespace rangescore
