#include <gtest/gtest.h>

#include "support.hpp"

using namespace rangescore;
using namespace testing_support;

namespace {

json minimal_red() {
    return {{"report_id", "R1"},
            {"tactic_id", "TA0006"},
            {"technique_ids", {"T1110"}},
            {"target", "dc01"},
            {"start_time", "2024-05-14T10:00:00Z"},
            {"outcome", "success"}};
}

json minimal_blue() {
    return {{"report_id", "B1"},
            {"target", "dc01"},
            {"detection_start_time", "2024-05-14T10:05:00+02:00"}};
}

std::string field_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const validation_error& e) {
        return e.field();
    }
    return "<no error>";
}

} // namespace

TEST(RedReport, MinimalDocument) {
    auto red = parse_red_report(minimal_red().dump(), snapshot());
    EXPECT_EQ(red.report_id, "R1");
    EXPECT_EQ(red.tactic_id, "TA0006");
    EXPECT_EQ(red.technique_ids, std::set<std::string>{"T1110"});
    EXPECT_TRUE(red.subtechnique_ids.empty());
    EXPECT_TRUE(red.desirable_mitigation_ids.empty());
    EXPECT_TRUE(red.desirable_detection_ids.empty());
    EXPECT_TRUE(red.weights.empty());
    EXPECT_TRUE(red.objective.empty());
    EXPECT_EQ(format_rfc3339(red.start_time), "2024-05-14T10:00:00Z");
}

TEST(RedReport, WeightOutOfRange) {
    auto doc = minimal_red();
    doc["field_weights"] = {{"techniques", 1.5}};
    try {
        parse_red_report(doc.dump(), snapshot());
        FAIL();
    } catch (const validation_error& e) {
        EXPECT_EQ(e.report_id(), "R1");
        EXPECT_EQ(e.field(), "field_weights.techniques");
        EXPECT_NE(std::string(e.what()).find("[0,1]"), std::string::npos);
    }
    doc["field_weights"] = {{"techniques", -0.1}};
    EXPECT_THROW(parse_red_report(doc.dump(), snapshot()), validation_error);
    doc["field_weights"] = {{"techniques", 0.0}, {"tactic", 1.0}};
    EXPECT_NO_THROW(parse_red_report(doc.dump(), snapshot()));
}

TEST(RedReport, SubtechniqueNeedsParent) {
    auto doc = minimal_red();
    doc["technique_ids"] = {"T1078"};
    doc["tactic_id"] = "TA0001";
    doc["subtechnique_ids"] = {"T1110.001"};
    try {
        parse_red_report(doc.dump(), snapshot());
        FAIL();
    } catch (const validation_error& e) {
        EXPECT_EQ(e.field(), "subtechnique_ids");
        EXPECT_NE(std::string(e.what()).find("requires its parent"), std::string::npos);
    }
}

TEST(RedReport, RejectsBadDocuments) {
    auto& cat = snapshot();
    auto with = [&](const char* key, json value) {
        auto doc = minimal_red();
        if (value.is_null()) doc.erase(key);
        else doc[key] = value;
        return field_of([&] { parse_red_report(doc.dump(), cat); });
    };
    EXPECT_EQ(with("technique_ids", json::array({"T1003"})), "<no error>");
    EXPECT_EQ(with("technique_ids", json::array({"T1078"})), "technique_ids");  // wrong tactic
    EXPECT_EQ(with("technique_ids", json::array({"T9999"})), "technique_ids");
    EXPECT_EQ(with("technique_ids", json::array()), "technique_ids");
    EXPECT_EQ(with("technique_ids", json::array({"T1110.001"})), "technique_ids");
    EXPECT_EQ(with("technique_ids", json::array({"T1064"})), "technique_ids");  // deprecated
    EXPECT_EQ(with("tactic_id", "TA9999"), "tactic_id");
    EXPECT_EQ(with("start_time", "yesterday"), "start_time");
    EXPECT_EQ(with("start_time", nullptr), "start_time");
    EXPECT_EQ(with("outcome", "won"), "outcome");
    EXPECT_EQ(with("target", 7), "target");
    EXPECT_EQ(with("color", "red"), "color");
    EXPECT_EQ(with("desirable_mitigation_ids", json::array({"M9999"})), "desirable_mitigation_ids");
    EXPECT_EQ(with("desirable_detection_ids", json::array({"Telepathy"})), "desirable_detection_ids");
    EXPECT_THROW(parse_red_report("{not json", cat), validation_error);
    EXPECT_THROW(parse_red_report("[]", cat), validation_error);
}

TEST(RedReport, OverlayMergesDesirablesAndWeights) {
    auto& cat = snapshot();
    auto overlays = parse_overlay(
        json{{"overlays",
              {{{"report_id", "R1"},
                {"desirable_mitigation_ids", {"M1032"}},
                {"desirable_detection_ids", {"user account authentication"}},
                {"field_weights", {{"tactic", 0.5}}}}}}}
            .dump(),
        cat);
    auto red = parse_red_report(minimal_red().dump(), cat, overlays);
    EXPECT_EQ(red.desirable_mitigation_ids, std::set<std::string>{"M1032"});
    EXPECT_EQ(red.desirable_detection_ids, std::set<std::string>{component("User Account Authentication")});
    EXPECT_EQ(red.weights.tactic, 0.5);

    EXPECT_THROW(parse_overlay(R"({"overlays":[{"report_id":"R1"},{"report_id":"R1"}]})", cat), validation_error);
    EXPECT_THROW(parse_overlay(R"({"other":[]})", cat), validation_error);
}

TEST(RedReport, RoundTrip) {
    auto& cat = snapshot();
    auto doc = minimal_red();
    doc["technique_ids"] = {"T1110", "T1003"};
    doc["subtechnique_ids"] = {"T1110.001", "T1003.001"};
    doc["objective"] = "dump credentials";
    doc["desirable_mitigation_ids"] = {"M1032"};
    doc["desirable_detection_ids"] = {"Process Access"};
    doc["field_weights"] = {{"tactic", 0.25}, {"desirable_detection", 1.0}};
    doc["start_time"] = "2024-05-14T12:00:00.250+02:00";
    auto red = parse_red_report(doc.dump(), cat);
    auto again = parse_red_report(serialize(red), cat);
    EXPECT_EQ(red, again);
    EXPECT_EQ(format_rfc3339(red.start_time), "2024-05-14T10:00:00.250Z");
}

TEST(BlueReport, AppliedMitigation) {
    auto doc = minimal_blue();
    doc["mitigations"] = {{{"mitigation_id", "M1032"}, {"applied", true}}};
    auto blue = parse_blue_report(doc.dump(), snapshot());
    ASSERT_EQ(blue.mitigations.size(), 1u);
    EXPECT_TRUE(blue.mitigations[0].applied);
    EXPECT_EQ(format_rfc3339(blue.detection_start_time), "2024-05-14T08:05:00Z");
}

TEST(BlueReport, DetectionOnlyResponse) {
    auto doc = minimal_blue();
    doc["detection_types"] = {"Logon Session Creation"};
    auto blue = parse_blue_report(doc.dump(), snapshot());
    EXPECT_TRUE(blue.presumed_technique_ids.empty());
    EXPECT_FALSE(blue.presumed_tactic_id.has_value());
    EXPECT_EQ(blue.detection_types, std::set<std::string>{component("Logon Session Creation")});
}

TEST(BlueReport, RejectsBadDocuments) {
    auto& cat = snapshot();
    auto with = [&](const char* key, json value) {
        auto doc = minimal_blue();
        if (value.is_null()) doc.erase(key);
        else doc[key] = value;
        return field_of([&] { parse_blue_report(doc.dump(), cat); });
    };
    EXPECT_EQ(with("mitigations", json::array({{{"mitigation_id", "M1032"}}, {{"mitigation_id", "M1032"}}})),
              "mitigations");
    EXPECT_EQ(with("mitigations", json::array({{{"mitigation_id", "M9999"}}})), "mitigations");
    EXPECT_EQ(with("mitigations", json::array({{{"mitigation_id", "M1032"}, {"applied", "yes"}}})),
              "mitigations.applied");
    EXPECT_EQ(with("detection_types", json::array({"Telepathy"})), "detection_types");
    EXPECT_EQ(with("presumed_technique_ids", json::array({"T9999"})), "presumed_technique_ids");
    EXPECT_EQ(with("presumed_subtechnique_ids", json::array({"T1110"})), "presumed_subtechnique_ids");
    EXPECT_EQ(with("presumed_tactic_id", "TA9"), "presumed_tactic_id");
    EXPECT_EQ(with("detection_start_time", nullptr), "detection_start_time");
}

TEST(BlueReport, RoundTrip) {
    auto& cat = snapshot();
    auto doc = minimal_blue();
    doc["attack_ref"] = "R1";
    doc["presumed_tactic_id"] = "TA0006";
    doc["presumed_technique_ids"] = {"T1110"};
    doc["presumed_subtechnique_ids"] = {"T1110.003"};
    doc["mitigations"] = {{{"mitigation_id", "M1036"}, {"applied", false}}, {{"mitigation_id", "M1032"}, {"applied", true}}};
    doc["detection_types"] = {"application log content"};
    auto blue = parse_blue_report(doc.dump(), cat);
    EXPECT_EQ(parse_blue_report(serialize(blue), cat), blue);
}

// ---------------------------------------------------------------------------
// Pairing

namespace {

red_report red(const std::string& id, const std::string& target, const char* start) {
    red_report r;
    r.report_id = id;
    r.tactic_id = "TA0006";
    r.technique_ids = {"T1110"};
    r.target = target;
    r.start_time = at(start);
    return r;
}

blue_report blue(const std::string& id, const std::string& target, const char* start,
                 std::optional<std::string> ref = std::nullopt) {
    blue_report b;
    b.report_id = id;
    b.attack_ref = std::move(ref);
    b.target = target;
    b.detection_start_time = at(start);
    return b;
}

} // namespace

TEST(Pairing, ExplicitReference) {
    auto res = pair_reports({red("R1", "a", "2024-01-01T10:00:00Z")}, {blue("B1", "z", "2024-01-01T20:00:00Z", "R1")});
    ASSERT_EQ(res.pairs.size(), 1u);
    EXPECT_EQ(res.pairs[0].method, pairing_method::explicit_ref);
    EXPECT_EQ(res.pairs[0].blue->report_id, "B1");
}

TEST(Pairing, HeuristicWithinWindow) {
    auto res = pair_reports({red("R1", "a", "2024-01-01T10:00:00Z")}, {blue("B1", "a", "2024-01-01T10:10:00Z")},
                            pairing_policy{std::chrono::hours{2}});
    EXPECT_EQ(res.pairs[0].method, pairing_method::heuristic);
    EXPECT_TRUE(res.unmatched.empty());

    auto far = pair_reports({red("R1", "a", "2024-01-01T10:00:00Z")}, {blue("B1", "a", "2024-01-01T12:00:01Z")});
    EXPECT_EQ(far.pairs[0].method, pairing_method::unpaired);
    EXPECT_EQ(far.unmatched.size(), 1u);

    auto other_target = pair_reports({red("R1", "a", "2024-01-01T10:00:00Z")}, {blue("B1", "b", "2024-01-01T10:00:00Z")});
    EXPECT_FALSE(other_target.pairs[0].blue);
}

TEST(Pairing, UnknownReferenceIsUnmatchedWithWarning) {
    auto res = pair_reports({red("R1", "a", "2024-01-01T10:00:00Z")}, {blue("B1", "a", "2024-01-01T10:00:00Z", "R9")});
    ASSERT_EQ(res.unmatched.size(), 1u);
    EXPECT_EQ(res.unmatched[0].report_id, "B1");
    ASSERT_EQ(res.warnings.size(), 1u);
    EXPECT_NE(res.warnings[0].find("R9"), std::string::npos);
    EXPECT_EQ(res.pairs[0].method, pairing_method::unpaired);
}

TEST(Pairing, NearestFirstThenLexicographic) {
    std::vector<red_report> reds{red("R2", "a", "2024-01-01T10:00:00Z"), red("R1", "a", "2024-01-01T10:00:00Z"),
                                 red("R3", "a", "2024-01-01T11:00:00Z")};
    std::vector<blue_report> blues{blue("B1", "a", "2024-01-01T10:50:00Z"), blue("B2", "a", "2024-01-01T10:05:00Z")};
    auto res = pair_reports(reds, blues);
    ASSERT_EQ(res.pairs.size(), 3u);
    EXPECT_EQ(res.pairs[0].red.report_id, "R1");
    EXPECT_EQ(res.pairs[0].blue->report_id, "B2");  // 5 min, R1 < R2
    EXPECT_FALSE(res.pairs[1].blue);
    EXPECT_EQ(res.pairs[2].blue->report_id, "B1");  // 10 min to R3
}

TEST(Pairing, DoubleClaimAndDuplicates) {
    auto res = pair_reports({red("R1", "a", "2024-01-01T10:00:00Z")},
                            {blue("B1", "a", "2024-01-01T10:00:00Z", "R1"), blue("B2", "a", "2024-01-01T10:00:00Z", "R1")});
    EXPECT_EQ(res.pairs[0].blue->report_id, "B1");
    ASSERT_EQ(res.unmatched.size(), 1u);
    EXPECT_EQ(res.warnings.size(), 1u);
    EXPECT_THROW(pair_reports({red("R1", "a", "2024-01-01T10:00:00Z"), red("R1", "b", "2024-01-01T10:00:00Z")}, {}),
                 validation_error);
}

TEST(Pairing, DeterministicAndDisjoint) {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 50; ++round) {
        std::vector<red_report> reds;
        std::vector<blue_report> blues;
        auto stamp = [&](int minutes) {
            return format_rfc3339(at("2024-01-01T00:00:00Z") + std::chrono::minutes(minutes));
        };
        for (int i = 0; i < 8; ++i)
            reds.push_back(red("R" + std::to_string(i), "h" + std::to_string(rng() % 3),
                               stamp(static_cast<int>(rng() % 600)).c_str()));
        for (int i = 0; i < 8; ++i) {
            std::optional<std::string> ref;
            if (rng() % 3 == 0) ref = "R" + std::to_string(rng() % 10);
            blues.push_back(blue("B" + std::to_string(i), "h" + std::to_string(rng() % 3),
                                 stamp(static_cast<int>(rng() % 600)).c_str(), ref));
        }
        auto a = pair_reports(reds, blues);
        std::reverse(reds.begin(), reds.end());
        std::reverse(blues.begin(), blues.end());
        auto b = pair_reports(reds, blues);
        ASSERT_EQ(a.pairs.size(), b.pairs.size());
        std::set<std::string> used;
        std::size_t paired = 0;
        for (std::size_t i = 0; i < a.pairs.size(); ++i) {
            EXPECT_EQ(a.pairs[i].red.report_id, b.pairs[i].red.report_id);
            EXPECT_EQ(a.pairs[i].blue.has_value(), b.pairs[i].blue.has_value());
            EXPECT_EQ(a.pairs[i].method, b.pairs[i].method);
            if (a.pairs[i].blue) {
                ++paired;
                EXPECT_EQ(a.pairs[i].blue->report_id, b.pairs[i].blue->report_id);
                EXPECT_TRUE(used.insert(a.pairs[i].blue->report_id).second);
                if (a.pairs[i].method == pairing_method::explicit_ref)
                    EXPECT_EQ(a.pairs[i].blue->attack_ref, a.pairs[i].red.report_id);
                else
                    EXPECT_FALSE(a.pairs[i].blue->attack_ref.has_value());
            }
        }
        EXPECT_EQ(paired + a.unmatched.size(), blues.size());
        for (auto& u : a.unmatched) EXPECT_FALSE(used.count(u.report_id));
    }
}
