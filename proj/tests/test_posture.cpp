#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <regex>

#include "support.hpp"

using namespace rangescore;
using namespace testing_support;

namespace {

evaluation_result result(std::string team, std::string tactic, intermediate_scores s, bool answered = true) {
    evaluation_result r;
    r.red_id = "R-" + tactic;
    if (answered) r.blue_id = "B-" + tactic;
    r.team_id = std::move(team);
    r.tactic_id = std::move(tactic);
    r.pairing = answered ? pairing_method::explicit_ref : pairing_method::unpaired;
    r.intermediates = s;
    r.final = final_score(s, score_weights{});
    r.attack_size = 2;
    return r;
}

std::vector<std::pair<double, double>> points_of(const std::string& svg, const std::string& cls) {
    std::regex poly("<polygon class=\"" + cls + "\" points=\"([^\"]*)\"");
    std::smatch m;
    if (!std::regex_search(svg, m, poly)) return {};
    std::vector<std::pair<double, double>> out;
    std::istringstream in(m[1].str());
    std::string pair;
    while (in >> pair) {
        auto comma = pair.find(',');
        out.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
    }
    return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

} // namespace

TEST(Posture, SingleResult) {
    std::vector<evaluation_result> rs{result("t", "TA1", {1.0, 0.5, 0.25, 0.0})};
    auto p = aggregate_posture("t", rs);
    EXPECT_EQ(p.dims, (posture_dims{1.0, 0.5, 0.25, 0.0, 1.0}));
    EXPECT_EQ(p.n_attacks, 1u);
    EXPECT_DOUBLE_EQ(p.final_mean, 0.4375);
}

TEST(Posture, MeanAndCoverage) {
    std::vector<evaluation_result> rs{result("t", "TA1", {1, 1, 1, 1}), result("t", "TA2", {}, false)};
    auto p = aggregate_posture("t", rs);
    EXPECT_EQ(p.dims, (posture_dims{0.5, 0.5, 0.5, 0.5, 0.5}));
    EXPECT_DOUBLE_EQ(p.final_mean, 0.5);
    ASSERT_EQ(p.per_tactic.size(), 2u);
    EXPECT_EQ(p.per_tactic.at("TA2"), posture_dims{});
}

TEST(Posture, EmptyOrAllExcludedThrows) {
    EXPECT_THROW(aggregate_posture("t", {}), error);
    auto r = result("t", "TA1", {1, 1, 1, 1});
    r.excluded = true;
    std::vector<evaluation_result> rs{r};
    EXPECT_THROW(aggregate_posture("t", rs), error);
}

TEST(Posture, AttackSizeWeighting) {
    auto big = result("t", "TA1", {1, 1, 1, 1});
    big.attack_size = 3;
    auto small = result("t", "TA2", {0, 0, 0, 0});
    small.attack_size = 1;
    std::vector<evaluation_result> rs{big, small};
    EXPECT_DOUBLE_EQ(aggregate_posture("t", rs, posture_weighting::attack_size).dims.defense, 0.75);
    EXPECT_DOUBLE_EQ(aggregate_posture("t", rs, posture_weighting::uniform).dims.defense, 0.5);
}

TEST(Posture, PermutationInvariant) {
    std::mt19937_64 rng(5);
    auto u = [&] { return static_cast<double>(rng() % 1001) / 1000.0; };
    for (int round = 0; round < 50; ++round) {
        std::vector<evaluation_result> rs;
        for (int i = 0; i < 8; ++i)
            rs.push_back(result("t", "TA" + std::to_string(i % 3), {u(), u(), u(), u()}, rng() % 4 != 0));
        auto a = aggregate_posture("t", rs);
        std::shuffle(rs.begin(), rs.end(), rng);
        auto b = aggregate_posture("t", rs);
        for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(a.dims.values()[k], b.dims.values()[k], 1e-12);
        EXPECT_NEAR(a.final_mean, b.final_mean, 1e-12);
        for (double v : a.dims.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Posture, AggregateAllGroupsByTeam) {
    auto excluded = result("c", "TA1", {1, 1, 1, 1});
    excluded.excluded = true;
    std::vector<evaluation_result> rs{result("b", "TA1", {1, 1, 1, 1}), result("a", "TA1", {0, 0, 0, 0}),
                                      result("b", "TA2", {0, 0, 0, 0}), excluded};
    auto ps = aggregate_all(rs, posture_weighting::uniform);
    ASSERT_EQ(ps.size(), 2u);
    EXPECT_EQ(ps[0].team_id, "a");
    EXPECT_EQ(ps[1].team_id, "b");
    EXPECT_EQ(ps[1].n_attacks, 2u);
}

TEST(Svg, Structure) {
    team_posture p;
    p.team_id = "blue<1>";
    p.dims = {1.0, 0.5, 0.25, 0.0, 0.75};
    auto svg = render_posture_svg(p);
    EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
    EXPECT_NE(svg.find("version=\"1.1\""), std::string::npos);
    EXPECT_NE(svg.find("blue&lt;1&gt;"), std::string::npos);
    EXPECT_EQ(count(svg, "class=\"axis\""), 5u);
    EXPECT_EQ(count(svg, "class=\"grid\""), 4u);
    EXPECT_EQ(count(svg, "class=\"point\""), 5u);
    EXPECT_EQ(count(svg, "class=\"label\""), 5u);
    for (auto name : posture_dimension_names) EXPECT_NE(svg.find(std::string(name)), std::string::npos);
    EXPECT_EQ(svg, render_posture_svg(p));
}

TEST(Svg, DataVerticesSitAtValueTimesRadius) {
    team_posture p;
    p.team_id = "t";
    p.dims = {1.0, 0.5, 0.25, 0.0, 0.75};
    chart_options o;
    auto svg = render_posture_svg(p, o);
    auto data = points_of(svg, "data");
    ASSERT_EQ(data.size(), 5u);
    // The outer grid ring gives the centre and the rim radius independently.
    auto rim = points_of(svg, "grid");
    ASSERT_EQ(rim.size(), 5u);
    auto vals = p.dims.values();
    // Data polygon for value 0 collapses to the centre; the first axis points straight up.
    double cx = data[3].first, cy = data[3].second;
    double radius = std::hypot(rim[0].first - cx, rim[0].second - cy) * o.rings;
    EXPECT_NEAR(rim[0].first, cx, 0.01);
    for (std::size_t i = 0; i < 5; ++i)
        EXPECT_NEAR(std::hypot(data[i].first - cx, data[i].second - cy), vals[i] * radius, 0.02) << i;
    EXPECT_LT(data[0].second, cy);  // comprehension axis at the top
    EXPECT_GT(data[1].first, cx);   // then clockwise
}

TEST(Svg, ZeroPostureCollapsesToCentre) {
    team_posture p;
    p.team_id = "t";
    auto data = points_of(render_posture_svg(p), "data");
    ASSERT_EQ(data.size(), 5u);
    for (auto& pt : data) EXPECT_EQ(pt, data[0]);
}

TEST(Svg, ValuesAreClamped) {
    team_posture a, b;
    a.team_id = b.team_id = "t";
    a.dims = {1.7, -0.2, 0.5, 0.5, 0.5};
    b.dims = {1.0, 0.0, 0.5, 0.5, 0.5};
    EXPECT_EQ(points_of(render_posture_svg(a), "data"), points_of(render_posture_svg(b), "data"));
}

TEST(Export, RoundTripIsByteIdentical) {
    auto& cat = snapshot();
    auto reds = generate_red_reports(cat, 12, 8, at("2024-01-01T00:00:00Z"));
    evaluation_document doc;
    doc.catalog_version = cat.snapshot_version();
    doc.config.gamma = 0.4;
    for (std::size_t i = 0; i < reds.size(); ++i) {
        std::optional<blue_report> blue;
        if (i % 4 != 3) blue = random_blue(reds[i], cat, capec(), i);
        auto method = blue ? pairing_method::explicit_ref : pairing_method::unpaired;
        doc.results.push_back(evaluate_pair(report_pair{reds[i], blue, method}, cat, capec(), doc.config,
                                            i % 2 ? "team-1" : "team-2"));
    }
    doc.postures = aggregate_all(doc.results, doc.config.posture);
    doc.unmatched_blues = {{"team-1", "B-X"}};
    doc.warnings = {"something odd"};
    auto text = export_results(doc);
    auto back = parse_evaluation_document(text);
    EXPECT_EQ(back.results.size(), reds.size());
    EXPECT_EQ(export_results(back), text);
    EXPECT_EQ(back.unmatched_blues, doc.unmatched_blues);
    EXPECT_EQ(back.postures.size(), 2u);
}

TEST(Export, EmptyDocument) {
    evaluation_document doc;
    doc.catalog_version = "x";
    auto text = export_results(doc);
    auto j = json::parse(text);
    EXPECT_TRUE(j["pairs"].empty());
    EXPECT_TRUE(j["postures"].empty());
    EXPECT_EQ(export_results(parse_evaluation_document(text)), text);
}

TEST(Export, RejectsOtherVersionsAndGarbage) {
    evaluation_document doc;
    auto j = json::parse(export_results(doc));
    j["format_version"] = 2;
    EXPECT_THROW(parse_evaluation_document(j.dump()), error);
    EXPECT_THROW(parse_evaluation_document("{"), error);
    EXPECT_THROW(parse_evaluation_document("{}"), error);
}
