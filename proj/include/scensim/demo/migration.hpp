/*
 * Copyright 2026 The scensim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Desk-scale economic-migration model: migrants seek jobs, earn and spend,
// and relocate to the region with the best job availability after a spell of
// unemployment. All numbers are synthetic.

#include "scensim/batch.hpp"
#include "scensim/flow.hpp"
#include "scensim/model.hpp"
#include "scensim/policy.hpp"
#include "scensim/scenario.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace scensim::demo {

inline constexpr const char* kMigrant = "migrant";
inline constexpr std::size_t kRegionCount = 8;
inline constexpr double kJobseekerBenefit = 6.0;

inline std::string region_id(std::size_t i) { return "R" + std::to_string(i + 1); }

struct RegionDef {
    std::string region_id;
    double job_availability = 0;
    double wage = 0;
    double living_cost = 0;
};

inline ParameterSchema parameter_schema() {
    return {
        {"num_agents", Tag::integer, AttributeValue::integer(500)},
        {"wage", Tag::real, AttributeValue::real(10.0)},
        {"living_cost", Tag::real, AttributeValue::real(4.0)},
        {"availability_min", Tag::real, AttributeValue::real(0.1)},
        {"availability_max", Tag::real, AttributeValue::real(0.8)},
        {"initial_savings", Tag::real, AttributeValue::real(20.0)},
        {"relocation_months", Tag::integer, AttributeValue::integer(3)},
    };
}

inline ParameterMap default_parameters() {
    ParameterMap out;
    for (const auto& p : parameter_schema()) out.emplace(p.name, p.default_value);
    return out;
}

namespace detail {
inline const AttributeValue& param(const ParameterMap& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw NotFoundError("missing model parameter '" + name + "'");
    return it->second;
}
} // namespace detail

/// Availabilities spread linearly from availability_min (R1) to
/// availability_max (R8); wage and living cost uniform.
inline std::vector<RegionDef> regions_from_parameters(const ParameterMap& params) {
    const double lo = detail::param(params, "availability_min").as_real();
    const double hi = detail::param(params, "availability_max").as_real();
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) throw InvalidArgument("job availabilities must satisfy 0 <= min <= max <= 1");
    const double wage = detail::param(params, "wage").as_real();
    const double cost = detail::param(params, "living_cost").as_real();
    if (wage < 0 || cost < 0) throw InvalidArgument("wage and living_cost must be non-negative");
    std::vector<RegionDef> out;
    for (std::size_t i = 0; i < kRegionCount; ++i) {
        const double a = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kRegionCount - 1);
        out.push_back({region_id(i), a, wage, cost});
    }
    return out;
}

inline void install_regions(Environment& env, const std::vector<RegionDef>& regions) {
    for (const auto& r : regions) {
        env.regions[r.region_id] = {
            {"job_availability", AttributeValue::real(r.job_availability)},
            {"wage", AttributeValue::real(r.wage)},
            {"living_cost", AttributeValue::real(r.living_cost)},
            {"population", AttributeValue::integer(0)},
        };
    }
}

// Behaviors ----------------------------------------------------------------------

inline void seek_job(AgentState& agent, BehaviorContext& ctx, RandomStream& rng) {
    if (agent.get("employed").as_bool()) return;
    const auto& region = agent.get("region").as_region();
    const double p = ctx.environment.region_value(region, "job_availability").as_real();
    if (rng.bernoulli(p)) {
        agent.set("employed", AttributeValue::boolean(true));
        agent.set("months_unemployed", AttributeValue::integer(0));
    } else {
        agent.set("months_unemployed", AttributeValue::integer(agent.get("months_unemployed").as_integer() + 1));
    }
}

inline void earn_and_spend(AgentState& agent, BehaviorContext& ctx, RandomStream&) {
    const auto& region = agent.get("region").as_region();
    double savings = agent.get("savings").as_real();
    if (agent.get("employed").as_bool()) savings += ctx.environment.region_value(region, "wage").as_real();
    savings -= ctx.environment.region_value(region, "living_cost").as_real();
    agent.set("savings", AttributeValue::real(savings));
}

/// Ties on availability go to the lexicographically smallest region id.
inline std::string best_region(const Environment& env) {
    std::string best;
    double best_a = -1.0;
    for (const auto& [id, attrs] : env.regions) { // map: ascending id
        const double a = attrs.at("job_availability").as_real();
        if (a > best_a) {
            best_a = a;
            best = id;
        }
    }
    return best;
}

inline void consider_relocation(AgentState& agent, BehaviorContext& ctx, RandomStream&) {
    if (agent.get("employed").as_bool()) return;
    const auto threshold = detail::param(ctx.parameters, "relocation_months").as_integer();
    if (agent.get("months_unemployed").as_integer() < threshold) return;
    const std::string target = best_region(ctx.environment);
    if (!target.empty()) agent.set("region", AttributeValue::region(target));
}

inline AgentTypeDef migrant_type() {
    AgentTypeDef t;
    t.name = kMigrant;
    t.attribute_schema = {
        {"region", Tag::region, AttributeValue::region(region_id(0)),
         [](const Environment& env, const ParameterMap&, RandomStream& rng) {
             auto it = env.regions.begin();
             std::advance(it, static_cast<std::ptrdiff_t>(rng.index(env.regions.size())));
             return AttributeValue::region(it->first);
         }},
        {"employed", Tag::boolean, AttributeValue::boolean(false), {}},
        {"savings", Tag::real, AttributeValue::real(0.0),
         [](const Environment&, const ParameterMap& params, RandomStream&) {
             return AttributeValue::real(detail::param(params, "initial_savings").as_real());
         }},
        {"months_unemployed", Tag::integer, AttributeValue::integer(0), {}},
    };
    t.behaviors = {{"seek_job", seek_job}, {"earn_and_spend", earn_and_spend}, {"consider_relocation", consider_relocation}};
    return t;
}

// Reporters ----------------------------------------------------------------------

inline RegionValues count_by_region(const ModelState& m, bool unemployed_only) {
    RegionValues out;
    for (const auto& [id, attrs] : m.environment.regions) out[id] = 0.0;
    for (const auto& a : m.agents) {
        if (a.agent_type != kMigrant) continue;
        if (unemployed_only && a.get("employed").as_bool()) continue;
        out[a.get("region").as_region()] += 1.0;
    }
    return out;
}

inline std::vector<Reporter> reporters() {
    return {
        {"population", ReporterKind::model_scalar,
         [](const ModelState& m) -> ReporterValue { return static_cast<double>(m.agents.size()); }},
        {"employment_rate", ReporterKind::model_scalar,
         [](const ModelState& m) -> ReporterValue {
             if (m.agents.empty()) return 0.0;
             std::size_t employed = 0;
             for (const auto& a : m.agents) employed += a.get("employed").as_bool();
             return static_cast<double>(employed) / static_cast<double>(m.agents.size());
         }},
        {"mean_savings", ReporterKind::model_scalar,
         [](const ModelState& m) -> ReporterValue {
             if (m.agents.empty()) return 0.0;
             double total = 0;
             for (const auto& a : m.agents) total += a.get("savings").as_real();
             return total / static_cast<double>(m.agents.size());
         }},
        {"population_by_region", ReporterKind::per_region,
         [](const ModelState& m) -> ReporterValue { return count_by_region(m, false); }},
        {"unemployment_by_region", ReporterKind::per_region,
         [](const ModelState& m) -> ReporterValue { return count_by_region(m, true); }},
    };
}

inline void update_region_population(ModelState& m) {
    for (auto& [id, attrs] : m.environment.regions) attrs["population"] = AttributeValue::integer(0);
    for (const auto& a : m.agents) {
        auto& pop = m.environment.regions.at(a.get("region").as_region())["population"];
        pop = AttributeValue::integer(pop.as_integer() + 1);
    }
}

inline ModelDefinition model_definition() {
    ModelDefinition def;
    def.types = {migrant_type()};
    def.parameters = parameter_schema();
    def.population = [](const ParameterMap& params) {
        return std::map<std::string, std::int64_t>{{kMigrant, detail::param(params, "num_agents").as_integer()}};
    };
    def.setup = [](ModelState& m) { install_regions(m.environment, regions_from_parameters(m.parameters)); };
    def.environment_update = update_region_population;
    def.reporters = reporters();
    return def;
}

// Fixtures -------------------------------------------------------------------------

/// Synthetic 4x2 grid of rectangles, one per region, with the default
/// parameters' region properties.
inline nlohmann::json regions_geojson(const ParameterMap& params = default_parameters()) {
    nlohmann::json features = nlohmann::json::array();
    const auto regions = regions_from_parameters(params);
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const double x0 = -10.5 + static_cast<double>(i % 4) * 1.0;
        const double y0 = 51.5 + static_cast<double>(i / 4) * 2.0;
        const double x1 = x0 + 1.0, y1 = y0 + 2.0;
        const auto& r = regions[i];
        features.push_back({
            {"type", "Feature"},
            {"properties",
             {{"region_id", r.region_id},
              {"job_availability", r.job_availability},
              {"wage", r.wage},
              {"living_cost", r.living_cost}}},
            {"geometry",
             {{"type", "Polygon"},
              {"coordinates", nlohmann::json::array({nlohmann::json::array(
                                  {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}})})}}},
        });
    }
    return {{"type", "FeatureCollection"}, {"features", features}};
}

inline Policy jobseeker_policy(double benefit = kJobseekerBenefit) {
    return {"Jobseeker Policy",
            kMigrant,
            {{"employed", CompareOp::eq, AttributeValue::boolean(false), {}}},
            {{"savings", ActionVerb::add, AttributeValue::real(benefit)}},
            std::nullopt,
            std::nullopt};
}

inline BehaviourFlow sequential_flow() {
    return make_sequential_flow(kMigrant, {"seek_job", "earn_and_spend", "consider_relocation"});
}

/// Same behaviors as sequential_flow() with earning before job seeking.
inline BehaviourFlow reversed_sequential_flow() {
    return make_sequential_flow(kMigrant, {"earn_and_spend", "seek_job", "consider_relocation"});
}

/// Branching flow with a guarded cycle and a probabilistic node.
inline BehaviourFlow complex_flow() {
    BehaviourFlow f;
    f.agent_type = kMigrant;
    f.start_id = "start";
    f.nodes = {
        {"start", NodeKind::start, "", 1.0},
        {"seek", NodeKind::behavior, "seek_job", 1.0},
        {"earn", NodeKind::behavior, "earn_and_spend", 1.0},
        {"move", NodeKind::behavior, "consider_relocation", 0.5},
        {"end", NodeKind::terminal, "", 1.0},
    };
    f.edges = {
        {"start", "seek", 2.0}, {"start", "earn", 1.0}, {"seek", "earn", 1.0}, {"earn", "move", 1.0},
        {"earn", "end", 3.0},   {"move", "seek", 1.0},  {"move", "end", 1.0},
    };
    return f;
}

/// sequential_flow() as a yEd-style document: labels live in y:NodeLabel
/// inside nodegraphics data, plus layout metadata the parser ignores.
inline std::string yed_sequential_graphml() {
    const auto flow = sequential_flow();
    std::string out =
        "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
        "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" xmlns:y=\"http://www.yworks.com/xml/graphml\">\n"
        "  <key for=\"node\" id=\"d6\" yfiles.type=\"nodegraphics\"/>\n"
        "  <key for=\"edge\" id=\"d10\" yfiles.type=\"edgegraphics\"/>\n"
        "  <key attr.name=\"description\" attr.type=\"string\" for=\"node\" id=\"d5\"/>\n"
        "  <graph edgedefault=\"directed\" id=\"G\">\n";
    double y = 0;
    for (const auto& n : flow.nodes) {
        const std::string label = n.kind == NodeKind::start ? "Start" : n.behavior_name;
        out += "    <node id=\"" + n.id + "\">\n      <data key=\"d5\"/>\n      <data key=\"d6\">\n        <y:ShapeNode>\n"
               "          <y:Geometry height=\"30.0\" width=\"120.0\" x=\"0.0\" y=\"" + format_real(y) + "\"/>\n"
               "          <y:Fill color=\"#FFCC00\" transparent=\"false\"/>\n"
               "          <y:NodeLabel alignment=\"center\" autoSizePolicy=\"content\">" + label + "</y:NodeLabel>\n"
               "          <y:Shape type=\"roundrectangle\"/>\n        </y:ShapeNode>\n      </data>\n    </node>\n";
        y += 60;
    }
    std::size_t k = 0;
    for (const auto& e : flow.edges) {
        out += "    <edge id=\"e" + std::to_string(k++) + "\" source=\"" + e.source + "\" target=\"" + e.target +
               "\">\n      <data key=\"d10\">\n        <y:PolyLineEdge>\n          <y:Arrows source=\"none\" target=\"standard\"/>\n"
               "        </y:PolyLineEdge>\n      </data>\n    </edge>\n";
    }
    out += "  </graph>\n</graphml>\n";
    return out;
}

inline Scenario make_scenario(std::string name, std::string description, BehaviourFlow flow,
                              std::vector<Policy> policies = {}, std::optional<std::string> flow_path = std::nullopt) {
    Scenario s;
    s.name = std::move(name);
    s.description = std::move(description);
    s.parameters = default_parameters();
    s.policies = std::move(policies);
    s.flows.emplace(kMigrant, FlowSource{std::move(flow_path), std::move(flow)});
    return s;
}

struct DemoBundle {
    ModelDefinition model;
    nlohmann::json regions_geojson;
    Scenario baseline;
    Scenario jobseeker;
};

/// Baseline (raw flow, no policies) and the same scenario plus the
/// "Jobseeker Policy" (unemployed migrants receive a benefit every tick).
inline DemoBundle build_demo_bundle() {
    DemoBundle b;
    b.model = model_definition();
    b.regions_geojson = regions_geojson();
    const auto raw = generate_raw_flow(b.model.types.front());
    b.baseline = make_scenario("baseline", "Default parameters, raw behaviour flow, no interventions.", raw);
    b.jobseeker = make_scenario("jobseeker", "Baseline plus a per-tick benefit for unemployed migrants.", raw,
                                {jobseeker_policy()});
    return b;
}

} // namespace scensim::demo
