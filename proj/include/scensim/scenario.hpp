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

#include "scensim/diagnostic.hpp"
#include "scensim/error.hpp"
#include "scensim/flow.hpp"
#include "scensim/model.hpp"
#include "scensim/policy.hpp"
#include "scensim/value.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace scensim {

/// A flow as referenced by a scenario: loaded from `path` (relative to the
/// scenario's directory) or given inline when `path` is unset.
struct FlowSource {
    std::optional<std::string> path;
    BehaviourFlow flow;
};

struct Scenario {
    std::string name;
    std::string description;
    ParameterMap parameters;
    std::vector<Policy> policies;
    std::map<std::string, FlowSource> flows; // agent type -> flow

    std::map<std::string, BehaviourFlow> flow_map() const {
        std::map<std::string, BehaviourFlow> out;
        for (const auto& [type, src] : flows) out.emplace(type, src.flow);
        return out;
    }
};

/// Equality with flows compared structurally.
inline bool scenarios_equal(const Scenario& a, const Scenario& b) {
    if (a.name != b.name || a.description != b.description || a.parameters != b.parameters ||
        a.policies != b.policies || a.flows.size() != b.flows.size())
        return false;
    for (const auto& [type, src] : a.flows) {
        auto it = b.flows.find(type);
        if (it == b.flows.end() || it->second.path != src.path || !structurally_equal(it->second.flow, src.flow))
            return false;
    }
    return true;
}

/// Settings shared by every scenario of a batch.
struct SimulationSettings {
    std::uint64_t duration_steps = 100;
    std::uint64_t iterations_per_scenario = 1;
    std::uint64_t collection_interval = 10;

    void check() const {
        if (duration_steps == 0) throw InvalidArgument("duration_steps must be positive");
        if (iterations_per_scenario == 0) throw InvalidArgument("iterations_per_scenario must be positive");
        if (collection_interval == 0) throw InvalidArgument("collection_interval must be positive");
        if (collection_interval > duration_steps)
            throw InvalidArgument("collection_interval must not exceed duration_steps");
    }

    friend bool operator==(const SimulationSettings&, const SimulationSettings&) = default;
};

inline nlohmann::json settings_to_json(const SimulationSettings& s) {
    return {{"duration_steps", s.duration_steps},
            {"iterations_per_scenario", s.iterations_per_scenario},
            {"collection_interval", s.collection_interval}};
}

/// Parses and checks a settings object; throws ParseError or InvalidArgument.
inline SimulationSettings settings_from_json(const nlohmann::json& j) {
    SimulationSettings s;
    auto field = [&](const char* name) {
        const auto& v = detail::require(j, name, "settings");
        if (!v.is_number_unsigned()) throw ParseError(std::string("settings: '") + name + "' must be a positive integer");
        return v.get<std::uint64_t>();
    };
    s.duration_steps = field("duration_steps");
    s.iterations_per_scenario = field("iterations_per_scenario");
    s.collection_interval = field("collection_interval");
    s.check();
    return s;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parses a scenario document. Flow path references resolve against
/// `base_dir`. Parameter and policy values are coerced to declared tags where
/// possible; declared parameters absent from the document take their
/// defaults. Throws ParseError for malformed JSON, missing required fields,
/// unknown agent types and flow parse failures.
inline Scenario load_scenario(std::string_view json_text, std::span<const AgentTypeDef> types,
                              const ParameterSchema& schema, const std::filesystem::path& base_dir = ".") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("scenario: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("scenario: document must be a JSON object");

    Scenario s;
    s.name = detail::require_string(j, "name", "scenario");
    const std::string where = "scenario '" + s.name + "'";
    if (j.contains("description")) {
        if (!j["description"].is_string()) throw ParseError(where + ": 'description' must be a string");
        s.description = j["description"].get<std::string>();
    }

    const auto& params = detail::require(j, "parameters", where);
    if (!params.is_object()) throw ParseError(where + ": 'parameters' must be an object");
    for (const auto& [name, value] : params.items()) {
        AttributeValue v = value_from_json(value);
        if (const ParameterDef* def = find_parameter(schema, name))
            if (auto c = coerce(v, def->tag)) v = *c;
        s.parameters.emplace(name, std::move(v));
    }
    for (const auto& def : schema) s.parameters.emplace(def.name, def.default_value);

    const auto& policies = detail::require(j, "policies", where);
    if (!policies.is_array()) throw ParseError(where + ": 'policies' must be an array");
    for (const auto& pj : policies) s.policies.push_back(policy_from_json(pj, types));

    const auto& flows = detail::require(j, "flows", where);
    if (!flows.is_object()) throw ParseError(where + ": 'flows' must be an object");
    for (const auto& [type, ref] : flows.items()) {
        if (!find_type(types, type)) throw ParseError(where + ": flow for unknown agent type '" + type + "'");
        FlowSource src;
        std::string xml_text;
        std::string context;
        if (ref.is_string()) {
            src.path = ref.get<std::string>();
            context = "flow file '" + *src.path + "'";
            try {
                xml_text = read_text_file(base_dir / *src.path);
            } catch (const NotFoundError& e) {
                throw ParseError(where + ": " + e.what());
            }
        } else if (ref.is_object() && ref.contains("inline") && ref["inline"].is_string()) {
            xml_text = ref["inline"].get<std::string>();
            context = "inline flow for '" + type + "'";
        } else {
            throw ParseError(where + ": flow for '" + type + "' must be a path or {\"inline\": \"<graphml>\"}");
        }
        try {
            src.flow = parse_graphml(xml_text);
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + context + ": " + e.what());
        }
        if (src.flow.agent_type.empty()) src.flow.agent_type = type;
        s.flows.emplace(type, std::move(src));
    }
    return s;
}

inline Scenario load_scenario_file(const std::filesystem::path& path, std::span<const AgentTypeDef> types,
                                   const ParameterSchema& schema) {
    return load_scenario(read_text_file(path), types, schema, path.parent_path());
}

/// Scenario document; flows loaded from files stay references, others are
/// written inline.
inline nlohmann::json save_scenario(const Scenario& s) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : s.parameters) params[k] = v;
    nlohmann::json policies = nlohmann::json::array();
    for (const auto& p : s.policies) policies.push_back(policy_to_json(p));
    nlohmann::json flows = nlohmann::json::object();
    for (const auto& [type, src] : s.flows) {
        if (src.path) flows[type] = *src.path;
        else flows[type] = {{"inline", serialize_graphml(src.flow)}};
    }
    nlohmann::json j{{"name", s.name}, {"parameters", params}, {"policies", policies}, {"flows", flows}};
    if (!s.description.empty()) j["description"] = s.description;
    return j;
}

/// Union of parameter, policy and flow diagnostics, plus a missing-flow
/// diagnostic for each agent type in `types` without a flow.
inline Diagnostics validate_scenario(const Scenario& s, std::span<const AgentTypeDef> types,
                                     const ParameterSchema& schema) {
    Diagnostics out;
    for (const auto& [name, value] : s.parameters) {
        const ParameterDef* def = find_parameter(schema, name);
        if (!def) out.push_back({"unknown-parameter", "parameter '" + name + "' is not declared by the model", "parameters/" + name});
        else if (value.tag() != def->tag)
            out.push_back({"tag-mismatch", "parameter '" + name + "' is " + std::string(tag_name(def->tag)) + ", value is " +
                                               std::string(tag_name(value.tag())), "parameters/" + name});
    }
    std::set<std::string> policy_names;
    for (const auto& p : s.policies) {
        if (!policy_names.insert(p.name).second)
            out.push_back({"duplicate-policy", "policy name '" + p.name + "' used more than once", "policies/" + p.name});
        const AgentTypeDef* type = find_type(types, p.agent_type);
        if (!type) {
            out.push_back({"unknown-agent-type", "policy targets unknown agent type '" + p.agent_type + "'", "policies/" + p.name});
            continue;
        }
        append(out, validate_policy(p, *type));
    }
    for (const auto& [type_name, src] : s.flows) {
        const AgentTypeDef* type = find_type(types, type_name);
        if (!type) {
            out.push_back({"unknown-agent-type", "flow for unknown agent type '" + type_name + "'", "flows/" + type_name});
            continue;
        }
        for (auto d : validate(src.flow, *type)) {
            d.location = "flows/" + type_name + "/" + d.location;
            out.push_back(std::move(d));
        }
    }
    for (const auto& type : types)
        if (!s.flows.count(type.name))
            out.push_back({"missing-flow", "no flow for agent type '" + type.name + "'", "flows/" + type.name});
    return out;
}

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

/// SHA-256 over the canonical structure: start node, effective visit limit,
/// nodes sorted by id, edges sorted by endpoints. Ignores element order,
/// editor metadata and the agent type name.
inline std::string flow_fingerprint(const BehaviourFlow& flow) {
    const BehaviourFlow c = canonicalized(flow);
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : c.nodes) nodes.push_back({n.id, kind_name(n.kind), n.behavior_name, n.exec_probability});
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : c.edges) edges.push_back({e.source, e.target, e.weight});
    nlohmann::json doc{{"v", 1}, {"start", c.start_id}, {"limit", c.visit_limit()}, {"nodes", nodes}, {"edges", edges}};
    return sha256_hex(doc.dump());
}

// Comparison table ------------------------------------------------------------

inline constexpr const char* kAbsentCell = "\xE2\x80\x94"; // U+2014

struct ComparisonRow {
    std::string kind; // "parameter" | "policy" | "flow"
    std::string facet;
    std::vector<std::string> cells; // one per scenario, in input order
    bool differs = false;
};

struct ComparisonTable {
    std::vector<std::string> scenarios;
    std::vector<ComparisonRow> rows;

    std::size_t differing_rows() const {
        std::size_t n = 0;
        for (const auto& r : rows) n += r.differs;
        return n;
    }
};

/// Rows: every parameter name (sorted), every policy name (first-appearance
/// order), every agent type with a flow (sorted, cell = fingerprint). A
/// scenario lacking a facet gets kAbsentCell.
inline ComparisonTable compare(std::span<const Scenario> scenarios) {
    if (scenarios.empty()) throw InvalidArgument("compare needs at least one scenario");
    ComparisonTable table;
    for (const auto& s : scenarios) table.scenarios.push_back(s.name);

    auto finish = [&](ComparisonRow row) {
        for (const auto& c : row.cells) row.differs = row.differs || c != row.cells.front();
        table.rows.push_back(std::move(row));
    };

    std::set<std::string> params;
    for (const auto& s : scenarios)
        for (const auto& [k, v] : s.parameters) params.insert(k);
    for (const auto& name : params) {
        ComparisonRow row{"parameter", name, {}, false};
        for (const auto& s : scenarios) {
            auto it = s.parameters.find(name);
            row.cells.push_back(it == s.parameters.end() ? std::string(kAbsentCell) : it->second.to_string());
        }
        finish(std::move(row));
    }

    std::vector<std::string> policy_names;
    for (const auto& s : scenarios)
        for (const auto& p : s.policies)
            if (std::find(policy_names.begin(), policy_names.end(), p.name) == policy_names.end())
                policy_names.push_back(p.name);
    for (const auto& name : policy_names) {
        ComparisonRow row{"policy", name, {}, false};
        for (const auto& s : scenarios) {
            auto it = std::find_if(s.policies.begin(), s.policies.end(), [&](const Policy& p) { return p.name == name; });
            row.cells.push_back(it == s.policies.end() ? std::string(kAbsentCell) : describe(*it));
        }
        finish(std::move(row));
    }

    std::set<std::string> flow_types;
    for (const auto& s : scenarios)
        for (const auto& [type, src] : s.flows) flow_types.insert(type);
    for (const auto& type : flow_types) {
        ComparisonRow row{"flow", type, {}, false};
        for (const auto& s : scenarios) {
            auto it = s.flows.find(type);
            row.cells.push_back(it == s.flows.end() ? std::string(kAbsentCell) : flow_fingerprint(it->second.flow));
        }
        finish(std::move(row));
    }
    return table;
}

inline nlohmann::json comparison_to_json(const ComparisonTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"kind", r.kind}, {"facet", r.facet}, {"cells", r.cells}, {"differs", r.differs}});
    return {{"scenarios", t.scenarios}, {"rows", rows}};
}

} // namespace scensim
