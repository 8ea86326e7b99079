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

#include "scensim/error.hpp"
#include "scensim/rng.hpp"
#include "scensim/value.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace scensim {

using AttributeMap = std::map<std::string, AttributeValue>;
using ParameterMap = std::map<std::string, AttributeValue>;

struct AgentState {
    std::uint64_t id = 0;
    std::string agent_type;
    AttributeMap attributes;

    const AttributeValue& get(const std::string& name) const {
        auto it = attributes.find(name);
        if (it == attributes.end())
            throw NotFoundError("agent " + std::to_string(id) + " has no attribute '" + name + "'");
        return it->second;
    }

    /// Replaces an existing attribute. The tag is fixed by the type schema.
    void set(const std::string& name, AttributeValue value) {
        auto it = attributes.find(name);
        if (it == attributes.end())
            throw NotFoundError("agent " + std::to_string(id) + " has no attribute '" + name + "'");
        if (it->second.tag() != value.tag())
            throw TagError("attribute '" + name + "' is " + std::string(tag_name(it->second.tag())) +
                           ", cannot assign " + std::string(tag_name(value.tag())));
        it->second = std::move(value);
    }

    friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// Model-level values plus one attribute map per region.
struct Environment {
    AttributeMap values;
    std::map<std::string, AttributeMap> regions;

    const AttributeValue& region_value(const std::string& region, const std::string& name) const {
        auto r = regions.find(region);
        if (r == regions.end()) throw NotFoundError("unknown region '" + region + "'");
        auto v = r->second.find(name);
        if (v == r->second.end())
            throw NotFoundError("region '" + region + "' has no attribute '" + name + "'");
        return v->second;
    }

    friend bool operator==(const Environment&, const Environment&) = default;
};

/// What a behavior may see of the model besides its own agent. Other agents
/// are deliberately absent.
struct BehaviorContext {
    std::uint64_t tick;
    const ParameterMap& parameters;
    Environment& environment;
};

/// Behaviors draw randomness only from the stream they are handed.
using BehaviorFn = std::function<void(AgentState&, BehaviorContext&, RandomStream&)>;

/// Initial value for one attribute, called per agent in id order.
using AttributeInitializer =
    std::function<AttributeValue(const Environment&, const ParameterMap&, RandomStream&)>;

struct AttributeDecl {
    std::string name;
    Tag tag = Tag::real;
    AttributeValue default_value;
    AttributeInitializer initializer; // optional
};

struct BehaviorDef {
    std::string name;
    BehaviorFn fn;
};

struct AgentTypeDef {
    std::string name;
    std::vector<AttributeDecl> attribute_schema;
    std::vector<BehaviorDef> behaviors;

    const AttributeDecl* find_attribute(const std::string& attr) const {
        for (const auto& a : attribute_schema)
            if (a.name == attr) return &a;
        return nullptr;
    }

    const BehaviorDef* find_behavior(const std::string& behavior) const {
        for (const auto& b : behaviors)
            if (b.name == behavior) return &b;
        return nullptr;
    }

    std::vector<std::string> behavior_names() const {
        std::vector<std::string> out;
        for (const auto& b : behaviors) out.push_back(b.name);
        return out;
    }
};

struct ParameterDef {
    std::string name;
    Tag tag = Tag::real;
    AttributeValue default_value;
};

using ParameterSchema = std::vector<ParameterDef>;

inline const ParameterDef* find_parameter(const ParameterSchema& schema, const std::string& name) {
    for (const auto& p : schema)
        if (p.name == name) return &p;
    return nullptr;
}

inline const AgentTypeDef* find_type(std::span<const AgentTypeDef> defs, const std::string& name) {
    for (const auto& d : defs)
        if (d.name == name) return &d;
    return nullptr;
}

struct ModelState {
    std::uint64_t tick = 0;
    std::vector<AgentState> agents; // ascending id
    Environment environment;
    ParameterMap parameters;
    RandomStream rng;
    /// Flow walks cut short by the per-tick visit guard.
    std::uint64_t truncated_walks = 0;

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Sets up regions and model-level values before agents are initialized.
using EnvironmentInit = std::function<void(ModelState&)>;

inline void check_type_defs(std::span<const AgentTypeDef> defs) {
    std::set<std::string> names;
    for (const auto& d : defs) {
        if (!names.insert(d.name).second)
            throw InvalidArgument("duplicate agent type '" + d.name + "'");
        std::set<std::string> attrs;
        for (const auto& a : d.attribute_schema) {
            if (!attrs.insert(a.name).second)
                throw InvalidArgument("duplicate attribute '" + a.name + "' in type '" + d.name + "'");
            if (a.default_value.tag() != a.tag)
                throw InvalidArgument("default of '" + d.name + "." + a.name + "' does not match its tag");
        }
        std::set<std::string> behaviors;
        for (const auto& b : d.behaviors)
            if (!behaviors.insert(b.name).second)
                throw InvalidArgument("duplicate behavior '" + b.name + "' in type '" + d.name + "'");
    }
}

/// Builds tick-0 state. Agents get consecutive ids in type-definition order;
/// stochastic initializers draw from the model stream in id order, after
/// `init` has run.
inline ModelState create_model(std::span<const AgentTypeDef> defs, ParameterMap parameters,
                               const std::map<std::string, std::int64_t>& population,
                               std::uint64_t seed, const EnvironmentInit& init = {}) {
    check_type_defs(defs);
    for (const auto& [type, count] : population) {
        if (!find_type(defs, type)) throw InvalidArgument("unknown agent type '" + type + "' in population");
        if (count < 0) throw InvalidArgument("negative population for '" + type + "'");
    }

    ModelState model;
    model.parameters = std::move(parameters);
    model.rng = RandomStream(seed);
    if (init) init(model);

    std::uint64_t next_id = 0;
    for (const auto& def : defs) {
        auto it = population.find(def.name);
        if (it == population.end()) continue;
        for (std::int64_t k = 0; k < it->second; ++k) {
            AgentState agent{next_id++, def.name, {}};
            for (const auto& decl : def.attribute_schema) {
                AttributeValue v = decl.initializer
                                       ? decl.initializer(model.environment, model.parameters, model.rng)
                                       : decl.default_value;
                if (v.tag() != decl.tag)
                    throw TagError("initializer for '" + def.name + "." + decl.name + "' produced " +
                                   std::string(tag_name(v.tag())));
                agent.attributes.emplace(decl.name, std::move(v));
            }
            model.agents.push_back(std::move(agent));
        }
    }
    return model;
}

inline nlohmann::json attributes_json(const AttributeMap& attrs) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : attrs) j[k] = v;
    return j;
}

/// Sorted-key JSON of tick, parameters, environment and agents (id order).
/// Values keep their tags: reals always print with a fraction or exponent.
inline nlohmann::json canonical_json(const ModelState& model) {
    nlohmann::json regions = nlohmann::json::object();
    for (const auto& [id, attrs] : model.environment.regions) regions[id] = attributes_json(attrs);
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& a : model.agents) {
        agents.push_back({{"id", a.id}, {"agent_type", a.agent_type}, {"attributes", attributes_json(a.attributes)}});
    }
    return {
        {"tick", model.tick},
        {"parameters", attributes_json(model.parameters)},
        {"environment", {{"values", attributes_json(model.environment.values)}, {"regions", regions}}},
        {"agents", agents},
    };
}

inline std::string canonical_serialization(const ModelState& model) { return canonical_json(model).dump(); }

} // namespace scensim
