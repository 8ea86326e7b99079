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
#include "scensim/model.hpp"
#include "scensim/value.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scensim {

enum class CompareOp { eq, ne, lt, le, gt, ge, in_set };
enum class ActionVerb { set, add, mul };

inline std::string_view op_name(CompareOp op) {
    switch (op) {
    case CompareOp::eq: return "eq";
    case CompareOp::ne: return "ne";
    case CompareOp::lt: return "lt";
    case CompareOp::le: return "le";
    case CompareOp::gt: return "gt";
    case CompareOp::ge: return "ge";
    case CompareOp::in_set: return "in_set";
    }
    return "?";
}

inline CompareOp parse_op(std::string_view s) {
    for (auto op : {CompareOp::eq, CompareOp::ne, CompareOp::lt, CompareOp::le, CompareOp::gt, CompareOp::ge,
                    CompareOp::in_set})
        if (op_name(op) == s) return op;
    throw ParseError("unknown condition operator '" + std::string(s) + "'");
}

inline std::string_view verb_name(ActionVerb v) {
    switch (v) {
    case ActionVerb::set: return "set";
    case ActionVerb::add: return "add";
    case ActionVerb::mul: return "mul";
    }
    return "?";
}

inline ActionVerb parse_verb(std::string_view s) {
    for (auto v : {ActionVerb::set, ActionVerb::add, ActionVerb::mul})
        if (verb_name(v) == s) return v;
    throw ParseError("unknown action verb '" + std::string(s) + "'");
}

inline bool is_ordering(CompareOp op) {
    return op == CompareOp::lt || op == CompareOp::le || op == CompareOp::gt || op == CompareOp::ge;
}

struct Condition {
    std::string attribute;
    CompareOp op = CompareOp::eq;
    AttributeValue value;                  // unused for in_set
    std::vector<AttributeValue> value_set; // in_set only

    friend bool operator==(const Condition&, const Condition&) = default;
};

struct PolicyAction {
    std::string attribute;
    ActionVerb verb = ActionVerb::set;
    AttributeValue value;

    friend bool operator==(const PolicyAction&, const PolicyAction&) = default;
};

/// Conjunction of conditions guarding an ordered list of actions. No
/// conditions means the whole population of the agent type.
struct Policy {
    std::string name;
    std::string agent_type;
    std::vector<Condition> conditions;
    std::vector<PolicyAction> actions;
    std::optional<std::uint64_t> active_from;  // inclusive
    std::optional<std::uint64_t> active_until; // exclusive

    bool active_at(std::uint64_t tick) const {
        return (!active_from || tick >= *active_from) && (!active_until || tick < *active_until);
    }

    friend bool operator==(const Policy&, const Policy&) = default;
};

inline bool holds(const Condition& c, const AgentState& agent) {
    const AttributeValue& actual = agent.get(c.attribute);
    if (c.op == CompareOp::in_set) {
        for (const auto& v : c.value_set)
            if (compare_values(actual, v) == 0) return true;
        return false;
    }
    if (is_ordering(c.op) && !is_numeric(actual.tag()))
        throw TagError("operator " + std::string(op_name(c.op)) + " on non-numeric attribute '" + c.attribute + "'");
    const auto cmp = compare_values(actual, c.value);
    switch (c.op) {
    case CompareOp::eq: return cmp == 0;
    case CompareOp::ne: return cmp != 0;
    case CompareOp::lt: return cmp < 0;
    case CompareOp::le: return cmp <= 0;
    case CompareOp::gt: return cmp > 0;
    case CompareOp::ge: return cmp >= 0;
    case CompareOp::in_set: break;
    }
    return false;
}

inline bool is_eligible(const Policy& policy, const AgentState& agent, std::uint64_t tick) {
    if (agent.agent_type != policy.agent_type || !policy.active_at(tick)) return false;
    for (const auto& c : policy.conditions)
        if (!holds(c, agent)) return false;
    return true;
}

inline void apply_action(const PolicyAction& action, AgentState& agent) {
    if (action.verb == ActionVerb::set) {
        agent.set(action.attribute, action.value);
        return;
    }
    const AttributeValue& current = agent.get(action.attribute);
    if (current.tag() != action.value.tag() || !is_numeric(current.tag()))
        throw TagError(std::string(verb_name(action.verb)) + " on '" + action.attribute + "' needs a numeric value of tag " +
                       std::string(tag_name(current.tag())));
    const bool add = action.verb == ActionVerb::add;
    if (current.tag() == Tag::integer) {
        const auto a = current.as_integer(), b = action.value.as_integer();
        agent.set(action.attribute, AttributeValue::integer(add ? a + b : a * b));
    } else {
        const auto a = current.as_real(), b = action.value.as_real();
        agent.set(action.attribute, AttributeValue::real(add ? a + b : a * b));
    }
}

/// Applies the actions in list order.
inline void apply_actions(const Policy& policy, AgentState& agent) {
    for (const auto& a : policy.actions) apply_action(a, agent);
}

/// For each policy in declaration order, for each agent in id order: apply
/// the actions of eligible agents. Later policies see earlier effects.
inline void sweep(std::span<const Policy> policies, ModelState& model) {
    for (const auto& policy : policies)
        for (auto& agent : model.agents)
            if (is_eligible(policy, agent, model.tick)) apply_actions(policy, agent);
}

inline Diagnostics validate_policy(const Policy& policy, const AgentTypeDef& type) {
    Diagnostics out;
    const std::string base = "policies/" + policy.name;
    if (policy.agent_type != type.name)
        out.push_back({"agent-type-mismatch", "policy targets '" + policy.agent_type + "', checked against '" +
                                                  type.name + "'", base + "/agent_type"});
    auto check_value = [&](const AttributeDecl& decl, const AttributeValue& v, const std::string& loc) {
        if (v.tag() != decl.tag)
            out.push_back({"tag-mismatch", "'" + decl.name + "' is " + std::string(tag_name(decl.tag)) + ", value is " +
                                               std::string(tag_name(v.tag())), loc});
    };
    for (std::size_t i = 0; i < policy.conditions.size(); ++i) {
        const auto& c = policy.conditions[i];
        const std::string loc = base + "/conditions/" + std::to_string(i);
        const AttributeDecl* decl = type.find_attribute(c.attribute);
        if (!decl) {
            out.push_back({"unknown-attribute", "'" + c.attribute + "' is not an attribute of '" + type.name + "'", loc});
            continue;
        }
        if (is_ordering(c.op) && !is_numeric(decl->tag)) {
            out.push_back({"tag-mismatch", "operator " + std::string(op_name(c.op)) + " needs a numeric attribute, '" +
                                               c.attribute + "' is " + std::string(tag_name(decl->tag)), loc});
            continue;
        }
        if (c.op == CompareOp::in_set) {
            if (c.value_set.empty()) out.push_back({"empty-set", "in_set with no values", loc});
            for (const auto& v : c.value_set) check_value(*decl, v, loc);
        } else {
            check_value(*decl, c.value, loc);
        }
    }
    if (policy.actions.empty()) out.push_back({"empty-actions", "policy has no actions", base + "/actions"});
    for (std::size_t i = 0; i < policy.actions.size(); ++i) {
        const auto& a = policy.actions[i];
        const std::string loc = base + "/actions/" + std::to_string(i);
        const AttributeDecl* decl = type.find_attribute(a.attribute);
        if (!decl) {
            out.push_back({"unknown-attribute", "'" + a.attribute + "' is not an attribute of '" + type.name + "'", loc});
            continue;
        }
        if (a.verb != ActionVerb::set && !is_numeric(decl->tag)) {
            out.push_back({"tag-mismatch", std::string(verb_name(a.verb)) + " needs a numeric attribute, '" + a.attribute +
                                               "' is " + std::string(tag_name(decl->tag)), loc});
            continue;
        }
        check_value(*decl, a.value, loc);
    }
    if (policy.active_from && policy.active_until && *policy.active_until <= *policy.active_from)
        out.push_back({"inverted-window", "active_until must be greater than active_from", base + "/active_until"});
    return out;
}

// JSON -----------------------------------------------------------------------

namespace detail {

// Coerce to the declared attribute tag when one exists; otherwise keep the
// JSON-inferred tag so validation can report the problem.
inline AttributeValue schema_value(const nlohmann::json& j, const AgentTypeDef* type, const std::string& attribute) {
    AttributeValue v = value_from_json(j);
    if (type) {
        if (const AttributeDecl* decl = type->find_attribute(attribute))
            if (auto c = coerce(v, decl->tag)) return *c;
    }
    return v;
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* field, const std::string& where) {
    if (!j.is_object() || !j.contains(field)) throw ParseError(where + ": missing required field '" + field + "'");
    return j.at(field);
}

inline std::string require_string(const nlohmann::json& j, const char* field, const std::string& where) {
    const auto& v = require(j, field, where);
    if (!v.is_string()) throw ParseError(where + ": field '" + field + "' must be a string");
    return v.get<std::string>();
}

} // namespace detail

/// Parses one policy object. Values are coerced to the declared attribute
/// tags of `types`; unknown attributes are kept for validate_policy to flag.
/// Throws ParseError on structural problems or an unknown agent type.
inline Policy policy_from_json(const nlohmann::json& j, std::span<const AgentTypeDef> types) {
    Policy p;
    p.name = detail::require_string(j, "name", "policy");
    const std::string where = "policy '" + p.name + "'";
    p.agent_type = detail::require_string(j, "agent_type", where);
    const AgentTypeDef* type = find_type(types, p.agent_type);
    if (!type) throw ParseError(where + ": unknown agent type '" + p.agent_type + "'");

    const auto& conds = detail::require(j, "conditions", where);
    if (!conds.is_array()) throw ParseError(where + ": 'conditions' must be an array");
    for (const auto& cj : conds) {
        Condition c;
        c.attribute = detail::require_string(cj, "attribute", where + " condition");
        c.op = parse_op(detail::require_string(cj, "op", where + " condition"));
        const auto& v = detail::require(cj, "value", where + " condition");
        if (c.op == CompareOp::in_set) {
            if (!v.is_array()) throw ParseError(where + ": in_set value must be an array");
            for (const auto& e : v) c.value_set.push_back(detail::schema_value(e, type, c.attribute));
        } else {
            c.value = detail::schema_value(v, type, c.attribute);
        }
        p.conditions.push_back(std::move(c));
    }
    const auto& acts = detail::require(j, "actions", where);
    if (!acts.is_array()) throw ParseError(where + ": 'actions' must be an array");
    for (const auto& aj : acts) {
        PolicyAction a;
        a.attribute = detail::require_string(aj, "attribute", where + " action");
        a.verb = parse_verb(detail::require_string(aj, "verb", where + " action"));
        a.value = detail::schema_value(detail::require(aj, "value", where + " action"), type, a.attribute);
        p.actions.push_back(std::move(a));
    }
    auto tick_field = [&](const char* field) -> std::optional<std::uint64_t> {
        if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
        if (!j.at(field).is_number_unsigned()) throw ParseError(where + ": '" + field + "' must be a non-negative integer");
        return j.at(field).get<std::uint64_t>();
    };
    p.active_from = tick_field("active_from");
    p.active_until = tick_field("active_until");
    return p;
}

inline nlohmann::json policy_to_json(const Policy& p) {
    nlohmann::json conds = nlohmann::json::array();
    for (const auto& c : p.conditions) {
        nlohmann::json v;
        if (c.op == CompareOp::in_set) {
            v = nlohmann::json::array();
            for (const auto& e : c.value_set) v.push_back(e);
        } else {
            v = c.value;
        }
        conds.push_back({{"attribute", c.attribute}, {"op", op_name(c.op)}, {"value", v}});
    }
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& a : p.actions) acts.push_back({{"attribute", a.attribute}, {"verb", verb_name(a.verb)}, {"value", a.value}});
    nlohmann::json j{{"name", p.name}, {"agent_type", p.agent_type}, {"conditions", conds}, {"actions", acts}};
    if (p.active_from) j["active_from"] = *p.active_from;
    if (p.active_until) j["active_until"] = *p.active_until;
    return j;
}

/// One-line rendering: "<#conditions>/<#actions> [conds] -> [actions]".
inline std::string describe(const Policy& p) {
    std::string s = std::to_string(p.conditions.size()) + "/" + std::to_string(p.actions.size()) + " " + p.agent_type + " [";
    for (std::size_t i = 0; i < p.conditions.size(); ++i) {
        const auto& c = p.conditions[i];
        if (i) s += " & ";
        s += c.attribute + " " + std::string(op_name(c.op)) + " ";
        if (c.op == CompareOp::in_set) {
            s += "{";
            for (std::size_t k = 0; k < c.value_set.size(); ++k) s += (k ? "," : "") + c.value_set[k].to_string();
            s += "}";
        } else {
            s += c.value.to_string();
        }
    }
    s += "] -> [";
    for (std::size_t i = 0; i < p.actions.size(); ++i) {
        const auto& a = p.actions[i];
        if (i) s += "; ";
        s += std::string(verb_name(a.verb)) + " " + a.attribute + " " + a.value.to_string();
    }
    s += "]";
    if (p.active_from || p.active_until) {
        s += " @[" + (p.active_from ? std::to_string(*p.active_from) : "") + "," +
             (p.active_until ? std::to_string(*p.active_until) : "") + ")";
    }
    return s;
}

} // namespace scensim
