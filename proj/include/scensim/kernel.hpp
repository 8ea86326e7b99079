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
#include "scensim/flow.hpp"
#include "scensim/model.hpp"
#include "scensim/policy.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>

namespace scensim {

using FlowBindings = std::map<std::string, BoundFlow>;

/// Runs after behaviors, before the tick advances.
using EnvironmentHook = std::function<void(ModelState&)>;

/// Binds one flow per agent type. Throws InvalidArgument if a flow names a
/// type not in `types` or fails validation.
inline FlowBindings bind_flows(const std::map<std::string, BehaviourFlow>& flows, std::span<const AgentTypeDef> types) {
    FlowBindings out;
    for (const auto& [type_name, flow] : flows) {
        const AgentTypeDef* type = find_type(types, type_name);
        if (!type) throw InvalidArgument("flow bound to unknown agent type '" + type_name + "'");
        out.emplace(type_name, BoundFlow(flow, *type));
    }
    return out;
}

/// Advances the model one tick:
///   1. policy sweep (declaration order x id order)
///   2. flow walk for every agent in ascending id order
///   3. environment hook
///   4. tick + 1
/// Throws InvalidArgument before mutating anything if a live agent type has
/// no bound flow.
inline void step(ModelState& model, const FlowBindings& flows, std::span<const Policy> policies,
                 const EnvironmentHook& environment_update = {}) {
    std::vector<const BoundFlow*> agent_flows;
    agent_flows.reserve(model.agents.size());
    for (const auto& agent : model.agents) {
        auto it = flows.find(agent.agent_type);
        if (it == flows.end()) throw InvalidArgument("no flow bound for agent type '" + agent.agent_type + "'");
        agent_flows.push_back(&it->second);
    }

    sweep(policies, model);
    for (std::size_t i = 0; i < model.agents.size(); ++i) traverse(*agent_flows[i], model.agents[i], model);
    if (environment_update) environment_update(model);
    ++model.tick;
}

} // namespace scensim
