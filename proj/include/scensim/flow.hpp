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
#include "scensim/rng.hpp"
#include "scensim/value.hpp"
#include "scensim/xml.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace scensim {

enum class NodeKind { start, behavior, terminal };

inline std::string_view kind_name(NodeKind kind) {
    switch (kind) {
    case NodeKind::start: return "start";
    case NodeKind::behavior: return "behavior";
    case NodeKind::terminal: return "terminal";
    }
    return "?";
}

struct FlowNode {
    std::string id;
    NodeKind kind = NodeKind::behavior;
    std::string behavior_name; // non-empty iff kind == behavior
    double exec_probability = 1.0;

    friend bool operator==(const FlowNode&, const FlowNode&) = default;
};

struct FlowEdge {
    std::string source;
    std::string target;
    double weight = 1.0;

    friend bool operator==(const FlowEdge&, const FlowEdge&) = default;
};

/// Directed graph over an agent type's behaviors. The walk of one tick begins
/// at `start_id`, which names either a behavior-less start node or, when the
/// graph has no explicit start, its unique entry behavior node.
struct BehaviourFlow {
    std::string agent_type;
    std::vector<FlowNode> nodes;
    std::vector<FlowEdge> edges;
    std::string start_id;
    std::optional<std::size_t> max_visits_per_tick; // unset: 4 x node count

    std::size_t visit_limit() const { return max_visits_per_tick.value_or(4 * nodes.size()); }

    const FlowNode* find_node(const std::string& id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }
};

/// Copy with nodes sorted by id and edges by (source, target, weight).
inline BehaviourFlow canonicalized(BehaviourFlow flow) {
    std::sort(flow.nodes.begin(), flow.nodes.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::sort(flow.edges.begin(), flow.edges.end(), [](const auto& a, const auto& b) {
        return std::tie(a.source, a.target, a.weight) < std::tie(b.source, b.target, b.weight);
    });
    return flow;
}

/// Equality up to node and edge order. The visit limit is compared by its
/// effective value.
inline bool structurally_equal(const BehaviourFlow& a, const BehaviourFlow& b) {
    auto ca = canonicalized(a);
    auto cb = canonicalized(b);
    return ca.agent_type == cb.agent_type && ca.start_id == cb.start_id && ca.nodes == cb.nodes &&
           ca.edges == cb.edges && ca.visit_limit() == cb.visit_limit();
}

namespace detail {

inline std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// First yEd-style <y:NodeLabel> text found below `el`.
inline std::optional<std::string> find_editor_label(const xml::Element& el) {
    for (const auto& c : el.children) {
        if (c.local_name() == "NodeLabel") return trim(c.text);
        if (auto found = find_editor_label(c)) return found;
    }
    return std::nullopt;
}

inline bool is_start_label(const std::string& label) { return lower(label) == "start"; }

inline bool is_terminal_label(const std::string& label) {
    auto l = lower(label);
    return l.empty() || l == "end" || l == "stop" || l == "terminal";
}

} // namespace detail

/// Reads a GraphML document. Node behavior names come from a data key named
/// `label`, falling back to an embedded yEd NodeLabel; `p` sets the execution
/// probability and edge key `w` the weight. A node labelled "start" (any
/// case) is the entry; otherwise the unique node without incoming edges is.
/// Unlabelled nodes and nodes labelled end/stop/terminal carry no behavior.
/// Unknown keys are ignored.
inline BehaviourFlow parse_graphml(std::string_view xml_text) {
    const xml::Element root = xml::parse(xml_text);
    if (root.local_name() != "graphml") throw ParseError("root element is <" + root.name + ">, not <graphml>");

    // GraphML data elements reference <key> ids; resolve them to attr.name.
    std::map<std::string, std::string> key_names;
    for (const auto* key : root.children_named("key")) {
        const std::string* id = key->attribute("id");
        if (!id) throw ParseError("<key> without id");
        const std::string* name = key->attribute("attr.name");
        key_names[*id] = name ? *name : *id;
    }
    auto data_name = [&](const xml::Element& data) -> std::string {
        const std::string* key = data.attribute("key");
        if (!key) throw ParseError("<data> without key attribute");
        auto it = key_names.find(*key);
        return it == key_names.end() ? *key : it->second;
    };

    auto graphs = root.children_named("graph");
    if (graphs.empty()) throw ParseError("GraphML document has no <graph>");
    const xml::Element& graph = *graphs.front();

    BehaviourFlow flow;
    std::optional<std::string> declared_start;
    for (const auto* data : graph.children_named("data")) {
        const std::string name = data_name(*data);
        if (name == "agent_type") flow.agent_type = detail::trim(data->text);
        else if (name == "start") declared_start = detail::trim(data->text);
        else if (name == "max_visits") {
            auto v = parse_real(data->text);
            if (!v || *v < 1 || std::trunc(*v) != *v) throw ParseError("max_visits must be a positive integer");
            flow.max_visits_per_tick = static_cast<std::size_t>(*v);
        }
    }

    std::set<std::string> ids;
    std::vector<std::string> labels;
    for (const auto* node : graph.children_named("node")) {
        const std::string* id = node->attribute("id");
        if (!id) throw ParseError("<node> without id");
        if (!ids.insert(*id).second) throw ParseError("duplicate node id '" + *id + "'");
        FlowNode fn{*id, NodeKind::behavior, "", 1.0};
        std::optional<std::string> label;
        for (const auto* data : node->children_named("data")) {
            const std::string name = data_name(*data);
            if (name == "label") label = detail::trim(data->text);
            else if (name == "p") {
                auto p = parse_real(data->text);
                if (!p || !(*p >= 0.0 && *p <= 1.0))
                    throw ParseError("node '" + *id + "': execution probability '" + detail::trim(data->text) +
                                     "' outside [0,1]");
                fn.exec_probability = *p;
            }
        }
        if (!label) label = detail::find_editor_label(*node);
        labels.push_back(label.value_or(""));
        flow.nodes.push_back(std::move(fn));
    }

    for (const auto* edge : graph.children_named("edge")) {
        const std::string* source = edge->attribute("source");
        const std::string* target = edge->attribute("target");
        if (!source || !target) throw ParseError("<edge> without source/target");
        if (!ids.count(*source)) throw ParseError("edge references missing node '" + *source + "'");
        if (!ids.count(*target)) throw ParseError("edge references missing node '" + *target + "'");
        FlowEdge fe{*source, *target, 1.0};
        for (const auto* data : edge->children_named("data")) {
            if (data_name(*data) != "w") continue;
            auto w = parse_real(data->text);
            if (!w || !(*w > 0.0) || !std::isfinite(*w))
                throw ParseError("edge " + *source + "->" + *target + ": weight '" + detail::trim(data->text) +
                                 "' must be positive");
            fe.weight = *w;
        }
        flow.edges.push_back(std::move(fe));
    }

    std::vector<std::size_t> start_labelled;
    for (std::size_t i = 0; i < flow.nodes.size(); ++i) {
        auto& node = flow.nodes[i];
        if (detail::is_start_label(labels[i])) {
            node.kind = NodeKind::start;
            start_labelled.push_back(i);
        } else if (detail::is_terminal_label(labels[i])) {
            node.kind = NodeKind::terminal;
        } else {
            node.behavior_name = labels[i];
        }
        if (node.kind != NodeKind::behavior) node.exec_probability = 1.0;
    }

    if (start_labelled.size() > 1) throw ParseError("more than one node labelled 'start'");
    if (start_labelled.size() == 1) {
        flow.start_id = flow.nodes[start_labelled.front()].id;
    } else if (declared_start) {
        if (!ids.count(*declared_start)) throw ParseError("declared start node '" + *declared_start + "' not found");
        flow.start_id = *declared_start;
    } else {
        std::map<std::string, std::size_t> in_degree;
        for (const auto& e : flow.edges) ++in_degree[e.target];
        std::vector<std::size_t> entries;
        for (std::size_t i = 0; i < flow.nodes.size(); ++i)
            if (!in_degree.count(flow.nodes[i].id)) entries.push_back(i);
        if (entries.size() != 1) throw ParseError("no identifiable start node");
        auto& entry = flow.nodes[entries.front()];
        if (entry.kind == NodeKind::terminal) entry.kind = NodeKind::start;
        flow.start_id = entry.id;
    }
    return flow;
}

/// Emits the engine's plain GraphML dialect with nodes sorted by id and
/// edges by (source, target). Every node carries `label` and `p`, every edge
/// `w`. Graph-level keys appear only when they carry information the node
/// data cannot express.
inline std::string serialize_graphml(const BehaviourFlow& input) {
    const BehaviourFlow flow = canonicalized(input);
    const FlowNode* start = flow.find_node(flow.start_id);
    const bool explicit_start = start && start->kind != NodeKind::start;

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n";
    out += "  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n";
    out += "  <key id=\"p\" for=\"node\" attr.name=\"p\" attr.type=\"double\"/>\n";
    out += "  <key id=\"w\" for=\"edge\" attr.name=\"w\" attr.type=\"double\"/>\n";
    if (!flow.agent_type.empty())
        out += "  <key id=\"agent_type\" for=\"graph\" attr.name=\"agent_type\" attr.type=\"string\"/>\n";
    if (explicit_start) out += "  <key id=\"start\" for=\"graph\" attr.name=\"start\" attr.type=\"string\"/>\n";
    if (flow.max_visits_per_tick)
        out += "  <key id=\"max_visits\" for=\"graph\" attr.name=\"max_visits\" attr.type=\"int\"/>\n";
    out += "  <graph id=\"G\" edgedefault=\"directed\">\n";
    if (!flow.agent_type.empty()) out += "    <data key=\"agent_type\">" + xml::escape(flow.agent_type) + "</data>\n";
    if (explicit_start) out += "    <data key=\"start\">" + xml::escape(flow.start_id) + "</data>\n";
    if (flow.max_visits_per_tick)
        out += "    <data key=\"max_visits\">" + std::to_string(*flow.max_visits_per_tick) + "</data>\n";
    for (const auto& n : flow.nodes) {
        std::string label = n.kind == NodeKind::start      ? "start"
                            : n.kind == NodeKind::terminal ? "end"
                                                           : n.behavior_name;
        out += "    <node id=\"" + xml::escape(n.id) + "\">";
        out += "<data key=\"label\">" + xml::escape(label) + "</data>";
        out += "<data key=\"p\">" + format_real(n.exec_probability) + "</data>";
        out += "</node>\n";
    }
    std::size_t k = 0;
    for (const auto& e : flow.edges) {
        out += "    <edge id=\"e" + std::to_string(k++) + "\" source=\"" + xml::escape(e.source) + "\" target=\"" +
               xml::escape(e.target) + "\">";
        out += "<data key=\"w\">" + format_real(e.weight) + "</data></edge>\n";
    }
    out += "  </graph>\n</graphml>\n";
    return out;
}

/// Default flow: a start node with one unit-weight edge to each behavior, so
/// each tick executes exactly one uniformly chosen behavior.
inline BehaviourFlow generate_raw_flow(const AgentTypeDef& type) {
    if (type.behaviors.empty()) throw InvalidArgument("agent type '" + type.name + "' has no behaviors");
    BehaviourFlow flow;
    flow.agent_type = type.name;
    flow.start_id = "n0";
    flow.nodes.push_back({"n0", NodeKind::start, "", 1.0});
    for (std::size_t i = 0; i < type.behaviors.size(); ++i) {
        std::string id = "n" + std::to_string(i + 1);
        flow.nodes.push_back({id, NodeKind::behavior, type.behaviors[i].name, 1.0});
        flow.edges.push_back({"n0", id, 1.0});
    }
    return flow;
}

/// start -> b1 -> b2 -> ... -> bn, all probabilities 1.
inline BehaviourFlow make_sequential_flow(const std::string& agent_type, const std::vector<std::string>& behaviors) {
    BehaviourFlow flow;
    flow.agent_type = agent_type;
    flow.start_id = "n0";
    flow.nodes.push_back({"n0", NodeKind::start, "", 1.0});
    std::string prev = "n0";
    for (std::size_t i = 0; i < behaviors.size(); ++i) {
        std::string id = "n" + std::to_string(i + 1);
        flow.nodes.push_back({id, NodeKind::behavior, behaviors[i], 1.0});
        flow.edges.push_back({prev, id, 1.0});
        prev = id;
    }
    return flow;
}

/// Everything that would prevent binding `flow` to `type`. Empty means
/// bindable.
inline Diagnostics validate(const BehaviourFlow& flow, const AgentTypeDef& type) {
    Diagnostics out;
    if (!flow.agent_type.empty() && flow.agent_type != type.name) {
        out.push_back({"agent-type-mismatch", "flow is for '" + flow.agent_type + "', bound to '" + type.name + "'",
                       "agent_type"});
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < flow.nodes.size(); ++i) {
        const auto& n = flow.nodes[i];
        const std::string loc = "nodes/" + n.id;
        if (!index.emplace(n.id, i).second) out.push_back({"duplicate-node", "duplicate node id '" + n.id + "'", loc});
        if (n.kind == NodeKind::behavior) {
            if (n.behavior_name.empty()) out.push_back({"unresolved-behavior", "behavior node without a name", loc});
            else if (!type.find_behavior(n.behavior_name))
                out.push_back({"unresolved-behavior",
                               "behavior '" + n.behavior_name + "' is not registered for '" + type.name + "'", loc});
        }
        if (!(n.exec_probability >= 0.0 && n.exec_probability <= 1.0))
            out.push_back({"probability-range", "execution probability " + format_real(n.exec_probability) +
                                                    " outside [0,1]", loc});
    }
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& e : flow.edges) {
        const std::string loc = "edges/" + e.source + "->" + e.target;
        if (!index.count(e.source) || !index.count(e.target)) {
            out.push_back({"bad-edge-endpoint", "edge endpoint not in node set", loc});
            continue;
        }
        if (!(e.weight > 0.0) || !std::isfinite(e.weight))
            out.push_back({"weight-range", "edge weight " + format_real(e.weight) + " must be positive", loc});
        adjacency[e.source].push_back(e.target);
    }
    if (flow.max_visits_per_tick && *flow.max_visits_per_tick == 0)
        out.push_back({"visit-limit", "max_visits_per_tick must be positive", "max_visits"});
    if (!index.count(flow.start_id)) {
        out.push_back({"missing-start", "flow has no start node", "start"});
        return out;
    }
    std::set<std::string> seen{flow.start_id};
    std::queue<std::string> frontier;
    frontier.push(flow.start_id);
    while (!frontier.empty()) {
        auto id = frontier.front();
        frontier.pop();
        for (const auto& t : adjacency[id])
            if (seen.insert(t).second) frontier.push(t);
    }
    for (const auto& n : flow.nodes)
        if (!seen.count(n.id))
            out.push_back({"unreachable-node", "node '" + n.id + "' is not reachable from start", "nodes/" + n.id});
    return out;
}

/// Validated, index-resolved flow with normalized transition probabilities.
/// Immutable; share freely between concurrent runs.
class BoundFlow {
public:
    struct Node {
        std::string id;
        BehaviorFn behavior; // empty for start/terminal nodes
        double exec_probability = 1.0;
        std::vector<std::size_t> targets;
        std::vector<double> cdf; // cumulative normalized weights, parallel to targets
    };

    /// Throws InvalidArgument listing the diagnostics if `flow` is not
    /// bindable.
    BoundFlow(const BehaviourFlow& flow, const AgentTypeDef& type) : agent_type_(type.name) {
        if (auto diags = validate(flow, type); !diags.empty()) {
            std::string msg = "flow for '" + type.name + "' is not bindable:";
            for (const auto& d : diags) msg += " [" + d.code + "] " + d.message + ";";
            throw InvalidArgument(msg);
        }
        std::map<std::string, std::size_t> index;
        for (const auto& n : flow.nodes) {
            index[n.id] = nodes_.size();
            Node bn;
            bn.id = n.id;
            bn.exec_probability = n.exec_probability;
            if (n.kind == NodeKind::behavior) bn.behavior = type.find_behavior(n.behavior_name)->fn;
            nodes_.push_back(std::move(bn));
        }
        std::vector<std::vector<double>> weights(nodes_.size());
        for (const auto& e : flow.edges) {
            auto s = index.at(e.source);
            nodes_[s].targets.push_back(index.at(e.target));
            weights[s].push_back(e.weight);
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            double total = 0;
            for (double w : weights[i]) total += w;
            double acc = 0;
            for (double w : weights[i]) {
                acc += w;
                nodes_[i].cdf.push_back(acc / total);
            }
            if (!nodes_[i].cdf.empty()) nodes_[i].cdf.back() = 1.0;
        }
        start_ = index.at(flow.start_id);
        limit_ = flow.visit_limit();
    }

    const std::string& agent_type() const { return agent_type_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t start() const { return start_; }
    std::size_t visit_limit() const { return limit_; }

    /// Probability of moving from node `from` to its i-th target.
    double transition_probability(std::size_t from, std::size_t i) const {
        const auto& cdf = nodes_[from].cdf;
        return i == 0 ? cdf[0] : cdf[i] - cdf[i - 1];
    }

private:
    std::string agent_type_;
    std::vector<Node> nodes_;
    std::size_t start_ = 0;
    std::size_t limit_ = 0;
};

struct WalkResult {
    std::size_t visits = 0;
    bool truncated = false;
};

/// One tick's walk for one agent. Each behavior node runs with its execution
/// probability; skipped or not, the walk then follows an outgoing edge picked
/// by normalized weight. Randomness is drawn only for probabilities strictly
/// inside (0,1) and for nodes with two or more outgoing edges. The walk stops
/// at a node without outgoing edges or after visit_limit() visits; the latter
/// reports truncated.
inline WalkResult traverse(const BoundFlow& flow, AgentState& agent, BehaviorContext& ctx, RandomStream& rng) {
    WalkResult result;
    std::size_t current = flow.start();
    const auto& nodes = flow.nodes();
    for (;;) {
        ++result.visits;
        const auto& node = nodes[current];
        if (node.behavior && rng.bernoulli(node.exec_probability)) node.behavior(agent, ctx, rng);
        if (node.targets.empty()) return result;
        if (result.visits >= flow.visit_limit()) {
            result.truncated = true;
            return result;
        }
        current = node.targets[rng.pick(node.cdf)];
    }
}

/// Walk for an agent owned by `model`, using the model's stream and bumping
/// its truncation counter.
inline WalkResult traverse(const BoundFlow& flow, AgentState& agent, ModelState& model) {
    BehaviorContext ctx{model.tick, model.parameters, model.environment};
    auto r = traverse(flow, agent, ctx, model.rng);
    if (r.truncated) ++model.truncated_walks;
    return r;
}

} // namespace scensim
