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

// scensim command-line front end over the demo migration model.

#include "scensim/batch.hpp"
#include "scensim/demo/migration.hpp"
#include "scensim/scenario.hpp"
#include "scensim/server.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace scensim;

namespace {

void write_output(const std::string& out, const std::string& content) {
    if (out == "-") {
        std::cout << content;
        return;
    }
    const fs::path p(out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + out + "'");
    f << content;
}

std::vector<Scenario> load_all(const std::vector<std::string>& files, const ModelDefinition& def) {
    std::vector<Scenario> out;
    for (const auto& f : files) out.push_back(load_scenario_file(f, def.types, def.parameters));
    return out;
}

int cmd_run(const std::vector<std::string>& files, const SimulationSettings& settings, std::uint64_t seed,
            const std::string& store, std::size_t parallelism) {
    const auto def = demo::model_definition();
    const auto scenarios = load_all(files, def);
    bool valid = true;
    for (std::size_t i = 0; i < scenarios.size(); ++i)
        for (const auto& d : validate_scenario(scenarios[i], def.types, def.parameters)) {
            std::cerr << files[i] << ": " << d.code << " at " << d.location << ": " << d.message << "\n";
            valid = false;
        }
    if (!valid) return 1;
    const auto plan = plan_batch(std::span<const Scenario>(scenarios), settings, seed);
    const auto results = execute_batch(plan, scenarios, def, parallelism);
    std::size_t failed = 0;
    for (const auto& r : results) {
        persist_result(r, store);
        if (!r.completed()) {
            ++failed;
            std::cerr << r.run_id << ": failed: " << r.failure_reason << "\n";
        }
    }
    std::cout << results.size() - failed << "/" << results.size() << " runs completed; store " << store << "\n";
    return failed == 0 ? 0 : 1;
}

int cmd_aggregate(const std::string& store, const std::string& scenario, const std::string& reporter,
                  const std::string& out) {
    std::vector<RunResult> runs;
    for (auto& r : load_store(store))
        if (r.spec.scenario_id == scenario) runs.push_back(std::move(r));
    if (runs.empty()) throw NotFoundError("no runs for scenario '" + scenario + "' in " + store);
    write_output(out, series_to_csv(aggregate(runs, reporter)));
    return 0;
}

int cmd_compare(const std::vector<std::string>& files, const std::string& out) {
    const auto def = demo::model_definition();
    const auto scenarios = load_all(files, def);
    write_output(out, comparison_to_json(compare(scenarios)).dump(2) + "\n");
    return 0;
}

int cmd_validate(const std::vector<std::string>& files) {
    const auto def = demo::model_definition();
    int status = 0;
    for (const auto& f : files) {
        const auto diags = validate_scenario(load_scenario_file(f, def.types, def.parameters), def.types, def.parameters);
        for (const auto& d : diags) std::cout << f << ": " << d.code << " at " << d.location << ": " << d.message << "\n";
        if (diags.empty()) std::cout << f << ": ok\n";
        else status = 1;
    }
    return status;
}

int cmd_rawflow(const std::string& type, const std::string& out) {
    const auto def = demo::model_definition();
    const AgentTypeDef* t = find_type(def.types, type);
    if (!t) throw NotFoundError("unknown agent type '" + type + "'");
    write_output(out, serialize_graphml(generate_raw_flow(*t)));
    return 0;
}

/// Writes the demo data set: flows, scenarios referencing them, geometry.
int cmd_demo(const std::string& dir) {
    const fs::path root(dir);
    const auto b = demo::build_demo_bundle();
    const auto raw = generate_raw_flow(b.model.types.front());
    write_output((root / "flows" / "raw.graphml").string(), serialize_graphml(raw));
    write_output((root / "flows" / "sequential.graphml").string(), serialize_graphml(demo::sequential_flow()));
    write_output((root / "flows" / "sequential_reversed.graphml").string(),
                 serialize_graphml(demo::reversed_sequential_flow()));
    write_output((root / "flows" / "complex.graphml").string(), serialize_graphml(demo::complex_flow()));
    write_output((root / "flows" / "yed_sequential.graphml").string(), demo::yed_sequential_graphml());

    auto emit = [&](Scenario s, const std::string& flow, const std::string& file) {
        s.flows.begin()->second.path = "../flows/" + flow;
        write_output((root / "scenarios" / file).string(), save_scenario(s).dump(2) + "\n");
    };
    emit(b.baseline, "raw.graphml", "baseline.json");
    emit(b.jobseeker, "raw.graphml", "jobseeker.json");
    emit(demo::make_scenario("sequential", "Seek a job, then earn and spend, then consider relocating.",
                             demo::sequential_flow()),
         "sequential.graphml", "sequential.json");
    emit(demo::make_scenario("sequential_reversed", "Earn and spend before seeking a job, then consider relocating.",
                             demo::reversed_sequential_flow()),
         "sequential_reversed.graphml", "sequential_reversed.json");
    emit(demo::make_scenario("complex", "Branching flow with a guarded cycle and a probabilistic relocation step.",
                             demo::complex_flow(), {demo::jobseeker_policy()}),
         "complex.graphml", "complex.json");
    write_output((root / "regions.geojson").string(), b.regions_geojson.dump(2) + "\n");
    std::cout << "demo data written to " << root.string() << "\n";
    return 0;
}

Server* g_server = nullptr;

int cmd_serve(const std::string& store, const std::string& host, int port, std::size_t parallelism) {
    const auto b = demo::build_demo_bundle();
    Server server(store, b.model, b.regions_geojson, Server::Options{parallelism, 16});
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    std::cout << "serving on http://" << host << ":" << port << " (store " << store << ")\n" << std::flush;
    server.serve(host, port);
    g_server = nullptr;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scensim: scenario-driven agent-based simulation"};
    app.require_subcommand(1);

    std::vector<std::string> scenario_files;
    SimulationSettings settings;
    std::uint64_t seed = 0;
    std::string out = "-";
    std::string store;
    std::size_t parallelism = std::max(1u, std::thread::hardware_concurrency());

    auto* run = app.add_subcommand("run", "Execute a batch and persist results");
    run->add_option("--scenarios", scenario_files, "Scenario JSON files")->required();
    run->add_option("--duration", settings.duration_steps, "Ticks per run")->required()->check(CLI::PositiveNumber);
    run->add_option("--iterations", settings.iterations_per_scenario, "Runs per scenario")->required()->check(CLI::PositiveNumber);
    run->add_option("--interval", settings.collection_interval, "Collection interval")->required()->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Base seed")->required();
    run->add_option("--out", store, "Results store directory")->required();
    run->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);

    std::string scenario_id, reporter;
    auto* agg = app.add_subcommand("aggregate", "Aggregate one reporter of one scenario as CSV");
    agg->add_option("--store", store, "Results store directory")->required();
    agg->add_option("--scenario", scenario_id, "Scenario id (its name)")->required();
    agg->add_option("--reporter", reporter, "Reporter column")->required();
    agg->add_option("--out", out, "Output file, '-' for stdout");

    auto* cmp = app.add_subcommand("compare", "Comparison table of scenarios as JSON");
    cmp->add_option("--scenarios", scenario_files, "Scenario JSON files")->required();
    cmp->add_option("--out", out, "Output file, '-' for stdout");

    auto* val = app.add_subcommand("validate", "Validate scenario files");
    val->add_option("--scenarios", scenario_files, "Scenario JSON files")->required();

    std::string agent_type = demo::kMigrant;
    auto* raw = app.add_subcommand("rawflow", "Write the raw behaviour flow of an agent type");
    raw->add_option("--agent-type", agent_type, "Agent type")->required();
    raw->add_option("--out", out, "Output file, '-' for stdout");

    std::string demo_dir;
    auto* dem = app.add_subcommand("demo", "Write the demo data set");
    dem->add_option("--out", demo_dir, "Target directory")->required();

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* srv = app.add_subcommand("serve", "Run the HTTP service");
    srv->add_option("--store", store, "Service root directory")->required();
    srv->add_option("--host", host, "Bind address");
    srv->add_option("--port", port, "Port");
    srv->add_option("--parallelism", parallelism, "Worker threads per job")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(scenario_files, settings, seed, store, parallelism);
        if (*agg) return cmd_aggregate(store, scenario_id, reporter, out);
        if (*cmp) return cmd_compare(scenario_files, out);
        if (*val) return cmd_validate(scenario_files);
        if (*raw) return cmd_rawflow(agent_type, out);
        if (*dem) return cmd_demo(demo_dir);
        if (*srv) return cmd_serve(store, host, port, parallelism);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
