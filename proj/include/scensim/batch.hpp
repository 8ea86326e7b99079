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
#include "scensim/kernel.hpp"
#include "scensim/model.hpp"
#include "scensim/rng.hpp"
#include "scensim/scenario.hpp"
#include "scensim/value.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <variant>
#include <vector>

namespace scensim {

// Reporters -------------------------------------------------------------------

enum class ReporterKind { model_scalar, per_region };

using RegionValues = std::map<std::string, double>;
using ReporterValue = std::variant<double, RegionValues>;

/// Pure read-only aggregation over model state.
struct Reporter {
    std::string name;
    ReporterKind kind = ReporterKind::model_scalar;
    std::function<ReporterValue(const ModelState&)> evaluate;
};

/// Sample column of one region of a per-region reporter.
inline std::string region_column(const std::string& reporter, const std::string& region) {
    return reporter + "[" + region + "]";
}

/// Everything execute_run needs besides the scenario: the model's types and
/// parameter schema, how parameters map to a population, setup and update
/// hooks, and the reporters to sample.
struct ModelDefinition {
    std::vector<AgentTypeDef> types;
    ParameterSchema parameters;
    std::function<std::map<std::string, std::int64_t>(const ParameterMap&)> population;
    EnvironmentInit setup;
    EnvironmentHook environment_update;
    std::vector<Reporter> reporters;

    const Reporter* find_reporter(const std::string& name) const {
        for (const auto& r : reporters)
            if (r.name == name) return &r;
        return nullptr;
    }
};

// Runs -----------------------------------------------------------------------

struct RunSpec {
    std::string scenario_id;
    std::size_t scenario_index = 0;
    std::size_t iteration_index = 0;
    std::uint64_t seed = 0;
    SimulationSettings settings;

    friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

inline std::string run_id(const RunSpec& spec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "s%03zu-i%03zu-%016llx", spec.scenario_index, spec.iteration_index,
                  static_cast<unsigned long long>(spec.seed));
    return buf;
}

enum class RunStatus { completed, failed };

struct Sample {
    std::uint64_t tick = 0;
    std::vector<double> values; // parallel to RunResult::columns

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct RunResult {
    std::string run_id;
    RunSpec spec;
    std::vector<std::string> columns;
    std::vector<Sample> samples;
    RunStatus status = RunStatus::completed;
    std::string failure_reason;
    double wall_time = 0.0; // seconds

    bool completed() const { return status == RunStatus::completed; }

    const std::vector<std::string>& column_names() const { return columns; }

    std::size_t column_index(const std::string& name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw NotFoundError("run " + run_id + " has no column '" + name + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }

    /// Equality of everything except wall time.
    bool same_content(const RunResult& o) const {
        return run_id == o.run_id && spec == o.spec && columns == o.columns && samples == o.samples &&
               status == o.status && failure_reason == o.failure_reason;
    }

    friend bool operator==(const RunResult&, const RunResult&) = default;
};

/// {0, k, 2k, ...} up to duration, plus duration itself.
inline std::vector<std::uint64_t> sample_ticks(std::uint64_t duration, std::uint64_t interval) {
    if (interval == 0) throw InvalidArgument("collection interval must be positive");
    std::vector<std::uint64_t> ticks;
    for (std::uint64_t t = 0; t <= duration; t += interval) ticks.push_back(t);
    if (ticks.back() != duration) ticks.push_back(duration);
    return ticks;
}

/// One spec per (scenario, iteration), scenario-major, with seeds from
/// derive_run_seed().
inline std::vector<RunSpec> plan_batch(std::span<const std::string> scenario_ids, const SimulationSettings& settings,
                                       std::uint64_t base_seed) {
    if (scenario_ids.empty()) throw InvalidArgument("batch needs at least one scenario");
    settings.check();
    std::vector<RunSpec> plan;
    plan.reserve(scenario_ids.size() * settings.iterations_per_scenario);
    for (std::size_t s = 0; s < scenario_ids.size(); ++s)
        for (std::size_t i = 0; i < settings.iterations_per_scenario; ++i)
            plan.push_back({scenario_ids[s], s, i, derive_run_seed(base_seed, s, i), settings});
    return plan;
}

inline std::vector<RunSpec> plan_batch(std::span<const Scenario> scenarios, const SimulationSettings& settings,
                                       std::uint64_t base_seed) {
    std::vector<std::string> ids;
    for (const auto& s : scenarios) ids.push_back(s.name);
    return plan_batch(std::span<const std::string>(ids), settings, base_seed);
}

namespace detail {

inline void sample_into(RunResult& result, const std::vector<Reporter>& reporters, const ModelState& model) {
    std::vector<std::string> columns;
    Sample sample{model.tick, {}};
    for (const auto& r : reporters) {
        ReporterValue v = r.evaluate(model);
        if (auto* scalar = std::get_if<double>(&v)) {
            columns.push_back(r.name);
            sample.values.push_back(*scalar);
        } else {
            for (const auto& [region, x] : std::get<RegionValues>(v)) {
                columns.push_back(region_column(r.name, region));
                sample.values.push_back(x);
            }
        }
    }
    if (result.samples.empty()) result.columns = std::move(columns);
    else if (columns != result.columns)
        throw Error("reporter columns changed at tick " + std::to_string(model.tick));
    result.samples.push_back(std::move(sample));
}

} // namespace detail

/// Builds the model from the scenario with spec.seed, steps it
/// duration_steps times and samples at the collection ticks. Any exception
/// marks the run failed; samples taken so far are kept.
inline RunResult execute_run(const RunSpec& spec, const Scenario& scenario, const ModelDefinition& def) {
    const auto started = std::chrono::steady_clock::now();
    RunResult result;
    result.run_id = run_id(spec);
    result.spec = spec;
    try {
        spec.settings.check();
        const auto population = def.population ? def.population(scenario.parameters)
                                               : std::map<std::string, std::int64_t>{};
        ModelState model = create_model(def.types, scenario.parameters, population, spec.seed, def.setup);
        const FlowBindings flows = bind_flows(scenario.flow_map(), def.types);
        const std::uint64_t k = spec.settings.collection_interval;
        const std::uint64_t duration = spec.settings.duration_steps;
        detail::sample_into(result, def.reporters, model);
        while (model.tick < duration) {
            step(model, flows, scenario.policies, def.environment_update);
            if (model.tick % k == 0 || model.tick == duration) detail::sample_into(result, def.reporters, model);
        }
    } catch (const std::exception& e) {
        result.status = RunStatus::failed;
        result.failure_reason = e.what();
    }
    result.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

/// Runs every spec on up to `parallelism` worker threads. `scenarios` is
/// indexed by RunSpec::scenario_index. Results are ordered by (scenario_index,
/// iteration_index) and do not depend on `parallelism`. `progress`, if given,
/// is incremented once per finished run.
inline std::vector<RunResult> execute_batch(std::span<const RunSpec> specs, std::span<const Scenario> scenarios,
                                            const ModelDefinition& def, std::size_t parallelism,
                                            std::atomic<std::size_t>* progress = nullptr) {
    if (parallelism == 0) throw InvalidArgument("parallelism must be at least 1");
    for (const auto& spec : specs)
        if (spec.scenario_index >= scenarios.size())
            throw InvalidArgument("run " + run_id(spec) + " references missing scenario index");

    std::vector<std::size_t> order(specs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(specs[a].scenario_index, specs[a].iteration_index) <
               std::tie(specs[b].scenario_index, specs[b].iteration_index);
    });

    std::vector<RunResult> results(specs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < order.size();) {
            const RunSpec& spec = specs[order[i]];
            results[i] = execute_run(spec, scenarios[spec.scenario_index], def);
            if (progress) progress->fetch_add(1);
        }
    };
    const std::size_t workers = std::min(parallelism, specs.size());
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    return results;
}

// Aggregation ------------------------------------------------------------------

struct AggregatePoint {
    std::uint64_t tick = 0;
    double mean = 0, std = 0, min = 0, max = 0;
    std::size_t count = 0;

    friend bool operator==(const AggregatePoint&, const AggregatePoint&) = default;
};

struct AggregateSeries {
    std::string scenario_id;
    std::string reporter;
    std::vector<AggregatePoint> points;
};

/// Per-tick statistics of one column across the completed runs; population
/// standard deviation. Throws InvalidArgument without completed runs and
/// Error when completed runs disagree on sample ticks.
inline AggregateSeries aggregate(std::span<const RunResult> results, const std::string& column) {
    std::vector<const RunResult*> runs;
    for (const auto& r : results)
        if (r.completed()) runs.push_back(&r);
    if (runs.empty()) throw InvalidArgument("no completed runs to aggregate");

    AggregateSeries series{runs.front()->spec.scenario_id, column, {}};
    std::vector<std::size_t> col;
    for (const auto* r : runs) {
        if (r->samples.size() != runs.front()->samples.size()) throw Error("runs have different sample counts");
        col.push_back(r->column_index(column));
    }
    const std::size_t n = runs.size();
    for (std::size_t s = 0; s < runs.front()->samples.size(); ++s) {
        AggregatePoint pt;
        pt.tick = runs.front()->samples[s].tick;
        pt.count = n;
        pt.min = pt.max = runs.front()->samples[s].values[col[0]];
        double sum = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const Sample& smp = runs[k]->samples[s];
            if (smp.tick != pt.tick) throw Error("runs have misaligned sample ticks");
            const double x = smp.values[col[k]];
            sum += x;
            pt.min = std::min(pt.min, x);
            pt.max = std::max(pt.max, x);
        }
        if (pt.min == pt.max) {
            pt.mean = pt.min;
            pt.std = 0;
        } else {
            pt.mean = sum / static_cast<double>(n);
            double ss = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const double d = runs[k]->samples[s].values[col[k]] - pt.mean;
                ss += d * d;
            }
            pt.std = std::sqrt(ss / static_cast<double>(n));
        }
        series.points.push_back(pt);
    }
    return series;
}

/// aggregate() for each region column of a per-region reporter.
inline std::map<std::string, AggregateSeries> aggregate_regions(std::span<const RunResult> results,
                                                               const std::string& reporter) {
    std::map<std::string, AggregateSeries> out;
    const RunResult* first = nullptr;
    for (const auto& r : results)
        if (r.completed()) {
            first = &r;
            break;
        }
    if (!first) throw InvalidArgument("no completed runs to aggregate");
    const std::string prefix = reporter + "[";
    for (const auto& c : first->columns) {
        if (c.size() > prefix.size() + 1 && c.compare(0, prefix.size(), prefix) == 0 && c.back() == ']') {
            std::string region = c.substr(prefix.size(), c.size() - prefix.size() - 1);
            out.emplace(region, aggregate(results, c));
        }
    }
    if (out.empty()) throw NotFoundError("no per-region columns for reporter '" + reporter + "'");
    return out;
}

inline nlohmann::json series_to_json(const AggregateSeries& s) {
    nlohmann::json ticks = nlohmann::json::array(), mean = nlohmann::json::array(), sd = nlohmann::json::array(),
                   mn = nlohmann::json::array(), mx = nlohmann::json::array(), count = nlohmann::json::array();
    for (const auto& p : s.points) {
        ticks.push_back(p.tick);
        mean.push_back(p.mean);
        sd.push_back(p.std);
        mn.push_back(p.min);
        mx.push_back(p.max);
        count.push_back(p.count);
    }
    return {{"scenario_id", s.scenario_id}, {"reporter", s.reporter}, {"ticks", ticks}, {"mean", mean},
            {"std", sd}, {"min", mn}, {"max", mx}, {"count", count}};
}

inline std::string series_to_csv(const AggregateSeries& s) {
    std::string out = "tick,mean,std,min,max,count\n";
    for (const auto& p : s.points) {
        out += std::to_string(p.tick) + "," + format_real(p.mean) + "," + format_real(p.std) + "," +
               format_real(p.min) + "," + format_real(p.max) + "," + std::to_string(p.count) + "\n";
    }
    return out;
}

// Results store ------------------------------------------------------------------
//
// <store>/runs/<run_id>/meta.json    spec, status, wall time, columns
// <store>/runs/<run_id>/samples.csv  tick,<column>...

inline std::string samples_csv(const RunResult& r) {
    std::string out = "tick";
    for (const auto& c : r.columns) {
        if (c.find_first_of(",\"\n\r") != std::string::npos) throw InvalidArgument("column name '" + c + "' not CSV-safe");
        out += "," + c;
    }
    out += "\n";
    for (const auto& s : r.samples) {
        out += std::to_string(s.tick);
        for (double v : s.values) out += "," + format_real(v);
        out += "\n";
    }
    return out;
}

inline nlohmann::json run_meta_json(const RunResult& r) {
    return {{"run_id", r.run_id},
            {"spec",
             {{"scenario_id", r.spec.scenario_id},
              {"scenario_index", r.spec.scenario_index},
              {"iteration_index", r.spec.iteration_index},
              {"seed", r.spec.seed},
              {"settings", settings_to_json(r.spec.settings)}}},
            {"status", r.completed() ? "completed" : "failed"},
            {"failure_reason", r.failure_reason},
            {"wall_time", r.wall_time},
            {"columns", r.columns}};
}

namespace detail {

inline void write_file_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw Error("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace detail

inline std::filesystem::path run_directory(const std::filesystem::path& store_root, const std::string& id) {
    return store_root / "runs" / id;
}

/// Writes one run's directory. Concurrent calls for different runs never
/// touch the same files.
inline void persist_result(const RunResult& r, const std::filesystem::path& store_root) {
    const auto dir = run_directory(store_root, r.run_id);
    std::filesystem::create_directories(dir);
    detail::write_file_atomically(dir / "samples.csv", samples_csv(r));
    detail::write_file_atomically(dir / "meta.json", run_meta_json(r).dump(2) + "\n");
}

/// Throws NotFoundError for an unknown run id and ParseError for corrupt
/// files.
inline RunResult load_result(const std::string& id, const std::filesystem::path& store_root) {
    const auto dir = run_directory(store_root, id);
    if (!std::filesystem::is_directory(dir)) throw NotFoundError("no run '" + id + "' in " + store_root.string());
    RunResult r;
    try {
        const auto meta = nlohmann::json::parse(read_text_file(dir / "meta.json"));
        r.run_id = meta.at("run_id").get<std::string>();
        const auto& spec = meta.at("spec");
        r.spec.scenario_id = spec.at("scenario_id").get<std::string>();
        r.spec.scenario_index = spec.at("scenario_index").get<std::size_t>();
        r.spec.iteration_index = spec.at("iteration_index").get<std::size_t>();
        r.spec.seed = spec.at("seed").get<std::uint64_t>();
        r.spec.settings = settings_from_json(spec.at("settings"));
        const auto status = meta.at("status").get<std::string>();
        if (status != "completed" && status != "failed") throw ParseError("bad status '" + status + "'");
        r.status = status == "completed" ? RunStatus::completed : RunStatus::failed;
        r.failure_reason = meta.at("failure_reason").get<std::string>();
        r.wall_time = meta.at("wall_time").get<double>();
        r.columns = meta.at("columns").get<std::vector<std::string>>();
    } catch (const NotFoundError&) {
        throw ParseError("run '" + id + "': meta.json missing");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("run '" + id + "': corrupt meta.json: " + e.what());
    } catch (const Error& e) {
        throw ParseError("run '" + id + "': corrupt meta.json: " + e.what());
    }
    if (r.run_id != id) throw ParseError("run '" + id + "': meta.json names run '" + r.run_id + "'");

    std::string csv;
    try {
        csv = read_text_file(dir / "samples.csv");
    } catch (const NotFoundError&) {
        throw ParseError("run '" + id + "': samples.csv missing");
    }
    std::istringstream lines(csv);
    std::string line;
    if (!std::getline(lines, line)) throw ParseError("run '" + id + "': samples.csv is empty");
    std::vector<std::string> header{"tick"};
    header.insert(header.end(), r.columns.begin(), r.columns.end());
    if (detail::split_csv_line(line) != header) throw ParseError("run '" + id + "': samples.csv header does not match meta.json");
    std::size_t row = 1;
    while (std::getline(lines, line)) {
        ++row;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError("run '" + id + "': samples.csv row " + std::to_string(row) + " has wrong field count");
        Sample s;
        auto tick = parse_real(fields[0]);
        if (!tick || *tick < 0 || std::trunc(*tick) != *tick)
            throw ParseError("run '" + id + "': bad tick in row " + std::to_string(row));
        s.tick = static_cast<std::uint64_t>(*tick);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            auto v = parse_real(fields[c]);
            if (!v) throw ParseError("run '" + id + "': bad value in row " + std::to_string(row));
            s.values.push_back(*v);
        }
        if (!r.samples.empty() && s.tick <= r.samples.back().tick)
            throw ParseError("run '" + id + "': sample ticks not increasing");
        r.samples.push_back(std::move(s));
    }
    return r;
}

/// All runs in a store, ordered by (scenario_index, iteration_index, run_id).
inline std::vector<RunResult> load_store(const std::filesystem::path& store_root) {
    std::vector<RunResult> out;
    const auto runs = store_root / "runs";
    if (!std::filesystem::is_directory(runs)) return out;
    for (const auto& entry : std::filesystem::directory_iterator(runs))
        if (entry.is_directory()) out.push_back(load_result(entry.path().filename().string(), store_root));
    std::sort(out.begin(), out.end(), [](const RunResult& a, const RunResult& b) {
        return std::tie(a.spec.scenario_index, a.spec.iteration_index, a.run_id) <
               std::tie(b.spec.scenario_index, b.spec.iteration_index, b.run_id);
    });
    return out;
}

} // namespace scensim
