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

// HTTP/JSON service over the scenario store, flow store and batch runner.
//
// <root>/scenarios/<id>.json          one document per scenario
// <root>/flows/<fingerprint>.graphml  content-addressed flows
// <root>/jobs/<job_id>/runs/...       per-job results store (batch layout)
//
// Scenario documents exchanged over the API carry each flow inline as
// {"inline": "<graphml>"} or by reference as {"fingerprint": "<sha256>"} to a
// previously uploaded flow. Stored scenarios reference their flows by path
// into <root>/flows.

#include "scensim/batch.hpp"
#include "scensim/diagnostic.hpp"
#include "scensim/error.hpp"
#include "scensim/flow.hpp"
#include "scensim/scenario.hpp"

#include "httplib.h"
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

namespace scensim {

enum class JobState { queued, running, completed, failed };

inline const char* job_state_name(JobState s) {
    switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::completed: return "completed";
    case JobState::failed: return "failed";
    }
    return "?";
}

/// State only moves forward; progress never decreases.
struct JobRecord {
    std::string job_id;
    std::vector<std::string> scenario_ids;
    SimulationSettings settings;
    std::uint64_t base_seed = 0;
    std::size_t parallelism = 1;
    std::string created_at;
    std::size_t total_runs = 0;
    std::atomic<std::size_t> completed_runs{0};
    std::atomic<JobState> state{JobState::queued};
    std::vector<std::string> failures;
    std::vector<Scenario> scenarios;  // snapshot at submission
    std::vector<RunResult> results;   // immutable once state is terminal

    bool finished() const {
        auto s = state.load();
        return s == JobState::completed || s == JobState::failed;
    }
};

class Server {
public:
    struct Options {
        std::size_t default_parallelism = 2;
        std::size_t max_parallelism = 16;
    };

    Server(std::filesystem::path root, ModelDefinition model, nlohmann::json geo)
        : Server(std::move(root), std::move(model), std::move(geo), Options{}) {}

    Server(std::filesystem::path root, ModelDefinition model, nlohmann::json geo, Options options)
        : root_(std::move(root)), model_(std::move(model)), geo_(std::move(geo)), options_(options) {
        std::filesystem::create_directories(root_ / "scenarios");
        std::filesystem::create_directories(root_ / "flows");
        std::filesystem::create_directories(root_ / "jobs");
        for (const auto& e : std::filesystem::directory_iterator(root_ / "scenarios")) {
            const auto stem = e.path().stem().string();
            if (e.path().extension() == ".json" && stem.size() > 1 && stem[0] == 's')
                next_scenario_ = std::max(next_scenario_, std::strtoull(stem.c_str() + 1, nullptr, 10) + 1);
        }
        for (const auto& e : std::filesystem::directory_iterator(root_ / "jobs")) {
            const auto name = e.path().filename().string();
            if (name.size() > 1 && name[0] == 'j')
                next_job_ = std::max(next_job_, std::strtoull(name.c_str() + 1, nullptr, 10) + 1);
        }
        routes();
        worker_ = std::jthread([this](std::stop_token st) { work(st); });
    }

    ~Server() { stop(); }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0) {
        int bound = port == 0 ? http_.bind_to_any_port(host) : (http_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
        listener_ = std::thread([this] { http_.listen_after_bind(); });
        http_.wait_until_ready();
        return bound;
    }

    /// Serves on the calling thread until stop().
    void serve(const std::string& host, int port) {
        if (!http_.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
    }

    void stop() {
        http_.stop();
        if (listener_.joinable()) listener_.join();
        if (worker_.joinable()) {
            worker_.request_stop();
            worker_.join();
        }
    }

    /// Blocks until the job is finished or the timeout elapses.
    bool wait_for(const std::string& job_id, std::chrono::milliseconds timeout) {
        auto job = find_job(job_id);
        if (!job) return false;
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (!job->finished()) {
            if (std::chrono::steady_clock::now() > deadline) return false;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        return true;
    }

    const std::filesystem::path& root() const { return root_; }

private:
    using Req = httplib::Request;
    using Res = httplib::Response;

    struct HttpError {
        int status;
        nlohmann::json body;
    };

    static HttpError http_error(int status, const std::string& message, nlohmann::json extra = nlohmann::json::object()) {
        extra["error"] = message;
        return {status, std::move(extra)};
    }

    static void reply(Res& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <class F>
    auto guarded(F f) {
        return [f](const Req& req, Res& res) {
            try {
                f(req, res);
            } catch (const HttpError& e) {
                reply(res, e.status, e.body);
            } catch (const NotFoundError& e) {
                reply(res, 404, {{"error", e.what()}});
            } catch (const ParseError& e) {
                reply(res, 400, {{"error", e.what()}});
            } catch (const InvalidArgument& e) {
                reply(res, 400, {{"error", e.what()}});
            } catch (const nlohmann::json::exception& e) {
                reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}});
            }
        };
    }

    static nlohmann::json parse_body(const Req& req) {
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            throw http_error(400, std::string("malformed JSON: ") + e.what());
        }
    }

    static std::string query(const Req& req, const char* name, bool required = true) {
        if (!req.has_param(name)) {
            if (required) throw http_error(400, std::string("missing query parameter '") + name + "'");
            return {};
        }
        return req.get_param_value(name);
    }

    // Scenario store ---------------------------------------------------------

    std::filesystem::path scenario_path(const std::string& id) const { return root_ / "scenarios" / (id + ".json"); }
    std::filesystem::path flow_path(const std::string& fp) const { return root_ / "flows" / (fp + ".graphml"); }

    static bool valid_scenario_id(const std::string& id) { return std::regex_match(id, std::regex("s[0-9]{4,}")); }

    std::string store_flow(const BehaviourFlow& flow) {
        const std::string fp = flow_fingerprint(flow);
        const auto path = flow_path(fp);
        if (!std::filesystem::exists(path)) detail::write_file_atomically(path, serialize_graphml(flow));
        return fp;
    }

    /// Replaces {"fingerprint": fp} flow references with inline content and
    /// rejects path references, then parses.
    Scenario scenario_from_api(nlohmann::json doc) const {
        if (!doc.is_object()) throw http_error(400, "scenario must be a JSON object");
        doc.erase("id");
        if (doc.contains("flows") && doc["flows"].is_object()) {
            for (auto& [type, ref] : doc["flows"].items()) {
                if (ref.is_string()) throw http_error(400, "flow for '" + type + "' must be inline or a fingerprint reference");
                if (ref.is_object() && !ref.contains("inline") && ref.contains("fingerprint")) {
                    const auto fp = ref["fingerprint"].get<std::string>();
                    if (!std::regex_match(fp, std::regex("[0-9a-f]{64}")) || !std::filesystem::exists(flow_path(fp)))
                        throw http_error(400, "flow for '" + type + "' references unknown fingerprint '" + fp + "'");
                    ref = {{"inline", read_text_file(flow_path(fp))}};
                }
            }
        }
        return load_scenario(doc.dump(), model_.types, model_.parameters);
    }

    nlohmann::json scenario_to_api(const std::string& id, const Scenario& s) const {
        auto doc = save_scenario(s);
        for (const auto& [type, src] : s.flows)
            doc["flows"][type] = {{"fingerprint", flow_fingerprint(src.flow)}, {"inline", serialize_graphml(src.flow)}};
        doc["id"] = id;
        return doc;
    }

    void write_scenario(const std::string& id, Scenario s) {
        for (auto& [type, src] : s.flows) src.path = "../flows/" + store_flow(src.flow) + ".graphml";
        detail::write_file_atomically(scenario_path(id), save_scenario(s).dump(2) + "\n");
    }

    Scenario read_scenario(const std::string& id) const {
        if (!valid_scenario_id(id) || !std::filesystem::exists(scenario_path(id)))
            throw NotFoundError("no scenario '" + id + "'");
        return load_scenario_file(scenario_path(id), model_.types, model_.parameters);
    }

    Diagnostics validate(const Scenario& s) const { return validate_scenario(s, model_.types, model_.parameters); }

    static nlohmann::json diagnostics_body(const Diagnostics& d) { return {{"valid", d.empty()}, {"diagnostics", nlohmann::json(d)}}; }

    // Jobs -------------------------------------------------------------------

    std::shared_ptr<JobRecord> find_job(const std::string& id) const {
        std::lock_guard lock(jobs_mutex_);
        auto it = jobs_.find(id);
        return it == jobs_.end() ? nullptr : it->second;
    }

    std::shared_ptr<JobRecord> require_job(const std::string& id) const {
        auto job = find_job(id);
        if (!job) throw NotFoundError("no job '" + id + "'");
        return job;
    }

    static nlohmann::json progress_json(const JobRecord& j) {
        return {{"completed", j.completed_runs.load()}, {"total", j.total_runs}};
    }

    static nlohmann::json status_json(const JobRecord& j) {
        const JobState state = j.state.load();
        nlohmann::json out{{"job_id", j.job_id},
                           {"state", job_state_name(state)},
                           {"progress", progress_json(j)},
                           {"created_at", j.created_at},
                           {"settings", settings_to_json(j.settings)},
                           {"base_seed", j.base_seed},
                           {"scenario_ids", j.scenario_ids}};
        if (state == JobState::completed || state == JobState::failed) out["failures"] = j.failures;
        return out;
    }

    static std::string utc_now() {
        const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    void work(std::stop_token st) {
        while (!st.stop_requested()) {
            std::shared_ptr<JobRecord> job;
            {
                std::unique_lock lock(queue_mutex_);
                if (!queue_cv_.wait(lock, st, [&] { return !queue_.empty(); })) return;
                job = queue_.front();
                queue_.pop_front();
            }
            run_job(*job);
        }
    }

    void run_job(JobRecord& job) {
        job.state = JobState::running;
        std::vector<RunResult> results;
        try {
            const auto plan = plan_batch(std::span<const std::string>(job.scenario_ids), job.settings, job.base_seed);
            results = execute_batch(plan, job.scenarios, model_, job.parallelism, &job.completed_runs);
            const auto store = root_ / "jobs" / job.job_id;
            for (const auto& r : results) {
                persist_result(r, store);
                if (!r.completed()) job.failures.push_back(r.run_id + ": " + r.failure_reason);
            }
            detail::write_file_atomically(store / "job.json", status_json(job).dump(2) + "\n");
        } catch (const std::exception& e) {
            job.failures.push_back(e.what());
        }
        job.results = std::move(results);
        job.state = job.failures.empty() ? JobState::completed : JobState::failed;
    }

    /// Completed runs of one scenario of a finished job; 409 while running.
    std::vector<RunResult> finished_runs(const JobRecord& job, const Req& req) const {
        if (!job.finished())
            throw http_error(409, "job " + job.job_id + " has not finished",
                             {{"state", job_state_name(job.state.load())}, {"progress", progress_json(job)}});
        std::string scenario = query(req, "scenario", false);
        if (scenario.empty()) {
            if (job.scenario_ids.size() != 1) throw http_error(400, "query parameter 'scenario' is required for multi-scenario jobs");
            scenario = job.scenario_ids.front();
        }
        if (std::find(job.scenario_ids.begin(), job.scenario_ids.end(), scenario) == job.scenario_ids.end())
            throw NotFoundError("job " + job.job_id + " has no scenario '" + scenario + "'");
        std::vector<RunResult> out;
        for (const auto& r : job.results)
            if (r.spec.scenario_id == scenario && r.completed()) out.push_back(r);
        if (out.empty()) throw http_error(422, "no completed runs for scenario '" + scenario + "'");
        return out;
    }

    // Routes -------------------------------------------------------------------

    void routes() {
        http_.Get("/api/scenarios", guarded([this](const Req&, Res& res) {
            std::shared_lock lock(store_mutex_);
            std::vector<std::string> ids;
            for (const auto& e : std::filesystem::directory_iterator(root_ / "scenarios"))
                if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
            std::sort(ids.begin(), ids.end());
            nlohmann::json out = nlohmann::json::array();
            for (const auto& id : ids) {
                auto s = read_scenario(id);
                out.push_back({{"id", id}, {"name", s.name}, {"description", s.description}});
            }
            reply(res, 200, out);
        }));

        http_.Post("/api/scenarios", guarded([this](const Req& req, Res& res) {
            auto s = scenario_from_api(parse_body(req));
            auto diags = validate(s);
            if (!diags.empty()) throw HttpError{422, diagnostics_body(diags)};
            std::unique_lock lock(store_mutex_);
            char buf[32];
            std::snprintf(buf, sizeof buf, "s%04llu", static_cast<unsigned long long>(next_scenario_++));
            write_scenario(buf, s);
            reply(res, 201, {{"id", buf}, {"valid", true}, {"diagnostics", nlohmann::json::array()}});
        }));

        http_.Get(R"(/api/scenarios/([^/]+))", guarded([this](const Req& req, Res& res) {
            std::shared_lock lock(store_mutex_);
            const std::string id = req.matches[1];
            reply(res, 200, scenario_to_api(id, read_scenario(id)));
        }));

        http_.Put(R"(/api/scenarios/([^/]+))", guarded([this](const Req& req, Res& res) {
            const std::string id = req.matches[1];
            {
                std::shared_lock lock(store_mutex_);
                read_scenario(id);
            }
            auto s = scenario_from_api(parse_body(req));
            auto diags = validate(s);
            if (!diags.empty()) throw HttpError{422, diagnostics_body(diags)};
            std::unique_lock lock(store_mutex_);
            if (!std::filesystem::exists(scenario_path(id))) throw NotFoundError("no scenario '" + id + "'");
            write_scenario(id, s);
            reply(res, 200, {{"id", id}, {"valid", true}, {"diagnostics", nlohmann::json::array()}});
        }));

        http_.Delete(R"(/api/scenarios/([^/]+))", guarded([this](const Req& req, Res& res) {
            const std::string id = req.matches[1];
            std::unique_lock lock(store_mutex_);
            if (!valid_scenario_id(id) || !std::filesystem::remove(scenario_path(id)))
                throw NotFoundError("no scenario '" + id + "'");
            res.status = 204;
        }));

        http_.Post(R"(/api/scenarios/([^/]+)/validate)", guarded([this](const Req& req, Res& res) {
            const std::string id = req.matches[1];
            Scenario s;
            {
                std::shared_lock lock(store_mutex_);
                s = read_scenario(id);
            }
            if (!req.body.empty()) s = scenario_from_api(parse_body(req));
            auto diags = validate(s);
            reply(res, diags.empty() ? 200 : 422, diagnostics_body(diags));
        }));

        http_.Get("/api/flows/raw", guarded([this](const Req& req, Res& res) {
            const std::string type = query(req, "agent_type");
            const AgentTypeDef* def = find_type(model_.types, type);
            if (!def) throw NotFoundError("unknown agent type '" + type + "'");
            res.status = 200;
            res.set_content(serialize_graphml(generate_raw_flow(*def)), "application/xml");
        }));

        http_.Get(R"(/api/flows/([0-9a-f]{64}))", guarded([this](const Req& req, Res& res) {
            const std::string fp = req.matches[1];
            if (!std::filesystem::exists(flow_path(fp))) throw NotFoundError("no flow '" + fp + "'");
            res.status = 200;
            res.set_content(read_text_file(flow_path(fp)), "application/xml");
        }));

        http_.Post("/api/flows", guarded([this](const Req& req, Res& res) {
            BehaviourFlow flow;
            try {
                flow = parse_graphml(req.body);
            } catch (const ParseError& e) {
                throw HttpError{422, {{"diagnostics", nlohmann::json::array({{{"code", "parse-error"}, {"message", e.what()}, {"location", ""}}})}}};
            }
            std::string type = query(req, "agent_type", false);
            if (type.empty()) type = flow.agent_type;
            if (type.empty()) throw http_error(400, "agent type unknown: pass ?agent_type= or set it in the graph");
            if (flow.agent_type.empty()) flow.agent_type = type;
            const AgentTypeDef* def = find_type(model_.types, type);
            if (!def)
                throw HttpError{422, {{"diagnostics", nlohmann::json::array({{{"code", "unknown-agent-type"},
                                                                              {"message", "agent type '" + type + "' is not registered"},
                                                                              {"location", ""}}})}}};
            auto diags = scensim::validate(flow, *def);
            const std::string fp = flow_fingerprint(flow);
            nlohmann::json body{{"fingerprint", fp}, {"agent_type", type}, {"diagnostics", nlohmann::json(diags)}};
            if (!diags.empty()) throw HttpError{422, body};
            {
                std::unique_lock lock(store_mutex_);
                store_flow(flow);
            }
            reply(res, 200, body);
        }));

        http_.Get("/api/agent-types", guarded([this](const Req&, Res& res) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& t : model_.types) {
                nlohmann::json attrs = nlohmann::json::array();
                for (const auto& a : t.attribute_schema)
                    attrs.push_back({{"name", a.name}, {"tag", tag_name(a.tag)}, {"default", nlohmann::json(a.default_value)}});
                out.push_back({{"name", t.name}, {"attributes", attrs}, {"behaviors", t.behavior_names()}});
            }
            reply(res, 200, out);
        }));

        http_.Get("/api/parameters", guarded([this](const Req&, Res& res) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& p : model_.parameters)
                out.push_back({{"name", p.name}, {"tag", tag_name(p.tag)}, {"default", nlohmann::json(p.default_value)}});
            reply(res, 200, out);
        }));

        http_.Get("/api/reporters", guarded([this](const Req&, Res& res) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& r : model_.reporters)
                out.push_back({{"name", r.name}, {"kind", r.kind == ReporterKind::per_region ? "per_region" : "model_scalar"}});
            reply(res, 200, out);
        }));

        http_.Post("/api/runs", guarded([this](const Req& req, Res& res) {
            const auto body = parse_body(req);
            if (!body.is_object()) throw http_error(400, "run request must be a JSON object");
            const auto& ids = detail::require(body, "scenario_ids", "run request");
            if (!ids.is_array() || ids.empty()) throw http_error(400, "'scenario_ids' must be a non-empty array");
            auto job = std::make_shared<JobRecord>();
            job->settings = settings_from_json(detail::require(body, "settings", "run request"));
            const auto& seed = detail::require(body, "base_seed", "run request");
            if (!seed.is_number_unsigned()) throw http_error(400, "'base_seed' must be a non-negative integer");
            job->base_seed = seed.get<std::uint64_t>();
            job->parallelism = options_.default_parallelism;
            if (body.contains("parallelism")) {
                if (!body["parallelism"].is_number_unsigned() || body["parallelism"].get<std::size_t>() == 0)
                    throw http_error(400, "'parallelism' must be a positive integer");
                job->parallelism = std::min(body["parallelism"].get<std::size_t>(), options_.max_parallelism);
            }
            {
                std::shared_lock lock(store_mutex_);
                for (const auto& idj : ids) {
                    if (!idj.is_string()) throw http_error(400, "'scenario_ids' must contain strings");
                    const auto id = idj.get<std::string>();
                    auto s = read_scenario(id);
                    auto diags = validate(s);
                    if (!diags.empty())
                        throw HttpError{422, {{"error", "scenario '" + id + "' does not validate"},
                                              {"scenario_id", id},
                                              {"diagnostics", nlohmann::json(diags)}}};
                    job->scenario_ids.push_back(id);
                    job->scenarios.push_back(std::move(s));
                }
            }
            job->total_runs = job->scenario_ids.size() * job->settings.iterations_per_scenario;
            job->created_at = utc_now();
            {
                std::lock_guard lock(jobs_mutex_);
                char buf[32];
                std::snprintf(buf, sizeof buf, "j%06llu", static_cast<unsigned long long>(next_job_++));
                job->job_id = buf;
                jobs_.emplace(job->job_id, job);
            }
            {
                std::lock_guard lock(queue_mutex_);
                queue_.push_back(job);
            }
            queue_cv_.notify_one();
            reply(res, 202, {{"job_id", job->job_id}, {"total_runs", job->total_runs}});
        }));

        http_.Get(R"(/api/runs/([^/]+)/status)", guarded([this](const Req& req, Res& res) {
            reply(res, 200, status_json(*require_job(req.matches[1])));
        }));

        http_.Get(R"(/api/runs/([^/]+)/results)", guarded([this](const Req& req, Res& res) {
            auto job = require_job(req.matches[1]);
            const std::string reporter = query(req, "reporter");
            const auto runs = finished_runs(*job, req);
            const auto& cols = runs.front().columns;
            if (std::find(cols.begin(), cols.end(), reporter) != cols.end()) {
                reply(res, 200, series_to_json(aggregate(runs, reporter)));
                return;
            }
            const Reporter* r = model_.find_reporter(reporter);
            if (!r) throw NotFoundError("unknown reporter '" + reporter + "'");
            nlohmann::json regions = nlohmann::json::object();
            for (const auto& [region, series] : aggregate_regions(runs, reporter)) regions[region] = series_to_json(series);
            reply(res, 200, {{"scenario_id", runs.front().spec.scenario_id}, {"reporter", reporter}, {"regions", regions}});
        }));

        http_.Get(R"(/api/runs/([^/]+)/choropleth)", guarded([this](const Req& req, Res& res) {
            auto job = require_job(req.matches[1]);
            const std::string reporter = query(req, "reporter");
            const Reporter* r = model_.find_reporter(reporter);
            if (!r) throw NotFoundError("unknown reporter '" + reporter + "'");
            if (r->kind != ReporterKind::per_region) throw http_error(400, "reporter '" + reporter + "' is not per-region");
            const auto runs = finished_runs(*job, req);
            const auto valid = sample_ticks(job->settings.duration_steps, job->settings.collection_interval);
            const std::string tick_text = query(req, "tick");
            auto tick = parse_real(tick_text);
            const bool on_grid = tick && *tick >= 0 && std::trunc(*tick) == *tick &&
                                 std::find(valid.begin(), valid.end(), static_cast<std::uint64_t>(*tick)) != valid.end();
            if (!on_grid) throw http_error(400, "tick '" + tick_text + "' is not a sampled tick", {{"valid_ticks", valid}});
            const auto t = static_cast<std::uint64_t>(*tick);
            nlohmann::json values = nlohmann::json::object();
            for (const auto& [region, series] : aggregate_regions(runs, reporter))
                for (const auto& p : series.points)
                    if (p.tick == t) values[region] = p.mean;
            reply(res, 200, {{"reporter", reporter},
                             {"scenario_id", runs.front().spec.scenario_id},
                             {"tick", t},
                             {"statistic", "mean"},
                             {"count", runs.size()},
                             {"values", values}});
        }));

        http_.Get("/api/compare", guarded([this](const Req& req, Res& res) {
            const std::string list = query(req, "ids");
            std::vector<std::string> ids;
            std::stringstream ss(list);
            for (std::string id; std::getline(ss, id, ',');)
                if (!id.empty()) ids.push_back(id);
            if (ids.empty()) throw http_error(400, "'ids' must name at least one scenario");
            std::vector<Scenario> scenarios;
            {
                std::shared_lock lock(store_mutex_);
                for (const auto& id : ids) scenarios.push_back(read_scenario(id));
            }
            auto body = comparison_to_json(compare(scenarios));
            body["ids"] = ids;
            reply(res, 200, body);
        }));

        http_.Get("/api/geo", guarded([this](const Req&, Res& res) {
            res.status = 200;
            res.set_content(geo_.dump(), "application/geo+json");
        }));

        http_.set_error_handler([](const Req&, Res& res) {
            if (res.body.empty()) res.set_content(nlohmann::json{{"error", "no such endpoint"}}.dump(), "application/json");
        });
    }

    std::filesystem::path root_;
    ModelDefinition model_;
    nlohmann::json geo_;
    Options options_;

    httplib::Server http_;
    std::thread listener_;

    mutable std::shared_mutex store_mutex_;
    unsigned long long next_scenario_ = 1;

    mutable std::mutex jobs_mutex_;
    std::map<std::string, std::shared_ptr<JobRecord>> jobs_;
    unsigned long long next_job_ = 1;

    std::mutex queue_mutex_;
    std::condition_variable_any queue_cv_;
    std::deque<std::shared_ptr<JobRecord>> queue_;
    std::jthread worker_;
};

} // namespace scensim
