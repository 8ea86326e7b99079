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

#include "scensim/demo/migration.hpp"
#include "scensim/server.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace scensim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ServerTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                (std::string("scensim-server-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        auto b = demo::build_demo_bundle();
        server_ = std::make_unique<Server>(root_, b.model, b.regions_geojson);
        port_ = server_->start();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_read_timeout(30, 0);
    }

    void TearDown() override {
        client_.reset();
        server_.reset();
        fs::remove_all(root_);
    }

    static json scenario_doc(std::int64_t agents = 40, bool jobseeker = false) {
        auto b = demo::build_demo_bundle();
        auto s = jobseeker ? b.jobseeker : b.baseline;
        s.parameters["num_agents"] = AttributeValue::integer(agents);
        return save_scenario(s);
    }

    httplib::Result get(const std::string& path) { return client_->Get(path); }
    httplib::Result post(const std::string& path, const json& body) {
        return client_->Post(path, body.dump(), "application/json");
    }

    std::string create(const json& doc) {
        auto r = post("/api/scenarios", doc);
        EXPECT_EQ(r->status, 201) << r->body;
        return json::parse(r->body)["id"].get<std::string>();
    }

    json await_job(const std::string& job) {
        EXPECT_TRUE(server_->wait_for(job, std::chrono::seconds(60)));
        auto r = get("/api/runs/" + job + "/status");
        EXPECT_EQ(r->status, 200);
        return json::parse(r->body);
    }

    std::string submit(const std::vector<std::string>& ids, std::uint64_t iterations, std::uint64_t seed,
                       std::uint64_t duration = 30, std::uint64_t interval = 10) {
        auto r = post("/api/runs", {{"scenario_ids", ids},
                                    {"settings",
                                     {{"duration_steps", duration},
                                      {"iterations_per_scenario", iterations},
                                      {"collection_interval", interval}}},
                                    {"base_seed", seed}});
        EXPECT_EQ(r->status, 202) << r->body;
        return json::parse(r->body)["job_id"].get<std::string>();
    }

    fs::path root_;
    std::unique_ptr<Server> server_;
    int port_ = 0;
    std::unique_ptr<httplib::Client> client_;
};

} // namespace

TEST_F(ServerTest, ScenarioCrud) {
    auto list = get("/api/scenarios");
    ASSERT_EQ(list->status, 200);
    EXPECT_EQ(json::parse(list->body), json::array());

    const auto id = create(scenario_doc());
    auto r = get("/api/scenarios/" + id);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
    auto doc = json::parse(r->body);
    EXPECT_EQ(doc["id"], id);
    EXPECT_EQ(doc["name"], "baseline");
    EXPECT_EQ(doc["flows"]["migrant"]["fingerprint"].get<std::string>().size(), 64u);

    doc["description"] = "edited";
    auto put = client_->Put("/api/scenarios/" + id, doc.dump(), "application/json");
    ASSERT_EQ(put->status, 200) << put->body;
    EXPECT_EQ(json::parse(get("/api/scenarios/" + id)->body)["description"], "edited");

    auto listed = json::parse(get("/api/scenarios")->body);
    ASSERT_EQ(listed.size(), 1u);
    EXPECT_EQ(listed[0]["id"], id);

    EXPECT_EQ(client_->Delete("/api/scenarios/" + id)->status, 204);
    EXPECT_EQ(get("/api/scenarios/" + id)->status, 404);
    EXPECT_EQ(client_->Delete("/api/scenarios/" + id)->status, 404);
    EXPECT_EQ(client_->Put("/api/scenarios/" + id, doc.dump(), "application/json")->status, 404);
}

TEST_F(ServerTest, ScenarioErrors) {
    EXPECT_EQ(client_->Post("/api/scenarios", "{oops", "application/json")->status, 400);
    EXPECT_EQ(post("/api/scenarios", json{{"name", "x"}})->status, 400);
    auto doc = scenario_doc();
    doc["flows"]["migrant"] = "../../etc/passwd";
    EXPECT_EQ(post("/api/scenarios", doc)->status, 400);

    auto bad = scenario_doc();
    bad["policies"].push_back(
        {{"name", "p"}, {"agent_type", "migrant"}, {"conditions", json::array()},
         {"actions", {{{"attribute", "wealth"}, {"verb", "add"}, {"value", 1.0}}}}});
    auto r = post("/api/scenarios", bad);
    ASSERT_EQ(r->status, 422);
    auto body = json::parse(r->body);
    ASSERT_EQ(body["diagnostics"].size(), 1u);
    EXPECT_EQ(body["diagnostics"][0]["code"], "unknown-attribute");
    EXPECT_EQ(json::parse(get("/api/scenarios")->body).size(), 0u);
    EXPECT_EQ(get("/api/scenarios/s9999")->status, 404);
    EXPECT_EQ(get("/api/scenarios/..%2F..")->status, 404);
}

TEST_F(ServerTest, ValidateEndpoint) {
    const auto id = create(scenario_doc());
    auto ok = client_->Post("/api/scenarios/" + id + "/validate", "", "application/json");
    ASSERT_EQ(ok->status, 200);
    EXPECT_EQ(json::parse(ok->body)["valid"], true);

    auto draft = scenario_doc();
    draft["parameters"]["num_agents"] = "lots";
    auto r = post("/api/scenarios/" + id + "/validate", draft);
    ASSERT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["diagnostics"][0]["code"], "tag-mismatch");
    EXPECT_EQ(client_->Post("/api/scenarios/s0404/validate", "", "application/json")->status, 404);
}

TEST_F(ServerTest, FlowEndpoints) {
    auto raw = get("/api/flows/raw?agent_type=migrant");
    ASSERT_EQ(raw->status, 200);
    EXPECT_EQ(raw->get_header_value("Content-Type"), "application/xml");
    auto flow = parse_graphml(raw->body);
    EXPECT_EQ(flow.nodes.size(), demo::migrant_type().behaviors.size() + 1);
    EXPECT_EQ(get("/api/flows/raw?agent_type=ghost")->status, 404);
    EXPECT_EQ(get("/api/flows/raw")->status, 400);

    auto up = client_->Post("/api/flows", serialize_graphml(demo::sequential_flow()), "application/xml");
    ASSERT_EQ(up->status, 200) << up->body;
    const auto fp = json::parse(up->body)["fingerprint"].get<std::string>();
    EXPECT_EQ(fp, flow_fingerprint(demo::sequential_flow()));
    auto back = get("/api/flows/" + fp);
    ASSERT_EQ(back->status, 200);
    EXPECT_EQ(flow_fingerprint(parse_graphml(back->body)), fp);
    EXPECT_EQ(get("/api/flows/" + std::string(64, '0'))->status, 404);

    auto unknown = client_->Post("/api/flows?agent_type=migrant",
                                 serialize_graphml(make_sequential_flow("", {"seek_job", "teleport"})), "application/xml");
    ASSERT_EQ(unknown->status, 422);
    EXPECT_EQ(json::parse(unknown->body)["diagnostics"][0]["code"], "unresolved-behavior");
    auto broken = client_->Post("/api/flows?agent_type=migrant", "<graphml><graph>", "application/xml");
    ASSERT_EQ(broken->status, 422);
    EXPECT_EQ(json::parse(broken->body)["diagnostics"][0]["code"], "parse-error");

    auto doc = scenario_doc();
    doc["flows"]["migrant"] = {{"fingerprint", fp}};
    const auto id = create(doc);
    EXPECT_EQ(json::parse(get("/api/scenarios/" + id)->body)["flows"]["migrant"]["fingerprint"], fp);
    doc["flows"]["migrant"] = {{"fingerprint", std::string(64, 'a')}};
    EXPECT_EQ(post("/api/scenarios", doc)->status, 400);
}

TEST_F(ServerTest, RegistryEndpoints) {
    auto types = json::parse(get("/api/agent-types")->body);
    ASSERT_EQ(types.size(), 1u);
    EXPECT_EQ(types[0]["name"], "migrant");
    EXPECT_EQ(types[0]["behaviors"].size(), 3u);
    EXPECT_EQ(types[0]["attributes"].size(), 4u);
    EXPECT_EQ(json::parse(get("/api/parameters")->body).size(), demo::parameter_schema().size());
    auto geo = get("/api/geo");
    ASSERT_EQ(geo->status, 200);
    EXPECT_EQ(geo->get_header_value("Content-Type"), "application/geo+json");
    EXPECT_EQ(json::parse(geo->body)["features"].size(), demo::kRegionCount);
    EXPECT_EQ(get("/api/nothing-here")->status, 404);
}

TEST_F(ServerTest, RunLifecycle) {
    const auto a = create(scenario_doc(40, false));
    const auto b = create(scenario_doc(40, true));
    const auto job = submit({a, b}, 3, 7);
    auto status = await_job(job);
    EXPECT_EQ(status["state"], "completed");
    EXPECT_EQ(status["progress"], (json{{"completed", 6}, {"total", 6}}));

    auto r = get("/api/runs/" + job + "/results?scenario=" + b + "&reporter=mean_savings");
    ASSERT_EQ(r->status, 200) << r->body;
    auto series = json::parse(r->body);
    EXPECT_EQ(series["ticks"], json({0, 10, 20, 30}));
    EXPECT_EQ(series["count"], json({3, 3, 3, 3}));
    auto regions = json::parse(get("/api/runs/" + job + "/results?scenario=" + a + "&reporter=population_by_region")->body);
    EXPECT_EQ(regions["regions"].size(), demo::kRegionCount);

    EXPECT_EQ(get("/api/runs/" + job + "/results?reporter=mean_savings")->status, 400);
    EXPECT_EQ(get("/api/runs/" + job + "/results?scenario=" + a + "&reporter=happiness")->status, 404);
    EXPECT_EQ(get("/api/runs/" + job + "/results?scenario=s0777&reporter=mean_savings")->status, 404);
    EXPECT_EQ(get("/api/runs/j999999/status")->status, 404);
    EXPECT_EQ(get("/api/runs/j999999/results?reporter=x")->status, 404);

    EXPECT_TRUE(fs::exists(root_ / "jobs" / job / "runs"));
    EXPECT_EQ(load_store(root_ / "jobs" / job).size(), 6u);
}

TEST_F(ServerTest, RunErrors) {
    const auto a = create(scenario_doc());
    EXPECT_EQ(post("/api/runs", {{"scenario_ids", {"s0404"}},
                                 {"settings", {{"duration_steps", 10}, {"iterations_per_scenario", 1}, {"collection_interval", 5}}},
                                 {"base_seed", 1}})
                  ->status,
              404);
    EXPECT_EQ(post("/api/runs", {{"scenario_ids", {a}},
                                 {"settings", {{"duration_steps", 10}, {"iterations_per_scenario", 1}, {"collection_interval", 50}}},
                                 {"base_seed", 1}})
                  ->status,
              400);
    EXPECT_EQ(post("/api/runs", {{"scenario_ids", json::array()}, {"base_seed", 1}})->status, 400);
    EXPECT_EQ(client_->Post("/api/runs", "nope", "application/json")->status, 400);
}

TEST_F(ServerTest, ResultsBeforeCompletionAre409) {
    const auto a = create(scenario_doc(500));
    const auto job = submit({a}, 4, 3, 400, 10);
    auto r = get("/api/runs/" + job + "/results?reporter=mean_savings");
    auto status = json::parse(get("/api/runs/" + job + "/status")->body);
    if (status["state"] != "completed") {
        ASSERT_EQ(r->status, 409);
        auto body = json::parse(r->body);
        EXPECT_TRUE(body.contains("progress"));
        EXPECT_EQ(body["progress"]["total"], 4);
        EXPECT_EQ(get("/api/runs/" + job + "/choropleth?reporter=population_by_region&tick=0")->status, 409);
    }
    await_job(job);
    EXPECT_EQ(get("/api/runs/" + job + "/results?reporter=mean_savings")->status, 200);
}

TEST_F(ServerTest, StatusIsMonotone) {
    const auto a = create(scenario_doc(200));
    const auto job = submit({a}, 6, 3, 200, 20);
    std::size_t last_progress = 0;
    int last_state = 0;
    const std::map<std::string, int> rank{{"queued", 0}, {"running", 1}, {"completed", 2}, {"failed", 2}};
    for (int i = 0; i < 2000; ++i) {
        auto s = json::parse(get("/api/runs/" + job + "/status")->body);
        const auto p = s["progress"]["completed"].get<std::size_t>();
        const int st = rank.at(s["state"].get<std::string>());
        ASSERT_GE(p, last_progress);
        ASSERT_GE(st, last_state);
        last_progress = p;
        last_state = st;
        if (st == 2) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    EXPECT_EQ(last_state, 2);
    EXPECT_EQ(last_progress, 6u);
}

TEST_F(ServerTest, Choropleth) {
    const auto a = create(scenario_doc(60));
    const auto job = submit({a}, 1, 5, 25, 10);
    await_job(job);
    auto r = get("/api/runs/" + job + "/choropleth?reporter=population_by_region&tick=20");
    ASSERT_EQ(r->status, 200) << r->body;
    auto frame = json::parse(r->body);
    EXPECT_EQ(frame["statistic"], "mean");
    double sum = 0;
    std::set<std::string> ids;
    const auto geo = json::parse(get("/api/geo")->body);
    for (const auto& f : geo["features"]) ids.insert(f["properties"]["region_id"].get<std::string>());
    for (const auto& [region, v] : frame["values"].items()) {
        EXPECT_TRUE(ids.count(region)) << region;
        sum += v.get<double>();
    }
    auto pop = json::parse(get("/api/runs/" + job + "/results?reporter=population")->body);
    EXPECT_EQ(sum, pop["mean"][2].get<double>());

    auto bad = get("/api/runs/" + job + "/choropleth?reporter=population_by_region&tick=15");
    ASSERT_EQ(bad->status, 400);
    EXPECT_EQ(json::parse(bad->body)["valid_ticks"], json({0, 10, 20, 25}));
    EXPECT_EQ(get("/api/runs/" + job + "/choropleth?reporter=population_by_region&tick=abc")->status, 400);
    EXPECT_EQ(get("/api/runs/" + job + "/choropleth?reporter=population_by_region")->status, 400);
    EXPECT_EQ(get("/api/runs/" + job + "/choropleth?reporter=mean_savings&tick=0")->status, 400);
    EXPECT_EQ(get("/api/runs/" + job + "/choropleth?reporter=nope&tick=0")->status, 404);
}

TEST_F(ServerTest, CompareEndpoint) {
    const auto a = create(scenario_doc(40, false));
    const auto b = create(scenario_doc(40, true));
    auto r = get("/api/compare?ids=" + a + "," + b);
    ASSERT_EQ(r->status, 200);
    auto t = json::parse(r->body);
    std::size_t differs = 0;
    for (const auto& row : t["rows"]) differs += row["differs"].get<bool>();
    EXPECT_EQ(differs, 1u);
    EXPECT_EQ(t["ids"], json({a, b}));
    auto self = json::parse(get("/api/compare?ids=" + a + "," + a)->body);
    for (const auto& row : self["rows"]) EXPECT_FALSE(row["differs"].get<bool>());
    EXPECT_EQ(get("/api/compare?ids=" + a + ",s0404")->status, 404);
    EXPECT_EQ(get("/api/compare")->status, 400);
}

TEST_F(ServerTest, ResubmissionGivesIdenticalPayloads) {
    const auto a = create(scenario_doc(50, true));
    const auto j1 = submit({a}, 2, 99);
    const auto j2 = submit({a}, 2, 99);
    const auto j3 = submit({a}, 2, 100);
    await_job(j1);
    await_job(j2);
    await_job(j3);
    for (const std::string rep : {"mean_savings", "employment_rate", "unemployment_by_region"}) {
        auto p1 = get("/api/runs/" + j1 + "/results?reporter=" + rep)->body;
        auto p2 = get("/api/runs/" + j2 + "/results?reporter=" + rep)->body;
        EXPECT_EQ(p1, p2) << rep;
    }
    EXPECT_NE(get("/api/runs/" + j1 + "/results?reporter=mean_savings")->body,
              get("/api/runs/" + j3 + "/results?reporter=mean_savings")->body);
    EXPECT_EQ(get("/api/runs/" + j1 + "/choropleth?reporter=unemployment_by_region&tick=30")->body,
              get("/api/runs/" + j2 + "/choropleth?reporter=unemployment_by_region&tick=30")->body);
}

TEST_F(ServerTest, StoreSurvivesRestart) {
    const auto a = create(scenario_doc());
    server_.reset();
    auto b = demo::build_demo_bundle();
    server_ = std::make_unique<Server>(root_, b.model, b.regions_geojson);
    port_ = server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    EXPECT_EQ(get("/api/scenarios/" + a)->status, 200);
    EXPECT_NE(create(scenario_doc()), a);
}
