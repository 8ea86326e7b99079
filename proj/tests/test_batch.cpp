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

#include "scensim/batch.hpp"
#include "scensim/demo/migration.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

using namespace scensim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               (std::string("scensim-batch-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<Scenario> small_demo(std::int64_t agents = 40) {
    auto b = demo::build_demo_bundle();
    b.baseline.parameters["num_agents"] = AttributeValue::integer(agents);
    b.jobseeker.parameters["num_agents"] = AttributeValue::integer(agents);
    return {b.baseline, b.jobseeker};
}

std::vector<std::uint64_t> ticks_of(const RunResult& r) {
    std::vector<std::uint64_t> out;
    for (const auto& s : r.samples) out.push_back(s.tick);
    return out;
}

/// Counter model whose single behavior throws once the tick reaches `fail_at`.
ModelDefinition fragile_model(std::uint64_t fail_at) {
    ModelDefinition def;
    auto t = scensim::testing::counter_type();
    t.behaviors.push_back({"fragile", [fail_at](AgentState& a, BehaviorContext& ctx, RandomStream&) {
                               if (ctx.tick >= fail_at) throw Error("boom at tick " + std::to_string(ctx.tick));
                               a.set("c", AttributeValue::integer(a.get("c").as_integer() + 1));
                           }});
    def.types = {t};
    def.population = [](const ParameterMap&) { return std::map<std::string, std::int64_t>{{"counter", 3}}; };
    def.reporters = {{"total_c", ReporterKind::model_scalar, [](const ModelState& m) -> ReporterValue {
                          double s = 0;
                          for (const auto& a : m.agents) s += static_cast<double>(a.get("c").as_integer());
                          return s;
                      }}};
    return def;
}

Scenario counter_scenario(const std::string& behavior) {
    Scenario s;
    s.name = "counter";
    s.flows.emplace("counter", FlowSource{std::nullopt, scensim::testing::single_node_flow("counter", behavior)});
    return s;
}

// Independent CSV reader: plain std::stod over comma-split lines.
std::map<std::string, std::vector<double>> read_column_by_tick(const fs::path& csv, const std::string& column,
                                                               std::vector<std::uint64_t>& ticks) {
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) header.push_back(f);
    }
    const auto col = static_cast<std::size_t>(std::find(header.begin(), header.end(), column) - header.begin());
    std::map<std::string, std::vector<double>> out;
    ticks.clear();
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::vector<std::string> f;
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        ticks.push_back(std::stoull(f[0]));
        out[f[0]].push_back(std::stod(f.at(col)));
    }
    return out;
}

} // namespace

TEST(SampleTicks, Examples) {
    EXPECT_EQ(sample_ticks(30, 10), (std::vector<std::uint64_t>{0, 10, 20, 30}));
    EXPECT_EQ(sample_ticks(7, 3), (std::vector<std::uint64_t>{0, 3, 6, 7}));
    EXPECT_EQ(sample_ticks(1, 1), (std::vector<std::uint64_t>{0, 1}));
    EXPECT_EQ(sample_ticks(5, 5), (std::vector<std::uint64_t>{0, 5}));
    EXPECT_THROW(sample_ticks(5, 0), InvalidArgument);
}

TEST(SampleTicks, LawAgainstMembershipDefinition) {
    RandomStream rng(77);
    for (int i = 0; i < 500; ++i) {
        const std::uint64_t d = 1 + rng.index(400);
        const std::uint64_t k = 1 + rng.index(d);
        std::vector<std::uint64_t> expected;
        for (std::uint64_t t = 0; t <= d; ++t)
            if (t % k == 0 || t == d) expected.push_back(t);
        ASSERT_EQ(sample_ticks(d, k), expected) << d << " " << k;
    }
}

TEST(PlanBatch, Examples) {
    std::vector<std::string> ids{"a", "b"};
    auto plan = plan_batch(std::span<const std::string>(ids), {100, 3, 10}, 42);
    ASSERT_EQ(plan.size(), 6u);
    std::set<std::uint64_t> seeds;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        EXPECT_EQ(plan[k].scenario_index, k / 3);
        EXPECT_EQ(plan[k].iteration_index, k % 3);
        EXPECT_EQ(plan[k].scenario_id, ids[k / 3]);
        EXPECT_EQ(plan[k].seed, derive_run_seed(42, k / 3, k % 3));
        seeds.insert(plan[k].seed);
    }
    EXPECT_EQ(seeds.size(), 6u);
    EXPECT_EQ(plan_batch(std::span<const std::string>(ids), {100, 3, 10}, 42), plan);
    EXPECT_NE(plan_batch(std::span<const std::string>(ids), {100, 3, 10}, 43)[0].seed, plan[0].seed);
    EXPECT_THROW(plan_batch(std::span<const std::string>(), {100, 3, 10}, 1), InvalidArgument);
    EXPECT_THROW(plan_batch(std::span<const std::string>(ids), {10, 1, 20}, 1), InvalidArgument);
}

TEST(RunId, Format) {
    RunSpec s{"x", 1, 12, 0xabcULL, {}};
    EXPECT_EQ(run_id(s), "s001-i012-0000000000000abc");
}

TEST(ExecuteRun, SamplesAtLawTicksWithRegionColumns) {
    auto scenarios = small_demo();
    auto def = demo::model_definition();
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {25, 1, 10}, 3);
    auto r = execute_run(plan[0], scenarios[0], def);
    ASSERT_TRUE(r.completed()) << r.failure_reason;
    EXPECT_EQ(ticks_of(r), sample_ticks(25, 10));
    EXPECT_EQ(r.columns.front(), "population");
    EXPECT_NO_THROW(r.column_index(region_column("population_by_region", "R8")));
    EXPECT_EQ(r.columns.size(), 3u + 2u * demo::kRegionCount);
}

TEST(ExecuteRun, Deterministic) {
    auto scenarios = small_demo();
    auto def = demo::model_definition();
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {30, 2, 10}, 9);
    for (const auto& spec : plan) {
        auto a = execute_run(spec, scenarios[spec.scenario_index], def);
        auto b = execute_run(spec, scenarios[spec.scenario_index], def);
        EXPECT_TRUE(a.same_content(b));
        EXPECT_EQ(samples_csv(a), samples_csv(b));
    }
}

TEST(ExecuteRun, FailureKeepsPartialSamples) {
    auto def = fragile_model(15);
    std::vector<Scenario> scenarios{counter_scenario("fragile")};
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {40, 1, 10}, 1);
    auto r = execute_run(plan[0], scenarios[0], def);
    EXPECT_FALSE(r.completed());
    EXPECT_NE(r.failure_reason.find("boom at tick 15"), std::string::npos);
    EXPECT_EQ(ticks_of(r), (std::vector<std::uint64_t>{0, 10}));
    EXPECT_EQ(r.samples[1].values[0], 30.0);
}

TEST(ExecuteRun, UnboundFlowFailsRun) {
    auto def = fragile_model(100);
    std::vector<Scenario> scenarios{counter_scenario("no_such_behavior")};
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {10, 1, 5}, 1);
    auto r = execute_run(plan[0], scenarios[0], def);
    EXPECT_FALSE(r.completed());
    EXPECT_TRUE(r.samples.empty());
}

TEST(ExecuteBatch, FailedRunDoesNotAbortBatch) {
    auto def = fragile_model(5);
    std::vector<Scenario> scenarios{counter_scenario("inc"), counter_scenario("fragile")};
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {10, 2, 5}, 1);
    auto results = execute_batch(plan, scenarios, def, 3);
    ASSERT_EQ(results.size(), 4u);
    EXPECT_TRUE(results[0].completed());
    EXPECT_TRUE(results[1].completed());
    EXPECT_FALSE(results[2].completed());
    EXPECT_FALSE(results[3].completed());
}

TEST(ExecuteBatch, EmptySpecsGiveEmptyResults) {
    auto scenarios = small_demo();
    EXPECT_TRUE(execute_batch({}, scenarios, demo::model_definition(), 4).empty());
}

TEST(ExecuteBatch, ParallelismDoesNotChangeContent) {
    auto scenarios = small_demo();
    auto def = demo::model_definition();
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {30, 3, 10}, 2024);
    std::atomic<std::size_t> progress{0};
    auto one = execute_batch(plan, scenarios, def, 1);
    auto eight = execute_batch(plan, scenarios, def, 8, &progress);
    EXPECT_EQ(progress.load(), plan.size());
    ASSERT_EQ(one.size(), eight.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        EXPECT_TRUE(one[i].same_content(eight[i]));
        EXPECT_EQ(one[i].spec, plan[i]);
    }
}

TEST(ExecuteBatch, Errors) {
    auto scenarios = small_demo();
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {10, 1, 5}, 1);
    EXPECT_THROW(execute_batch(plan, scenarios, demo::model_definition(), 0), InvalidArgument);
    EXPECT_THROW(execute_batch(plan, std::span<const Scenario>(scenarios).first(1), demo::model_definition(), 1),
                 InvalidArgument);
}

namespace {
RunResult synthetic(std::size_t iteration, std::vector<double> values) {
    RunResult r;
    r.spec = {"s", 0, iteration, iteration, {2, 1, 1}};
    r.run_id = run_id(r.spec);
    r.columns = {"m"};
    for (std::size_t t = 0; t < values.size(); ++t) r.samples.push_back({t, {values[t]}});
    return r;
}
} // namespace

TEST(Aggregate, HandArithmetic) {
    std::vector<RunResult> rs{synthetic(0, {1, 5}), synthetic(1, {3, 5})};
    auto s = aggregate(rs, "m");
    ASSERT_EQ(s.points.size(), 2u);
    EXPECT_EQ(s.points[0], (AggregatePoint{0, 2.0, 1.0, 1.0, 3.0, 2}));
    EXPECT_EQ(s.points[1], (AggregatePoint{1, 5.0, 0.0, 5.0, 5.0, 2}));
}

TEST(Aggregate, IdenticalRunsHaveZeroSpread) {
    std::vector<RunResult> rs{synthetic(0, {0.1, 0.7}), synthetic(1, {0.1, 0.7}), synthetic(2, {0.1, 0.7})};
    for (const auto& p : aggregate(rs, "m").points) {
        EXPECT_EQ(p.std, 0.0);
        EXPECT_EQ(p.mean, p.min);
    }
}

TEST(Aggregate, SkipsFailedRunsAndRejectsEmpty) {
    auto bad = synthetic(2, {100, 100});
    bad.status = RunStatus::failed;
    std::vector<RunResult> rs{synthetic(0, {1, 1}), bad};
    EXPECT_EQ(aggregate(rs, "m").points[0].count, 1u);
    std::vector<RunResult> none{bad};
    EXPECT_THROW(aggregate(none, "m"), InvalidArgument);
    EXPECT_THROW(aggregate(rs, "nope"), NotFoundError);
}

TEST(Aggregate, MatchesRecomputationFromPersistedCsv) {
    TempDir d;
    auto scenarios = small_demo();
    auto def = demo::model_definition();
    auto plan = plan_batch(std::span<const Scenario>(scenarios).first(1), {40, 5, 10}, 11);
    auto results = execute_batch(plan, scenarios, def, 2);
    for (const auto& r : results) persist_result(r, d.path);

    for (const std::string& column : std::vector<std::string>{"mean_savings", "employment_rate", region_column("unemployment_by_region", "R3")}) {
        auto series = aggregate(results, column);
        std::map<std::string, std::vector<double>> by_tick;
        std::vector<std::uint64_t> ticks;
        for (const auto& r : results) {
            auto one = read_column_by_tick(run_directory(d.path, r.run_id) / "samples.csv", column, ticks);
            for (auto& [t, v] : one) by_tick[t].insert(by_tick[t].end(), v.begin(), v.end());
        }
        ASSERT_EQ(series.points.size(), ticks.size());
        for (std::size_t i = 0; i < ticks.size(); ++i) {
            const auto& xs = by_tick.at(std::to_string(ticks[i]));
            long double sum = 0;
            for (double x : xs) sum += x;
            const long double mean = sum / static_cast<long double>(xs.size());
            long double ss = 0;
            for (double x : xs) ss += (x - mean) * (x - mean);
            const double sd = static_cast<double>(std::sqrt(ss / static_cast<long double>(xs.size())));
            const auto& p = series.points[i];
            EXPECT_EQ(p.tick, ticks[i]);
            EXPECT_NEAR(p.mean, static_cast<double>(mean), 1e-9 * (1 + std::fabs(static_cast<double>(mean))));
            EXPECT_NEAR(p.std, sd, 1e-9 * (1 + sd));
            EXPECT_EQ(p.min, *std::min_element(xs.begin(), xs.end()));
            EXPECT_EQ(p.max, *std::max_element(xs.begin(), xs.end()));
            EXPECT_EQ(p.count, xs.size());
        }
    }
}

TEST(Aggregate, RegionsAndSerializations) {
    auto scenarios = small_demo();
    auto plan = plan_batch(std::span<const Scenario>(scenarios).first(1), {20, 2, 10}, 5);
    auto results = execute_batch(plan, scenarios, demo::model_definition(), 1);
    auto regions = aggregate_regions(results, "population_by_region");
    EXPECT_EQ(regions.size(), demo::kRegionCount);
    EXPECT_THROW(aggregate_regions(results, "mean_savings"), NotFoundError);

    auto s = aggregate(results, "mean_savings");
    auto j = series_to_json(s);
    EXPECT_EQ(j["ticks"], nlohmann::json({0, 10, 20}));
    EXPECT_EQ(j["mean"].size(), 3u);
    auto csv = series_to_csv(s);
    EXPECT_EQ(csv.rfind("tick,mean,std,min,max,count\n0,", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Store, PersistLoadRoundTrip) {
    TempDir d;
    auto scenarios = small_demo();
    auto plan = plan_batch(std::span<const Scenario>(scenarios), {20, 2, 7}, 8);
    auto results = execute_batch(plan, scenarios, demo::model_definition(), 2);
    auto failing = execute_run(plan_batch(std::vector<std::string>{"bad"}, {20, 1, 5}, 1)[0],
                               counter_scenario("fragile"), fragile_model(7));
    failing.spec.scenario_index = 9;
    failing.run_id = run_id(failing.spec);
    results.push_back(failing);
    for (const auto& r : results) persist_result(r, d.path);
    for (const auto& r : results) {
        auto back = load_result(r.run_id, d.path);
        EXPECT_EQ(back, r);
    }
    auto all = load_store(d.path);
    ASSERT_EQ(all.size(), results.size());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], results[i]);
    EXPECT_FALSE(fs::exists(run_directory(d.path, results[0].run_id) / "samples.csv.tmp"));
}

TEST(Store, LoadUnknownIdIsNotFound) {
    TempDir d;
    EXPECT_THROW(load_result("s000-i000-0000000000000000", d.path), NotFoundError);
    EXPECT_TRUE(load_store(d.path).empty());
}

TEST(Store, CorruptFilesAreExplicitErrors) {
    TempDir d;
    auto r = synthetic(0, {1.5, 2.5});
    auto corrupt = [&](const std::string& file, const std::string& content) {
        persist_result(r, d.path);
        std::ofstream(run_directory(d.path, r.run_id) / file, std::ios::trunc) << content;
        EXPECT_THROW(load_result(r.run_id, d.path), ParseError) << file << ": " << content;
    };
    corrupt("meta.json", "{ truncated");
    corrupt("meta.json", R"({"run_id": 5})");
    corrupt("samples.csv", "");
    corrupt("samples.csv", "tick,other\n0,1\n");
    corrupt("samples.csv", "tick,m\n0,1\n1\n");
    corrupt("samples.csv", "tick,m\n0,abc\n");
    corrupt("samples.csv", "tick,m\n1,1\n0,1\n");
    persist_result(r, d.path);
    fs::remove(run_directory(d.path, r.run_id) / "samples.csv");
    EXPECT_THROW(load_result(r.run_id, d.path), ParseError);
}

TEST(Store, ConcurrentPersistsStayIntact) {
    TempDir d;
    std::vector<RunResult> rs;
    for (std::size_t i = 0; i < 16; ++i) rs.push_back(synthetic(i, {double(i), double(i) + 0.5}));
    {
        std::vector<std::jthread> threads;
        for (const auto& r : rs) threads.emplace_back([&d, &r] { persist_result(r, d.path); });
    }
    for (const auto& r : rs) EXPECT_EQ(load_result(r.run_id, d.path), r);
}

TEST(Store, RejectsCsvUnsafeColumns) {
    auto r = synthetic(0, {1});
    r.columns = {"a,b"};
    EXPECT_THROW(samples_csv(r), InvalidArgument);
}
