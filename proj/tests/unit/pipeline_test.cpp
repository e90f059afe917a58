// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/pipeline.hpp"
#include "random_module.hpp"
#include <gtest/gtest.h>
#include <json.hpp>
#include <unistd.h>

using namespace crow;
using namespace crow::test;
namespace fs = std::filesystem;

namespace
{
RunConfig small_config()
{
    RunConfig cfg;
    cfg.synthesis.max_replacements = 16;
    cfg.max_variants = 32;
    return cfg;
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() /
                     ("crow-pipeline-" + std::to_string(::getpid()) + "-" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}
}  // namespace

TEST(pipeline, config_validation)
{
    RunConfig cfg;
    EXPECT_NO_THROW(validate(cfg));
    cfg.jobs = 0;
    EXPECT_THROW(validate(cfg), config_error);
    cfg = {};
    cfg.max_variants = 0;
    EXPECT_THROW(validate(cfg), config_error);
    cfg = {};
    cfg.timeout_secs = -1;
    EXPECT_THROW(validate(cfg), config_error);
}

TEST(pipeline, default_entry)
{
    EXPECT_EQ(default_entry(load_corpus("listing2")), "main");
    const auto m = parse_module("(module (func) (export \"b\" (func 0)) (export \"a\" (func 0)))");
    EXPECT_EQ(default_entry(m), "a");
    EXPECT_FALSE(default_entry(parse_module("(module (func))")));
}

TEST(pipeline, store_round_trip)
{
    const auto m = load_corpus("listing2");
    const auto cfg = small_config();
    const auto e = explore(m, cfg);
    ASSERT_EQ(e.blocks.size(), 3u);
    EXPECT_EQ(e.module_digest, module_digest(m));
    const auto text = store_json(e, cfg);
    const auto back = read_store(text, m);
    EXPECT_EQ(back.module_digest, e.module_digest);
    ASSERT_EQ(back.results.size(), e.results.size());
    for (std::size_t i = 0; i < e.results.size(); ++i)
    {
        ASSERT_EQ(back.results[i].replacements.size(), e.results[i].replacements.size());
        for (std::size_t k = 0; k < e.results[i].replacements.size(); ++k)
        {
            const auto& a = e.results[i].replacements[k];
            const auto& b = back.results[i].replacements[k];
            EXPECT_EQ(a.candidate.dag.key(), b.candidate.dag.key());
            EXPECT_EQ(a.candidate.index, b.candidate.index);
            EXPECT_EQ(a.tier, b.tier);
            EXPECT_EQ(a.method, b.method);
        }
    }
    // Generation from the reloaded store gives the same variants.
    const auto g1 = generate(m, e, cfg);
    const auto g2 = generate(m, back, cfg);
    ASSERT_EQ(g1.variants.size(), g2.variants.size());
    for (std::size_t k = 0; k < g1.variants.size(); ++k)
        EXPECT_EQ(g1.variants[k].text, g2.variants[k].text);
}

TEST(pipeline, store_errors)
{
    const auto m = load_corpus("listing2");
    const auto cfg = small_config();
    const auto text = store_json(explore(m, cfg), cfg);
    EXPECT_THROW(read_store(text, load_corpus("mul2")), store_mismatch);
    EXPECT_THROW(read_store("{", m), std::invalid_argument);
    EXPECT_THROW(read_store("{\"format\": \"other\"}", m), std::invalid_argument);
    auto j = nlohmann::json::parse(text);
    j["blocks"][0]["replacements"][0]["dag"]["root"] = 99;
    EXPECT_THROW(read_store(j.dump(), m), std::invalid_argument);
}

TEST(pipeline, blocks_dump)
{
    const auto m = load_corpus("listing2");
    const auto j = nlohmann::json::parse(blocks_json(extract_all_blocks(m)));
    ASSERT_EQ(j.size(), 3u);
    EXPECT_EQ(j[0]["root_site"], 3);
    EXPECT_EQ(j[0]["inputs"][0]["kind"], "param");
}

TEST(pipeline, generation_filters_and_dedups)
{
    const auto m = load_corpus("listing2");
    auto cfg = small_config();
    const auto e = explore(m, cfg);
    const auto g = generate(m, e, cfg);
    EXPECT_FALSE(g.variants.empty());
    std::set<std::string> texts;
    const auto original = print_module(m);
    for (const auto& v : g.variants)
    {
        EXPECT_NE(v.text, original);
        EXPECT_TRUE(texts.insert(v.text).second);
        EXPECT_EQ(v.digest, sha256_hex(v.text));
    }

    cfg.strict = true;
    const auto strict = generate(m, e, cfg);
    for (const auto& [id, list] : strict.retained.blocks)
        for (const auto& r : list)
            EXPECT_EQ(r.tier, Tier::verified);
}

TEST(pipeline, diversify_outputs)
{
    const auto m = load_corpus("listing2");
    const auto dir = scratch("listing");
    const auto d = diversify(m, "listing2.wat", small_config(), dir);
    ASSERT_TRUE(d.original_run);
    EXPECT_EQ(d.original_run->outcome, Outcome::result(30));
    EXPECT_TRUE(fs::exists(dir / "store.json"));
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "original.trace"));
    const auto manifest = nlohmann::json::parse(read_file((dir / "manifest.json").string()));
    EXPECT_EQ(manifest["format"], "crow-manifest-v1");
    ASSERT_EQ(manifest["variants"].size(), d.generation.variants.size());
    for (const auto& v : manifest["variants"])
    {
        EXPECT_TRUE(fs::exists(dir / v["file"].get<std::string>()));
        EXPECT_TRUE(fs::exists(dir / v["trace"].get<std::string>()));
        EXPECT_EQ(v["outcome"], "result 30");
        EXPECT_TRUE(v["outcome_matches"].get<bool>());
        EXPECT_GT(v["dt_static"].get<std::uint64_t>(), 0u);
        // Blocks 0 and 1 only have Probable replacements.
        const bool touches_probable = v["plan"].contains("1");
        EXPECT_EQ(v["verified"].get<bool>(), !touches_probable);
    }
    fs::remove_all(dir);
}

TEST(pipeline, jobs_do_not_change_outputs)
{
    const auto m = load_corpus("fib");
    auto cfg = small_config();
    const auto one = scratch("jobs1");
    const auto many = scratch("jobs4");
    const auto a = diversify(m, "fib.wat", cfg, one);
    cfg.jobs = 4;
    const auto b = diversify(m, "fib.wat", cfg, many);
    EXPECT_EQ(a.manifest, b.manifest);
    for (const auto& entry : fs::directory_iterator{one})
    {
        const auto name = entry.path().filename();
        // The store records wall-clock timings.
        if (name == "store.json")
            continue;
        EXPECT_EQ(read_file(entry.path().string()), read_file((many / name).string())) << name;
    }
    fs::remove_all(one);
    fs::remove_all(many);
}

TEST(pipeline, unknown_entry)
{
    auto cfg = small_config();
    cfg.invoke = "nope";
    EXPECT_THROW(diversify(load_corpus("mul2"), "mul2.wat", cfg, {}), unknown_export);
    cfg.invoke = "main";
    cfg.args = std::vector<std::int32_t>{1, 2};
    EXPECT_THROW(diversify(load_corpus("mul2"), "mul2.wat", cfg, {}), arity_mismatch);
}
