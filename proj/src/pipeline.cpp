// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/pipeline.hpp"

#include "crow/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

namespace crow
{
using json = nlohmann::ordered_json;

void validate(const RunConfig& cfg)
{
    validate(cfg.synthesis);
    validate(cfg.checker);
    if (cfg.jobs < 1)
        throw config_error{"jobs must be at least 1"};
    if (!(cfg.timeout_secs > 0))
        throw config_error{"timeout must be positive"};
    if (cfg.max_variants < 1)
        throw config_error{"variant limit must be at least 1"};
    if (cfg.fuel < 1)
        throw config_error{"fuel must be at least 1"};
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn)
{
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
        for (auto i = next++; i < n; i = next++)
        {
            try
            {
                fn(i);
            }
            catch (...)
            {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads_wanted = std::min<std::size_t>(std::max(1u, jobs), n);
    if (threads_wanted <= 1)
        worker();
    else
    {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < threads_wanted; ++t)
            threads.emplace_back(worker);
        for (auto& t : threads)
            t.join();
    }
    for (const auto& e : errors)
    {
        if (e)
            std::rethrow_exception(e);
    }
}

std::string module_digest(const Module& m)
{
    return sha256_hex(print_module(m));
}

bool Exploration::budget_exhausted() const
{
    return std::any_of(results.begin(), results.end(),
        [](const BlockSynthesis& r) { return r.budget_exhausted(); });
}

std::size_t Exploration::replacement_count() const
{
    std::size_t n = 0;
    for (const auto& r : results)
        n += r.replacements.size();
    return n;
}

namespace
{
SynthesisConfig seeded(SynthesisConfig s, std::uint64_t seed)
{
    s.seed = seed;
    return s;
}

CheckerConfig seeded(CheckerConfig c, std::uint64_t seed)
{
    c.seed = seed;
    return c;
}

std::string_view checker_mode_name(CheckerMode m)
{
    switch (m)
    {
    case CheckerMode::exhaustive_only:
        return "exhaustive";
    case CheckerMode::probable_ok:
        return "probable";
    case CheckerMode::smt:
        return "smt";
    }
    return "?";
}

Tier tier_from(const std::string& s)
{
    if (s == "verified")
        return Tier::verified;
    if (s == "probable")
        return Tier::probable;
    throw std::invalid_argument{"bad tier '" + s + "' in store"};
}

Method method_from(const std::string& s)
{
    if (s == "exhaustive")
        return Method::exhaustive;
    if (s == "reduced-width")
        return Method::reduced_width;
    if (s == "smt")
        return Method::smt;
    throw std::invalid_argument{"bad method '" + s + "' in store"};
}

json dag_to_json(const Dag& d)
{
    json nodes = json::array();
    for (const auto& n : d.nodes)
    {
        json j;
        switch (n.kind)
        {
        case NodeKind::input:
            j["kind"] = "input";
            j["input"] = n.input;
            break;
        case NodeKind::constant:
            j["kind"] = "const";
            j["value"] = n.value;
            break;
        case NodeKind::op:
            j["kind"] = "op";
            j["op"] = std::string{name(n.op)};
            j["operands"] = std::vector<NodeId>(n.operands.begin(), n.operands.begin() + n.arity());
            break;
        }
        if (n.site != no_site)
            j["site"] = n.site;
        nodes.push_back(std::move(j));
    }
    return json{{"nodes", std::move(nodes)}, {"root", d.root}};
}

Dag dag_from_json(const json& j)
{
    Dag d;
    for (const auto& n : j.at("nodes"))
    {
        const auto kind = n.at("kind").get<std::string>();
        const auto site = n.contains("site") ? n.at("site").get<std::uint32_t>() : no_site;
        if (kind == "input")
            d.add_input(n.at("input").get<std::uint32_t>(), site);
        else if (kind == "const")
            d.add_constant(n.at("value").get<std::int32_t>(), site);
        else if (kind == "op")
        {
            const auto op = opcode_from_name(n.at("op").get<std::string>());
            if (!op)
                throw std::invalid_argument{"unknown operator in store"};
            const auto operands = n.at("operands").get<std::vector<NodeId>>();
            d.add_op(*op, operands, site);
        }
        else
            throw std::invalid_argument{"unknown node kind '" + kind + "' in store"};
    }
    d.root = j.at("root").get<NodeId>();
    if (d.root >= d.nodes.size())
        throw std::invalid_argument{"DAG root out of range in store"};
    return d;
}

json config_json(const RunConfig& cfg)
{
    json j;
    j["seed"] = cfg.seed;
    j["max_size"] = cfg.synthesis.max_size;
    j["vocabulary"] = to_string(cfg.synthesis.vocabulary);
    if (cfg.synthesis.pool)
        j["pool"] = *cfg.synthesis.pool;
    j["prefilter_vectors"] = cfg.synthesis.random_vectors;
    j["max_candidates"] = cfg.synthesis.max_candidates;
    j["max_replacements"] = cfg.synthesis.max_replacements;
    j["checker"] = std::string{checker_mode_name(cfg.checker.mode)};
    j["exhaustive_budget"] = cfg.checker.exhaustive_budget;
    j["reduced_widths"] = cfg.checker.reduced_widths;
    j["samples"] = cfg.checker.samples;
    j["strict"] = cfg.strict;
    j["max_variants"] = cfg.max_variants;
    j["rank_by_diff"] = cfg.rank_by_diff;
    j["timeout_secs"] = cfg.timeout_secs;
    return j;
}
}  // namespace

Exploration explore(const Module& m, const RunConfig& cfg)
{
    validate(cfg);
    require_valid(m);
    Exploration e;
    e.module_digest = module_digest(m);
    e.blocks = extract_all_blocks(m);
    auto synthesis = seeded(cfg.synthesis, cfg.seed);
    if (!e.blocks.empty())
        synthesis.time_budget_secs = std::min(synthesis.time_budget_secs,
            cfg.timeout_secs / static_cast<double>(e.blocks.size()));
    e.results = synthesize_all(e.blocks, synthesis, seeded(cfg.checker, cfg.seed), cfg.jobs);
    return e;
}

std::string store_json(const Exploration& e, const RunConfig& cfg)
{
    json j;
    j["format"] = "crow-store-v1";
    j["module_digest"] = e.module_digest;
    j["config"] = config_json(cfg);
    j["budget_exhausted"] = e.budget_exhausted();
    j["replacements"] = e.replacement_count();
    json blocks = json::array();
    for (std::size_t i = 0; i < e.blocks.size(); ++i)
    {
        const auto& b = e.blocks[i];
        const auto& r = e.results[i];
        json jb;
        jb["id"] = b.id;
        jb["function"] = b.function;
        jb["root_site"] = b.root_site;
        jb["node_count"] = b.node_count();
        jb["expression"] = b.dag.key();
        json inputs = json::array();
        for (const auto& in : b.inputs)
            inputs.push_back(to_string(in));
        jb["inputs"] = std::move(inputs);
        jb["enumerated"] = r.enumerated;
        jb["prefilter_passed"] = r.prefilter_passed;
        jb["rejected"] = r.rejected;
        jb["skipped"] = r.skipped;
        jb["unverifiable"] = r.unverifiable;
        jb["candidate_cap_hit"] = r.candidate_cap_hit;
        jb["time_budget_hit"] = r.time_budget_hit;
        jb["seconds"] = r.seconds;
        json reps = json::array();
        for (const auto& rep : r.replacements)
        {
            json jr;
            jr["expression"] = rep.candidate.dag.key();
            jr["index"] = rep.candidate.index == Candidate::no_index
                              ? json(nullptr)
                              : json(rep.candidate.index);
            jr["tier"] = std::string{to_string(rep.tier)};
            jr["method"] = std::string{to_string(rep.method)};
            jr["emitted_length"] = rep.emitted_length;
            jr["dag"] = dag_to_json(rep.candidate.dag);
            reps.push_back(std::move(jr));
        }
        jb["replacements"] = std::move(reps);
        blocks.push_back(std::move(jb));
    }
    j["blocks"] = std::move(blocks);
    return j.dump(2) + "\n";
}

Exploration read_store(std::string_view text, const Module& m)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (const json::exception& ex)
    {
        throw std::invalid_argument{std::string{"malformed store: "} + ex.what()};
    }
    try
    {
        if (j.at("format").get<std::string>() != "crow-store-v1")
            throw std::invalid_argument{"unsupported store format"};
        Exploration e;
        e.module_digest = module_digest(m);
        if (j.at("module_digest").get<std::string>() != e.module_digest)
            throw store_mismatch{"store was written for a different module"};
        e.blocks = extract_all_blocks(m);
        const auto& blocks = j.at("blocks");
        if (blocks.size() != e.blocks.size())
            throw store_mismatch{"store block count does not match the module"};
        for (std::size_t i = 0; i < e.blocks.size(); ++i)
        {
            const auto& jb = blocks[i];
            const auto& b = e.blocks[i];
            if (jb.at("id").get<std::uint32_t>() != b.id ||
                jb.at("function").get<std::uint32_t>() != b.function ||
                jb.at("root_site").get<std::uint32_t>() != b.root_site)
                throw store_mismatch{"store block " + std::to_string(i) + " does not match the module"};
            BlockSynthesis r;
            r.block_id = b.id;
            r.enumerated = jb.value("enumerated", std::uint64_t{0});
            r.prefilter_passed = jb.value("prefilter_passed", std::uint64_t{0});
            r.rejected = jb.value("rejected", std::uint64_t{0});
            r.skipped = jb.value("skipped", false);
            r.unverifiable = jb.value("unverifiable", false);
            r.candidate_cap_hit = jb.value("candidate_cap_hit", false);
            r.time_budget_hit = jb.value("time_budget_hit", false);
            r.seconds = jb.value("seconds", 0.0);
            for (const auto& jr : jb.at("replacements"))
            {
                Replacement rep;
                rep.block_id = b.id;
                rep.candidate.dag = dag_from_json(jr.at("dag"));
                rep.candidate.index = jr.at("index").is_null() ? Candidate::no_index
                                                               : jr.at("index").get<std::uint64_t>();
                rep.tier = tier_from(jr.at("tier").get<std::string>());
                rep.method = method_from(jr.at("method").get<std::string>());
                rep.emitted_length = rep.candidate.dag.emit().size();
                for (const auto& n : rep.candidate.dag.nodes)
                {
                    if (n.kind == NodeKind::input && n.input >= b.inputs.size())
                        throw std::invalid_argument{"replacement input out of range in store"};
                }
                r.replacements.push_back(std::move(rep));
            }
            e.results.push_back(std::move(r));
        }
        return e;
    }
    catch (const json::exception& ex)
    {
        throw std::invalid_argument{std::string{"malformed store: "} + ex.what()};
    }
}

std::string blocks_json(const std::vector<PureBlock>& blocks)
{
    json out = json::array();
    for (const auto& b : blocks)
    {
        json jb;
        jb["id"] = b.id;
        jb["function"] = b.function;
        jb["root_site"] = b.root_site;
        jb["region"] = {b.region.begin, b.region.end};
        jb["node_count"] = b.node_count();
        jb["expression"] = b.dag.key();
        json inputs = json::array();
        for (const auto& in : b.inputs)
        {
            json ji;
            ji["kind"] = std::string{to_string(in.kind)};
            ji["index"] = in.index;
            ji["site"] = in.site == no_site ? json(nullptr) : json(in.site);
            inputs.push_back(std::move(ji));
        }
        jb["inputs"] = std::move(inputs);
        jb["dag"] = dag_to_json(b.dag);
        out.push_back(std::move(jb));
    }
    return out.dump(2) + "\n";
}

Generation generate(const Module& m, const Exploration& e, const RunConfig& cfg)
{
    validate(cfg);
    std::map<std::uint32_t, std::vector<Replacement>> usable;
    for (const auto& r : e.results)
    {
        std::vector<Replacement> list;
        for (const auto& rep : r.replacements)
        {
            if (!cfg.strict || rep.tier == Tier::verified)
                list.push_back(rep);
        }
        if (!list.empty())
            usable.emplace(r.block_id, std::move(list));
    }

    Generation g;
    g.retained = resolve_overlaps(e.blocks, usable);
    g.combinations = cfg.rank_by_diff
                         ? rank_by_diff(m, e.blocks, g.retained, cfg.max_variants, cfg.seed)
                         : enumerate_combinations(g.retained, cfg.max_variants, cfg.seed);

    std::vector<std::optional<Variant>> built(g.combinations.plans.size());
    parallel_for(built.size(), cfg.jobs, [&](std::size_t i) {
        const auto& plan = g.combinations.plans[i];
        built[i] = make_variant(apply_plan(m, e.blocks, g.retained, plan), plan);
    });
    const auto original_text = print_module(m);
    const auto original_tokens = tokenize(m);
    std::vector<Variant> candidates;
    for (auto& v : built)
    {
        if (v->text == original_text || dtw(original_tokens, tokenize(v->module)).cost == 0)
            continue;
        candidates.push_back(std::move(*v));
    }
    g.variants = dedup_variants(std::move(candidates));
    return g;
}

std::optional<std::string> default_entry(const Module& m)
{
    if (m.exports.contains("main"))
        return "main";
    if (m.exports.empty())
        return std::nullopt;
    return m.exports.begin()->first;
}

namespace
{
bool plan_verified(const Variant& v, const ReplacementSet& s)
{
    for (const auto& [id, index] : v.plan.choice)
    {
        if (s.blocks.at(id)[index].tier != Tier::verified)
            return false;
    }
    return true;
}

std::string variant_file(std::size_t k)
{
    return "variant_" + std::to_string(k) + ".wat";
}

std::string variant_trace_file(std::size_t k)
{
    return "variant_" + std::to_string(k) + ".trace";
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out{p, std::ios::binary};
    if (!out)
        throw std::runtime_error{"cannot write " + p.string()};
    out << text;
}

std::string outcome_text(const Outcome& o)
{
    return to_string(o);
}

std::string manifest_text(const std::string& module_file, const Module& m, const Exploration& e,
    const Generation& g, const RunConfig& cfg, const Diversification* d)
{
    json j;
    j["format"] = "crow-manifest-v1";
    j["original"] = {{"file", module_file}, {"digest", e.module_digest}};
    j["config"] = config_json(cfg);

    json exploration;
    std::size_t verified = 0;
    std::size_t probable = 0;
    std::size_t with_replacements = 0;
    json per_block = json::array();
    for (std::size_t i = 0; i < e.blocks.size(); ++i)
    {
        const auto& b = e.blocks[i];
        const auto& r = e.results[i];
        std::size_t v = 0;
        for (const auto& rep : r.replacements)
            v += rep.tier == Tier::verified;
        verified += v;
        probable += r.replacements.size() - v;
        with_replacements += !r.replacements.empty();
        json jb;
        jb["id"] = b.id;
        jb["function"] = b.function;
        jb["root_site"] = b.root_site;
        jb["node_count"] = b.node_count();
        jb["expression"] = b.dag.key();
        jb["replacements"] = r.replacements.size();
        jb["verified"] = v;
        jb["probable"] = r.replacements.size() - v;
        jb["candidate_cap_hit"] = r.candidate_cap_hit;
        jb["time_budget_hit"] = r.time_budget_hit;
        jb["retained"] = g.retained.blocks.contains(b.id);
        per_block.push_back(std::move(jb));
    }
    exploration["blocks"] = e.blocks.size();
    exploration["blocks_with_replacements"] = with_replacements;
    exploration["replacements"] = verified + probable;
    exploration["verified"] = verified;
    exploration["probable"] = probable;
    exploration["budget_exhausted"] = e.budget_exhausted();
    exploration["per_block"] = std::move(per_block);
    j["exploration"] = std::move(exploration);

    json generation;
    json retained = json::array();
    for (const auto& [id, list] : g.retained.blocks)
        retained.push_back(id);
    generation["retained_blocks"] = std::move(retained);
    generation["combinations"] = g.combinations.total;
    generation["plans"] = g.combinations.plans.size();
    generation["truncated"] = g.combinations.truncated;
    generation["unique_variants"] = g.variants.size();
    j["generation"] = std::move(generation);

    if (d != nullptr && d->entry)
    {
        json entry;
        entry["name"] = *d->entry;
        entry["args"] = d->args;
        entry["outcome"] = outcome_text(d->original_run->outcome);
        entry["trace_length"] = d->original_run->trace.size();
        entry["trace"] = "original.trace";
        j["entry"] = std::move(entry);
    }

    const auto original_tokens = tokenize(m).size();
    json variants = json::array();
    std::size_t static_only = 0;
    std::size_t dynamic_diverse = 0;
    std::size_t size_flags = 0;
    std::size_t mismatches = 0;
    for (std::size_t k = 0; k < g.variants.size(); ++k)
    {
        const auto& v = g.variants[k];
        json jv;
        jv["file"] = variant_file(k);
        jv["digest"] = v.digest;
        json plan = json::object();
        json expressions = json::object();
        for (const auto& [id, index] : v.plan.choice)
        {
            plan[std::to_string(id)] = index;
            expressions[std::to_string(id)] = g.retained.blocks.at(id)[index].candidate.dag.key();
        }
        jv["plan"] = std::move(plan);
        jv["candidates"] = std::move(expressions);
        jv["verified"] = plan_verified(v, g.retained);
        const auto dts = dt_static(m, v.module);
        jv["dt_static"] = dts;
        const auto ratio = original_tokens == 0
                               ? 1.0
                               : static_cast<double>(tokenize(v.module).size()) /
                                     static_cast<double>(original_tokens);
        jv["size_ratio"] = std::round(ratio * 10000.0) / 10000.0;
        const bool flagged = ratio < 0.5 || ratio > 2.0;
        jv["size_flag"] = flagged;
        size_flags += flagged;
        if (d != nullptr && d->entry)
        {
            const auto& meas = d->measures[k];
            jv["trace"] = variant_trace_file(k);
            jv["outcome"] = outcome_text(*meas.outcome);
            const bool matches = *meas.outcome == d->original_run->outcome;
            jv["outcome_matches"] = matches;
            mismatches += !matches;
            jv["dt_dyn"] = *meas.dt_dyn;
            jv["normalized_dt_dyn"] = meas.normalized_dt_dyn
                                          ? json(std::round(*meas.normalized_dt_dyn * 1e6) / 1e6)
                                          : json(nullptr);
            const bool only_static = dts > 0 && *meas.dt_dyn == 0;
            jv["static_only"] = only_static;
            static_only += only_static;
            dynamic_diverse += *meas.dt_dyn > 0;
        }
        variants.push_back(std::move(jv));
    }
    j["variants"] = std::move(variants);

    json summary;
    summary["variants"] = g.variants.size();
    summary["size_flagged"] = size_flags;
    if (d != nullptr && d->entry)
    {
        summary["dynamic_diverse"] = dynamic_diverse;
        summary["static_only"] = static_only;
        summary["outcome_mismatches"] = mismatches;
    }
    j["summary"] = std::move(summary);
    return j.dump(2) + "\n";
}
}  // namespace

std::string write_generation(const std::filesystem::path& dir, const std::string& module_file,
    const Module& m, const Exploration& e, const Generation& g, const RunConfig& cfg)
{
    std::filesystem::create_directories(dir);
    for (std::size_t k = 0; k < g.variants.size(); ++k)
        write_file(dir / variant_file(k), g.variants[k].text);
    auto manifest = manifest_text(module_file, m, e, g, cfg, nullptr);
    write_file(dir / "manifest.json", manifest);
    return manifest;
}

Diversification diversify(const Module& m, const std::string& module_file, const RunConfig& cfg,
    const std::filesystem::path& dir)
{
    Diversification d;
    d.exploration = explore(m, cfg);
    d.generation = generate(m, d.exploration, cfg);
    d.entry = cfg.invoke.empty() ? default_entry(m) : std::optional<std::string>{cfg.invoke};
    if (d.entry)
    {
        if (!m.exports.contains(*d.entry))
            throw unknown_export{"unknown export '" + *d.entry + "'"};
        const auto& f = m.functions.at(m.exports.at(*d.entry));
        d.args = cfg.args ? *cfg.args : std::vector<std::int32_t>(f.params, default_argument);
        d.original_run = run(m, *d.entry, d.args, cfg.fuel);
        d.measures.resize(d.generation.variants.size());
        parallel_for(d.measures.size(), cfg.jobs, [&](std::size_t k) {
            auto exec = run(d.generation.variants[k].module, *d.entry, d.args, cfg.fuel);
            auto& meas = d.measures[k];
            meas.outcome = exec.outcome;
            meas.dt_dyn = dt_dyn(d.original_run->trace, exec.trace);
            if (!d.original_run->trace.empty())
                meas.normalized_dt_dyn = normalized_dt_dyn(d.original_run->trace, exec.trace);
            meas.trace = std::move(exec.trace);
        });
    }
    d.manifest = manifest_text(module_file, m, d.exploration, d.generation, cfg, &d);

    if (!dir.empty())
    {
        std::filesystem::create_directories(dir);
        write_file(dir / "store.json", store_json(d.exploration, cfg));
        for (std::size_t k = 0; k < d.generation.variants.size(); ++k)
        {
            write_file(dir / variant_file(k), d.generation.variants[k].text);
            if (d.entry)
                write_file(dir / variant_trace_file(k),
                    write_trace(TraceFile{*d.entry, d.measures[k].trace, *d.measures[k].outcome}));
        }
        if (d.entry)
            write_file(dir / "original.trace",
                write_trace(TraceFile{*d.entry, d.original_run->trace, d.original_run->outcome}));
        write_file(dir / "manifest.json", d.manifest);
    }
    return d;
}
}  // namespace crow
