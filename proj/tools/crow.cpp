// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/metrics.hpp"
#include "crow/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <climits>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace
{
enum ExitCode : int
{
    exit_ok = 0,
    exit_input = 2,
    exit_config = 3,
    exit_store = 4,
    exit_trap = 5,
    exit_fuel = 6,
};

/// Error carrying the process exit code.
struct cli_failure
{
    int code;
    std::string message;
};

std::string read_file(const fs::path& p)
{
    std::ifstream in{p, std::ios::binary};
    if (!in)
        throw cli_failure{exit_input, "cannot read " + p.string()};
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

crow::Module load_module(const fs::path& p)
{
    const auto text = read_file(p);
    try
    {
        auto m = crow::parse_module(text);
        crow::require_valid(m);
        return m;
    }
    catch (const crow::parse_error& e)
    {
        throw cli_failure{exit_input, p.string() + ":" + std::to_string(e.line()) + ":" +
                                          std::to_string(e.column()) + ": " + e.what()};
    }
    catch (const std::invalid_argument& e)
    {
        throw cli_failure{exit_input, p.string() + ": " + e.what()};
    }
}

std::vector<std::string> split_words(const std::string& s)
{
    std::istringstream in{s};
    std::vector<std::string> out;
    for (std::string w; in >> w;)
        out.push_back(w);
    return out;
}

std::vector<std::int32_t> parse_args(const std::string& csv)
{
    std::vector<std::int32_t> out;
    std::stringstream in{csv};
    for (std::string item; std::getline(in, item, ',');)
    {
        const auto words = split_words(item);
        if (words.size() != 1)
            throw crow::config_error{"bad argument list '" + csv + "'"};
        std::size_t used = 0;
        long long v = 0;
        try
        {
            v = std::stoll(words[0], &used, 0);
        }
        catch (const std::exception&)
        {
            used = 0;
        }
        if (used != words[0].size() || v < INT32_MIN || v > UINT32_MAX)
            throw crow::config_error{"bad argument '" + words[0] + "'"};
        out.push_back(static_cast<std::int32_t>(static_cast<std::uint32_t>(v)));
    }
    return out;
}

/// Raw option values before conversion into a RunConfig.
struct Options
{
    double timeout_secs = 60.0;
    unsigned max_size = 3;
    std::string vocab;
    std::size_t max_variants = 256;
    std::uint64_t seed = 0;
    std::string checker = "probable";
    std::string solver_cmd;
    unsigned jobs = 1;
    std::string invoke;
    std::string args;
    bool args_given = false;
    std::uint64_t fuel = crow::default_fuel;
    bool rank_by_diff = false;
    bool strict = false;
    std::uint64_t max_candidates = crow::SynthesisConfig{}.max_candidates;
    std::uint64_t max_replacements = crow::SynthesisConfig{}.max_replacements;
};

crow::RunConfig make_config(const Options& o)
{
    crow::RunConfig cfg;
    cfg.timeout_secs = o.timeout_secs;
    cfg.synthesis.max_size = o.max_size;
    cfg.synthesis.max_candidates = o.max_candidates;
    cfg.synthesis.max_replacements = o.max_replacements;
    if (!o.vocab.empty())
        cfg.synthesis.vocabulary = crow::parse_vocabulary(o.vocab);
    cfg.max_variants = o.max_variants;
    cfg.seed = o.seed;
    if (o.checker == "exhaustive")
        cfg.checker.mode = crow::CheckerMode::exhaustive_only;
    else if (o.checker == "probable")
        cfg.checker.mode = crow::CheckerMode::probable_ok;
    else if (o.checker == "smt")
        cfg.checker.mode = crow::CheckerMode::smt;
    else
        throw crow::config_error{"unknown checker '" + o.checker + "'"};
    auto solver = o.solver_cmd;
    if (solver.empty())
    {
        const char* env = std::getenv("CROW_SOLVER");
        solver = env != nullptr ? env : "z3 -in";
    }
    cfg.checker.solver_command = split_words(solver);
    cfg.jobs = o.jobs;
    cfg.invoke = o.invoke;
    if (o.args_given)
        cfg.args = parse_args(o.args);
    cfg.fuel = o.fuel;
    cfg.rank_by_diff = o.rank_by_diff;
    cfg.strict = o.strict;
    crow::validate(cfg);
    return cfg;
}

void add_exploration_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--timeout-secs", o.timeout_secs, "Exploration budget for the module");
    cmd->add_option("--max-size", o.max_size, "Maximum operators per candidate");
    cmd->add_option("--vocab", o.vocab, "Comma-separated candidate operators, e.g. add,shl,const");
    cmd->add_option("--checker", o.checker, "exhaustive | probable | smt");
    cmd->add_option("--solver-cmd", o.solver_cmd, "SMT solver command line (default $CROW_SOLVER or 'z3 -in')");
    cmd->add_option("--max-candidates", o.max_candidates, "Enumerated candidates per block");
    cmd->add_option("--max-replacements", o.max_replacements, "Stored replacements per block");
}

void add_generation_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--max-variants", o.max_variants, "Variant limit");
    cmd->add_flag("--rank-by-diff", o.rank_by_diff, "Prefer plans with the largest dt_static");
    cmd->add_flag("--strict", o.strict, "Use Verified replacements only");
}

void add_common_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--jobs", o.jobs, "Worker threads");
}

void add_run_options(CLI::App* cmd, Options& o)
{
    cmd->add_option("--invoke", o.invoke, "Exported function to run");
    cmd->add_option("--args", o.args, "Comma-separated i32 arguments")->each([&o](const std::string&) {
        o.args_given = true;
    });
    cmd->add_option("--fuel", o.fuel, "Execution fuel in events");
}

void write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-")
    {
        std::cout << text;
        return;
    }
    std::ofstream out{path, std::ios::binary};
    if (!out)
        throw cli_failure{exit_config, "cannot write " + path};
    out << text;
}

int cmd_explore(const std::string& module_path, const std::string& out, const std::string& dump,
    const Options& o)
{
    const auto m = load_module(module_path);
    const auto cfg = make_config(o);
    const auto e = crow::explore(m, cfg);
    if (!dump.empty())
        write_output(dump, crow::blocks_json(e.blocks));
    write_output(out.empty() ? "store.json" : out, crow::store_json(e, cfg));
    std::cerr << "blocks: " << e.blocks.size() << ", replacements: " << e.replacement_count()
              << (e.budget_exhausted() ? " (budget exhausted)" : "") << "\n";
    return exit_ok;
}

int cmd_generate(const std::string& module_path, const std::string& store_path,
    const std::string& out, const Options& o)
{
    const auto m = load_module(module_path);
    const auto cfg = make_config(o);
    crow::Exploration e;
    try
    {
        e = crow::read_store(read_file(store_path), m);
    }
    catch (const crow::store_mismatch& ex)
    {
        throw cli_failure{exit_store, store_path + ": " + ex.what()};
    }
    catch (const std::invalid_argument& ex)
    {
        throw cli_failure{exit_input, store_path + ": " + ex.what()};
    }
    const auto g = crow::generate(m, e, cfg);
    crow::write_generation(out.empty() ? "variants" : out, fs::path{module_path}.filename().string(), m,
        e, g, cfg);
    std::cerr << "unique variants: " << g.variants.size()
              << (g.combinations.truncated ? " (plans truncated)" : "") << "\n";
    return exit_ok;
}

int outcome_exit(const crow::Outcome& o)
{
    switch (o.kind)
    {
    case crow::Outcome::Kind::result:
        return exit_ok;
    case crow::Outcome::Kind::trap:
        return exit_trap;
    case crow::Outcome::Kind::fuel_exhausted:
        return exit_fuel;
    }
    return exit_ok;
}

int cmd_trace(const std::string& module_path, const std::string& out, const Options& o)
{
    const auto m = load_module(module_path);
    const auto cfg = make_config(o);
    const auto entry = cfg.invoke.empty() ? crow::default_entry(m) : std::optional{cfg.invoke};
    if (!entry || !m.exports.contains(*entry))
        throw cli_failure{exit_input, "unknown export '" + entry.value_or("") + "'"};
    const auto& f = m.functions.at(m.exports.at(*entry));
    const auto args = cfg.args ? *cfg.args : std::vector<std::int32_t>(f.params, crow::default_argument);
    crow::Execution exec;
    try
    {
        exec = crow::run(m, *entry, args, cfg.fuel);
    }
    catch (const crow::arity_mismatch& ex)
    {
        throw cli_failure{exit_config, ex.what()};
    }
    write_output(out, crow::write_trace(crow::TraceFile{*entry, exec.trace, exec.outcome}));
    return outcome_exit(exec.outcome);
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext)
{
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator{dir})
    {
        if (entry.is_regular_file() && entry.path().extension() == ext)
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

crow::Trace load_trace(const fs::path& p)
{
    try
    {
        return crow::read_trace(read_file(p)).trace;
    }
    catch (const crow::malformed_trace& e)
    {
        throw cli_failure{exit_input, p.string() + ": " + e.what()};
    }
}

int cmd_measure(const std::string& kind, const std::string& left, const std::string& right,
    bool normalize)
{
    if (kind != "static" && kind != "dynamic")
        throw cli_failure{exit_config, "measure kind must be static or dynamic"};
    const bool is_static = kind == "static";
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (right.empty())
    {
        if (!fs::is_directory(left))
            throw cli_failure{exit_config, "measure needs two files or one directory"};
        const auto files = list_files(left, is_static ? ".wat" : ".trace");
        for (std::size_t i = 0; i < files.size(); ++i)
        {
            for (std::size_t j = i + 1; j < files.size(); ++j)
                pairs.emplace_back(files[i], files[j]);
        }
    }
    else
        pairs.emplace_back(left, right);

    const auto metric = is_static ? "dt_static" : "dt_dyn";
    for (const auto& [a, b] : pairs)
    {
        std::uint64_t cost = 0;
        std::size_t left_length = 0;
        if (is_static)
        {
            const auto ma = load_module(a);
            const auto mb = load_module(b);
            cost = crow::dt_static(ma, mb);
            left_length = crow::tokenize(ma).size();
        }
        else
        {
            const auto ta = load_trace(a);
            const auto tb = load_trace(b);
            cost = crow::dt_dyn(ta, tb);
            left_length = ta.size();
        }
        std::cout << a.string() << '\t' << b.string() << '\t' << metric << '\t' << cost << '\t';
        if (normalize && left_length > 0)
            std::cout << static_cast<double>(cost) / static_cast<double>(left_length);
        else
            std::cout << '-';
        std::cout << '\n';
    }
    return exit_ok;
}

int cmd_diversify(const std::string& module_path, const std::string& out, const Options& o)
{
    const auto m = load_module(module_path);
    const auto cfg = make_config(o);
    crow::Diversification d;
    try
    {
        d = crow::diversify(m, fs::path{module_path}.filename().string(), cfg,
            out.empty() ? fs::path{"variants"} : fs::path{out});
    }
    catch (const crow::unknown_export& ex)
    {
        throw cli_failure{exit_input, ex.what()};
    }
    catch (const crow::arity_mismatch& ex)
    {
        throw cli_failure{exit_config, ex.what()};
    }
    std::cerr << "blocks: " << d.exploration.blocks.size()
              << ", replacements: " << d.exploration.replacement_count()
              << ", unique variants: " << d.generation.variants.size() << "\n";
    return exit_ok;
}
}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"crow: WebAssembly diversification toolkit"};
    app.require_subcommand(1);
    Options o;
    std::string module_path, store_path, out, dump, kind, left, right;
    bool normalize = false;

    auto* explore = app.add_subcommand("explore", "Find pure blocks and synthesize replacements");
    explore->add_option("module", module_path, "Input .wat file")->required();
    explore->add_option("-o,--output", out, "Replacement store (default store.json)");
    explore->add_option("--dump-blocks", dump, "Write the extracted blocks as JSON");
    add_exploration_options(explore, o);
    add_common_options(explore, o);

    auto* generate = app.add_subcommand("generate", "Combine replacements into unique variants");
    generate->add_option("module", module_path, "Input .wat file")->required();
    generate->add_option("store", store_path, "Replacement store")->required();
    generate->add_option("-o,--output", out, "Output directory (default variants)");
    add_generation_options(generate, o);
    add_common_options(generate, o);

    auto* trace = app.add_subcommand("trace", "Run an export and record its stack trace");
    trace->add_option("module", module_path, "Input .wat file")->required();
    trace->add_option("-o,--output", out, "Trace file (default stdout)");
    add_run_options(trace, o);

    auto* measure = app.add_subcommand("measure", "DTW distance between modules or traces");
    measure->add_option("kind", kind, "static | dynamic")->required();
    measure->add_option("left", left, "File, or directory for all pairs")->required();
    measure->add_option("right", right, "File");
    measure->add_flag("--normalize", normalize, "Divide by the left length");

    auto* diversify = app.add_subcommand("diversify", "explore, generate, trace and measure");
    diversify->add_option("module", module_path, "Input .wat file")->required();
    diversify->add_option("-o,--output", out, "Output directory (default variants)");
    add_exploration_options(diversify, o);
    add_generation_options(diversify, o);
    add_common_options(diversify, o);
    add_run_options(diversify, o);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return exit_config;
    }

    try
    {
        if (*explore)
            return cmd_explore(module_path, out, dump, o);
        if (*generate)
            return cmd_generate(module_path, store_path, out, o);
        if (*trace)
            return cmd_trace(module_path, out, o);
        if (*measure)
            return cmd_measure(kind, left, right, normalize);
        if (*diversify)
            return cmd_diversify(module_path, out, o);
    }
    catch (const cli_failure& f)
    {
        std::cerr << "crow: " << f.message << "\n";
        return f.code;
    }
    catch (const crow::config_error& e)
    {
        std::cerr << "crow: configuration error: " << e.what() << "\n";
        return exit_config;
    }
    catch (const std::exception& e)
    {
        std::cerr << "crow: " << e.what() << "\n";
        return 1;
    }
    return exit_ok;
}
