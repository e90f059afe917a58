// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/equivalence.hpp"
#include "crow/interpreter.hpp"
#include "crow/region_ir.hpp"
#include "random_module.hpp"
#include <gtest/gtest.h>
#include <limits>
#include <sstream>

using namespace crow;
using namespace crow::test;

namespace
{
TraceEvent push(std::int32_t v)
{
    return {EventKind::push, v};
}
TraceEvent pop(std::int32_t v)
{
    return {EventKind::pop, v};
}

Outcome run_main(const std::string& corpus, std::vector<std::int32_t> args)
{
    return run(load_corpus(corpus), "main", args).outcome;
}
}  // namespace

TEST(interpreter, listing_trace_by_hand)
{
    const auto e = run(load_corpus("listing2"), "main", {});
    EXPECT_EQ(e.outcome, Outcome::result(30));
    const Trace expected{push(10), pop(10), push(10), push(10), push(2), pop(2), pop(10),
        push(20), pop(20), pop(10), push(30), pop(30), push(30)};
    EXPECT_EQ(e.trace, expected);
}

TEST(interpreter, corpus_results_by_hand)
{
    EXPECT_EQ(run_main("mul2", {21}), Outcome::result(42));
    EXPECT_EQ(run_main("gt10", {11}), Outcome::result(1));
    EXPECT_EQ(run_main("gt10", {10}), Outcome::result(0));
    EXPECT_EQ(run_main("subneg5", {-5}), Outcome::result(0));
    EXPECT_EQ(run_main("const25264", {}), Outcome::result(25264));
    EXPECT_EQ(run_main("poly", {10}), Outcome::result(137));
    EXPECT_EQ(run_main("abs", {-7}), Outcome::result(7));
    EXPECT_EQ(run_main("abs", {std::numeric_limits<std::int32_t>::min()}),
        Outcome::result(std::numeric_limits<std::int32_t>::min()));
    EXPECT_EQ(run_main("max2", {3, 9}), Outcome::result(9));
    EXPECT_EQ(run_main("clamp", {300}), Outcome::result(255));
    EXPECT_EQ(run_main("clamp", {-4}), Outcome::result(0));
    EXPECT_EQ(run_main("sumloop", {10}), Outcome::result(55));
    EXPECT_EQ(run_main("factorial", {5}), Outcome::result(120));
    EXPECT_EQ(run_main("gcd", {12, 9}), Outcome::result(3));
    EXPECT_EQ(run_main("fib", {10}), Outcome::result(55));
    EXPECT_EQ(run_main("popcount", {255}), Outcome::result(8));
    EXPECT_EQ(run_main("popcount", {-1}), Outcome::result(32));
    EXPECT_EQ(run_main("collatz", {6}), Outcome::result(16));
    EXPECT_EQ(run_main("average", {7, 10}), Outcome::result(8));
    EXPECT_EQ(run_main("pow2", {64}), Outcome::result(1));
    EXPECT_EQ(run_main("pow2", {0}), Outcome::result(0));
    EXPECT_EQ(run_main("sign", {-3}), Outcome::result(-1));
    EXPECT_EQ(run_main("rotmix", {1}), Outcome::result(0x20000020));
    EXPECT_EQ(run_main("divmod", {10}), Outcome::result(5));
    EXPECT_EQ(run_main("branch", {200}), Outcome::result(800));
    EXPECT_EQ(run_main("branch", {10}), Outcome::result(19));
    EXPECT_EQ(run_main("calls", {3, 4}), Outcome::result(49));
    EXPECT_EQ(run_main("memory", {5, 6}), Outcome::result(13));
    EXPECT_EQ(run_main("counter", {1}), Outcome::result(107));
    EXPECT_EQ(run_main("orself", {6}), Outcome::result(6));
}

TEST(interpreter, traps)
{
    EXPECT_EQ(run_main("trapdiv", {1, 8}), Outcome::trap("div-by-zero"));
    EXPECT_EQ(run_main("trapdiv", {7, 3}), Outcome::result(2));

    const auto overflow = parse_module(R"((module
  (func (param i32 i32) (result i32)
    local.get 0
    local.get 1
    i32.div_s)
  (func (param i32 i32) (result i32)
    local.get 0
    local.get 1
    i32.rem_s)
  (export "div" (func 0))
  (export "rem" (func 1))))");
    const std::int32_t args[] = {std::numeric_limits<std::int32_t>::min(), -1};
    EXPECT_EQ(run(overflow, "div", args).outcome, Outcome::trap("integer-overflow"));
    EXPECT_EQ(run(overflow, "rem", args).outcome, Outcome::result(0));

    const auto oob = parse_module(R"((module
  (memory 1)
  (func (param i32) (result i32)
    local.get 0
    i32.load offset=4)
  (export "f" (func 0))))");
    const std::int32_t edge[] = {65528};
    EXPECT_EQ(run(oob, "f", edge).outcome, Outcome::result(0));
    const std::int32_t past[] = {65529};
    EXPECT_EQ(run(oob, "f", past).outcome, Outcome::trap("out-of-bounds"));
    const std::int32_t wrap[] = {-4};
    EXPECT_EQ(run(oob, "f", wrap).outcome, Outcome::trap("out-of-bounds"));

    const auto unreachable = parse_module("(module (func unreachable) (export \"f\" (func 0)))");
    EXPECT_EQ(run(unreachable, "f", {}).outcome, Outcome::trap("unreachable"));

    const auto recursion = parse_module("(module (func call 0) (export \"f\" (func 0)))");
    EXPECT_EQ(run(recursion, "f", {}).outcome, Outcome::trap("call-stack-exhausted"));
}

TEST(interpreter, fuel)
{
    const auto spin = parse_module("(module (func loop br 0 end) (export \"f\" (func 0)))");
    EXPECT_EQ(run(spin, "f", {}, 1000).outcome, Outcome::fuel_exhausted());
    EXPECT_EQ(run(load_corpus("listing2"), "main", {}, 5).outcome, Outcome::fuel_exhausted());
    EXPECT_EQ(run(load_corpus("listing2"), "main", {}, 1000).outcome, Outcome::result(30));
}

TEST(interpreter, invocation_errors)
{
    const auto m = load_corpus("mul2");
    EXPECT_THROW(run(m, "nope", {}), unknown_export);
    EXPECT_THROW(run(m, "main", {}), arity_mismatch);
    const std::int32_t two[] = {1, 2};
    EXPECT_THROW(run(m, "main", two), arity_mismatch);
}

TEST(interpreter, branches_carry_values)
{
    const auto m = parse_module(R"((module
  (func (param i32) (result i32)
    block (result i32)
      i32.const 7
      i32.const 1
      i32.const 2
      local.get 0
      br_if 0
      drop
    end)
  (export "f" (func 0))))");
    const std::int32_t taken[] = {1};
    const auto t = run(m, "f", taken);
    EXPECT_EQ(t.outcome, Outcome::result(2));
    // The branch discards the 7 and 1 below its value.
    const Trace expected{push(7), push(1), push(2), push(1), pop(1), pop(2), pop(1), pop(7),
        push(2)};
    EXPECT_EQ(t.trace, expected);
    const std::int32_t fallthrough[] = {0};
    EXPECT_EQ(run(m, "f", fallthrough).outcome, Outcome::result(1));
}

TEST(interpreter, state_persists_across_invocations)
{
    const auto m = load_corpus("counter");
    auto state = instantiate(m);
    const std::int32_t one[] = {1};
    EXPECT_EQ(invoke(state, "main", one).outcome, Outcome::result(107));
    EXPECT_EQ(invoke(state, "main", one).outcome, Outcome::result(111));
    EXPECT_EQ(state.globals[0], 108u);
}

TEST(interpreter, memory_little_endian)
{
    const auto m = parse_module(R"((module
  (memory 1)
  (func (result i32)
    i32.const 0
    i32.const 0x11223344
    i32.store
    i32.const 1
    i32.load)
  (export "f" (func 0))))");
    EXPECT_EQ(run(m, "f", {}).outcome, Outcome::result(0x00112233));
}

TEST(interpreter, agrees_with_dag_evaluation)
{
    RandomModuleOptions options;
    options.effects = false;
    options.impure_reads = false;
    options.max_depth = 4;
    std::size_t compared = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed)
    {
        const auto m = random_module(seed, options);
        const auto blocks = extract_all_blocks(m);
        const auto& main = m.functions[1];
        const PureBlock* whole = nullptr;
        for (const auto& b : blocks)
        {
            if (b.function == 1 && b.root_site + 1 == main.body.size())
                whole = &b;
        }
        if (whole == nullptr)
            continue;
        for (const auto& args : random_arguments(main.params, 16, seed))
        {
            std::vector<std::uint32_t> env;
            for (const auto& in : whole->inputs)
            {
                if (in.kind == InputKind::local)
                {
                    env.push_back(0);
                    continue;
                }
                ASSERT_EQ(in.kind, InputKind::param);
                env.push_back(static_cast<std::uint32_t>(args[in.index]));
            }
            const auto e = run(m, "main", args);
            ASSERT_EQ(e.outcome.kind, Outcome::Kind::result);
            ASSERT_EQ(static_cast<std::uint32_t>(*e.outcome.value), eval_dag(whole->dag, env))
                << print_module(m);
            ++compared;
        }
    }
    EXPECT_GT(compared, 4000u);
}

TEST(interpreter, trace_balance)
{
    for (std::uint64_t seed = 0; seed < 200; ++seed)
    {
        const auto m = random_module(seed);
        for (const auto& args : random_arguments(m.functions[1].params, 3, seed))
        {
            const auto e = run(m, "main", args);
            if (e.outcome.kind != Outcome::Kind::result)
                continue;
            std::int64_t depth = 0;
            for (const auto& ev : e.trace)
            {
                depth += ev.kind == EventKind::push ? 1 : -1;
                ASSERT_GE(depth, 0);
            }
            // Arguments are popped by nothing; the result is the one value left.
            ASSERT_FALSE(e.trace.empty());
            EXPECT_EQ(e.trace.back(), push(*e.outcome.value));
        }
    }
}

TEST(interpreter, trace_file_round_trip)
{
    const auto e = run(load_corpus("listing2"), "main", {});
    const TraceFile file{"main", e.trace, e.outcome};
    const auto text = write_trace(file);
    EXPECT_EQ(text.rfind("# crow-trace v1 entry=main\n", 0), 0u);
    EXPECT_EQ(read_trace(text), file);
    std::istringstream in{text};
    EXPECT_EQ(read_trace(in), file);

    const TraceFile trapped{"f", {push(1), pop(1)}, Outcome::trap("div-by-zero")};
    EXPECT_EQ(read_trace(write_trace(trapped)), trapped);
    const TraceFile fuel{"f", {}, Outcome::fuel_exhausted()};
    EXPECT_EQ(read_trace(write_trace(fuel)), fuel);
    const TraceFile empty{"f", {push(3), pop(3)}, Outcome::result()};
    EXPECT_EQ(read_trace(write_trace(empty)), empty);
}

TEST(interpreter, malformed_traces)
{
    EXPECT_THROW(read_trace(""), malformed_trace);
    EXPECT_THROW(read_trace("push 1\nresult 1\n"), malformed_trace);
    EXPECT_THROW(read_trace("# crow-trace v1 entry=f\npush x\nresult 1\n"), malformed_trace);
    EXPECT_THROW(read_trace("# crow-trace v1 entry=f\npush 1\n"), malformed_trace);
    EXPECT_THROW(read_trace("# crow-trace v1 entry=f\nresult 1\npush 1\n"), malformed_trace);
    EXPECT_THROW(read_trace("# crow-trace v1 entry=f\njump 1\nresult 1\n"), malformed_trace);
}
