// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/equivalence.hpp"
#include "crow/interpreter.hpp"
#include "crow/region_ir.hpp"
#include "random_module.hpp"
#include <gtest/gtest.h>
#include <map>

using namespace crow;
using namespace crow::test;

TEST(region_ir, listing_blocks)
{
    const auto m = load_corpus("listing2");
    const auto blocks = extract_all_blocks(m);
    ASSERT_EQ(blocks.size(), 3u);

    EXPECT_EQ(blocks[0].dag.key(), "(i32.mul $0 2)");
    EXPECT_EQ(blocks[0].function, 0u);
    EXPECT_EQ(blocks[0].root_site, 3u);
    ASSERT_EQ(blocks[0].inputs.size(), 1u);
    EXPECT_EQ(blocks[0].inputs[0].kind, InputKind::param);
    EXPECT_EQ(blocks[0].inputs[0].index, 0u);

    EXPECT_EQ(blocks[1].dag.key(), "(i32.add $0 (i32.mul $0 2))");
    EXPECT_EQ(blocks[1].root_site, 4u);
    EXPECT_EQ(blocks[1].node_count(), 3u);
    EXPECT_EQ(blocks[1].sites, (std::vector<std::uint32_t>{2, 3, 4}));

    EXPECT_EQ(blocks[2].dag.key(), "10");
    EXPECT_EQ(blocks[2].function, 1u);
    EXPECT_TRUE(blocks[2].inputs.empty());

    EXPECT_TRUE(blocks_overlap(blocks[0], blocks[1]));
    EXPECT_FALSE(blocks_overlap(blocks[0], blocks[2]));
    for (std::size_t i = 0; i < blocks.size(); ++i)
        EXPECT_EQ(blocks[i].id, i);
}

TEST(region_ir, regions_split_at_effects_and_control)
{
    const auto m = parse_module(R"((module
  (global (mut i32) (i32.const 0))
  (func (param i32) (result i32)
    local.get 0
    i32.const 1
    i32.add
    global.set 0
    local.get 0
    if (result i32)
      i32.const 2
    else
      i32.const 3
    end
    global.get 0
    i32.mul)))");
    const auto regions = build_regions(m, 0);
    ASSERT_GE(regions.size(), 3u);
    for (const auto& r : regions)
    {
        EXPECT_LE(r.begin, r.end);
        for (auto pc = r.begin; pc < r.end; ++pc)
            EXPECT_FALSE(is_structured_control(m.functions[0].body[pc].op)) << pc;
    }
    const auto blocks = extract_all_blocks(m);
    bool saw_global_input = false;
    for (const auto& b : blocks)
    {
        for (const auto& in : b.inputs)
            saw_global_input |= in.kind == InputKind::global;
    }
    EXPECT_TRUE(saw_global_input);
}

TEST(region_ir, shared_subterm_is_one_node)
{
    const auto m = parse_module(R"((module
  (func (param i32) (result i32)
    local.get 0
    i32.const 3
    i32.add
    local.tee 0
    local.get 0
    i32.mul)))");
    const auto blocks = extract_all_blocks(m);
    ASSERT_FALSE(blocks.empty());
    for (const auto& b : blocks)
    {
        for (std::uint32_t v : {0u, 1u, 7u, 0xffffffffu})
        {
            const std::uint32_t env[] = {v};
            (void)eval_dag(b.dag, std::span{env, b.inputs.size()});
        }
    }
}

TEST(region_ir, trap_capable_ops_are_not_in_blocks)
{
    const auto m = load_corpus("divmod");
    for (const auto& b : extract_all_blocks(m))
    {
        for (const auto& n : b.dag.nodes)
        {
            if (n.kind == NodeKind::op)
            {
                EXPECT_FALSE(is_trap_capable(n.op));
            }
        }
    }
}

namespace
{
/// Runs main and checks every block's DAG value against the value the interpreter
/// leaves on the stack after the root instruction, with inputs taken from the
/// observed machine state.
void check_blocks_against_interpreter(const Module& m, std::span<const std::int32_t> args)
{
    const auto blocks = extract_all_blocks(m);
    struct Pending
    {
        std::map<std::size_t, std::uint32_t> inputs;
    };
    std::vector<Pending> pending(blocks.size());
    std::size_t checked = 0;

    InvokeOptions options;
    options.record_trace = false;
    options.observer = [&](const StepInfo& s) {
        for (std::size_t bi = 0; bi < blocks.size(); ++bi)
        {
            const auto& b = blocks[bi];
            if (b.function != s.function)
                continue;
            if (s.pc == b.region.begin)
            {
                pending[bi].inputs.clear();
                for (std::size_t i = 0; i < b.inputs.size(); ++i)
                {
                    const auto& in = b.inputs[i];
                    if (in.kind == InputKind::param || in.kind == InputKind::local)
                        pending[bi].inputs[i] = s.locals[in.index];
                    else if (in.kind == InputKind::entry_stack)
                        pending[bi].inputs[i] = s.stack[s.stack.size() - 1 - in.index];
                }
            }
            for (std::size_t i = 0; i < b.inputs.size(); ++i)
            {
                const auto& in = b.inputs[i];
                const bool produced = in.kind == InputKind::global || in.kind == InputKind::load ||
                                      in.kind == InputKind::call_result ||
                                      in.kind == InputKind::trap_op_result;
                if (produced && s.pc == in.site + 1)
                    pending[bi].inputs[i] = s.stack.back();
            }
            if (s.pc == b.root_site + 1)
            {
                std::vector<std::uint32_t> env(b.inputs.size());
                for (std::size_t i = 0; i < env.size(); ++i)
                {
                    ASSERT_TRUE(pending[bi].inputs.count(i)) << "input " << i << " unobserved";
                    env[i] = pending[bi].inputs[i];
                }
                EXPECT_EQ(eval_dag(b.dag, env), s.stack.back())
                    << "block " << b.id << " " << b.dag.key() << "\n"
                    << print_module(m);
                ++checked;
            }
        }
    };
    auto state = instantiate(m);
    (void)invoke(state, "main", args, options);
    (void)checked;
}
}  // namespace

TEST(region_ir, block_values_match_execution)
{
    for (std::uint64_t seed = 0; seed < 400; ++seed)
    {
        auto m = random_module(seed);
        // Observe the final expression too by storing it before returning.
        auto& main = m.functions[1];
        const auto tmp = main.local_count();
        main.locals += 1;
        main.body.push_back(make_instr(Opcode::local_set, tmp));
        main.body.push_back(make_instr(Opcode::local_get, tmp));
        const auto args = random_arguments(main.params, 4, seed);
        for (const auto& a : args)
            check_blocks_against_interpreter(m, a);
        if (HasFailure())
            return;
    }
}

TEST(region_ir, inputs_first_use_order)
{
    const auto m = parse_module(R"((module
  (func (param i32 i32) (result i32)
    local.get 1
    local.get 0
    i32.sub
    local.get 1
    i32.add)))");
    const auto blocks = extract_all_blocks(m);
    ASSERT_FALSE(blocks.empty());
    const auto& last = blocks.back();
    ASSERT_EQ(last.inputs.size(), 2u);
    EXPECT_EQ(last.inputs[0].index, 1u);
    EXPECT_EQ(last.inputs[1].index, 0u);
    EXPECT_EQ(last.dag.key(), "(i32.add (i32.sub $0 $1) $0)");
}
