// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "region_graph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace crow
{
std::string_view to_string(InputKind kind) noexcept
{
    switch (kind)
    {
    case InputKind::param:
        return "param";
    case InputKind::local:
        return "local";
    case InputKind::global:
        return "global";
    case InputKind::load:
        return "load";
    case InputKind::call_result:
        return "call-result";
    case InputKind::trap_op_result:
        return "trap-op-result";
    case InputKind::entry_stack:
        return "region-entry-stack";
    }
    return "?";
}

std::string to_string(const InputOrigin& origin)
{
    std::string s{to_string(origin.kind)};
    switch (origin.kind)
    {
    case InputKind::param:
    case InputKind::local:
    case InputKind::global:
    case InputKind::entry_stack:
        s += "(" + std::to_string(origin.index) + ")";
        break;
    default:
        s += "(@" + std::to_string(origin.site) + ")";
        break;
    }
    return s;
}

std::vector<std::int32_t> PureBlock::immediates() const
{
    std::vector<std::int32_t> out;
    for (const auto& n : dag.nodes)
    {
        if (n.kind == NodeKind::constant &&
            std::find(out.begin(), out.end(), n.value) == out.end())
            out.push_back(n.value);
    }
    return out;
}

namespace
{
std::vector<Region> split_regions(const FuncDef& f, std::uint32_t function_index, const Module* m)
{
    std::vector<Region> regions;
    std::uint32_t start = 0;
    const auto n = static_cast<std::uint32_t>(f.body.size());
    for (std::uint32_t i = 0; i <= n; ++i)
    {
        if (i == n || is_structured_control(f.body[i].op))
        {
            if (i > start)
                regions.push_back(Region{function_index, start, i, 0});
            start = i + 1;
        }
    }
    // Entry arity: values consumed below the region's own pushes.
    for (auto& r : regions)
    {
        std::int64_t height = 0;
        std::int64_t lowest = 0;
        for (auto pc = r.begin; pc < r.end; ++pc)
        {
            const auto& instr = f.body[pc];
            std::int64_t pops = info(instr.op).pops;
            std::int64_t pushes = info(instr.op).pushes;
            if (instr.op == Opcode::call)
            {
                const auto callee = static_cast<std::size_t>(instr.imm);
                const bool known = m != nullptr && callee < m->functions.size();
                pops = known ? m->functions[callee].params : 0;
                pushes = known ? m->functions[callee].results : 0;
            }
            height -= pops;
            lowest = std::min(lowest, height);
            height += pushes;
        }
        r.entry_arity = static_cast<std::uint32_t>(-lowest);
    }
    return regions;
}
}  // namespace

std::vector<Region> build_regions(const FuncDef& f, std::uint32_t function_index)
{
    return split_regions(f, function_index, nullptr);
}

std::vector<Region> build_regions(const Module& m, std::uint32_t function_index)
{
    return split_regions(m.functions.at(function_index), function_index, &m);
}

namespace detail
{
RegionGraph build_region_graph(const Region& r, const Module& m)
{
    if (r.function >= m.functions.size())
        throw std::invalid_argument{"region function index out of range"};
    const auto& f = m.functions[r.function];
    if (r.end > f.body.size() || r.begin > r.end)
        throw std::invalid_argument{"region range out of bounds"};

    RegionGraph g;
    g.region = r;
    g.produced.assign(r.end - r.begin, std::nullopt);
    g.is_root.assign(r.end - r.begin, false);

    std::vector<NodeId> stack;
    std::map<std::uint32_t, NodeId> local_value;  // local -> node after an in-region assignment
    std::map<std::uint32_t, NodeId> local_entry;  // local -> entry-value input node
    std::uint32_t entry_depth = 0;
    // Constant nodes consumed directly by a pure operator.
    std::set<NodeId> const_into_pure;

    const auto new_input = [&](InputOrigin origin) {
        g.inputs.push_back(origin);
        return g.dag.add_input(static_cast<std::uint32_t>(g.inputs.size() - 1), origin.site);
    };

    const auto pop = [&]() {
        if (!stack.empty())
        {
            const auto n = stack.back();
            stack.pop_back();
            return n;
        }
        return new_input(InputOrigin{InputKind::entry_stack, entry_depth++, no_site});
    };

    for (auto pc = r.begin; pc < r.end; ++pc)
    {
        const auto& instr = f.body[pc];
        const auto rel = pc - r.begin;
        const auto op = instr.op;
        if (is_structured_control(op))
            throw std::invalid_argument{"structured control inside region"};

        if (op == Opcode::i32_const)
        {
            stack.push_back(g.dag.add_constant(static_cast<std::int32_t>(instr.imm), pc));
        }
        else if (is_pure_op(op))
        {
            const auto arity = info(op).pops;
            std::array<NodeId, 3> operands{};
            for (std::size_t k = arity; k-- > 0;)
                operands[k] = pop();
            for (std::size_t k = 0; k < arity; ++k)
            {
                if (g.dag[operands[k]].kind == NodeKind::constant)
                    const_into_pure.insert(operands[k]);
            }
            stack.push_back(g.dag.add_op(op, std::span{operands.data(), arity}, pc));
            g.is_root[rel] = true;
        }
        else
        {
            switch (op)
            {
            case Opcode::local_get:
            {
                const auto idx = static_cast<std::uint32_t>(instr.imm);
                if (const auto it = local_value.find(idx); it != local_value.end())
                    stack.push_back(it->second);
                else if (const auto e = local_entry.find(idx); e != local_entry.end())
                    stack.push_back(e->second);
                else
                {
                    const auto kind = idx < f.params ? InputKind::param : InputKind::local;
                    const auto node = new_input(InputOrigin{kind, idx, pc});
                    local_entry.emplace(idx, node);
                    stack.push_back(node);
                }
                break;
            }
            case Opcode::local_set:
                local_value[static_cast<std::uint32_t>(instr.imm)] = pop();
                break;
            case Opcode::local_tee:
            {
                const auto v = pop();
                local_value[static_cast<std::uint32_t>(instr.imm)] = v;
                stack.push_back(v);
                break;
            }
            case Opcode::global_get:
                stack.push_back(
                    new_input(InputOrigin{InputKind::global, static_cast<std::uint32_t>(instr.imm), pc}));
                break;
            case Opcode::global_set:
            case Opcode::drop:
                pop();
                break;
            case Opcode::i32_load:
                pop();
                stack.push_back(new_input(InputOrigin{InputKind::load, 0, pc}));
                break;
            case Opcode::i32_store:
                pop();
                pop();
                break;
            case Opcode::call:
            {
                const auto callee = static_cast<std::size_t>(instr.imm);
                if (callee >= m.functions.size())
                    throw std::invalid_argument{"call index out of range"};
                for (std::uint32_t k = 0; k < m.functions[callee].params; ++k)
                    pop();
                if (m.functions[callee].results == 1)
                    stack.push_back(new_input(InputOrigin{InputKind::call_result, 0, pc}));
                break;
            }
            case Opcode::i32_div_s:
            case Opcode::i32_div_u:
            case Opcode::i32_rem_s:
            case Opcode::i32_rem_u:
                pop();
                pop();
                stack.push_back(new_input(InputOrigin{InputKind::trap_op_result, 0, pc}));
                break;
            case Opcode::nop:
                break;
            default:
                throw std::invalid_argument{"unexpected instruction in region: " +
                                            std::string{name(op)}};
            }
        }
        if (info(op).pushes == 1 || (op == Opcode::call && !stack.empty() &&
                                         m.functions[static_cast<std::size_t>(instr.imm)].results))
            g.produced[rel] = stack.back();
    }

    for (auto pc = r.begin; pc < r.end; ++pc)
    {
        const auto rel = pc - r.begin;
        if (f.body[pc].op == Opcode::i32_const)
            g.is_root[rel] = !const_into_pure.contains(*g.produced[rel]);
    }
    g.region.entry_arity = entry_depth;
    return g;
}

PureBlock extract_block(const RegionGraph& g, std::uint32_t root_site)
{
    const auto rel = root_site - g.region.begin;
    const auto root = *g.produced.at(rel);

    PureBlock b;
    b.function = g.region.function;
    b.region = g.region;
    b.root_site = root_site;

    std::map<NodeId, NodeId> copied;
    std::map<std::uint32_t, std::uint32_t> input_index;  // region input -> block input
    std::set<std::uint32_t> sites;

    // Iterative post-order, children left to right, so inputs appear in first-use order.
    std::vector<std::pair<NodeId, std::size_t>> work{{root, 0}};
    while (!work.empty())
    {
        auto& [id, next] = work.back();
        if (copied.contains(id))
        {
            work.pop_back();
            continue;
        }
        const auto& n = g.dag[id];
        if (next < n.arity())
        {
            const auto child = n.operands[next++];
            work.emplace_back(child, 0);
            continue;
        }
        NodeId created = 0;
        switch (n.kind)
        {
        case NodeKind::input:
        {
            auto [it, fresh] = input_index.emplace(n.input, static_cast<std::uint32_t>(b.inputs.size()));
            if (fresh)
                b.inputs.push_back(g.inputs[n.input]);
            created = b.dag.add_input(it->second, n.site);
            break;
        }
        case NodeKind::constant:
            created = b.dag.add_constant(n.value, n.site);
            sites.insert(n.site);
            break;
        case NodeKind::op:
        {
            std::array<NodeId, 3> ops{};
            for (std::size_t k = 0; k < n.arity(); ++k)
                ops[k] = copied.at(n.operands[k]);
            created = b.dag.add_op(n.op, std::span{ops.data(), n.arity()}, n.site);
            sites.insert(n.site);
            break;
        }
        }
        copied.emplace(id, created);
        work.pop_back();
    }
    b.dag.root = copied.at(root);
    b.sites.assign(sites.begin(), sites.end());
    return b;
}
}  // namespace detail

std::vector<PureBlock> extract_blocks(const Region& r, const Module& m)
{
    const auto g = detail::build_region_graph(r, m);
    std::vector<PureBlock> blocks;
    for (std::uint32_t rel = 0; rel < g.is_root.size(); ++rel)
    {
        if (g.is_root[rel])
            blocks.push_back(detail::extract_block(g, g.region.begin + rel));
    }
    return blocks;
}

std::vector<PureBlock> extract_all_blocks(const Module& m)
{
    std::vector<PureBlock> all;
    for (std::uint32_t fi = 0; fi < m.functions.size(); ++fi)
    {
        for (const auto& r : build_regions(m, fi))
        {
            auto blocks = extract_blocks(r, m);
            for (auto& b : blocks)
            {
                b.id = static_cast<std::uint32_t>(all.size());
                all.push_back(std::move(b));
            }
        }
    }
    return all;
}

bool blocks_overlap(const PureBlock& a, const PureBlock& b)
{
    if (a.function != b.function)
        return false;
    auto i = a.sites.begin();
    auto j = b.sites.begin();
    while (i != a.sites.end() && j != b.sites.end())
    {
        if (*i == *j)
            return true;
        if (*i < *j)
            ++i;
        else
            ++j;
    }
    return false;
}
}  // namespace crow
