// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/dag.hpp"

#include <cassert>
#include <stdexcept>

namespace crow
{
NodeId Dag::add_input(std::uint32_t input, std::uint32_t site)
{
    DagNode n;
    n.kind = NodeKind::input;
    n.input = input;
    n.site = site;
    nodes.push_back(n);
    return static_cast<NodeId>(nodes.size() - 1);
}

NodeId Dag::add_constant(std::int32_t value, std::uint32_t site)
{
    DagNode n;
    n.kind = NodeKind::constant;
    n.value = value;
    n.site = site;
    nodes.push_back(n);
    return static_cast<NodeId>(nodes.size() - 1);
}

NodeId Dag::add_op(Opcode op, std::span<const NodeId> operands, std::uint32_t site)
{
    if (!is_pure_op(op))
        throw std::invalid_argument{"not a pure operator: " + std::string{name(op)}};
    if (operands.size() != info(op).pops)
        throw std::invalid_argument{"arity mismatch for " + std::string{name(op)}};
    DagNode n;
    n.kind = NodeKind::op;
    n.op = op;
    n.site = site;
    for (std::size_t i = 0; i < operands.size(); ++i)
    {
        if (operands[i] >= nodes.size())
            throw std::invalid_argument{"operand refers to a later node"};
        n.operands[i] = operands[i];
    }
    nodes.push_back(n);
    return static_cast<NodeId>(nodes.size() - 1);
}

namespace
{
std::vector<bool> reachable(const Dag& dag)
{
    std::vector<bool> live(dag.nodes.size(), false);
    if (dag.nodes.empty())
        return live;
    live[dag.root] = true;
    for (std::size_t i = dag.root + 1; i-- > 0;)
    {
        if (!live[i])
            continue;
        const auto& n = dag.nodes[i];
        for (std::size_t k = 0; k < n.arity(); ++k)
            live[n.operands[k]] = true;
    }
    return live;
}
}  // namespace

std::size_t Dag::op_count() const
{
    const auto live = reachable(*this);
    std::size_t count = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        count += live[i] && nodes[i].kind == NodeKind::op;
    return count;
}

std::size_t Dag::node_count() const
{
    const auto live = reachable(*this);
    std::size_t count = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        count += live[i] && nodes[i].kind != NodeKind::input;
    return count;
}

bool Dag::uses_input(std::uint32_t input) const
{
    const auto live = reachable(*this);
    for (std::size_t i = 0; i < nodes.size(); ++i)
    {
        if (live[i] && nodes[i].kind == NodeKind::input && nodes[i].input == input)
            return true;
    }
    return false;
}

std::string Dag::key() const
{
    if (nodes.empty())
        return "()";
    std::vector<std::string> rendered(nodes.size());
    for (std::size_t i = 0; i <= root; ++i)
    {
        const auto& n = nodes[i];
        switch (n.kind)
        {
        case NodeKind::input:
            rendered[i] = "$" + std::to_string(n.input);
            break;
        case NodeKind::constant:
            rendered[i] = std::to_string(n.value);
            break;
        case NodeKind::op:
            rendered[i] = "(" + std::string{name(n.op)};
            for (std::size_t k = 0; k < n.arity(); ++k)
                rendered[i] += " " + rendered[n.operands[k]];
            rendered[i] += ")";
            break;
        }
    }
    return rendered[root];
}

std::vector<Instr> Dag::emit(const std::function<Instr(std::uint32_t)>& load_input) const
{
    std::vector<Instr> out;
    if (nodes.empty())
        return out;
    // Post-order over the tree expansion; shared nodes are recomputed.
    std::vector<std::pair<NodeId, std::size_t>> stack{{root, 0}};
    while (!stack.empty())
    {
        auto& [id, next] = stack.back();
        const auto& n = nodes[id];
        if (next < n.arity())
        {
            const auto child = n.operands[next++];
            stack.emplace_back(child, 0);
            continue;
        }
        switch (n.kind)
        {
        case NodeKind::input:
            out.push_back(load_input(n.input));
            break;
        case NodeKind::constant:
            out.push_back(make_instr(Opcode::i32_const, n.value));
            break;
        case NodeKind::op:
            out.push_back(make_instr(n.op));
            break;
        }
        stack.pop_back();
    }
    return out;
}

std::vector<Instr> Dag::emit() const
{
    return emit([](std::uint32_t i) { return make_instr(Opcode::local_get, i); });
}

Dag compact(const Dag& dag)
{
    Dag out;
    if (dag.nodes.empty())
        return out;
    const auto live = reachable(dag);
    std::vector<NodeId> remap(dag.nodes.size(), 0);
    for (std::size_t i = 0; i <= dag.root; ++i)
    {
        if (!live[i])
            continue;
        auto n = dag.nodes[i];
        for (std::size_t k = 0; k < n.arity(); ++k)
            n.operands[k] = remap[n.operands[k]];
        for (std::size_t k = n.arity(); k < n.operands.size(); ++k)
            n.operands[k] = 0;
        out.nodes.push_back(n);
        remap[i] = static_cast<NodeId>(out.nodes.size() - 1);
    }
    out.root = remap[dag.root];
    return out;
}
}  // namespace crow
