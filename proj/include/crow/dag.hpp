// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/opcode.hpp"
#include "crow/wat.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace crow
{
using NodeId = std::uint32_t;

inline constexpr std::uint32_t no_site = std::numeric_limits<std::uint32_t>::max();

enum class NodeKind : std::uint8_t
{
    op,
    constant,
    input,
};

struct DagNode
{
    NodeKind kind = NodeKind::constant;
    Opcode op = Opcode::i32_const;
    std::int32_t value = 0;     ///< constant value
    std::uint32_t input = 0;    ///< index into the owner's input list
    std::array<NodeId, 3> operands{};
    std::uint32_t site = no_site;  ///< originating instruction in the function body

    std::size_t arity() const noexcept { return kind == NodeKind::op ? info(op).pops : 0; }

    bool operator==(const DagNode&) const = default;
};

/// Expression DAG over i32 values. Operands always precede their users, so
/// index order is a topological order.
struct Dag
{
    std::vector<DagNode> nodes;
    NodeId root = 0;

    NodeId add_input(std::uint32_t input, std::uint32_t site = no_site);
    NodeId add_constant(std::int32_t value, std::uint32_t site = no_site);
    NodeId add_op(Opcode op, std::span<const NodeId> operands, std::uint32_t site = no_site);

    const DagNode& operator[](NodeId id) const { return nodes[id]; }

    /// Operator nodes reachable from the root.
    std::size_t op_count() const;

    /// Operator and constant nodes reachable from the root; inputs are not counted.
    std::size_t node_count() const;

    /// Whether some input leaf with this index is reachable from the root.
    bool uses_input(std::uint32_t input) const;

    /// Canonical tree rendering, e.g. `(i32.mul $0 2)`. Shared subterms are expanded.
    std::string key() const;

    /// Stack code leaving the root value on the stack; `load_input` renders input leaves.
    std::vector<Instr> emit(const std::function<Instr(std::uint32_t)>& load_input) const;

    /// Stack code with input i read from local i.
    std::vector<Instr> emit() const;

    bool operator==(const Dag&) const = default;
};

/// Copies the part of `dag` reachable from its root, preserving topological order.
Dag compact(const Dag& dag);
}  // namespace crow
