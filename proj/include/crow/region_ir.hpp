// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/dag.hpp"
#include "crow/wat.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace crow
{
/// Maximal straight-line run of a function body, as the half-open range [begin, end).
struct Region
{
    std::uint32_t function = 0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    /// Number of values the region consumes from the stack present at its entry.
    std::uint32_t entry_arity = 0;

    bool operator==(const Region&) const = default;
};

enum class InputKind : std::uint8_t
{
    param,
    local,            ///< non-parameter local, value at region entry
    global,
    load,
    call_result,
    trap_op_result,   ///< div/rem result
    entry_stack,      ///< value on the stack at region entry; index = depth from top
};

std::string_view to_string(InputKind kind) noexcept;

struct InputOrigin
{
    InputKind kind = InputKind::param;
    /// Local or global index, or entry-stack depth.
    std::uint32_t index = 0;
    /// Instruction that produced the value: the global.get, load, call or div/rem,
    /// or the first local.get reading it. no_site for entry-stack values.
    std::uint32_t site = no_site;

    bool operator==(const InputOrigin&) const = default;
};

std::string to_string(const InputOrigin& origin);

/// Acyclic, side-effect free computation rooted at one instruction.
struct PureBlock
{
    std::uint32_t id = 0;
    std::uint32_t function = 0;
    Region region;
    std::uint32_t root_site = 0;
    Dag dag;                          ///< input leaves index into `inputs`
    std::vector<InputOrigin> inputs;  ///< first-use order
    std::vector<std::uint32_t> sites; ///< sorted sites of operator and constant nodes

    std::size_t node_count() const { return dag.node_count(); }

    /// Constant immediates appearing in the block.
    std::vector<std::int32_t> immediates() const;
};

/// Calls are taken as arity-neutral when computing entry arity; use the module
/// overload for exact values.
std::vector<Region> build_regions(const FuncDef& f, std::uint32_t function_index = 0);

std::vector<Region> build_regions(const Module& m, std::uint32_t function_index);

/// One block per value-producing pure instruction in the region: every pure operator,
/// and every constant not consumed directly by a pure operator. Block ids are left 0.
std::vector<PureBlock> extract_blocks(const Region& r, const Module& m);

/// All blocks of a validated module, ordered by (function, root site), ids 0..n-1.
std::vector<PureBlock> extract_all_blocks(const Module& m);

bool blocks_overlap(const PureBlock& a, const PureBlock& b);
}  // namespace crow
