// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/region_ir.hpp"

#include <optional>

namespace crow::detail
{
/// Symbolic execution of one region over an operand stack of DAG nodes.
struct RegionGraph
{
    Region region;
    Dag dag;                          ///< every node created while simulating the region
    std::vector<InputOrigin> inputs;  ///< region-level inputs, indexed by input leaves
    /// Per region-relative site: node left on the stack by that instruction, if any.
    std::vector<std::optional<NodeId>> produced;
    /// Per region-relative site: whether the instruction is a block root.
    std::vector<bool> is_root;
};

RegionGraph build_region_graph(const Region& r, const Module& m);

/// The block rooted at absolute `root_site`, extracted from a region graph.
PureBlock extract_block(const RegionGraph& g, std::uint32_t root_site);
}  // namespace crow::detail
