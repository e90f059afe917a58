// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/region_ir.hpp"
#include "crow/synthesizer.hpp"
#include "crow/wat.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace crow
{
/// Replacements of mutually non-overlapping blocks, keyed by block id.
struct ReplacementSet
{
    std::map<std::uint32_t, std::vector<Replacement>> blocks;
};

/// Chosen replacement index per block; blocks absent from the map keep their code.
struct VariantPlan
{
    std::map<std::uint32_t, std::size_t> choice;

    bool operator==(const VariantPlan&) const = default;
};

struct Variant
{
    Module module;
    VariantPlan plan;
    std::string text;    ///< canonical printed form
    std::string digest;  ///< SHA-256 of `text`, lowercase hex
};

class emission_error : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

/// Keeps a block with replacements only if it beats every other such block it
/// overlaps, comparing node count (larger wins) and then root site (earlier wins).
ReplacementSet resolve_overlaps(const std::vector<PureBlock>& blocks,
    const std::map<std::uint32_t, std::vector<Replacement>>& replacements);

/// Number of plans, prod(1 + |R_i|) - 1, saturating at UINT64_MAX.
std::uint64_t combination_count(const ReplacementSet& s);

struct Combinations
{
    std::vector<VariantPlan> plans;
    std::uint64_t total = 0;
    bool truncated = false;
};

/// Every plan in mixed-radix order (first block most significant), or a seeded
/// uniform sample of `limit` distinct plans in the same order when there are more.
Combinations enumerate_combinations(const ReplacementSet& s, std::size_t limit, std::uint64_t seed);

/// Rewrites the module so that each chosen block computes its candidate.
/// Throws emission_error if the result does not validate.
Module apply_plan(const Module& m, const std::vector<PureBlock>& blocks, const ReplacementSet& s,
    const VariantPlan& plan);

std::string sha256_hex(std::string_view data);

Variant make_variant(Module m, VariantPlan plan);

/// First occurrence per canonical text, in input order.
std::vector<Variant> dedup_variants(std::vector<Variant> variants);

/// Plans ordered by decreasing dt_static against the original, ties by plan order,
/// truncated to `limit`. At most `pool` plans are ranked; larger spaces are sampled first.
Combinations rank_by_diff(const Module& m, const std::vector<PureBlock>& blocks,
    const ReplacementSet& s, std::size_t limit, std::uint64_t seed, std::size_t pool = 4096);
}  // namespace crow
