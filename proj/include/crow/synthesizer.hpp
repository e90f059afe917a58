// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/equivalence.hpp"
#include "crow/region_ir.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crow
{
/// Operators a candidate may use. `constants` enables constant inference.
struct Vocabulary
{
    std::vector<Opcode> ops;  ///< in canonical enumeration order, no duplicates
    bool constants = false;

    bool empty() const noexcept { return ops.empty() && !constants; }
    bool operator==(const Vocabulary&) const = default;
};

/// Every permitted operator plus `const`.
Vocabulary full_vocabulary();

/// Parses a comma-separated list such as "add,shl,const". Names may carry the
/// `i32.` prefix. Throws config_error on unknown, impure or trap-capable names.
Vocabulary parse_vocabulary(std::string_view csv);

std::string to_string(const Vocabulary& v);

struct SynthesisConfig
{
    /// Maximum number of operator nodes in a candidate.
    unsigned max_size = 3;
    Vocabulary vocabulary = full_vocabulary();
    /// Explicit constant pool; when absent the pool is derived from the block.
    std::optional<std::vector<std::int32_t>> pool;
    /// Seeded random prefilter vectors, in addition to the corner vectors.
    unsigned random_vectors = 64;
    /// Upper bound on corner combinations in the prefilter set.
    unsigned corner_cap = 256;
    std::uint64_t seed = 0;
    /// CPU-time budget per block in seconds, measured on the worker thread so
    /// that the outcome does not depend on how many workers share a core.
    double time_budget_secs = 60.0;
    /// Deterministic bound on enumerated candidates per block.
    std::uint64_t max_candidates = 2'000'000;
    /// Deterministic bound on stored replacements per block.
    std::uint64_t max_replacements = 512;
    /// Blocks with more nodes than this are skipped.
    std::size_t max_block_nodes = 64;
};

inline constexpr unsigned max_size_cap = 50;

void validate(const SynthesisConfig& cfg);

struct Candidate
{
    Dag dag;  ///< input leaves index the original block's inputs
    /// Position in the enumeration stream; constant inference uses no_index.
    std::uint64_t index = 0;

    static constexpr std::uint64_t no_index = ~std::uint64_t{0};
};

struct Replacement
{
    std::uint32_t block_id = 0;
    Candidate candidate;
    Tier tier = Tier::probable;
    Method method = Method::exhaustive;
    std::size_t emitted_length = 0;
};

/// Sorted, duplicate-free constants available to candidate leaves:
/// {0, 1, 2, -1}, the block immediates, those immediates plus and minus one,
/// and their negations. An explicit pool in `cfg` replaces this set.
std::vector<std::int32_t> constant_pool(const PureBlock& b, const SynthesisConfig& cfg);

/// Corner combinations followed by `cfg.random_vectors` seeded random vectors.
/// Each vector assigns all of the block's inputs. A block without inputs gets
/// one empty vector.
std::vector<std::vector<std::uint32_t>> prefilter_vectors(
    std::size_t input_count, const SynthesisConfig& cfg);

/// Streams the bare inputs (projections) and then candidates of 1..max_size
/// operators in canonical order, skipping the
/// block's own DAG. The visitor returns false to stop. Returns the number of
/// stream positions visited, including the skipped duplicates.
std::uint64_t enumerate_candidates(const PureBlock& b, const SynthesisConfig& cfg,
    const std::function<bool(const Candidate&)>& visit);

/// Collects at most `limit` stream elements.
std::vector<Candidate> enumerate_candidates(
    const PureBlock& b, const SynthesisConfig& cfg, std::size_t limit);

std::optional<Candidate> infer_constant(const PureBlock& b, const SynthesisConfig& cfg);

/// True iff block and candidate agree on every vector.
bool prefilter(const PureBlock& b, const Candidate& c,
    const std::vector<std::vector<std::uint32_t>>& vectors);

/// Result of exploring one block.
struct BlockSynthesis
{
    std::uint32_t block_id = 0;
    std::vector<Replacement> replacements;
    std::uint64_t enumerated = 0;
    std::uint64_t prefilter_passed = 0;
    std::uint64_t rejected = 0;
    /// Enumeration stopped at the candidate or replacement cap.
    bool candidate_cap_hit = false;
    /// Enumeration stopped because the time budget ran out.
    bool time_budget_hit = false;
    bool skipped = false;  ///< block larger than max_block_nodes
    /// Only Verified results are usable and the checker cannot verify this block.
    bool unverifiable = false;
    double seconds = 0;

    bool budget_exhausted() const noexcept { return candidate_cap_hit || time_budget_hit; }
};

BlockSynthesis synthesize_replacements(
    const PureBlock& b, const SynthesisConfig& cfg, const CheckerConfig& checker);

/// Synthesizes every block on `jobs` workers; results follow block order.
std::vector<BlockSynthesis> synthesize_all(const std::vector<PureBlock>& blocks,
    const SynthesisConfig& cfg, const CheckerConfig& checker, unsigned jobs);

/// Equivalence check of a candidate against its block.
Verdict check(const PureBlock& b, const Candidate& c, const CheckerConfig& cfg);
}  // namespace crow
