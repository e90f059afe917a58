// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/equivalence.hpp"
#include "crow/interpreter.hpp"
#include "crow/synthesizer.hpp"
#include "crow/variantgen.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crow
{
struct RunConfig
{
    SynthesisConfig synthesis;
    CheckerConfig checker;
    std::size_t max_variants = 256;
    bool rank_by_diff = false;
    /// Restricts generation to Verified replacements.
    bool strict = false;
    unsigned jobs = 1;
    /// Exploration budget for the whole module, shared equally among blocks.
    double timeout_secs = 60.0;
    std::uint64_t seed = 0;
    /// Entry point traced by diversify; empty selects "main" or the first export.
    std::string invoke;
    /// Entry arguments; absent means every parameter gets `default_argument`.
    std::optional<std::vector<std::int32_t>> args;
    std::uint64_t fuel = default_fuel;
};

inline constexpr std::int32_t default_argument = 10;

/// Throws config_error on invalid settings.
void validate(const RunConfig& cfg);

class store_mismatch : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Result of the exploration stage.
struct Exploration
{
    std::string module_digest;
    std::vector<PureBlock> blocks;
    std::vector<BlockSynthesis> results;  ///< one per block, same order

    bool budget_exhausted() const;
    std::size_t replacement_count() const;
};

/// SHA-256 of the module's canonical text.
std::string module_digest(const Module& m);

Exploration explore(const Module& m, const RunConfig& cfg);

/// Replacement store JSON, including timings.
std::string store_json(const Exploration& e, const RunConfig& cfg);

/// Reads a store written for `m`. Throws store_mismatch when it was written for
/// another module, std::invalid_argument when it is malformed.
Exploration read_store(std::string_view json, const Module& m);

/// Block dump JSON: id, function, root site, region, inputs with origins, DAG nodes.
std::string blocks_json(const std::vector<PureBlock>& blocks);

struct Generation
{
    ReplacementSet retained;
    Combinations combinations;
    std::vector<Variant> variants;  ///< unique, plan order
};

Generation generate(const Module& m, const Exploration& e, const RunConfig& cfg);

/// Writes variant_<k>.wat files and the manifest into `dir`; returns the manifest text.
std::string write_generation(const std::filesystem::path& dir, const std::string& module_file,
    const Module& m, const Exploration& e, const Generation& g, const RunConfig& cfg);

/// Export traced by default: "main" when present, otherwise the first export.
std::optional<std::string> default_entry(const Module& m);

struct VariantMeasure
{
    std::uint64_t dt_static = 0;
    double size_ratio = 1.0;
    std::optional<Outcome> outcome;
    std::optional<std::uint64_t> dt_dyn;
    std::optional<double> normalized_dt_dyn;
    Trace trace;
};

struct Diversification
{
    Exploration exploration;
    Generation generation;
    std::optional<std::string> entry;
    std::vector<std::int32_t> args;
    std::optional<Execution> original_run;
    std::vector<VariantMeasure> measures;  ///< one per variant
    std::string manifest;
};

/// explore, generate, trace the original and every variant, and measure. Writes the
/// store, variants, traces and manifest into `dir` when it is non-empty.
Diversification diversify(const Module& m, const std::string& module_file, const RunConfig& cfg,
    const std::filesystem::path& dir);

/// Runs fn(i) for i in [0, n) on `jobs` threads; exceptions are rethrown in index order.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);
}  // namespace crow
