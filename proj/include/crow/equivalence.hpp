// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/dag.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crow
{
/// Mask for a `width`-bit value held in 32 bits.
constexpr std::uint32_t width_mask(unsigned width) noexcept
{
    return width >= 32 ? 0xffffffffu : ((1u << width) - 1u);
}

/// Sign-extends the low `width` bits.
constexpr std::int32_t sign_extend(std::uint32_t v, unsigned width) noexcept
{
    if (width >= 32)
        return static_cast<std::int32_t>(v);
    const auto shift = 32 - width;
    return static_cast<std::int32_t>(v << shift) >> shift;
}

/// Applies a pure operator at the given bit width. Operands must already be masked.
std::uint32_t apply_op(Opcode op, std::uint32_t a, std::uint32_t b, std::uint32_t c,
    unsigned width) noexcept;

/// Evaluates the DAG root with input leaf i bound to env[i] (low `width` bits).
/// Wraparound arithmetic, shift counts modulo width, comparisons yield 0/1.
std::uint32_t eval_dag(const Dag& dag, std::span<const std::uint32_t> env, unsigned width = 32);

/// DAG lowered to a flat program for batched evaluation over many environments.
class CompiledDag
{
public:
    explicit CompiledDag(const Dag& dag);

    std::uint32_t eval(std::span<const std::uint32_t> env, unsigned width = 32) const;

    /// Evaluates `count` environments stored input-major: input i of environment k
    /// is envs[i * count + k]. Results go to out[0..count).
    void eval_batch(std::span<const std::uint32_t> envs, std::size_t count, unsigned width,
        std::span<std::uint32_t> out) const;

    std::size_t input_count() const noexcept { return m_input_count; }

private:
    struct Step
    {
        Opcode op;
        std::uint8_t kind;  // 0 op, 1 constant, 2 input
        std::uint32_t a, b, c;
        std::uint32_t value;
    };
    std::vector<Step> m_steps;
    std::size_t m_input_count = 0;
    mutable std::vector<std::uint32_t> m_scratch;
    mutable std::vector<const std::uint32_t*> m_columns;
    // Constant rows of m_scratch stay valid while the batch shape is unchanged.
    mutable std::size_t m_filled_count = 0;
    mutable unsigned m_filled_width = 0;
};

enum class Tier : std::uint8_t
{
    verified,
    probable,
    rejected,
};

enum class Method : std::uint8_t
{
    exhaustive,
    reduced_width,
    smt,
};

std::string_view to_string(Tier t) noexcept;
std::string_view to_string(Method m) noexcept;

struct Verdict
{
    Tier tier = Tier::rejected;
    Method method = Method::exhaustive;
    /// Width-32 input assignment on which the two sides differ; present iff rejected.
    std::optional<std::vector<std::int32_t>> counterexample;
    /// The solver was requested but failed or answered unknown.
    bool solver_failed = false;
    std::string note;
};

enum class CheckerMode : std::uint8_t
{
    exhaustive_only,  ///< only Verified results are usable downstream
    probable_ok,
    smt,
};

struct CheckerConfig
{
    CheckerMode mode = CheckerMode::probable_ok;
    std::uint64_t exhaustive_budget = std::uint64_t{1} << 26;
    std::vector<unsigned> reduced_widths{4, 8};
    std::uint64_t samples = 100'000;
    std::uint64_t seed = 0;
    std::vector<std::string> solver_command;
    double solver_timeout_secs = 5.0;
};

class config_error : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class infeasible_domain : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

void validate(const CheckerConfig& cfg);

/// Both sides are DAGs over the same input numbering; `input_count` is the number
/// of inputs of the original (the candidate may use a subset).
struct EquivalenceQuery
{
    const Dag& original;
    const Dag& candidate;
    std::size_t input_count;
};

/// Iterates every assignment at `width`. Width 32 gives a sound verdict; narrower
/// widths yield Probable or a width-32-confirmed Rejected.
Verdict exhaustive_check(const EquivalenceQuery& q, unsigned width,
    std::uint64_t budget = std::uint64_t{1} << 26);

Verdict check(const EquivalenceQuery& q, const CheckerConfig& cfg);

/// Whether `check` can return Verified for a query with this many inputs.
bool can_verify(std::size_t input_count, const CheckerConfig& cfg);

/// SMT-LIB 2 QF_BV script; `unsat` means the two sides are equivalent.
std::string emit_smtlib(const EquivalenceQuery& q);

enum class SolverAnswer : std::uint8_t
{
    sat,
    unsat,
    unknown,
    failed,
};

struct SolverResult
{
    SolverAnswer answer = SolverAnswer::failed;
    std::optional<std::vector<std::int32_t>> model;
    std::string output;
};

/// Runs the solver command on the query, reading the answer from standard output.
SolverResult run_solver(const EquivalenceQuery& q, const std::vector<std::string>& command,
    double timeout_secs);

/// Whether the given program is found on PATH (or is an existing path).
bool solver_available(const std::vector<std::string>& command);
}  // namespace crow
