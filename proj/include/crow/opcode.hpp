// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace crow
{
/// Instruction mnemonics of the supported WebAssembly subset (i32 only).
enum class Opcode : std::uint8_t
{
    i32_const,

    i32_add,
    i32_sub,
    i32_mul,
    i32_div_s,
    i32_div_u,
    i32_rem_s,
    i32_rem_u,
    i32_and,
    i32_or,
    i32_xor,
    i32_shl,
    i32_shr_s,
    i32_shr_u,
    i32_rotl,
    i32_rotr,

    i32_eq,
    i32_ne,
    i32_lt_s,
    i32_lt_u,
    i32_gt_s,
    i32_gt_u,
    i32_le_s,
    i32_le_u,
    i32_ge_s,
    i32_ge_u,
    i32_eqz,

    select,
    drop,
    local_get,
    local_set,
    local_tee,
    global_get,
    global_set,
    i32_load,
    i32_store,

    block,
    loop,
    if_,
    else_,
    end,
    br,
    br_if,
    return_,
    call,
    nop,
    unreachable,
};

inline constexpr std::size_t opcode_count = static_cast<std::size_t>(Opcode::unreachable) + 1;

enum class ImmediateKind : std::uint8_t
{
    none,
    value,   ///< i32.const
    index,   ///< local/global/function index
    label,   ///< branch depth
    offset,  ///< memory offset
};

struct OpcodeInfo
{
    std::string_view name;
    std::uint8_t pops;
    std::uint8_t pushes;
    ImmediateKind immediate;
};

/// Static description of an opcode. Stack effects of call/return/br/end depend on
/// context and are reported as 0 here.
const OpcodeInfo& info(Opcode op) noexcept;

inline std::string_view name(Opcode op) noexcept
{
    return info(op).name;
}

std::optional<Opcode> opcode_from_name(std::string_view name) noexcept;

/// Total, side-effect free value operators: the vocabulary synthesis may use.
bool is_pure_op(Opcode op) noexcept;

/// Division and remainder: pure when defined but may trap.
bool is_trap_capable(Opcode op) noexcept;

bool is_comparison(Opcode op) noexcept;

/// Instructions that delimit straight-line regions.
bool is_structured_control(Opcode op) noexcept;

/// Operators whose operands may be swapped without changing the value.
bool is_commutative(Opcode op) noexcept;
}  // namespace crow
