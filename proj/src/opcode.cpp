// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/opcode.hpp"

#include <array>

namespace crow
{
namespace
{
using IK = ImmediateKind;

constexpr std::array<OpcodeInfo, opcode_count> opcode_table{{
    {"i32.const", 0, 1, IK::value},

    {"i32.add", 2, 1, IK::none},
    {"i32.sub", 2, 1, IK::none},
    {"i32.mul", 2, 1, IK::none},
    {"i32.div_s", 2, 1, IK::none},
    {"i32.div_u", 2, 1, IK::none},
    {"i32.rem_s", 2, 1, IK::none},
    {"i32.rem_u", 2, 1, IK::none},
    {"i32.and", 2, 1, IK::none},
    {"i32.or", 2, 1, IK::none},
    {"i32.xor", 2, 1, IK::none},
    {"i32.shl", 2, 1, IK::none},
    {"i32.shr_s", 2, 1, IK::none},
    {"i32.shr_u", 2, 1, IK::none},
    {"i32.rotl", 2, 1, IK::none},
    {"i32.rotr", 2, 1, IK::none},

    {"i32.eq", 2, 1, IK::none},
    {"i32.ne", 2, 1, IK::none},
    {"i32.lt_s", 2, 1, IK::none},
    {"i32.lt_u", 2, 1, IK::none},
    {"i32.gt_s", 2, 1, IK::none},
    {"i32.gt_u", 2, 1, IK::none},
    {"i32.le_s", 2, 1, IK::none},
    {"i32.le_u", 2, 1, IK::none},
    {"i32.ge_s", 2, 1, IK::none},
    {"i32.ge_u", 2, 1, IK::none},
    {"i32.eqz", 1, 1, IK::none},

    {"select", 3, 1, IK::none},
    {"drop", 1, 0, IK::none},
    {"local.get", 0, 1, IK::index},
    {"local.set", 1, 0, IK::index},
    {"local.tee", 1, 1, IK::index},
    {"global.get", 0, 1, IK::index},
    {"global.set", 1, 0, IK::index},
    {"i32.load", 1, 1, IK::offset},
    {"i32.store", 2, 0, IK::offset},

    {"block", 0, 0, IK::none},
    {"loop", 0, 0, IK::none},
    {"if", 1, 0, IK::none},
    {"else", 0, 0, IK::none},
    {"end", 0, 0, IK::none},
    {"br", 0, 0, IK::label},
    {"br_if", 1, 0, IK::label},
    {"return", 0, 0, IK::none},
    {"call", 0, 0, IK::index},
    {"nop", 0, 0, IK::none},
    {"unreachable", 0, 0, IK::none},
}};
}  // namespace

const OpcodeInfo& info(Opcode op) noexcept
{
    return opcode_table[static_cast<std::size_t>(op)];
}

std::optional<Opcode> opcode_from_name(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < opcode_table.size(); ++i)
    {
        if (opcode_table[i].name == name)
            return static_cast<Opcode>(i);
    }
    return std::nullopt;
}

bool is_pure_op(Opcode op) noexcept
{
    switch (op)
    {
    case Opcode::i32_add:
    case Opcode::i32_sub:
    case Opcode::i32_mul:
    case Opcode::i32_and:
    case Opcode::i32_or:
    case Opcode::i32_xor:
    case Opcode::i32_shl:
    case Opcode::i32_shr_s:
    case Opcode::i32_shr_u:
    case Opcode::i32_rotl:
    case Opcode::i32_rotr:
    case Opcode::i32_eqz:
    case Opcode::select:
        return true;
    default:
        return is_comparison(op);
    }
}

bool is_trap_capable(Opcode op) noexcept
{
    return op == Opcode::i32_div_s || op == Opcode::i32_div_u || op == Opcode::i32_rem_s ||
           op == Opcode::i32_rem_u;
}

bool is_comparison(Opcode op) noexcept
{
    return op >= Opcode::i32_eq && op <= Opcode::i32_eqz;
}

bool is_structured_control(Opcode op) noexcept
{
    switch (op)
    {
    case Opcode::block:
    case Opcode::loop:
    case Opcode::if_:
    case Opcode::else_:
    case Opcode::end:
    case Opcode::br:
    case Opcode::br_if:
    case Opcode::return_:
    case Opcode::unreachable:
        return true;
    default:
        return false;
    }
}

bool is_commutative(Opcode op) noexcept
{
    switch (op)
    {
    case Opcode::i32_add:
    case Opcode::i32_mul:
    case Opcode::i32_and:
    case Opcode::i32_or:
    case Opcode::i32_xor:
    case Opcode::i32_eq:
    case Opcode::i32_ne:
        return true;
    default:
        return false;
    }
}
}  // namespace crow
