// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/opcode.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crow
{
struct Instr
{
    Opcode op = Opcode::nop;
    /// i32.const value, local/global/function index, branch depth or memory offset.
    std::int64_t imm = 0;
    /// block/loop/if: `(result i32)` block type.
    bool has_result = false;

    bool operator==(const Instr&) const = default;
};

inline Instr make_instr(Opcode op, std::int64_t imm = 0)
{
    return Instr{op, imm, false};
}

struct FuncDef
{
    std::uint32_t params = 0;
    std::uint32_t results = 0;  ///< 0 or 1
    std::uint32_t locals = 0;   ///< additional i32 locals beyond params
    std::vector<Instr> body;

    std::uint32_t local_count() const noexcept { return params + locals; }

    bool operator==(const FuncDef&) const = default;
};

struct Global
{
    bool is_mutable = false;
    std::int32_t init = 0;

    bool operator==(const Global&) const = default;
};

struct Module
{
    std::vector<FuncDef> functions;
    std::vector<Global> globals;
    std::optional<std::uint32_t> memory_pages;
    std::map<std::string, std::uint32_t> exports;

    bool operator==(const Module&) const = default;
};

class parse_error : public std::runtime_error
{
public:
    parse_error(const std::string& message, std::size_t line, std::size_t column);

    std::size_t line() const noexcept { return m_line; }
    std::size_t column() const noexcept { return m_column; }

private:
    std::size_t m_line;
    std::size_t m_column;
};

/// Well-formed text that uses something outside the supported subset.
class unsupported_construct : public parse_error
{
public:
    unsupported_construct(std::string construct, std::size_t line, std::size_t column);

    const std::string& construct() const noexcept { return m_construct; }

private:
    std::string m_construct;
};

Module parse_module(std::string_view text);

/// Canonical text: one instruction per line, two-space nesting indent,
/// signed decimal immediates.
std::string print_module(const Module& m);

/// Renders a single instruction as `mnemonic[ immediate]`.
std::string to_string(const Instr& instr);

struct Diagnostic
{
    std::optional<std::uint32_t> function;
    std::optional<std::uint32_t> offset;
    std::string message;
};

std::string to_string(const Diagnostic& d);

/// Empty iff all module invariants and stack typing hold.
std::vector<Diagnostic> validate(const Module& m);

/// Throws std::invalid_argument with the first diagnostic when m is invalid.
void require_valid(const Module& m);
}  // namespace crow
