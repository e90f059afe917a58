// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/wat.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crow
{
inline constexpr std::uint64_t default_fuel = 50'000'000;

enum class EventKind : std::uint8_t
{
    push,
    pop,
};

struct TraceEvent
{
    EventKind kind = EventKind::push;
    std::int32_t value = 0;

    bool operator==(const TraceEvent&) const = default;
};

using Trace = std::vector<TraceEvent>;

std::string to_string(const TraceEvent& e);

struct Outcome
{
    enum class Kind : std::uint8_t
    {
        result,
        trap,
        fuel_exhausted,
    };

    Kind kind = Kind::result;
    std::optional<std::int32_t> value;  ///< result value when the entry returns one
    std::string trap_reason;            ///< div-by-zero, integer-overflow, out-of-bounds, ...

    static Outcome result(std::optional<std::int32_t> v = std::nullopt) { return {Kind::result, v, {}}; }
    static Outcome trap(std::string reason) { return {Kind::trap, std::nullopt, std::move(reason)}; }
    static Outcome fuel_exhausted() { return {Kind::fuel_exhausted, std::nullopt, {}}; }

    bool operator==(const Outcome&) const = default;
};

std::string to_string(const Outcome& o);

/// Execution state of an instantiated module. Holds a reference to the module,
/// which must outlive the state.
struct MachineState
{
    const Module* module = nullptr;
    std::vector<std::uint32_t> stack;
    std::vector<std::uint32_t> globals;
    std::vector<std::uint8_t> memory;
    std::uint64_t fuel = default_fuel;
};

MachineState instantiate(const Module& m, std::uint64_t fuel = default_fuel);

/// Snapshot handed to an observer before each instruction executes.
struct StepInfo
{
    std::uint32_t function;
    std::uint32_t pc;
    std::uint32_t call_depth;
    std::span<const std::uint32_t> stack;   ///< whole operand stack
    std::span<const std::uint32_t> locals;  ///< current frame
};

struct InvokeOptions
{
    bool record_trace = true;
    std::uint32_t max_call_depth = 1024;
    std::function<void(const StepInfo&)> observer;
};

class unknown_export : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class arity_mismatch : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

struct Execution
{
    Outcome outcome;
    Trace trace;
};

/// Runs an exported function. Fuel is charged per instruction as the number of
/// events it emits, at least 1, and is taken from `state.fuel`.
Execution invoke(MachineState& state, std::string_view export_name,
    std::span<const std::int32_t> args, const InvokeOptions& options = {});

/// Instantiates a fresh state and invokes.
Execution run(const Module& m, std::string_view export_name, std::span<const std::int32_t> args,
    std::uint64_t fuel = default_fuel);

class malformed_trace : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct TraceFile
{
    std::string entry;
    Trace trace;
    Outcome outcome;

    bool operator==(const TraceFile&) const = default;
};

void write_trace(std::ostream& out, const TraceFile& t);
std::string write_trace(const TraceFile& t);
TraceFile read_trace(std::istream& in);
TraceFile read_trace(std::string_view text);
}  // namespace crow
