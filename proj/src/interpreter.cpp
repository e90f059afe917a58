// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/interpreter.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace crow
{
std::string to_string(const TraceEvent& e)
{
    return (e.kind == EventKind::push ? "push " : "pop ") + std::to_string(e.value);
}

std::string to_string(const Outcome& o)
{
    switch (o.kind)
    {
    case Outcome::Kind::result:
        return o.value ? "result " + std::to_string(*o.value) : "result";
    case Outcome::Kind::trap:
        return "trap " + o.trap_reason;
    case Outcome::Kind::fuel_exhausted:
        return "fuel-exhausted";
    }
    return "?";
}

MachineState instantiate(const Module& m, std::uint64_t fuel)
{
    MachineState s;
    s.module = &m;
    for (const auto& g : m.globals)
        s.globals.push_back(static_cast<std::uint32_t>(g.init));
    if (m.memory_pages)
        s.memory.assign(std::size_t{*m.memory_pages} * 65536, 0);
    s.fuel = fuel;
    return s;
}

namespace
{
constexpr std::uint32_t none = std::numeric_limits<std::uint32_t>::max();

/// Matching `else` and `end` positions for each block, loop and if.
struct ControlMap
{
    std::vector<std::uint32_t> end_of;
    std::vector<std::uint32_t> else_of;
};

ControlMap build_control_map(const FuncDef& f)
{
    ControlMap map;
    map.end_of.assign(f.body.size(), none);
    map.else_of.assign(f.body.size(), none);
    std::vector<std::uint32_t> open;
    for (std::uint32_t pc = 0; pc < f.body.size(); ++pc)
    {
        switch (f.body[pc].op)
        {
        case Opcode::block:
        case Opcode::loop:
        case Opcode::if_:
            open.push_back(pc);
            break;
        case Opcode::else_:
            if (!open.empty())
                map.else_of[open.back()] = pc;
            break;
        case Opcode::end:
            if (!open.empty())
            {
                map.end_of[open.back()] = pc;
                open.pop_back();
            }
            break;
        default:
            break;
        }
    }
    return map;
}

struct Label
{
    Opcode kind;
    std::uint32_t start;
    std::uint32_t end;
    std::size_t height;
    std::uint32_t arity;  ///< values carried by a branch to this label
};

struct Frame
{
    std::uint32_t function;
    std::uint32_t pc = 0;
    std::vector<std::uint32_t> locals;
    std::size_t base;
    std::vector<Label> labels;
};

struct trap_signal
{
    const char* reason;
};

class Machine
{
public:
    Machine(MachineState& s, const InvokeOptions& o) : m_state{s}, m_module{*s.module}, m_options{o}
    {
        for (const auto& f : m_module.functions)
            m_control.push_back(build_control_map(f));
    }

    Execution run(std::uint32_t entry, std::span<const std::int32_t> args)
    {
        m_state.stack.clear();
        Frame first{entry, 0, {}, 0, {}};
        const auto& f = m_module.functions[entry];
        first.locals.assign(f.local_count(), 0);
        for (std::size_t i = 0; i < args.size(); ++i)
            first.locals[i] = static_cast<std::uint32_t>(args[i]);
        m_frames.push_back(std::move(first));
        try
        {
            while (true)
            {
                if (m_state.fuel == 0)
                {
                    m_state.stack.clear();
                    return finish(Outcome::fuel_exhausted());
                }
                m_events = 0;
                const auto done = step();
                m_state.fuel -= std::min<std::uint64_t>(m_state.fuel, std::max<std::uint64_t>(1, m_events));
                if (done)
                {
                    const auto& ef = m_module.functions[entry];
                    std::optional<std::int32_t> value;
                    if (ef.results == 1)
                        value = static_cast<std::int32_t>(m_state.stack.back());
                    m_state.stack.clear();
                    return finish(Outcome::result(value));
                }
            }
        }
        catch (const trap_signal& t)
        {
            m_state.stack.clear();
            return finish(Outcome::trap(t.reason));
        }
    }

private:
    Execution finish(Outcome o) { return Execution{std::move(o), std::move(m_trace)}; }

    void push(std::uint32_t v)
    {
        m_state.stack.push_back(v);
        ++m_events;
        if (m_options.record_trace)
            m_trace.push_back(TraceEvent{EventKind::push, static_cast<std::int32_t>(v)});
    }

    std::uint32_t pop()
    {
        const auto v = m_state.stack.back();
        m_state.stack.pop_back();
        ++m_events;
        if (m_options.record_trace)
            m_trace.push_back(TraceEvent{EventKind::pop, static_cast<std::int32_t>(v)});
        return v;
    }

    /// Pops everything above `height`, then pushes back the top `keep` values.
    void unwind(std::size_t height, std::size_t keep)
    {
        if (m_state.stack.size() - height <= keep)
            return;
        std::vector<std::uint32_t> carried(m_state.stack.end() - static_cast<std::ptrdiff_t>(keep),
            m_state.stack.end());
        while (m_state.stack.size() > height)
            pop();
        for (const auto v : carried)
            push(v);
    }

    std::uint32_t effective_address(std::uint32_t addr, std::int64_t offset) const
    {
        const auto ea = std::uint64_t{addr} + static_cast<std::uint64_t>(offset);
        if (ea + 4 > m_state.memory.size())
            throw trap_signal{"out-of-bounds"};
        return static_cast<std::uint32_t>(ea);
    }

    /// Leaves the current function. Returns true when the entry function returned.
    bool exit_function()
    {
        auto& frame = m_frames.back();
        const auto results = m_module.functions[frame.function].results;
        if (m_frames.size() == 1)
        {
            unwind(frame.base, results);
            return true;
        }
        std::vector<std::uint32_t> values(m_state.stack.end() - results, m_state.stack.end());
        while (m_state.stack.size() > frame.base)
            pop();
        m_frames.pop_back();
        for (const auto v : values)
            push(v);
        return false;
    }

    /// Branches to the label at `depth`; depth past the innermost label returns.
    bool branch(std::uint32_t depth)
    {
        auto& frame = m_frames.back();
        if (depth >= frame.labels.size())
            return exit_function();
        const auto target_index = frame.labels.size() - 1 - depth;
        const auto target = frame.labels[target_index];
        unwind(target.height, target.arity);
        if (target.kind == Opcode::loop)
        {
            frame.labels.resize(target_index + 1);
            frame.pc = target.start + 1;
        }
        else
        {
            frame.labels.resize(target_index);
            frame.pc = target.end + 1;
        }
        return false;
    }

    bool step()
    {
        auto& frame = m_frames.back();
        const auto& f = m_module.functions[frame.function];
        if (frame.pc >= f.body.size())
            return exit_function();
        const auto& instr = f.body[frame.pc];

        if (m_options.observer)
            m_options.observer(StepInfo{frame.function, frame.pc,
                static_cast<std::uint32_t>(m_frames.size() - 1), m_state.stack, frame.locals});

        const auto op = instr.op;
        const auto next = frame.pc + 1;
        switch (op)
        {
        case Opcode::i32_const:
            push(static_cast<std::uint32_t>(instr.imm));
            break;
        case Opcode::i32_div_s:
        case Opcode::i32_div_u:
        case Opcode::i32_rem_s:
        case Opcode::i32_rem_u:
        {
            const auto b = pop();
            const auto a = pop();
            if (b == 0)
                throw trap_signal{"div-by-zero"};
            const auto sa = static_cast<std::int32_t>(a);
            const auto sb = static_cast<std::int32_t>(b);
            std::uint32_t r = 0;
            if (op == Opcode::i32_div_s)
            {
                if (sa == std::numeric_limits<std::int32_t>::min() && sb == -1)
                    throw trap_signal{"integer-overflow"};
                r = static_cast<std::uint32_t>(sa / sb);
            }
            else if (op == Opcode::i32_rem_s)
                r = sb == -1 ? 0 : static_cast<std::uint32_t>(sa % sb);
            else if (op == Opcode::i32_div_u)
                r = a / b;
            else
                r = a % b;
            push(r);
            break;
        }
        case Opcode::drop:
            pop();
            break;
        case Opcode::local_get:
            push(frame.locals[static_cast<std::size_t>(instr.imm)]);
            break;
        case Opcode::local_set:
            frame.locals[static_cast<std::size_t>(instr.imm)] = pop();
            break;
        case Opcode::local_tee:
        {
            const auto v = pop();
            frame.locals[static_cast<std::size_t>(instr.imm)] = v;
            push(v);
            break;
        }
        case Opcode::global_get:
            push(m_state.globals[static_cast<std::size_t>(instr.imm)]);
            break;
        case Opcode::global_set:
            m_state.globals[static_cast<std::size_t>(instr.imm)] = pop();
            break;
        case Opcode::i32_load:
        {
            const auto ea = effective_address(pop(), instr.imm);
            std::uint32_t v = 0;
            std::memcpy(&v, m_state.memory.data() + ea, 4);
            push(v);
            break;
        }
        case Opcode::i32_store:
        {
            const auto v = pop();
            const auto ea = effective_address(pop(), instr.imm);
            std::memcpy(m_state.memory.data() + ea, &v, 4);
            break;
        }
        case Opcode::block:
        case Opcode::loop:
            frame.labels.push_back(Label{op, frame.pc, m_control[frame.function].end_of[frame.pc],
                m_state.stack.size(), op == Opcode::loop ? 0u : (instr.has_result ? 1u : 0u)});
            break;
        case Opcode::if_:
        {
            const auto cond = pop();
            const auto& map = m_control[frame.function];
            const Label label{op, frame.pc, map.end_of[frame.pc], m_state.stack.size(),
                instr.has_result ? 1u : 0u};
            if (cond != 0)
                frame.labels.push_back(label);
            else if (map.else_of[frame.pc] != none)
            {
                frame.labels.push_back(label);
                frame.pc = map.else_of[frame.pc] + 1;
                return false;
            }
            else
            {
                frame.pc = label.end + 1;
                return false;
            }
            break;
        }
        case Opcode::else_:
        {
            const auto end = frame.labels.back().end;
            frame.labels.pop_back();
            frame.pc = end + 1;
            return false;
        }
        case Opcode::end:
            frame.labels.pop_back();
            break;
        case Opcode::br:
            return branch(static_cast<std::uint32_t>(instr.imm));
        case Opcode::br_if:
            if (pop() != 0)
                return branch(static_cast<std::uint32_t>(instr.imm));
            break;
        case Opcode::return_:
            return exit_function();
        case Opcode::call:
        {
            const auto callee_index = static_cast<std::uint32_t>(instr.imm);
            const auto& callee = m_module.functions[callee_index];
            if (m_frames.size() >= m_options.max_call_depth)
                throw trap_signal{"call-stack-exhausted"};
            Frame callee_frame{callee_index, 0, {}, 0, {}};
            callee_frame.locals.assign(callee.local_count(), 0);
            for (std::size_t k = callee.params; k-- > 0;)
                callee_frame.locals[k] = pop();
            callee_frame.base = m_state.stack.size();
            frame.pc = next;
            m_frames.push_back(std::move(callee_frame));
            return false;
        }
        case Opcode::nop:
            break;
        case Opcode::unreachable:
            throw trap_signal{"unreachable"};
        default:
        {
            // Pure operators.
            const auto arity = info(op).pops;
            std::uint32_t operands[3] = {0, 0, 0};
            for (std::size_t k = arity; k-- > 0;)
                operands[k] = pop();
            push(apply_pure(op, operands[0], operands[1], operands[2]));
            break;
        }
        }
        frame.pc = next;
        return false;
    }

    static std::uint32_t apply_pure(Opcode op, std::uint32_t a, std::uint32_t b, std::uint32_t c)
    {
        const auto sa = static_cast<std::int32_t>(a);
        const auto sb = static_cast<std::int32_t>(b);
        const auto k = b & 31u;
        switch (op)
        {
        case Opcode::i32_add:
            return a + b;
        case Opcode::i32_sub:
            return a - b;
        case Opcode::i32_mul:
            return a * b;
        case Opcode::i32_and:
            return a & b;
        case Opcode::i32_or:
            return a | b;
        case Opcode::i32_xor:
            return a ^ b;
        case Opcode::i32_shl:
            return a << k;
        case Opcode::i32_shr_s:
            return static_cast<std::uint32_t>(sa >> k);
        case Opcode::i32_shr_u:
            return a >> k;
        case Opcode::i32_rotl:
            return k == 0 ? a : (a << k) | (a >> (32 - k));
        case Opcode::i32_rotr:
            return k == 0 ? a : (a >> k) | (a << (32 - k));
        case Opcode::i32_eq:
            return a == b;
        case Opcode::i32_ne:
            return a != b;
        case Opcode::i32_lt_s:
            return sa < sb;
        case Opcode::i32_lt_u:
            return a < b;
        case Opcode::i32_gt_s:
            return sa > sb;
        case Opcode::i32_gt_u:
            return a > b;
        case Opcode::i32_le_s:
            return sa <= sb;
        case Opcode::i32_le_u:
            return a <= b;
        case Opcode::i32_ge_s:
            return sa >= sb;
        case Opcode::i32_ge_u:
            return a >= b;
        case Opcode::i32_eqz:
            return a == 0;
        case Opcode::select:
            return c != 0 ? a : b;
        default:
            throw std::logic_error{"unhandled instruction " + std::string{name(op)}};
        }
    }

    MachineState& m_state;
    const Module& m_module;
    const InvokeOptions& m_options;
    std::vector<ControlMap> m_control;
    std::vector<Frame> m_frames;
    Trace m_trace;
    std::uint64_t m_events = 0;
};
}  // namespace

Execution invoke(MachineState& state, std::string_view export_name,
    std::span<const std::int32_t> args, const InvokeOptions& options)
{
    if (state.module == nullptr)
        throw std::invalid_argument{"machine state is not instantiated"};
    const auto& m = *state.module;
    const auto it = m.exports.find(std::string{export_name});
    if (it == m.exports.end())
        throw unknown_export{"unknown export '" + std::string{export_name} + "'"};
    const auto& f = m.functions.at(it->second);
    if (args.size() != f.params)
        throw arity_mismatch{"export '" + std::string{export_name} + "' expects " +
                             std::to_string(f.params) + " arguments, got " +
                             std::to_string(args.size())};
    Machine machine{state, options};
    return machine.run(it->second, args);
}

Execution run(const Module& m, std::string_view export_name, std::span<const std::int32_t> args,
    std::uint64_t fuel)
{
    auto state = instantiate(m, fuel);
    return invoke(state, export_name, args);
}

void write_trace(std::ostream& out, const TraceFile& t)
{
    out << "# crow-trace v1 entry=" << t.entry << '\n';
    for (const auto& e : t.trace)
        out << to_string(e) << '\n';
    out << to_string(t.outcome) << '\n';
}

std::string write_trace(const TraceFile& t)
{
    std::ostringstream out;
    write_trace(out, t);
    return out.str();
}

namespace
{
std::int32_t parse_value(const std::string& s, std::size_t line)
{
    std::size_t used = 0;
    long long v = 0;
    try
    {
        v = std::stoll(s, &used, 10);
    }
    catch (const std::exception&)
    {
        used = 0;
    }
    if (used != s.size() || s.empty() || v < std::numeric_limits<std::int32_t>::min() ||
        v > std::numeric_limits<std::int32_t>::max())
        throw malformed_trace{"line " + std::to_string(line) + ": bad value '" + s + "'"};
    return static_cast<std::int32_t>(v);
}
}  // namespace

TraceFile read_trace(std::istream& in)
{
    static constexpr std::string_view header = "# crow-trace v1 entry=";
    TraceFile t;
    std::string line;
    if (!std::getline(in, line) || !line.starts_with(header))
        throw malformed_trace{"missing trace header"};
    t.entry = line.substr(header.size());
    std::size_t number = 1;
    bool terminated = false;
    while (std::getline(in, line))
    {
        ++number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (terminated)
        {
            if (line.empty())
                continue;
            throw malformed_trace{"line " + std::to_string(number) + ": content after terminator"};
        }
        if (line.starts_with("push "))
            t.trace.push_back(TraceEvent{EventKind::push, parse_value(line.substr(5), number)});
        else if (line.starts_with("pop "))
            t.trace.push_back(TraceEvent{EventKind::pop, parse_value(line.substr(4), number)});
        else if (line == "result")
        {
            t.outcome = Outcome::result();
            terminated = true;
        }
        else if (line.starts_with("result "))
        {
            t.outcome = Outcome::result(parse_value(line.substr(7), number));
            terminated = true;
        }
        else if (line.starts_with("trap ") && line.size() > 5)
        {
            t.outcome = Outcome::trap(line.substr(5));
            terminated = true;
        }
        else if (line == "fuel-exhausted")
        {
            t.outcome = Outcome::fuel_exhausted();
            terminated = true;
        }
        else
            throw malformed_trace{"line " + std::to_string(number) + ": unrecognized event '" + line + "'"};
    }
    if (!terminated)
        throw malformed_trace{"missing outcome line"};
    return t;
}

TraceFile read_trace(std::string_view text)
{
    std::istringstream in{std::string{text}};
    return read_trace(in);
}
}  // namespace crow
