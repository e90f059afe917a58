// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/wat.hpp"

#include <sstream>

namespace crow
{
std::string to_string(const Instr& instr)
{
    std::string s{name(instr.op)};
    switch (info(instr.op).immediate)
    {
    case ImmediateKind::none:
        break;
    case ImmediateKind::value:
        s += ' ';
        s += std::to_string(static_cast<std::int32_t>(instr.imm));
        break;
    case ImmediateKind::index:
    case ImmediateKind::label:
        s += ' ';
        s += std::to_string(instr.imm);
        break;
    case ImmediateKind::offset:
        if (instr.imm != 0)
            s += " offset=" + std::to_string(instr.imm);
        break;
    }
    if (instr.has_result)
        s += " (result i32)";
    return s;
}

namespace
{
void print_types(std::ostringstream& out, const char* kind, std::uint32_t count)
{
    if (count == 0)
        return;
    out << " (" << kind;
    for (std::uint32_t i = 0; i < count; ++i)
        out << " i32";
    out << ')';
}
}  // namespace

std::string print_module(const Module& m)
{
    std::ostringstream out;
    out << "(module\n";
    if (m.memory_pages)
        out << "  (memory " << *m.memory_pages << ")\n";
    for (const auto& g : m.globals)
    {
        out << "  (global " << (g.is_mutable ? "(mut i32)" : "i32") << " (i32.const " << g.init
            << "))\n";
    }
    for (const auto& f : m.functions)
    {
        out << "  (func";
        print_types(out, "param", f.params);
        print_types(out, "result", f.results);
        print_types(out, "local", f.locals);
        out << '\n';
        std::size_t depth = 2;
        for (const auto& instr : f.body)
        {
            if ((instr.op == Opcode::end || instr.op == Opcode::else_) && depth > 2)
                --depth;
            out << std::string(depth * 2, ' ') << to_string(instr) << '\n';
            if (instr.op == Opcode::block || instr.op == Opcode::loop || instr.op == Opcode::if_ ||
                instr.op == Opcode::else_)
                ++depth;
        }
        out << "  )\n";
    }
    for (const auto& [name, index] : m.exports)
        out << "  (export \"" << name << "\" (func " << index << "))\n";
    out << ")\n";
    return out.str();
}

std::string to_string(const Diagnostic& d)
{
    std::string s;
    if (d.function)
    {
        s += "func " + std::to_string(*d.function);
        if (d.offset)
            s += " @" + std::to_string(*d.offset);
        s += ": ";
    }
    return s + d.message;
}

namespace
{
struct Frame
{
    Opcode kind;  ///< block, loop, if_ or nop for the function body
    bool has_result;
    std::size_t height;
    bool unreachable = false;
    bool seen_else = false;

    std::size_t label_arity() const noexcept
    {
        return kind == Opcode::loop ? 0 : (has_result ? 1 : 0);
    }
};

class FunctionValidator
{
public:
    FunctionValidator(const Module& m, std::uint32_t index, std::vector<Diagnostic>& out)
      : m_module{m}, m_index{index}, m_func{m.functions[index]}, m_out{out}
    {}

    void run()
    {
        m_frames.push_back(Frame{Opcode::nop, m_func.results == 1, 0});
        for (m_pc = 0; m_pc < m_func.body.size(); ++m_pc)
        {
            if (m_frames.empty())
            {
                report("instruction after function end");
                return;
            }
            step(m_func.body[m_pc]);
            if (m_failed)
                return;
        }
        if (m_frames.empty())
            return;
        if (m_frames.size() > 1)
        {
            report("missing end for " + std::string{name(m_frames.back().kind)});
            return;
        }
        close_frame(m_frames.back());
    }

private:
    void report(std::string message)
    {
        m_out.push_back(Diagnostic{m_index, static_cast<std::uint32_t>(m_pc), std::move(message)});
        m_failed = true;
    }

    void pop()
    {
        auto& frame = m_frames.back();
        if (m_height == frame.height)
        {
            if (!frame.unreachable)
                report("operand underflow");
            return;
        }
        --m_height;
    }

    void pop_n(std::size_t n)
    {
        for (std::size_t i = 0; i < n && !m_failed; ++i)
            pop();
    }

    void push(std::size_t n = 1) { m_height += n; }

    void mark_unreachable()
    {
        m_height = m_frames.back().height;
        m_frames.back().unreachable = true;
    }

    void check_local(std::int64_t idx)
    {
        if (idx < 0 || idx >= m_func.local_count())
            report("local index out of range");
    }

    void check_global(std::int64_t idx)
    {
        if (idx < 0 || static_cast<std::size_t>(idx) >= m_module.globals.size())
            report("global index out of range");
    }

    void check_memory()
    {
        if (!m_module.memory_pages)
            report("memory instruction without memory");
    }

    const Frame* label(std::int64_t depth)
    {
        if (depth < 0 || static_cast<std::size_t>(depth) >= m_frames.size())
        {
            report("label index out of range");
            return nullptr;
        }
        return &m_frames[m_frames.size() - 1 - static_cast<std::size_t>(depth)];
    }

    /// Checks the frame's results are exactly on the stack.
    void close_frame(const Frame& frame)
    {
        const std::size_t arity = frame.has_result ? 1 : 0;
        pop_n(arity);
        if (m_failed)
            return;
        if (m_height != frame.height)
            report("stack height mismatch at end of " +
                   std::string{frame.kind == Opcode::nop ? "function" : name(frame.kind)});
        m_height = frame.height + arity;
    }

    void step(const Instr& instr)
    {
        const auto op = instr.op;
        switch (op)
        {
        case Opcode::block:
        case Opcode::loop:
            m_frames.push_back(Frame{op, instr.has_result, m_height});
            return;
        case Opcode::if_:
            pop();
            m_frames.push_back(Frame{op, instr.has_result, m_height});
            return;
        case Opcode::else_:
        {
            auto& frame = m_frames.back();
            if (frame.kind != Opcode::if_ || frame.seen_else)
            {
                report("else without matching if");
                return;
            }
            close_frame(frame);
            if (m_failed)
                return;
            m_height = frame.height;
            frame.unreachable = false;
            frame.seen_else = true;
            return;
        }
        case Opcode::end:
        {
            if (m_frames.size() == 1)
            {
                report("unbalanced end");
                return;
            }
            const auto frame = m_frames.back();
            if (frame.kind == Opcode::if_ && frame.has_result && !frame.seen_else)
            {
                report("if with result requires else");
                return;
            }
            close_frame(frame);
            m_frames.pop_back();
            return;
        }
        case Opcode::br:
            if (const auto* target = label(instr.imm))
            {
                pop_n(target->label_arity());
                mark_unreachable();
            }
            return;
        case Opcode::br_if:
            if (const auto* target = label(instr.imm))
            {
                const auto arity = target->label_arity();
                pop();
                pop_n(arity);
                push(arity);
            }
            return;
        case Opcode::return_:
            pop_n(m_func.results);
            mark_unreachable();
            return;
        case Opcode::unreachable:
            mark_unreachable();
            return;
        case Opcode::call:
            if (instr.imm < 0 || static_cast<std::size_t>(instr.imm) >= m_module.functions.size())
            {
                report("function index out of range");
                return;
            }
            {
                const auto& callee = m_module.functions[static_cast<std::size_t>(instr.imm)];
                pop_n(callee.params);
                push(callee.results);
            }
            return;
        case Opcode::local_get:
        case Opcode::local_set:
        case Opcode::local_tee:
            check_local(instr.imm);
            break;
        case Opcode::global_get:
            check_global(instr.imm);
            break;
        case Opcode::global_set:
            check_global(instr.imm);
            if (!m_failed && !m_module.globals[static_cast<std::size_t>(instr.imm)].is_mutable)
                report("global is immutable");
            break;
        case Opcode::i32_load:
        case Opcode::i32_store:
            check_memory();
            break;
        default:
            break;
        }
        if (m_failed)
            return;
        const auto& oi = info(op);
        pop_n(oi.pops);
        push(oi.pushes);
    }

    const Module& m_module;
    std::uint32_t m_index;
    const FuncDef& m_func;
    std::vector<Diagnostic>& m_out;
    std::vector<Frame> m_frames;
    std::size_t m_height = 0;
    std::size_t m_pc = 0;
    bool m_failed = false;
};
}  // namespace

std::vector<Diagnostic> validate(const Module& m)
{
    std::vector<Diagnostic> out;
    for (std::uint32_t i = 0; i < m.functions.size(); ++i)
    {
        const auto& f = m.functions[i];
        if (f.results > 1)
        {
            out.push_back({i, std::nullopt, "multiple results"});
            continue;
        }
        FunctionValidator{m, i, out}.run();
    }
    for (const auto& [export_name, index] : m.exports)
    {
        if (index >= m.functions.size())
            out.push_back({std::nullopt, std::nullopt,
                "export '" + export_name + "' function index out of range"});
    }
    return out;
}

void require_valid(const Module& m)
{
    const auto diags = validate(m);
    if (!diags.empty())
        throw std::invalid_argument{"invalid module: " + to_string(diags.front())};
}
}  // namespace crow
