// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/equivalence.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <regex>
#include <sstream>

namespace crow
{
namespace
{
std::string hex32(std::uint32_t v)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#x%08x", v);
    return buf;
}

std::string smt_op(Opcode op, const std::string& a, const std::string& b, const std::string& c,
    bool b_is_const, std::uint32_t b_value)
{
    const auto bool_to_bv = [](const std::string& cond) {
        return "(ite " + cond + " #x00000001 #x00000000)";
    };
    const auto shift_amount = [&]() {
        return b_is_const ? hex32(b_value & 31u) : "(bvand " + b + " #x0000001f)";
    };
    switch (op)
    {
    case Opcode::i32_add:
        return "(bvadd " + a + " " + b + ")";
    case Opcode::i32_sub:
        return "(bvsub " + a + " " + b + ")";
    case Opcode::i32_mul:
        return "(bvmul " + a + " " + b + ")";
    case Opcode::i32_and:
        return "(bvand " + a + " " + b + ")";
    case Opcode::i32_or:
        return "(bvor " + a + " " + b + ")";
    case Opcode::i32_xor:
        return "(bvxor " + a + " " + b + ")";
    case Opcode::i32_shl:
        return "(bvshl " + a + " " + shift_amount() + ")";
    case Opcode::i32_shr_u:
        return "(bvlshr " + a + " " + shift_amount() + ")";
    case Opcode::i32_shr_s:
        return "(bvashr " + a + " " + shift_amount() + ")";
    case Opcode::i32_rotl:
    case Opcode::i32_rotr:
    {
        const auto k = shift_amount();
        const auto back = "(bvsub #x00000020 " + k + ")";
        // A back shift of 32 yields 0 in SMT-LIB, which matches a zero rotation.
        if (op == Opcode::i32_rotl)
            return "(bvor (bvshl " + a + " " + k + ") (bvlshr " + a + " " + back + "))";
        return "(bvor (bvlshr " + a + " " + k + ") (bvshl " + a + " " + back + "))";
    }
    case Opcode::i32_eq:
        return bool_to_bv("(= " + a + " " + b + ")");
    case Opcode::i32_ne:
        return bool_to_bv("(not (= " + a + " " + b + "))");
    case Opcode::i32_lt_s:
        return bool_to_bv("(bvslt " + a + " " + b + ")");
    case Opcode::i32_lt_u:
        return bool_to_bv("(bvult " + a + " " + b + ")");
    case Opcode::i32_gt_s:
        return bool_to_bv("(bvsgt " + a + " " + b + ")");
    case Opcode::i32_gt_u:
        return bool_to_bv("(bvugt " + a + " " + b + ")");
    case Opcode::i32_le_s:
        return bool_to_bv("(bvsle " + a + " " + b + ")");
    case Opcode::i32_le_u:
        return bool_to_bv("(bvule " + a + " " + b + ")");
    case Opcode::i32_ge_s:
        return bool_to_bv("(bvsge " + a + " " + b + ")");
    case Opcode::i32_ge_u:
        return bool_to_bv("(bvuge " + a + " " + b + ")");
    case Opcode::i32_eqz:
        return bool_to_bv("(= " + a + " #x00000000)");
    case Opcode::select:
        return "(ite (= " + c + " #x00000000) " + b + " " + a + ")";
    default:
        throw std::invalid_argument{"no SMT encoding for " + std::string{name(op)}};
    }
}

/// Renders one side; shared operator nodes become nullary define-funs.
std::string render_side(const Dag& dag, const std::string& prefix, std::string& defs)
{
    const auto d = compact(dag);
    if (d.nodes.empty())
        return hex32(0);
    std::vector<std::size_t> uses(d.nodes.size(), 0);
    for (const auto& n : d.nodes)
    {
        for (std::size_t k = 0; k < n.arity(); ++k)
            ++uses[n.operands[k]];
    }
    std::vector<std::string> term(d.nodes.size());
    for (std::size_t i = 0; i < d.nodes.size(); ++i)
    {
        const auto& n = d.nodes[i];
        switch (n.kind)
        {
        case NodeKind::input:
            term[i] = "x" + std::to_string(n.input);
            break;
        case NodeKind::constant:
            term[i] = hex32(static_cast<std::uint32_t>(n.value));
            break;
        case NodeKind::op:
        {
            const auto& a = term[n.operands[0]];
            const auto& b = n.arity() > 1 ? term[n.operands[1]] : a;
            const auto& c = n.arity() > 2 ? term[n.operands[2]] : a;
            const bool b_const = n.arity() > 1 && d[n.operands[1]].kind == NodeKind::constant;
            const auto b_value =
                b_const ? static_cast<std::uint32_t>(d[n.operands[1]].value) : 0u;
            auto t = smt_op(n.op, a, b, c, b_const, b_value);
            if (uses[i] > 1)
            {
                const auto label = prefix + std::to_string(i);
                defs += "(define-fun " + label + " () (_ BitVec 32) " + t + ")\n";
                t = label;
            }
            term[i] = std::move(t);
            break;
        }
        }
    }
    return term.back();
}

bool find_program(const std::string& program)
{
    if (program.find('/') != std::string::npos)
        return ::access(program.c_str(), X_OK) == 0;
    const char* path = std::getenv("PATH");
    if (path == nullptr)
        return false;
    std::stringstream dirs{path};
    std::string dir;
    while (std::getline(dirs, dir, ':'))
    {
        if (dir.empty())
            continue;
        const auto full = dir + "/" + program;
        struct stat st{};
        if (::stat(full.c_str(), &st) == 0 && S_ISREG(st.st_mode) &&
            ::access(full.c_str(), X_OK) == 0)
            return true;
    }
    return false;
}

struct ProcessOutput
{
    bool started = false;
    bool timed_out = false;
    int status = 0;
    std::string out;
};

ProcessOutput run_process(
    const std::vector<std::string>& command, const std::string& input, double timeout_secs)
{
    ProcessOutput result;
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0)
        return result;
    if (::pipe(out_pipe) != 0)
    {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        return result;
    }

    std::vector<char*> argv;
    for (const auto& a : command)
        argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    const auto pid = ::fork();
    if (pid < 0)
    {
        for (const int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]})
            ::close(fd);
        return result;
    }
    if (pid == 0)
    {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        const int devnull = ::open("/dev/null", O_WRONLY);
        if (devnull >= 0)
            ::dup2(devnull, STDERR_FILENO);
        for (const int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]})
            ::close(fd);
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }
    result.started = true;
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);

    // Scripts are small; a broken pipe only means the solver exited early.
    const auto old_handler = ::signal(SIGPIPE, SIG_IGN);
    std::size_t written = 0;
    while (written < input.size())
    {
        const auto n = ::write(in_pipe[1], input.data() + written, input.size() - written);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            break;
        }
        written += static_cast<std::size_t>(n);
    }
    ::close(in_pipe[1]);
    ::signal(SIGPIPE, old_handler);

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_secs));
    char buf[4096];
    while (true)
    {
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now())
                                   .count();
        if (remaining <= 0)
        {
            result.timed_out = true;
            break;
        }
        pollfd pfd{out_pipe[0], POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(remaining));
        if (ready < 0 && errno == EINTR)
            continue;
        if (ready <= 0)
        {
            result.timed_out = ready == 0;
            break;
        }
        const auto n = ::read(out_pipe[0], buf, sizeof(buf));
        if (n < 0 && errno == EINTR)
            continue;
        if (n <= 0)
            break;
        result.out.append(buf, static_cast<std::size_t>(n));
    }
    ::close(out_pipe[0]);
    if (result.timed_out)
        ::kill(pid, SIGKILL);
    ::waitpid(pid, &result.status, 0);
    return result;
}

std::optional<std::vector<std::int32_t>> parse_model(const std::string& text, std::size_t inputs)
{
    std::vector<std::int32_t> model(inputs, 0);
    std::vector<bool> seen(inputs, false);
    static const std::regex binding{R"(\(\s*x(\d+)\s+#(x[0-9a-fA-F]+|b[01]+)\s*\))"};
    for (std::sregex_iterator it{text.begin(), text.end(), binding}, end; it != end; ++it)
    {
        const auto index = std::stoul((*it)[1].str());
        const auto lit = (*it)[2].str();
        const auto value = lit[0] == 'x' ? std::stoul(lit.substr(1), nullptr, 16)
                                         : std::stoul(lit.substr(1), nullptr, 2);
        if (index < inputs)
        {
            model[index] = static_cast<std::int32_t>(static_cast<std::uint32_t>(value));
            seen[index] = true;
        }
    }
    for (const bool s : seen)
    {
        if (!s)
            return std::nullopt;
    }
    return model;
}
}  // namespace

std::string emit_smtlib(const EquivalenceQuery& q)
{
    std::ostringstream out;
    out << "(set-logic QF_BV)\n";
    for (std::size_t i = 0; i < q.input_count; ++i)
        out << "(declare-const x" << i << " (_ BitVec 32))\n";
    std::string defs;
    const auto lhs = render_side(q.original, "a", defs);
    const auto rhs = render_side(q.candidate, "b", defs);
    out << defs;
    out << "(assert (distinct " << lhs << " " << rhs << "))\n";
    out << "(check-sat)\n";
    return out.str();
}

SolverResult run_solver(
    const EquivalenceQuery& q, const std::vector<std::string>& command, double timeout_secs)
{
    SolverResult result;
    if (command.empty() || !find_program(command.front()))
        return result;

    auto script = emit_smtlib(q);
    if (q.input_count > 0)
    {
        script += "(get-value (";
        for (std::size_t i = 0; i < q.input_count; ++i)
            script += (i ? " x" : "x") + std::to_string(i);
        script += "))\n";
    }
    script += "(exit)\n";

    const auto proc = run_process(command, script, timeout_secs);
    result.output = proc.out;
    if (!proc.started || proc.timed_out)
        return result;

    std::istringstream lines{proc.out};
    std::string first;
    while (std::getline(lines, first))
    {
        if (first.find_first_not_of(" \t\r") != std::string::npos)
            break;
    }
    const auto trimmed = first.substr(0, first.find_last_not_of(" \t\r") + 1);
    if (trimmed == "unsat")
        result.answer = SolverAnswer::unsat;
    else if (trimmed == "sat")
    {
        result.answer = SolverAnswer::sat;
        result.model = parse_model(proc.out, q.input_count);
    }
    else if (trimmed == "unknown")
        result.answer = SolverAnswer::unknown;
    return result;
}

bool solver_available(const std::vector<std::string>& command)
{
    return !command.empty() && find_program(command.front());
}
}  // namespace crow
