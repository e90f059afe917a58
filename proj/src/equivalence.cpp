// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/equivalence.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <optional>
#include <random>

namespace crow
{
std::uint32_t apply_op(Opcode op, std::uint32_t a, std::uint32_t b, std::uint32_t c,
    unsigned width) noexcept
{
    const auto mask = width_mask(width);
    const auto sa = sign_extend(a, width);
    const auto sb = sign_extend(b, width);
    switch (op)
    {
    case Opcode::i32_add:
        return (a + b) & mask;
    case Opcode::i32_sub:
        return (a - b) & mask;
    case Opcode::i32_mul:
        return (a * b) & mask;
    case Opcode::i32_and:
        return a & b;
    case Opcode::i32_or:
        return a | b;
    case Opcode::i32_xor:
        return a ^ b;
    case Opcode::i32_shl:
        return (a << (b % width)) & mask;
    case Opcode::i32_shr_u:
        return a >> (b % width);
    case Opcode::i32_shr_s:
        return static_cast<std::uint32_t>(sa >> (b % width)) & mask;
    case Opcode::i32_rotl:
    case Opcode::i32_rotr:
    {
        auto k = b % width;
        if (op == Opcode::i32_rotr)
            k = (width - k) % width;
        if (k == 0)
            return a;
        return ((a << k) | (a >> (width - k))) & mask;
    }
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
        return 0;
    }
}

std::uint32_t eval_dag(const Dag& dag, std::span<const std::uint32_t> env, unsigned width)
{
    if (dag.nodes.empty())
        return 0;
    const auto mask = width_mask(width);
    std::vector<std::uint32_t> values(dag.root + 1);
    for (std::size_t i = 0; i <= dag.root; ++i)
    {
        const auto& n = dag.nodes[i];
        switch (n.kind)
        {
        case NodeKind::input:
            values[i] = env[n.input] & mask;
            break;
        case NodeKind::constant:
            values[i] = static_cast<std::uint32_t>(n.value) & mask;
            break;
        case NodeKind::op:
            values[i] = apply_op(n.op, values[n.operands[0]],
                n.arity() > 1 ? values[n.operands[1]] : 0, n.arity() > 2 ? values[n.operands[2]] : 0,
                width);
            break;
        }
    }
    return values[dag.root];
}

CompiledDag::CompiledDag(const Dag& dag)
{
    const auto compact_dag = compact(dag);
    for (const auto& n : compact_dag.nodes)
    {
        Step s{n.op, 0, n.operands[0], n.operands[1], n.operands[2], 0};
        if (n.kind == NodeKind::constant)
        {
            s.kind = 1;
            s.value = static_cast<std::uint32_t>(n.value);
        }
        else if (n.kind == NodeKind::input)
        {
            s.kind = 2;
            s.value = n.input;
            m_input_count = std::max<std::size_t>(m_input_count, n.input + 1);
        }
        m_steps.push_back(s);
    }
}

std::uint32_t CompiledDag::eval(std::span<const std::uint32_t> env, unsigned width) const
{
    std::uint32_t out = 0;
    eval_batch(env, 1, width, std::span{&out, 1});
    return out;
}

void CompiledDag::eval_batch(std::span<const std::uint32_t> envs, std::size_t count,
    unsigned width, std::span<std::uint32_t> out) const
{
    if (m_steps.empty())
    {
        std::fill_n(out.begin(), count, 0u);
        return;
    }
    const auto mask = width_mask(width);
    if (m_scratch.size() != m_steps.size() * count)
    {
        m_scratch.assign(m_steps.size() * count, 0);
        m_filled_count = 0;
    }
    const bool refill = m_filled_count != count || m_filled_width != width;
    m_filled_count = count;
    m_filled_width = width;
    m_columns.resize(m_steps.size());
    auto* values = m_scratch.data();
    for (std::size_t i = 0; i < m_steps.size(); ++i)
    {
        const auto& s = m_steps[i];
        auto* dst = values + i * count;
        m_columns[i] = dst;
        if (s.kind == 1)
        {
            if (refill)
                std::fill_n(dst, count, s.value & mask);
        }
        else if (s.kind == 2)
        {
            const auto* src = envs.data() + std::size_t{s.value} * count;
            if (width == 32)
                m_columns[i] = src;
            else
            {
                for (std::size_t k = 0; k < count; ++k)
                    dst[k] = src[k] & mask;
            }
        }
        else
        {
            const auto* a = m_columns[s.a];
            const auto* b = m_columns[s.b];
            const auto* c = m_columns[s.c];
            const auto arity = info(s.op).pops;
            if (arity == 1)
            {
                for (std::size_t k = 0; k < count; ++k)
                    dst[k] = apply_op(s.op, a[k], 0, 0, width);
            }
            else if (arity == 2)
            {
                switch (s.op)
                {
                // Hot operators get dedicated loops.
                case Opcode::i32_add:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = (a[k] + b[k]) & mask;
                    break;
                case Opcode::i32_sub:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = (a[k] - b[k]) & mask;
                    break;
                case Opcode::i32_mul:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = (a[k] * b[k]) & mask;
                    break;
                case Opcode::i32_xor:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] ^ b[k];
                    break;
                case Opcode::i32_and:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] & b[k];
                    break;
                case Opcode::i32_or:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] | b[k];
                    break;
                case Opcode::i32_eq:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] == b[k];
                    break;
                case Opcode::i32_ne:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] != b[k];
                    break;
                case Opcode::i32_lt_u:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] < b[k];
                    break;
                case Opcode::i32_gt_u:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] > b[k];
                    break;
                case Opcode::i32_le_u:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] <= b[k];
                    break;
                case Opcode::i32_ge_u:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] >= b[k];
                    break;
                case Opcode::i32_lt_s:
                case Opcode::i32_gt_s:
                case Opcode::i32_le_s:
                case Opcode::i32_ge_s:
                {
                    // Flipping the sign bit turns a signed order into an unsigned one.
                    const auto sign = std::uint32_t{1} << (width - 1);
                    const auto op = s.op;
                    for (std::size_t k = 0; k < count; ++k)
                    {
                        const auto x = a[k] ^ sign;
                        const auto y = b[k] ^ sign;
                        dst[k] = op == Opcode::i32_lt_s   ? x < y
                                 : op == Opcode::i32_gt_s ? x > y
                                 : op == Opcode::i32_le_s ? x <= y
                                                          : x >= y;
                    }
                    break;
                }
                case Opcode::i32_shl:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = (a[k] << (b[k] % width)) & mask;
                    break;
                case Opcode::i32_shr_u:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = a[k] >> (b[k] % width);
                    break;
                default:
                    for (std::size_t k = 0; k < count; ++k)
                        dst[k] = apply_op(s.op, a[k], b[k], 0, width);
                    break;
                }
            }
            else
            {
                for (std::size_t k = 0; k < count; ++k)
                    dst[k] = apply_op(s.op, a[k], b[k], c[k], width);
            }
        }
    }
    std::copy_n(m_columns.back(), count, out.begin());
}

std::string_view to_string(Tier t) noexcept
{
    switch (t)
    {
    case Tier::verified:
        return "verified";
    case Tier::probable:
        return "probable";
    case Tier::rejected:
        return "rejected";
    }
    return "?";
}

std::string_view to_string(Method m) noexcept
{
    switch (m)
    {
    case Method::exhaustive:
        return "exhaustive";
    case Method::reduced_width:
        return "reduced-width";
    case Method::smt:
        return "smt";
    }
    return "?";
}

void validate(const CheckerConfig& cfg)
{
    if (cfg.exhaustive_budget < 1)
        throw config_error{"exhaustive budget must be at least 1"};
    for (const auto w : cfg.reduced_widths)
    {
        if (w < 2 || w > 32)
            throw config_error{"reduced widths must lie in 2..32"};
    }
    if (cfg.mode == CheckerMode::smt && cfg.solver_command.empty())
        throw config_error{"smt mode requires a solver command"};
    if (cfg.solver_timeout_secs <= 0)
        throw config_error{"solver timeout must be positive"};
}

namespace
{
constexpr std::size_t batch_size = 1024;

unsigned log2_floor(std::uint64_t v) noexcept
{
    return static_cast<unsigned>(std::bit_width(v) - 1);
}

bool differs_at_32(const EquivalenceQuery& q, std::span<const std::uint32_t> env)
{
    return eval_dag(q.original, env, 32) != eval_dag(q.candidate, env, 32);
}

std::vector<std::int32_t> to_signed(std::span<const std::uint32_t> env)
{
    std::vector<std::int32_t> out;
    out.reserve(env.size());
    for (const auto v : env)
        out.push_back(static_cast<std::int32_t>(v));
    return out;
}

Verdict rejected(Method method, std::span<const std::uint32_t> env, std::string note = {})
{
    Verdict v;
    v.tier = Tier::rejected;
    v.method = method;
    v.counterexample = to_signed(env);
    v.note = std::move(note);
    return v;
}

/// Compares both sides over a batch; returns the first differing environment index.
std::optional<std::size_t> first_difference(const CompiledDag& a, const CompiledDag& b,
    std::span<const std::uint32_t> envs, std::size_t count, unsigned width,
    std::vector<std::uint32_t>& ra, std::vector<std::uint32_t>& rb)
{
    ra.resize(count);
    rb.resize(count);
    a.eval_batch(envs, count, width, ra);
    b.eval_batch(envs, count, width, rb);
    for (std::size_t k = 0; k < count; ++k)
    {
        if (ra[k] != rb[k])
            return k;
    }
    return std::nullopt;
}

/// Values of the input-free subterms of `dag` and their close neighbours.
void collect_boundaries(const Dag& dag, std::vector<std::uint32_t>& out)
{
    std::vector<std::optional<std::uint32_t>> folded(dag.nodes.size());
    for (std::size_t i = 0; i < dag.nodes.size(); ++i)
    {
        const auto& n = dag.nodes[i];
        if (n.kind == NodeKind::constant)
            folded[i] = static_cast<std::uint32_t>(n.value);
        else if (n.kind == NodeKind::op)
        {
            std::array<std::uint32_t, 3> args{};
            bool constant = true;
            for (std::size_t k = 0; k < n.arity(); ++k)
            {
                const auto& v = folded[n.operands[k]];
                constant = constant && v.has_value();
                args[k] = v.value_or(0);
            }
            if (constant)
                folded[i] = apply_op(n.op, args[0], args[1], args[2], 32);
        }
        if (!folded[i])
            continue;
        const auto v = *folded[i];
        for (std::uint32_t d = 0; d <= 2; ++d)
        {
            out.push_back(v + d);
            out.push_back(v - d);
        }
        out.push_back(0u - v);
    }
}

std::vector<std::uint32_t> column(std::span<const std::uint32_t> envs, std::size_t inputs,
    std::size_t count, std::size_t k)
{
    std::vector<std::uint32_t> env(inputs);
    for (std::size_t i = 0; i < inputs; ++i)
        env[i] = envs[i * count + k];
    return env;
}
}  // namespace

Verdict exhaustive_check(const EquivalenceQuery& q, unsigned width, std::uint64_t budget)
{
    if (width < 2 || width > 32)
        throw config_error{"width must lie in 2..32"};
    const auto n = q.input_count;
    const auto bits = n * width;
    if (budget < 1 || bits > 63 || (std::uint64_t{1} << bits) > budget)
        throw infeasible_domain{std::to_string(n) + " inputs at width " + std::to_string(width) +
                                " exceed the evaluation budget"};

    const CompiledDag a{q.original};
    const CompiledDag b{q.candidate};
    const std::uint64_t total = std::uint64_t{1} << bits;
    const auto mask = width_mask(width);

    std::vector<std::uint32_t> envs;
    std::vector<std::uint32_t> ra, rb, recheck, wa, wb;
    std::size_t discarded = 0;
    for (std::uint64_t base = 0; base < total; base += batch_size)
    {
        const auto count = static_cast<std::size_t>(std::min<std::uint64_t>(batch_size, total - base));
        envs.resize(std::max<std::size_t>(n, 1) * count);
        for (std::size_t k = 0; k < count; ++k)
        {
            auto index = base + k;
            for (std::size_t i = 0; i < n; ++i)
            {
                envs[i * count + k] = static_cast<std::uint32_t>(index) & mask;
                index >>= width;
            }
        }
        ra.resize(count);
        rb.resize(count);
        a.eval_batch(envs, count, width, ra);
        b.eval_batch(envs, count, width, rb);
        if (width == 32)
        {
            for (std::size_t k = 0; k < count; ++k)
            {
                if (ra[k] != rb[k])
                    return rejected(Method::exhaustive, column(envs, n, count, k));
            }
            continue;
        }
        // Sign-extended reduced-width mismatches are rechecked at width 32 in one batch.
        std::size_t hits = 0;
        for (std::size_t k = 0; k < count; ++k)
            hits += ra[k] != rb[k];
        if (hits == 0)
            continue;
        recheck.assign(std::max<std::size_t>(n, 1) * hits, 0);
        std::size_t h = 0;
        for (std::size_t k = 0; k < count; ++k)
        {
            if (ra[k] == rb[k])
                continue;
            for (std::size_t i = 0; i < n; ++i)
                recheck[i * hits + h] = static_cast<std::uint32_t>(sign_extend(envs[i * count + k], width));
            ++h;
        }
        if (const auto hit = first_difference(a, b, recheck, hits, 32, wa, wb))
            return rejected(Method::reduced_width, column(recheck, n, hits, *hit),
                "width-" + std::to_string(width) + " counterexample confirmed at width 32");
        discarded += hits;
    }

    Verdict v;
    if (width == 32)
    {
        v.tier = Tier::verified;
        v.method = Method::exhaustive;
    }
    else
    {
        v.tier = Tier::probable;
        v.method = Method::reduced_width;
        if (discarded > 0)
            v.note = std::to_string(discarded) + " width-" + std::to_string(width) +
                     " differences vanished at width 32";
    }
    return v;
}

bool can_verify(std::size_t input_count, const CheckerConfig& cfg)
{
    return cfg.mode == CheckerMode::smt || input_count * 32 <= log2_floor(cfg.exhaustive_budget);
}

Verdict check(const EquivalenceQuery& q, const CheckerConfig& cfg)
{
    validate(cfg);
    const auto n = q.input_count;
    const auto budget_bits = log2_floor(cfg.exhaustive_budget);

    if (n * 32 <= budget_bits)
        return exhaustive_check(q, 32, cfg.exhaustive_budget);

    bool solver_failed = false;
    std::string note;
    if (cfg.mode == CheckerMode::smt)
    {
        const auto result = run_solver(q, cfg.solver_command, cfg.solver_timeout_secs);
        if (result.answer == SolverAnswer::unsat)
        {
            Verdict v;
            v.tier = Tier::verified;
            v.method = Method::smt;
            return v;
        }
        if (result.answer == SolverAnswer::sat && result.model)
        {
            std::vector<std::uint32_t> env;
            for (const auto x : *result.model)
                env.push_back(static_cast<std::uint32_t>(x));
            if (differs_at_32(q, env))
                return rejected(Method::smt, env);
        }
        solver_failed = true;
        note = result.answer == SolverAnswer::sat ? "solver model did not replay"
                                                   : "solver gave no answer";
    }

    for (const auto w : cfg.reduced_widths)
    {
        if (n * w > budget_bits)
            continue;
        auto v = exhaustive_check(q, w, cfg.exhaustive_budget);
        if (v.tier == Tier::rejected)
        {
            v.solver_failed = solver_failed;
            return v;
        }
        if (!v.note.empty())
            note += (note.empty() ? "" : "; ") + v.note;
    }

    // Seeded width-32 sampling, corner values first.
    static constexpr std::array<std::uint32_t, 7> corners{
        0u, 1u, 0xffffffffu, 2u, 10u, 0x7fffffffu, 0x80000000u};
    const CompiledDag a{q.original};
    const CompiledDag b{q.candidate};
    // A 64-bit LCG keeps the sampler cheap; only its upper 51 bits are used.
    std::linear_congruential_engine<std::uint64_t, 6364136223846793005ull, 1442695040888963407ull, 0>
        rng{cfg.seed ^ 0x9e3779b97f4a7c15ull};
    std::vector<std::uint32_t> boundaries;
    collect_boundaries(q.original, boundaries);
    collect_boundaries(q.candidate, boundaries);
    std::sort(boundaries.begin(), boundaries.end());
    boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());
    // Uniform words rarely land near thresholds or on equal operands, so the
    // random samples mix uniform words, log-uniform magnitudes, neighbours of
    // the constants of both sides and near-copies of the previous input.
    const auto draw = [&](const std::uint32_t* previous) -> std::uint32_t {
        const auto r = rng();
        const auto word = static_cast<std::uint32_t>(r >> 32);
        switch ((r >> 30) & 3)
        {
        case 1:
        {
            const auto bits = static_cast<unsigned>(((r >> 14) & 0xffff) * 33 >> 16);
            const auto magnitude = bits == 32 ? word : word & ((std::uint32_t{1} << bits) - 1);
            return (r >> 13) & 1 ? 0u - magnitude : magnitude;
        }
        case 2:
            if (!boundaries.empty())
                return boundaries[(std::uint64_t{word} * boundaries.size()) >> 32];
            return word;
        case 3:
            if (previous)
                return *previous + static_cast<std::uint32_t>((std::uint64_t{word} * 5) >> 32) - 2u;
            return word;
        default:
            return word;
        }
    };
    std::vector<std::uint32_t> envs;
    std::vector<std::uint32_t> ra, rb;
    for (std::uint64_t done = 0; done < cfg.samples;)
    {
        const auto count = static_cast<std::size_t>(std::min<std::uint64_t>(batch_size, cfg.samples - done));
        envs.resize(std::max<std::size_t>(n, 1) * count);
        for (std::size_t k = 0; k < count; ++k)
        {
            const auto index = done + k;
            for (std::size_t i = 0; i < n; ++i)
            {
                const bool corner = index < 64;
                const auto* previous = i > 0 ? &envs[(i - 1) * count + k] : nullptr;
                envs[i * count + k] = corner ? corners[(index + i * 3) % corners.size()]
                                             : draw(previous);
            }
        }
        if (const auto hit = first_difference(a, b, envs, count, 32, ra, rb))
        {
            auto v = rejected(Method::reduced_width, column(envs, n, count, *hit),
                "sampled counterexample");
            v.solver_failed = solver_failed;
            return v;
        }
        done += count;
    }

    Verdict v;
    v.tier = Tier::probable;
    v.method = Method::reduced_width;
    v.solver_failed = solver_failed;
    v.note = std::move(note);
    return v;
}
}  // namespace crow
