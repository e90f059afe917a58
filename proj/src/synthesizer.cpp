// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/synthesizer.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <exception>
#include <random>
#include <set>
#include <thread>

#include <time.h>

namespace crow
{
namespace
{
constexpr std::array<Opcode, 23> vocabulary_order{
    Opcode::i32_add,
    Opcode::i32_sub,
    Opcode::i32_mul,
    Opcode::i32_and,
    Opcode::i32_or,
    Opcode::i32_xor,
    Opcode::i32_shl,
    Opcode::i32_shr_s,
    Opcode::i32_shr_u,
    Opcode::i32_rotl,
    Opcode::i32_rotr,
    Opcode::i32_eq,
    Opcode::i32_ne,
    Opcode::i32_lt_s,
    Opcode::i32_lt_u,
    Opcode::i32_gt_s,
    Opcode::i32_gt_u,
    Opcode::i32_le_s,
    Opcode::i32_le_u,
    Opcode::i32_ge_s,
    Opcode::i32_ge_u,
    Opcode::i32_eqz,
    Opcode::select,
};

std::string_view short_name(Opcode op)
{
    auto n = name(op);
    if (n.starts_with("i32."))
        n.remove_prefix(4);
    return n;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string{s.substr(b, e - b + 1)};
}
}  // namespace

Vocabulary full_vocabulary()
{
    return Vocabulary{{vocabulary_order.begin(), vocabulary_order.end()}, true};
}

Vocabulary parse_vocabulary(std::string_view csv)
{
    std::set<Opcode> chosen;
    bool constants = false;
    std::size_t start = 0;
    while (start <= csv.size())
    {
        const auto comma = std::min(csv.find(',', start), csv.size());
        auto token = trim(csv.substr(start, comma - start));
        start = comma + 1;
        if (token.empty())
            continue;
        if (token.starts_with("i32."))
            token = token.substr(4);
        if (token == "const")
        {
            constants = true;
            continue;
        }
        const auto op = opcode_from_name("i32." + token);
        const auto resolved = op ? op : opcode_from_name(token);
        if (!resolved)
            throw config_error{"unknown vocabulary entry '" + token + "'"};
        if (std::find(vocabulary_order.begin(), vocabulary_order.end(), *resolved) ==
            vocabulary_order.end())
            throw config_error{"vocabulary entry '" + token + "' is not a pure non-trapping operator"};
        chosen.insert(*resolved);
    }
    Vocabulary v;
    v.constants = constants;
    for (const auto op : vocabulary_order)
    {
        if (chosen.contains(op))
            v.ops.push_back(op);
    }
    if (v.empty())
        throw config_error{"vocabulary is empty"};
    return v;
}

std::string to_string(const Vocabulary& v)
{
    std::string out;
    for (const auto op : v.ops)
    {
        if (!out.empty())
            out += ',';
        out += short_name(op);
    }
    if (v.constants)
        out += out.empty() ? "const" : ",const";
    return out;
}

void validate(const SynthesisConfig& cfg)
{
    if (cfg.max_size < 1 || cfg.max_size > max_size_cap)
        throw config_error{"max size must lie in 1.." + std::to_string(max_size_cap)};
    if (cfg.vocabulary.empty())
        throw config_error{"vocabulary is empty"};
    for (const auto op : cfg.vocabulary.ops)
    {
        if (std::find(vocabulary_order.begin(), vocabulary_order.end(), op) == vocabulary_order.end())
            throw config_error{"vocabulary contains " + std::string{name(op)}};
    }
    if (cfg.random_vectors < 1)
        throw config_error{"prefilter vector count must be at least 1"};
    if (!(cfg.time_budget_secs > 0))
        throw config_error{"time budget must be positive"};
    if (cfg.max_candidates < 1)
        throw config_error{"candidate cap must be at least 1"};
    if (cfg.max_replacements < 1)
        throw config_error{"replacement cap must be at least 1"};
}

std::vector<std::int32_t> constant_pool(const PureBlock& b, const SynthesisConfig& cfg)
{
    std::set<std::int32_t> pool;
    if (cfg.pool)
        pool.insert(cfg.pool->begin(), cfg.pool->end());
    else
    {
        pool = {0, 1, 2, -1};
        for (const auto v : b.immediates())
        {
            const auto u = static_cast<std::uint32_t>(v);
            pool.insert(v);
            pool.insert(static_cast<std::int32_t>(u + 1));
            pool.insert(static_cast<std::int32_t>(u - 1));
            pool.insert(static_cast<std::int32_t>(0u - u));
        }
    }
    return {pool.begin(), pool.end()};
}

std::vector<std::vector<std::uint32_t>> prefilter_vectors(
    std::size_t input_count, const SynthesisConfig& cfg)
{
    static constexpr std::array<std::uint32_t, 7> corners{
        0u, 1u, 0xffffffffu, 2u, 10u, 0x7fffffffu, 0x80000000u};
    std::vector<std::vector<std::uint32_t>> out;
    if (input_count == 0)
    {
        out.emplace_back();
        return out;
    }
    // Corner combinations in mixed-radix order, last input varying fastest.
    std::uint64_t combinations = 1;
    for (std::size_t i = 0; i < input_count && combinations < cfg.corner_cap; ++i)
        combinations *= corners.size();
    combinations = std::min<std::uint64_t>(combinations, cfg.corner_cap);
    for (std::uint64_t k = 0; k < combinations; ++k)
    {
        std::vector<std::uint32_t> v(input_count, corners[0]);
        auto rem = k;
        for (std::size_t i = input_count; i-- > 0 && rem > 0;)
        {
            v[i] = corners[rem % corners.size()];
            rem /= corners.size();
        }
        out.push_back(std::move(v));
    }
    std::mt19937_64 rng{cfg.seed * 0x2545f4914f6cdd1dull + 0x632be59bd9b4e019ull};
    for (unsigned k = 0; k < cfg.random_vectors; ++k)
    {
        std::vector<std::uint32_t> v(input_count);
        for (auto& x : v)
            x = static_cast<std::uint32_t>(rng());
        out.push_back(std::move(v));
    }
    return out;
}

namespace
{
constexpr std::size_t probe_count = 4;
using Probe = std::array<std::uint32_t, probe_count>;

/// Non-owning callable reference used for the recursive enumeration.
template <typename Sig>
class FunctionRef;

template <typename R, typename... Args>
class FunctionRef<R(Args...)>
{
public:
    template <typename F>
    FunctionRef(F& f) noexcept  // NOLINT(google-explicit-constructor)
      : m_obj{&f}, m_call{[](void* o, Args... a) -> R { return (*static_cast<F*>(o))(a...); }}
    {}

    R operator()(Args... a) const { return m_call(m_obj, a...); }

private:
    void* m_obj;
    R (*m_call)(void*, Args...);
};

/// A term in postfix form: leaf tokens 0..L-1, then operator tokens L + vocabulary index.
struct Term
{
    const std::uint16_t* code;
    std::size_t length;
    const Probe* probe;
};

using TermVisitor = FunctionRef<bool(const Term&)>;

class Enumerator
{
public:
    Enumerator(std::size_t input_count, std::vector<std::int32_t> pool, std::vector<Opcode> ops,
        const std::vector<std::vector<std::uint32_t>>& probes)
      : m_inputs{input_count}, m_pool{std::move(pool)}, m_ops{std::move(ops)}
    {
        m_leaf_count = m_inputs + m_pool.size();
        for (std::size_t t = 0; t < m_leaf_count; ++t)
        {
            Probe p{};
            for (std::size_t k = 0; k < probe_count; ++k)
                p[k] = t < m_inputs ? probes[k][t]
                                    : static_cast<std::uint32_t>(m_pool[t - m_inputs]);
            m_leaf_probes.push_back(p);
            m_leaf_codes.push_back(static_cast<std::uint16_t>(t));
        }
        build_level_one();
    }

    /// Visits the bare input leaves, then every term of 1..max_size operators.
    bool generate_all(unsigned max_size, TermVisitor visit) const
    {
        for (std::size_t t = 0; t < m_inputs; ++t)
        {
            if (!visit(Term{&m_leaf_codes[t], 1, &m_leaf_probes[t]}))
                return false;
        }
        for (unsigned k = 1; k <= max_size; ++k)
        {
            if (!generate(k, visit))
                return false;
        }
        return true;
    }

    /// Visits every term with exactly `size` operators; false from the visitor stops.
    bool generate(unsigned size, TermVisitor visit) const
    {
        if (size == 0)
        {
            for (std::size_t t = 0; t < m_leaf_count; ++t)
            {
                if (!visit(Term{&m_leaf_codes[t], 1, &m_leaf_probes[t]}))
                    return false;
            }
            return true;
        }
        if (size == 1)
        {
            for (std::size_t t = 0; t < m_one_probes.size(); ++t)
            {
                const auto begin = m_one_offsets[t];
                const auto end = m_one_offsets[t + 1];
                if (!visit(Term{m_one_codes.data() + begin, end - begin, &m_one_probes[t]}))
                    return false;
            }
            return true;
        }

        std::vector<std::uint16_t> buf;
        buf.reserve(3 * size + 1);
        Probe probe{};
        for (std::size_t oi = 0; oi < m_ops.size(); ++oi)
        {
            const auto op = m_ops[oi];
            const auto token = static_cast<std::uint16_t>(m_leaf_count + oi);
            const auto rest = size - 1;
            switch (info(op).pops)
            {
            case 1:
            {
                auto on_a = [&](const Term& a) {
                    buf.assign(a.code, a.code + a.length);
                    buf.push_back(token);
                    for (std::size_t k = 0; k < probe_count; ++k)
                        probe[k] = apply_op(op, (*a.probe)[k], 0, 0, 32);
                    return visit(Term{buf.data(), buf.size(), &probe});
                };
                if (!generate(rest, TermVisitor{on_a}))
                    return false;
                break;
            }
            case 2:
            {
                for (unsigned sa = 0; sa <= rest; ++sa)
                {
                    const auto sb = rest - sa;
                    auto on_a = [&](const Term& a) {
                        auto on_b = [&](const Term& b) {
                            buf.assign(a.code, a.code + a.length);
                            buf.insert(buf.end(), b.code, b.code + b.length);
                            buf.push_back(token);
                            for (std::size_t k = 0; k < probe_count; ++k)
                                probe[k] = apply_op(op, (*a.probe)[k], (*b.probe)[k], 0, 32);
                            return visit(Term{buf.data(), buf.size(), &probe});
                        };
                        return generate(sb, TermVisitor{on_b});
                    };
                    if (!generate(sa, TermVisitor{on_a}))
                        return false;
                }
                break;
            }
            case 3:
            {
                for (unsigned sa = 0; sa <= rest; ++sa)
                {
                    for (unsigned sb = 0; sb <= rest - sa; ++sb)
                    {
                        const auto sc = rest - sa - sb;
                        auto on_a = [&](const Term& a) {
                            auto on_b = [&](const Term& b) {
                                auto on_c = [&](const Term& c) {
                                    buf.assign(a.code, a.code + a.length);
                                    buf.insert(buf.end(), b.code, b.code + b.length);
                                    buf.insert(buf.end(), c.code, c.code + c.length);
                                    buf.push_back(token);
                                    for (std::size_t k = 0; k < probe_count; ++k)
                                        probe[k] = apply_op(op, (*a.probe)[k], (*b.probe)[k],
                                            (*c.probe)[k], 32);
                                    return visit(Term{buf.data(), buf.size(), &probe});
                                };
                                return generate(sc, TermVisitor{on_c});
                            };
                            return generate(sb, TermVisitor{on_b});
                        };
                        if (!generate(sa, TermVisitor{on_a}))
                            return false;
                    }
                }
                break;
            }
            default:
                break;
            }
        }
        return true;
    }

    Candidate to_candidate(const Term& t, std::uint64_t index) const
    {
        Candidate c;
        c.index = index;
        std::vector<NodeId> stack;
        std::vector<std::optional<NodeId>> input_nodes(m_inputs);
        for (std::size_t i = 0; i < t.length; ++i)
        {
            const auto token = t.code[i];
            if (token < m_inputs)
            {
                if (!input_nodes[token])
                    input_nodes[token] = c.dag.add_input(token);
                stack.push_back(*input_nodes[token]);
            }
            else if (token < m_leaf_count)
                stack.push_back(c.dag.add_constant(m_pool[token - m_inputs]));
            else
            {
                const auto op = m_ops[token - m_leaf_count];
                const auto arity = info(op).pops;
                std::array<NodeId, 3> operands{};
                for (std::size_t k = arity; k-- > 0;)
                {
                    operands[k] = stack.back();
                    stack.pop_back();
                }
                stack.push_back(c.dag.add_op(op, std::span{operands.data(), arity}));
            }
        }
        c.dag.root = stack.back();
        return c;
    }

private:
    void build_level_one()
    {
        m_one_offsets.push_back(0);
        for (std::size_t oi = 0; oi < m_ops.size(); ++oi)
        {
            const auto op = m_ops[oi];
            const auto token = static_cast<std::uint16_t>(m_leaf_count + oi);
            const auto arity = info(op).pops;
            std::array<std::size_t, 3> leaf{};
            const auto total = static_cast<std::size_t>(
                arity == 1 ? m_leaf_count
                           : arity == 2 ? m_leaf_count * m_leaf_count
                                        : m_leaf_count * m_leaf_count * m_leaf_count);
            for (std::size_t n = 0; n < total; ++n)
            {
                auto rem = n;
                for (std::size_t k = arity; k-- > 0;)
                {
                    leaf[k] = rem % m_leaf_count;
                    rem /= m_leaf_count;
                }
                Probe p{};
                for (std::size_t k = 0; k < probe_count; ++k)
                    p[k] = apply_op(op, m_leaf_probes[leaf[0]][k],
                        arity > 1 ? m_leaf_probes[leaf[1]][k] : 0,
                        arity > 2 ? m_leaf_probes[leaf[2]][k] : 0, 32);
                for (std::size_t k = 0; k < arity; ++k)
                    m_one_codes.push_back(static_cast<std::uint16_t>(leaf[k]));
                m_one_codes.push_back(token);
                m_one_offsets.push_back(m_one_codes.size());
                m_one_probes.push_back(p);
            }
        }
    }

    std::size_t m_inputs;
    std::vector<std::int32_t> m_pool;
    std::vector<Opcode> m_ops;
    std::size_t m_leaf_count = 0;
    std::vector<Probe> m_leaf_probes;
    std::vector<std::uint16_t> m_leaf_codes;
    std::vector<std::uint16_t> m_one_codes;
    std::vector<std::size_t> m_one_offsets;
    std::vector<Probe> m_one_probes;
};

/// Probe environments: random vectors first, then corners, cycling if fewer than four.
std::vector<std::vector<std::uint32_t>> pick_probes(
    const std::vector<std::vector<std::uint32_t>>& vectors, std::size_t random_count)
{
    std::vector<std::vector<std::uint32_t>> probes;
    const auto first_random = vectors.size() - std::min(random_count, vectors.size());
    for (std::size_t k = 0; k < probe_count; ++k)
    {
        const auto idx = first_random + k < vectors.size() ? first_random + k : k % vectors.size();
        probes.push_back(vectors[idx]);
    }
    return probes;
}

std::vector<std::uint32_t> input_major(
    const std::vector<std::vector<std::uint32_t>>& vectors, std::size_t inputs)
{
    const auto count = vectors.size();
    std::vector<std::uint32_t> envs(std::max<std::size_t>(inputs, 1) * count, 0);
    for (std::size_t k = 0; k < count; ++k)
    {
        for (std::size_t i = 0; i < inputs; ++i)
            envs[i * count + k] = vectors[k][i];
    }
    return envs;
}

bool same_code(const Dag& a, const Dag& b)
{
    return a.key() == b.key() || a.emit() == b.emit();
}
}  // namespace

std::uint64_t enumerate_candidates(const PureBlock& b, const SynthesisConfig& cfg,
    const std::function<bool(const Candidate&)>& visit)
{
    validate(cfg);
    const auto inputs = b.inputs.size();
    const auto vectors = prefilter_vectors(inputs, cfg);
    const Enumerator e{inputs, constant_pool(b, cfg), cfg.vocabulary.ops,
        pick_probes(vectors, cfg.random_vectors)};
    const auto own_key = b.dag.key();
    std::uint64_t index = 0;
    auto on_term = [&](const Term& t) {
        const auto c = e.to_candidate(t, index++);
        if (c.dag.key() == own_key)
            return true;
        return visit(c);
    };
    e.generate_all(cfg.max_size, TermVisitor{on_term});
    return index;
}

std::vector<Candidate> enumerate_candidates(
    const PureBlock& b, const SynthesisConfig& cfg, std::size_t limit)
{
    std::vector<Candidate> out;
    if (limit == 0)
        return out;
    enumerate_candidates(b, cfg, [&](const Candidate& c) {
        out.push_back(c);
        return out.size() < limit;
    });
    return out;
}

std::optional<Candidate> infer_constant(const PureBlock& b, const SynthesisConfig& cfg)
{
    if (!cfg.vocabulary.constants)
        return std::nullopt;
    const auto vectors = prefilter_vectors(b.inputs.size(), cfg);
    const auto first = eval_dag(b.dag, vectors.front());
    for (const auto& v : vectors)
    {
        if (eval_dag(b.dag, v) != first)
            return std::nullopt;
    }
    Candidate c;
    c.index = Candidate::no_index;
    c.dag.root = c.dag.add_constant(static_cast<std::int32_t>(first));
    return c;
}

bool prefilter(const PureBlock& b, const Candidate& c,
    const std::vector<std::vector<std::uint32_t>>& vectors)
{
    for (const auto& v : vectors)
    {
        if (eval_dag(b.dag, v) != eval_dag(c.dag, v))
            return false;
    }
    return true;
}

Verdict check(const PureBlock& b, const Candidate& c, const CheckerConfig& cfg)
{
    return check(EquivalenceQuery{b.dag, c.dag, b.inputs.size()}, cfg);
}

namespace
{
double thread_cpu_seconds() noexcept
{
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}
}  // namespace

BlockSynthesis synthesize_replacements(
    const PureBlock& b, const SynthesisConfig& cfg, const CheckerConfig& checker)
{
    validate(cfg);
    validate(checker);
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    const auto deadline = thread_cpu_seconds() + cfg.time_budget_secs;

    BlockSynthesis out;
    out.block_id = b.id;
    if (b.node_count() > cfg.max_block_nodes)
    {
        out.skipped = true;
        return out;
    }
    if (checker.mode == CheckerMode::exhaustive_only && !can_verify(b.inputs.size(), checker))
    {
        out.unverifiable = true;
        return out;
    }

    const auto inputs = b.inputs.size();
    const auto vectors = prefilter_vectors(inputs, cfg);
    const auto envs = input_major(vectors, inputs);
    const CompiledDag original{b.dag};
    std::vector<std::uint32_t> expected(vectors.size());
    original.eval_batch(envs, vectors.size(), 32, expected);
    std::vector<std::uint32_t> got(vectors.size());

    const auto consider = [&](const Candidate& c) {
        if (same_code(c.dag, b.dag))
            return;
        CompiledDag compiled{c.dag};
        compiled.eval_batch(envs, vectors.size(), 32, got);
        if (got != expected)
            return;
        ++out.prefilter_passed;
        const auto verdict = check(b, c, checker);
        const bool usable = verdict.tier == Tier::verified ||
                            (verdict.tier == Tier::probable && checker.mode != CheckerMode::exhaustive_only);
        if (!usable)
        {
            ++out.rejected;
            return;
        }
        Replacement r;
        r.block_id = b.id;
        r.candidate = c;
        r.tier = verdict.tier;
        r.method = verdict.method;
        r.emitted_length = c.dag.emit().size();
        out.replacements.push_back(std::move(r));
    };

    if (auto c = infer_constant(b, cfg))
        consider(*c);

    const auto probes = pick_probes(vectors, cfg.random_vectors);
    Probe target{};
    for (std::size_t k = 0; k < probe_count; ++k)
        target[k] = eval_dag(b.dag, probes[k]);

    const Enumerator e{inputs, constant_pool(b, cfg), cfg.vocabulary.ops, probes};
    std::uint64_t index = 0;
    auto on_term = [&](const Term& t) {
        if (index >= cfg.max_candidates || out.replacements.size() >= cfg.max_replacements)
        {
            out.candidate_cap_hit = true;
            return false;
        }
        if ((index & 0xfff) == 0 && thread_cpu_seconds() > deadline)
        {
            out.time_budget_hit = true;
            return false;
        }
        const auto current = index++;
        if (*t.probe != target)
            return true;
        consider(e.to_candidate(t, current));
        return true;
    };
    e.generate_all(cfg.max_size, TermVisitor{on_term});
    out.enumerated = index;
    out.seconds = std::chrono::duration<double>(clock::now() - started).count();
    return out;
}

std::vector<BlockSynthesis> synthesize_all(const std::vector<PureBlock>& blocks,
    const SynthesisConfig& cfg, const CheckerConfig& checker, unsigned jobs)
{
    validate(cfg);
    validate(checker);
    std::vector<BlockSynthesis> results(blocks.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(blocks.size());
    const auto worker = [&]() {
        for (auto i = next++; i < blocks.size(); i = next++)
        {
            try
            {
                results[i] = synthesize_replacements(blocks[i], cfg, checker);
            }
            catch (...)
            {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto rethrow = [&]() {
        for (const auto& e : errors)
        {
            if (e)
                std::rethrow_exception(e);
        }
    };
    const auto n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(blocks.size())));
    if (n <= 1)
    {
        worker();
        rethrow();
        return results;
    }
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < n; ++t)
        threads.emplace_back(worker);
    for (auto& t : threads)
        t.join();
    rethrow();
    return results;
}
}  // namespace crow
