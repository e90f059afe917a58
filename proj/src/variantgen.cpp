// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/variantgen.hpp"

#include "crow/metrics.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <limits>
#include <random>
#include <set>

namespace crow
{
namespace
{
bool beats(const PureBlock& a, const PureBlock& b)
{
    const auto na = a.node_count();
    const auto nb = b.node_count();
    if (na != nb)
        return na > nb;
    return a.root_site < b.root_site;
}

const PureBlock& find_block(const std::vector<PureBlock>& blocks, std::uint32_t id)
{
    if (id < blocks.size() && blocks[id].id == id)
        return blocks[id];
    for (const auto& b : blocks)
    {
        if (b.id == id)
            return b;
    }
    throw std::invalid_argument{"unknown block id " + std::to_string(id)};
}
}  // namespace

ReplacementSet resolve_overlaps(const std::vector<PureBlock>& blocks,
    const std::map<std::uint32_t, std::vector<Replacement>>& replacements)
{
    std::vector<const PureBlock*> contenders;
    for (const auto& [id, list] : replacements)
    {
        if (!list.empty())
            contenders.push_back(&find_block(blocks, id));
    }
    ReplacementSet out;
    for (const auto* a : contenders)
    {
        bool retained = true;
        for (const auto* b : contenders)
        {
            if (a != b && blocks_overlap(*a, *b) && !beats(*a, *b))
            {
                retained = false;
                break;
            }
        }
        if (retained)
            out.blocks.emplace(a->id, replacements.at(a->id));
    }
    return out;
}

std::uint64_t combination_count(const ReplacementSet& s)
{
    constexpr auto max = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t product = 1;
    for (const auto& [id, list] : s.blocks)
    {
        const std::uint64_t radix = list.size() + 1;
        if (product > max / radix)
            return max;
        product *= radix;
    }
    return product - 1;
}

Combinations enumerate_combinations(const ReplacementSet& s, std::size_t limit, std::uint64_t seed)
{
    Combinations out;
    out.total = combination_count(s);
    std::vector<std::uint32_t> ids;
    std::vector<std::size_t> radix;
    for (const auto& [id, list] : s.blocks)
    {
        ids.push_back(id);
        radix.push_back(list.size() + 1);
    }
    const auto to_plan = [&](const std::vector<std::size_t>& digits) {
        VariantPlan p;
        for (std::size_t i = 0; i < ids.size(); ++i)
        {
            if (digits[i] > 0)
                p.choice.emplace(ids[i], digits[i] - 1);
        }
        return p;
    };

    if (out.total <= limit)
    {
        std::vector<std::size_t> digits(ids.size(), 0);
        for (std::uint64_t k = 0; k < out.total; ++k)
        {
            // Increment the mixed-radix counter, last block least significant.
            for (std::size_t i = ids.size(); i-- > 0;)
            {
                if (++digits[i] < radix[i])
                    break;
                digits[i] = 0;
            }
            out.plans.push_back(to_plan(digits));
        }
        return out;
    }

    out.truncated = true;
    std::mt19937_64 rng{seed ^ 0xa0761d6478bd642full};
    std::set<std::vector<std::size_t>> chosen;
    while (chosen.size() < limit)
    {
        std::vector<std::size_t> digits(ids.size());
        bool any = false;
        for (std::size_t i = 0; i < ids.size(); ++i)
        {
            digits[i] = std::uniform_int_distribution<std::size_t>{0, radix[i] - 1}(rng);
            any = any || digits[i] != 0;
        }
        if (any)
            chosen.insert(std::move(digits));
    }
    for (const auto& digits : chosen)
        out.plans.push_back(to_plan(digits));
    return out;
}

namespace
{
struct Chosen
{
    const PureBlock* block;
    const Dag* candidate;
};

/// Re-emits one region with chosen roots replaced by their candidates.
class RegionEmitter
{
public:
    RegionEmitter(const Module& m, const Region& r, const std::map<std::uint32_t, Chosen>& roots,
        std::uint32_t& temp_counter)
      : m_module{m}, m_func{m.functions.at(r.function)}, m_region{r}, m_roots{roots},
        m_temps{temp_counter}
    {}

    std::vector<Instr> run()
    {
        prepare();
        for (auto pc = m_region.begin; pc < m_region.end; ++pc)
            replay(pc);
        flush();
        return std::move(m_out);
    }

private:
    struct Entry
    {
        bool deferred = false;
        std::vector<Instr> code;
    };

    std::uint32_t new_temp() { return m_func.local_count() + m_temps++; }

    void prepare()
    {
        bool spill = false;
        std::set<std::uint32_t> saved_locals;
        for (const auto& [site, c] : m_roots)
        {
            for (std::uint32_t k = 0; k < c.block->inputs.size(); ++k)
            {
                if (!c.candidate->uses_input(k))
                    continue;
                const auto& origin = c.block->inputs[k];
                switch (origin.kind)
                {
                case InputKind::entry_stack:
                    spill = true;
                    break;
                case InputKind::param:
                case InputKind::local:
                    if (written_before(origin.index, site))
                        saved_locals.insert(origin.index);
                    break;
                default:
                    if (!m_tee.contains(origin.site))
                        m_tee.emplace(origin.site, new_temp());
                    break;
                }
            }
        }
        if (spill)
        {
            for (std::uint32_t d = 0; d < m_region.entry_arity; ++d)
            {
                const auto t = new_temp();
                m_spill.push_back(t);
                m_out.push_back(make_instr(Opcode::local_set, t));
            }
            for (auto d = m_region.entry_arity; d-- > 0;)
                m_stack.push_back(Entry{true, {make_instr(Opcode::local_get, m_spill[d])}});
        }
        for (const auto idx : saved_locals)
        {
            const auto t = new_temp();
            m_saved.emplace(idx, t);
            m_out.push_back(make_instr(Opcode::local_get, idx));
            m_out.push_back(make_instr(Opcode::local_set, t));
        }
    }

    bool written_before(std::uint32_t local, std::uint32_t site) const
    {
        for (auto pc = m_region.begin; pc < site; ++pc)
        {
            const auto& instr = m_func.body[pc];
            if ((instr.op == Opcode::local_set || instr.op == Opcode::local_tee) &&
                instr.imm == local)
                return true;
        }
        return false;
    }

    Instr load_input(const PureBlock& b, std::uint32_t k) const
    {
        const auto& origin = b.inputs.at(k);
        switch (origin.kind)
        {
        case InputKind::param:
        case InputKind::local:
            if (const auto it = m_saved.find(origin.index); it != m_saved.end())
                return make_instr(Opcode::local_get, it->second);
            return make_instr(Opcode::local_get, origin.index);
        case InputKind::entry_stack:
            return make_instr(Opcode::local_get, m_spill.at(origin.index));
        default:
            return make_instr(Opcode::local_get, m_tee.at(origin.site));
        }
    }

    Entry pop()
    {
        if (m_stack.empty())
            return Entry{false, {}};
        auto e = std::move(m_stack.back());
        m_stack.pop_back();
        return e;
    }

    std::vector<Entry> pop_n(std::size_t n)
    {
        std::vector<Entry> out(n);
        for (std::size_t k = n; k-- > 0;)
            out[k] = pop();
        return out;
    }

    void flush()
    {
        for (auto& e : m_stack)
        {
            if (e.deferred)
            {
                m_out.insert(m_out.end(), e.code.begin(), e.code.end());
                e.deferred = false;
                e.code.clear();
            }
        }
    }

    void replay(std::uint32_t pc)
    {
        const auto& instr = m_func.body[pc];
        const auto op = instr.op;

        if (const auto it = m_roots.find(pc); it != m_roots.end())
        {
            const auto operands = pop_n(op == Opcode::i32_const ? 0 : info(op).pops);
            for (const auto& e : operands)
            {
                if (!e.deferred)
                    m_out.push_back(make_instr(Opcode::drop));
            }
            const auto& b = *it->second.block;
            m_stack.push_back(Entry{true,
                it->second.candidate->emit([&](std::uint32_t k) { return load_input(b, k); })});
            return;
        }

        if (op == Opcode::i32_const || op == Opcode::local_get)
        {
            m_stack.push_back(Entry{true, {instr}});
            return;
        }

        if (is_pure_op(op))
        {
            auto operands = pop_n(info(op).pops);
            const bool all_deferred = std::all_of(
                operands.begin(), operands.end(), [](const Entry& e) { return e.deferred; });
            std::vector<Instr> code;
            for (const auto& e : operands)
                code.insert(code.end(), e.code.begin(), e.code.end());
            code.push_back(instr);
            if (all_deferred)
                m_stack.push_back(Entry{true, std::move(code)});
            else
            {
                m_out.insert(m_out.end(), code.begin(), code.end());
                m_stack.push_back(Entry{false, {}});
            }
            return;
        }

        flush();
        m_out.push_back(instr);
        std::size_t pops = info(op).pops;
        std::size_t pushes = info(op).pushes;
        if (op == Opcode::call)
        {
            const auto& callee = m_module.functions.at(static_cast<std::size_t>(instr.imm));
            pops = callee.params;
            pushes = callee.results;
        }
        pop_n(pops);
        for (std::size_t k = 0; k < pushes; ++k)
            m_stack.push_back(Entry{false, {}});
        if (const auto it = m_tee.find(pc); it != m_tee.end())
            m_out.push_back(make_instr(Opcode::local_tee, it->second));
    }

    const Module& m_module;
    const FuncDef& m_func;
    const Region& m_region;
    const std::map<std::uint32_t, Chosen>& m_roots;
    std::uint32_t& m_temps;
    std::vector<Entry> m_stack;
    std::vector<Instr> m_out;
    std::map<std::uint32_t, std::uint32_t> m_tee;    // site -> temp
    std::map<std::uint32_t, std::uint32_t> m_saved;  // local -> temp
    std::vector<std::uint32_t> m_spill;              // entry depth -> temp
};
}  // namespace

Module apply_plan(const Module& m, const std::vector<PureBlock>& blocks, const ReplacementSet& s,
    const VariantPlan& plan)
{
    if (plan.choice.empty())
        throw std::invalid_argument{"variant plan chooses no replacement"};

    // function -> root site -> chosen candidate
    std::map<std::uint32_t, std::map<std::uint32_t, Chosen>> by_function;
    for (const auto& [id, index] : plan.choice)
    {
        const auto it = s.blocks.find(id);
        if (it == s.blocks.end() || index >= it->second.size())
            throw std::invalid_argument{"plan refers to a missing replacement of block " +
                                        std::to_string(id)};
        const auto& b = find_block(blocks, id);
        auto [pos, fresh] =
            by_function[b.function].emplace(b.root_site, Chosen{&b, &it->second[index].candidate.dag});
        if (!fresh)
            throw std::invalid_argument{"plan chooses two blocks with the same root"};
    }

    Module out = m;
    for (const auto& [fi, roots] : by_function)
    {
        const auto& f = m.functions.at(fi);
        std::uint32_t temps = 0;
        std::vector<Instr> body;
        std::uint32_t pc = 0;
        for (const auto& r : build_regions(m, fi))
        {
            const auto first = roots.lower_bound(r.begin);
            if (first == roots.end() || first->first >= r.end)
                continue;
            std::map<std::uint32_t, Chosen> inside{first, roots.lower_bound(r.end)};
            body.insert(body.end(), f.body.begin() + pc, f.body.begin() + r.begin);
            RegionEmitter emitter{m, r, inside, temps};
            const auto code = emitter.run();
            body.insert(body.end(), code.begin(), code.end());
            pc = r.end;
        }
        body.insert(body.end(), f.body.begin() + pc, f.body.end());
        out.functions[fi].body = std::move(body);
        out.functions[fi].locals += temps;
    }

    const auto diagnostics = validate(out);
    if (!diagnostics.empty())
        throw emission_error{"emitted variant is invalid: " + to_string(diagnostics.front())};
    return out;
}

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error{"SHA-256 computation failed"};
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i)
    {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

Variant make_variant(Module m, VariantPlan plan)
{
    Variant v;
    v.text = print_module(m);
    v.digest = sha256_hex(v.text);
    v.module = std::move(m);
    v.plan = std::move(plan);
    return v;
}

std::vector<Variant> dedup_variants(std::vector<Variant> variants)
{
    std::set<std::string> seen;
    std::vector<Variant> out;
    for (auto& v : variants)
    {
        if (seen.insert(v.text).second)
            out.push_back(std::move(v));
    }
    return out;
}

Combinations rank_by_diff(const Module& m, const std::vector<PureBlock>& blocks,
    const ReplacementSet& s, std::size_t limit, std::uint64_t seed, std::size_t pool)
{
    auto candidates = enumerate_combinations(s, std::max(pool, limit), seed);
    const auto original = tokenize(m);
    std::vector<std::pair<std::uint64_t, std::size_t>> scored;
    for (std::size_t i = 0; i < candidates.plans.size(); ++i)
    {
        const auto variant = apply_plan(m, blocks, s, candidates.plans[i]);
        scored.emplace_back(dtw(original, tokenize(variant)).cost, i);
    }
    std::stable_sort(scored.begin(), scored.end(),
        [](const auto& a, const auto& b) { return a.first > b.first; });
    Combinations out;
    out.total = candidates.total;
    out.truncated = candidates.total > limit;
    for (std::size_t k = 0; k < scored.size() && k < limit; ++k)
        out.plans.push_back(candidates.plans[scored[k].second]);
    return out;
}
}  // namespace crow
