// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "random_module.hpp"

#include "crow/opcode.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace crow::test
{
namespace
{
constexpr std::array pure_binary{Opcode::i32_add, Opcode::i32_sub, Opcode::i32_mul,
    Opcode::i32_and, Opcode::i32_or, Opcode::i32_xor, Opcode::i32_shl, Opcode::i32_shr_s,
    Opcode::i32_shr_u, Opcode::i32_rotl, Opcode::i32_rotr, Opcode::i32_eq, Opcode::i32_ne,
    Opcode::i32_lt_s, Opcode::i32_lt_u, Opcode::i32_gt_s, Opcode::i32_gt_u, Opcode::i32_le_s,
    Opcode::i32_le_u, Opcode::i32_ge_s, Opcode::i32_ge_u};

constexpr std::array<std::int32_t, 12> interesting{0, 1, 2, 3, -1, 5, 10, 31, 32, 255, -256,
    std::numeric_limits<std::int32_t>::min()};

class Generator
{
public:
    Generator(std::uint64_t seed, const RandomModuleOptions& options)
      : m_rng{seed}, m_options{options}
    {}

    Module build()
    {
        Module m;
        m.memory_pages = 1;
        m.globals.push_back(Global{true, constant()});

        FuncDef helper;
        helper.params = 1;
        helper.results = 1;
        m_locals = 1;
        m_allow_call = false;
        m_body = &helper.body;
        expr(2);
        m.functions.push_back(std::move(helper));

        FuncDef main;
        main.params = 1 + pick(3);
        main.locals = pick(3);
        main.results = 1;
        m_locals = main.local_count();
        m_allow_call = true;
        m_body = &main.body;
        if (m_options.effects)
        {
            const auto n = pick(m_options.max_statements + 1);
            for (unsigned i = 0; i < n; ++i)
                statement(true);
        }
        expr(m_options.max_depth);
        m.functions.push_back(std::move(main));
        m.exports.emplace("main", 1);
        return m;
    }

private:
    unsigned pick(unsigned n) { return std::uniform_int_distribution<unsigned>{0, n - 1}(m_rng); }

    std::int32_t constant()
    {
        if (pick(4) == 0)
            return static_cast<std::int32_t>(m_rng());
        return interesting[pick(interesting.size())];
    }

    void emit(Opcode op, std::int64_t imm = 0) { m_body->push_back(make_instr(op, imm)); }

    void statement(bool allow_if)
    {
        switch (pick(allow_if ? 4 : 3))
        {
        case 0:
            expr(m_options.max_depth);
            emit(Opcode::local_set, pick(m_locals));
            break;
        case 1:
            expr(m_options.max_depth);
            emit(Opcode::global_set, 0);
            break;
        case 2:
            address();
            expr(m_options.max_depth);
            emit(Opcode::i32_store, 4 * pick(4));
            break;
        default:
            expr(2);
            emit(Opcode::if_);
            statement(false);
            if (pick(2) == 0)
            {
                emit(Opcode::else_);
                statement(false);
            }
            emit(Opcode::end);
            break;
        }
    }

    void address()
    {
        expr(1);
        emit(Opcode::i32_const, 0xfc);
        emit(Opcode::i32_and);
    }

    void expr(unsigned depth)
    {
        const bool impure = m_options.impure_reads;
        if (depth == 0 || pick(4) == 0)
        {
            switch (pick(impure ? 4 : 2))
            {
            case 0:
                emit(Opcode::local_get, pick(m_locals));
                return;
            case 1:
                emit(Opcode::i32_const, constant());
                return;
            case 2:
                emit(Opcode::global_get, 0);
                return;
            default:
                emit(Opcode::local_get, pick(m_locals));
                emit(Opcode::i32_const, 0xfc);
                emit(Opcode::i32_and);
                emit(Opcode::i32_load, 4 * pick(4));
                return;
            }
        }
        const auto roll = pick(20);
        if (impure && roll == 0 && m_allow_call)
        {
            expr(depth - 1);
            emit(Opcode::call, 0);
        }
        else if (impure && roll == 1)
        {
            expr(depth - 1);
            expr(depth - 1);
            emit(Opcode::i32_const, 1);
            emit(Opcode::i32_or);
            static constexpr std::array div{
                Opcode::i32_div_s, Opcode::i32_div_u, Opcode::i32_rem_s, Opcode::i32_rem_u};
            emit(div[pick(div.size())]);
        }
        else if (roll == 2)
        {
            expr(depth - 1);
            emit(Opcode::i32_eqz);
        }
        else if (roll == 3)
        {
            expr(depth - 1);
            expr(depth - 1);
            expr(depth - 1);
            emit(Opcode::select);
        }
        else
        {
            expr(depth - 1);
            expr(depth - 1);
            emit(pure_binary[pick(pure_binary.size())]);
        }
    }

    std::mt19937_64 m_rng;
    RandomModuleOptions m_options;
    std::vector<Instr>* m_body = nullptr;
    std::uint32_t m_locals = 0;
    bool m_allow_call = false;
};
}  // namespace

Module random_module(std::uint64_t seed, const RandomModuleOptions& options)
{
    return Generator{seed, options}.build();
}

std::vector<std::vector<std::int32_t>> random_arguments(
    std::size_t arity, std::size_t count, std::uint64_t seed)
{
    static constexpr std::array<std::int32_t, 7> corners{0, 1, -1, 2, 10,
        std::numeric_limits<std::int32_t>::max(), std::numeric_limits<std::int32_t>::min()};
    std::mt19937_64 rng{seed};
    std::vector<std::vector<std::int32_t>> out(count, std::vector<std::int32_t>(arity));
    for (std::size_t k = 0; k < count; ++k)
    {
        for (std::size_t i = 0; i < arity; ++i)
        {
            if (k < corners.size())
                out[k][i] = corners[(k + i) % corners.size()];
            else if (k % 3 == 0)
                out[k][i] = static_cast<std::int32_t>(rng() % 64) - 32;
            else
                out[k][i] = static_cast<std::int32_t>(rng());
        }
    }
    return out;
}

std::string corpus_path(const std::string& name)
{
    return std::string{CROW_CORPUS_DIR} + "/" + name + ".wat";
}

std::string read_file(const std::string& path)
{
    std::ifstream in{path, std::ios::binary};
    if (!in)
        throw std::runtime_error{"cannot open " + path};
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Module load_corpus(const std::string& name)
{
    return parse_module(read_file(corpus_path(name)));
}

std::vector<std::string> corpus_names()
{
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator{CROW_CORPUS_DIR})
    {
        if (entry.path().extension() == ".wat")
            names.push_back(entry.path().stem().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}
}  // namespace crow::test
