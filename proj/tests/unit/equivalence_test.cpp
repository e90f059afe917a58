// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/equivalence.hpp"
#include <gtest/gtest.h>
#include <random>

using namespace crow;

namespace
{
/// Reference semantics written with 64-bit arithmetic on the mathematical values.
std::uint32_t reference(Opcode op, std::uint32_t a, std::uint32_t b, std::uint32_t c, unsigned w)
{
    const std::uint64_t mod = std::uint64_t{1} << w;
    const auto ua = static_cast<std::int64_t>(a % mod);
    const auto ub = static_cast<std::int64_t>(b % mod);
    const auto sa = ua >= static_cast<std::int64_t>(mod / 2) ? ua - static_cast<std::int64_t>(mod) : ua;
    const auto sb = ub >= static_cast<std::int64_t>(mod / 2) ? ub - static_cast<std::int64_t>(mod) : ub;
    const auto wrap = [&](std::int64_t v) {
        const auto m = static_cast<std::int64_t>(mod);
        return static_cast<std::uint32_t>(((v % m) + m) % m);
    };
    const auto k = ub % w;
    switch (op)
    {
    case Opcode::i32_add: return wrap(ua + ub);
    case Opcode::i32_sub: return wrap(ua - ub);
    case Opcode::i32_mul: return wrap(static_cast<std::int64_t>((static_cast<unsigned __int128>(ua) * ub) % mod));
    case Opcode::i32_and: return wrap(ua & ub);
    case Opcode::i32_or: return wrap(ua | ub);
    case Opcode::i32_xor: return wrap(ua ^ ub);
    case Opcode::i32_shl: return wrap(ua * (std::int64_t{1} << k));
    case Opcode::i32_shr_u: return wrap(ua / (std::int64_t{1} << k));
    case Opcode::i32_shr_s:
    {
        // Floor division by a power of two.
        const auto d = std::int64_t{1} << k;
        auto q = sa / d;
        if (sa % d != 0 && sa < 0)
            --q;
        return wrap(q);
    }
    case Opcode::i32_rotl: return wrap(ua * (std::int64_t{1} << k) + ua / (std::int64_t{1} << ((w - k) % w)) * (k != 0));
    case Opcode::i32_rotr: return wrap(ua / (std::int64_t{1} << k) + (k != 0) * ua * (std::int64_t{1} << ((w - k) % w)));
    case Opcode::i32_eq: return ua == ub;
    case Opcode::i32_ne: return ua != ub;
    case Opcode::i32_lt_s: return sa < sb;
    case Opcode::i32_lt_u: return ua < ub;
    case Opcode::i32_gt_s: return sa > sb;
    case Opcode::i32_gt_u: return ua > ub;
    case Opcode::i32_le_s: return sa <= sb;
    case Opcode::i32_le_u: return ua <= ub;
    case Opcode::i32_ge_s: return sa >= sb;
    case Opcode::i32_ge_u: return ua >= ub;
    case Opcode::i32_eqz: return ua == 0;
    case Opcode::select: return wrap(c % mod != 0 ? ua : ub);
    default: ADD_FAILURE() << "unexpected op"; return 0;
    }
}

const std::vector<Opcode> pure_ops{Opcode::i32_add, Opcode::i32_sub, Opcode::i32_mul,
    Opcode::i32_and, Opcode::i32_or, Opcode::i32_xor, Opcode::i32_shl, Opcode::i32_shr_s,
    Opcode::i32_shr_u, Opcode::i32_rotl, Opcode::i32_rotr, Opcode::i32_eq, Opcode::i32_ne,
    Opcode::i32_lt_s, Opcode::i32_lt_u, Opcode::i32_gt_s, Opcode::i32_gt_u, Opcode::i32_le_s,
    Opcode::i32_le_u, Opcode::i32_ge_s, Opcode::i32_ge_u, Opcode::i32_eqz, Opcode::select};

Dag unary(Opcode op, std::int32_t k)
{
    Dag d;
    const auto x = d.add_input(0);
    const auto c = d.add_constant(k);
    const NodeId ops[] = {x, c};
    d.root = d.add_op(op, ops);
    return d;
}

Dag binary(Opcode op)
{
    Dag d;
    const auto x = d.add_input(0);
    const auto y = d.add_input(1);
    const NodeId ops[] = {x, y};
    d.root = d.add_op(op, ops);
    return d;
}

Dag constant(std::int32_t v)
{
    Dag d;
    d.root = d.add_constant(v);
    return d;
}
}  // namespace

TEST(equivalence, apply_op_exhaustive_width_4)
{
    for (const auto op : pure_ops)
    {
        for (std::uint32_t a = 0; a < 16; ++a)
            for (std::uint32_t b = 0; b < 16; ++b)
                for (std::uint32_t c : {0u, 1u, 8u})
                    ASSERT_EQ(apply_op(op, a, b, c, 4), reference(op, a, b, c, 4))
                        << name(op) << " " << a << " " << b << " " << c;
    }
}

TEST(equivalence, apply_op_random_widths)
{
    std::mt19937_64 rng{7};
    for (const unsigned w : {2u, 5u, 8u, 13u, 31u, 32u})
    {
        for (const auto op : pure_ops)
        {
            for (int i = 0; i < 2000; ++i)
            {
                const auto m = width_mask(w);
                const auto a = static_cast<std::uint32_t>(rng()) & m;
                const auto b = static_cast<std::uint32_t>(rng()) & m;
                const auto c = static_cast<std::uint32_t>(rng() % 2) & m;
                ASSERT_EQ(apply_op(op, a, b, c, w), reference(op, a, b, c, w))
                    << name(op) << " w=" << w << " " << a << " " << b;
            }
        }
    }
}

TEST(equivalence, twos_complement_corners)
{
    constexpr auto min = 0x80000000u;
    EXPECT_EQ(apply_op(Opcode::i32_sub, 0, min, 0, 32), min);
    EXPECT_EQ(apply_op(Opcode::i32_mul, min, 0xffffffffu, 0, 32), min);
    EXPECT_EQ(apply_op(Opcode::i32_shr_s, min, 31, 0, 32), 0xffffffffu);
    EXPECT_EQ(apply_op(Opcode::i32_shl, 1, 33, 0, 32), 2u);
    EXPECT_EQ(apply_op(Opcode::i32_rotl, 0x80000001u, 1, 0, 32), 3u);
    EXPECT_EQ(apply_op(Opcode::i32_lt_s, min, 0, 0, 32), 1u);
    EXPECT_EQ(apply_op(Opcode::i32_lt_u, min, 0, 0, 32), 0u);
    EXPECT_EQ(sign_extend(0x8, 4), -8);
    EXPECT_EQ(sign_extend(0x7, 4), 7);
}

TEST(equivalence, compiled_matches_tree_eval)
{
    Dag d;
    const auto x = d.add_input(0);
    const auto y = d.add_input(1);
    const auto k = d.add_constant(-3);
    const NodeId m1[] = {x, k};
    const auto mul = d.add_op(Opcode::i32_mul, m1);
    const NodeId r1[] = {mul, y};
    const auto rot = d.add_op(Opcode::i32_rotr, r1);
    const NodeId s1[] = {rot, x, y};
    d.root = d.add_op(Opcode::select, s1);
    const CompiledDag c{d};
    std::mt19937 rng{3};
    std::vector<std::uint32_t> envs(2 * 100);
    for (auto& v : envs)
        v = rng();
    std::vector<std::uint32_t> out(100);
    for (const unsigned w : {8u, 32u})
    {
        c.eval_batch(envs, 100, w, out);
        for (std::size_t i = 0; i < 100; ++i)
        {
            const std::uint32_t env[] = {envs[i] & width_mask(w), envs[100 + i] & width_mask(w)};
            EXPECT_EQ(out[i], eval_dag(d, env, w));
            EXPECT_EQ(c.eval(env, w), eval_dag(d, env, w));
        }
    }
}

TEST(equivalence, exhaustive_small_domain)
{
    const auto a = unary(Opcode::i32_mul, 2);
    const auto b = unary(Opcode::i32_shl, 1);
    const auto v = exhaustive_check({a, b, 1}, 16);
    EXPECT_EQ(v.tier, Tier::probable);
    EXPECT_EQ(v.method, Method::reduced_width);

    const auto c = unary(Opcode::i32_shl, 2);
    const auto r = exhaustive_check({a, c, 1}, 8);
    EXPECT_EQ(r.tier, Tier::rejected);
    ASSERT_TRUE(r.counterexample);
    const std::uint32_t env[] = {static_cast<std::uint32_t>((*r.counterexample)[0])};
    EXPECT_NE(eval_dag(a, env), eval_dag(c, env));

    EXPECT_THROW(exhaustive_check({a, b, 1}, 32), infeasible_domain);
}

TEST(equivalence, constant_blocks_verified)
{
    const auto v = check({constant(25264), unary(Opcode::i32_shl, 4), 0}, CheckerConfig{});
    EXPECT_EQ(v.tier, Tier::rejected);
    Dag shl;
    const auto a = shl.add_constant(1579);
    const auto b = shl.add_constant(4);
    const NodeId ops[] = {a, b};
    shl.root = shl.add_op(Opcode::i32_shl, ops);
    const auto w = check({constant(25264), shl, 0}, CheckerConfig{});
    EXPECT_EQ(w.tier, Tier::verified);
    EXPECT_EQ(w.method, Method::exhaustive);
}

TEST(equivalence, one_input_without_solver_is_probable)
{
    const auto v = check({unary(Opcode::i32_mul, 8), unary(Opcode::i32_shl, 3), 1}, CheckerConfig{});
    EXPECT_EQ(v.tier, Tier::probable);
    const auto r = check({unary(Opcode::i32_mul, 8), unary(Opcode::i32_shl, 4), 1}, CheckerConfig{});
    EXPECT_EQ(r.tier, Tier::rejected);
}

TEST(equivalence, reduced_width_false_mismatch_is_rechecked)
{
    // (x >> 4) & 1 and (x & 16) != 0 agree at width 32 but not at width 4, where
    // the shift amount wraps to 0 and the mask truncates to 0.
    Dag lhs;
    {
        const auto x = lhs.add_input(0);
        const auto four = lhs.add_constant(4);
        const auto one = lhs.add_constant(1);
        const NodeId s[] = {x, four};
        const auto shr = lhs.add_op(Opcode::i32_shr_u, s);
        const NodeId a[] = {shr, one};
        lhs.root = lhs.add_op(Opcode::i32_and, a);
    }
    Dag rhs;
    {
        const auto x = rhs.add_input(0);
        const auto mask = rhs.add_constant(16);
        const auto zero = rhs.add_constant(0);
        const NodeId a[] = {x, mask};
        const auto bit = rhs.add_op(Opcode::i32_and, a);
        const NodeId n[] = {bit, zero};
        rhs.root = rhs.add_op(Opcode::i32_ne, n);
    }
    const std::uint32_t one[] = {1};
    ASSERT_NE(eval_dag(lhs, one, 4), eval_dag(rhs, one, 4));
    const auto v = check({lhs, rhs, 1}, CheckerConfig{});
    EXPECT_EQ(v.tier, Tier::probable);
}

TEST(equivalence, sampled_catches_rare_difference)
{
    // Differs only for x == 0x12345678.
    Dag lhs;
    {
        const auto x = lhs.add_input(0);
        const auto k = lhs.add_constant(0x12345678);
        const NodeId e[] = {x, k};
        const auto eq = lhs.add_op(Opcode::i32_eq, e);
        const NodeId a[] = {x, eq};
        lhs.root = lhs.add_op(Opcode::i32_add, a);
    }
    Dag rhs;
    rhs.root = rhs.add_input(0);
    CheckerConfig cfg;
    const auto v = check({lhs, rhs, 1}, cfg);
    // The sampler visits the neighbours of every constant.
    EXPECT_EQ(v.tier, Tier::rejected);
    ASSERT_TRUE(v.counterexample);
    ASSERT_EQ(v.counterexample->size(), 1u);
    EXPECT_EQ((*v.counterexample)[0], 0x12345678);
}

TEST(equivalence, threshold_window_hidden_from_reduced_widths)
{
    // ge_u(x, 64) and lt_u(rotl(65, 2), x) agree at widths 4 and 8 once the
    // width-32 recheck discards the truncated constants, and differ only on
    // 64..260 at width 32.
    Dag lhs;
    {
        const auto x = lhs.add_input(0);
        const auto k = lhs.add_constant(64);
        const NodeId a[] = {x, k};
        lhs.root = lhs.add_op(Opcode::i32_ge_u, a);
    }
    Dag rhs;
    {
        const auto x = rhs.add_input(0);
        const auto c = rhs.add_constant(65);
        const auto two = rhs.add_constant(2);
        const NodeId r[] = {c, two};
        const auto rot = rhs.add_op(Opcode::i32_rotl, r);
        const NodeId a[] = {rot, x};
        rhs.root = rhs.add_op(Opcode::i32_lt_u, a);
    }
    const auto v = check({lhs, rhs, 1}, CheckerConfig{});
    EXPECT_EQ(v.tier, Tier::rejected);
    ASSERT_TRUE(v.counterexample);
    ASSERT_EQ(v.counterexample->size(), 1u);
    EXPECT_GE((*v.counterexample)[0], 64);
    EXPECT_LE((*v.counterexample)[0], 260);
}

TEST(equivalence, config_validation)
{
    CheckerConfig cfg;
    cfg.reduced_widths = {1};
    EXPECT_THROW(validate(cfg), config_error);
    cfg = {};
    cfg.mode = CheckerMode::smt;
    EXPECT_THROW(validate(cfg), config_error);
    cfg.solver_command = {"z3", "-in"};
    EXPECT_NO_THROW(validate(cfg));
    cfg.solver_timeout_secs = 0;
    EXPECT_THROW(validate(cfg), config_error);
}

TEST(equivalence, smtlib_text)
{
    const auto text = emit_smtlib({unary(Opcode::i32_mul, 2), unary(Opcode::i32_shl, 33), 1});
    EXPECT_NE(text.find("(set-logic QF_BV)"), std::string::npos);
    EXPECT_NE(text.find("(declare-const x0 (_ BitVec 32))"), std::string::npos);
    EXPECT_NE(text.find("bvmul"), std::string::npos);
    EXPECT_NE(text.find("#x00000001"), std::string::npos);  // 33 masked to 1
    EXPECT_NE(text.find("(assert (distinct"), std::string::npos);
    EXPECT_NE(text.find("(check-sat)"), std::string::npos);
}

namespace
{
const std::vector<std::string> z3{"z3", "-in"};
}

TEST(equivalence, solver_proves_and_refutes)
{
    if (!solver_available(z3))
        GTEST_SKIP() << "z3 not on PATH";
    CheckerConfig cfg;
    cfg.mode = CheckerMode::smt;
    cfg.solver_command = z3;

    const auto v = check({unary(Opcode::i32_mul, 8), unary(Opcode::i32_shl, 3), 1}, cfg);
    EXPECT_EQ(v.tier, Tier::verified);
    EXPECT_EQ(v.method, Method::smt);

    Dag gt;
    {
        const auto x = gt.add_input(0);
        const auto k = gt.add_constant(10);
        const NodeId o[] = {x, k};
        gt.root = gt.add_op(Opcode::i32_gt_s, o);
    }
    Dag le;
    {
        const auto k = le.add_constant(11);
        const auto x = le.add_input(0);
        const NodeId o[] = {k, x};
        le.root = le.add_op(Opcode::i32_le_s, o);
    }
    EXPECT_EQ(check({gt, le, 1}, cfg).tier, Tier::verified);

    const auto r = check({binary(Opcode::i32_rotl), binary(Opcode::i32_shl), 2}, cfg);
    EXPECT_EQ(r.tier, Tier::rejected);
    ASSERT_TRUE(r.counterexample);
    std::vector<std::uint32_t> env;
    for (const auto x : *r.counterexample)
        env.push_back(static_cast<std::uint32_t>(x));
    EXPECT_NE(eval_dag(binary(Opcode::i32_rotl), env), eval_dag(binary(Opcode::i32_shl), env));

    const auto raw = run_solver({binary(Opcode::i32_add), binary(Opcode::i32_sub), 2}, z3, 5.0);
    EXPECT_EQ(raw.answer, SolverAnswer::sat);
    EXPECT_TRUE(raw.model);
}

TEST(equivalence, missing_solver_falls_back)
{
    CheckerConfig cfg;
    cfg.mode = CheckerMode::smt;
    cfg.solver_command = {"crow-no-such-solver-binary"};
    EXPECT_FALSE(solver_available(cfg.solver_command));
    const auto v = check({unary(Opcode::i32_mul, 8), unary(Opcode::i32_shl, 3), 1}, cfg);
    EXPECT_TRUE(v.solver_failed);
    EXPECT_EQ(v.tier, Tier::probable);
}
