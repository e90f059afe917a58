// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/metrics.hpp"

#include <stdexcept>

namespace crow
{
TokenSeq tokenize(const Module& m)
{
    TokenSeq out;
    for (const auto& f : m.functions)
    {
        for (const auto& instr : f.body)
            out.push_back(to_string(instr));
    }
    return out;
}

TokenSeq tokenize(const Trace& t)
{
    TokenSeq out;
    out.reserve(t.size());
    for (const auto& e : t)
        out.push_back(to_string(e));
    return out;
}

std::uint64_t dt_static(const Module& a, const Module& b)
{
    return dtw(tokenize(a), tokenize(b)).cost;
}

std::uint64_t dt_dyn(const Trace& a, const Trace& b)
{
    return dtw(a, b).cost;
}

double normalized_dt_dyn(const Trace& original, const Trace& variant)
{
    if (original.empty())
        throw std::invalid_argument{"original trace is empty"};
    return static_cast<double>(dt_dyn(original, variant)) / static_cast<double>(original.size());
}
}  // namespace crow
