// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "crow/interpreter.hpp"
#include "crow/wat.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crow
{
using TokenSeq = std::vector<std::string>;

struct DtwResult
{
    std::uint64_t cost = 0;
    std::size_t left_length = 0;
    std::size_t right_length = 0;

    bool operator==(const DtwResult&) const = default;
};

/// DTW with 0/1 token distance in two-row form. If exactly one side is empty the
/// cost is the other side's length.
template <typename T>
DtwResult dtw(std::span<const T> a, std::span<const T> b)
{
    DtwResult r{0, a.size(), b.size()};
    if (a.empty() || b.empty())
    {
        r.cost = a.size() + b.size();
        return r;
    }
    constexpr auto inf = ~std::uint64_t{0};
    std::vector<std::uint64_t> prev(b.size() + 1, inf);
    std::vector<std::uint64_t> cur(b.size() + 1, inf);
    prev[0] = 0;
    for (std::size_t i = 1; i <= a.size(); ++i)
    {
        cur[0] = inf;
        for (std::size_t j = 1; j <= b.size(); ++j)
        {
            const auto best = std::min({prev[j], cur[j - 1], prev[j - 1]});
            cur[j] = best + (a[i - 1] == b[j - 1] ? 0 : 1);
        }
        std::swap(prev, cur);
    }
    r.cost = prev[b.size()];
    return r;
}

template <typename T>
DtwResult dtw(const std::vector<T>& a, const std::vector<T>& b)
{
    return dtw(std::span<const T>{a}, std::span<const T>{b});
}

/// Function bodies in index order, each instruction as `mnemonic[ immediate]`.
TokenSeq tokenize(const Module& m);

/// Trace events as `push v` / `pop v`.
TokenSeq tokenize(const Trace& t);

std::uint64_t dt_static(const Module& a, const Module& b);

std::uint64_t dt_dyn(const Trace& a, const Trace& b);

/// dt_dyn divided by the original trace length; throws std::invalid_argument when
/// the original is empty.
double normalized_dt_dyn(const Trace& original, const Trace& variant);

/// Merges adjacent equal elements.
template <typename T>
std::vector<T> collapse_runs(std::span<const T> s)
{
    std::vector<T> out;
    for (const auto& x : s)
    {
        if (out.empty() || !(out.back() == x))
            out.push_back(x);
    }
    return out;
}
}  // namespace crow
