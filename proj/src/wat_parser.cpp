// crow: WebAssembly diversification toolkit
// Copyright 2026 The crow Authors.
// SPDX-License-Identifier: Apache-2.0

#include "crow/wat.hpp"

#include <charconv>
#include <limits>
#include <memory>

namespace crow
{
parse_error::parse_error(const std::string& message, std::size_t line, std::size_t column)
  : std::runtime_error{std::to_string(line) + ":" + std::to_string(column) + ": " + message},
    m_line{line},
    m_column{column}
{}

unsupported_construct::unsupported_construct(
    std::string construct, std::size_t line, std::size_t column)
  : parse_error{"unsupported construct: " + construct, line, column},
    m_construct{std::move(construct)}
{}

namespace
{
struct Position
{
    std::size_t line = 1;
    std::size_t column = 1;
};

enum class TokenKind
{
    lparen,
    rparen,
    atom,
    string,
    eof,
};

struct Token
{
    TokenKind kind;
    std::string text;
    Position pos;
};

class Lexer
{
public:
    explicit Lexer(std::string_view text) : m_text{text} {}

    Token next()
    {
        skip_trivia();
        const auto start = m_pos;
        if (m_index >= m_text.size())
            return {TokenKind::eof, {}, start};

        const char c = m_text[m_index];
        if (c == '(')
        {
            advance();
            return {TokenKind::lparen, "(", start};
        }
        if (c == ')')
        {
            advance();
            return {TokenKind::rparen, ")", start};
        }
        if (c == '"')
        {
            advance();
            std::string value;
            while (true)
            {
                if (m_index >= m_text.size())
                    throw parse_error{"unterminated string", start.line, start.column};
                const char s = m_text[m_index];
                if (s == '"')
                {
                    advance();
                    break;
                }
                if (s == '\\')
                    throw unsupported_construct{"string escapes", m_pos.line, m_pos.column};
                value.push_back(s);
                advance();
            }
            return {TokenKind::string, std::move(value), start};
        }

        std::string atom;
        while (m_index < m_text.size())
        {
            const char a = m_text[m_index];
            if (a == '(' || a == ')' || a == '"' || a == ';' || is_space(a))
                break;
            atom.push_back(a);
            advance();
        }
        return {TokenKind::atom, std::move(atom), start};
    }

private:
    static bool is_space(char c) noexcept
    {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r';
    }

    void advance() noexcept
    {
        if (m_text[m_index] == '\n')
        {
            ++m_pos.line;
            m_pos.column = 1;
        }
        else
            ++m_pos.column;
        ++m_index;
    }

    bool at(std::string_view s) const noexcept { return m_text.substr(m_index, s.size()) == s; }

    void skip_trivia()
    {
        while (m_index < m_text.size())
        {
            if (is_space(m_text[m_index]))
                advance();
            else if (at(";;"))
            {
                while (m_index < m_text.size() && m_text[m_index] != '\n')
                    advance();
            }
            else if (at("(;"))
            {
                const auto start = m_pos;
                int depth = 0;
                do
                {
                    if (m_index >= m_text.size())
                        throw parse_error{"unterminated block comment", start.line, start.column};
                    if (at("(;"))
                    {
                        ++depth;
                        advance();
                        advance();
                    }
                    else if (at(";)"))
                    {
                        --depth;
                        advance();
                        advance();
                    }
                    else
                        advance();
                } while (depth > 0);
            }
            else
                break;
        }
    }

    std::string_view m_text;
    std::size_t m_index = 0;
    Position m_pos;
};

/// Generic s-expression tree.
struct SExpr
{
    Token head;  ///< atom/string token, or lparen for a list
    std::vector<SExpr> items;

    bool is_list() const noexcept { return head.kind == TokenKind::lparen; }
    bool is_atom() const noexcept { return head.kind == TokenKind::atom; }
    bool is_atom(std::string_view s) const noexcept { return is_atom() && head.text == s; }

    /// First atom of a list, or empty.
    std::string_view keyword() const noexcept
    {
        if (is_list() && !items.empty() && items.front().is_atom())
            return items.front().head.text;
        return {};
    }
};

SExpr read_sexpr(Lexer& lexer, Token token)
{
    if (token.kind == TokenKind::rparen)
        throw parse_error{"unexpected ')'", token.pos.line, token.pos.column};
    if (token.kind == TokenKind::eof)
        throw parse_error{"unexpected end of input", token.pos.line, token.pos.column};
    SExpr node{std::move(token), {}};
    if (!node.is_list())
        return node;
    while (true)
    {
        auto next = lexer.next();
        if (next.kind == TokenKind::rparen)
            return node;
        if (next.kind == TokenKind::eof)
            throw parse_error{"expected ')'", next.pos.line, next.pos.column};
        node.items.push_back(read_sexpr(lexer, std::move(next)));
    }
}

[[noreturn]] void fail(const SExpr& at, const std::string& message)
{
    throw parse_error{message, at.head.pos.line, at.head.pos.column};
}

[[noreturn]] void unsupported(const SExpr& at, const std::string& what)
{
    throw unsupported_construct{what, at.head.pos.line, at.head.pos.column};
}

std::optional<std::int64_t> parse_integer(std::string_view text)
{
    bool negative = false;
    if (!text.empty() && (text.front() == '-' || text.front() == '+'))
    {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    int base = 10;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X'))
    {
        base = 16;
        text.remove_prefix(2);
    }
    if (text.empty())
        return std::nullopt;
    std::uint64_t magnitude = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), magnitude, base);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        return std::nullopt;
    if (magnitude > (std::uint64_t{1} << 32))
        return std::nullopt;
    const auto value = static_cast<std::int64_t>(magnitude);
    return negative ? -value : value;
}

std::uint32_t parse_u32(const SExpr& e, std::string_view what)
{
    if (!e.is_atom())
        fail(e, std::string{"expected "} + std::string{what});
    if (e.head.text.starts_with('$'))
        unsupported(e, "symbolic identifier " + e.head.text);
    const auto v = parse_integer(e.head.text);
    if (!v || *v < 0 || *v > std::numeric_limits<std::uint32_t>::max())
        fail(e, std::string{"expected "} + std::string{what} + ", got '" + e.head.text + "'");
    return static_cast<std::uint32_t>(*v);
}

std::int32_t parse_i32(const SExpr& e)
{
    if (!e.is_atom())
        fail(e, "expected i32 literal");
    const auto v = parse_integer(e.head.text);
    if (!v || *v < std::numeric_limits<std::int32_t>::min() ||
        *v > std::numeric_limits<std::uint32_t>::max())
        fail(e, "expected i32 literal, got '" + e.head.text + "'");
    return static_cast<std::int32_t>(static_cast<std::uint32_t>(*v));
}

void expect_i32_type(const SExpr& e)
{
    if (e.is_atom("i32"))
        return;
    if (e.is_atom("i64") || e.is_atom("f32") || e.is_atom("f64") || e.is_atom("v128") ||
        e.is_atom("funcref") || e.is_atom("externref"))
        unsupported(e, e.head.text + " type");
    fail(e, "expected value type");
}

struct Signature
{
    std::uint32_t params = 0;
    std::uint32_t results = 0;
};

/// Reads `(param ...)`/`(result ...)` lists starting at items[i]; advances i.
Signature read_signature(const SExpr& list, std::size_t& i)
{
    Signature sig;
    for (; i < list.items.size(); ++i)
    {
        const auto& item = list.items[i];
        const auto kw = item.keyword();
        if (kw == "param")
        {
            if (sig.results != 0)
                fail(item, "param after result");
            for (std::size_t k = 1; k < item.items.size(); ++k)
            {
                if (item.items[k].is_atom() && item.items[k].head.text.starts_with('$'))
                    unsupported(item.items[k], "symbolic identifier " + item.items[k].head.text);
                expect_i32_type(item.items[k]);
                ++sig.params;
            }
        }
        else if (kw == "result")
        {
            for (std::size_t k = 1; k < item.items.size(); ++k)
            {
                expect_i32_type(item.items[k]);
                ++sig.results;
            }
        }
        else
            break;
    }
    return sig;
}

const std::vector<std::string_view>& known_foreign_prefixes()
{
    static const std::vector<std::string_view> prefixes{
        "i64.", "f32.", "f64.", "v128.", "memory.", "table.", "ref.", "i8x16.", "i16x8.",
        "i32x4.", "i64x2.", "f32x4.", "f64x2.", "data.", "elem."};
    return prefixes;
}

class ModuleParser
{
public:
    Module parse(const SExpr& root)
    {
        if (root.keyword() != "module")
            fail(root, "expected (module ...)");

        std::size_t i = 1;
        if (i < root.items.size() && root.items[i].is_atom() &&
            root.items[i].head.text.starts_with('$'))
            unsupported(root.items[i], "symbolic identifier " + root.items[i].head.text);

        // Types first so functions may reference later declarations.
        for (std::size_t k = i; k < root.items.size(); ++k)
        {
            if (root.items[k].keyword() == "type")
                read_type(root.items[k]);
        }

        for (; i < root.items.size(); ++i)
        {
            const auto& field = root.items[i];
            if (!field.is_list())
                fail(field, "expected module field, got '" + field.head.text + "'");
            const auto kw = field.keyword();
            if (kw == "type")
                continue;
            if (kw == "func")
                read_func(field);
            else if (kw == "global")
                read_global(field);
            else if (kw == "memory")
                read_memory(field);
            else if (kw == "export")
                m_exports.push_back(&field);
            else if (kw == "import" || kw == "table" || kw == "data" || kw == "elem" ||
                     kw == "start" || kw == "tag" || kw == "rec")
                unsupported(field, std::string{kw} + " section");
            else
                fail(field, "unknown module field '" + std::string{kw} + "'");
        }

        for (const auto* e : m_exports)
            read_export(*e);
        return std::move(m_module);
    }

private:
    void read_type(const SExpr& field)
    {
        std::size_t i = 1;
        if (i < field.items.size() && field.items[i].is_atom())
            unsupported(field.items[i], "symbolic identifier " + field.items[i].head.text);
        if (i >= field.items.size() || field.items[i].keyword() != "func")
            fail(field, "expected (func ...) in type");
        const auto& func = field.items[i];
        std::size_t k = 1;
        const auto sig = read_signature(func, k);
        if (k != func.items.size())
            fail(func.items[k], "unexpected item in function type");
        m_types.push_back(sig);
    }

    void read_func(const SExpr& field)
    {
        FuncDef f;
        std::size_t i = 1;
        if (i < field.items.size() && field.items[i].is_atom() &&
            field.items[i].head.text.starts_with('$'))
            unsupported(field.items[i], "symbolic identifier " + field.items[i].head.text);

        std::optional<Signature> declared;
        if (i < field.items.size() && field.items[i].keyword() == "type")
        {
            const auto& t = field.items[i];
            if (t.items.size() != 2)
                fail(t, "expected (type index)");
            const auto idx = parse_u32(t.items[1], "type index");
            if (idx >= m_types.size())
                fail(t, "type index out of range");
            declared = m_types[idx];
            ++i;
        }
        if (i < field.items.size() && field.items[i].keyword() == "export")
            unsupported(field.items[i], "inline export");
        if (i < field.items.size() && field.items[i].keyword() == "import")
            unsupported(field.items[i], "inline import");

        const auto sig_start = i;
        auto sig = read_signature(field, i);
        if (declared)
        {
            if (i == sig_start)
                sig = *declared;
            else if (sig.params != declared->params || sig.results != declared->results)
                fail(field, "function signature does not match its type");
        }
        if (sig.results > 1)
            unsupported(field, "multi-value results");
        f.params = sig.params;
        f.results = sig.results;

        for (; i < field.items.size() && field.items[i].keyword() == "local"; ++i)
        {
            const auto& l = field.items[i];
            for (std::size_t k = 1; k < l.items.size(); ++k)
            {
                if (l.items[k].is_atom() && l.items[k].head.text.starts_with('$'))
                    unsupported(l.items[k], "symbolic identifier " + l.items[k].head.text);
                expect_i32_type(l.items[k]);
                ++f.locals;
            }
        }

        while (i < field.items.size())
            f.body.push_back(read_instr(field, i));

        m_module.functions.push_back(std::move(f));
    }

    Instr read_instr(const SExpr& list, std::size_t& i)
    {
        const auto& item = list.items[i];
        if (item.is_list())
        {
            const auto kw = item.keyword();
            if (kw == "param" || kw == "result" || kw == "local" || kw == "type")
                fail(item, "unexpected (" + std::string{kw} + ") in function body");
            unsupported(item, "folded instruction (" + std::string{kw} + " ...)");
        }
        if (!item.is_atom())
            fail(item, "expected instruction");

        const auto& text = item.head.text;
        const auto op = opcode_from_name(text);
        if (!op)
        {
            for (const auto prefix : known_foreign_prefixes())
            {
                if (text.starts_with(prefix))
                    unsupported(item, text);
            }
            if (text.starts_with("i32.") || text == "br_table" || text == "call_indirect" ||
                text == "return_call" || text == "try" || text == "throw" ||
                text.starts_with("local.") || text.starts_with("global."))
                unsupported(item, text);
            fail(item, "unknown instruction '" + text + "'");
        }
        ++i;

        Instr instr{*op, 0, false};
        switch (info(*op).immediate)
        {
        case ImmediateKind::none:
            break;
        case ImmediateKind::value:
            if (i >= list.items.size())
                fail(item, "expected i32 literal after i32.const");
            instr.imm = parse_i32(list.items[i++]);
            break;
        case ImmediateKind::index:
        case ImmediateKind::label:
            if (i >= list.items.size())
                fail(item, "expected index after " + text);
            instr.imm = parse_u32(list.items[i++], "index");
            break;
        case ImmediateKind::offset:
            while (i < list.items.size() && list.items[i].is_atom())
            {
                const auto& arg = list.items[i].head.text;
                if (arg.starts_with("offset="))
                {
                    const auto v = parse_integer(std::string_view{arg}.substr(7));
                    if (!v || *v < 0 || *v > std::numeric_limits<std::uint32_t>::max())
                        fail(list.items[i], "bad memory offset");
                    instr.imm = *v;
                    ++i;
                }
                else if (arg.starts_with("align="))
                    unsupported(list.items[i], "memory alignment hint");
                else
                    break;
            }
            break;
        }

        if (*op == Opcode::block || *op == Opcode::loop || *op == Opcode::if_)
        {
            if (i < list.items.size() && list.items[i].is_atom() &&
                list.items[i].head.text.starts_with('$'))
                unsupported(list.items[i], "block label " + list.items[i].head.text);
            if (i < list.items.size() && list.items[i].keyword() == "type")
                unsupported(list.items[i], "block type index");
            if (i < list.items.size() && list.items[i].keyword() == "param")
                unsupported(list.items[i], "block parameters");
            if (i < list.items.size() && list.items[i].keyword() == "result")
            {
                const auto& r = list.items[i];
                if (r.items.size() != 2)
                    unsupported(r, "multi-value block result");
                expect_i32_type(r.items[1]);
                instr.has_result = true;
                ++i;
            }
        }
        return instr;
    }

    void read_global(const SExpr& field)
    {
        if (field.items.size() != 3)
            fail(field, "expected (global <type> (i32.const <value>))");
        Global g;
        const auto& type = field.items[1];
        if (type.keyword() == "mut")
        {
            if (type.items.size() != 2)
                fail(type, "expected (mut i32)");
            expect_i32_type(type.items[1]);
            g.is_mutable = true;
        }
        else if (type.is_atom() && type.head.text.starts_with('$'))
            unsupported(type, "symbolic identifier " + type.head.text);
        else if (type.keyword() == "import" || type.keyword() == "export")
            unsupported(type, "inline " + std::string{type.keyword()});
        else
            expect_i32_type(type);

        const auto& init = field.items[2];
        if (init.keyword() == "global.get")
            unsupported(init, "imported global initializer");
        if (init.keyword() != "i32.const" || init.items.size() != 2)
            fail(init, "expected (i32.const <value>) initializer");
        g.init = parse_i32(init.items[1]);
        m_module.globals.push_back(g);
    }

    void read_memory(const SExpr& field)
    {
        if (m_module.memory_pages)
            unsupported(field, "multiple memories");
        if (field.items.size() == 3)
            unsupported(field.items[2], "memory maximum");
        if (field.items.size() != 2)
            fail(field, "expected (memory <pages>)");
        if (field.items[1].is_list())
            unsupported(field.items[1], "inline memory " + std::string{field.items[1].keyword()});
        const auto pages = parse_u32(field.items[1], "page count");
        if (pages > 65536)
            fail(field.items[1], "memory size exceeds 4 GiB");
        m_module.memory_pages = pages;
    }

    void read_export(const SExpr& field)
    {
        if (field.items.size() != 3 || field.items[1].head.kind != TokenKind::string)
            fail(field, "expected (export \"name\" (func <index>))");
        const auto& desc = field.items[2];
        const auto kw = desc.keyword();
        if (kw == "memory" || kw == "global" || kw == "table")
            unsupported(desc, std::string{kw} + " export");
        if (kw != "func" || desc.items.size() != 2)
            fail(desc, "expected (func <index>)");
        const auto idx = parse_u32(desc.items[1], "function index");
        const auto& name = field.items[1].head.text;
        if (!m_module.exports.emplace(name, idx).second)
            fail(field, "duplicate export '" + name + "'");
    }

    Module m_module;
    std::vector<Signature> m_types;
    std::vector<const SExpr*> m_exports;
};
}  // namespace

Module parse_module(std::string_view text)
{
    Lexer lexer{text};
    auto first = lexer.next();
    if (first.kind == TokenKind::eof)
        throw parse_error{"expected (module ...)", first.pos.line, first.pos.column};
    if (first.kind != TokenKind::lparen)
        throw parse_error{"expected '('", first.pos.line, first.pos.column};
    const auto root = read_sexpr(lexer, std::move(first));
    const auto trailing = lexer.next();
    if (trailing.kind != TokenKind::eof)
        throw parse_error{"unexpected text after module", trailing.pos.line, trailing.pos.column};
    return ModuleParser{}.parse(root);
}
}  // namespace crow
