#include "tgfuzz/program.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <fstream>
#include <set>
#include <sstream>

namespace tgfuzz {

// ---------------------------------------------------------------------------
// Program
// ---------------------------------------------------------------------------

namespace {

void collect_packages(const std::shared_ptr<const Package>& pkg,
                      std::vector<std::shared_ptr<const Package>>& out) {
    for (const auto& dep : pkg->dependencies) collect_packages(dep, out);
    for (const auto& seen : out)
        if (seen.get() == pkg.get() || seen->name == pkg->name) return;
    out.push_back(pkg);
}

}  // namespace

Program::Program(std::shared_ptr<const Package> pkg) : pkg_(std::move(pkg)) {
    collect_packages(pkg_, keep_alive_);
    for (const auto& p : keep_alive_) {
        const bool target = p.get() == pkg_.get();
        for (const auto& m : p->modules) {
            modules_.push_back(&m);
            for (const auto& f : m.functions) {
                FunctionEntry e;
                e.id = static_cast<FunctionId>(functions_.size());
                e.module = &m;
                e.decl = &f;
                e.qualified = m.name + "::" + f.name;
                e.in_target = target;
                function_index_.emplace(e.qualified, e.id);
                for (const auto& ins : f.body)
                    if (is_conditional_branch(ins.op)) branch_arms_ += 2;
                functions_.push_back(std::move(e));
            }
        }
    }
}

std::optional<FunctionId> Program::find_function(std::string_view module, std::string_view name) const {
    return find_function(std::string(module) + "::" + std::string(name));
}

std::optional<FunctionId> Program::find_function(std::string_view qualified) const {
    auto it = function_index_.find(std::string(qualified));
    if (it == function_index_.end()) return std::nullopt;
    return it->second;
}

const DatatypeDecl* Program::find_datatype(const DatatypeRef& ref) const {
    for (const auto* m : modules_)
        if (m->name == ref.module) return m->find_datatype(ref.name);
    return nullptr;
}

std::vector<std::pair<DatatypeRef, const DatatypeDecl*>> Program::datatypes() const {
    std::vector<std::pair<DatatypeRef, const DatatypeDecl*>> out;
    for (const auto* m : modules_)
        for (const auto& d : m->datatypes) out.emplace_back(DatatypeRef{m->name, d.name}, &d);
    return out;
}

bool Program::has_ability(const TypeTag& t, Ability a) const {
    switch (t.kind()) {
    case TypeTag::Kind::Primitive: return a != Ability::Key;
    case TypeTag::Kind::Parameter: return true;
    case TypeTag::Kind::Vector: return a != Ability::Key && has_ability(t.element(), a);
    case TypeTag::Kind::Datatype: {
        const auto* d = find_datatype(t.datatype_ref());
        return d != nullptr && d->abilities.has(a);
    }
    }
    return false;
}

bool Program::is_hot_potato(const TypeTag& t) const {
    if (!t.is_datatype()) return false;
    const auto* d = find_datatype(t.datatype_ref());
    return d != nullptr && tgfuzz::is_hot_potato(*d);
}

bool Program::well_formed(const TypeTag& t, std::uint32_t type_params) const {
    switch (t.kind()) {
    case TypeTag::Kind::Primitive: return true;
    case TypeTag::Kind::Parameter: return t.param_index() < type_params;
    case TypeTag::Kind::Vector: return well_formed(t.element(), type_params);
    case TypeTag::Kind::Datatype: {
        const auto* d = find_datatype(t.datatype_ref());
        if (d == nullptr || d->type_params != t.args().size()) return false;
        return std::all_of(t.args().begin(), t.args().end(),
                           [&](const TypeTag& a) { return well_formed(a, type_params); });
    }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace {

struct Token {
    enum class Kind { Ident, Number, Punct, End } kind = Kind::End;
    std::string text;
    std::size_t column = 0;
};

std::vector<Token> tokenize(std::string_view line, std::size_t lineno) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (c == ' ' || c == '\t' || c == '\r') {
            ++i;
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < line.size() && line[i + 1] == '/')) break;
        Token t;
        t.column = i + 1;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < line.size()) {
                const char d = line[j];
                if (std::isalnum(static_cast<unsigned char>(d)) || d == '_') {
                    ++j;
                } else if (d == ':' && j + 2 < line.size() + 1 && j + 1 < line.size() && line[j + 1] == ':') {
                    j += 2;
                } else {
                    break;
                }
            }
            t.kind = Token::Kind::Ident;
            t.text = std::string(line.substr(i, j - i));
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_')) ++j;
            t.kind = Token::Kind::Number;
            t.text = std::string(line.substr(i, j - i));
            i = j;
        } else if (std::string_view("<>(),:&[].").find(c) != std::string_view::npos) {
            t.kind = Token::Kind::Punct;
            t.text = std::string(1, c);
            ++i;
        } else {
            throw ParseError(lineno, i + 1, std::string("unexpected character '") + c + "'");
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

U256 parse_u256_literal(std::string_view text) {
    std::string s;
    for (char c : text)
        if (c != '_') s += c;
    if (s.empty()) throw std::invalid_argument("empty number");
    U256 v = 0;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        if (s.size() > 66) throw std::invalid_argument("number too large: " + s);
        for (std::size_t i = 2; i < s.size(); ++i) {
            const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
            unsigned d;
            if (c >= '0' && c <= '9') d = static_cast<unsigned>(c - '0');
            else if (c >= 'a' && c <= 'f') d = static_cast<unsigned>(c - 'a' + 10);
            else throw std::invalid_argument("bad hex digit in " + s);
            v = (v << 4) | d;
        }
        return v;
    }
    boost::multiprecision::cpp_int big = 0;
    for (char c : s) {
        if (c < '0' || c > '9') throw std::invalid_argument("bad digit in " + s);
        big = big * 10 + (c - '0');
    }
    if (big > boost::multiprecision::cpp_int(~U256(0))) throw std::invalid_argument("number too large: " + s);
    return static_cast<U256>(big);
}

namespace {

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct NameTables {
    // module -> datatype names / function names, for resolving unqualified references.
    std::map<std::string, std::set<std::string>> datatypes;
    std::map<std::string, std::set<std::string>> functions;
    std::map<std::string, std::map<std::string, std::vector<std::string>>> field_names;
    std::map<std::string, std::map<std::string, std::uint32_t>> arity;
};

void add_package_names(const Package& pkg, NameTables& names) {
    for (const auto& dep : pkg.dependencies) add_package_names(*dep, names);
    for (const auto& m : pkg.modules) {
        for (const auto& d : m.datatypes) {
            names.datatypes[m.name].insert(d.name);
            std::vector<std::string> fields;
            for (const auto& f : d.fields) fields.push_back(f.name);
            names.field_names[m.name][d.name] = fields;
            names.arity[m.name][d.name] = d.type_params;
        }
        for (const auto& f : m.functions) names.functions[m.name].insert(f.name);
    }
}

class TokenStream {
public:
    TokenStream(std::vector<Token> toks, std::size_t line) : toks_(std::move(toks)), line_(line) {}

    bool at_end() const { return pos_ >= toks_.size(); }
    const Token& peek() const {
        static const Token end{};
        return at_end() ? end : toks_[pos_];
    }
    bool peek_is(std::string_view text) const { return !at_end() && toks_[pos_].text == text; }
    Token next() {
        if (at_end()) fail("unexpected end of line");
        return toks_[pos_++];
    }
    void expect(std::string_view text) {
        if (!peek_is(text)) fail("expected '" + std::string(text) + "'");
        ++pos_;
    }
    bool accept(std::string_view text) {
        if (!peek_is(text)) return false;
        ++pos_;
        return true;
    }
    std::string ident() {
        if (at_end() || toks_[pos_].kind != Token::Kind::Ident) fail("expected identifier");
        return toks_[pos_++].text;
    }
    [[noreturn]] void fail(const std::string& what) const {
        const std::size_t col = at_end() ? (toks_.empty() ? 1 : toks_.back().column + toks_.back().text.size())
                                         : toks_[pos_].column;
        throw ParseError(line_, col, what);
    }
    void expect_end() {
        if (!at_end()) fail("unexpected trailing token '" + toks_[pos_].text + "'");
    }
    std::size_t line() const { return line_; }

private:
    std::vector<Token> toks_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

class TypeResolver {
public:
    TypeResolver(const NameTables& names, std::string current_module)
        : names_(names), module_(std::move(current_module)) {}

    void set_params(std::vector<std::string> params) { params_ = std::move(params); }

    DatatypeRef resolve_datatype(const std::string& name, TokenStream& ts) const {
        if (auto pos = name.find("::"); pos != std::string::npos) {
            DatatypeRef ref{name.substr(0, pos), name.substr(pos + 2)};
            auto it = names_.datatypes.find(ref.module);
            if (it == names_.datatypes.end() || !it->second.count(ref.name)) ts.fail("unknown datatype " + name);
            return ref;
        }
        if (auto it = names_.datatypes.find(module_); it != names_.datatypes.end() && it->second.count(name))
            return {module_, name};
        std::optional<DatatypeRef> found;
        for (const auto& [mod, set] : names_.datatypes) {
            if (!set.count(name)) continue;
            if (found) ts.fail("ambiguous datatype " + name);
            found = DatatypeRef{mod, name};
        }
        if (!found) ts.fail("unknown type " + name);
        return *found;
    }

    TypeTag parse(TokenStream& ts) const {
        const std::string name = ts.ident();
        if (auto p = prim_from_name(name)) return TypeTag::primitive(*p);
        if (name == "vector") {
            ts.expect("<");
            TypeTag elem = parse(ts);
            ts.expect(">");
            return TypeTag::vector(std::move(elem));
        }
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i] == name) return TypeTag::parameter(static_cast<std::uint32_t>(i));
        DatatypeRef ref = resolve_datatype(name, ts);
        std::vector<TypeTag> args;
        if (ts.accept("<")) {
            do {
                args.push_back(parse(ts));
            } while (ts.accept(","));
            ts.expect(">");
        }
        const auto ar = names_.arity.at(ref.module).at(ref.name);
        if (ar != args.size())
            ts.fail("datatype " + ref.qualified() + " expects " + std::to_string(ar) + " type arguments");
        return TypeTag::datatype(std::move(ref), std::move(args));
    }

    std::pair<std::string, std::string> resolve_function(const std::string& name, TokenStream& ts) const {
        if (auto pos = name.find("::"); pos != std::string::npos) {
            auto mod = name.substr(0, pos);
            auto fn = name.substr(pos + 2);
            auto it = names_.functions.find(mod);
            if (it == names_.functions.end() || !it->second.count(fn)) ts.fail("unknown function " + name);
            return {mod, fn};
        }
        if (auto it = names_.functions.find(module_); it != names_.functions.end() && it->second.count(name))
            return {module_, name};
        std::optional<std::pair<std::string, std::string>> found;
        for (const auto& [mod, set] : names_.functions) {
            if (!set.count(name)) continue;
            if (found) ts.fail("ambiguous function " + name);
            found = std::make_pair(mod, name);
        }
        if (!found) ts.fail("unknown function " + name);
        return *found;
    }

    std::uint32_t field_index(const DatatypeRef& ref, const std::string& field, TokenStream& ts) const {
        const auto& fields = names_.field_names.at(ref.module).at(ref.name);
        for (std::size_t i = 0; i < fields.size(); ++i)
            if (fields[i] == field) return static_cast<std::uint32_t>(i);
        ts.fail("unknown field " + field + " of " + ref.qualified());
    }

private:
    const NameTables& names_;
    std::string module_;
    std::vector<std::string> params_;
};

std::vector<std::string> parse_type_param_names(TokenStream& ts) {
    std::vector<std::string> out;
    if (ts.accept("<")) {
        do {
            out.push_back(ts.ident());
        } while (ts.accept(","));
        ts.expect(">");
    }
    return out;
}

std::uint32_t parse_u32(TokenStream& ts) {
    const Token t = ts.next();
    if (t.kind != Token::Kind::Number) ts.fail("expected number");
    try {
        U256 v = parse_u256_literal(t.text);
        if (v > 0xFFFFFFFFu) ts.fail("index too large");
        return static_cast<std::uint32_t>(v);
    } catch (const std::invalid_argument& e) {
        ts.fail(e.what());
    }
}

struct Line {
    std::size_t number;
    std::vector<Token> tokens;
};

class Parser {
public:
    Parser(std::vector<Line> lines, NameTables names) : lines_(std::move(lines)), names_(std::move(names)) {}

    Package run() {
        Package pkg;
        pkg.name = "main";
        while (pos_ < lines_.size()) {
            TokenStream ts = stream(pos_);
            const std::string kw = ts.ident();
            if (kw == "package") {
                pkg.name = ts.ident();
                ts.expect_end();
                ++pos_;
            } else if (kw == "module") {
                pkg.modules.push_back(parse_module());
            } else {
                ts.fail("expected 'package' or 'module'");
            }
        }
        return pkg;
    }

private:
    TokenStream stream(std::size_t idx) const { return TokenStream(lines_[idx].tokens, lines_[idx].number); }

    Module parse_module() {
        TokenStream head = stream(pos_++);
        head.ident();
        Module m;
        m.name = head.ident();
        head.expect_end();
        for (const auto& other : modules_seen_)
            if (other == m.name) head.fail("duplicate module " + m.name);
        modules_seen_.push_back(m.name);
        TypeResolver resolver(names_, m.name);
        while (pos_ < lines_.size()) {
            TokenStream ts = stream(pos_);
            if (ts.peek_is("module") || ts.peek_is("package")) break;
            if (ts.peek_is("datatype") || ts.peek_is("struct")) {
                auto d = parse_struct(resolver);
                if (m.find_datatype(d.name)) ts.fail("duplicate datatype " + d.name);
                m.datatypes.push_back(std::move(d));
            } else {
                auto f = parse_function(resolver);
                if (m.find_function(f.name)) ts.fail("duplicate function " + f.name);
                if (f.name == "init") m.init = f.name;
                m.functions.push_back(std::move(f));
            }
        }
        return m;
    }

    DatatypeDecl parse_struct(TypeResolver& resolver) {
        TokenStream ts = stream(pos_++);
        if (!ts.accept("datatype")) ts.expect("struct");
        DatatypeDecl d;
        d.name = ts.ident();
        auto params = parse_type_param_names(ts);
        d.type_params = static_cast<std::uint32_t>(params.size());
        resolver.set_params(params);
        if (ts.accept("has")) {
            do {
                const std::string a = ts.ident();
                if (a == "copy") d.abilities.insert(Ability::Copy);
                else if (a == "drop") d.abilities.insert(Ability::Drop);
                else if (a == "store") d.abilities.insert(Ability::Store);
                else if (a == "key") d.abilities.insert(Ability::Key);
                else ts.fail("unknown ability " + a);
            } while (ts.accept(","));
        }
        ts.expect_end();
        while (true) {
            if (pos_ >= lines_.size()) ts.fail("struct " + d.name + " is missing 'end'");
            TokenStream fs = stream(pos_++);
            const std::string kw = fs.ident();
            if (kw == "end") {
                fs.expect_end();
                break;
            }
            if (kw != "field") fs.fail("expected 'field' or 'end'");
            Field f;
            f.name = fs.ident();
            fs.expect(":");
            f.type = resolver.parse(fs);
            fs.expect_end();
            for (const auto& other : d.fields)
                if (other.name == f.name) fs.fail("duplicate field " + f.name);
            d.fields.push_back(std::move(f));
        }
        resolver.set_params({});
        return d;
    }

    FunctionDecl parse_function(TypeResolver& resolver) {
        TokenStream ts = stream(pos_++);
        FunctionDecl f;
        if (ts.accept("public")) f.visibility = Visibility::Public;
        if (ts.accept("native")) f.is_native = true;
        if (!ts.accept("fn")) ts.expect("fun");
        f.name = ts.ident();
        auto tparams = parse_type_param_names(ts);
        f.type_params = static_cast<std::uint32_t>(tparams.size());
        resolver.set_params(tparams);

        std::vector<std::string> local_names;
        ts.expect("(");
        if (!ts.accept(")")) {
            do {
                local_names.push_back(ts.ident());
                ts.expect(":");
                Param p;
                if (ts.accept("&")) p.mode = ts.accept("mut") ? RefMode::ByMutRef : RefMode::ByRef;
                p.type = resolver.parse(ts);
                f.inputs.push_back(std::move(p));
            } while (ts.accept(","));
            ts.expect(")");
        }
        if (ts.accept(":")) {
            if (ts.accept("(")) {
                if (!ts.accept(")")) {
                    do {
                        f.outputs.push_back(resolver.parse(ts));
                    } while (ts.accept(","));
                    ts.expect(")");
                }
            } else {
                f.outputs.push_back(resolver.parse(ts));
            }
        }
        ts.expect_end();
        if (f.is_native) {
            resolver.set_params({});
            return f;
        }

        // Body: locals, labels, instructions, 'end'. Labels are resolved after the body is read.
        std::map<std::string, std::uint32_t> labels;
        struct Fixup {
            std::size_t instr;
            std::string label;
            std::size_t line;
            std::size_t column;
        };
        std::vector<Fixup> fixups;
        bool closed = false;
        while (pos_ < lines_.size()) {
            const auto& line = lines_[pos_];
            TokenStream bs = stream(pos_++);
            if (bs.peek_is("end") && line.tokens.size() == 1) {
                closed = true;
                break;
            }
            if (line.tokens.size() == 2 && line.tokens[1].text == ":" && line.tokens[0].kind == Token::Kind::Ident) {
                if (!labels.emplace(line.tokens[0].text, static_cast<std::uint32_t>(f.body.size())).second)
                    bs.fail("duplicate label " + line.tokens[0].text);
                continue;
            }
            if (bs.peek_is("local")) {
                bs.next();
                local_names.push_back(bs.ident());
                bs.expect(":");
                f.locals.push_back(resolver.parse(bs));
                bs.expect_end();
                continue;
            }
            const Token optok = bs.next();
            auto op = opcode_from_name(optok.text);
            if (!op) bs.fail("unknown opcode '" + optok.text + "'");
            Instruction ins;
            ins.op = *op;
            auto local_index = [&]() -> std::uint32_t {
                if (bs.peek().kind == Token::Kind::Number) return parse_u32(bs);
                const std::string n = bs.ident();
                for (std::size_t i = 0; i < local_names.size(); ++i)
                    if (local_names[i] == n) return static_cast<std::uint32_t>(i);
                bs.fail("unknown local " + n);
            };
            switch (ins.op) {
            case Opcode::LdConst: {
                ins.type = resolver.parse(bs);
                if (!ins.type.is_primitive()) bs.fail("ld expects a primitive type");
                const Token v = bs.next();
                if (ins.type.is_bool()) {
                    if (v.text == "true") ins.value = 1;
                    else if (v.text == "false") ins.value = 0;
                    else bs.fail("expected true/false");
                } else {
                    if (v.kind != Token::Kind::Number) bs.fail("expected integer literal");
                    try {
                        ins.value = parse_u256_literal(v.text);
                    } catch (const std::invalid_argument& e) {
                        bs.fail(e.what());
                    }
                    if (ins.value > prim_max(ins.type.prim())) bs.fail("literal does not fit " + ins.type.to_string());
                }
                break;
            }
            case Opcode::LdParam:
            case Opcode::CopyLocal:
            case Opcode::MoveLocal:
            case Opcode::StoreLocal: ins.index = local_index(); break;
            case Opcode::Cast: {
                ins.type = resolver.parse(bs);
                if (!ins.type.is_int()) bs.fail("cast expects an integer type");
                break;
            }
            case Opcode::Branch:
            case Opcode::BrTrue:
            case Opcode::BrFalse: {
                const Token l = bs.next();
                fixups.push_back({f.body.size(), l.text, line.number, l.column});
                break;
            }
            case Opcode::Abort: {
                const Token v = bs.next();
                if (v.kind != Token::Kind::Number) bs.fail("expected abort code");
                ins.value = parse_u256_literal(v.text);
                break;
            }
            case Opcode::Call: {
                const std::string name = bs.ident();
                auto [mod, fn] = resolver.resolve_function(name, bs);
                ins.callee_module = mod;
                ins.callee_name = fn;
                if (bs.accept("<")) {
                    do {
                        ins.type_args.push_back(resolver.parse(bs));
                    } while (bs.accept(","));
                    bs.expect(">");
                }
                break;
            }
            case Opcode::Pack:
            case Opcode::Unpack:
                ins.type = resolver.parse(bs);
                if (!ins.type.is_datatype()) bs.fail("pack/unpack expects a datatype");
                break;
            case Opcode::ReadField:
            case Opcode::WriteField: {
                if (bs.peek().kind == Token::Kind::Number) {
                    ins.index = parse_u32(bs);
                } else {
                    // `read_field Type.field` resolves the field name to its index.
                    const std::string tname = bs.ident();
                    bs.expect(".");
                    const std::string field = bs.ident();
                    ins.index = resolver.field_index(resolver.resolve_datatype(tname, bs), field, bs);
                }
                break;
            }
            case Opcode::VecNew: ins.type = resolver.parse(bs); break;
            case Opcode::EmitEvent: {
                const Token tag = bs.next();
                if (tag.kind != Token::Kind::Number) bs.fail("expected event tag");
                ins.value = parse_u256_literal(tag.text);
                ins.index = bs.at_end() ? 0 : parse_u32(bs);
                break;
            }
            default: break;
            }
            bs.expect_end();
            f.body.push_back(std::move(ins));
        }
        if (!closed) ts.fail("function " + f.name + " is missing 'end'");
        for (const auto& fx : fixups) {
            auto it = labels.find(fx.label);
            if (it == labels.end()) throw ParseError(fx.line, fx.column, "unknown label " + fx.label);
            f.body[fx.instr].index = it->second;
        }
        resolver.set_params({});
        return f;
    }

    std::vector<Line> lines_;
    NameTables names_;
    std::size_t pos_ = 0;
    std::vector<std::string> modules_seen_;
};

std::vector<Line> lex_document(std::string_view text) {
    std::vector<Line> lines;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        ++lineno;
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto toks = tokenize(text.substr(start, end - start), lineno);
        if (!toks.empty()) lines.push_back({lineno, std::move(toks)});
        if (end == text.size()) break;
        start = end + 1;
    }
    return lines;
}

// First pass: collect module, datatype and function names so bodies may reference later declarations.
void prescan(const std::vector<Line>& lines, NameTables& names) {
    std::string module;
    for (const auto& line : lines) {
        const auto& t = line.tokens;
        if (t.empty()) continue;
        if (t[0].text == "module" && t.size() >= 2) {
            module = t[1].text;
            names.datatypes[module];
            names.functions[module];
        } else if ((t[0].text == "datatype" || t[0].text == "struct") && t.size() >= 2) {
            std::uint32_t arity = 0;
            if (t.size() > 2 && t[2].text == "<")
                for (std::size_t i = 3; i < t.size() && t[i].text != ">"; ++i)
                    if (t[i].kind == Token::Kind::Ident) ++arity;
            names.datatypes[module].insert(t[1].text);
            names.arity[module][t[1].text] = arity;
            names.field_names[module][t[1].text];
        } else if (t[0].text == "field" && t.size() >= 2) {
            // fields follow their struct; attach to the most recent struct of this module
        } else {
            for (std::size_t i = 0; i + 1 < t.size(); ++i)
                if (t[i].text == "fn" || t[i].text == "fun") {
                    names.functions[module].insert(t[i + 1].text);
                    break;
                }
        }
    }
    // Field names need a second linear walk to associate them with their struct.
    std::string current;
    module.clear();
    for (const auto& line : lines) {
        const auto& t = line.tokens;
        if (t[0].text == "module" && t.size() >= 2) module = t[1].text;
        else if ((t[0].text == "datatype" || t[0].text == "struct") && t.size() >= 2) current = t[1].text;
        else if (t[0].text == "end") current.clear();
        else if (t[0].text == "field" && t.size() >= 2 && !current.empty())
            names.field_names[module][current].push_back(t[1].text);
    }
}

std::shared_ptr<const Package> parse_with_deps(std::string_view text,
                                               std::vector<std::shared_ptr<const Package>> deps) {
    auto lines = lex_document(text);
    NameTables names;
    for (const auto& d : deps) add_package_names(*d, names);
    prescan(lines, names);
    Parser parser(std::move(lines), std::move(names));
    auto pkg = std::make_shared<Package>(parser.run());
    pkg->dependencies = std::move(deps);
    for (const auto& m : pkg->modules)
        for (const auto& d : pkg->dependencies)
            for (const auto& dm : d->modules)
                if (dm.name == m.name) throw ParseError(0, 0, "module " + m.name + " clashes with a dependency");
    Program program(pkg);
    verify_program(program);
    return pkg;
}

constexpr std::string_view kStdLibrary = R"(package std
module coin
datatype Coin<T> has store
  field value: u64
end
public fn coin_zero<T>(): Coin<T>
  ld u64 0
  pack Coin<T>
  ret
end
public fn coin_value<T>(c: &Coin<T>): u64
  copy_loc c
  read_field Coin.value
  ret
end
public fn coin_split<T>(c: Coin<T>, amount: u64): (Coin<T>, Coin<T>)
  local v: u64
  move_loc c
  unpack Coin<T>
  st_loc v
  copy_loc amount
  copy_loc v
  le
  br_true ok
  abort 1
ok:
  copy_loc amount
  pack Coin<T>
  copy_loc v
  copy_loc amount
  sub
  pack Coin<T>
  ret
end
public fn coin_join<T>(a: Coin<T>, b: Coin<T>): Coin<T>
  move_loc a
  unpack Coin<T>
  move_loc b
  unpack Coin<T>
  add
  pack Coin<T>
  ret
end
public native fn transfer_to_sender<T>(c: Coin<T>)
module object
native fn share<T>(obj: T)
native fn transfer<T>(obj: T)
)";

}  // namespace

std::shared_ptr<const Package> std_package() {
    static const std::shared_ptr<const Package> pkg = parse_with_deps(kStdLibrary, {});
    return pkg;
}

std::shared_ptr<const Package> parse_package(std::string_view text) { return parse_with_deps(text, {std_package()}); }

std::shared_ptr<const Package> load_package_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open package file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_package(ss.str());
}

TypeTag parse_type(std::string_view text, const Program& program) {
    NameTables names;
    for (const auto* m : program.modules()) {
        names.datatypes[m->name];
        names.functions[m->name];
        for (const auto& d : m->datatypes) {
            names.datatypes[m->name].insert(d.name);
            names.arity[m->name][d.name] = d.type_params;
            for (const auto& f : d.fields) names.field_names[m->name][d.name].push_back(f.name);
        }
    }
    TokenStream ts(tokenize(text, 1), 1);
    TypeResolver resolver(names, "");
    TypeTag t = resolver.parse(ts);
    ts.expect_end();
    return t;
}

// ---------------------------------------------------------------------------
// Serializer
// ---------------------------------------------------------------------------

namespace {

std::string u256_to_string(const U256& v) { return v.str(); }

std::string type_list(const std::vector<TypeTag>& ts) {
    std::string s;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (i) s += ", ";
        s += ts[i].to_string();
    }
    return s;
}

std::string params_decl(std::uint32_t n) {
    if (n == 0) return "";
    std::string s = "<";
    for (std::uint32_t i = 0; i < n; ++i) {
        if (i) s += ", ";
        s += "T" + std::to_string(i);
    }
    return s + ">";
}

}  // namespace

std::string serialize_package(const Package& pkg) {
    std::ostringstream out;
    out << "package " << pkg.name << "\n";
    for (const auto& m : pkg.modules) {
        out << "module " << m.name << "\n";
        for (const auto& d : m.datatypes) {
            out << "datatype " << d.name << params_decl(d.type_params);
            std::vector<std::string> abil;
            if (d.abilities.has(Ability::Copy)) abil.push_back("copy");
            if (d.abilities.has(Ability::Drop)) abil.push_back("drop");
            if (d.abilities.has(Ability::Store)) abil.push_back("store");
            if (d.abilities.has(Ability::Key)) abil.push_back("key");
            if (!abil.empty()) {
                out << " has ";
                for (std::size_t i = 0; i < abil.size(); ++i) out << (i ? ", " : "") << abil[i];
            }
            out << "\n";
            for (const auto& f : d.fields) out << "  field " << f.name << ": " << f.type.to_string() << "\n";
            out << "end\n";
        }
        for (const auto& f : m.functions) {
            if (f.visibility == Visibility::Public) out << "public ";
            if (f.is_native) out << "native ";
            out << "fn " << f.name << params_decl(f.type_params) << "(";
            for (std::size_t i = 0; i < f.inputs.size(); ++i) {
                if (i) out << ", ";
                out << "p" << i << ": ";
                if (f.inputs[i].mode == RefMode::ByRef) out << "&";
                if (f.inputs[i].mode == RefMode::ByMutRef) out << "&mut ";
                out << f.inputs[i].type.to_string();
            }
            out << ")";
            if (!f.outputs.empty()) out << ": (" << type_list(f.outputs) << ")";
            out << "\n";
            if (f.is_native) continue;
            for (std::size_t i = 0; i < f.locals.size(); ++i)
                out << "  local l" << i << ": " << f.locals[i].to_string() << "\n";
            std::set<std::uint32_t> targets;
            for (const auto& ins : f.body)
                if (ins.op == Opcode::Branch || is_conditional_branch(ins.op)) targets.insert(ins.index);
            for (std::size_t pc = 0; pc < f.body.size(); ++pc) {
                if (targets.count(static_cast<std::uint32_t>(pc))) out << "L" << pc << ":\n";
                const auto& ins = f.body[pc];
                out << "  " << opcode_name(ins.op);
                switch (ins.op) {
                case Opcode::LdConst:
                    out << " " << ins.type.to_string() << " "
                        << (ins.type.is_bool() ? (ins.value != 0 ? "true" : "false") : u256_to_string(ins.value));
                    break;
                case Opcode::LdParam:
                case Opcode::CopyLocal:
                case Opcode::MoveLocal:
                case Opcode::StoreLocal:
                case Opcode::ReadField:
                case Opcode::WriteField: out << " " << ins.index; break;
                case Opcode::Cast:
                case Opcode::Pack:
                case Opcode::Unpack:
                case Opcode::VecNew: out << " " << ins.type.to_string(); break;
                case Opcode::Branch:
                case Opcode::BrTrue:
                case Opcode::BrFalse: out << " L" << ins.index; break;
                case Opcode::Abort: out << " " << u256_to_string(ins.value); break;
                case Opcode::EmitEvent: out << " " << u256_to_string(ins.value) << " " << ins.index; break;
                case Opcode::Call:
                    out << " " << ins.callee_module << "::" << ins.callee_name;
                    if (!ins.type_args.empty()) out << "<" << type_list(ins.type_args) << ">";
                    break;
                default: break;
                }
                out << "\n";
            }
            if (targets.count(static_cast<std::uint32_t>(f.body.size()))) out << "L" << f.body.size() << ":\n";
            out << "end\n";
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Verifier
// ---------------------------------------------------------------------------

namespace {

struct SlotType {
    TypeTag type;
    RefMode ref = RefMode::ByValue;
    friend bool operator==(const SlotType&, const SlotType&) = default;
    std::string to_string() const {
        std::string p = ref == RefMode::ByRef ? "&" : ref == RefMode::ByMutRef ? "&mut " : "";
        return p + type.to_string();
    }
};

class FunctionVerifier {
public:
    FunctionVerifier(const Program& prog, const Module& mod, const FunctionDecl& fn)
        : prog_(prog), mod_(mod), fn_(fn), name_(mod.name + "::" + fn.name) {}

    void run() {
        for (const auto& p : fn_.inputs)
            if (!prog_.well_formed(p.type, fn_.type_params)) fail(0, "ill-formed parameter type " + p.type.to_string());
        for (const auto& o : fn_.outputs)
            if (!prog_.well_formed(o, fn_.type_params)) fail(0, "ill-formed return type " + o.to_string());
        for (const auto& l : fn_.locals)
            if (!prog_.well_formed(l, fn_.type_params)) fail(0, "ill-formed local type " + l.to_string());
        if (fn_.name == "init" && (!fn_.inputs.empty() || !fn_.outputs.empty() || fn_.type_params != 0))
            fail(0, "module initializer must take no parameters and return nothing");
        if (fn_.is_native) {
            if (!fn_.body.empty()) fail(0, "native function with a body");
            return;
        }
        if (fn_.body.empty()) fail(0, "empty body lacks a terminal ret");
        for (const auto& p : fn_.inputs) locals_.push_back({p.type, p.mode});
        for (const auto& l : fn_.locals) locals_.push_back({l, RefMode::ByValue});

        std::vector<std::optional<std::vector<SlotType>>> entry(fn_.body.size());
        std::vector<std::size_t> work{0};
        entry[0] = std::vector<SlotType>{};
        while (!work.empty()) {
            const std::size_t pc = work.back();
            work.pop_back();
            std::vector<SlotType> stack = *entry[pc];
            auto succs = step(pc, stack);
            for (std::size_t s : succs) {
                if (s >= fn_.body.size()) fail(fn_.body.size() - 1, "control falls off the end without ret");
                if (!entry[s]) {
                    entry[s] = stack;
                    work.push_back(s);
                } else if (*entry[s] != stack) {
                    fail(pc, "stack mismatch at join point " + std::to_string(s));
                }
            }
        }
    }

private:
    [[noreturn]] void fail(std::size_t pc, const std::string& what) const { throw VerifyError(name_, pc, what); }

    SlotType pop(std::vector<SlotType>& st, std::size_t pc) const {
        if (st.empty()) fail(pc, "stack underflow");
        SlotType t = st.back();
        st.pop_back();
        return t;
    }

    TypeTag pop_value(std::vector<SlotType>& st, std::size_t pc) const {
        SlotType t = pop(st, pc);
        if (t.ref != RefMode::ByValue) fail(pc, "expected a value, found reference " + t.to_string());
        return t.type;
    }

    TypeTag pop_int(std::vector<SlotType>& st, std::size_t pc) const {
        TypeTag t = pop_value(st, pc);
        if (!t.is_int()) fail(pc, "expected integer operand, found " + t.to_string());
        return t;
    }

    void check_local(std::uint32_t i, std::size_t pc) const {
        if (i >= locals_.size()) fail(pc, "local index " + std::to_string(i) + " out of range");
    }

    void check_type(const TypeTag& t, std::size_t pc) const {
        if (!prog_.well_formed(t, fn_.type_params)) fail(pc, "ill-formed type " + t.to_string());
    }

    std::vector<std::size_t> step(std::size_t pc, std::vector<SlotType>& st) const {
        const Instruction& ins = fn_.body[pc];
        const std::size_t next = pc + 1;
        switch (ins.op) {
        case Opcode::LdConst:
            if (!ins.type.is_primitive()) fail(pc, "constant must be primitive");
            if (ins.value > prim_max(ins.type.prim())) fail(pc, "constant out of range");
            st.push_back({ins.type});
            return {next};
        case Opcode::LdParam:
            if (ins.index >= fn_.inputs.size()) fail(pc, "parameter index out of range");
            st.push_back(locals_[ins.index]);
            return {next};
        case Opcode::CopyLocal:
            check_local(ins.index, pc);
            if (locals_[ins.index].ref == RefMode::ByValue && !prog_.has_ability(locals_[ins.index].type, Ability::Copy))
                fail(pc, "copy of non-copyable local");
            st.push_back(locals_[ins.index]);
            return {next};
        case Opcode::MoveLocal:
            check_local(ins.index, pc);
            st.push_back(locals_[ins.index]);
            return {next};
        case Opcode::StoreLocal: {
            check_local(ins.index, pc);
            SlotType t = pop(st, pc);
            if (t != locals_[ins.index])
                fail(pc, "store of " + t.to_string() + " into local of type " + locals_[ins.index].to_string());
            return {next};
        }
        case Opcode::Pop: {
            SlotType t = pop(st, pc);
            if (t.ref == RefMode::ByValue && !prog_.has_ability(t.type, Ability::Drop))
                fail(pc, "pop of value without drop: " + t.to_string());
            return {next};
        }
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::Mul:
        case Opcode::Div:
        case Opcode::Mod: {
            TypeTag b = pop_int(st, pc);
            TypeTag a = pop_int(st, pc);
            if (a != b) fail(pc, "operand width mismatch " + a.to_string() + " vs " + b.to_string());
            st.push_back({a});
            return {next};
        }
        case Opcode::Shl:
        case Opcode::Shr: {
            TypeTag b = pop_int(st, pc);
            if (b.prim() != Prim::U8) fail(pc, "shift amount must be u8");
            st.push_back({pop_int(st, pc)});
            return {next};
        }
        case Opcode::BitAnd:
        case Opcode::BitOr:
        case Opcode::BitXor: {
            TypeTag b = pop_value(st, pc);
            TypeTag a = pop_value(st, pc);
            if (a != b || !a.is_primitive()) fail(pc, "bitwise operands must be equal primitive types");
            st.push_back({a});
            return {next};
        }
        case Opcode::Not: {
            TypeTag a = pop_value(st, pc);
            if (!a.is_bool()) fail(pc, "not expects bool");
            st.push_back({a});
            return {next};
        }
        case Opcode::Eq:
        case Opcode::Neq: {
            TypeTag b = pop_value(st, pc);
            TypeTag a = pop_value(st, pc);
            if (a != b) fail(pc, "equality operands differ: " + a.to_string() + " vs " + b.to_string());
            if (!prog_.has_ability(a, Ability::Drop)) fail(pc, "equality on type without drop");
            st.push_back({TypeTag::primitive(Prim::Bool)});
            return {next};
        }
        case Opcode::Lt:
        case Opcode::Le:
        case Opcode::Gt:
        case Opcode::Ge: {
            TypeTag b = pop_int(st, pc);
            TypeTag a = pop_int(st, pc);
            if (a != b) fail(pc, "comparison width mismatch");
            st.push_back({TypeTag::primitive(Prim::Bool)});
            return {next};
        }
        case Opcode::Cast:
            if (!ins.type.is_int()) fail(pc, "cast destination must be an integer");
            pop_int(st, pc);
            st.push_back({ins.type});
            return {next};
        case Opcode::Branch:
            if (ins.index >= fn_.body.size()) fail(pc, "branch target out of range");
            return {ins.index};
        case Opcode::BrTrue:
        case Opcode::BrFalse: {
            if (ins.index >= fn_.body.size()) fail(pc, "branch target out of range");
            if (!pop_value(st, pc).is_bool()) fail(pc, "branch condition must be bool");
            return {next, ins.index};
        }
        case Opcode::Abort: return {};
        case Opcode::Call: {
            auto id = prog_.find_function(ins.callee_module, ins.callee_name);
            if (!id) fail(pc, "unknown callee " + ins.callee_module + "::" + ins.callee_name);
            const FunctionDecl& callee = *prog_.function(*id).decl;
            for (const auto& t : ins.type_args) check_type(t, pc);
            Signature sig;
            try {
                sig = signature_of(callee, ins.type_args);
            } catch (const ArityError& e) {
                fail(pc, e.what());
            }
            for (std::size_t i = sig.inputs.size(); i-- > 0;) {
                SlotType got = pop(st, pc);
                const RefMode want = callee.inputs[i].mode;
                const bool mode_ok = got.ref == want || (want == RefMode::ByRef && got.ref == RefMode::ByMutRef);
                if (!mode_ok || got.type != sig.inputs[i])
                    fail(pc, "argument " + std::to_string(i) + " of " + callee.name + ": expected " +
                                 SlotType{sig.inputs[i], want}.to_string() + ", found " + got.to_string());
            }
            for (auto& o : sig.outputs) st.push_back({o});
            return {next};
        }
        case Opcode::Pack:
        case Opcode::Unpack: {
            check_type(ins.type, pc);
            const DatatypeDecl* d = prog_.find_datatype(ins.type.datatype_ref());
            if (ins.op == Opcode::Pack) {
                for (std::size_t i = d->fields.size(); i-- > 0;) {
                    TypeTag want = substitute(d->fields[i].type, ins.type.args());
                    TypeTag got = pop_value(st, pc);
                    if (got != want)
                        fail(pc, "field " + d->fields[i].name + ": expected " + want.to_string() + ", found " +
                                     got.to_string());
                }
                st.push_back({ins.type});
            } else {
                TypeTag got = pop_value(st, pc);
                if (got != ins.type) fail(pc, "unpack of " + got.to_string() + " as " + ins.type.to_string());
                for (const auto& f : d->fields) st.push_back({substitute(f.type, ins.type.args())});
            }
            return {next};
        }
        case Opcode::ReadField:
        case Opcode::WriteField: {
            std::optional<TypeTag> value;
            if (ins.op == Opcode::WriteField) value = pop_value(st, pc);
            SlotType r = pop(st, pc);
            if (r.ref == RefMode::ByValue || !r.type.is_datatype()) fail(pc, "field access needs a struct reference");
            if (ins.op == Opcode::WriteField && r.ref != RefMode::ByMutRef) fail(pc, "write through immutable reference");
            const DatatypeDecl* d = prog_.find_datatype(r.type.datatype_ref());
            if (ins.index >= d->fields.size()) fail(pc, "field index out of range");
            TypeTag ft = substitute(d->fields[ins.index].type, r.type.args());
            if (ins.op == Opcode::ReadField) {
                if (!prog_.has_ability(ft, Ability::Copy)) fail(pc, "read of non-copyable field");
                st.push_back({ft});
            } else {
                if (*value != ft) fail(pc, "write of " + value->to_string() + " into field of type " + ft.to_string());
                if (!prog_.has_ability(ft, Ability::Drop)) fail(pc, "overwrite of field without drop");
            }
            return {next};
        }
        case Opcode::VecNew:
            check_type(ins.type, pc);
            st.push_back({TypeTag::vector(ins.type)});
            return {next};
        case Opcode::VecPush: {
            TypeTag e = pop_value(st, pc);
            TypeTag v = pop_value(st, pc);
            if (!v.is_vector() || v.element() != e) fail(pc, "vec_push type mismatch");
            st.push_back({v});
            return {next};
        }
        case Opcode::VecPop: {
            TypeTag v = pop_value(st, pc);
            if (!v.is_vector()) fail(pc, "vec_pop expects a vector");
            st.push_back({v});
            st.push_back({v.element()});
            return {next};
        }
        case Opcode::VecLen: {
            if (!pop_value(st, pc).is_vector()) fail(pc, "vec_len expects a vector");
            st.push_back({TypeTag::primitive(Prim::U64)});
            return {next};
        }
        case Opcode::VecBorrow: {
            if (pop_value(st, pc) != TypeTag::primitive(Prim::U64)) fail(pc, "vector index must be u64");
            TypeTag v = pop_value(st, pc);
            if (!v.is_vector()) fail(pc, "vec_borrow expects a vector");
            if (!prog_.has_ability(v.element(), Ability::Copy)) fail(pc, "vec_borrow of non-copyable element");
            st.push_back({v.element()});
            return {next};
        }
        case Opcode::EmitEvent:
            for (std::uint32_t i = 0; i < ins.index; ++i)
                if (!pop_value(st, pc).is_primitive()) fail(pc, "event payload must be primitive");
            return {next};
        case Opcode::Ret: {
            if (st.size() != fn_.outputs.size())
                fail(pc, "ret with " + std::to_string(st.size()) + " values, expected " +
                             std::to_string(fn_.outputs.size()));
            for (std::size_t i = 0; i < st.size(); ++i)
                if (st[i].ref != RefMode::ByValue || st[i].type != fn_.outputs[i])
                    fail(pc, "return value " + std::to_string(i) + " has type " + st[i].to_string());
            return {};
        }
        }
        return {next};
    }

    const Program& prog_;
    const Module& mod_;
    const FunctionDecl& fn_;
    std::string name_;
    std::vector<SlotType> locals_;
};

void verify_datatype(const Program& prog, const Module& m, const DatatypeDecl& d) {
    const std::string name = m.name + "::" + d.name;
    for (const auto& f : d.fields) {
        if (!prog.well_formed(f.type, d.type_params)) throw VerifyError(name, 0, "ill-formed field type " + f.type.to_string());
        for (Ability a : {Ability::Copy, Ability::Drop, Ability::Store})
            if (d.abilities.has(a) && !prog.has_ability(f.type, a))
                throw VerifyError(name, 0, "field " + f.name + " lacks an ability required by its struct");
    }
    // No datatype may contain itself by value.
    std::set<DatatypeRef> visiting;
    std::function<void(const DatatypeRef&)> walk = [&](const DatatypeRef& r) {
        if (!visiting.insert(r).second) throw VerifyError(name, 0, "recursive datatype");
        const auto* decl = prog.find_datatype(r);
        std::function<void(const TypeTag&)> visit = [&](const TypeTag& t) {
            if (t.is_datatype()) walk(t.datatype_ref());
            for (const auto& a : t.args()) visit(a);
        };
        for (const auto& f : decl->fields) visit(f.type);
        visiting.erase(r);
    };
    walk(DatatypeRef{m.name, d.name});
}

}  // namespace

void verify_program(const Program& program) {
    for (const auto* m : program.modules())
        for (const auto& d : m->datatypes) verify_datatype(program, *m, d);
    for (const auto& e : program.functions()) FunctionVerifier(program, *e.module, *e.decl).run();
}

}  // namespace tgfuzz
