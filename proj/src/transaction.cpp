#include "tgfuzz/transaction.hpp"

#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace tgfuzz {

TypeTag GraphTrace::resolve(const TypeTag& term) const {
    switch (term.kind()) {
    case TypeTag::Kind::Primitive: return term;
    case TypeTag::Kind::Parameter: {
        const auto i = term.param_index();
        if (i < vars.size() && vars[i]) return resolve(*vars[i]);
        return term;
    }
    case TypeTag::Kind::Vector: return TypeTag::vector(resolve(term.element()));
    case TypeTag::Kind::Datatype: {
        std::vector<TypeTag> args;
        for (const auto& a : term.args()) args.push_back(resolve(a));
        return TypeTag::datatype(term.datatype_ref(), std::move(args));
    }
    }
    return term;
}

std::uint32_t GraphTrace::fresh_var() {
    vars.emplace_back();
    return static_cast<std::uint32_t>(vars.size() - 1);
}

bool GraphTrace::is_concrete() const {
    for (const auto& c : calls)
        for (const auto& t : c.type_args)
            if (!resolve(t).is_concrete()) return false;
    return true;
}

ArgBinding ArgBinding::literal(Prim p, U256 v) {
    ArgBinding b;
    b.kind = Kind::Literal;
    b.prim = p;
    b.values = {v};
    return b;
}

ArgBinding ArgBinding::literal_vector(Prim p, std::vector<U256> v) {
    ArgBinding b;
    b.kind = Kind::LiteralVector;
    b.prim = p;
    b.values = std::move(v);
    return b;
}

ArgBinding ArgBinding::result(std::uint32_t call, std::uint32_t output) {
    ArgBinding b;
    b.kind = Kind::Result;
    b.call = call;
    b.output = output;
    return b;
}

ArgBinding ArgBinding::pool(ObjectId id) {
    ArgBinding b;
    b.kind = Kind::PoolObject;
    b.object = id;
    return b;
}

std::string TypeError::to_string() const {
    std::string s = "call " + std::to_string(call) + " position " + std::to_string(position) + ": " + message;
    if (!expected.empty() || !actual.empty()) s += " (expected " + expected + ", found " + actual + ")";
    return s;
}

std::vector<std::vector<TypeTag>> output_types(const Transaction& txn, const Program& program) {
    std::vector<std::vector<TypeTag>> out;
    for (const auto& c : txn.calls) {
        if (c.function >= program.function_count()) {
            out.emplace_back();
            continue;
        }
        try {
            out.push_back(signature_of(*program.function(c.function).decl, c.type_args).outputs);
        } catch (const std::exception&) {
            out.emplace_back();
        }
    }
    return out;
}

namespace {

const char* mode_prefix(RefMode m) { return m == RefMode::ByRef ? "&" : m == RefMode::ByMutRef ? "&mut " : ""; }

std::string binding_kind(const ArgBinding& b) {
    switch (b.kind) {
    case ArgBinding::Kind::Literal: return std::string("literal ") + prim_name(b.prim);
    case ArgBinding::Kind::LiteralVector: return std::string("literal vector<") + prim_name(b.prim) + ">";
    case ArgBinding::Kind::Result: return "result r" + std::to_string(b.call) + "." + std::to_string(b.output);
    case ArgBinding::Kind::PoolObject: return "object @" + std::to_string(b.object);
    }
    return "?";
}

}  // namespace

std::optional<TypeError> validate(const Transaction& txn, const Program& program, const PoolView& pool) {
    auto err = [](std::size_t call, std::size_t pos, std::string message, std::string expected = {},
                  std::string actual = {}) {
        return TypeError{call, pos, std::move(expected), std::move(actual), std::move(message)};
    };
    std::map<ObjectId, const PoolObjectInfo*> objects;
    for (const auto& o : pool) objects[o.id] = &o;

    std::vector<std::vector<TypeTag>> outputs;
    std::vector<std::vector<std::uint32_t>> uses;
    std::set<ObjectId> moved;

    for (std::size_t ci = 0; ci < txn.calls.size(); ++ci) {
        const CallSpec& call = txn.calls[ci];
        if (call.function >= program.function_count()) return err(ci, 0, "unknown function");
        const FunctionDecl& fn = *program.function(call.function).decl;
        if (fn.visibility != Visibility::Public)
            return err(ci, 0, "function " + program.function(call.function).qualified + " is not public");
        if (call.type_args.size() != fn.type_params)
            return err(ci, 0, "wrong number of type arguments", std::to_string(fn.type_params),
                       std::to_string(call.type_args.size()));
        for (const auto& t : call.type_args)
            if (!t.is_concrete() || !program.well_formed(t, 0)) return err(ci, 0, "type argument " + t.to_string() + " is not a concrete type");
        const Signature sig = signature_of(fn, call.type_args);
        if (call.args.size() != sig.inputs.size())
            return err(ci, call.args.size(), "wrong number of arguments", std::to_string(sig.inputs.size()),
                       std::to_string(call.args.size()));

        for (std::size_t ai = 0; ai < call.args.size(); ++ai) {
            const ArgBinding& b = call.args[ai];
            const TypeTag& want = sig.inputs[ai];
            const RefMode mode = fn.inputs[ai].mode;
            const std::string expected = mode_prefix(mode) + want.to_string();
            switch (b.kind) {
            case ArgBinding::Kind::Literal:
                if (mode != RefMode::ByValue || want != TypeTag::primitive(b.prim))
                    return err(ci, ai, "type mismatch", expected, binding_kind(b));
                if (b.values.size() != 1 || b.values[0] > prim_max(b.prim))
                    return err(ci, ai, "literal does not fit its width", expected, binding_kind(b));
                break;
            case ArgBinding::Kind::LiteralVector:
                if (mode != RefMode::ByValue || want != TypeTag::vector(TypeTag::primitive(b.prim)))
                    return err(ci, ai, "type mismatch", expected, binding_kind(b));
                for (const auto& v : b.values)
                    if (v > prim_max(b.prim)) return err(ci, ai, "vector element does not fit its width", expected, binding_kind(b));
                break;
            case ArgBinding::Kind::Result: {
                if (b.call >= ci) return err(ci, ai, "result reference does not point to an earlier call", expected, binding_kind(b));
                if (b.output >= outputs[b.call].size())
                    return err(ci, ai, "result output index out of range", expected, binding_kind(b));
                const TypeTag& got = outputs[b.call][b.output];
                if (mode != RefMode::ByValue)
                    return err(ci, ai, "references may only be taken to pool objects", expected, got.to_string());
                if (got != want) return err(ci, ai, "type mismatch", expected, got.to_string());
                auto& n = uses[b.call][b.output];
                if (n > 0 && !program.has_ability(got, Ability::Copy))
                    return err(ci, ai, "result r" + std::to_string(b.call) + "." + std::to_string(b.output) +
                                           " used more than once", expected, got.to_string());
                ++n;
                break;
            }
            case ArgBinding::Kind::PoolObject: {
                auto it = objects.find(b.object);
                if (it == objects.end()) return err(ci, ai, "unknown pool object", expected, binding_kind(b));
                const PoolObjectInfo& obj = *it->second;
                if (obj.type != want) return err(ci, ai, "type mismatch", expected, obj.type.to_string());
                if (moved.count(b.object)) return err(ci, ai, "pool object used after move", expected, binding_kind(b));
                if (mode == RefMode::ByValue) {
                    if (obj.ownership != Ownership::SenderOwned)
                        return err(ci, ai, "shared object passed by value", expected, binding_kind(b));
                    moved.insert(b.object);
                }
                break;
            }
            }
        }
        outputs.push_back(sig.outputs);
        uses.emplace_back(sig.outputs.size(), 0);
    }
    for (std::size_t ci = 0; ci < outputs.size(); ++ci)
        for (std::size_t oi = 0; oi < outputs[ci].size(); ++oi)
            if (program.is_hot_potato(outputs[ci][oi]) && uses[ci][oi] != 1)
                return err(ci, oi, "unconsumed hot potato at call " + std::to_string(ci) + " output " + std::to_string(oi),
                           outputs[ci][oi].to_string(), "no consumer");
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Replay format
// ---------------------------------------------------------------------------

namespace {

std::string compact_type(const TypeTag& t) {
    std::string s = t.to_string();
    std::string out;
    for (char c : s)
        if (c != ' ') out += c;
    return out;
}

}  // namespace

std::string serialize_transaction(const Transaction& txn, const Program& program) {
    std::ostringstream out;
    for (const auto& c : txn.calls) {
        out << "call " << program.function(c.function).qualified;
        if (!c.type_args.empty()) {
            out << "<";
            for (std::size_t i = 0; i < c.type_args.size(); ++i) out << (i ? "," : "") << compact_type(c.type_args[i]);
            out << ">";
        }
        for (const auto& b : c.args) {
            out << " ";
            switch (b.kind) {
            case ArgBinding::Kind::Literal:
                if (b.prim == Prim::Bool) out << (b.values.at(0) != 0 ? "true" : "false");
                else out << b.values.at(0).str() << prim_name(b.prim);
                break;
            case ArgBinding::Kind::LiteralVector:
                out << "[";
                for (std::size_t i = 0; i < b.values.size(); ++i) out << (i ? "," : "") << b.values[i].str();
                out << "]" << prim_name(b.prim);
                break;
            case ArgBinding::Kind::Result: out << "r" << b.call << "." << b.output; break;
            case ArgBinding::Kind::PoolObject: out << "@" << b.object; break;
            }
        }
        out << "\n";
    }
    return out.str();
}

namespace {

std::uint32_t to_u32(std::string_view s, std::size_t line, std::size_t col) {
    try {
        U256 v = parse_u256_literal(s);
        if (v > 0xFFFFFFFFu) throw std::invalid_argument("too large");
        return static_cast<std::uint32_t>(v);
    } catch (const std::invalid_argument& e) {
        throw ParseError(line, col, std::string("bad index '") + std::string(s) + "'");
    }
}

ArgBinding parse_arg(const std::string& tok, std::size_t line, std::size_t col) {
    if (tok == "true") return ArgBinding::literal(Prim::Bool, 1);
    if (tok == "false") return ArgBinding::literal(Prim::Bool, 0);
    if (tok[0] == '@') return ArgBinding::pool(static_cast<ObjectId>(to_u32(tok.substr(1), line, col)));
    if (tok[0] == 'r') {
        const auto dot = tok.find('.');
        if (dot == std::string::npos) throw ParseError(line, col, "result reference needs r<call>.<output>");
        return ArgBinding::result(to_u32(tok.substr(1, dot - 1), line, col), to_u32(tok.substr(dot + 1), line, col));
    }
    auto split_suffix = [&](const std::string& s) -> std::pair<std::string, Prim> {
        for (auto p : {Prim::U128, Prim::U256, Prim::U16, Prim::U32, Prim::U64, Prim::U8}) {
            const std::string suffix = prim_name(p);
            if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
                return {s.substr(0, s.size() - suffix.size()), p};
        }
        throw ParseError(line, col, "literal '" + s + "' needs a type suffix");
    };
    try {
        if (tok[0] == '[') {
            const auto close = tok.find(']');
            if (close == std::string::npos) throw ParseError(line, col, "unterminated vector literal");
            auto p = prim_from_name(tok.substr(close + 1));
            if (!p) throw ParseError(line, col, "vector literal needs an element type suffix");
            std::vector<U256> vals;
            std::string body = tok.substr(1, close - 1);
            std::size_t start = 0;
            while (start < body.size()) {
                auto comma = body.find(',', start);
                if (comma == std::string::npos) comma = body.size();
                vals.push_back(parse_u256_literal(body.substr(start, comma - start)));
                start = comma + 1;
            }
            return ArgBinding::literal_vector(*p, std::move(vals));
        }
        auto [digits, p] = split_suffix(tok);
        return ArgBinding::literal(p, parse_u256_literal(digits));
    } catch (const std::invalid_argument& e) {
        throw ParseError(line, col, e.what());
    }
}

}  // namespace

Transaction parse_transaction(std::string_view text, const Program& program) {
    Transaction txn;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
        std::istringstream ls(raw);
        std::string kw;
        if (!(ls >> kw)) continue;
        if (kw != "call") throw ParseError(lineno, 1, "expected 'call'");
        std::string target;
        if (!(ls >> target)) throw ParseError(lineno, 6, "missing function name");
        CallSpec call;
        std::string name = target;
        if (auto lt = target.find('<'); lt != std::string::npos) {
            if (target.back() != '>') throw ParseError(lineno, 6, "unterminated type argument list");
            name = target.substr(0, lt);
            std::string inner = target.substr(lt + 1, target.size() - lt - 2);
            int depth = 0;
            std::size_t start = 0;
            for (std::size_t i = 0; i <= inner.size(); ++i) {
                if (i == inner.size() || (inner[i] == ',' && depth == 0)) {
                    try {
                        call.type_args.push_back(parse_type(inner.substr(start, i - start), program));
                    } catch (const ParseError& e) {
                        throw ParseError(lineno, 6, e.what());
                    }
                    start = i + 1;
                } else if (inner[i] == '<') {
                    ++depth;
                } else if (inner[i] == '>') {
                    --depth;
                }
            }
        }
        auto id = program.find_function(name);
        if (!id) throw ParseError(lineno, 6, "unknown function " + name);
        call.function = *id;
        std::string tok;
        while (ls >> tok) call.args.push_back(parse_arg(tok, lineno, static_cast<std::size_t>(ls.tellg())));
        txn.calls.push_back(std::move(call));
    }
    return txn;
}

GraphTrace trace_of(const Transaction& txn) {
    GraphTrace t;
    for (const auto& c : txn.calls) {
        TraceCall tc;
        tc.function = c.function;
        tc.type_args = c.type_args;
        for (const auto& b : c.args) {
            TraceInput in;
            switch (b.kind) {
            case ArgBinding::Kind::Literal:
            case ArgBinding::Kind::LiteralVector:
                in.kind = TraceInput::Kind::Literal;
                in.values = b.values;
                break;
            case ArgBinding::Kind::Result:
                in.kind = TraceInput::Kind::Result;
                in.call = b.call;
                in.output = b.output;
                break;
            case ArgBinding::Kind::PoolObject:
                in.kind = TraceInput::Kind::Pool;
                in.object = b.object;
                break;
            }
            tc.inputs.push_back(std::move(in));
        }
        t.calls.push_back(std::move(tc));
    }
    return t;
}

}  // namespace tgfuzz
