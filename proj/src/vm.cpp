#include "tgfuzz/vm.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tgfuzz {

Value Value::integer(Prim p, U256 v, SymRef sym) {
    Value out;
    out.kind = Kind::Int;
    out.prim = p;
    out.num = v;
    out.sym = std::move(sym);
    return out;
}

Value Value::boolean(bool b, SymRef sym) {
    Value out;
    out.kind = Kind::Bool;
    out.prim = Prim::Bool;
    out.num = b ? 1 : 0;
    out.sym = std::move(sym);
    return out;
}

Value Value::vec(TypeTag element, std::vector<Value> elems) {
    Value out;
    out.kind = Kind::Vec;
    out.type = std::move(element);
    out.elems = std::move(elems);
    return out;
}

Value Value::structure(TypeTag type, std::vector<Value> fields) {
    Value out;
    out.kind = Kind::Struct;
    out.type = std::move(type);
    out.elems = std::move(fields);
    return out;
}

Value Value::ref(ObjectId id, bool mut) {
    Value out;
    out.kind = Kind::Ref;
    out.object = id;
    out.mut_ref = mut;
    return out;
}

std::string Value::to_string() const {
    std::ostringstream out;
    switch (kind) {
    case Kind::Int: out << num << prim_name(prim); break;
    case Kind::Bool: out << (num != 0 ? "true" : "false"); break;
    case Kind::Ref: out << (mut_ref ? "&mut @" : "&@") << object; break;
    case Kind::Vec:
    case Kind::Struct:
        out << (kind == Kind::Vec ? "[" : type.to_string() + "{");
        for (std::size_t i = 0; i < elems.size(); ++i) out << (i ? ", " : "") << elems[i].to_string();
        out << (kind == Kind::Vec ? "]" : "}");
        break;
    }
    return out.str();
}

bool Value::same(const Value& other) const {
    if (kind != other.kind) return false;
    switch (kind) {
    case Kind::Int:
    case Kind::Bool: return prim == other.prim && num == other.num;
    case Kind::Ref: return object == other.object;
    case Kind::Vec:
    case Kind::Struct:
        if (type != other.type || elems.size() != other.elems.size()) return false;
        for (std::size_t i = 0; i < elems.size(); ++i)
            if (!elems[i].same(other.elems[i])) return false;
        return true;
    }
    return false;
}

PoolView WorldState::view() const {
    PoolView out;
    out.reserve(objects.size());
    for (const auto& [id, obj] : objects) out.push_back({id, obj.type, obj.ownership});
    return out;
}

ObjectId WorldState::add(TypeTag type, Ownership ownership, Value value) {
    const ObjectId id = next_id++;
    objects[id] = PoolObject{id, std::move(type), ownership, std::move(value)};
    return id;
}

namespace {

bool is_coin(const TypeTag& t) {
    return t.is_datatype() && t.datatype_ref().module == "coin" && t.datatype_ref().name == "Coin" && t.args().size() == 1;
}

void scan_coins(const Value& v, std::map<TypeTag, U256>& out) {
    if (v.kind == Value::Kind::Struct && is_coin(v.type) && !v.elems.empty()) {
        out[v.type.args()[0]] += v.elems[0].num;
        return;
    }
    if (v.kind == Value::Kind::Struct || v.kind == Value::Kind::Vec)
        for (const auto& e : v.elems) scan_coins(e, out);
}

}  // namespace

std::map<TypeTag, U256> WorldState::sender_balances() const {
    std::map<TypeTag, U256> out;
    for (const auto& [id, obj] : objects)
        if (obj.ownership == Ownership::SenderOwned) scan_coins(obj.value, out);
    return out;
}

const char* exec_status_name(ExecStatus s) {
    switch (s) {
    case ExecStatus::Success: return "success";
    case ExecStatus::Abort: return "abort";
    case ExecStatus::OutOfGas: return "out_of_gas";
    }
    return "?";
}

const char* abort_kind_name(AbortKind k) {
    switch (k) {
    case AbortKind::Explicit: return "explicit";
    case AbortKind::ArithmeticOverflow: return "arithmetic_overflow";
    case AbortKind::DivisionByZero: return "division_by_zero";
    case AbortKind::ShiftOverflow: return "shift_overflow";
    case AbortKind::CastOutOfRange: return "cast_out_of_range";
    case AbortKind::VectorBounds: return "vector_bounds";
    case AbortKind::Invariant: return "invariant";
    }
    return "?";
}

namespace {

struct AbortSignal {
    AbortInfo info;
};
struct OutOfGasSignal {};

struct Frame {
    FunctionId fn = 0;
    const FunctionDecl* decl = nullptr;
    std::vector<TypeTag> type_args;
    std::vector<std::optional<Value>> locals;
    std::uint32_t pc = 0;
    std::size_t base = 0;
};

SymOp binop_of(Opcode op) {
    switch (op) {
    case Opcode::Add: return SymOp::Add;
    case Opcode::Sub: return SymOp::Sub;
    case Opcode::Mul: return SymOp::Mul;
    case Opcode::Div: return SymOp::Div;
    case Opcode::Mod: return SymOp::Mod;
    case Opcode::Shl: return SymOp::Shl;
    case Opcode::Shr: return SymOp::Shr;
    case Opcode::BitAnd: return SymOp::And;
    case Opcode::BitOr: return SymOp::Or;
    case Opcode::BitXor: return SymOp::Xor;
    case Opcode::Eq: return SymOp::Eq;
    case Opcode::Neq: return SymOp::Neq;
    case Opcode::Lt: return SymOp::Lt;
    case Opcode::Le: return SymOp::Le;
    case Opcode::Gt: return SymOp::Gt;
    case Opcode::Ge: return SymOp::Ge;
    default: return SymOp::Const;
    }
}

AbortKind abort_kind_of(Opcode op) {
    switch (op) {
    case Opcode::Div:
    case Opcode::Mod: return AbortKind::DivisionByZero;
    case Opcode::Shl:
    case Opcode::Shr: return AbortKind::ShiftOverflow;
    default: return AbortKind::ArithmeticOverflow;
    }
}

class Interpreter {
public:
    Interpreter(const Program& program, WorldState& state, const ExecOptions& options, ExecResult& result)
        : prog_(program), state_(state), opts_(options), res_(result) {}

    std::uint32_t call_index = 0;

    std::vector<Value> invoke(FunctionId fn, std::vector<TypeTag> type_args, std::vector<Value> args) {
        const FunctionDecl& decl = *prog_.function(fn).decl;
        if (decl.is_native) {
            native(fn, type_args, std::move(args));
            return {};
        }
        stack_.clear();
        frames_.clear();
        push_frame(fn, std::move(type_args), std::move(args));
        run();
        return std::move(stack_);
    }

    std::vector<CoverageKey> coverage;

private:
    SymRef shadow(const Value& v) const { return v.sym ? v.sym : sym_const(v.prim, v.num); }

    [[noreturn]] void fail(AbortKind kind, const U256& code, std::string message = {}) {
        AbortInfo info;
        info.kind = kind;
        info.code = code;
        info.call_index = call_index;
        if (!frames_.empty()) {
            info.function = frames_.back().fn;
            info.pc = frames_.back().pc;
        }
        info.message = std::move(message);
        throw AbortSignal{std::move(info)};
    }

    void notify(const Frame& f, const Instruction& ins, const Value* lhs, const Value* rhs, const Value* result,
                bool taken = false, bool aborted = false) {
        if (opts_.observers.empty()) return;
        StepInfo s;
        s.function = f.fn;
        s.pc = f.pc;
        s.call_index = call_index;
        s.depth = static_cast<std::uint32_t>(frames_.size());
        s.ins = &ins;
        s.lhs = lhs;
        s.rhs = rhs;
        s.result = result;
        s.taken = taken;
        s.aborted = aborted;
        for (auto* o : opts_.observers) o->on_step(s);
    }

    void push_frame(FunctionId fn, std::vector<TypeTag> type_args, std::vector<Value> args) {
        const FunctionDecl& decl = *prog_.function(fn).decl;
        Frame f;
        f.fn = fn;
        f.decl = &decl;
        f.type_args = std::move(type_args);
        f.locals.resize(decl.inputs.size() + decl.locals.size());
        for (std::size_t i = 0; i < args.size() && i < f.locals.size(); ++i) f.locals[i] = std::move(args[i]);
        f.base = stack_.size();
        frames_.push_back(std::move(f));
    }

    Value pop() {
        if (stack_.size() <= frames_.back().base) fail(AbortKind::Invariant, 0, "operand stack underflow");
        Value v = std::move(stack_.back());
        stack_.pop_back();
        return v;
    }

    bool copyable(const Value& v) const {
        switch (v.kind) {
        case Value::Kind::Int:
        case Value::Kind::Bool:
        case Value::Kind::Ref: return true;
        case Value::Kind::Vec: return prog_.has_ability(TypeTag::vector(v.type), Ability::Copy);
        case Value::Kind::Struct: return prog_.has_ability(v.type, Ability::Copy);
        }
        return false;
    }

    PoolObject& object(ObjectId id) {
        auto it = state_.objects.find(id);
        if (it == state_.objects.end()) fail(AbortKind::Invariant, 0, "dangling reference to object " + std::to_string(id));
        return it->second;
    }

    void native(FunctionId fn, const std::vector<TypeTag>& type_args, std::vector<Value> args) {
        const auto& e = prog_.function(fn);
        const std::string& name = e.decl->name;
        if (args.size() != 1 || type_args.size() != 1) fail(AbortKind::Invariant, 0, "bad native call " + e.qualified);
        TypeTag t = args[0].kind == Value::Kind::Struct ? args[0].type : type_args[0];
        if (name == "share") state_.add(std::move(t), Ownership::Shared, std::move(args[0]));
        else if (name == "transfer" || name == "transfer_to_sender")
            state_.add(std::move(t), Ownership::SenderOwned, std::move(args[0]));
        else fail(AbortKind::Invariant, 0, "unknown native " + e.qualified);
    }

    void run() {
        const std::size_t bottom = frames_.size() - 1;
        while (frames_.size() > bottom) {
            Frame& f = frames_.back();
            const auto& body = f.decl->body;
            if (f.pc >= body.size()) fail(AbortKind::Invariant, 0, "fell off the end of a function");
            if (res_.gas_used >= opts_.gas_limit) throw OutOfGasSignal{};
            ++res_.gas_used;
            const Instruction& ins = body[f.pc];
            std::uint32_t next = f.pc + 1;
            switch (ins.op) {
            case Opcode::LdConst:
                if (ins.type.prim() == Prim::Bool)
                    stack_.push_back(Value::boolean(ins.value != 0,
                                                    opts_.symbolic ? sym_const(Prim::Bool, ins.value, true) : nullptr));
                else stack_.push_back(Value::integer(ins.type.prim(), ins.value));
                break;
            case Opcode::LdParam:
            case Opcode::CopyLocal:
            case Opcode::MoveLocal: {
                auto& slot = f.locals.at(ins.index);
                if (!slot) fail(AbortKind::Invariant, 0, "use of unavailable local " + std::to_string(ins.index));
                if (ins.op == Opcode::MoveLocal || (ins.op == Opcode::LdParam && !copyable(*slot))) {
                    stack_.push_back(std::move(*slot));
                    slot.reset();
                } else {
                    stack_.push_back(*slot);
                }
                break;
            }
            case Opcode::StoreLocal: f.locals.at(ins.index) = pop(); break;
            case Opcode::Pop: pop(); break;
            case Opcode::Add:
            case Opcode::Sub:
            case Opcode::Mul:
            case Opcode::Div:
            case Opcode::Mod:
            case Opcode::Shl:
            case Opcode::Shr:
            case Opcode::BitAnd:
            case Opcode::BitOr:
            case Opcode::BitXor: {
                Value b = pop();
                Value a = pop();
                const SymOp op = binop_of(ins.op);
                U256 out;
                if (!apply_binop(op, a.prim, a.num, b.num, out)) {
                    notify(f, ins, &a, &b, nullptr, false, true);
                    fail(abort_kind_of(ins.op), 0, std::string(opcode_name(ins.op)) + " failed");
                }
                const bool lossy = ins.op == Opcode::Div && a.num % b.num != 0;
                Value r = a.kind == Value::Kind::Bool ? Value::boolean(out != 0) : Value::integer(a.prim, out);
                if (opts_.symbolic && (a.sym || b.sym || lossy))
                    r.sym = sym_bin(op, a.prim, shadow(a), shadow(b), out, lossy ? static_cast<std::int32_t>(call_index) : -1);
                notify(f, ins, &a, &b, &r);
                stack_.push_back(std::move(r));
                break;
            }
            case Opcode::Not: {
                Value a = pop();
                Value r = Value::boolean(a.num == 0);
                if (opts_.symbolic && a.sym) r.sym = sym_not(a.sym, a.num == 0);
                notify(f, ins, &a, nullptr, &r);
                stack_.push_back(std::move(r));
                break;
            }
            case Opcode::Eq:
            case Opcode::Neq:
            case Opcode::Lt:
            case Opcode::Le:
            case Opcode::Gt:
            case Opcode::Ge: {
                Value b = pop();
                Value a = pop();
                bool v = false;
                switch (ins.op) {
                case Opcode::Eq: v = a.same(b); break;
                case Opcode::Neq: v = !a.same(b); break;
                case Opcode::Lt: v = a.num < b.num; break;
                case Opcode::Le: v = a.num <= b.num; break;
                case Opcode::Gt: v = a.num > b.num; break;
                default: v = a.num >= b.num; break;
                }
                Value r = Value::boolean(v);
                const bool scalar = a.kind == Value::Kind::Int || a.kind == Value::Kind::Bool;
                if (opts_.symbolic && scalar && (a.sym || b.sym))
                    r.sym = sym_cmp(binop_of(ins.op), shadow(a), shadow(b), v);
                notify(f, ins, &a, &b, &r);
                stack_.push_back(std::move(r));
                break;
            }
            case Opcode::Cast: {
                Value a = pop();
                const Prim to = ins.type.prim();
                if (a.num > prim_max(to)) {
                    notify(f, ins, &a, nullptr, nullptr, false, true);
                    fail(AbortKind::CastOutOfRange, 0, "cast out of range");
                }
                Value r = Value::integer(to, a.num);
                if (opts_.symbolic && a.sym) r.sym = sym_cast(to, a.sym, a.num);
                notify(f, ins, &a, nullptr, &r);
                stack_.push_back(std::move(r));
                break;
            }
            case Opcode::Branch: next = ins.index; break;
            case Opcode::BrTrue:
            case Opcode::BrFalse: {
                Value c = pop();
                const bool taken = (ins.op == Opcode::BrTrue) == c.truthy();
                coverage.push_back(coverage_key(f.fn, f.pc, taken));
                notify(f, ins, &c, nullptr, nullptr, taken);
                if (taken) next = ins.index;
                break;
            }
            case Opcode::Abort: fail(AbortKind::Explicit, ins.value, "abort " + ins.value.str());
            case Opcode::Call: {
                auto id = prog_.find_function(ins.callee_module, ins.callee_name);
                if (!id) fail(AbortKind::Invariant, 0, "unknown callee");
                const FunctionDecl& callee = *prog_.function(*id).decl;
                std::vector<TypeTag> targs;
                targs.reserve(ins.type_args.size());
                for (const auto& t : ins.type_args) targs.push_back(substitute(t, f.type_args));
                std::vector<Value> args(callee.inputs.size());
                for (std::size_t i = args.size(); i-- > 0;) args[i] = pop();
                notify(f, ins, nullptr, nullptr, nullptr);
                f.pc = next;
                if (callee.is_native) native(*id, targs, std::move(args));
                else push_frame(*id, std::move(targs), std::move(args));
                continue;
            }
            case Opcode::Pack: {
                TypeTag t = substitute(ins.type, f.type_args);
                const DatatypeDecl* d = prog_.find_datatype(t.datatype_ref());
                std::vector<Value> fields(d->fields.size());
                for (std::size_t i = fields.size(); i-- > 0;) fields[i] = pop();
                stack_.push_back(Value::structure(std::move(t), std::move(fields)));
                break;
            }
            case Opcode::Unpack: {
                Value s = pop();
                for (auto& e : s.elems) stack_.push_back(std::move(e));
                break;
            }
            case Opcode::ReadField: {
                Value r = pop();
                PoolObject& obj = object(r.object);
                Value v = obj.value.elems.at(ins.index);
                notify(f, ins, &r, nullptr, &v);
                stack_.push_back(std::move(v));
                break;
            }
            case Opcode::WriteField: {
                Value v = pop();
                Value r = pop();
                PoolObject& obj = object(r.object);
                notify(f, ins, &r, &v, nullptr);
                obj.value.elems.at(ins.index) = std::move(v);
                break;
            }
            case Opcode::VecNew: stack_.push_back(Value::vec(substitute(ins.type, f.type_args))); break;
            case Opcode::VecPush: {
                Value e = pop();
                Value v = pop();
                v.elems.push_back(std::move(e));
                stack_.push_back(std::move(v));
                break;
            }
            case Opcode::VecPop: {
                Value v = pop();
                if (v.elems.empty()) {
                    notify(f, ins, &v, nullptr, nullptr, false, true);
                    fail(AbortKind::VectorBounds, 0, "pop from empty vector");
                }
                Value e = std::move(v.elems.back());
                v.elems.pop_back();
                stack_.push_back(std::move(v));
                stack_.push_back(std::move(e));
                break;
            }
            case Opcode::VecLen: {
                Value v = pop();
                stack_.push_back(Value::integer(Prim::U64, v.elems.size()));
                break;
            }
            case Opcode::VecBorrow: {
                Value idx = pop();
                Value v = pop();
                const bool ok = idx.num < v.elems.size();
                Value len = Value::integer(Prim::U64, v.elems.size());
                if (!ok) {
                    notify(f, ins, &idx, &len, nullptr, false, true);
                    fail(AbortKind::VectorBounds, 0, "vector index out of bounds");
                }
                Value e = v.elems[static_cast<std::size_t>(idx.num)];
                notify(f, ins, &idx, &len, &e);
                stack_.push_back(std::move(e));
                break;
            }
            case Opcode::EmitEvent: {
                Event ev;
                ev.tag = ins.value;
                ev.function = f.fn;
                ev.pc = f.pc;
                ev.payload.resize(ins.index);
                for (std::size_t i = ins.index; i-- > 0;) ev.payload[i] = pop().num;
                res_.events.push_back(std::move(ev));
                break;
            }
            case Opcode::Ret: {
                std::vector<Value> outs(std::make_move_iterator(stack_.begin() + static_cast<std::ptrdiff_t>(f.base)),
                                        std::make_move_iterator(stack_.end()));
                stack_.resize(f.base);
                frames_.pop_back();
                for (auto& o : outs) stack_.push_back(std::move(o));
                continue;
            }
            }
            f.pc = next;
        }
    }

    const Program& prog_;
    WorldState& state_;
    const ExecOptions& opts_;
    ExecResult& res_;
    std::vector<Value> stack_;
    std::vector<Frame> frames_;
};

void settle(Value v, WorldState& state) {
    if (v.kind == Value::Kind::Struct) {
        TypeTag t = v.type;
        state.add(std::move(t), Ownership::SenderOwned, std::move(v));
    } else if (v.kind == Value::Kind::Vec) {
        for (auto& e : v.elems) settle(std::move(e), state);
    }
}

}  // namespace

ExecResult execute(const Transaction& txn, const Program& program, const WorldState& genesis,
                   const ExecOptions& options, WorldState* final_state) {
    ExecResult res;
    WorldState state = reset_state(genesis);
    res.balance_before = state.sender_balances();
    Interpreter interp(program, state, options, res);
    std::vector<std::vector<std::optional<Value>>> results;

    auto literal = [&](Prim p, const U256& v, std::uint32_t call, std::uint32_t arg, std::uint32_t elem) {
        SymRef sym;
        if (options.symbolic) {
            const auto var = static_cast<std::uint32_t>(res.inputs.size());
            res.inputs.push_back({call, arg, elem, p, v});
            sym = sym_input(var, p, v);
        }
        return p == Prim::Bool ? Value::boolean(v != 0, std::move(sym)) : Value::integer(p, v, std::move(sym));
    };

    try {
        for (std::uint32_t c = 0; c < txn.calls.size(); ++c) {
            const CallSpec& call = txn.calls[c];
            interp.call_index = c;
            const FunctionDecl& decl = *program.function(call.function).decl;
            std::vector<Value> args;
            for (std::uint32_t a = 0; a < call.args.size(); ++a) {
                const ArgBinding& b = call.args[a];
                const RefMode mode = a < decl.inputs.size() ? decl.inputs[a].mode : RefMode::ByValue;
                switch (b.kind) {
                case ArgBinding::Kind::Literal:
                    args.push_back(literal(b.prim, b.values.empty() ? U256(0) : b.values[0], c, a, 0));
                    break;
                case ArgBinding::Kind::LiteralVector: {
                    Value v = Value::vec(TypeTag::primitive(b.prim));
                    for (std::uint32_t i = 0; i < b.values.size(); ++i)
                        v.elems.push_back(literal(b.prim, b.values[i], c, a, i));
                    args.push_back(std::move(v));
                    break;
                }
                case ArgBinding::Kind::Result: {
                    if (b.call >= results.size() || b.output >= results[b.call].size() || !results[b.call][b.output])
                        throw AbortSignal{{AbortKind::Invariant, 0, call.function, 0, c, "unavailable result"}};
                    auto& slot = results[b.call][b.output];
                    const Value& v = *slot;
                    const bool copy = v.kind == Value::Kind::Int || v.kind == Value::Kind::Bool ||
                                      (v.kind == Value::Kind::Struct && program.has_ability(v.type, Ability::Copy)) ||
                                      (v.kind == Value::Kind::Vec &&
                                       program.has_ability(TypeTag::vector(v.type), Ability::Copy));
                    if (copy) args.push_back(v);
                    else {
                        args.push_back(std::move(*slot));
                        slot.reset();
                    }
                    break;
                }
                case ArgBinding::Kind::PoolObject: {
                    auto it = state.objects.find(b.object);
                    if (it == state.objects.end())
                        throw AbortSignal{{AbortKind::Invariant, 0, call.function, 0, c, "missing pool object"}};
                    if (mode == RefMode::ByValue) {
                        args.push_back(std::move(it->second.value));
                        state.objects.erase(it);
                    } else {
                        args.push_back(Value::ref(b.object, mode == RefMode::ByMutRef));
                    }
                    break;
                }
                }
            }
            auto outs = interp.invoke(call.function, call.type_args, std::move(args));
            results.emplace_back();
            for (auto& o : outs) results.back().emplace_back(std::move(o));
            res.calls_completed = c + 1;
        }
        for (auto& call_outs : results)
            for (auto& o : call_outs)
                if (o) settle(std::move(*o), state);
        res.status = ExecStatus::Success;
        res.balance_after = state.sender_balances();
        if (final_state) *final_state = std::move(state);
    } catch (AbortSignal& a) {
        res.status = ExecStatus::Abort;
        res.abort = std::move(a.info);
        res.balance_after = res.balance_before;
        if (final_state) *final_state = genesis;
    } catch (OutOfGasSignal&) {
        res.status = ExecStatus::OutOfGas;
        res.balance_after = res.balance_before;
        if (final_state) *final_state = genesis;
    }
    res.coverage = std::move(interp.coverage);
    std::sort(res.coverage.begin(), res.coverage.end());
    res.coverage.erase(std::unique(res.coverage.begin(), res.coverage.end()), res.coverage.end());
    return res;
}

// ---- genesis --------------------------------------------------------------

namespace {

using nlohmann::json;

Value value_from_json(const json& j, const TypeTag& t, const Program& program, const std::string& where) {
    if (t.is_primitive()) {
        if (t.prim() == Prim::Bool) {
            if (!j.is_boolean()) throw GenesisError(where + ": expected bool");
            return Value::boolean(j.get<bool>());
        }
        U256 v;
        try {
            if (j.is_string()) v = parse_u256_literal(j.get<std::string>());
            else if (j.is_number_unsigned()) v = j.get<std::uint64_t>();
            else throw GenesisError(where + ": expected an unsigned integer");
        } catch (const std::invalid_argument& e) {
            throw GenesisError(where + ": " + e.what());
        }
        if (v > prim_max(t.prim())) throw GenesisError(where + ": value does not fit " + t.to_string());
        return Value::integer(t.prim(), v);
    }
    if (t.is_vector()) {
        if (!j.is_array()) throw GenesisError(where + ": expected array");
        Value v = Value::vec(t.element());
        for (std::size_t i = 0; i < j.size(); ++i)
            v.elems.push_back(value_from_json(j[i], t.element(), program, where + "[" + std::to_string(i) + "]"));
        return v;
    }
    if (!t.is_datatype() || !t.is_concrete()) throw GenesisError(where + ": unsupported type " + t.to_string());
    const DatatypeDecl* d = program.find_datatype(t.datatype_ref());
    if (!d) throw GenesisError(where + ": unknown datatype " + t.to_string());
    if (!j.is_object()) throw GenesisError(where + ": expected object with fields of " + t.to_string());
    std::vector<Value> fields;
    for (const auto& f : d->fields) {
        if (!j.contains(f.name)) throw GenesisError(where + ": missing field " + f.name);
        fields.push_back(value_from_json(j.at(f.name), substitute(f.type, t.args()), program, where + "." + f.name));
    }
    for (const auto& [k, _] : j.items()) {
        bool known = false;
        for (const auto& f : d->fields) known |= f.name == k;
        if (!known) throw GenesisError(where + ": unknown field " + k);
    }
    return Value::structure(t, std::move(fields));
}

TypeTag type_from_text(const std::string& text, const Program& program, const std::string& where) {
    try {
        TypeTag t = parse_type(text, program);
        if (!t.is_concrete()) throw GenesisError(where + ": type must be concrete");
        return t;
    } catch (const ParseError& e) {
        throw GenesisError(where + ": " + e.what());
    }
}

void run_initializers(WorldState& state, const Program& program) {
    for (const auto& m : program.package().modules) {
        if (!m.init) continue;
        auto id = program.find_function(m.name, *m.init);
        if (!id) throw GenesisError("initializer " + m.name + "::" + *m.init + " not found");
        Transaction txn;
        txn.calls.push_back({*id, {}, {}});
        WorldState after;
        ExecOptions opts;
        opts.symbolic = false;
        ExecResult r = execute(txn, program, state, opts, &after);
        if (r.status != ExecStatus::Success)
            throw GenesisError("initializer of module " + m.name + " did not complete: " + exec_status_name(r.status) +
                               (r.abort ? " (" + r.abort->message + ")" : ""));
        state = std::move(after);
    }
}

}  // namespace

WorldState load_genesis(const std::string& json_text, const Program& program) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw GenesisError(std::string("malformed genesis JSON: ") + e.what());
    }
    if (!doc.is_object()) throw GenesisError("genesis document must be a JSON object");
    WorldState state;
    if (doc.contains("objects")) {
        for (std::size_t i = 0; i < doc["objects"].size(); ++i) {
            const json& o = doc["objects"][i];
            const std::string where = "objects[" + std::to_string(i) + "]";
            if (!o.contains("type") || !o["type"].is_string()) throw GenesisError(where + ": missing type");
            TypeTag t = type_from_text(o["type"].get<std::string>(), program, where);
            if (!t.is_datatype()) throw GenesisError(where + ": pool objects must be datatypes");
            Ownership own = Ownership::SenderOwned;
            const std::string o_str = o.value("ownership", std::string("owned"));
            if (o_str == "shared") own = Ownership::Shared;
            else if (o_str != "owned" && o_str != "sender") throw GenesisError(where + ": unknown ownership " + o_str);
            Value v = value_from_json(o.value("fields", json::object()), t, program, where);
            if (o.contains("id")) {
                const ObjectId id = o["id"].get<ObjectId>();
                if (id == 0 || state.objects.count(id)) throw GenesisError(where + ": duplicate or zero id");
                state.objects[id] = PoolObject{id, t, own, std::move(v)};
                state.next_id = std::max(state.next_id, id + 1);
            } else {
                state.add(t, own, std::move(v));
            }
        }
    }
    if (doc.contains("balances")) {
        for (std::size_t i = 0; i < doc["balances"].size(); ++i) {
            const json& b = doc["balances"][i];
            const std::string where = "balances[" + std::to_string(i) + "]";
            TypeTag coin_arg = type_from_text(b.at("coin").get<std::string>(), program, where);
            TypeTag coin = TypeTag::datatype({"coin", "Coin"}, {coin_arg});
            json fields = {{"value", b.at("amount")}};
            state.add(coin, Ownership::SenderOwned, value_from_json(fields, coin, program, where));
        }
    }
    run_initializers(state, program);
    return state;
}

WorldState load_genesis_file(const std::string& path, const Program& program) {
    std::ifstream in(path);
    if (!in) throw GenesisError("cannot open genesis file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_genesis(ss.str(), program);
}

WorldState empty_genesis(const Program& program) { return load_genesis("{}", program); }

// ---- coverage map ---------------------------------------------------------

CoverageMap::CoverageMap(const Program& program) {
    for (const auto& e : program.functions()) {
        for (std::uint32_t pc = 0; pc < e.decl->body.size(); ++pc) {
            if (!is_conditional_branch(e.decl->body[pc].op)) continue;
            index_[coverage_key(e.id, pc, false)] = total_++;
            index_[coverage_key(e.id, pc, true)] = total_++;
        }
    }
    bits_ = std::make_unique<std::atomic<std::uint8_t>[]>(total_ == 0 ? 1 : total_);
    for (std::size_t i = 0; i < total_; ++i) bits_[i].store(0);
}

std::optional<std::size_t> CoverageMap::slot(CoverageKey key) const {
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t CoverageMap::record(const std::vector<CoverageKey>& keys) {
    std::size_t fresh = 0;
    for (auto k : keys) {
        auto s = slot(k);
        if (!s) continue;
        if (bits_[*s].exchange(1) == 0) ++fresh;
    }
    covered_ += fresh;
    return fresh;
}

bool CoverageMap::contains(CoverageKey key) const {
    auto s = slot(key);
    return s && bits_[*s].load() != 0;
}

std::vector<CoverageKey> CoverageMap::snapshot() const {
    std::vector<CoverageKey> out;
    for (const auto& [k, s] : index_)
        if (bits_[s].load() != 0) out.push_back(k);
    return out;
}

}  // namespace tgfuzz
