#include "tgfuzz/model.hpp"

#include <array>
#include <sstream>

namespace tgfuzz {

unsigned prim_bits(Prim p) {
    switch (p) {
    case Prim::Bool: return 1;
    case Prim::U8: return 8;
    case Prim::U16: return 16;
    case Prim::U32: return 32;
    case Prim::U64: return 64;
    case Prim::U128: return 128;
    case Prim::U256: return 256;
    }
    return 0;
}

bool prim_is_int(Prim p) { return p != Prim::Bool; }

U256 prim_max(Prim p) {
    if (p == Prim::U256) return ~U256(0);
    return (U256(1) << prim_bits(p)) - 1;
}

const char* prim_name(Prim p) {
    switch (p) {
    case Prim::Bool: return "bool";
    case Prim::U8: return "u8";
    case Prim::U16: return "u16";
    case Prim::U32: return "u32";
    case Prim::U64: return "u64";
    case Prim::U128: return "u128";
    case Prim::U256: return "u256";
    }
    return "?";
}

std::optional<Prim> prim_from_name(std::string_view name) {
    for (auto p : {Prim::Bool, Prim::U8, Prim::U16, Prim::U32, Prim::U64, Prim::U128, Prim::U256})
        if (name == prim_name(p)) return p;
    return std::nullopt;
}

TypeTag TypeTag::primitive(Prim p) {
    TypeTag t;
    t.kind_ = Kind::Primitive;
    t.prim_ = p;
    return t;
}

TypeTag TypeTag::vector(TypeTag element) {
    TypeTag t;
    t.kind_ = Kind::Vector;
    t.args_.push_back(std::move(element));
    return t;
}

TypeTag TypeTag::datatype(DatatypeRef ref, std::vector<TypeTag> args) {
    TypeTag t;
    t.kind_ = Kind::Datatype;
    t.ref_ = std::move(ref);
    t.args_ = std::move(args);
    return t;
}

TypeTag TypeTag::parameter(std::uint32_t index) {
    TypeTag t;
    t.kind_ = Kind::Parameter;
    t.param_ = index;
    return t;
}

bool TypeTag::is_concrete() const {
    if (kind_ == Kind::Parameter) return false;
    for (const auto& a : args_)
        if (!a.is_concrete()) return false;
    return true;
}

std::string TypeTag::to_string() const {
    switch (kind_) {
    case Kind::Primitive: return prim_name(prim_);
    case Kind::Parameter: return "T" + std::to_string(param_);
    case Kind::Vector: return "vector<" + element().to_string() + ">";
    case Kind::Datatype: {
        std::string s = ref_.qualified();
        if (!args_.empty()) {
            s += '<';
            for (std::size_t i = 0; i < args_.size(); ++i) {
                if (i) s += ", ";
                s += args_[i].to_string();
            }
            s += '>';
        }
        return s;
    }
    }
    return "?";
}

std::strong_ordering operator<=>(const TypeTag& a, const TypeTag& b) {
    if (auto c = a.kind_ <=> b.kind_; c != 0) return c;
    switch (a.kind_) {
    case TypeTag::Kind::Primitive: return a.prim_ <=> b.prim_;
    case TypeTag::Kind::Parameter: return a.param_ <=> b.param_;
    case TypeTag::Kind::Datatype:
        if (auto c = a.ref_ <=> b.ref_; c != 0) return c;
        [[fallthrough]];
    case TypeTag::Kind::Vector:
        return std::lexicographical_compare_three_way(a.args_.begin(), a.args_.end(), b.args_.begin(),
                                                      b.args_.end());
    }
    return std::strong_ordering::equal;
}

bool is_hot_potato(const DatatypeDecl& decl) {
    return !decl.abilities.has(Ability::Drop) && !decl.abilities.has(Ability::Store);
}

namespace {
constexpr std::array<std::pair<Opcode, const char*>, 40> kOpcodeNames{{
    {Opcode::LdConst, "ld"},         {Opcode::LdParam, "ld_param"},     {Opcode::CopyLocal, "copy_loc"},
    {Opcode::MoveLocal, "move_loc"}, {Opcode::StoreLocal, "st_loc"},    {Opcode::Pop, "pop"},
    {Opcode::Add, "add"},            {Opcode::Sub, "sub"},              {Opcode::Mul, "mul"},
    {Opcode::Div, "div"},            {Opcode::Mod, "mod"},              {Opcode::Shl, "shl"},
    {Opcode::Shr, "shr"},            {Opcode::BitAnd, "and"},           {Opcode::BitOr, "or"},
    {Opcode::BitXor, "xor"},         {Opcode::Not, "not"},              {Opcode::Eq, "eq"},
    {Opcode::Neq, "neq"},            {Opcode::Lt, "lt"},                {Opcode::Le, "le"},
    {Opcode::Gt, "gt"},              {Opcode::Ge, "ge"},                {Opcode::Cast, "cast"},
    {Opcode::Branch, "br"},          {Opcode::BrTrue, "br_true"},       {Opcode::BrFalse, "br_false"},
    {Opcode::Abort, "abort"},        {Opcode::Call, "call"},            {Opcode::Pack, "pack"},
    {Opcode::Unpack, "unpack"},      {Opcode::ReadField, "read_field"}, {Opcode::WriteField, "write_field"},
    {Opcode::VecNew, "vec_new"},     {Opcode::VecPush, "vec_push"},     {Opcode::VecPop, "vec_pop"},
    {Opcode::VecLen, "vec_len"},     {Opcode::VecBorrow, "vec_borrow"}, {Opcode::EmitEvent, "emit"},
    {Opcode::Ret, "ret"},
}};
}  // namespace

const char* opcode_name(Opcode op) {
    for (const auto& [o, n] : kOpcodeNames)
        if (o == op) return n;
    return "?";
}

std::optional<Opcode> opcode_from_name(std::string_view name) {
    for (const auto& [o, n] : kOpcodeNames)
        if (name == n) return o;
    return std::nullopt;
}

bool is_conditional_branch(Opcode op) { return op == Opcode::BrTrue || op == Opcode::BrFalse; }

const DatatypeDecl* Module::find_datatype(std::string_view n) const {
    for (const auto& d : datatypes)
        if (d.name == n) return &d;
    return nullptr;
}

const FunctionDecl* Module::find_function(std::string_view n) const {
    for (const auto& f : functions)
        if (f.name == n) return &f;
    return nullptr;
}

bool Package::operator==(const Package& other) const {
    if (name != other.name || modules != other.modules) return false;
    if (dependencies.size() != other.dependencies.size()) return false;
    for (std::size_t i = 0; i < dependencies.size(); ++i)
        if (!(*dependencies[i] == *other.dependencies[i])) return false;
    return true;
}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error("parse error at " + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

VerifyError::VerifyError(std::string function, std::size_t instruction, const std::string& what)
    : std::runtime_error("verify error in " + function + " at instruction " + std::to_string(instruction) + ": " +
                         what),
      function_(std::move(function)),
      instruction_(instruction) {}

TypeTag substitute(const TypeTag& tag, const std::vector<TypeTag>& args) {
    switch (tag.kind()) {
    case TypeTag::Kind::Primitive: return tag;
    case TypeTag::Kind::Parameter:
        if (tag.param_index() >= args.size())
            throw IndexError("type parameter T" + std::to_string(tag.param_index()) + " out of range (" +
                             std::to_string(args.size()) + " arguments)");
        return args[tag.param_index()];
    case TypeTag::Kind::Vector: return TypeTag::vector(substitute(tag.element(), args));
    case TypeTag::Kind::Datatype: {
        std::vector<TypeTag> out;
        out.reserve(tag.args().size());
        for (const auto& a : tag.args()) out.push_back(substitute(a, args));
        return TypeTag::datatype(tag.datatype_ref(), std::move(out));
    }
    }
    return tag;
}

Signature signature_of(const FunctionDecl& fn, const std::vector<TypeTag>& type_args) {
    if (type_args.size() != fn.type_params)
        throw ArityError(fn.name + " expects " + std::to_string(fn.type_params) + " type arguments, got " +
                         std::to_string(type_args.size()));
    Signature sig;
    for (const auto& p : fn.inputs) sig.inputs.push_back(substitute(p.type, type_args));
    for (const auto& o : fn.outputs) sig.outputs.push_back(substitute(o, type_args));
    return sig;
}

}  // namespace tgfuzz
