#pragma once

// Contract language model: abilities, type tags, datatypes, functions and
// the stack bytecode they carry.

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace tgfuzz {

using U256 = boost::multiprecision::uint256_t;

enum class Ability : std::uint8_t { Copy = 0, Drop = 1, Store = 2, Key = 3 };

/// Small bit set over the four abilities.
class AbilitySet {
public:
    constexpr AbilitySet() = default;
    constexpr AbilitySet(std::initializer_list<Ability> abilities) {
        for (auto a : abilities) insert(a);
    }
    constexpr void insert(Ability a) { bits_ |= bit(a); }
    constexpr bool has(Ability a) const { return (bits_ & bit(a)) != 0; }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint8_t bits() const { return bits_; }
    friend constexpr bool operator==(AbilitySet, AbilitySet) = default;

private:
    static constexpr std::uint8_t bit(Ability a) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(a)); }
    std::uint8_t bits_ = 0;
};

enum class Prim : std::uint8_t { Bool, U8, U16, U32, U64, U128, U256 };

/// Bit width of an integer primitive (1 for bool).
unsigned prim_bits(Prim p);
bool prim_is_int(Prim p);
U256 prim_max(Prim p);
const char* prim_name(Prim p);
std::optional<Prim> prim_from_name(std::string_view name);

struct DatatypeRef {
    std::string module;
    std::string name;
    friend auto operator<=>(const DatatypeRef&, const DatatypeRef&) = default;
    std::string qualified() const { return module + "::" + name; }
};

class TypeTag {
public:
    enum class Kind : std::uint8_t { Primitive, Vector, Datatype, Parameter };

    static TypeTag primitive(Prim p);
    static TypeTag vector(TypeTag element);
    static TypeTag datatype(DatatypeRef ref, std::vector<TypeTag> args = {});
    static TypeTag parameter(std::uint32_t index);

    Kind kind() const { return kind_; }
    bool is_primitive() const { return kind_ == Kind::Primitive; }
    bool is_vector() const { return kind_ == Kind::Vector; }
    bool is_datatype() const { return kind_ == Kind::Datatype; }
    bool is_parameter() const { return kind_ == Kind::Parameter; }
    bool is_int() const { return is_primitive() && prim_is_int(prim_); }
    bool is_bool() const { return is_primitive() && prim_ == Prim::Bool; }

    Prim prim() const { return prim_; }
    std::uint32_t param_index() const { return param_; }
    const DatatypeRef& datatype_ref() const { return ref_; }
    /// Type arguments of a datatype, or the single element of a vector.
    const std::vector<TypeTag>& args() const { return args_; }
    const TypeTag& element() const { return args_.front(); }

    /// True when no Parameter occurs anywhere in the tag.
    bool is_concrete() const;
    /// Vector of primitives (the only vectors transactions can pass as literals).
    bool is_primitive_vector() const { return is_vector() && element().is_primitive(); }

    std::string to_string() const;

    friend bool operator==(const TypeTag&, const TypeTag&) = default;
    friend std::strong_ordering operator<=>(const TypeTag& a, const TypeTag& b);

private:
    Kind kind_ = Kind::Primitive;
    Prim prim_ = Prim::Bool;
    std::uint32_t param_ = 0;
    DatatypeRef ref_;
    std::vector<TypeTag> args_;
};

struct TypeTagHash {
    std::size_t operator()(const TypeTag& t) const { return std::hash<std::string>{}(t.to_string()); }
};

struct Field {
    std::string name;
    TypeTag type;
    friend bool operator==(const Field&, const Field&) = default;
};

struct DatatypeDecl {
    std::string name;
    std::uint32_t type_params = 0;
    AbilitySet abilities;
    std::vector<Field> fields;
    friend bool operator==(const DatatypeDecl&, const DatatypeDecl&) = default;
};

/// A type with neither drop nor store must be consumed exactly once.
bool is_hot_potato(const DatatypeDecl& decl);

enum class Visibility : std::uint8_t { Public, Private };
enum class RefMode : std::uint8_t { ByValue, ByRef, ByMutRef };

struct Param {
    TypeTag type;
    RefMode mode = RefMode::ByValue;
    friend bool operator==(const Param&, const Param&) = default;
};

enum class Opcode : std::uint8_t {
    LdConst, LdParam, CopyLocal, MoveLocal, StoreLocal, Pop,
    Add, Sub, Mul, Div, Mod, Shl, Shr, BitAnd, BitOr, BitXor, Not,
    Eq, Neq, Lt, Le, Gt, Ge,
    Cast,
    Branch, BrTrue, BrFalse, Abort,
    Call, Pack, Unpack, ReadField, WriteField,
    VecNew, VecPush, VecPop, VecLen, VecBorrow,
    EmitEvent, Ret,
};

const char* opcode_name(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);
bool is_conditional_branch(Opcode op);

/// One bytecode instruction. Which immediates are meaningful depends on the opcode:
///  - type: LdConst value type, Cast destination, Pack/Unpack datatype, VecNew element
///  - value: LdConst literal, Abort code, EmitEvent tag
///  - index: local/param slot, branch target, field index, EmitEvent payload count
///  - callee/type_args: Call target
struct Instruction {
    Opcode op = Opcode::Ret;
    TypeTag type;
    U256 value = 0;
    std::uint32_t index = 0;
    std::string callee_module;
    std::string callee_name;
    std::vector<TypeTag> type_args;
    friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct FunctionDecl {
    std::string name;
    Visibility visibility = Visibility::Private;
    bool is_native = false;
    std::uint32_t type_params = 0;
    std::vector<Param> inputs;
    std::vector<TypeTag> outputs;
    /// Declared locals beyond the parameters; parameters occupy slots [0, inputs.size()).
    std::vector<TypeTag> locals;
    std::vector<Instruction> body;
    friend bool operator==(const FunctionDecl&, const FunctionDecl&) = default;
};

struct Module {
    std::string name;
    std::vector<DatatypeDecl> datatypes;
    std::vector<FunctionDecl> functions;
    /// Name of the module initializer, if any (run once at genesis).
    std::optional<std::string> init;

    const DatatypeDecl* find_datatype(std::string_view n) const;
    const FunctionDecl* find_function(std::string_view n) const;
    friend bool operator==(const Module&, const Module&) = default;
};

struct Package {
    std::string name;
    std::vector<Module> modules;
    std::vector<std::shared_ptr<const Package>> dependencies;

    bool operator==(const Package& other) const;
};

// ---- errors ---------------------------------------------------------------

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, std::size_t column, const std::string& what);
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class VerifyError : public std::runtime_error {
public:
    VerifyError(std::string function, std::size_t instruction, const std::string& what);
    const std::string& function() const { return function_; }
    std::size_t instruction() const { return instruction_; }

private:
    std::string function_;
    std::size_t instruction_;
};

class IndexError : public std::out_of_range {
    using std::out_of_range::out_of_range;
};

class ArityError : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---- type algebra ---------------------------------------------------------

/// Replaces every Parameter(i) in `tag` by args[i].
TypeTag substitute(const TypeTag& tag, const std::vector<TypeTag>& args);

struct Signature {
    std::vector<TypeTag> inputs;
    std::vector<TypeTag> outputs;
};

/// Instantiated signature of `fn` under `type_args`.
Signature signature_of(const FunctionDecl& fn, const std::vector<TypeTag>& type_args);

}  // namespace tgfuzz
