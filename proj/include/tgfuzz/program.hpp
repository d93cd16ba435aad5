#pragma once

// Resolved, immutable view over a package and its dependencies, plus the
// text format entry points (parse / serialize) and the bytecode verifier.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tgfuzz/model.hpp"

namespace tgfuzz {

using FunctionId = std::uint32_t;

struct FunctionEntry {
    FunctionId id = 0;
    const Module* module = nullptr;
    const FunctionDecl* decl = nullptr;
    std::string qualified;
    /// False for functions that come from dependency packages.
    bool in_target = false;
};

class Program {
public:
    /// Flattens `pkg` and its dependencies (dependencies first). Does not verify.
    explicit Program(std::shared_ptr<const Package> pkg);

    const Package& package() const { return *pkg_; }
    const std::vector<const Module*>& modules() const { return modules_; }

    std::size_t function_count() const { return functions_.size(); }
    const FunctionEntry& function(FunctionId id) const { return functions_.at(id); }
    const std::vector<FunctionEntry>& functions() const { return functions_; }
    std::optional<FunctionId> find_function(std::string_view module, std::string_view name) const;
    std::optional<FunctionId> find_function(std::string_view qualified) const;

    const DatatypeDecl* find_datatype(const DatatypeRef& ref) const;
    /// All declared datatypes, in declaration order, with their references.
    std::vector<std::pair<DatatypeRef, const DatatypeDecl*>> datatypes() const;

    /// Ability check on a concrete or parametric tag; parameters are assumed to have every ability.
    bool has_ability(const TypeTag& t, Ability a) const;
    /// True for datatypes whose declaration lacks both drop and store.
    bool is_hot_potato(const TypeTag& t) const;

    /// Number of branch arms (two per conditional branch) across all functions.
    std::size_t total_branch_arms() const { return branch_arms_; }

    /// Checks that `t` names declared datatypes with matching arities.
    bool well_formed(const TypeTag& t, std::uint32_t type_params) const;

private:
    std::shared_ptr<const Package> pkg_;
    std::vector<std::shared_ptr<const Package>> keep_alive_;
    std::vector<const Module*> modules_;
    std::vector<FunctionEntry> functions_;
    std::unordered_map<std::string, FunctionId> function_index_;
    std::size_t branch_arms_ = 0;
};

/// The built-in standard library package (modules `coin` and `object`).
std::shared_ptr<const Package> std_package();

/// Parses a package document; the standard library is always a dependency.
/// Throws ParseError on malformed text and VerifyError when the bytecode verifier rejects a body.
std::shared_ptr<const Package> parse_package(std::string_view text);
std::shared_ptr<const Package> load_package_file(const std::string& path);

/// Decimal or 0x-hex literal (underscores allowed); throws std::invalid_argument if it does not fit 256 bits.
U256 parse_u256_literal(std::string_view text);

/// Parses a type expression in the context of a program (used by genesis and replay files).
TypeTag parse_type(std::string_view text, const Program& program);

/// Emits the package (without its dependencies) in the document format accepted by parse_package.
std::string serialize_package(const Package& pkg);

/// Runs the bytecode verifier over every function of the program.
void verify_program(const Program& program);

}  // namespace tgfuzz
