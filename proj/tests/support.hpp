#pragma once

#include <memory>
#include <string>

#include "tgfuzz/program.hpp"
#include "tgfuzz/transaction.hpp"
#include "tgfuzz/vm.hpp"

namespace tgfuzz::testing {

inline std::string bench_path(const std::string& rel) { return std::string(TGFUZZ_SOURCE_DIR) + "/benchmarks/" + rel; }

struct Bench {
    std::shared_ptr<const Program> program;
    WorldState genesis;
};

/// `dir` is a directory under benchmarks/; `genesis` empty means no genesis file.
inline Bench load_bench(const std::string& dir, const std::string& pkg, const std::string& genesis = "") {
    Bench b;
    auto p = std::make_shared<const Program>(load_package_file(bench_path(dir + "/" + pkg)));
    b.program = p;
    b.genesis = genesis.empty() ? empty_genesis(*p) : load_genesis_file(bench_path(dir + "/" + genesis), *p);
    return b;
}

inline Bench from_text(const std::string& text) {
    Bench b;
    auto p = std::make_shared<const Program>(parse_package(text));
    b.program = p;
    b.genesis = empty_genesis(*p);
    return b;
}

inline Bench loan_bench() { return load_bench("loan", "pool.pkg"); }
inline Bench flash_bench() { return load_bench("flash", "flash.pkg", "genesis.json"); }

inline Transaction txn(const Bench& b, const std::string& text) { return parse_transaction(text, *b.program); }

}  // namespace tgfuzz::testing
