#pragma once

// Interpreter arithmetic, cast and shift semantics checked against cpp_int.

#include <boost/multiprecision/cpp_int.hpp>
#include <sstream>

#include "support.hpp"
#include "tgfuzz/rng.hpp"

namespace tgfuzz::testing {

using boost::multiprecision::cpp_int;

inline const std::vector<std::pair<Prim, unsigned>> kWidths = {{Prim::U8, 8},   {Prim::U16, 16},   {Prim::U32, 32},
                                                               {Prim::U64, 64}, {Prim::U128, 128}, {Prim::U256, 256}};
inline const std::vector<std::string> kBinary = {"add", "sub", "mul", "div", "mod", "and", "or", "xor", "shl", "shr"};

inline std::string width_name(unsigned w) { return "u" + std::to_string(w); }

inline std::string arithmetic_package() {
    std::ostringstream os;
    os << "package diff\nmodule d\n";
    for (auto [p, w] : kWidths) {
        const auto ty = width_name(w);
        for (const auto& op : kBinary) {
            const bool shift = op == "shl" || op == "shr";
            os << "public fn " << op << "_" << ty << "(a: " << ty << ", b: " << (shift ? "u8" : ty) << ")\n"
               << "  copy_loc a\n  copy_loc b\n  " << op << "\n  emit 0 1\n  ret\nend\n";
        }
        for (auto [q, v] : kWidths) {
            os << "public fn cast_" << ty << "_" << width_name(v) << "(a: " << ty << ")\n"
               << "  copy_loc a\n  cast " << width_name(v) << "\n  emit 0 1\n  ret\nend\n";
        }
    }
    return os.str();
}

struct Outcome {
    bool aborted = false;
    AbortKind kind = AbortKind::Explicit;
    cpp_int value;
};

inline Outcome reference(const std::string& op, const cpp_int& a, const cpp_int& b, unsigned w) {
    const cpp_int limit = cpp_int(1) << w;
    auto fail = [](AbortKind k) { return Outcome{true, k, 0}; };
    cpp_int r;
    if (op == "add") r = a + b;
    else if (op == "sub") {
        if (b > a) return fail(AbortKind::ArithmeticOverflow);
        r = a - b;
    } else if (op == "mul") r = a * b;
    else if (op == "div" || op == "mod") {
        if (b == 0) return fail(AbortKind::DivisionByZero);
        r = op == "div" ? cpp_int(a / b) : cpp_int(a % b);
    } else if (op == "and") r = a & b;
    else if (op == "or") r = a | b;
    else if (op == "xor") r = a ^ b;
    else if (op == "shl" || op == "shr") {
        if (b >= w) return fail(AbortKind::ShiftOverflow);
        const auto s = static_cast<unsigned>(b);
        r = op == "shl" ? cpp_int((a << s) % limit) : cpp_int(a >> s);
    }
    if (r >= limit) return fail(AbortKind::ArithmeticOverflow);
    return {false, AbortKind::Explicit, r};
}

inline cpp_int to_cpp(const U256& v) { return cpp_int(v); }

inline U256 random_operand(Rng& rng, unsigned w) {
    // Mostly small or boundary values, so overflow edges show up often.
    switch (rng.below(4)) {
    case 0: return U256(rng.below(4));
    case 1: return (U256(1) << (w - 1)) - 1 + rng.below(3);
    case 2: return rng.bits(static_cast<unsigned>(1 + rng.below(w)));
    default: return rng.bits(w);
    }
}

struct DifferentialReport {
    std::uint64_t checked = 0;
    /// First few disagreements, as replay text plus the expected outcome.
    std::vector<std::string> mismatches;
};

inline DifferentialReport run_differential(int pairs, std::uint64_t seed) {
    DifferentialReport report;
    auto b = from_text(arithmetic_package());
    const Program& prog = *b.program;
    ExecOptions opts;
    opts.symbolic = false;
    Rng rng(seed);
    for (auto [p, w] : kWidths) {
        const auto ty = width_name(w);
        std::vector<FunctionId> binary;
        for (const auto& op : kBinary) binary.push_back(*prog.find_function("d", op + "_" + ty));
        std::vector<FunctionId> casts;
        for (auto [q, v] : kWidths) casts.push_back(*prog.find_function("d", "cast_" + ty + "_" + width_name(v)));
        for (int i = 0; i < pairs && report.mismatches.size() < 5; ++i) {
            const U256 a = random_operand(rng, w);
            Transaction t;
            Outcome want;
            const std::size_t k = rng.below(kBinary.size() + kWidths.size());
            if (k < kBinary.size()) {
                const auto& op = kBinary[k];
                const bool shift = op == "shl" || op == "shr";
                const U256 bv = shift ? U256(rng.below(w + w / 4 + 1) % 256) : random_operand(rng, w);
                t.calls.push_back({binary[k], {}, {ArgBinding::literal(p, a), ArgBinding::literal(shift ? Prim::U8 : p, bv)}});
                want = reference(op, to_cpp(a), to_cpp(bv), w);
            } else {
                const unsigned to = kWidths[k - kBinary.size()].second;
                t.calls.push_back({casts[k - kBinary.size()], {}, {ArgBinding::literal(p, a)}});
                want = to_cpp(a) >= (cpp_int(1) << to) ? Outcome{true, AbortKind::CastOutOfRange, 0}
                                                       : Outcome{false, AbortKind::Explicit, to_cpp(a)};
            }
            ++report.checked;
            auto r = execute(t, prog, b.genesis, opts);
            const bool aborted = r.status == ExecStatus::Abort;
            bool same = aborted == want.aborted;
            if (same && aborted) same = r.abort->kind == want.kind;
            if (same && !aborted) same = r.events.size() == 1 && to_cpp(r.events[0].payload.at(0)) == want.value;
            if (!same)
                report.mismatches.push_back(serialize_transaction(t, prog) + " expected " +
                                            (want.aborted ? abort_kind_name(want.kind) : want.value.str()));
        }
    }
    return report;
}

}  // namespace tgfuzz::testing
