#include "doctest.h"

#include <algorithm>

#include "curesim/instrument.hpp"
#include "curesim/machine.hpp"

using namespace curesim;

namespace {

Program rewrite(const std::string& text, ProtectMode mode,
                const ProtectionPlan* plan = nullptr) {
    Program p = parseProgram(text, "in.mir");
    InstrumentOptions opts;
    opts.mode = mode;
    if (plan)
        opts.plan = *plan;
    return instrument(p, opts);
}

size_t countOp(const Program& p, Opcode op) {
    size_t n = 0;
    for (const auto& fn : p.functions)
        for (const auto& b : fn.blocks)
            for (const auto& ins : b.instrs)
                n += ins.op == op;
    return n;
}

size_t countCall(const Program& p, const std::string& callee) {
    size_t n = 0;
    for (const auto& fn : p.functions)
        for (const auto& b : fn.blocks)
            for (const auto& ins : b.instrs)
                n += ins.op == Opcode::Call && ins.callee == callee;
    return n;
}

std::vector<Opcode> opcodes(const Program& p, const std::string& fn0) {
    std::vector<Opcode> out;
    const Function* fn = p.findFunction(fn0);
    REQUIRE(fn);
    for (const auto& b : fn->blocks)
        for (const auto& ins : b.instrs)
            out.push_back(ins.op);
    return out;
}

const char* kMixed = R"(struct Box { n: i64, bytes: [8 x i8] }
global @greeting : [6 x i8] = "hello\n"
func @main() {
  %a = alloca [16 x i8]
  %box = alloca struct.Box
  %n = const 32
  %h = malloc %n
  %f = gep %box, struct.Box, field 1, index 0
  %g = gep %box, struct.Box, field 0
  %c = const 7
  store %c, %f, 1
  store %c, %g, 8
  store %c, %a, 1
  store %c, %h, 1
  call @print(@greeting, 6)
  free %h
}
)";
} // namespace

TEST_CASE("off mode is the identity") {
    Program p = parseProgram(kMixed, "in.mir");
    InstrumentOptions opts;
    opts.mode = ProtectMode::Off;
    CHECK(printProgram(instrument(p, opts)) == printProgram(p));
}

TEST_CASE("protected stack objects get the copy/tag/register triple") {
    Program out = rewrite(
        "func @main() {\n"
        "  %a = alloca [8 x i8]\n"
        "  %v = const 1\n"
        "  store %v, %a, 1\n"
        "}\n",
        ProtectMode::Object);
    auto ops = opcodes(out, "main");
    std::vector<Opcode> want = {Opcode::Alloca, Opcode::Mov,   Opcode::Tagd,
                                Opcode::Cstr,   Opcode::Const, Opcode::Store,
                                Opcode::Cclr,   Opcode::Ret};
    CHECK(ops == want);

    // All later uses read the tagged copy; the raw register survives only
    // as the source of the copy.
    const auto& ins = out.functions[0].blocks[0].instrs;
    CHECK(ins[1].result == "a.sh");
    CHECK(ins[2].tagdMod == TagdMod::Sp);
    CHECK(ins[3].args[1].imm == 8);           // registered size
    CHECK(ins[5].args[1].name == "a.sh");     // store pointer substituted
    CHECK(ins[5].args[0].name == "v");        // value operand untouched
    CHECK(ins[6].args[0].name == "a.sh");     // teardown clears the tagged copy
}

TEST_CASE("heap mode tags mallocs in place and leaves the stack alone") {
    Program out = rewrite(
        "func @main() {\n"
        "  %a = alloca [8 x i8]\n"
        "  %n = const 32\n"
        "  %h = malloc %n\n"
        "  free %h\n"
        "}\n",
        ProtectMode::Heap);
    CHECK(countOp(out, Opcode::Mov) == 0);    // no shadow copies
    CHECK(countOp(out, Opcode::Tagd) == 1);   // only the malloc result
    CHECK(countOp(out, Opcode::Cstr) == 1);
    CHECK(countOp(out, Opcode::Cclr) == 1);   // at the free site
    auto ops = opcodes(out, "main");
    std::vector<Opcode> want = {Opcode::Alloca, Opcode::Const, Opcode::Malloc,
                                Opcode::Tagd,   Opcode::Cstr,  Opcode::Cclr,
                                Opcode::Free,   Opcode::Ret};
    CHECK(ops == want);
}

TEST_CASE("a malloc whose size register is its own result is spilled first") {
    Program out = rewrite(
        "func @main() {\n"
        "  %p = const 40\n"
        "  %p = malloc %p\n"
        "  free %p\n"
        "}\n",
        ProtectMode::Heap);
    std::string text = printProgram(out);
    CHECK(text.find("%p.siz = mov %p") != std::string::npos);
    CHECK(text.find("cstr %p, %p.siz") != std::string::npos);
    // And it still parses and runs clean.
    Program again = parseProgram(text, "again.mir");
    MachineConfig cfg;
    RunOutcome r = Machine(again, cfg).run();
    CHECK(!r.aborted);
    CHECK(r.stats.spatialViolations == 0);
    CHECK(r.stats.temporalViolations == 0);
}

TEST_CASE("protection widens monotonically across modes") {
    Program h = rewrite(kMixed, ProtectMode::Heap);
    Program c = rewrite(kMixed, ProtectMode::Object);
    Program f = rewrite(kMixed, ProtectMode::Field);
    CHECK(countOp(h, Opcode::Cstr) <= countOp(c, Opcode::Cstr));
    CHECK(countOp(c, Opcode::Cstr) <= countOp(f, Opcode::Cstr));
    CHECK(countOp(h, Opcode::Tagd) < countOp(c, Opcode::Tagd));
    CHECK(countCall(h, "mutate_ptr") == 0);
    CHECK(countCall(c, "mutate_ptr") == 0);
    CHECK(countCall(f, "mutate_ptr") == 1);   // the field-path gep
    CHECK(countCall(h, "scan_clear") == 0);
    CHECK(countCall(f, "scan_clear") == 2);   // free site + struct alloca teardown
}

TEST_CASE("field mode wraps only geps whose final step is a struct field") {
    Program out = rewrite(
        "struct P { x: i64, arr: [4 x i8] }\n"
        "func @main() {\n"
        "  %p = alloca struct.P\n"
        "  %f = gep %p, struct.P, field 0\n"          // wrapped
        "  %e = gep %p, struct.P, field 1, index 2\n" // array elem: not wrapped
        "  %v = load %f, 8\n"
        "}\n",
        ProtectMode::Field);
    CHECK(countCall(out, "mutate_ptr") == 1);
    std::string text = printProgram(out);
    CHECK(text.find("%f = call @mutate_ptr(%f, 8)") != std::string::npos);
}

TEST_CASE("struct allocas are sub-object-scanned before teardown in field mode") {
    Program out = rewrite(
        "struct P { x: i64 }\n"
        "func @main() {\n"
        "  %p = alloca struct.P\n"
        "  %a = alloca [4 x i8]\n"
        "}\n",
        ProtectMode::Field);
    auto ops = opcodes(out, "main");
    // Teardown: scan_clear(%p.sh) then cclr %a.sh, cclr %p.sh (reverse order).
    size_t n = ops.size();
    REQUIRE(n >= 5);
    CHECK(ops[n - 1] == Opcode::Ret);
    CHECK(ops[n - 2] == Opcode::Cclr);
    CHECK(ops[n - 3] == Opcode::Cclr);
    CHECK(ops[n - 4] == Opcode::Call);
    const Function* fn = out.findFunction("main");
    const auto& flat = fn->blocks.back().instrs;
    size_t m = flat.size();
    CHECK(flat[m - 4].callee == "scan_clear");
    CHECK(flat[m - 4].args[0].name == "p.sh");
    CHECK(flat[m - 3].args[0].name == "a.sh"); // reverse allocation order
    CHECK(flat[m - 2].args[0].name == "p.sh");
}

TEST_CASE("protected globals: derived everywhere, registered once in the entry") {
    Program out = rewrite(
        "global @shared : [8 x i8]\n"
        "global @quiet : i64\n"
        "func @aux() {\n"
        "  %v = load @shared, 1\n"
        "  ret %v\n"
        "}\n"
        "func @main() {\n"
        "  %x = call @aux()\n"
        "}\n",
        ProtectMode::Object);
    // Entry derives every protected global (even unmentioned ones) and is
    // the only place their capabilities are registered.
    CHECK(countOp(out, Opcode::Cstr) == 2); // @shared + @quiet, both in @main
    const Function* mainFn = out.findFunction("main");
    size_t mainCstrs = 0;
    for (const auto& b : mainFn->blocks)
        for (const auto& ins : b.instrs)
            mainCstrs += ins.op == Opcode::Cstr;
    CHECK(mainCstrs == 2);

    // @aux re-derives the tagged pointer for its own use: mov + tagd, no cstr.
    const Function* aux = out.findFunction("aux");
    const auto& a0 = aux->blocks[0].instrs;
    CHECK(a0[0].op == Opcode::Mov);
    CHECK(a0[0].args[0].isGlobal());
    CHECK(a0[1].op == Opcode::Tagd);
    CHECK(a0[1].tagdMod == TagdMod::Type);
    CHECK(a0[1].tagdType == "[8 x i8]");
    CHECK(a0[2].op == Opcode::Load);
    CHECK(a0[2].args[0].name == "shared.cap");
}

TEST_CASE("a restricted plan leaves unlisted sites untouched") {
    Program p = parseProgram(
        "func @main() {\n"
        "  %a = alloca [8 x i8]\n"
        "  %b = alloca [8 x i8]\n"
        "  %n = const 16\n"
        "  %h = malloc %n\n"
        "  free %h\n"
        "}\n",
        "in.mir");
    ProtectionPlan plan = ProtectionPlan::only({"main/a#0"});
    InstrumentOptions opts;
    opts.mode = ProtectMode::Field;
    opts.plan = plan;
    Program out = instrument(p, opts);
    CHECK(countOp(out, Opcode::Tagd) == 1);  // just %a
    CHECK(countOp(out, Opcode::Cstr) == 1);
    // Free sites always clear: blanket hygiene regardless of the plan.
    CHECK(countOp(out, Opcode::Cclr) == 2);  // free site + %a teardown
    std::string text = printProgram(out);
    CHECK(text.find("%b.sh") == std::string::npos);
}

TEST_CASE("shadow names avoid collisions with existing registers") {
    Program out = rewrite(
        "func @main() {\n"
        "  %a.sh = const 5\n"
        "  %a = alloca [4 x i8]\n"
        "  %v = iadd %a.sh, 1\n"
        "}\n",
        ProtectMode::Object);
    std::string text = printProgram(out);
    CHECK(text.find("%a.sh1 = mov %a") != std::string::npos);
    CHECK(parseProgram(text, "again.mir").findFunction("main") != nullptr);
}

TEST_CASE("every instrumented program re-parses, validates and stays printable") {
    for (ProtectMode mode :
         {ProtectMode::Heap, ProtectMode::Object, ProtectMode::Field}) {
        Program out = rewrite(kMixed, mode);
        std::string text = printProgram(out);
        Program again = parseProgram(text, "again.mir");
        CHECK(printProgram(again) == text);
    }
}

TEST_CASE("instrumented clean programs run without violations in every mode") {
    for (ProtectMode mode :
         {ProtectMode::Heap, ProtectMode::Object, ProtectMode::Field}) {
        Program out = rewrite(kMixed, mode);
        MachineConfig cfg;
        RunOutcome r = Machine(out, cfg).run();
        CHECK(!r.aborted);
        CHECK(r.stats.spatialViolations == 0);
        CHECK(r.stats.temporalViolations == 0);
        CHECK(r.output == "hello\n");
    }
}
