#pragma once
// The mini-IR: a small typed, line-oriented intermediate representation that
// programs, the instrumentation pass, and the analyses all operate on.
// Grammar and semantics are documented in docs/ir.md.

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace curesim {

struct IrType;
using TypeRef = std::shared_ptr<const IrType>;

struct IrType {
    enum class Kind { I8, I64, Ptr, Array, Struct };
    Kind kind;
    TypeRef elem;          // Ptr pointee / Array element
    uint64_t count = 0;    // Array length
    std::string name;      // Struct name

    static TypeRef i8();
    static TypeRef i64();
    static TypeRef ptr(TypeRef pointee);
    static TypeRef array(TypeRef elem, uint64_t count);
    static TypeRef strct(std::string name);
};

// Canonical names feed type_id: "i8", "i64", "i8*", "[10 x i8]", "struct.S".
std::string typeName(const TypeRef& t);

struct StructDef {
    std::string name;
    std::vector<std::pair<std::string, TypeRef>> fields;
    int line = 0;
};

struct Operand {
    enum class Kind { Reg, Global, Imm };
    Kind kind = Kind::Imm;
    std::string name; // Reg/Global
    int64_t imm = 0;

    static Operand reg(std::string n) { return {Kind::Reg, std::move(n), 0}; }
    static Operand global(std::string n) { return {Kind::Global, std::move(n), 0}; }
    static Operand immediate(int64_t v) { return {Kind::Imm, "", v}; }

    bool isReg() const { return kind == Kind::Reg; }
    bool isGlobal() const { return kind == Kind::Global; }
    bool isImm() const { return kind == Kind::Imm; }
};

enum class Opcode {
    Alloca, Malloc, Free, Gep, Padd, Bitcast, Load, Store, Mov, Const,
    Iadd, Isub, Icmp, Br, Brz, Call, Ret, Tagd, Xtag, Cstr, Cclr
};

struct GepStep {
    bool isField; // field k (struct) vs index k (array)
    uint64_t index;
};

enum class CmpKind { Eq, Ne, Lt, Le, Gt, Ge };
enum class TagdMod { Sp, Type };

struct Instr {
    Opcode op;
    std::string result;          // destination register, "" when none
    std::vector<Operand> args;
    TypeRef type;                // alloca object / gep aggregate / bitcast target
    std::vector<GepStep> path;   // gep
    unsigned width = 0;          // load/store access width (1 or 8)
    CmpKind cmp = CmpKind::Eq;
    std::string callee;
    std::string label, label2;   // br target / brz targets
    TagdMod tagdMod = TagdMod::Sp;
    std::string tagdType;        // canonical type string for `tagd ..., type "..."`
    int64_t imm = 0;             // const
    int line = 0;
};

struct Block {
    std::string label;
    std::vector<Instr> instrs;
    int line = 0;
};

struct Param {
    std::string name;
    TypeRef type;
};

struct Function {
    std::string name;
    std::vector<Param> params;
    std::vector<Block> blocks;
    int line = 0;

    const Block* findBlock(const std::string& label) const;
};

struct GlobalVar {
    std::string name;
    TypeRef type;
    std::vector<uint8_t> init; // truncated to declared size, zero-extended
    bool externalInit = false;
    int line = 0;
};

struct Program {
    std::vector<StructDef> structs;
    std::vector<GlobalVar> globals;
    std::vector<Function> functions;
    std::string entry = "main";

    const Function* findFunction(const std::string& name) const;
    const GlobalVar* findGlobal(const std::string& name) const;
    const StructDef* findStruct(const std::string& name) const;
};

// Diagnostics carry "file:line:col: message" in what().
struct ParseError : std::runtime_error {
    int line, col;
    ParseError(const std::string& file, int line_, int col_, const std::string& msg);
};

// Intrinsics callable without a definition. input() is the taint source;
// mutate_ptr/scan_clear are the runtime half of sub-object protection.
bool isIntrinsic(const std::string& name);
int intrinsicArity(const std::string& name);

uint64_t sizeOf(const Program& prog, const TypeRef& t);

// Stable allocation-site identifiers: "func/result#ordinal" where ordinal
// numbers the alloca/malloc instructions of the function in block order.
// Globals are addressed separately as "@name".
std::map<const Instr*, std::string> allocationSiteIds(const Program& prog);

// Byte offset and addressed sub-type of a field/index path. Throws
// std::invalid_argument on an invalid path.
std::pair<uint64_t, TypeRef> gepOffset(const Program& prog, const TypeRef& t,
                                       const std::vector<GepStep>& path);

Program parseProgram(const std::string& text, const std::string& filename = "<input>");
std::string printProgram(const Program& prog);

} // namespace curesim
