#include "curesim/ir.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace curesim {

TypeRef IrType::i8() {
    static TypeRef t = std::make_shared<IrType>(IrType{Kind::I8, nullptr, 0, ""});
    return t;
}
TypeRef IrType::i64() {
    static TypeRef t = std::make_shared<IrType>(IrType{Kind::I64, nullptr, 0, ""});
    return t;
}
TypeRef IrType::ptr(TypeRef pointee) {
    return std::make_shared<IrType>(IrType{Kind::Ptr, std::move(pointee), 0, ""});
}
TypeRef IrType::array(TypeRef elem, uint64_t count) {
    return std::make_shared<IrType>(IrType{Kind::Array, std::move(elem), count, ""});
}
TypeRef IrType::strct(std::string name) {
    return std::make_shared<IrType>(IrType{Kind::Struct, nullptr, 0, std::move(name)});
}

std::string typeName(const TypeRef& t) {
    switch (t->kind) {
    case IrType::Kind::I8: return "i8";
    case IrType::Kind::I64: return "i64";
    case IrType::Kind::Ptr: return typeName(t->elem) + "*";
    case IrType::Kind::Array:
        return "[" + std::to_string(t->count) + " x " + typeName(t->elem) + "]";
    case IrType::Kind::Struct: return "struct." + t->name;
    }
    return "?";
}

const Block* Function::findBlock(const std::string& label) const {
    for (const auto& b : blocks)
        if (b.label == label) return &b;
    return nullptr;
}

const Function* Program::findFunction(const std::string& name) const {
    for (const auto& f : functions)
        if (f.name == name) return &f;
    return nullptr;
}
const GlobalVar* Program::findGlobal(const std::string& name) const {
    for (const auto& g : globals)
        if (g.name == name) return &g;
    return nullptr;
}
const StructDef* Program::findStruct(const std::string& name) const {
    for (const auto& s : structs)
        if (s.name == name) return &s;
    return nullptr;
}

ParseError::ParseError(const std::string& file, int line_, int col_, const std::string& msg)
    : std::runtime_error(file + ":" + std::to_string(line_) + ":" + std::to_string(col_) +
                         ": " + msg),
      line(line_), col(col_) {}

bool isIntrinsic(const std::string& name) { return intrinsicArity(name) >= 0; }

int intrinsicArity(const std::string& name) {
    if (name == "input") return 2;      // input(ptr, len)
    if (name == "print") return 2;      // print(ptr, len)
    if (name == "memfill") return 3;    // memfill(ptr, byte, len)
    if (name == "mutate_ptr") return 2; // mutate_ptr(ptr, subSize) -> tagged ptr
    if (name == "scan_clear") return 1; // scan_clear(ptr)
    return -1;
}

uint64_t sizeOf(const Program& prog, const TypeRef& t) {
    switch (t->kind) {
    case IrType::Kind::I8: return 1;
    case IrType::Kind::I64: return 8;
    case IrType::Kind::Ptr: return 8;
    case IrType::Kind::Array: return t->count * sizeOf(prog, t->elem);
    case IrType::Kind::Struct: {
        const StructDef* def = prog.findStruct(t->name);
        if (!def) throw std::invalid_argument("unknown struct: " + t->name);
        uint64_t total = 0; // packed layout, no padding
        for (const auto& f : def->fields) total += sizeOf(prog, f.second);
        return total;
    }
    }
    return 0;
}

std::map<const Instr*, std::string> allocationSiteIds(const Program& prog) {
    std::map<const Instr*, std::string> out;
    for (const auto& fn : prog.functions) {
        unsigned ordinal = 0;
        for (const auto& b : fn.blocks)
            for (const auto& ins : b.instrs)
                if (ins.op == Opcode::Alloca || ins.op == Opcode::Malloc)
                    out[&ins] = fn.name + "/" + ins.result + "#" + std::to_string(ordinal++);
    }
    return out;
}

std::pair<uint64_t, TypeRef> gepOffset(const Program& prog, const TypeRef& t,
                                       const std::vector<GepStep>& path) {
    uint64_t off = 0;
    TypeRef cur = t;
    for (const auto& step : path) {
        if (step.isField) {
            if (cur->kind != IrType::Kind::Struct)
                throw std::invalid_argument("field step on non-struct type " + typeName(cur));
            const StructDef* def = prog.findStruct(cur->name);
            if (!def) throw std::invalid_argument("unknown struct: " + cur->name);
            if (step.index >= def->fields.size())
                throw std::invalid_argument("field " + std::to_string(step.index) +
                                            " out of range for struct." + cur->name);
            for (uint64_t i = 0; i < step.index; ++i)
                off += sizeOf(prog, def->fields[i].second);
            cur = def->fields[step.index].second;
        } else {
            if (cur->kind != IrType::Kind::Array)
                throw std::invalid_argument("index step on non-array type " + typeName(cur));
            // Index may equal count transiently in derived pointers; past-the-end
            // arithmetic itself is legal, only the access is policed.
            off += step.index * sizeOf(prog, cur->elem);
            cur = cur->elem;
        }
    }
    return {off, cur};
}

// ---------------------------------------------------------------------------
// Lexer: one source line at a time, tracking columns for diagnostics.

namespace {

struct Token {
    enum class Kind { Ident, Reg, Global, Int, Str, Punct, End };
    Kind kind = Kind::End;
    std::string text;  // Ident/Reg(name sans %)/Global(name sans @)/Punct/Str(decoded)
    int64_t value = 0; // Int
    int col = 1;
};

class LineLexer {
public:
    LineLexer(const std::string& file, int line, const std::string& text)
        : file_(file), line_(line), s_(text) {
        next();
    }

    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        next();
        return t;
    }
    bool atEnd() const { return tok_.kind == Token::Kind::End; }

    [[noreturn]] void fail(const std::string& msg, int col = -1) const {
        throw ParseError(file_, line_, col < 0 ? tok_.col : col, msg);
    }

    Token expect(Token::Kind kind, const std::string& what) {
        if (tok_.kind != kind) fail("expected " + what);
        return take();
    }
    void expectPunct(const std::string& p) {
        if (tok_.kind != Token::Kind::Punct || tok_.text != p)
            fail("expected '" + p + "'");
        next();
    }
    bool acceptPunct(const std::string& p) {
        if (tok_.kind == Token::Kind::Punct && tok_.text == p) {
            next();
            return true;
        }
        return false;
    }
    bool peekPunct(const std::string& p) const {
        return tok_.kind == Token::Kind::Punct && tok_.text == p;
    }
    bool peekIdent(const std::string& id) const {
        return tok_.kind == Token::Kind::Ident && tok_.text == id;
    }
    void expectEnd() {
        if (!atEnd()) fail("unexpected trailing token '" + tok_.text + "'");
    }

    int line() const { return line_; }

private:
    static bool identStart(char c) { return std::isalpha((unsigned char)c) || c == '_' || c == '.'; }
    static bool identChar(char c) {
        return std::isalnum((unsigned char)c) || c == '_' || c == '.';
    }

    void next() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
        tok_ = Token{};
        tok_.col = (int)pos_ + 1;
        if (pos_ >= s_.size() || s_[pos_] == ';') { // ';' starts a comment
            tok_.kind = Token::Kind::End;
            return;
        }
        char c = s_[pos_];
        if (c == '%' || c == '@') {
            ++pos_;
            size_t start = pos_;
            while (pos_ < s_.size() && identChar(s_[pos_])) ++pos_;
            if (pos_ == start) throw ParseError(file_, line_, tok_.col, "empty name after sigil");
            tok_.kind = (c == '%') ? Token::Kind::Reg : Token::Kind::Global;
            tok_.text = s_.substr(start, pos_ - start);
            return;
        }
        if (c == '"') {
            ++pos_;
            std::string out;
            while (pos_ < s_.size() && s_[pos_] != '"') {
                char ch = s_[pos_++];
                if (ch == '\\') {
                    if (pos_ >= s_.size()) throw ParseError(file_, line_, tok_.col, "unterminated escape");
                    char e = s_[pos_++];
                    switch (e) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '0': out.push_back('\0'); break;
                    case '\\': out.push_back('\\'); break;
                    case '"': out.push_back('"'); break;
                    case 'x': {
                        if (pos_ + 1 >= s_.size())
                            throw ParseError(file_, line_, tok_.col, "truncated \\x escape");
                        auto hex = [&](char h) -> int {
                            if (h >= '0' && h <= '9') return h - '0';
                            if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                            if (h >= 'A' && h <= 'F') return h - 'A' + 10;
                            throw ParseError(file_, line_, tok_.col, "bad hex digit in \\x escape");
                        };
                        int v = hex(s_[pos_]) * 16 + hex(s_[pos_ + 1]);
                        pos_ += 2;
                        out.push_back((char)v);
                        break;
                    }
                    default:
                        throw ParseError(file_, line_, tok_.col, std::string("unknown escape \\") + e);
                    }
                } else {
                    out.push_back(ch);
                }
            }
            if (pos_ >= s_.size()) throw ParseError(file_, line_, tok_.col, "unterminated string");
            ++pos_; // closing quote
            tok_.kind = Token::Kind::Str;
            tok_.text = std::move(out);
            return;
        }
        if (std::isdigit((unsigned char)c) ||
            (c == '-' && pos_ + 1 < s_.size() && std::isdigit((unsigned char)s_[pos_ + 1]))) {
            size_t start = pos_;
            if (c == '-') ++pos_;
            int base = 10;
            if (pos_ + 1 < s_.size() && s_[pos_] == '0' &&
                (s_[pos_ + 1] == 'x' || s_[pos_ + 1] == 'X')) {
                base = 16;
                pos_ += 2;
            }
            size_t digits = pos_;
            while (pos_ < s_.size() &&
                   (std::isalnum((unsigned char)s_[pos_]))) ++pos_;
            std::string body = s_.substr(digits, pos_ - digits);
            if (body.empty()) throw ParseError(file_, line_, tok_.col, "malformed number");
            uint64_t mag = 0;
            for (char d : body) {
                int v;
                if (d >= '0' && d <= '9') v = d - '0';
                else if (base == 16 && d >= 'a' && d <= 'f') v = d - 'a' + 10;
                else if (base == 16 && d >= 'A' && d <= 'F') v = d - 'A' + 10;
                else throw ParseError(file_, line_, tok_.col, "malformed number");
                mag = mag * base + (uint64_t)v;
            }
            tok_.kind = Token::Kind::Int;
            tok_.value = (s_[start] == '-') ? -(int64_t)mag : (int64_t)mag;
            return;
        }
        if (identStart(c)) {
            size_t start = pos_;
            while (pos_ < s_.size() && identChar(s_[pos_])) ++pos_;
            tok_.kind = Token::Kind::Ident;
            tok_.text = s_.substr(start, pos_ - start);
            return;
        }
        // single-char punctuation
        static const std::string punct = "{}[]():,=*";
        if (punct.find(c) != std::string::npos) {
            tok_.kind = Token::Kind::Punct;
            tok_.text = std::string(1, c);
            ++pos_;
            return;
        }
        throw ParseError(file_, line_, tok_.col, std::string("unexpected character '") + c + "'");
    }

    std::string file_;
    int line_;
    std::string s_;
    size_t pos_ = 0;
    Token tok_;
};

// ---------------------------------------------------------------------------
// Parser

class Parser {
public:
    Parser(const std::string& text, std::string filename)
        : file_(std::move(filename)) {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines_.push_back(line);
        }
    }

    Program run() {
        Program prog;
        while (lineNo_ <= (int)lines_.size()) {
            LineLexer lx = lexCurrent();
            if (lx.atEnd()) { advance(); continue; }
            if (lx.peekIdent("struct")) {
                prog.structs.push_back(parseStruct(lx));
                advance();
            } else if (lx.peekIdent("global")) {
                prog.globals.push_back(parseGlobal(lx));
                advance();
            } else if (lx.peekIdent("func")) {
                prog.functions.push_back(parseFunction(lx));
            } else {
                lx.fail("expected 'struct', 'global' or 'func' at top level");
            }
        }
        finalize(prog);
        validate(prog);
        return prog;
    }

private:
    LineLexer lexCurrent() { return LineLexer(file_, lineNo_, lines_[lineNo_ - 1]); }
    void advance() { ++lineNo_; }

    TypeRef parseType(LineLexer& lx) {
        if (lx.acceptPunct("[")) {
            Token n = lx.expect(Token::Kind::Int, "array length");
            if (n.value < 0) lx.fail("negative array length", n.col);
            if (!lx.peekIdent("x")) lx.fail("expected 'x' in array type");
            lx.take();
            TypeRef elem = parseType(lx);
            lx.expectPunct("]");
            return IrType::array(elem, (uint64_t)n.value);
        }
        Token t = lx.expect(Token::Kind::Ident, "type");
        if (t.text == "i8") return IrType::i8();
        if (t.text == "i64") return IrType::i64();
        if (t.text == "ptr") return IrType::ptr(parseType(lx));
        if (t.text.rfind("struct.", 0) == 0) {
            std::string name = t.text.substr(7);
            if (name.empty()) lx.fail("empty struct name", t.col);
            return IrType::strct(name);
        }
        lx.fail("unknown type '" + t.text + "'", t.col);
    }

    StructDef parseStruct(LineLexer& lx) {
        lx.take(); // 'struct'
        Token name = lx.expect(Token::Kind::Ident, "struct name");
        StructDef def;
        def.name = name.text;
        def.line = lx.line();
        lx.expectPunct("{");
        if (!lx.acceptPunct("}")) {
            while (true) {
                Token fname = lx.expect(Token::Kind::Ident, "field name");
                lx.expectPunct(":");
                TypeRef ftype = parseType(lx);
                def.fields.emplace_back(fname.text, ftype);
                if (lx.acceptPunct("}")) break;
                lx.expectPunct(",");
            }
        }
        lx.expectEnd();
        return def;
    }

    GlobalVar parseGlobal(LineLexer& lx) {
        lx.take(); // 'global'
        Token name = lx.expect(Token::Kind::Global, "global name (@name)");
        GlobalVar g;
        g.name = name.text;
        g.line = lx.line();
        lx.expectPunct(":");
        g.type = parseType(lx);
        if (lx.acceptPunct("=")) {
            if (lx.peekIdent("zero")) {
                lx.take();
            } else if (lx.peekIdent("extern")) {
                lx.take();
                g.externalInit = true; // contents arrive from outside; zero here
            } else if (lx.peekIdent("bytes")) {
                lx.take();
                while (lx.peek().kind == Token::Kind::Int) {
                    Token b = lx.take();
                    if (b.value < 0 || b.value > 255) lx.fail("byte out of range", b.col);
                    g.init.push_back((uint8_t)b.value);
                }
            } else if (lx.peek().kind == Token::Kind::Str) {
                Token s = lx.take();
                g.init.assign(s.text.begin(), s.text.end());
            } else {
                lx.fail("expected initializer (string, zero, extern, bytes ...)");
            }
        }
        lx.expectEnd();
        return g;
    }

    Function parseFunction(LineLexer& lx) {
        lx.take(); // 'func'
        Token name = lx.expect(Token::Kind::Global, "function name (@name)");
        Function fn;
        fn.name = name.text;
        fn.line = lx.line();
        lx.expectPunct("(");
        if (!lx.acceptPunct(")")) {
            while (true) {
                Token p = lx.expect(Token::Kind::Reg, "parameter (%name)");
                lx.expectPunct(":");
                TypeRef t = parseType(lx);
                fn.params.push_back({p.text, t});
                if (lx.acceptPunct(")")) break;
                lx.expectPunct(",");
            }
        }
        lx.expectPunct("{");
        lx.expectEnd();
        advance();

        fn.blocks.push_back(Block{"entry", {}, lineNo_});
        bool closed = false;
        while (lineNo_ <= (int)lines_.size()) {
            LineLexer bl = lexCurrent();
            if (bl.atEnd()) { advance(); continue; }
            if (bl.peekPunct("}")) {
                bl.take();
                bl.expectEnd();
                advance();
                closed = true;
                break;
            }
            // Label line: `name:` with nothing else.
            if (bl.peek().kind == Token::Kind::Ident) {
                LineLexer probe = bl;
                Token id = probe.take();
                if (probe.peekPunct(":")) {
                    probe.take();
                    probe.expectEnd();
                    if (fn.blocks.size() == 1 && fn.blocks[0].instrs.empty() &&
                        fn.blocks[0].label == "entry") {
                        fn.blocks[0].label = id.text; // explicit first label
                        fn.blocks[0].line = lineNo_;
                    } else {
                        fn.blocks.push_back(Block{id.text, {}, lineNo_});
                    }
                    advance();
                    continue;
                }
            }
            fn.blocks.back().instrs.push_back(parseInstr(bl));
            advance();
        }
        if (!closed) throw ParseError(file_, lineNo_, 1, "missing '}' closing @" + fn.name);
        return fn;
    }

    Operand parseOperand(LineLexer& lx) {
        Token t = lx.take();
        switch (t.kind) {
        case Token::Kind::Reg: return Operand::reg(t.text);
        case Token::Kind::Global: return Operand::global(t.text);
        case Token::Kind::Int: return Operand::immediate(t.value);
        default: lx.fail("expected operand (%reg, @global or integer)", t.col);
        }
    }

    Instr parseInstr(LineLexer& lx) {
        Instr ins;
        ins.line = lx.line();
        if (lx.peek().kind == Token::Kind::Reg) {
            Token dst = lx.take();
            ins.result = dst.text;
            lx.expectPunct("=");
            parseRhs(lx, ins);
        } else {
            Token op = lx.expect(Token::Kind::Ident, "instruction");
            parseVoidOp(lx, ins, op);
        }
        lx.expectEnd();
        return ins;
    }

    void parseRhs(LineLexer& lx, Instr& ins) {
        Token op = lx.expect(Token::Kind::Ident, "instruction");
        const std::string& o = op.text;
        if (o == "const") {
            ins.op = Opcode::Const;
            Token v = lx.expect(Token::Kind::Int, "integer constant");
            ins.imm = v.value;
        } else if (o == "alloca") {
            ins.op = Opcode::Alloca;
            ins.type = parseType(lx);
        } else if (o == "malloc") {
            ins.op = Opcode::Malloc;
            ins.args.push_back(parseOperand(lx));
        } else if (o == "gep") {
            ins.op = Opcode::Gep;
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            ins.type = parseType(lx);
            while (lx.acceptPunct(",")) {
                GepStep step;
                if (lx.peekIdent("field")) step.isField = true;
                else if (lx.peekIdent("index")) step.isField = false;
                else lx.fail("expected 'field' or 'index'");
                lx.take();
                Token k = lx.expect(Token::Kind::Int, "constant step");
                if (k.value < 0) lx.fail("negative step", k.col);
                step.index = (uint64_t)k.value;
                ins.path.push_back(step);
            }
            if (ins.path.empty()) lx.fail("gep needs at least one field/index step");
        } else if (o == "padd") {
            ins.op = Opcode::Padd;
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            ins.args.push_back(parseOperand(lx));
        } else if (o == "bitcast") {
            ins.op = Opcode::Bitcast;
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            ins.type = parseType(lx);
        } else if (o == "load") {
            ins.op = Opcode::Load;
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            Token w = lx.expect(Token::Kind::Int, "access width");
            ins.width = (unsigned)w.value;
        } else if (o == "mov") {
            ins.op = Opcode::Mov;
            ins.args.push_back(parseOperand(lx));
        } else if (o == "iadd" || o == "isub") {
            ins.op = (o == "iadd") ? Opcode::Iadd : Opcode::Isub;
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            ins.args.push_back(parseOperand(lx));
        } else if (o == "icmp") {
            ins.op = Opcode::Icmp;
            Token c = lx.expect(Token::Kind::Ident, "comparison (eq/ne/lt/le/gt/ge)");
            if (c.text == "eq") ins.cmp = CmpKind::Eq;
            else if (c.text == "ne") ins.cmp = CmpKind::Ne;
            else if (c.text == "lt") ins.cmp = CmpKind::Lt;
            else if (c.text == "le") ins.cmp = CmpKind::Le;
            else if (c.text == "gt") ins.cmp = CmpKind::Gt;
            else if (c.text == "ge") ins.cmp = CmpKind::Ge;
            else lx.fail("unknown comparison '" + c.text + "'", c.col);
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            ins.args.push_back(parseOperand(lx));
        } else if (o == "call") {
            ins.op = Opcode::Call;
            parseCallTail(lx, ins);
        } else if (o == "tagd") {
            ins.op = Opcode::Tagd;
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            if (lx.peekIdent("sp")) {
                lx.take();
                ins.tagdMod = TagdMod::Sp;
            } else if (lx.peekIdent("type")) {
                lx.take();
                Token s = lx.expect(Token::Kind::Str, "canonical type string");
                ins.tagdMod = TagdMod::Type;
                ins.tagdType = s.text;
            } else {
                lx.fail("expected tag modifier 'sp' or 'type \"...\"'");
            }
        } else if (o == "xtag") {
            ins.op = Opcode::Xtag;
            ins.args.push_back(parseOperand(lx));
        } else {
            lx.fail("unknown instruction '" + o + "'", op.col);
        }
    }

    void parseVoidOp(LineLexer& lx, Instr& ins, const Token& op) {
        const std::string& o = op.text;
        if (o == "store") {
            ins.op = Opcode::Store;
            ins.args.push_back(parseOperand(lx)); // value
            lx.expectPunct(",");
            ins.args.push_back(parseOperand(lx)); // pointer
            lx.expectPunct(",");
            Token w = lx.expect(Token::Kind::Int, "access width");
            ins.width = (unsigned)w.value;
        } else if (o == "free") {
            ins.op = Opcode::Free;
            ins.args.push_back(parseOperand(lx));
        } else if (o == "br") {
            ins.op = Opcode::Br;
            Token l = lx.expect(Token::Kind::Ident, "label");
            ins.label = l.text;
        } else if (o == "brz") {
            ins.op = Opcode::Brz;
            ins.args.push_back(parseOperand(lx));
            lx.expectPunct(",");
            Token l1 = lx.expect(Token::Kind::Ident, "label");
            lx.expectPunct(",");
            Token l2 = lx.expect(Token::Kind::Ident, "label");
            ins.label = l1.text;  // taken when operand == 0
            ins.label2 = l2.text; // taken otherwise
        } else if (o == "call") {
            ins.op = Opcode::Call;
            parseCallTail(lx, ins);
        } else if (o == "ret") {
            ins.op = Opcode::Ret;
            if (!lx.atEnd()) ins.args.push_back(parseOperand(lx));
        } else if (o == "cstr") {
            ins.op = Opcode::Cstr;
            ins.args.push_back(parseOperand(lx)); // tagged pointer
            lx.expectPunct(",");
            ins.args.push_back(parseOperand(lx)); // size in bytes
        } else if (o == "cclr") {
            ins.op = Opcode::Cclr;
            ins.args.push_back(parseOperand(lx));
        } else {
            lx.fail("unknown instruction '" + o + "'", op.col);
        }
    }

    void parseCallTail(LineLexer& lx, Instr& ins) {
        Token callee = lx.expect(Token::Kind::Global, "callee (@name)");
        ins.callee = callee.text;
        lx.expectPunct("(");
        if (!lx.acceptPunct(")")) {
            while (true) {
                ins.args.push_back(parseOperand(lx));
                if (lx.acceptPunct(")")) break;
                lx.expectPunct(",");
            }
        }
    }

    // Insert implicit terminators: fallthrough `br` between blocks, final `ret`.
    void finalize(Program& prog) {
        for (auto& fn : prog.functions) {
            for (size_t i = 0; i < fn.blocks.size(); ++i) {
                Block& b = fn.blocks[i];
                bool terminated = false;
                for (size_t j = 0; j < b.instrs.size(); ++j) {
                    Opcode op = b.instrs[j].op;
                    bool term = (op == Opcode::Br || op == Opcode::Brz || op == Opcode::Ret);
                    if (term && j + 1 < b.instrs.size())
                        throw ParseError(file_, b.instrs[j + 1].line, 1,
                                         "unreachable instruction after terminator");
                    terminated |= term;
                }
                if (!terminated) {
                    Instr t;
                    t.line = b.instrs.empty() ? b.line : b.instrs.back().line;
                    if (i + 1 < fn.blocks.size()) {
                        t.op = Opcode::Br;
                        t.label = fn.blocks[i + 1].label;
                    } else {
                        t.op = Opcode::Ret;
                    }
                    b.instrs.push_back(t);
                }
            }
        }
    }

    void validate(const Program& prog) {
        // struct name uniqueness + member struct resolution
        for (size_t i = 0; i < prog.structs.size(); ++i)
            for (size_t j = i + 1; j < prog.structs.size(); ++j)
                if (prog.structs[i].name == prog.structs[j].name)
                    throw ParseError(file_, prog.structs[j].line, 1,
                                     "duplicate struct '" + prog.structs[j].name + "'");
        for (const auto& s : prog.structs)
            for (const auto& f : s.fields)
                checkTypeResolves(prog, f.second, s.line);
        for (const auto& g : prog.globals) {
            checkTypeResolves(prog, g.type, g.line);
            if (g.init.size() > sizeOf(prog, g.type))
                throw ParseError(file_, g.line, 1, "initializer longer than @" + g.name);
        }
        for (size_t i = 0; i < prog.globals.size(); ++i)
            for (size_t j = i + 1; j < prog.globals.size(); ++j)
                if (prog.globals[i].name == prog.globals[j].name)
                    throw ParseError(file_, prog.globals[j].line, 1,
                                     "duplicate global '@" + prog.globals[j].name + "'");
        for (size_t i = 0; i < prog.functions.size(); ++i)
            for (size_t j = i + 1; j < prog.functions.size(); ++j)
                if (prog.functions[i].name == prog.functions[j].name)
                    throw ParseError(file_, prog.functions[j].line, 1,
                                     "duplicate function '@" + prog.functions[j].name + "'");
        if (!prog.findFunction(prog.entry))
            throw ParseError(file_, 1, 1, "missing entry function '@" + prog.entry + "'");

        for (const auto& fn : prog.functions) validateFunction(prog, fn);
    }

    void checkTypeResolves(const Program& prog, const TypeRef& t, int line) {
        switch (t->kind) {
        case IrType::Kind::Ptr:
        case IrType::Kind::Array:
            checkTypeResolves(prog, t->elem, line);
            break;
        case IrType::Kind::Struct:
            if (!prog.findStruct(t->name))
                throw ParseError(file_, line, 1, "unknown struct '" + t->name + "'");
            break;
        default: break;
        }
    }

    void validateFunction(const Program& prog, const Function& fn) {
        // Registers must be defined somewhere in the function (or be params).
        std::vector<std::string> defined;
        for (const auto& p : fn.params) defined.push_back(p.name);
        for (const auto& b : fn.blocks)
            for (const auto& ins : b.instrs)
                if (!ins.result.empty()) defined.push_back(ins.result);
        auto known = [&](const std::string& r) {
            return std::find(defined.begin(), defined.end(), r) != defined.end();
        };

        for (size_t bi = 0; bi < fn.blocks.size(); ++bi) {
            const Block& b = fn.blocks[bi];
            for (size_t bj = bi + 1; bj < fn.blocks.size(); ++bj)
                if (fn.blocks[bj].label == b.label)
                    throw ParseError(file_, fn.blocks[bj].line, 1,
                                     "duplicate label '" + b.label + "' in @" + fn.name);
            for (const auto& ins : b.instrs) {
                for (const auto& a : ins.args) {
                    if (a.isReg() && !known(a.name))
                        throw ParseError(file_, ins.line, 1,
                                         "register %" + a.name + " never defined in @" + fn.name);
                    if (a.isGlobal() && !prog.findGlobal(a.name))
                        throw ParseError(file_, ins.line, 1, "unknown global '@" + a.name + "'");
                }
                switch (ins.op) {
                case Opcode::Alloca:
                case Opcode::Bitcast:
                    checkTypeResolves(prog, ins.type, ins.line);
                    break;
                case Opcode::Gep: {
                    checkTypeResolves(prog, ins.type, ins.line);
                    try {
                        gepOffset(prog, ins.type, ins.path);
                    } catch (const std::invalid_argument& e) {
                        throw ParseError(file_, ins.line, 1, e.what());
                    }
                    break;
                }
                case Opcode::Load:
                case Opcode::Store:
                    if (ins.width != 1 && ins.width != 8)
                        throw ParseError(file_, ins.line, 1, "access width must be 1 or 8");
                    break;
                case Opcode::Br:
                    if (!fn.findBlock(ins.label))
                        throw ParseError(file_, ins.line, 1, "unknown label '" + ins.label + "'");
                    break;
                case Opcode::Brz:
                    for (const auto* l : {&ins.label, &ins.label2})
                        if (!fn.findBlock(*l))
                            throw ParseError(file_, ins.line, 1, "unknown label '" + *l + "'");
                    break;
                case Opcode::Call: {
                    int arity = intrinsicArity(ins.callee);
                    if (arity >= 0) {
                        if ((int)ins.args.size() != arity)
                            throw ParseError(file_, ins.line, 1,
                                             "@" + ins.callee + " expects " +
                                                 std::to_string(arity) + " arguments");
                    } else {
                        const Function* target = prog.findFunction(ins.callee);
                        if (!target)
                            throw ParseError(file_, ins.line, 1,
                                             "unknown function '@" + ins.callee + "'");
                        if (target->params.size() != ins.args.size())
                            throw ParseError(file_, ins.line, 1,
                                             "@" + ins.callee + " expects " +
                                                 std::to_string(target->params.size()) +
                                                 " arguments");
                    }
                    break;
                }
                default: break;
                }
            }
        }
    }

    std::string file_;
    std::vector<std::string> lines_;
    int lineNo_ = 1;
};

// ---------------------------------------------------------------------------
// Printer: canonical text with explicit labels and terminators, so that
// parse(print(p)) reproduces p exactly.

std::string typeSyntax(const TypeRef& t) {
    switch (t->kind) {
    case IrType::Kind::I8: return "i8";
    case IrType::Kind::I64: return "i64";
    case IrType::Kind::Ptr: return "ptr " + typeSyntax(t->elem);
    case IrType::Kind::Array:
        return "[" + std::to_string(t->count) + " x " + typeSyntax(t->elem) + "]";
    case IrType::Kind::Struct: return "struct." + t->name;
    }
    return "?";
}

std::string escapeString(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        unsigned char u = (unsigned char)c;
        if (c == '"') out += "\\\"";
        else if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else if (c == '\t') out += "\\t";
        else if (u < 0x20 || u >= 0x7F) {
            char buf[8];
            std::snprintf(buf, sizeof buf, "\\x%02x", u);
            out += buf;
        } else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string operandText(const Operand& a) {
    switch (a.kind) {
    case Operand::Kind::Reg: return "%" + a.name;
    case Operand::Kind::Global: return "@" + a.name;
    case Operand::Kind::Imm: return std::to_string(a.imm);
    }
    return "?";
}

std::string cmpText(CmpKind c) {
    switch (c) {
    case CmpKind::Eq: return "eq";
    case CmpKind::Ne: return "ne";
    case CmpKind::Lt: return "lt";
    case CmpKind::Le: return "le";
    case CmpKind::Gt: return "gt";
    case CmpKind::Ge: return "ge";
    }
    return "?";
}

std::string instrText(const Instr& ins) {
    std::string s;
    if (!ins.result.empty()) s = "%" + ins.result + " = ";
    auto arg = [&](size_t i) { return operandText(ins.args[i]); };
    switch (ins.op) {
    case Opcode::Const: s += "const " + std::to_string(ins.imm); break;
    case Opcode::Alloca: s += "alloca " + typeSyntax(ins.type); break;
    case Opcode::Malloc: s += "malloc " + arg(0); break;
    case Opcode::Free: s += "free " + arg(0); break;
    case Opcode::Gep: {
        s += "gep " + arg(0) + ", " + typeSyntax(ins.type);
        for (const auto& st : ins.path)
            s += std::string(", ") + (st.isField ? "field " : "index ") + std::to_string(st.index);
        break;
    }
    case Opcode::Padd: s += "padd " + arg(0) + ", " + arg(1); break;
    case Opcode::Bitcast: s += "bitcast " + arg(0) + ", " + typeSyntax(ins.type); break;
    case Opcode::Load: s += "load " + arg(0) + ", " + std::to_string(ins.width); break;
    case Opcode::Store:
        s += "store " + arg(0) + ", " + arg(1) + ", " + std::to_string(ins.width);
        break;
    case Opcode::Mov: s += "mov " + arg(0); break;
    case Opcode::Iadd: s += "iadd " + arg(0) + ", " + arg(1); break;
    case Opcode::Isub: s += "isub " + arg(0) + ", " + arg(1); break;
    case Opcode::Icmp: s += "icmp " + cmpText(ins.cmp) + " " + arg(0) + ", " + arg(1); break;
    case Opcode::Br: s += "br " + ins.label; break;
    case Opcode::Brz: s += "brz " + arg(0) + ", " + ins.label + ", " + ins.label2; break;
    case Opcode::Call: {
        s += "call @" + ins.callee + "(";
        for (size_t i = 0; i < ins.args.size(); ++i) {
            if (i) s += ", ";
            s += arg(i);
        }
        s += ")";
        break;
    }
    case Opcode::Ret:
        s += "ret";
        if (!ins.args.empty()) s += " " + arg(0);
        break;
    case Opcode::Tagd:
        s += "tagd " + arg(0) + ", ";
        s += (ins.tagdMod == TagdMod::Sp) ? "sp" : ("type " + escapeString(ins.tagdType));
        break;
    case Opcode::Xtag: s += "xtag " + arg(0); break;
    case Opcode::Cstr: s += "cstr " + arg(0) + ", " + arg(1); break;
    case Opcode::Cclr: s += "cclr " + arg(0); break;
    }
    return s;
}

} // namespace

Program parseProgram(const std::string& text, const std::string& filename) {
    return Parser(text, filename).run();
}

std::string printProgram(const Program& prog) {
    std::string out;
    for (const auto& s : prog.structs) {
        out += "struct " + s.name + " { ";
        for (size_t i = 0; i < s.fields.size(); ++i) {
            if (i) out += ", ";
            out += s.fields[i].first + ": " + typeSyntax(s.fields[i].second);
        }
        out += s.fields.empty() ? "}\n" : " }\n";
    }
    if (!prog.structs.empty()) out += "\n";
    for (const auto& g : prog.globals) {
        out += "global @" + g.name + " : " + typeSyntax(g.type);
        if (g.externalInit) {
            out += " = extern";
        } else if (!g.init.empty()) {
            bool printable = std::all_of(g.init.begin(), g.init.end(), [](uint8_t b) {
                return b == 0 || b == '\n' || b == '\t' || (b >= 0x20 && b < 0x7F);
            });
            if (printable) {
                out += " = " + escapeString(std::string(g.init.begin(), g.init.end()));
            } else {
                out += " = bytes";
                for (uint8_t b : g.init) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, " 0x%02x", b);
                    out += buf;
                }
            }
        }
        out += "\n";
    }
    if (!prog.globals.empty()) out += "\n";
    for (size_t fi = 0; fi < prog.functions.size(); ++fi) {
        const Function& fn = prog.functions[fi];
        out += "func @" + fn.name + "(";
        for (size_t i = 0; i < fn.params.size(); ++i) {
            if (i) out += ", ";
            out += "%" + fn.params[i].name + ": " + typeSyntax(fn.params[i].type);
        }
        out += ") {\n";
        for (const auto& b : fn.blocks) {
            out += b.label + ":\n";
            for (const auto& ins : b.instrs) out += "  " + instrText(ins) + "\n";
        }
        out += "}\n";
        if (fi + 1 < prog.functions.size()) out += "\n";
    }
    return out;
}

} // namespace curesim
