#include "curesim/instrument.hpp"

#include <algorithm>
#include <stdexcept>

namespace curesim {

const char* protectModeName(ProtectMode m) {
    switch (m) {
    case ProtectMode::Off: return "off";
    case ProtectMode::Heap: return "dpt-h";
    case ProtectMode::Object: return "dpt-c";
    case ProtectMode::Field: return "dpt-f";
    }
    return "?";
}

ProtectMode protectModeFromName(const std::string& name) {
    if (name == "off") return ProtectMode::Off;
    if (name == "dpt-h") return ProtectMode::Heap;
    if (name == "dpt-c") return ProtectMode::Object;
    if (name == "dpt-f") return ProtectMode::Field;
    throw std::invalid_argument("unknown protection mode '" + name + "'");
}

namespace {

bool atLeast(ProtectMode m, ProtectMode floor) {
    return static_cast<int>(m) >= static_cast<int>(floor);
}

Instr mkMov(std::string res, Operand src, int line) {
    Instr i;
    i.op = Opcode::Mov;
    i.result = std::move(res);
    i.args = {std::move(src)};
    i.line = line;
    return i;
}
Instr mkTagdSp(const std::string& reg, int line) {
    Instr i;
    i.op = Opcode::Tagd;
    i.result = reg;
    i.args = {Operand::reg(reg)};
    i.tagdMod = TagdMod::Sp;
    i.line = line;
    return i;
}
Instr mkTagdType(const std::string& reg, std::string canon, int line) {
    Instr i;
    i.op = Opcode::Tagd;
    i.result = reg;
    i.args = {Operand::reg(reg)};
    i.tagdMod = TagdMod::Type;
    i.tagdType = std::move(canon);
    i.line = line;
    return i;
}
Instr mkCstr(Operand ptr, Operand size, int line) {
    Instr i;
    i.op = Opcode::Cstr;
    i.args = {std::move(ptr), std::move(size)};
    i.line = line;
    return i;
}
Instr mkCclr(Operand ptr, int line) {
    Instr i;
    i.op = Opcode::Cclr;
    i.args = {std::move(ptr)};
    i.line = line;
    return i;
}
Instr mkCall(std::string callee, std::vector<Operand> args, std::string res, int line) {
    Instr i;
    i.op = Opcode::Call;
    i.callee = std::move(callee);
    i.args = std::move(args);
    i.result = std::move(res);
    i.line = line;
    return i;
}

class FunctionRewriter {
public:
    FunctionRewriter(const Program& prog, const InstrumentOptions& opt,
                     const std::map<const Instr*, std::string>& sites,
                     const std::vector<const GlobalVar*>& protGlobals,
                     const Function& fn)
        : prog_(prog), opt_(opt), sites_(sites), protGlobals_(protGlobals), fn_(fn),
          isEntry_(fn.name == prog.entry) {
        collect();
    }

    Function run() {
        Function out;
        out.name = fn_.name;
        out.params = fn_.params;
        out.line = fn_.line;
        for (size_t bi = 0; bi < fn_.blocks.size(); ++bi) {
            const Block& b = fn_.blocks[bi];
            Block ob{b.label, {}, b.line};
            if (bi == 0)
                emitPrologue(ob);
            for (const auto& ins : b.instrs)
                emitInstr(ob, ins);
            out.blocks.push_back(std::move(ob));
        }
        return out;
    }

private:
    void collect() {
        for (const auto& p : fn_.params)
            regNames_.insert(p.name);
        for (const auto& b : fn_.blocks)
            for (const auto& ins : b.instrs) {
                if (!ins.result.empty())
                    regNames_.insert(ins.result);
                for (const auto& a : ins.args)
                    if (a.isReg())
                        regNames_.insert(a.name);
            }

        // Globals needing a tagged derivation here: every protected global
        // this function mentions; the entry function covers all of them so
        // their metadata gets stored exactly once.
        std::set<std::string> mentioned;
        for (const auto& b : fn_.blocks)
            for (const auto& ins : b.instrs)
                for (const auto& a : ins.args)
                    if (a.isGlobal())
                        mentioned.insert(a.name);
        for (const GlobalVar* g : protGlobals_) {
            if (!isEntry_ && !mentioned.count(g->name))
                continue;
            std::string shadow = uniquify(g->name + ".cap");
            subst_["@" + g->name] = shadow;
            globalShadows_.push_back({g, shadow});
        }

        if (atLeast(opt_.mode, ProtectMode::Object)) {
            for (const auto& b : fn_.blocks)
                for (const auto& ins : b.instrs) {
                    if (ins.op != Opcode::Alloca)
                        continue;
                    if (!opt_.plan.has(sites_.at(&ins)))
                        continue;
                    auto it = subst_.find(ins.result);
                    std::string shadow;
                    if (it == subst_.end()) {
                        shadow = uniquify(ins.result + ".sh");
                        subst_[ins.result] = shadow;
                        allocaShadows_.push_back(shadow);
                        shadowIsStruct_[shadow] = false;
                    } else {
                        shadow = it->second;
                    }
                    if (ins.type->kind == IrType::Kind::Struct)
                        shadowIsStruct_[shadow] = true;
                    protectedAllocas_.insert(&ins);
                }
        }
    }

    std::string uniquify(std::string base) {
        std::string name = base;
        int n = 1;
        while (regNames_.count(name))
            name = base + std::to_string(n++);
        regNames_.insert(name);
        return name;
    }

    Operand substitute(const Operand& a) const {
        if (a.isReg()) {
            auto it = subst_.find(a.name);
            if (it != subst_.end())
                return Operand::reg(it->second);
        } else if (a.isGlobal()) {
            auto it = subst_.find("@" + a.name);
            if (it != subst_.end())
                return Operand::reg(it->second);
        }
        return a;
    }

    void emitPrologue(Block& ob) {
        int line = fn_.line;
        for (const auto& [g, shadow] : globalShadows_) {
            ob.instrs.push_back(mkMov(shadow, Operand::global(g->name), line));
            ob.instrs.push_back(mkTagdType(shadow, typeName(g->type), line));
            if (isEntry_)
                ob.instrs.push_back(mkCstr(
                    Operand::reg(shadow),
                    Operand::immediate(static_cast<int64_t>(sizeOf(prog_, g->type))),
                    line));
        }
    }

    void emitInstr(Block& ob, const Instr& ins) {
        switch (ins.op) {
        case Opcode::Alloca: {
            ob.instrs.push_back(ins);
            if (protectedAllocas_.count(&ins)) {
                const std::string& shadow = subst_.at(ins.result);
                ob.instrs.push_back(mkMov(shadow, Operand::reg(ins.result), ins.line));
                ob.instrs.push_back(mkTagdSp(shadow, ins.line));
                ob.instrs.push_back(mkCstr(
                    Operand::reg(shadow),
                    Operand::immediate(static_cast<int64_t>(sizeOf(prog_, ins.type))),
                    ins.line));
            }
            break;
        }
        case Opcode::Malloc: {
            bool prot = opt_.plan.has(sites_.at(&ins));
            Operand sizeOp = substitute(ins.args[0]);
            if (prot && sizeOp.isReg() && sizeOp.name == ins.result) {
                std::string tmp = uniquify(ins.result + ".siz");
                ob.instrs.push_back(mkMov(tmp, sizeOp, ins.line));
                sizeOp = Operand::reg(tmp);
            }
            Instr m = ins;
            m.args[0] = substitute(ins.args[0]);
            ob.instrs.push_back(std::move(m));
            if (prot) {
                Instr t = mkTagdSp(ins.result, ins.line);
                ob.instrs.push_back(std::move(t));
                ob.instrs.push_back(mkCstr(Operand::reg(ins.result), sizeOp, ins.line));
            }
            break;
        }
        case Opcode::Free: {
            Operand q = substitute(ins.args[0]);
            if (opt_.mode == ProtectMode::Field)
                ob.instrs.push_back(mkCall("scan_clear", {q}, "", ins.line));
            ob.instrs.push_back(mkCclr(q, ins.line));
            Instr f = ins;
            f.args[0] = q;
            ob.instrs.push_back(std::move(f));
            break;
        }
        case Opcode::Ret: {
            if (opt_.mode == ProtectMode::Field)
                for (auto it = allocaShadows_.rbegin(); it != allocaShadows_.rend(); ++it)
                    if (shadowIsStruct_.at(*it))
                        ob.instrs.push_back(
                            mkCall("scan_clear", {Operand::reg(*it)}, "", ins.line));
            for (auto it = allocaShadows_.rbegin(); it != allocaShadows_.rend(); ++it)
                ob.instrs.push_back(mkCclr(Operand::reg(*it), ins.line));
            Instr r = ins;
            for (auto& a : r.args)
                a = substitute(a);
            ob.instrs.push_back(std::move(r));
            break;
        }
        case Opcode::Gep: {
            Instr g = ins;
            g.args[0] = substitute(ins.args[0]);
            ob.instrs.push_back(std::move(g));
            if (opt_.mode == ProtectMode::Field && !ins.result.empty() &&
                !ins.path.empty() && ins.path.back().isField && wrapGep(ins)) {
                auto [off, sub] = gepOffset(prog_, ins.type, ins.path);
                (void)off;
                ob.instrs.push_back(mkCall(
                    "mutate_ptr",
                    {Operand::reg(ins.result),
                     Operand::immediate(static_cast<int64_t>(sizeOf(prog_, sub)))},
                    ins.result, ins.line));
            }
            break;
        }
        default: {
            Instr c = ins;
            for (auto& a : c.args)
                a = substitute(a);
            ob.instrs.push_back(std::move(c));
            break;
        }
        }
    }

    // A field pointer is wrapped unless every owning object is known and
    // none of them is protected.
    bool wrapGep(const Instr& ins) const {
        if (!opt_.gepOwners)
            return true;
        auto it = opt_.gepOwners->find(&ins);
        if (it == opt_.gepOwners->end() || it->second.empty())
            return true;
        return std::any_of(it->second.begin(), it->second.end(),
                           [&](const std::string& s) { return opt_.plan.has(s); });
    }

    const Program& prog_;
    const InstrumentOptions& opt_;
    const std::map<const Instr*, std::string>& sites_;
    const std::vector<const GlobalVar*>& protGlobals_;
    const Function& fn_;
    bool isEntry_;

    std::set<std::string> regNames_;
    std::map<std::string, std::string> subst_;
    std::vector<std::pair<const GlobalVar*, std::string>> globalShadows_;
    std::vector<std::string> allocaShadows_;
    std::map<std::string, bool> shadowIsStruct_;
    std::set<const Instr*> protectedAllocas_;
};

} // namespace

Program instrument(const Program& in, const InstrumentOptions& opt) {
    Program out;
    out.structs = in.structs;
    out.globals = in.globals;
    out.entry = in.entry;
    if (opt.mode == ProtectMode::Off) {
        out.functions = in.functions;
        return out;
    }
    auto sites = allocationSiteIds(in);
    std::vector<const GlobalVar*> protGlobals;
    if (atLeast(opt.mode, ProtectMode::Object))
        for (const auto& g : in.globals)
            if (opt.plan.has("@" + g.name))
                protGlobals.push_back(&g);
    for (const auto& fn : in.functions)
        out.functions.push_back(FunctionRewriter(in, opt, sites, protGlobals, fn).run());
    return out;
}

} // namespace curesim
