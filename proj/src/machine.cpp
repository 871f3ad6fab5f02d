#include "curesim/machine.hpp"

#include <stdexcept>

namespace curesim {

namespace {
constexpr uint64_t alignUp(uint64_t v, uint64_t a) { return (v + a - 1) & ~(a - 1); }
} // namespace

Machine::Machine(Program prog, MachineConfig cfg)
    : prog_(std::move(prog)), cfg_(cfg),
      cmt_(mem_, cfg.cmtBase, cfg.cmtWays),
      lfsr_(cfg.lfsrSeed) {
    uarch_.enabled = cfg_.uarchEnabled;
    uarch_.headBuffersEnabled = cfg_.headBuffersEnabled;
    uarch_.chbPolicy = cfg_.chbPolicy;
    cmtNextBase_ = alignUp(cfg_.cmtBase + cmt_.byteSize(), 4096);
    indexSites();
    globalAddr_ = layoutGlobals(prog_); // placement is static, queryable pre-run
}

std::map<std::string, uint64_t> Machine::layoutGlobals(const Program& prog) {
    std::map<std::string, uint64_t> out;
    uint64_t cur = GLOBAL_BASE;
    for (const auto& g : prog.globals) {
        cur = alignUp(cur, 16);
        out[g.name] = cur;
        cur += sizeOf(prog, g.type);
    }
    return out;
}

void Machine::setupGlobals() {
    uint64_t cur = GLOBAL_BASE;
    for (const auto& g : prog_.globals) {
        cur = alignUp(cur, 16);
        uint64_t size = sizeOf(prog_, g.type);
        globalAddr_[g.name] = cur;
        for (size_t i = 0; i < g.init.size(); ++i)
            mem_.store8(cur + i, g.init[i]);
        objects_.insert_or_assign(
            cur, ObjRecord{cur, size, "@" + g.name, ObjKind::Global, true});
        if (g.externalInit && cfg_.trackProvenance) {
            for (uint64_t i = 0; i < size; ++i)
                taintedBytes_.insert(cur + i);
            taintedSites_.insert("@" + g.name);
        }
        cur += size;
    }
    globalEnd_ = cur;
}

void Machine::indexSites() { siteIds_ = allocationSiteIds(prog_); }

uint64_t Machine::globalAddress(const std::string& name) const {
    auto it = globalAddr_.find(name);
    if (it == globalAddr_.end())
        throw std::invalid_argument("no such global: " + name);
    return it->second;
}

// A new allocation owns its byte range outright: records of older objects
// whose storage it reuses are dropped (their capabilities are already gone),
// and any external-byte marks left there no longer describe these bytes.
void Machine::reclaimRange(uint64_t base, uint64_t size) {
    auto it = objects_.lower_bound(base);
    while (it != objects_.end() && it->first < base + size)
        it = objects_.erase(it);
    if (cfg_.trackProvenance)
        taintedBytes_.erase(taintedBytes_.lower_bound(base),
                            taintedBytes_.lower_bound(base + size));
}

const Machine::ObjRecord* Machine::objectContaining(uint64_t addr) const {
    auto it = objects_.upper_bound(addr);
    if (it == objects_.begin())
        return nullptr;
    --it;
    const ObjRecord& r = it->second;
    if (r.live && r.base <= addr && addr < r.base + r.size)
        return &r;
    return nullptr;
}

uint8_t Machine::nextInputByte() {
    uint64_t i = inputCursor_++;
    if (!cfg_.inputBytes.empty())
        return static_cast<uint8_t>(cfg_.inputBytes[i % cfg_.inputBytes.size()]);
    return static_cast<uint8_t>('A' + (i % 26));
}

RunOutcome Machine::run() {
    RunOutcome out;
    try {
        setupGlobals();
        const Function* entry = prog_.findFunction(prog_.entry);
        if (!entry)
            throw MachineError("missing entry function");
        Frame f;
        f.fn = entry;
        f.savedStackPtr = stackPtr_;
        for (const auto& p : entry->params)
            f.regs[p.name] = 0;
        frames_.push_back(std::move(f));
        while (!frames_.empty()) {
            if (stats_.steps >= cfg_.maxSteps)
                throw MachineError("step budget exceeded");
            stepOnce();
        }
        uarch_.drain();
    } catch (const std::exception& e) {
        out.aborted = true;
        out.abortReason = e.what();
    }
    out.output = output_;
    out.stats = stats_;
    out.uarch = uarch_.stats;
    out.finalCmtWays = cmt_.numWays();
    out.taintedSites = taintedSites_;
    return out;
}

void Machine::stepOnce() {
    Frame& fr = frames_.back();
    const Block& b = fr.fn->blocks[fr.blockIdx];
    const Instr& ins = b.instrs[fr.instrIdx];
    ++fr.instrIdx; // branches and calls adjust below
    bool memAccess = ins.op == Opcode::Load || ins.op == Opcode::Store ||
                     (ins.op == Opcode::Call &&
                      (ins.callee == "input" || ins.callee == "print" ||
                       ins.callee == "memfill"));
    exec(ins);
    ++stats_.steps;
    lfsr_.step(); // one advance per executed instruction
    uarch_.tick(memAccess);
}

uint64_t Machine::evalOperand(const Operand& a) const {
    switch (a.kind) {
    case Operand::Kind::Reg: {
        const auto& regs = frames_.back().regs;
        auto it = regs.find(a.name);
        return it == regs.end() ? 0 : it->second; // read-before-write yields 0
    }
    case Operand::Kind::Global: {
        auto it = globalAddr_.find(a.name);
        return it == globalAddr_.end() ? 0 : it->second;
    }
    case Operand::Kind::Imm:
        return static_cast<uint64_t>(a.imm);
    }
    return 0;
}

bool Machine::operandTaint(const Operand& a) const {
    if (!cfg_.trackProvenance || !a.isReg())
        return false;
    const auto& taint = frames_.back().taint;
    auto it = taint.find(a.name);
    return it != taint.end() && it->second;
}

void Machine::setReg(const std::string& name, uint64_t value, bool taint) {
    Frame& fr = frames_.back();
    fr.regs[name] = value;
    if (cfg_.trackProvenance)
        fr.taint[name] = taint;
}

void Machine::requireMapped(uint64_t addr, unsigned width) const {
    uint64_t last = addr + width - 1;
    auto inside = [&](uint64_t lo, uint64_t hi) { return addr >= lo && last < hi; };
    if (inside(GLOBAL_BASE, globalEnd_ + 4096) ||
        inside(HEAP_BASE, heapHighWater_ + 4096) ||
        inside(STACK_TOP - STACK_SPAN, STACK_TOP))
        return;
    char buf[64];
    std::snprintf(buf, sizeof buf, "access outside mapped memory at 0x%llx",
                  static_cast<unsigned long long>(addr));
    throw MachineError(buf);
}

bool Machine::checkAccess(uint64_t ptr, unsigned width, bool isStore, int line) {
    uint16_t tag = tagOf(ptr);
    uint64_t addr = addrOf(ptr);
    if (!dptOn() || tag == 0) {
        uarch_.noteUntaggedMemInst();
        return true;
    }
    TaskKind kind = isStore ? TaskKind::CheckStore : TaskKind::CheckLoad;
    if (auto word = uarch_.ccacheLookup(tag, addr, width)) {
        uarch_.noteCheck(kind, tag, true, 0, true, *word);
        return true;
    }
    CmtProbe p = cmt_.check(tag, addr, width, 0); // checks always start at way 0
    bool passed = p.fault == CapFault::None;
    uarch_.noteCheck(kind, tag, false, p.iterations, passed, p.word);
    if (!passed) {
        ++stats_.spatialViolations;
        violations_.push_back({ViolationRecord::Kind::Spatial, line, addr});
    }
    return passed;
}

uint64_t Machine::doLoad(uint64_t ptr, unsigned width, int line, bool* taintOut) {
    if (taintOut)
        *taintOut = false;
    if (!checkAccess(ptr, width, false, line))
        return 0; // suppressed
    uint64_t addr = addrOf(ptr);
    requireMapped(addr, width);
    uint64_t v = width == 1 ? mem_.load8(addr) : mem_.load64(addr);
    if (cfg_.trackProvenance && taintOut)
        for (unsigned i = 0; i < width; ++i)
            if (taintedBytes_.count(addr + i))
                *taintOut = true;
    return v;
}

bool Machine::doStore(uint64_t ptr, unsigned width, uint64_t value, bool valueTaint,
                      int line) {
    if (!checkAccess(ptr, width, true, line))
        return false; // suppressed
    uint64_t addr = addrOf(ptr);
    requireMapped(addr, width);
    if (width == 1)
        mem_.store8(addr, static_cast<uint8_t>(value));
    else
        mem_.store64(addr, value);
    if (cfg_.trackProvenance) {
        for (unsigned i = 0; i < width; ++i) {
            if (valueTaint)
                taintedBytes_.insert(addr + i);
            else
                taintedBytes_.erase(addr + i);
        }
        if (valueTaint)
            recordExternalWrite(addr, width);
    }
    return true;
}

void Machine::recordExternalWrite(uint64_t addr, unsigned width) {
    for (unsigned i = 0; i < width; ++i)
        if (const ObjRecord* r = objectContaining(addr + i))
            taintedSites_.insert(r->site);
}

void Machine::execCstr(uint64_t tagged, uint64_t size, int line) {
    (void)line;
    if (!dptOn() || !isTagged(tagged))
        return; // blanket instrumentation over untagged pointers is a no-op
    uint16_t tag = tagOf(tagged);
    uint64_t addr = addrOf(tagged);
    while (true) {
        unsigned start = uarch_.cstrStartWay(tag, cmt_.numWays());
        CmtProbe p = cmt_.cstr(tag, addr, size, start);
        if (p.fault == CapFault::CmtFull) {
            uarch_.noteCstr(tag, p.way, p.iterations, false, 0, cmt_.numWays());
            resizeCmt();
            continue; // re-execute against the grown table
        }
        uarch_.noteCstr(tag, p.way, p.iterations, true, p.word, cmt_.numWays());
        ++stats_.cstrExecuted;
        return;
    }
}

void Machine::execCclr(uint64_t tagged, int line) {
    if (!dptOn() || !isTagged(tagged))
        return;
    uint16_t tag = tagOf(tagged);
    uint64_t addr = addrOf(tagged);
    unsigned start = uarch_.cclrStartWay(tag, cmt_.numWays());
    CmtProbe p = cmt_.cclr(tag, addr, start);
    bool found = p.fault == CapFault::None;
    uarch_.noteCclr(tag, addr, p.way, p.iterations, found, isStackClass(addr),
                    cmt_.numWays());
    if (found) {
        ++stats_.cclrExecuted;
    } else {
        ++stats_.temporalViolations; // stale or repeated clear
        violations_.push_back({ViolationRecord::Kind::Temporal, line, addr});
    }
}

void Machine::resizeCmt() {
    unsigned newWays = cmt_.numWays() * 2;
    if (newWays > cfg_.maxCmtWays)
        throw MachineError("capability table exceeded its way limit");
    cmt_.resizeInto(cmtNextBase_, newWays);
    cmtNextBase_ = alignUp(cmtNextBase_ + cmt_.byteSize(), 4096);
    ++stats_.resizes;
    uarch_.onCmtResize(newWays);
}

SubObjectOps Machine::scanOps(int line, bool countTemporal) {
    SubObjectOps ops;
    ops.cstr = [this, line](uint64_t tagged, uint64_t size) {
        execCstr(tagged, size, line);
        ++stats_.subCapsCreated;
    };
    ops.cclr = [this, line, countTemporal](uint64_t tagged) {
        uint16_t tag = tagOf(tagged);
        uint64_t addr = addrOf(tagged);
        unsigned start = uarch_.cclrStartWay(tag, cmt_.numWays());
        CmtProbe p = cmt_.cclr(tag, addr, start);
        bool found = p.fault == CapFault::None;
        uarch_.noteCclr(tag, addr, p.way, p.iterations, found, isStackClass(addr),
                        cmt_.numWays());
        if (found)
            ++stats_.cclrExecuted;
        else if (countTemporal) {
            ++stats_.temporalViolations;
            violations_.push_back({ViolationRecord::Kind::Temporal, line, addr});
        }
        return found;
    };
    return ops;
}

void Machine::exec(const Instr& ins) {
    switch (ins.op) {
    case Opcode::Const:
        setReg(ins.result, static_cast<uint64_t>(ins.imm));
        break;
    case Opcode::Alloca: {
        uint64_t size = sizeOf(prog_, ins.type);
        uint64_t addr = (stackPtr_ - size) & ~uint64_t{15};
        if (addr < STACK_TOP - STACK_SPAN + 65536)
            throw MachineError("stack exhausted");
        stackPtr_ = addr;
        mem_.zeroRange(addr, size); // allocations are zero-filled
        reclaimRange(addr, size);
        objects_.insert_or_assign(
            addr, ObjRecord{addr, size, siteIds_.at(&ins), ObjKind::Stack, true});
        frames_.back().allocaBases.push_back(addr);
        setReg(ins.result, addr);
        break;
    }
    case Opcode::Malloc: {
        uint64_t size = evalOperand(ins.args[0]);
        if (size == 0)
            size = 1;
        uint64_t addr;
        auto fl = freeLists_.find(size);
        if (fl != freeLists_.end() && !fl->second.empty()) {
            addr = fl->second.back(); // LIFO reuse of exact-size blocks
            fl->second.pop_back();
        } else {
            heapPtr_ = alignUp(heapPtr_, 16);
            addr = heapPtr_;
            heapPtr_ += size;
            if (heapPtr_ > heapHighWater_)
                heapHighWater_ = heapPtr_;
        }
        mem_.zeroRange(addr, size);
        reclaimRange(addr, size);
        objects_.insert_or_assign(
            addr, ObjRecord{addr, size, siteIds_.at(&ins), ObjKind::Heap, true});
        setReg(ins.result, addr);
        break;
    }
    case Opcode::Free: {
        uint64_t addr = addrOf(evalOperand(ins.args[0]));
        auto it = objects_.find(addr);
        if (it == objects_.end() || it->second.kind != ObjKind::Heap) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "free of non-heap address 0x%llx",
                          static_cast<unsigned long long>(addr));
            throw MachineError(buf);
        }
        if (!it->second.live)
            break; // repeated free: tolerated, the capability layer reports it
        it->second.live = false;
        freeLists_[it->second.size].push_back(addr);
        break;
    }
    case Opcode::Gep: {
        uint64_t base = evalOperand(ins.args[0]);
        auto [off, sub] = gepOffset(prog_, ins.type, ins.path);
        (void)sub;
        setReg(ins.result, withTag(addrOf(base) + off, tagOf(base)),
               operandTaint(ins.args[0]));
        break;
    }
    case Opcode::Padd: {
        uint64_t base = evalOperand(ins.args[0]);
        uint64_t delta = evalOperand(ins.args[1]);
        setReg(ins.result, withTag(addrOf(base) + delta, tagOf(base)),
               operandTaint(ins.args[0]) || operandTaint(ins.args[1]));
        break;
    }
    case Opcode::Bitcast:
    case Opcode::Mov:
        setReg(ins.result, evalOperand(ins.args[0]), operandTaint(ins.args[0]));
        break;
    case Opcode::Load: {
        bool taint = false;
        uint64_t v = doLoad(evalOperand(ins.args[0]), ins.width, ins.line, &taint);
        setReg(ins.result, v, taint);
        break;
    }
    case Opcode::Store:
        doStore(evalOperand(ins.args[1]), ins.width, evalOperand(ins.args[0]),
                operandTaint(ins.args[0]), ins.line);
        break;
    case Opcode::Iadd:
        setReg(ins.result, evalOperand(ins.args[0]) + evalOperand(ins.args[1]),
               operandTaint(ins.args[0]) || operandTaint(ins.args[1]));
        break;
    case Opcode::Isub:
        setReg(ins.result, evalOperand(ins.args[0]) - evalOperand(ins.args[1]),
               operandTaint(ins.args[0]) || operandTaint(ins.args[1]));
        break;
    case Opcode::Icmp: {
        int64_t a = static_cast<int64_t>(evalOperand(ins.args[0]));
        int64_t b = static_cast<int64_t>(evalOperand(ins.args[1]));
        bool r = false;
        switch (ins.cmp) {
        case CmpKind::Eq: r = a == b; break;
        case CmpKind::Ne: r = a != b; break;
        case CmpKind::Lt: r = a < b; break;
        case CmpKind::Le: r = a <= b; break;
        case CmpKind::Gt: r = a > b; break;
        case CmpKind::Ge: r = a >= b; break;
        }
        setReg(ins.result, r ? 1 : 0,
               operandTaint(ins.args[0]) || operandTaint(ins.args[1]));
        break;
    }
    case Opcode::Br: {
        Frame& fr = frames_.back();
        for (size_t i = 0; i < fr.fn->blocks.size(); ++i)
            if (fr.fn->blocks[i].label == ins.label) {
                fr.blockIdx = i;
                fr.instrIdx = 0;
                return;
            }
        throw MachineError("branch to unknown label " + ins.label);
    }
    case Opcode::Brz: {
        uint64_t v = evalOperand(ins.args[0]);
        const std::string& target = v == 0 ? ins.label : ins.label2;
        Frame& fr = frames_.back();
        for (size_t i = 0; i < fr.fn->blocks.size(); ++i)
            if (fr.fn->blocks[i].label == target) {
                fr.blockIdx = i;
                fr.instrIdx = 0;
                return;
            }
        throw MachineError("branch to unknown label " + target);
    }
    case Opcode::Call:
        execCall(ins);
        break;
    case Opcode::Ret:
        execRet(ins);
        break;
    case Opcode::Tagd: {
        uint64_t v = evalOperand(ins.args[0]);
        bool t = operandTaint(ins.args[0]);
        if (!dptOn()) {
            setReg(ins.result, v, t); // tagging disabled: identity
        } else if (ins.tagdMod == TagdMod::Sp) {
            setReg(ins.result, tagd(v, TagModifier::sp(stackPtr_), lfsr_.state()), t);
        } else {
            setReg(ins.result, tagd(v, TagModifier::type(typeId(ins.tagdType)), 0), t);
        }
        break;
    }
    case Opcode::Xtag:
        setReg(ins.result, xtag(evalOperand(ins.args[0])), operandTaint(ins.args[0]));
        break;
    case Opcode::Cstr:
        execCstr(evalOperand(ins.args[0]), evalOperand(ins.args[1]), ins.line);
        break;
    case Opcode::Cclr:
        execCclr(evalOperand(ins.args[0]), ins.line);
        break;
    }
}

void Machine::execCall(const Instr& ins) {
    if (isIntrinsic(ins.callee)) {
        execIntrinsic(ins);
        return;
    }
    const Function* target = prog_.findFunction(ins.callee);
    if (!target)
        throw MachineError("call to unknown function @" + ins.callee);
    if (frames_.size() >= 10000)
        throw MachineError("call depth exceeded");
    Frame nf;
    nf.fn = target;
    nf.retDest = ins.result;
    nf.savedStackPtr = stackPtr_;
    for (size_t i = 0; i < target->params.size(); ++i) {
        nf.regs[target->params[i].name] = evalOperand(ins.args[i]);
        if (cfg_.trackProvenance)
            nf.taint[target->params[i].name] = operandTaint(ins.args[i]);
    }
    frames_.push_back(std::move(nf));
}

void Machine::execRet(const Instr& ins) {
    uint64_t v = ins.args.empty() ? 0 : evalOperand(ins.args[0]);
    bool vt = ins.args.empty() ? false : operandTaint(ins.args[0]);
    Frame done = std::move(frames_.back());
    frames_.pop_back();
    for (uint64_t base : done.allocaBases) {
        auto it = objects_.find(base);
        if (it != objects_.end())
            it->second.live = false;
    }
    stackPtr_ = done.savedStackPtr;
    if (!frames_.empty() && !done.retDest.empty())
        setReg(done.retDest, v, vt);
}

void Machine::execIntrinsic(const Instr& ins) {
    auto byteAt = [](uint64_t ptr, uint64_t i) {
        return withTag(addrOf(ptr) + i, tagOf(ptr));
    };
    if (ins.callee == "input") {
        uint64_t ptr = evalOperand(ins.args[0]);
        uint64_t len = evalOperand(ins.args[1]);
        for (uint64_t i = 0; i < len; ++i)
            doStore(byteAt(ptr, i), 1, nextInputByte(), /*valueTaint=*/true, ins.line);
    } else if (ins.callee == "print") {
        uint64_t ptr = evalOperand(ins.args[0]);
        uint64_t len = evalOperand(ins.args[1]);
        for (uint64_t i = 0; i < len; ++i) {
            uint64_t v = doLoad(byteAt(ptr, i), 1, ins.line, nullptr);
            output_.push_back(static_cast<char>(v));
        }
    } else if (ins.callee == "memfill") {
        uint64_t ptr = evalOperand(ins.args[0]);
        uint64_t byte = evalOperand(ins.args[1]);
        uint64_t len = evalOperand(ins.args[2]);
        for (uint64_t i = 0; i < len; ++i)
            doStore(byteAt(ptr, i), 1, byte, /*valueTaint=*/false, ins.line);
    } else if (ins.callee == "mutate_ptr") {
        uint64_t ptr = evalOperand(ins.args[0]);
        uint64_t subSize = evalOperand(ins.args[1]);
        bool t = operandTaint(ins.args[0]);
        uint64_t result = ptr;
        if (dptOn())
            result = mutatePtr(ptr, subSize, cards_,
                               scanOps(ins.line, /*countTemporal=*/false));
        if (!ins.result.empty())
            setReg(ins.result, result, t);
    } else if (ins.callee == "scan_clear") {
        if (!dptOn())
            return;
        uint64_t addr = addrOf(evalOperand(ins.args[0]));
        if (const ObjRecord* r = objectContaining(addr))
            stats_.subCapsCleared +=
                scanAndClear(r->base, r->size, cards_, scanOps(ins.line, false));
    } else {
        throw MachineError("unknown intrinsic @" + ins.callee);
    }
}

void Machine::forEachDataByte(const std::function<void(uint64_t, uint8_t)>& fn) const {
    mem_.forEachByte([&](uint64_t addr, uint8_t b) {
        bool data = (addr >= GLOBAL_BASE && addr < globalEnd_ + 4096) ||
                    (addr >= HEAP_BASE && addr < heapHighWater_ + 4096) ||
                    (addr >= STACK_TOP - STACK_SPAN && addr < STACK_TOP);
        if (data)
            fn(addr, b);
    });
}

} // namespace curesim
