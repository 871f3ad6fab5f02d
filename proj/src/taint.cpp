#include "curesim/taint.hpp"

namespace curesim {

namespace {

// Unification-based alias classes. Each class carries the allocation roots
// that reach it, a points-to successor, and two closure flags: holds (the
// addressed storage may contain external bytes) and ext (values of this
// class may be external-derived).
class Graph {
public:
    int make() {
        nodes_.push_back(Node{(int)nodes_.size(), {}, -1, false, false});
        return (int)nodes_.size() - 1;
    }

    int find(int x) {
        while (nodes_[x].parent != x)
            x = nodes_[x].parent = nodes_[nodes_[x].parent].parent;
        return x;
    }

    int pointsTo(int x) {
        x = find(x);
        if (nodes_[x].pt < 0)
            nodes_[x].pt = make();
        return find(nodes_[x].pt);
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b)
            return;
        nodes_[b].parent = a;
        nodes_[a].roots.insert(nodes_[b].roots.begin(), nodes_[b].roots.end());
        nodes_[a].holds |= nodes_[b].holds;
        nodes_[a].ext |= nodes_[b].ext;
        int pa = nodes_[a].pt, pb = nodes_[b].pt;
        if (pa < 0) {
            nodes_[a].pt = pb;
        } else if (pb >= 0) {
            unite(pa, pb); // union happens before recursion, so cycles terminate
        }
    }

    void addRoot(int x, const std::string& site) { nodes_[find(x)].roots.insert(site); }
    void setHolds(int x) { nodes_[find(x)].holds = true; }
    bool holds(int x) { return nodes_[find(x)].holds; }
    void setExt(int x) { nodes_[find(x)].ext = true; }
    bool ext(int x) { return nodes_[find(x)].ext; }
    bool hasPt(int x) { return nodes_[find(x)].pt >= 0; }
    const std::set<std::string>& roots(int x) { return nodes_[find(x)].roots; }
    size_t size() const { return nodes_.size(); }

    // holds(c) taints loaded values; external values stored through c taint
    // its storage. Iterate to a fixed point.
    void close() {
        bool changed = true;
        while (changed) {
            changed = false;
            for (int i = 0; i < (int)nodes_.size(); ++i) {
                int c = find(i);
                if (nodes_[c].pt >= 0) {
                    int p = find(nodes_[c].pt);
                    if (nodes_[c].holds && !nodes_[p].ext) {
                        nodes_[p].ext = true;
                        changed = true;
                    }
                    if (nodes_[p].ext && !nodes_[c].holds) {
                        nodes_[c].holds = true;
                        changed = true;
                    }
                }
            }
        }
    }

private:
    struct Node {
        int parent;
        std::set<std::string> roots;
        int pt;
        bool holds;
        bool ext;
    };
    std::vector<Node> nodes_;
};

class Analyzer {
public:
    explicit Analyzer(const Program& prog) : prog_(prog), sites_(allocationSiteIds(prog)) {}

    TaintResult run() {
        for (const auto& g : prog_.globals) {
            int c = globalClass(g.name);
            if (g.externalInit)
                g_.setHolds(c);
        }
        for (const auto& fn : prog_.functions)
            for (const auto& b : fn.blocks)
                for (const auto& ins : b.instrs)
                    visit(fn, ins);
        g_.close();

        TaintResult res;
        for (const auto& g : prog_.globals)
            res.allSites.push_back("@" + g.name);
        for (const auto& fn : prog_.functions)
            for (const auto& b : fn.blocks)
                for (const auto& ins : b.instrs)
                    if (ins.op == Opcode::Alloca || ins.op == Opcode::Malloc)
                        res.allSites.push_back(sites_.at(&ins));
        for (size_t i = 0; i < g_.size(); ++i) {
            int c = g_.find((int)i);
            if (g_.holds(c))
                for (const auto& r : g_.roots(c))
                    res.protectedSites.insert(r);
        }
        for (const auto& [ins, cls] : gepClasses_)
            res.gepOwners[ins] = g_.roots(cls);
        return res;
    }

private:
    int regClass(const Function& fn, const std::string& reg) {
        auto [it, fresh] = classes_.try_emplace(fn.name + "%" + reg, -1);
        if (fresh)
            it->second = g_.make();
        return it->second;
    }
    int globalClass(const std::string& name) {
        auto [it, fresh] = classes_.try_emplace("@" + name, -1);
        if (fresh) {
            it->second = g_.make();
            g_.addRoot(it->second, "@" + name);
        }
        return it->second;
    }
    int retClass(const std::string& fnName) {
        auto [it, fresh] = classes_.try_emplace(fnName + "/ret", -1);
        if (fresh)
            it->second = g_.make();
        return it->second;
    }
    // Class of an operand, or -1 for immediates.
    int operandClass(const Function& fn, const Operand& a) {
        if (a.isReg())
            return regClass(fn, a.name);
        if (a.isGlobal())
            return globalClass(a.name);
        return -1;
    }
    void uniteOp(int target, const Function& fn, const Operand& a) {
        int c = operandClass(fn, a);
        if (c >= 0)
            g_.unite(target, c);
    }

    void visit(const Function& fn, const Instr& ins) {
        switch (ins.op) {
        case Opcode::Alloca:
        case Opcode::Malloc:
            g_.addRoot(regClass(fn, ins.result), sites_.at(&ins));
            break;
        case Opcode::Mov:
        case Opcode::Bitcast:
        case Opcode::Tagd:
        case Opcode::Xtag:
            uniteOp(regClass(fn, ins.result), fn, ins.args[0]);
            break;
        case Opcode::Padd:
        case Opcode::Iadd:
        case Opcode::Isub:
            uniteOp(regClass(fn, ins.result), fn, ins.args[0]);
            uniteOp(regClass(fn, ins.result), fn, ins.args[1]);
            break;
        case Opcode::Gep: {
            int r = regClass(fn, ins.result);
            uniteOp(r, fn, ins.args[0]);
            gepClasses_[&ins] = r;
            break;
        }
        case Opcode::Load: {
            int p = operandClass(fn, ins.args[0]);
            if (p >= 0)
                g_.unite(regClass(fn, ins.result), g_.pointsTo(p));
            break;
        }
        case Opcode::Store: {
            int p = operandClass(fn, ins.args[1]);
            if (p < 0)
                break;
            int v = operandClass(fn, ins.args[0]);
            if (v >= 0)
                g_.unite(g_.pointsTo(p), v);
            break;
        }
        case Opcode::Call: {
            if (ins.callee == "input") {
                int p = operandClass(fn, ins.args[0]);
                if (p >= 0)
                    g_.setHolds(p); // external bytes land in the addressed object
                break;
            }
            if (ins.callee == "mutate_ptr") {
                if (!ins.result.empty())
                    uniteOp(regClass(fn, ins.result), fn, ins.args[0]);
                break;
            }
            if (isIntrinsic(ins.callee))
                break; // print/memfill/scan_clear move no external data
            const Function* target = prog_.findFunction(ins.callee);
            if (!target)
                break;
            for (size_t i = 0; i < target->params.size() && i < ins.args.size(); ++i)
                uniteOp(regClass(*target, target->params[i].name), fn, ins.args[i]);
            if (!ins.result.empty())
                g_.unite(regClass(fn, ins.result), retClass(target->name));
            break;
        }
        case Opcode::Ret:
            if (!ins.args.empty())
                uniteOp(retClass(fn.name), fn, ins.args[0]);
            break;
        default:
            break; // const, icmp, branches, free, cstr, cclr: no value flow
        }
    }

    const Program& prog_;
    std::map<const Instr*, std::string> sites_;
    Graph g_;
    std::map<std::string, int> classes_;
    std::map<const Instr*, int> gepClasses_;
};

} // namespace

TaintResult analyzeTaint(const Program& prog) { return Analyzer(prog).run(); }

} // namespace curesim
