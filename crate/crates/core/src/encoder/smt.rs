//! SMT-LIB 2 text generation. Scalars become bitvectors of their declared
//! width, storage tables become uninterpreted functions per generation.

use std::fmt::Write;

use super::{Clause, MapRef, SsaScript, Sym, Term};
use crate::ir::{BinOp, IrProgram};
use crate::types::{KeyType, Type, Value};

/// A value the solver is asked for after `sat`, in output order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Sym(Sym, Type),
    /// The key expression itself.
    Key {
        map: MapRef,
        key: Term,
        key_ty: Type,
    },
    /// The table cell at that key.
    Cell {
        map: MapRef,
        key: Term,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmtScript {
    pub logic: &'static str,
    pub text: String,
    pub queries: Vec<Query>,
}

pub fn sort(ty: Type) -> String {
    match ty {
        Type::Bool => "Bool".into(),
        other => format!("(_ BitVec {})", other.bits().expect("scalar sort")),
    }
}

fn key_type(k: KeyType) -> Type {
    k.as_type()
}

pub fn sym_name(p: &IrProgram, script: &SsaScript, sym: Sym) -> String {
    match sym {
        Sym::State { var, ver } => format!("|s:{}!{ver}|", p.state(var).name),
        Sym::Local { tx, var, ver } => {
            let f = p.func(script.txs[tx as usize].func);
            format!("|l:{}.{}@{tx}!{ver}|", f.name, f.local(var).name)
        }
        Sym::Env { tx, var } => format!("|{}@{tx}|", var.as_str()),
        Sym::Gas { tx } => format!("|gas@{tx}|"),
    }
}

fn map_name(p: &IrProgram, m: MapRef) -> String {
    format!("|m:{}!{}|", p.state(m.var).name, m.gen)
}

fn constant(v: Value, ty: Type) -> String {
    match (v, ty) {
        (Value::Bool(b), _) => b.to_string(),
        (Value::Word(w), ty) => format!("(_ bv{w} {})", ty.bits().unwrap_or(256)),
    }
}

struct Printer<'a> {
    p: &'a IrProgram,
    script: &'a SsaScript,
}

impl Printer<'_> {
    fn term(&self, t: &Term) -> String {
        match t {
            Term::Sym(s) => sym_name(self.p, self.script, *s),
            Term::Const(v, ty) => constant(*v, *ty),
            Term::Not(inner) => format!("(not {})", self.term(inner)),
            Term::Select { map, key } => format!("({} {})", map_name(self.p, *map), self.term(key)),
            Term::Convert { term, from, to } => {
                let inner = self.term(term);
                let (a, b) = (from.bits().unwrap_or(256), to.bits().unwrap_or(256));
                match a.cmp(&b) {
                    std::cmp::Ordering::Equal => inner,
                    std::cmp::Ordering::Less => format!("((_ zero_extend {}) {inner})", b - a),
                    std::cmp::Ordering::Greater => format!("((_ extract {} 0) {inner})", b - 1),
                }
            }
            Term::Binary { op, lhs, rhs, operand_ty } => {
                let (l, r) = (self.term(lhs), self.term(rhs));
                let zero = || constant(operand_ty.zero(), *operand_ty);
                match op {
                    BinOp::Add => format!("(bvadd {l} {r})"),
                    BinOp::Sub => format!("(bvsub {l} {r})"),
                    BinOp::Mul => format!("(bvmul {l} {r})"),
                    BinOp::Div => format!("(ite (= {r} {z}) {z} (bvudiv {l} {r}))", z = zero()),
                    BinOp::Mod => format!("(ite (= {r} {z}) {z} (bvurem {l} {r}))", z = zero()),
                    BinOp::Eq => format!("(= {l} {r})"),
                    BinOp::Ne => format!("(not (= {l} {r}))"),
                    BinOp::Lt => format!("(bvult {l} {r})"),
                    BinOp::Le => format!("(bvule {l} {r})"),
                    BinOp::Gt => format!("(bvugt {l} {r})"),
                    BinOp::Ge => format!("(bvuge {l} {r})"),
                    BinOp::And => format!("(and {l} {r})"),
                    BinOp::Or => format!("(or {l} {r})"),
                }
            }
        }
    }
}

/// Renders the script, conjoining its safety condition when present.
pub fn encode(script: &SsaScript, p: &IrProgram) -> SmtScript {
    let pr = Printer { p, script };
    let logic = if script.maps.is_empty() { "QF_BV" } else { "UFBV" };
    let mut out = String::new();
    writeln!(out, "(set-logic {logic})").unwrap();
    out.push_str("(set-option :produce-models true)\n");
    for (sym, ty) in &script.manifest {
        writeln!(out, "(declare-const {} {})", sym_name(p, script, *sym), sort(*ty)).unwrap();
    }
    for (m, k) in &script.maps {
        writeln!(out, "(declare-fun {} ({}) (_ BitVec 256))", map_name(p, *m), sort(key_type(*k))).unwrap();
    }
    let key_sort = |m: MapRef| {
        let k = script.maps.iter().find(|(r, _)| *r == m).map(|(_, k)| *k).unwrap_or(KeyType::Uint256);
        sort(key_type(k))
    };
    for c in &script.clauses {
        match c {
            Clause::Define { sym, term, .. } => {
                writeln!(out, "(assert (= {} {}))", sym_name(p, script, *sym), pr.term(term)).unwrap()
            }
            Clause::Assume(t) => writeln!(out, "(assert {})", pr.term(t)).unwrap(),
            Clause::MapZero(m) => {
                writeln!(out, "(assert (forall ((k {})) (= ({} k) (_ bv0 256))))", key_sort(*m), map_name(p, *m))
                    .unwrap()
            }
            Clause::MapStore { new, old, key, value } => {
                let (n, o, key) = (map_name(p, *new), map_name(p, *old), pr.term(key));
                writeln!(out, "(assert (= ({n} {key}) {}))", pr.term(value)).unwrap();
                writeln!(out, "(assert (forall ((k {})) (=> (not (= k {key})) (= ({n} k) ({o} k)))))", key_sort(*new))
                    .unwrap();
            }
        }
    }
    if let Some(s) = &script.safety {
        writeln!(out, "(assert {})", pr.term(s)).unwrap();
    }
    out.push_str("(check-sat)\n");

    let queries = queries(script);
    if !queries.is_empty() {
        let items: Vec<String> = queries
            .iter()
            .map(|q| match q {
                Query::Sym(s, _) => sym_name(p, script, *s),
                Query::Key { key, .. } => pr.term(key),
                Query::Cell { map, key } => format!("({} {})", map_name(p, *map), pr.term(key)),
            })
            .collect();
        writeln!(out, "(get-value ({}))", items.join(" ")).unwrap();
    }
    out.push_str("(get-info :reason-unknown)\n(exit)\n");
    SmtScript { logic, text: out, queries }
}

fn queries(script: &SsaScript) -> Vec<Query> {
    let mut qs: Vec<Query> = script.manifest.iter().map(|(s, t)| Query::Sym(*s, *t)).collect();
    let mut keys: Vec<(crate::ir::StateId, Term)> = Vec::new();
    let mut note = |t: &Term| {
        if let Term::Select { map, key } = t {
            if !keys.iter().any(|(v, k)| *v == map.var && k == key.as_ref()) {
                keys.push((map.var, (**key).clone()));
            }
        }
    };
    for c in &script.clauses {
        if let Clause::MapStore { new, key, .. } = c {
            note(&Term::Select { map: *new, key: Box::new(key.clone()) });
        }
        for t in c.terms() {
            t.walk(&mut note);
        }
    }
    if let Some(s) = &script.safety {
        s.walk(&mut note);
    }
    for (var, key) in keys {
        let gens: Vec<(MapRef, KeyType)> = script.maps.iter().filter(|(m, _)| m.var == var).copied().collect();
        let Some((first, k)) = gens.first().copied() else { continue };
        qs.push(Query::Key { map: first, key: key.clone(), key_ty: key_type(k) });
        for (m, _) in gens {
            qs.push(Query::Cell { map: m, key: key.clone() });
        }
    }
    qs
}
