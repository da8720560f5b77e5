use std::collections::{HashSet, VecDeque};

use super::*;
use crate::cfg::NodeKind;
use crate::cfg::{build_cfg_plus, CfgPlus, NodeId};
use crate::frontend::{parse_contract, parse_expression};
use crate::ir::{lower, resolve_bool, NodeNames, TExpr};
use crate::samples;

fn graph(src: &str) -> CfgPlus {
    build_cfg_plus(lower(&parse_contract(src).unwrap()).unwrap())
}

/// Shortest path from `from` to `to` (both included) that leaves `from`
/// at least once and avoids revert sinks.
fn shortest(g: &CfgPlus, from: NodeId, to: NodeId) -> Vec<NodeId> {
    let mut prev = vec![None; g.node_count()];
    let mut queue = VecDeque::from([from]);
    let mut seen = HashSet::new();
    while let Some(n) = queue.pop_front() {
        for &(m, _) in g.graph.neighbors(n) {
            if g.is_revert_sink(m) && m != to || !seen.insert(m) {
                continue;
            }
            prev[m.index()] = Some(n);
            if m == to {
                let mut path = vec![to];
                let mut cur = n;
                while cur != from {
                    path.push(cur);
                    cur = prev[cur.index()].unwrap();
                }
                path.push(from);
                path.reverse();
                return path;
            }
            queue.push_back(m);
        }
    }
    panic!("no path from {from} to {to}");
}

/// Joins shortest paths between consecutive waypoints and returns the
/// walk target first.
fn walk(g: &CfgPlus, waypoints: &[NodeId]) -> Vec<NodeId> {
    let mut out = vec![waypoints[0]];
    for pair in waypoints.windows(2) {
        out.extend(shortest(g, pair[0], pair[1]).into_iter().skip(1));
    }
    out.reverse();
    out
}

fn target(g: &CfgPlus, line: u32) -> NodeId {
    g.nodes_for_line(line)[0]
}

fn entry(g: &CfgPlus, name: &str) -> NodeId {
    g.entry(g.program.public_function(name).unwrap())
}

fn safety(g: &CfgPlus, at: NodeId, text: &str) -> TExpr {
    let (_, f, _) = g.ir(at).unwrap();
    let NodeKind::Instr { instr, .. } = g.kind(at) else { unreachable!() };
    let expr = parse_expression(text, g.line(at).unwrap()).unwrap();
    resolve_bool(&expr, &NodeNames::new(&g.program, f, instr)).unwrap()
}

fn defined(s: &SsaScript) -> Vec<Sym> {
    s.clauses
        .iter()
        .filter_map(|c| match c {
            Clause::Define { sym, .. } => Some(*sym),
            _ => None,
        })
        .collect()
}

fn assert_single_assignment(s: &SsaScript) {
    let syms = defined(s);
    let unique: HashSet<_> = syms.iter().collect();
    assert_eq!(unique.len(), syms.len(), "a symbol is defined twice: {syms:?}");
}

fn state_versions(g: &CfgPlus, s: &SsaScript, name: &str) -> Vec<u32> {
    let id = g.program.state_by_name(name).unwrap();
    defined(s)
        .into_iter()
        .filter_map(|sym| match sym {
            Sym::State { var, ver } if var == id => Some(ver),
            _ => None,
        })
        .collect()
}

fn z3() -> SolverConfig {
    SolverConfig::default()
}

fn solve(g: &CfgPlus, s: &SsaScript) -> SatResult {
    check_sat(&encode(s, &g.program), &z3()).expect("z3 must be on PATH")
}

fn local_sym(g: &CfgPlus, s: &SsaScript, tx: TxIndex, name: &str, ver: u32) -> Sym {
    let f = g.program.func(s.txs[tx as usize].func);
    let var = LocalId(f.locals.iter().position(|l| l.name == name).unwrap() as u32);
    Sym::Local { tx, var, ver }
}

fn word(m: &Model, sym: Sym) -> U256 {
    m.get(sym).unwrap().word()
}

#[test]
fn repeated_assignment_gets_two_versions() {
    let src = "contract C { uint s; function f() public {\n uint v = 10;\n v = v + 20;\n s = v;\n } }";
    let g = graph(src);
    let t = target(&g, 4);
    let s = ssa_number(&g, &walk(&g, &[g.start, t]), None).unwrap();
    assert_single_assignment(&s);
    let v1 = local_sym(&g, &s, 1, "v", 1);
    let v2 = local_sym(&g, &s, 1, "v", 2);
    let mut seen = Vec::new();
    for c in &s.clauses {
        if let Clause::Define { sym, term, .. } = c {
            if *sym == v1 {
                assert_eq!(*term, Term::Const(Value::from_u64(10), Type::UINT256));
            }
            if *sym == v2 {
                // v2 = tmp, tmp = v1 + 20
                let Term::Sym(tmp) = term else { panic!("{term:?}") };
                let tmp_def = s.clauses.iter().find_map(|c| match c {
                    Clause::Define { sym, term, .. } if sym == tmp => Some(term.clone()),
                    _ => None,
                });
                let Some(Term::Binary { op: BinOp::Add, lhs, rhs, .. }) = tmp_def else { panic!() };
                assert_eq!(*lhs, Term::Sym(v1));
                assert_eq!(*rhs, Term::Const(Value::from_u64(20), Type::UINT256));
            }
            if matches!(sym, Sym::Local { .. }) && (*sym == v1 || *sym == v2) {
                seen.push(*sym);
            }
        }
    }
    assert_eq!(seen, vec![v1, v2]);
}

#[test]
fn single_assignment_has_one_clause() {
    let src = "contract C { uint s; function f() public {\n uint x = 5;\n s = x;\n } }";
    let g = graph(src);
    let s = ssa_number(&g, &walk(&g, &[g.start, target(&g, 3)]), None).unwrap();
    let x_defs: Vec<_> = defined(&s).into_iter().filter(|d| *d == local_sym(&g, &s, 1, "x", 1)).collect();
    assert_eq!(x_defs.len(), 1);
    assert!(!s.manifest.iter().any(|(sym, _)| *sym == local_sym(&g, &s, 1, "x", 2)));
}

#[test]
fn overflow_versions_increase_across_transactions() {
    let g = graph(samples::OVERFLOW);
    let add = entry(&g, "add");
    let w = walk(&g, &[g.start, add, add, add, target(&g, 5)]);
    let s = ssa_number(&g, &w, None).unwrap();
    assert_single_assignment(&s);
    // Hand-numbered: zero init, initializer, then one write per full add().
    assert_eq!(state_versions(&g, &s, "sellerBalance"), vec![0, 1, 2, 3]);
    assert_eq!(s.txs.len(), 4);
    assert!(s.txs.iter().all(|t| t.complete));
    assert_eq!(s.txs[0].func, FuncRef::Constructor);
    let values: Vec<TxIndex> = s
        .manifest
        .iter()
        .filter_map(|(sym, _)| match sym {
            Sym::Env { tx, var: EnvVar::MsgValue } => Some(*tx),
            _ => None,
        })
        .collect();
    assert_eq!(values, vec![0, 1, 2, 3]);
    // Definition steps follow execution order.
    let steps: Vec<usize> = s
        .clauses
        .iter()
        .filter_map(|c| match c {
            Clause::Define { step: Some(k), .. } => Some(*k),
            _ => None,
        })
        .collect();
    assert!(steps.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn locals_restart_per_transaction() {
    let g = graph(samples::OVERFLOW);
    let add = entry(&g, "add");
    let s = ssa_number(&g, &walk(&g, &[g.start, add, add, target(&g, 5)]), None).unwrap();
    let tmp_defs: Vec<Sym> = defined(&s).into_iter().filter(|d| matches!(d, Sym::Local { ver: 1, .. })).collect();
    assert_eq!(tmp_defs.len(), 1, "only the complete add() defines tmp1 before the target");
    assert!(s.manifest.iter().any(|(sym, _)| *sym == local_sym(&g, &s, 2, "value", 0)));
    assert!(s.manifest.iter().any(|(sym, _)| *sym == local_sym(&g, &s, 1, "value", 0)));
}

#[test]
fn partial_walk_reads_free_symbols() {
    let g = graph(samples::OVERFLOW);
    let t = target(&g, 5);
    let s = ssa_number(&g, &[t, entry(&g, "add")], None).unwrap();
    assert!(!s.complete);
    assert!(s.clauses.iter().all(|c| !matches!(c, Clause::Define { sym: Sym::State { ver: 0, .. }, .. })));
}

#[test]
fn local_read_before_write_is_an_error() {
    let src = "contract C { uint s; function f() public {\n uint i = 3;\n s = i;\n } }";
    let g = graph(src);
    let after = g.graph.neighbors(target(&g, 3))[0].0;
    let def = g.nodes_for_line(2)[0];
    // Drop the node that initialises `i`.
    let mut w = walk(&g, &[g.start, after]);
    w.retain(|n| *n != def);
    let err = ssa_number(&g, &w, None).unwrap_err();
    assert!(matches!(err, EncodeError::UndefinedLocal { ref name, line: 3 } if name == "i"), "{err}");
}

#[test]
fn frame_axiom_for_mapping_write() {
    let g = graph(samples::MAPPING);
    let w = walk(&g, &[g.start, entry(&g, "guess"), target(&g, 6)]);
    let smt = encode(&ssa_number(&g, &w, None).unwrap(), &g.program);
    assert_eq!(smt.logic, "UFBV");
    let text = &smt.text;
    assert!(text.contains("(declare-fun |m:dataStorage!0| ((_ BitVec 256)) (_ BitVec 256))"), "{text}");
    assert!(text.contains("(assert (forall ((k (_ BitVec 256))) (= (|m:dataStorage!0| k) (_ bv0 256))))"));
    assert!(text.contains("(assert (= (|m:dataStorage!1| |l:guess.index@1!0|) |l:guess.value@1!0|))"), "{text}");
    assert!(text.contains(
        "(assert (forall ((k (_ BitVec 256))) (=> (not (= k |l:guess.index@1!0|)) (= (|m:dataStorage!1| k) (|m:dataStorage!0| k)))))"
    ));
}

#[test]
fn scalar_only_scripts_use_quantifier_free_logic() {
    let g = graph(samples::OVERFLOW);
    let smt = encode(&ssa_number(&g, &walk(&g, &[g.start, target(&g, 5)]), None).unwrap(), &g.program);
    assert_eq!(smt.logic, "QF_BV");
    assert!(smt.text.contains("(declare-const |s:sellerBalance!0| (_ BitVec 16))"));
    assert!(smt.text.contains("(declare-const |msg.sender@1| (_ BitVec 160))"));
}

#[test]
fn every_asserted_symbol_is_declared() {
    for (name, src) in samples::ALL {
        let g = graph(src);
        for line in crate::frontend::extract_targets(src).unwrap_or_default().iter().map(|t| t.line) {
            let w = walk(&g, &[g.start, target(&g, line)]);
            let Ok(s) = ssa_number(&g, &w, None) else { continue };
            let smt = encode(&s, &g.program);
            let declared: HashSet<&str> = smt
                .text
                .lines()
                .filter(|l| l.starts_with("(declare-"))
                .filter_map(|l| l.split_whitespace().nth(1))
                .collect();
            for tok in smt.text.split(|c: char| c.is_whitespace() || c == '(' || c == ')') {
                if tok.starts_with('|') {
                    assert!(declared.contains(tok), "{name}: {tok} undeclared");
                }
            }
        }
    }
}

#[test]
fn contradiction_is_unsat() {
    let g = graph(samples::CONTRADICTION);
    let s = ssa_number(&g, &walk(&g, &[g.start, target(&g, 6)]), None).unwrap();
    assert_eq!(solve(&g, &s), SatResult::Unsat);
}

#[test]
fn overflow_witness_wraps() {
    let g = graph(samples::OVERFLOW);
    let add = entry(&g, "add");
    let t = target(&g, 5);
    let w = walk(&g, &[g.start, add, add, t]);
    let s = ssa_number(&g, &w, Some(&safety(&g, t, "sellerBalance + value < sellerBalance"))).unwrap();
    let SatResult::Sat(m) = solve(&g, &s) else { panic!("expected sat") };
    let first = word(&m, local_sym(&g, &s, 1, "value", 0)).to::<u32>();
    let second = word(&m, local_sym(&g, &s, 2, "value", 0)).to::<u32>();
    // Independent check in wider arithmetic.
    assert!(first + second > 0xffff, "{first} + {second} does not wrap");

    // With a single add() the balance is zero and the condition cannot hold.
    let w1 = walk(&g, &[g.start, t]);
    let s1 = ssa_number(&g, &w1, Some(&safety(&g, t, "sellerBalance + value < sellerBalance"))).unwrap();
    assert_eq!(solve(&g, &s1), SatResult::Unsat);
}

#[test]
fn uint16_wraparound_is_exact() {
    let src = "contract C { uint16 s; function f() public {\n uint16 x = 65535;\n uint16 y = x + 1;\n s = y;\n } }";
    let g = graph(src);
    let t = target(&g, 4);
    let w = walk(&g, &[g.start, t]);
    let zero = ssa_number(&g, &w, Some(&safety(&g, t, "y == 0"))).unwrap();
    assert!(matches!(solve(&g, &zero), SatResult::Sat(_)));
    let nonzero = ssa_number(&g, &w, Some(&safety(&g, t, "y != 0"))).unwrap();
    assert_eq!(solve(&g, &nonzero), SatResult::Unsat);
}

#[test]
fn mapping_guess_is_forced() {
    let g = graph(samples::MAPPING);
    let w = walk(&g, &[g.start, entry(&g, "guess"), target(&g, 6)]);
    let s = ssa_number(&g, &w, None).unwrap();
    let SatResult::Sat(m) = solve(&g, &s) else { panic!("expected sat") };
    let index = word(&m, local_sym(&g, &s, 1, "index", 0));
    let value = word(&m, local_sym(&g, &s, 1, "value", 0));
    // Exhaustive search over a small domain finds exactly one solution.
    let solutions: Vec<(u64, u64)> = (0..16u64)
        .flat_map(|i| (0..16u64).map(move |v| (i, v)))
        .filter(|&(i, v)| {
            let mut table = [0u64; 16];
            table[i as usize] = v;
            table[10] == 1
        })
        .collect();
    assert_eq!(solutions, vec![(10, 1)]);
    assert_eq!((index, value), (U256::from(10), U256::from(1)));
    let cell = m.tables[&MapRef { var: StateId(0), gen: 1 }][&U256::from(10)];
    assert_eq!(cell, U256::from(1));
}

#[test]
fn second_write_to_same_key_wins() {
    let src = "contract C { mapping(uint => uint) t; uint s;\n function f(uint k, uint v) public {\n t[k] = v;\n t[k] = v + 1;\n s = 1;\n } }";
    let g = graph(src);
    let s = ssa_number(&g, &walk(&g, &[g.start, target(&g, 5)]), None).unwrap();
    let SatResult::Sat(m) = solve(&g, &s) else { panic!("expected sat") };
    let k = word(&m, local_sym(&g, &s, 1, "k", 0));
    let v = word(&m, local_sym(&g, &s, 1, "v", 0));
    // Replay: the last write is what storage holds.
    let replayed = v.wrapping_add(U256::from(1));
    assert_eq!(m.tables[&MapRef { var: StateId(0), gen: 2 }][&k], replayed);
    assert_eq!(m.tables[&MapRef { var: StateId(0), gen: 1 }][&k], v);
}

/// Clause rendered with versions and transaction indices erased.
fn shape(c: &Clause) -> String {
    fn term(t: &Term) -> String {
        match t {
            Term::Sym(Sym::State { var, .. }) => format!("s{}", var.0),
            Term::Sym(Sym::Local { var, .. }) => format!("l{}", var.0),
            Term::Sym(Sym::Env { var, .. }) => var.as_str().to_string(),
            Term::Sym(Sym::Gas { .. }) => "gas".into(),
            Term::Const(v, ty) => format!("{v:?}:{ty}"),
            Term::Binary { op, lhs, rhs, .. } => format!("({op:?} {} {})", term(lhs), term(rhs)),
            Term::Not(t) => format!("(not {})", term(t)),
            Term::Convert { term: t, to, .. } => format!("({to} {})", term(t)),
            Term::Select { map, key } => format!("(m{} {})", map.var.0, term(key)),
        }
    }
    match c {
        Clause::Define { sym, term: t, .. } => format!("{} := {}", term(&Term::Sym(*sym)), term(t)),
        Clause::Assume(t) => term(t),
        Clause::MapZero(m) => format!("zero m{}", m.var.0),
        Clause::MapStore { new, key, value, .. } => format!("m{}[{}] := {}", new.var.0, term(key), term(value)),
    }
}

#[test]
fn prefix_script_is_a_subset() {
    let g = graph(samples::MULTI_TX);
    let bid = entry(&g, "bid");
    let check = entry(&g, "check");
    let t = target(&g, 14);
    let full = walk(&g, &[g.start, bid, check, t]);
    let whole = ssa_number(&g, &full, None).unwrap();
    let mut pool: Vec<String> = whole.clauses.iter().map(shape).collect();
    pool.sort();
    // Prefixes of the stored walk are suffixes in execution order.
    for cut in 2..full.len() {
        let part = ssa_number(&g, &full[..cut], None).unwrap();
        assert!(!part.complete);
        let mut rest = pool.clone();
        for c in &part.clauses {
            let sh = shape(c);
            let at = rest.iter().position(|x| *x == sh).unwrap_or_else(|| panic!("cut {cut}: {sh} not in full script"));
            rest.remove(at);
        }
    }
}

#[test]
fn sender_is_restricted_to_known_accounts() {
    let g = graph(samples::OVERFLOW);
    let s = ssa_number(&g, &walk(&g, &[g.start, target(&g, 5)]), None).unwrap();
    let SatResult::Sat(m) = solve(&g, &s) else { panic!() };
    for tx in 0..s.txs.len() as TxIndex {
        let sender = word(&m, Sym::Env { tx, var: EnvVar::MsgSender });
        assert!(crate::types::Account::from_address(sender).is_some());
        assert_eq!(m.get(Sym::Env { tx, var: EnvVar::TxOrigin }), Some(Value::Word(sender)));
        assert_eq!(word(&m, Sym::Env { tx, var: EnvVar::MsgValue }), U256::ZERO);
    }
}

#[test]
fn every_manifest_symbol_has_a_value() {
    let g = graph(samples::MULTI_TX);
    let w = walk(&g, &[g.start, entry(&g, "bid"), entry(&g, "check"), target(&g, 14)]);
    let s = ssa_number(&g, &w, None).unwrap();
    // counter == threshold (5) is impossible after a single bid
    assert_eq!(solve(&g, &s), SatResult::Unsat);
    let g2 = graph(samples::OVERFLOW);
    let s2 = ssa_number(&g2, &walk(&g2, &[g2.start, target(&g2, 5)]), None).unwrap();
    let SatResult::Sat(m) = solve(&g2, &s2) else { panic!() };
    for (sym, ty) in &s2.manifest {
        let v = m.get(*sym).unwrap_or_else(|| panic!("{sym:?} missing"));
        if let Some(bits) = ty.bits() {
            assert_eq!(crate::types::mask(v.word(), bits), v.word());
        }
    }
}

mod responses {
    use super::*;

    fn q(ty: Type) -> Query {
        Query::Sym(Sym::Gas { tx: 0 }, ty)
    }

    #[test]
    fn reads_all_literal_forms() {
        let qs = [Query::Sym(Sym::Gas { tx: 0 }, Type::Uint(8)), Query::Sym(Sym::Gas { tx: 1 }, Type::Uint(8))];
        let r = parse_response("sat\n((|a| #x0f) (|b| #b101))\n", &qs).unwrap();
        let SatResult::Sat(m) = r else { panic!() };
        assert_eq!(m.get(Sym::Gas { tx: 0 }), Some(Value::from_u64(15)));
        assert_eq!(m.get(Sym::Gas { tx: 1 }), Some(Value::from_u64(5)));
        let r = parse_response("sat ((x (_ bv7 8)))", &[q(Type::Uint(8))]).unwrap();
        assert_eq!(
            r,
            SatResult::Sat(Model { values: [(Sym::Gas { tx: 0 }, Value::from_u64(7))].into(), ..Default::default() })
        );
        let r = parse_response("sat ((x true))", &[q(Type::Bool)]).unwrap();
        let SatResult::Sat(m) = r else { panic!() };
        assert_eq!(m.get(Sym::Gas { tx: 0 }), Some(Value::Bool(true)));
    }

    #[test]
    fn unsat_followed_by_model_error_is_unsat() {
        let out = "unsat\n(error \"line 9 column 10: model is not available\")\n(:reason-unknown \"\")\n";
        assert_eq!(parse_response(out, &[q(Type::UINT256)]).unwrap(), SatResult::Unsat);
    }

    #[test]
    fn unknown_carries_reason() {
        let out = "unknown\n(error \"model is not available\")\n(:reason-unknown \"timeout\")\n";
        assert_eq!(parse_response(out, &[]).unwrap(), SatResult::Unknown("timeout".into()));
    }

    #[test]
    fn malformed_and_rejected_are_distinct() {
        assert!(matches!(parse_response("banana", &[]), Err(SolverError::Malformed(_))));
        assert!(matches!(parse_response("((", &[]), Err(SolverError::Malformed(_))));
        assert!(matches!(
            parse_response("(error \"unknown constant x\")", &[]),
            Err(SolverError::Rejected(m)) if m == "unknown constant x"
        ));
        assert!(matches!(parse_response("sat ((x #x1ff))", &[q(Type::Uint(8))]), Err(SolverError::Malformed(_))));
    }

    #[test]
    fn missing_solver_is_a_spawn_error() {
        let cfg =
            SolverConfig::from_command_line("/nonexistent/solver -in", std::time::Duration::from_secs(5)).unwrap();
        let script = SmtScript { logic: "QF_BV", text: "(check-sat)\n".into(), queries: Vec::new() };
        let err = check_sat(&script, &cfg).unwrap_err();
        assert!(matches!(err, SolverError::Spawn { .. }));
        assert!(err.to_string().contains("solver"));
    }

    #[test]
    fn silent_exit_is_a_crash() {
        let cfg = SolverConfig::from_command_line("true", std::time::Duration::from_secs(5)).unwrap();
        let script = SmtScript { logic: "QF_BV", text: "(check-sat)\n".into(), queries: Vec::new() };
        assert!(matches!(check_sat(&script, &cfg), Err(SolverError::Crashed { .. })));
    }

    #[test]
    fn slow_solver_times_out() {
        let cfg = SolverConfig::from_command_line("sleep 5", std::time::Duration::from_millis(100)).unwrap();
        let script = SmtScript { logic: "QF_BV", text: String::new(), queries: Vec::new() };
        assert!(matches!(check_sat(&script, &cfg), Err(SolverError::Timeout(_))));
    }

    #[test]
    fn empty_command_is_rejected() {
        assert!(SolverConfig::from_command_line("  ", std::time::Duration::from_secs(1)).is_err());
    }
}
