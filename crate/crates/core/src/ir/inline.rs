use std::collections::HashMap;

use super::*;

const UNSET: InstrId = usize::MAX;

/// Replaces every `Call` by a renamed copy of the callee body. The k-th
/// site inlined into a function suffixes the callee's locals with `$k`.
pub fn inline_internal_calls(program: IrProgram) -> Result<IrProgram, IrError> {
    let all: Vec<&IrFunction> = program.functions.iter().chain(&program.internal).collect();
    let by_name: HashMap<&str, &IrFunction> = all.iter().map(|f| (f.name.as_str(), *f)).collect();
    for f in all.iter().copied().chain(std::iter::once(&program.constructor)) {
        for n in &f.nodes {
            if let Instr::Call { callee, .. } = &n.instr {
                if !by_name.contains_key(callee.as_str()) {
                    return Err(IrError::UndefinedFunction { line: n.line, name: callee.clone() });
                }
            }
        }
    }
    if let Some(cycle) = find_cycle(&all, &by_name) {
        return Err(IrError::Recursion { cycle });
    }

    let mut done: HashMap<String, IrFunction> = HashMap::new();
    for f in &all {
        flatten(f, &by_name, &mut done);
    }
    let constructor = inline_all(&program.constructor, &done);
    let functions = program.functions.iter().map(|f| done[&f.name].clone()).collect();
    Ok(IrProgram { name: program.name, state_vars: program.state_vars, constructor, functions, internal: Vec::new() })
}

fn callees(f: &IrFunction) -> Vec<&str> {
    let mut out = Vec::new();
    for n in &f.nodes {
        if let Instr::Call { callee, .. } = &n.instr {
            if !out.contains(&callee.as_str()) {
                out.push(callee.as_str());
            }
        }
    }
    out
}

fn find_cycle(all: &[&IrFunction], by_name: &HashMap<&str, &IrFunction>) -> Option<Vec<String>> {
    fn visit<'a>(
        name: &'a str,
        by_name: &HashMap<&str, &'a IrFunction>,
        stack: &mut Vec<&'a str>,
        finished: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        if finished.contains(&name) {
            return None;
        }
        if let Some(pos) = stack.iter().position(|n| *n == name) {
            return Some(stack[pos..].iter().map(|s| s.to_string()).collect());
        }
        stack.push(name);
        for c in callees(by_name[name]) {
            if let Some(cycle) = visit(c, by_name, stack, finished) {
                return Some(cycle);
            }
        }
        stack.pop();
        finished.push(name);
        None
    }
    let mut finished = Vec::new();
    all.iter().find_map(|f| visit(&f.name, by_name, &mut Vec::new(), &mut finished))
}

fn flatten(f: &IrFunction, by_name: &HashMap<&str, &IrFunction>, done: &mut HashMap<String, IrFunction>) {
    if done.contains_key(&f.name) {
        return;
    }
    for c in callees(f) {
        flatten(by_name[c], by_name, done);
    }
    let flat = inline_all(f, done);
    done.insert(f.name.clone(), flat);
}

/// Inlines every call in `f`; callees in `done` are already call-free.
fn inline_all(f: &IrFunction, done: &HashMap<String, IrFunction>) -> IrFunction {
    let mut f = f.clone();
    let sites: Vec<InstrId> = (0..f.nodes.len()).filter(|&i| matches!(f.nodes[i].instr, Instr::Call { .. })).collect();
    for (k, c) in sites.into_iter().enumerate() {
        let Instr::Call { callee, .. } = &f.nodes[c].instr else { unreachable!() };
        let g = &done[callee];
        inline_site(&mut f, c, g, k as u32 + 1);
    }
    f
}

fn inline_site(f: &mut IrFunction, c: InstrId, g: &IrFunction, site: u32) {
    let call = f.nodes[c].clone();
    let Instr::Call { dest, callee, args } = call.instr else { unreachable!() };
    let Succ::Next(cont) = call.succ else { unreachable!("call without a successor") };

    let lmap: Vec<LocalId> =
        g.locals.iter().map(|l| f.add_local(&format!("{}${site}", l.name), l.ty, l.kind)).collect();
    let rename = |v: VarRef| match v {
        VarRef::Local(l) => VarRef::Local(lmap[l.0 as usize]),
        s => s,
    };
    let copy_base = f.copies;
    f.copies += g.copies;
    let scope_base = f.scopes.len() as u32;
    for s in &g.scopes {
        f.scopes.push(s.iter().map(|(n, id)| (n.clone(), lmap[id.0 as usize])).collect());
    }

    let revert = match (g.revert, f.revert) {
        (None, r) => r,
        (Some(_), Some(r)) => Some(r),
        (Some(_), None) => {
            f.nodes.push(Node { instr: Instr::RevertSink, line: 0, succ: Succ::None, copy: 0, scope: 0 });
            f.revert = Some(f.nodes.len() - 1);
            f.revert
        }
    };

    let mut bindings: Vec<Instr> = g
        .params
        .iter()
        .zip(&args)
        .map(|(p, a)| Instr::Assign { dest: rename(VarRef::Local(*p)), src: a.clone() })
        .collect();
    if let (Some(d), Some(ty)) = (dest, g.returns) {
        bindings.push(Instr::Assign { dest: d, src: Operand::Const(ty.zero(), ty) });
    }

    let base = f.nodes.len();
    let mut idmap = vec![UNSET; g.nodes.len()];
    let mut next = base + bindings.len();
    let keeps_return = |instr: &Instr| matches!(instr, Instr::Return { value: Some(_) }) && dest.is_some();
    for (j, n) in g.nodes.iter().enumerate() {
        match &n.instr {
            Instr::Entry => {}
            Instr::RevertSink => idmap[j] = revert.unwrap(),
            Instr::Return { .. } if !keeps_return(&n.instr) => {}
            _ => {
                idmap[j] = next;
                next += 1;
            }
        }
    }
    for (j, n) in g.nodes.iter().enumerate() {
        if matches!(n.instr, Instr::Return { .. }) && idmap[j] == UNSET {
            idmap[j] = idmap[g.exit];
        }
    }
    let Succ::Next(first) = g.nodes[IrFunction::ENTRY].succ else { unreachable!("entry without successor") };
    let body_start = idmap[first];
    idmap[IrFunction::ENTRY] = if bindings.is_empty() { body_start } else { base };

    let count = bindings.len();
    for (i, instr) in bindings.into_iter().enumerate() {
        let succ = Succ::Next(if i + 1 < count { base + i + 1 } else { body_start });
        f.nodes.push(Node { instr, line: call.line, succ, copy: call.copy, scope: call.scope });
    }
    for (j, n) in g.nodes.iter().enumerate() {
        if idmap[j] < base || matches!(n.instr, Instr::Entry) {
            continue;
        }
        if matches!(n.instr, Instr::Return { .. }) && idmap[j] == idmap[g.exit] {
            continue;
        }
        let (instr, succ, line, copy) = match &n.instr {
            Instr::Exit => (Instr::InlineExit { callee: callee.clone(), site }, Succ::Next(cont), call.line, call.copy),
            Instr::Return { value: Some(v) } => (
                Instr::Assign { dest: dest.unwrap(), src: rename_operand(v, &rename) },
                Succ::Next(idmap[g.exit]),
                n.line,
                copy_base + n.copy,
            ),
            other => {
                let mut instr = other.clone();
                if let Some(d) = instr.dest_mut() {
                    *d = rename(*d);
                }
                for o in instr.operands_mut() {
                    *o = rename_operand(o, &rename);
                }
                (instr, n.succ.map(|t| idmap[t]), n.line, copy_base + n.copy)
            }
        };
        let scope = if matches!(n.instr, Instr::Exit) { call.scope } else { scope_base + n.scope };
        debug_assert_eq!(f.nodes.len(), idmap[j]);
        f.nodes.push(Node { instr, line, succ, copy, scope });
    }
    f.nodes[c] =
        Node { instr: Instr::InlineEnter { callee, site }, succ: Succ::Next(idmap[IrFunction::ENTRY]), ..call };
}

fn rename_operand(o: &Operand, rename: &impl Fn(VarRef) -> VarRef) -> Operand {
    match o {
        Operand::Var(v) => Operand::Var(rename(*v)),
        other => other.clone(),
    }
}
