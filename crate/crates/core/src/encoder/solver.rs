//! Solver processes speaking SMT-LIB 2 on stdin/stdout. `check_sat` runs
//! one process per query; `SolverSession` keeps one alive and separates
//! queries with `(reset)`.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::sexpr::{parse_all, SExpr};
use super::{Model, Query, SmtScript};
use crate::types::{mask, Type, Value, U256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolverConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub timeout: Duration,
    /// Sent in place of the script's `(check-sat)`.
    pub check_command: String,
}

impl SolverConfig {
    pub const DEFAULT_COMMAND: &'static str = "z3 -in";
    pub const PLAIN_CHECK: &'static str = "(check-sat)";
    /// z3's default bit-blasting strategy is slow on wide division and
    /// multiplication; its SMT core after equality solving is not.
    pub const Z3_CHECK: &'static str = "(check-sat-using (then simplify solve-eqs smt))";

    /// Splits a command line such as `"z3 -in"` on whitespace.
    pub fn from_command_line(cmd: &str, timeout: Duration) -> Result<Self, SolverError> {
        let command: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
        let Some(program) = command.first() else {
            return Err(SolverError::Spawn { command: cmd.to_string(), reason: "empty solver command".into() });
        };
        let is_z3 = std::path::Path::new(program).file_name().is_some_and(|n| n == "z3");
        let check_command = if is_z3 { Self::Z3_CHECK } else { Self::PLAIN_CHECK }.to_string();
        Ok(SolverConfig { command, timeout, check_command })
    }

    /// The script as sent to this solver.
    fn request<'a>(&self, script: &'a SmtScript) -> std::borrow::Cow<'a, str> {
        if self.check_command == Self::PLAIN_CHECK {
            return script.text.as_str().into();
        }
        script.text.replacen("(check-sat)\n", &format!("{}\n", self.check_command), 1).into()
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::from_command_line(Self::DEFAULT_COMMAND, Duration::from_secs(300)).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("could not start solver `{command}`: {reason}")]
    Spawn { command: String, reason: String },
    #[error("solver exited with {status} without a verdict: {stderr}")]
    Crashed { status: String, stderr: String },
    #[error("solver rejected the script: {0}")]
    Rejected(String),
    #[error("malformed solver output: {0}")]
    Malformed(String),
    #[error("solver timed out after {0:?}")]
    Timeout(Duration),
}

fn spawn(cfg: &SolverConfig) -> Result<Child, SolverError> {
    Command::new(&cfg.command[0])
        .args(&cfg.command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| SolverError::Spawn { command: cfg.command.join(" "), reason: e.to_string() })
}

pub fn check_sat(script: &SmtScript, cfg: &SolverConfig) -> Result<SatResult, SolverError> {
    let mut child = spawn(cfg)?;

    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = child.stdout.take().unwrap();
    let mut stderr = child.stderr.take().unwrap();
    let text = cfg.request(script).into_owned();
    // A solver that dies early closes the pipe; the write error is then
    // irrelevant because the exit status tells the story.
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(text.as_bytes());
    });
    let err_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut s = String::new();
        let r = stdout.read_to_string(&mut s).map(|_| s);
        let _ = tx.send(r);
    });

    let out = match rx.recv_timeout(cfg.timeout) {
        Ok(r) => r,
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(SolverError::Timeout(cfg.timeout));
        }
    };
    let status = child.wait().map_err(|e| SolverError::Crashed { status: "unknown".into(), stderr: e.to_string() })?;
    let _ = writer.join();
    let err_text = err_reader.join().unwrap_or_default();
    let out = out.map_err(|e| SolverError::Malformed(e.to_string()))?;
    if out.trim().is_empty() {
        return Err(SolverError::Crashed { status: status.to_string(), stderr: err_text.trim().to_string() });
    }
    parse_response(&out, &script.queries)
}

/// Printed by the solver after each query so the end of its answer can
/// be found without closing stdin.
const DONE_MARKER: &str = "backreach-query-done";

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: JoinHandle<String>,
}

impl Running {
    /// Kills the process and reports what it left on stderr.
    fn crashed(mut self) -> SolverError {
        let _ = self.child.kill();
        let status = self.child.wait().map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
        drop(self.stdin);
        let stderr = self.stderr.join().unwrap_or_default();
        SolverError::Crashed { status, stderr: stderr.trim().to_string() }
    }
}

/// A long-lived solver process. A process that times out or dies is
/// dropped and the next query starts a fresh one.
pub struct SolverSession {
    cfg: SolverConfig,
    running: Option<Running>,
}

impl SolverSession {
    pub fn new(cfg: SolverConfig) -> Self {
        SolverSession { cfg, running: None }
    }

    fn start(&self) -> Result<Running, SolverError> {
        let mut child = spawn(&self.cfg)?;
        let stdin = child.stdin.take().unwrap();
        let stdout = child.stdout.take().unwrap();
        let mut stderr = child.stderr.take().unwrap();
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        Ok(Running { child, stdin, lines, stderr })
    }

    pub fn check(&mut self, script: &SmtScript) -> Result<SatResult, SolverError> {
        let mut proc = match self.running.take() {
            Some(p) => p,
            None => self.start()?,
        };
        let text = self.cfg.request(script);
        let body = text.strip_suffix("(exit)\n").unwrap_or(&text);
        let request = format!("{body}(echo \"{DONE_MARKER}\")\n(reset)\n");
        if proc.stdin.write_all(request.as_bytes()).and_then(|_| proc.stdin.flush()).is_err() {
            return Err(proc.crashed());
        }
        let deadline = Instant::now() + self.cfg.timeout;
        let mut out = String::new();
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            match proc.lines.recv_timeout(wait) {
                Ok(Ok(line)) if line.trim() == DONE_MARKER => break,
                Ok(Ok(line)) => {
                    out.push_str(&line);
                    out.push('\n');
                }
                Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => return Err(proc.crashed()),
                Err(RecvTimeoutError::Timeout) => {
                    let _ = proc.crashed();
                    return Err(SolverError::Timeout(self.cfg.timeout));
                }
            }
        }
        self.running = Some(proc);
        if out.trim().is_empty() {
            return Err(SolverError::Malformed("no answer before the end marker".into()));
        }
        parse_response(&out, &script.queries)
    }
}

impl Drop for SolverSession {
    fn drop(&mut self) {
        if let Some(mut p) = self.running.take() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}

/// Interprets solver output for a script whose value queries are `queries`.
pub fn parse_response(out: &str, queries: &[Query]) -> Result<SatResult, SolverError> {
    let exprs = parse_all(out).map_err(|e| SolverError::Malformed(format!("{e} in {:?}", preview(out))))?;
    let first = exprs.first().ok_or_else(|| SolverError::Malformed("empty output".into()))?;
    match first {
        SExpr::Atom(a) if a == "sat" => {
            if queries.is_empty() {
                return Ok(SatResult::Sat(Model::default()));
            }
            match exprs.get(1) {
                Some(SExpr::List(pairs)) if pairs.len() == queries.len() => {
                    read_model(pairs, queries).map(SatResult::Sat)
                }
                Some(other) => Err(error_or_malformed(other, "value list does not match the queries")),
                None => Err(SolverError::Malformed("missing value list after sat".into())),
            }
        }
        SExpr::Atom(a) if a == "unsat" => Ok(SatResult::Unsat),
        SExpr::Atom(a) if a == "unknown" => {
            let reason = exprs
                .iter()
                .find_map(|e| match e {
                    SExpr::List(items) if items.first().and_then(SExpr::as_atom) == Some(":reason-unknown") => {
                        match items.get(1) {
                            Some(SExpr::Str(s)) | Some(SExpr::Atom(s)) => Some(s.clone()),
                            _ => None,
                        }
                    }
                    _ => None,
                })
                .unwrap_or_default();
            Ok(SatResult::Unknown(reason))
        }
        other => Err(error_or_malformed(other, "expected sat, unsat or unknown")),
    }
}

fn preview(s: &str) -> String {
    s.chars().take(200).collect()
}

fn error_or_malformed(e: &SExpr, what: &str) -> SolverError {
    if let SExpr::List(items) = e {
        if items.first().and_then(SExpr::as_atom) == Some("error") {
            if let Some(SExpr::Str(msg)) = items.get(1) {
                return SolverError::Rejected(msg.clone());
            }
        }
    }
    SolverError::Malformed(format!("{what}: {e:?}"))
}

fn read_model(pairs: &[SExpr], queries: &[Query]) -> Result<Model, SolverError> {
    let mut model = Model::default();
    let mut key = U256::ZERO;
    for (pair, q) in pairs.iter().zip(queries) {
        let SExpr::List(items) = pair else {
            return Err(SolverError::Malformed(format!("expected a (term value) pair, got {pair:?}")));
        };
        let value = items.get(1).ok_or_else(|| SolverError::Malformed(format!("pair without value: {pair:?}")))?;
        match q {
            Query::Sym(s, ty) => {
                model.values.insert(*s, parse_value(value, *ty)?);
            }
            Query::Key { key_ty, .. } => key = parse_value(value, *key_ty)?.word(),
            Query::Cell { map, .. } => {
                let v = parse_value(value, Type::UINT256)?.word();
                model.tables.entry(*map).or_default().insert(key, v);
            }
        }
    }
    Ok(model)
}

pub(crate) fn parse_value(e: &SExpr, ty: Type) -> Result<Value, SolverError> {
    let bad = || SolverError::Malformed(format!("cannot read {e:?} as {ty}"));
    let v = match e {
        SExpr::Atom(a) if a == "true" => return Ok(Value::Bool(true)),
        SExpr::Atom(a) if a == "false" => return Ok(Value::Bool(false)),
        SExpr::Atom(a) if a.starts_with("#x") => U256::from_str_radix(&a[2..], 16).map_err(|_| bad())?,
        SExpr::Atom(a) if a.starts_with("#b") => U256::from_str_radix(&a[2..], 2).map_err(|_| bad())?,
        SExpr::List(items) => match items.as_slice() {
            [SExpr::Atom(u), SExpr::Atom(n), SExpr::Atom(_w)] if u == "_" && n.starts_with("bv") => {
                U256::from_str_radix(&n[2..], 10).map_err(|_| bad())?
            }
            _ => return Err(bad()),
        },
        _ => return Err(bad()),
    };
    if ty == Type::Bool {
        return Err(bad());
    }
    let bits = ty.bits().unwrap_or(256);
    if mask(v, bits) != v {
        return Err(SolverError::Malformed(format!("value {v} exceeds {bits} bits")));
    }
    Ok(Value::Word(v))
}
