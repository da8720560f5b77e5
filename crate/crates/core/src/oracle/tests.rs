use super::*;
use crate::frontend::{extract_targets, parse_contract};
use crate::ir::lower;
use crate::samples;

fn program(src: &str) -> IrProgram {
    lower(&parse_contract(src).unwrap()).unwrap()
}

fn target(src: &str) -> TargetSpec {
    extract_targets(src).unwrap().remove(0)
}

fn deploy() -> Transaction {
    Transaction::call(CONSTRUCTOR_NAME, vec![])
}

fn call(name: &str, args: &[u64]) -> Transaction {
    Transaction::call(name, args.iter().map(|&a| U256::from(a)).collect())
}

fn run(src: &str, txs: &[Transaction]) -> ReplayReport {
    let p = program(src);
    Replayer::new(&p).with_target(&target(src)).unwrap().run(txs).unwrap()
}

fn word(v: u64) -> Value {
    Value::from_u64(v)
}

#[test]
fn mapping_guess_then_check_hits() {
    let r = run(samples::MAPPING, &[deploy(), call("guess", &[10, 1]), call("check", &[])]);
    assert!(r.confirmed());
    assert_eq!(r.hit_at_tx, Some(2));
    assert_eq!(r.outcomes.last(), Some(&TxOutcome::TargetHit));

    let miss = run(samples::MAPPING, &[deploy(), call("check", &[])]);
    assert!(!miss.target_hit);
    assert_eq!(miss.outcomes[1], TxOutcome::Success { returned: Some(Value::Bool(false)) });

    let wrong_key = run(samples::MAPPING, &[deploy(), call("guess", &[9, 1]), call("check", &[])]);
    assert!(!wrong_key.target_hit);
}

#[test]
fn five_bids_reach_the_threshold() {
    let mut txs = vec![deploy()];
    txs.extend(std::iter::repeat_with(|| call("bid", &[150])).take(5));
    txs.push(call("check", &[]));
    let r = run(samples::MULTI_TX, &txs);
    assert!(r.confirmed());
    assert_eq!(r.hit_at_tx, Some(6));
    assert_eq!(r.final_storage.scalars["counter"], word(5));

    // Four bids leave the counter short of the threshold.
    txs.remove(1);
    let short = run(samples::MULTI_TX, &txs);
    assert!(!short.target_hit);
    assert_eq!(short.outcomes.last(), Some(&TxOutcome::Success { returned: Some(word(0)) }));
}

#[test]
fn hit_with_false_safety_is_not_confirmed() {
    let mut txs = vec![deploy()];
    txs.extend(std::iter::repeat_with(|| call("bid", &[50])).take(5));
    txs.push(call("check", &[]));
    let r = run(samples::MULTI_TX, &txs);
    assert!(r.target_hit);
    assert_eq!(r.safety_value, Some(false));
    assert!(!r.confirmed());
}

#[test]
fn uint16_overflow_needs_a_second_add() {
    // The first `add` passes the target line with a zero balance.
    let r = run(samples::OVERFLOW, &[deploy(), call("add", &[65535]), call("add", &[1])]);
    assert!(r.confirmed());
    assert_eq!(r.hit_at_tx, Some(2));
    assert_eq!(r.outcomes[1], TxOutcome::Success { returned: None });

    let r = run(samples::OVERFLOW, &[deploy(), call("add", &[65535]), call("add", &[0])]);
    assert_eq!((r.target_hit, r.hit_at_tx, r.safety_value), (true, Some(1), Some(false)));
    assert_eq!(r.outcomes.len(), 3);

    let p = program(samples::OVERFLOW);
    let no_target = Replayer::new(&p).run(&[deploy(), call("add", &[65535]), call("add", &[1])]).unwrap();
    assert_eq!(no_target.final_storage.scalars["sellerBalance"], word(0));
}

#[test]
fn overflow_needs_a_prior_balance() {
    let src = samples::TWO_TX_OVERFLOW;
    let r = run(src, &[deploy(), call("arm", &[250]), call("bump", &[10])]);
    assert!(r.confirmed());
    let r = run(src, &[deploy(), call("arm", &[201]), call("bump", &[10])]);
    assert_eq!(r.safety_value, Some(false));
}

#[test]
fn reverted_transactions_leave_no_trace() {
    let p = program(samples::TWO_TX_OVERFLOW);
    let r = Replayer::new(&p).run(&[deploy(), call("arm", &[250]), call("arm", &[100])]).unwrap();
    assert_eq!(r.outcomes[2], TxOutcome::Reverted { reason: "require at line 6".into() });
    assert_eq!(r.final_storage.scalars["stored"], word(250));
    assert_eq!(r.final_storage.scalars["armed"], Value::Bool(true));

    // `transferFrom` lowers the allowance before `_transfer` fails.
    let p = program(samples::TOKEN);
    let owner = Account(0).address();
    let r = Replayer::new(&p)
        .run(&[
            deploy(),
            call("approve", &[5000]),
            Transaction::call("transferFrom", vec![owner, U256::from(9u8), U256::from(2000u16)]),
        ])
        .unwrap();
    assert!(matches!(r.outcomes[2], TxOutcome::Reverted { .. }));
    assert_eq!(r.final_storage.tables["allowances"].0.get(&owner), Some(&U256::from(5000u16)));
}

#[test]
fn value_to_non_payable_reverts() {
    let p = program(samples::MAPPING);
    let mut tx = call("guess", &[10, 1]);
    tx.value = U256::from(1u8);
    let r = Replayer::new(&p).run(&[deploy(), tx]).unwrap();
    assert_eq!(r.outcomes[1], TxOutcome::Reverted { reason: NON_PAYABLE.into() });
    assert!(r.final_storage.tables["dataStorage"].0.is_empty());
}

#[test]
fn deposits_are_keyed_by_sender() {
    let src = samples::MSG_VALUE;
    let p = program(src);
    let mut a = call("deposit", &[]);
    a.value = U256::from(7u8);
    a.caller = Account(3);
    let r = Replayer::new(&p).run(&[deploy(), a.clone(), call("withdraw", &[1])]).unwrap();
    assert!(matches!(r.outcomes[2], TxOutcome::Reverted { .. }));
    assert_eq!(r.final_storage.tables["deposits"].0.get(&Account(3).address()), Some(&U256::from(7u8)));
    assert_eq!(r.final_storage.scalars["total"], word(7));

    a.value = U256::from(10u8).pow(U256::from(18u8));
    assert!(run(src, &[deploy(), a]).confirmed());
}

#[test]
fn internal_call_inlined_result() {
    let src = samples::INTERNAL_CALL;
    assert!(run(src, &[deploy(), call("pay", &[2500])]).confirmed());
    assert!(!run(src, &[deploy(), call("pay", &[2400])]).target_hit);
    let mut stranger = call("pay", &[2500]);
    stranger.caller = Account(1);
    let r = run(src, &[deploy(), stranger]);
    assert_eq!(r.outcomes[1], TxOutcome::Reverted { reason: "require at line 12".into() });
}

#[test]
fn malformed_sequences_are_rejected() {
    let p = program(samples::SIMPLE_CONDITION);
    let r = Replayer::new(&p);
    assert_eq!(r.run(&[call("set", &[1, 2])]), Err(ReplayError::NoDeployment));
    assert_eq!(r.run(&[deploy(), deploy()]), Err(ReplayError::MisplacedDeployment { tx: 1 }));
    assert!(matches!(r.run(&[deploy(), call("nope", &[])]), Err(ReplayError::UnknownFunction { tx: 1, .. })));
    assert!(matches!(r.run(&[deploy(), call("set", &[1])]), Err(ReplayError::Arity { expected: 2, got: 1, .. })));
    assert_eq!(
        r.run(&[deploy(), call("set", &[300, 1])]),
        Err(ReplayError::ArgumentRange { tx: 1, index: 0, ty: Type::UINT8 })
    );
    let missing = TargetSpec { line: 1, safety: None };
    assert!(matches!(Replayer::new(&p).with_target(&missing), Err(ReplayError::NoTargetNode(1))));
}

#[test]
fn unbounded_loop_hits_step_limit() {
    let src = "contract L {\n uint x;\n function spin() public {\n while (true) { x += 1; }\n }\n}";
    let p = program(src);
    let r = Replayer::new(&p).step_limit(500).run(&[deploy(), call("spin", &[])]);
    assert_eq!(r, Err(ReplayError::StepLimit { tx: 1, limit: 500 }));
}

#[test]
fn trace_and_steps_follow_execution() {
    let src = samples::SIMPLE_CONDITION;
    let p = program(src);
    let r = Replayer::new(&p).record_steps().with_target(&target(src)).unwrap();
    let report = r.run(&[deploy(), call("set", &[101, 162])]).unwrap();
    assert!(report.confirmed());
    let lines: Vec<u32> = report.trace.iter().map(|&(_, l)| l).collect();
    assert_eq!(lines, [5, 6]);
    // 101 + 162 wraps to 7 in uint8.
    assert!(report.steps.iter().any(|s| s.value == Some(word(7))));
    assert!(report.steps.iter().filter(|s| s.tx == 1).all(|s| s.func == FuncRef::Public(0)));
    assert!(report.steps.iter().filter(|s| s.tx == 0).all(|s| s.func == FuncRef::Constructor));
}

#[test]
fn report_json_shape() {
    let r = run(samples::MAPPING, &[deploy(), call("guess", &[10, 1]), call("check", &[])]);
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(v["target_hit"], true);
    assert_eq!(v["outcomes"][2]["status"], "target_hit");
    assert_eq!(v["outcomes"][0]["status"], "success");
    assert_eq!(v["final_storage"]["tables"]["dataStorage"]["10"], "1");
    assert!(v.get("steps").is_none());
}

/// Fixed sequences over the corpus; both interpreters must agree on
/// every outcome, the hit and the final storage.
#[test]
fn ast_and_ir_interpreters_agree_on_corpus() {
    let owner = Account(0).address().to::<u64>();
    let runs: &[(&str, Vec<Transaction>)] = &[
        (samples::OVERFLOW, vec![call("add", &[40000]), call("add", &[30000])]),
        (samples::MULTI_TX, vec![call("bid", &[3]), call("bid", &[1]), call("check", &[])]),
        (samples::SIMPLE_CONDITION, vec![call("set", &[1, 6]), call("set", &[200, 63])]),
        (samples::TWO_TX_OVERFLOW, vec![call("bump", &[1]), call("arm", &[255]), call("bump", &[0])]),
        (samples::INTERNAL_CALL, vec![call("pay", &[10]), call("pay", &[100000])]),
        (samples::MUTANT_KILLING, vec![call("compare", &[3, 9]), call("compare", &[9, 3])]),
        (samples::CONTRADICTION, vec![call("probe", &[10]), call("probe", &[11])]),
        (
            samples::TOKEN,
            vec![
                call("mint", &[5, 600]),
                call("mintScaled", &[6, 7]),
                call("transfer", &[7, 1]),
                call("pause", &[]),
                call("transferFrom", &[5, 6, 1]),
                call("unpause", &[]),
                call("transferOwnership", &[owner]),
                call("airdrop", &[5, 6, 3]),
                call("balanceOf", &[6]),
                call("sweep", &[]),
            ],
        ),
    ];
    for (src, calls) in runs {
        let mut txs = vec![deploy()];
        txs.extend(calls.iter().cloned());
        let p = program(src);
        let ast = parse_contract(src).unwrap();
        let plain = Replayer::new(&p).run(&txs).unwrap();
        let by_ast = run_ast(&ast, &txs, None).unwrap();
        assert_eq!(plain.outcomes, by_ast.outcomes, "{}", p.name);
        assert_eq!(plain.final_storage, by_ast.storage.snapshot(&p), "{}", p.name);

        let Some(spec) = extract_targets(src).unwrap().pop() else { continue };
        let targeted = Replayer::new(&p).with_target(&spec).unwrap().run(&txs).unwrap();
        let by_ast = run_ast(&ast, &txs, Some(&spec)).unwrap();
        assert_eq!(targeted.hit_at_tx.zip(targeted.safety_value), by_ast.hit, "{}", p.name);
        assert_eq!(targeted.outcomes, by_ast.outcomes, "{}", p.name);
    }
}

#[test]
fn exhaustive_search_finds_shortest() {
    let src = samples::MAPPING;
    let p = program(src);
    let r = Replayer::new(&p).with_target(&target(src)).unwrap();
    let bounds = SearchBounds { max_calls: 2, ..SearchBounds::default() };
    let seq = exhaustive_search(&p, &r, &bounds).unwrap().expect("reachable");
    let names: Vec<&str> = seq.iter().map(|t| t.function.as_str()).collect();
    assert_eq!(names, [CONSTRUCTOR_NAME, "guess", "check"]);
    assert_eq!(seq[1].args, [U256::from(10u8), U256::from(1u8)]);
    assert!(r.run(&seq).unwrap().confirmed());
}

#[test]
fn exhaustive_search_respects_bounds() {
    let src = samples::CONTRADICTION;
    let p = program(src);
    let r = Replayer::new(&p).with_target(&target(src)).unwrap();
    let bounds = SearchBounds { args: (0u64..=20).map(U256::from).collect(), ..SearchBounds::default() };
    assert_eq!(exhaustive_search(&p, &r, &bounds).unwrap(), None);

    // Five bids are beyond three calls.
    let src = samples::MULTI_TX;
    let p = program(src);
    let r = Replayer::new(&p).with_target(&target(src)).unwrap();
    let args = vec![U256::from(150u8)];
    assert_eq!(
        exhaustive_search(&p, &r, &SearchBounds { args: args.clone(), ..SearchBounds::default() }).unwrap(),
        None
    );
    let seq =
        exhaustive_search(&p, &r, &SearchBounds { max_calls: 6, args, ..SearchBounds::default() }).unwrap().unwrap();
    assert_eq!(seq.len(), 7);
}
