use proptest::prelude::*;
use rand::SeedableRng;

use backreach_core::cfg::{build_cfg_plus, CfgPlus};
use backreach_core::concretizer::{Transaction, TransactionSequence};
use backreach_core::encoder::{ssa_number, SolverConfig, SolverSession};
use backreach_core::frontend::{parse_contract, TargetInfo};
use backreach_core::ir::lower;
use backreach_core::oracle::{Replayer, TxOutcome};
use backreach_core::testgen::checks::{check_numbering, model_matches_replay};
use backreach_core::testgen::{random_contract, random_walk, straight_line_case, GenConfig, Rng8};
use backreach_core::types::{Account, U256};

fn graph(source: &str) -> CfgPlus {
    build_cfg_plus(lower(&parse_contract(source).expect("generated source parses")).expect("generated source lowers"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn random_walks_number_in_single_assignment_form(seed in any::<u64>(), len in 1usize..60) {
        let mut rng = Rng8::seed_from_u64(seed);
        let generated = random_contract(&mut rng, GenConfig::default());
        let g = graph(&generated.source);
        let walk = random_walk(&g, &mut rng, len);
        let script = ssa_number(&g, &walk, None).map_err(|e| TestCaseError::fail(format!("{e}\n{}", generated.source)))?;
        prop_assert_eq!(script.steps.len(), walk.len());
        if let Err(msg) = check_numbering(&script) {
            return Err(TestCaseError::fail(format!("{msg}\n{}", generated.source)));
        }
    }
}

#[test]
fn encoder_agrees_with_the_interpreter_on_straight_line_code() {
    let mut session = SolverSession::new(SolverConfig::default());
    let (mut sat, mut defines, mut cells) = (0, 0, 0);
    for seed in 0..500u64 {
        let (generated, g, spec) = straight_line_case(&mut Rng8::seed_from_u64(seed));
        match model_matches_replay(&g, &spec, &mut session) {
            Ok(Some(c)) => {
                sat += 1;
                defines += c.definitions;
                cells += c.cells;
            }
            Ok(None) => {}
            Err(msg) => panic!("seed {seed}: {msg}\n{}", generated.source),
        }
    }
    eprintln!("{sat} satisfiable, {defines} definitions and {cells} table cells compared");
    assert!(defines > 500 * 3 && cells > 200, "too little was compared");
    // Straight-line code only fails on an unsatisfiable require, and
    // the generator emits none.
    assert_eq!(sat, 500);
}

fn sequence_strategy() -> impl Strategy<Value = TransactionSequence> {
    let word = any::<[u64; 4]>().prop_map(U256::from_limbs);
    let tx = (
        "[a-z][a-zA-Z0-9_]{0,8}",
        0u8..8,
        prop::collection::vec(word.clone(), 0..4),
        word.clone(),
        word,
        any::<Option<u64>>(),
    )
        .prop_map(|(function, caller, args, value, gas, ts)| Transaction {
            function,
            caller: Account(caller),
            args,
            value,
            gas,
            timestamp: ts.map(U256::from),
        });
    (prop::collection::vec(tx, 0..5), 1u32..500, any::<Option<String>>(), any::<u64>(), any::<u64>()).prop_map(
        |(transactions, line, safety, walks, time)| TransactionSequence {
            target: TargetInfo { line, safety },
            heuristic: "floyd-warshall".into(),
            walks_explored: walks,
            time_ms: time,
            transactions,
        },
    )
}

const LEDGER: &str = "contract Ledger {
    uint public total;
    uint8 public count;
    mapping(uint => uint) public cells;

    function put(uint key, uint value) public {
        cells[key] = value;
        total += value;
        count += 1;
        require(key != 7);
    }

    function take(uint key) public {
        total -= cells[key];
        cells[key] = 0;
    }
}
";

proptest! {
    #[test]
    fn sequence_json_round_trips(seq in sequence_strategy()) {
        let text = seq.to_json();
        prop_assert_eq!(TransactionSequence::from_json(&text).unwrap(), seq.clone());
        prop_assert_eq!(TransactionSequence::from_json(&text).unwrap().to_json(), text);
    }

    /// A reverted call leaves storage exactly as the calls before it left it.
    #[test]
    fn reverted_transactions_leave_storage_untouched(
        calls in prop::collection::vec((any::<bool>(), 0u64..10, 0u64..1000), 1..8),
    ) {
        let g = graph(LEDGER);
        let mut txs = vec![Transaction::call("<constructor>", vec![])];
        for (put, key, value) in calls {
            txs.push(match put {
                true => Transaction::call("put", vec![U256::from(key), U256::from(value)]),
                false => Transaction::call("take", vec![U256::from(key)]),
            });
        }
        let replayer = Replayer::new(&g.program);
        for end in 1..=txs.len() {
            let report = replayer.run(&txs[..end]).unwrap();
            if matches!(report.outcomes.last(), Some(TxOutcome::Reverted { .. })) {
                let before = replayer.run(&txs[..end - 1]).unwrap();
                prop_assert_eq!(report.final_storage, before.final_storage);
            }
        }
    }
}

#[test]
fn wraparound_matches_the_interpreter() {
    let src = "contract Wrap {
    uint16 public s;
    uint8 public t;
    mapping(uint => uint) public m;

    function f(uint16 a) public {
        s = a + 1;
        t = uint8(s) - 1;
        m[s] = 65535 + 1;
        m[0] = t;
    }
}
";
    let ast = parse_contract(src).unwrap();
    let g = build_cfg_plus(lower(&ast).unwrap());
    let spec = backreach_core::frontend::target_for_line(&ast, 10, Some("s == 0 && t == 255")).unwrap();
    let mut session = SolverSession::new(SolverConfig::default());
    let compared = model_matches_replay(&g, &spec, &mut session).unwrap().expect("satisfiable");
    assert!(compared.definitions >= 4 && compared.cells >= 1, "{compared:?}");
}
