//! Acceptance suite. Each test drives one release criterion end to
//! end at its stated tolerance and prints a pass line; the suite is
//! the exit gate for the crate.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use seesaw_core::channel::{accept_update, propose_update, ChannelState};
use seesaw_core::extrail::BankBehavior;
use seesaw_core::scenario::ScenarioConfig;
use seesaw_core::sim::{enumerate_faults, run, GridDimension, GridSpec, ALTERNATIVES, BANK_BEHAVIORS};
use seesaw_core::trace::audit;
use seesaw_core::{Tick, Ticks, Value};

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_path(&scenario_dir().join(name)).unwrap()
}

const LIBRARY: [&str; 14] = [
    "alt1_design1_happy.toml",
    "alt1_design2_happy.toml",
    "alt2_happy.toml",
    "alt2_receipt_happy.toml",
    "alt1_design1_timeout.toml",
    "alt1_design2_timeout.toml",
    "alt2_timeout.toml",
    "alt1_design2_compensation.toml",
    "alt2_receipt_compensation.toml",
    "alt1_design1_dispute.toml",
    "alt1_design2_dispute.toml",
    "alt2_dispute.toml",
    "stale_close.toml",
    "mutation_weakened.toml",
];

/// Criterion 1: the worked example. From {20,10}, after interaction to
/// {10,20} and a successful external re-balance of 10, the channel is
/// exactly {20,10} again and fiat moved payer -> payee by exactly 10,
/// in every protocol variant, in under a second each.
#[test]
fn criterion_1_worked_example_all_variants() {
    for name in [
        "alt1_design1_happy.toml",
        "alt1_design2_happy.toml",
        "alt2_happy.toml",
    ] {
        let started = Instant::now();
        let output = run(&load(name)).unwrap();
        let elapsed = started.elapsed();
        let report = &output.report;
        assert_eq!(report.outcome.as_deref(), Some("SETTLED"), "{name}");
        assert_eq!(report.channel.balance_a, 20, "{name}");
        assert_eq!(report.channel.balance_i, 10, "{name}");
        assert_eq!(report.fiat["alice"], 90, "{name}: payer fiat");
        assert_eq!(report.fiat["ingrid"], 60, "{name}: payee fiat");
        assert!(report.violations.is_empty(), "{name}: {:?}", report.violations);
        assert!(
            elapsed.as_secs_f64() < 1.0,
            "{name} took {elapsed:?}, budget is 1s"
        );
    }
    println!("[PASS] criterion 1: worked example re-balances to {{20,10}} with 10 fiat moved, all variants, <1s each");
}

/// Criterion 2: with a silent payer bank the session reverts; the
/// payee gets her locked value plus collateral back and receives the
/// payer collateral, exactly, for three collateral settings.
#[test]
fn criterion_2_timeout_path_exact_collaterals() {
    for (c_a, c_i) in [(0u64, 0u64), (2, 3), (5, 0)] {
        let mut config = load("alt1_design1_timeout.toml");
        config.session.as_mut().unwrap().collateral_payer = c_a;
        config.session.as_mut().unwrap().collateral_payee = c_i;
        let output = run(&config).unwrap();
        let report = &output.report;
        assert_eq!(report.outcome.as_deref(), Some("REVERTED"), "C=({c_a},{c_i})");
        assert_eq!(report.channel.balance_a, 10 - c_a, "C=({c_a},{c_i})");
        assert_eq!(report.channel.balance_i, 20 + c_a, "C=({c_a},{c_i})");
        assert_eq!(report.fiat["alice"], 100, "C=({c_a},{c_i}): no fiat moved");
        assert_eq!(report.fiat["ingrid"], 50, "C=({c_a},{c_i}): no fiat moved");
        assert!(
            report.violations.is_empty(),
            "C=({c_a},{c_i}): {:?}",
            report.violations
        );
    }
    println!("[PASS] criterion 2: silent payer bank reverts with 10+C_I back and C_A forfeited, for C in {{(0,0),(2,3),(5,0)}}");
}

/// Criterion 3: design 2 with a valid trigger certificate and no
/// receipt by the deadline credits the payer the locked value plus the
/// payee collateral, exactly.
#[test]
fn criterion_3_compensation_path_exact() {
    let output = run(&load("alt1_design2_compensation.toml")).unwrap();
    let report = &output.report;
    assert_eq!(
        report.outcome.as_deref(),
        Some("SETTLED_WITH_COMPENSATION")
    );
    // {10,20} locked as {8,7}; compensation: 10+3 plus her own 2 back.
    assert_eq!(report.channel.balance_a, 23);
    assert_eq!(report.channel.balance_i, 7);
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    println!("[PASS] criterion 3: missing receipt by t_transferMax credits the payer 10+C_I exactly");
}

/// The deviation a verdict must attribute, derived independently of
/// the regulator: a silent payer bank leaves no certificates (the
/// in-protocol timeout already compensated); a confirming-but-not-
/// executing payer bank is always the culprit; otherwise delivery
/// happened and a non-crediting payee bank is the culprit.
fn expected_culprit(payer_bank: BankBehavior, payee_bank: BankBehavior) -> Option<&'static str> {
    match payer_bank {
        BankBehavior::Silent => None,
        BankBehavior::ConfirmNoExecute => Some("bank_a"),
        _ => match payee_bank {
            BankBehavior::ReceiveNoCredit | BankBehavior::Silent => Some("bank_i"),
            _ => None,
        },
    }
}

/// Criterion 4: the exhaustive 25-cell bank-behavior grid per variant
/// (75 runs) yields a verdict naming a bank iff that bank deviated,
/// with zero misclassifications, in under 10 seconds.
#[test]
fn criterion_4_verdict_soundness_75_cells() {
    let started = Instant::now();
    let mut runs = 0;
    for alternative in ALTERNATIVES {
        for ba in BANK_BEHAVIORS {
            for bi in BANK_BEHAVIORS {
                let mut config = load("alt1_design1_happy.toml");
                config.session.as_mut().unwrap().alternative = alternative;
                config.banks.payer_bank.behavior = ba;
                config.banks.payee_bank.behavior = bi;
                let output = run(&config).unwrap();
                runs += 1;

                let label = format!("{alternative}/{}/{}", ba.name(), bi.name());
                let expected = expected_culprit(ba, bi);
                let named: BTreeSet<String> = output
                    .report
                    .verdicts
                    .iter()
                    .filter_map(|v| v.culprit.clone())
                    .collect();
                match expected {
                    None => assert!(
                        named.is_empty(),
                        "{label}: no bank deviated adjudicably, but verdicts name {named:?}"
                    ),
                    Some(bank) => {
                        assert!(
                            named.contains(bank),
                            "{label}: expected culprit {bank}, verdicts: {:?}",
                            output.report.verdicts
                        );
                        assert_eq!(
                            named.len(),
                            1,
                            "{label}: exactly one bank must be named, got {named:?}"
                        );
                    }
                }
                assert!(
                    output.report.violations.is_empty(),
                    "{label}: {:?}",
                    output.report.violations
                );
            }
        }
    }
    let elapsed = started.elapsed();
    assert_eq!(runs, 75);
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "grid took {elapsed:?}, budget is 10s"
    );
    println!("[PASS] criterion 4: 75-cell bank grid adjudicated with zero misclassifications in {elapsed:?}");
}

/// Criterion 5: channel and fiat conservation hold at every snapshot
/// of every library scenario and fault-grid run; the shipped mutation
/// fixture trips the auditor.
#[test]
fn criterion_5_conservation_and_detector_sensitivity() {
    // Library scenarios (the mutation fixture is checked separately).
    for name in LIBRARY {
        if name == "mutation_weakened.toml" {
            continue;
        }
        let output = run(&load(name)).unwrap();
        assert!(
            output.report.violations.is_empty(),
            "{name}: {:?}",
            output.report.violations
        );
        assert!(audit(&output.trace).is_empty(), "{name}: audit");
    }

    // Bank fault grid, every variant.
    let base = load("alt1_design2_happy.toml");
    let grid = GridSpec {
        dimensions: vec![GridDimension::Banks, GridDimension::Alternatives],
    };
    let summary = enumerate_faults(&base, &grid).unwrap();
    assert_eq!(summary.total_violations, 0, "fault grid must stay conserved");

    // Detector sensitivity: the weakened engine must be caught.
    let output = run(&load("mutation_weakened.toml")).unwrap();
    assert!(
        !output.report.violations.is_empty(),
        "mutation fixture must trip the safety oracle"
    );

    // And a corrupted snapshot must trip the trace auditor.
    let clean = run(&load("alt1_design1_happy.toml")).unwrap();
    let mut corrupted = clean.trace.clone();
    let last = corrupted.records.len() - 1;
    corrupted.records[last].snapshot.channel.balance_a += 1;
    let violations = audit(&corrupted);
    assert!(
        violations
            .iter()
            .any(|v| matches!(v, seesaw_core::trace::Violation::ChannelConservation { .. })),
        "corrupted balance must violate conservation, got {violations:?}"
    );
    println!("[PASS] criterion 5: conservation holds across library and grids; mutation fixture and corrupted trace both trip the auditor");
}

/// Criterion 6: across the full bank-by-participant adversary grid
/// (900 runs), no honest party ends below start minus the collateral
/// dispositions they signed up to; zero violations, under 60 seconds.
#[test]
fn criterion_6_honest_party_safety_grid() {
    let started = Instant::now();
    let base = load("alt1_design2_happy.toml");
    let grid = GridSpec {
        dimensions: vec![GridDimension::Banks, GridDimension::Participants],
    };
    assert!(grid.size() <= 1000, "criterion caps the grid at 10^3 runs");
    let summary = enumerate_faults(&base, &grid).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(summary.cells.len(), 900);
    assert_eq!(
        summary.total_violations, 0,
        "violating cells: {:?}",
        summary
            .cells
            .iter()
            .filter(|c| c.violations > 0)
            .map(|c| &c.labels)
            .collect::<Vec<_>>()
    );
    assert!(
        elapsed.as_secs_f64() < 60.0,
        "grid took {elapsed:?}, budget is 60s"
    );
    println!(
        "[PASS] criterion 6: honest-party safety over {} runs, zero violations, {elapsed:?}",
        summary.cells.len()
    );
}

/// Criterion 7: for every ordering of up to three countersigned states
/// submitted within the dispute window, the payout matches the
/// highest-sequence submission (brute-force oracle).
#[test]
fn criterion_7_dispute_optimality_exhaustive() {
    // Build three countersigned states through ordinary updates.
    let bench = Bench::new();
    let (s0, _) = bench.open(20, 10);
    let s1 = bench.update(&s0, 10, 20);
    let s2 = bench.update(&s1, 15, 15);
    let states = [s0, s1, s2];

    let mut checked = 0;
    for subset in 1u8..8 {
        let selected: Vec<&ChannelState> = states
            .iter()
            .enumerate()
            .filter(|(i, _)| subset & (1 << i) != 0)
            .map(|(_, s)| s)
            .collect();
        for order in permutations(selected.len()) {
            let (_, mut anchor) = bench.open(20, 10);
            // Submissions land on consecutive ticks inside the window.
            for (step, idx) in order.iter().enumerate() {
                anchor
                    .submit_close(selected[*idx].clone(), Tick(step as u64), &bench.0.dir)
                    .unwrap();
            }
            let window_end = Tick(0) + Ticks(10);
            let payout = anchor.finalize(Tick(window_end.0 + 1)).unwrap();

            // Brute-force oracle: the highest-seq submitted state.
            let best = selected.iter().max_by_key(|s| s.seq).unwrap();
            assert_eq!(payout.to_a, best.balance_a, "order {order:?}");
            assert_eq!(payout.to_i, best.balance_i, "order {order:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 15, "3 singletons + 6 pairs ordered + 6 triples ordered");
    println!("[PASS] criterion 7: payout matches the highest-seq state over all {checked} submission orders");
}

/// Criterion 8: every library scenario reproduces a byte-identical
/// trace when run again.
#[test]
fn criterion_8_determinism_byte_identical_traces() {
    for name in LIBRARY {
        let config = load(name);
        let first = run(&config).unwrap().trace.to_jsonl();
        let second = run(&config).unwrap().trace.to_jsonl();
        assert_eq!(first, second, "{name}: trace bytes differ between runs");
    }
    println!(
        "[PASS] criterion 8: byte-identical traces across repeated runs of all {} library scenarios",
        LIBRARY.len()
    );
}

// -- helpers ----------------------------------------------------------------

struct Bench(TestWorld);

struct TestWorld {
    roster: seesaw_core::Roster,
    dir: seesaw_core::KeyDirectory,
    alice: seesaw_core::PartyId,
    ingrid: seesaw_core::PartyId,
    key_a: seesaw_core::KeyPair,
    key_i: seesaw_core::KeyPair,
}

impl Bench {
    fn new() -> Self {
        use seesaw_core::{KeyDirectory, KeyPair, PartyId, Role, Roster};
        let alice = PartyId::new("alice");
        let ingrid = PartyId::new("ingrid");
        let mut roster = Roster::new();
        roster
            .register(alice.clone(), Role::ChannelParticipant)
            .unwrap();
        roster
            .register(ingrid.clone(), Role::ChannelParticipant)
            .unwrap();
        let key_a = KeyPair::derive(1, &alice);
        let key_i = KeyPair::derive(1, &ingrid);
        let mut dir = KeyDirectory::new();
        dir.publish(alice.clone(), key_a.public());
        dir.publish(ingrid.clone(), key_i.public());
        Bench(TestWorld {
            roster,
            dir,
            alice,
            ingrid,
            key_a,
            key_i,
        })
    }

    fn open(
        &self,
        a: u64,
        i: u64,
    ) -> (ChannelState, seesaw_core::channel::LedgerAnchor) {
        seesaw_core::channel::open_channel(
            &self.0.roster,
            seesaw_core::message::ChannelId(1),
            &self.0.alice,
            &self.0.ingrid,
            Value::channel(a),
            Value::channel(i),
            Ticks(10),
            &self.0.key_a,
            &self.0.key_i,
        )
        .unwrap()
    }

    fn update(&self, state: &ChannelState, a: u64, i: u64) -> ChannelState {
        let msg = propose_update(
            state,
            state.seq + 1,
            Value::channel(a),
            Value::channel(i),
            vec![],
            &self.0.key_a,
        )
        .unwrap();
        let (_, next) = accept_update(state, &msg, &self.0.key_i, &self.0.dir).unwrap();
        next
    }
}

/// All permutations of `0..n` for tiny `n`.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    match n {
        0 => vec![],
        1 => vec![vec![0]],
        2 => vec![vec![0, 1], vec![1, 0]],
        3 => {
            let mut out = Vec::new();
            for i in 0..3 {
                for j in 0..3 {
                    if j == i {
                        continue;
                    }
                    let k = 3 - i - j;
                    out.push(vec![i, j, k]);
                }
            }
            out
        }
        _ => unreachable!("criterion covers up to 3 states"),
    }
}
