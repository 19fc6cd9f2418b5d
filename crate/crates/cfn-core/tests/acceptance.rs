//! Runs every acceptance criterion at its stated tolerance and prints one
//! PASS/FAIL line per criterion followed by the measured values.
//!
//! Pass criterion ids as arguments to run a subset:
//! `cargo test -p cfn-core --test acceptance -- 3 8`.

use std::process::ExitCode;

use cfn_core::criteria::{
    criterion_claims, criterion_derivatives, criterion_determinism, criterion_diag_scaling, criterion_dominance,
    criterion_offdiag, criterion_optimization, criterion_score_identity, criterion_steel, criterion_tiers,
    criterion_w_tiers, Outcome,
};
use cfn_core::Result;

/// Criteria that are known not to hold as stated. They still run and print
/// FAIL; the suite only errors if one of them starts passing, so the
/// expectation gets revisited.
const EXPECTED_FAILURES: &[u8] = &[7];

fn run(id: u8) -> Result<Outcome> {
    match id {
        1 => criterion_derivatives(120, 1),
        2 => criterion_score_identity(),
        3 => criterion_diag_scaling(),
        4 => criterion_offdiag(),
        5 => criterion_dominance(),
        6 => criterion_tiers(0),
        7 => criterion_w_tiers(0),
        8 => criterion_steel(0.05),
        9 => criterion_optimization(0),
        10 => criterion_claims(100_000, 0),
        11 => criterion_determinism(0, &[1, 8]),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let selected: Vec<u8> =
        std::env::args().skip(1).filter_map(|a| a.parse().ok()).filter(|i| (1..=11).contains(i)).collect();
    let ids: Vec<u8> = if selected.is_empty() { (1..=11).collect() } else { selected };
    let mut unexpected = Vec::new();
    for id in ids {
        let expect_fail = EXPECTED_FAILURES.contains(&id);
        match run(id) {
            Ok(outcome) => {
                print!("{}", outcome.render());
                if expect_fail {
                    println!("    (expected failure)");
                }
                if outcome.passed() == expect_fail {
                    unexpected.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL error: {e}");
                unexpected.push(id);
            }
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: all criteria behaved as expected");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected results for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
