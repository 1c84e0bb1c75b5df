//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. `WAVEKIN_ACCEPTANCE_IDS=1,2,4` restricts the run.

use std::process::ExitCode;

use wavekin::report::{run, Scale};

fn main() -> ExitCode {
    let ids: Vec<u8> = match std::env::var("WAVEKIN_ACCEPTANCE_IDS") {
        Ok(s) if !s.trim().is_empty() => s.split(',').map(|t| t.trim().parse().expect("criterion id")).collect(),
        _ => (1..=11).collect(),
    };
    println!("acceptance: {} criteria at full scale", ids.len());
    let mut failed = 0;
    for o in run(&ids, Scale::Full, 1) {
        println!("{}", o.line());
        for n in &o.notes {
            println!("    info: {n}");
        }
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ids.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
