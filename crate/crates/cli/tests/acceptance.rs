//! Runs every acceptance criterion and prints one pass/fail line each.
//! Positional numeric arguments restrict the run; the exit status is nonzero if any criterion fails.

use std::process::Command;
use std::time::Instant;

use gcdlab_cli::acceptance::{run_criterion, CriterionResult, CRITERIA};

fn simulate_bytes(threads: &str, dir: &std::path::Path) -> Result<Vec<u8>, String> {
    let out = dir.join(format!("sim_{threads}.json"));
    let status = Command::new(env!("CARGO_BIN_EXE_gcdlab"))
        .args(["--threads", threads, "simulate", "--mode", "clt", "--i-max", "8", "--samples", "2000", "--seed", "7"])
        .arg("--output")
        .arg(&out)
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("simulate exited with {status}"));
    }
    std::fs::read(out).map_err(|e| e.to_string())
}

// two thread counts through the binary, plus a repeat
fn reproducibility() -> CriterionResult {
    let (name, budget) = CRITERIA[10];
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("gcdlab_acceptance_{}", std::process::id()));
    let outcome = std::fs::create_dir_all(&dir).map_err(|e| e.to_string()).and_then(|_| {
        let one = simulate_bytes("1", &dir)?;
        let four = simulate_bytes("4", &dir)?;
        let again = simulate_bytes("4", &dir)?;
        Ok((one.len(), one == four && four == again))
    });
    let _ = std::fs::remove_dir_all(&dir);
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match outcome {
        Ok((len, same)) => (same, format!("{len} bytes, threads 1 vs 4 identical: {same}")),
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult { id: 11, name: name.into(), passed: passed && seconds < budget, detail, seconds, budget_seconds: budget }
}

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<usize> = (1..=CRITERIA.len()).filter(|i| picked.is_empty() || picked.contains(i)).collect();
    let mut failed = 0;
    for id in &ids {
        let r = if *id == 11 { reproducibility() } else { run_criterion(*id) };
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ids.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
