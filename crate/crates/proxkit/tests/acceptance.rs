//! One line per acceptance criterion. Criterion 10 also drives the real
//! binary twice through simulate, train and eval.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use proxkit::selftest::{determinism_config, run_check, CheckOutcome, CHECKS};

fn proxkit(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_proxkit"))
        .current_dir(dir)
        .env_remove("PROXKIT_SEED")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// Dataset, model and metrics bytes from one CLI pipeline run.
fn cli_run() -> Result<[Vec<u8>; 3], String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("pipeline.toml"), determinism_config().to_toml()).map_err(|e| e.to_string())?;
    let cfg = ["--config", "pipeline.toml"];
    proxkit(dir.path(), &[&cfg[..], &["simulate", "--out", "data.jsonl"]].concat())?;
    proxkit(
        dir.path(),
        &[&cfg[..], &["train", "--data", "data.jsonl", "--out", "model.prxm", "--arch", "full", "--regularize"]].concat(),
    )?;
    proxkit(
        dir.path(),
        &[&cfg[..], &["eval", "--model", "model.prxm", "--data", "data.jsonl", "--out", "metrics.json"]].concat(),
    )?;
    let read = |name: &str| std::fs::read(dir.path().join(name)).map_err(|e| format!("{name}: {e}"));
    Ok([read("data.jsonl")?, read("model.prxm")?, read("metrics.json")?])
}

fn cli_determinism(in_process: CheckOutcome) -> CheckOutcome {
    let start = Instant::now();
    let verdict = cli_run().and_then(|a| cli_run().map(|b| (a, b)));
    let (cli_ok, cli_detail) = match verdict {
        Ok((a, b)) => {
            let same = a == b;
            let detail = if same {
                format!("cli runs identical ({} B dataset, {} B model)", a[0].len(), a[1].len())
            } else {
                "cli runs differ".to_string()
            };
            (same, detail)
        }
        Err(e) => (false, format!("cli error: {e}")),
    };
    CheckOutcome {
        passed: in_process.passed && cli_ok,
        detail: format!("{}; {cli_detail}", in_process.detail),
        elapsed: in_process.elapsed + start.elapsed(),
        ..in_process
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut passed = 0;
    for check in &CHECKS {
        let mut outcome = run_check(check);
        if check.id == 10 {
            outcome = cli_determinism(outcome);
        }
        passed += usize::from(outcome.passed);
        println!("{}", outcome.line());
    }
    println!(
        "acceptance: {passed}/{} criteria passed in {:.0} s",
        CHECKS.len(),
        start.elapsed().as_secs_f64()
    );
    if passed == CHECKS.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
