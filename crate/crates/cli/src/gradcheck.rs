use std::path::Path;

use anyhow::{Context, Result};
use kshape::model::gradient_suite;

use crate::output::{ensure_dir, write_csv};

/// Returns whether every component passed.
pub fn run(seed: u64, out: &Path) -> Result<bool> {
    let rows = gradient_suite(seed).context("diffcore: gradient suite")?;
    ensure_dir(out)?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.component.clone(),
                format!("{:.3e}", r.max_rel_err),
                format!("{:.0e}", r.threshold),
                if r.passed() { "pass" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("gradcheck.csv"), &["component", "max_rel_err", "threshold", "status"], &csv)?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.component.as_str()).collect();
    for r in &rows {
        println!("{:<45} {:.3e} (< {:.0e})", r.component, r.max_rel_err, r.threshold);
    }
    if failed.is_empty() {
        println!("all {} components pass", rows.len());
    } else {
        eprintln!("gradient check failed for: {}", failed.join(", "));
    }
    Ok(failed.is_empty())
}
