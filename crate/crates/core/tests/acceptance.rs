//! Runs every acceptance check and prints one PASS/FAIL line per criterion.

use eqq::checks::run_all;

fn main() {
    let reports = run_all();
    for r in &reports {
        println!("{}", r.summary_line());
    }
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed()).map(|r| r.id).collect();
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", reports.len(), reports.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
