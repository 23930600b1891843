//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all criteria with `cargo test --release --test acceptance`, or a
//! subset by number, e.g. `cargo test --test acceptance -- 1 4 10`.
//! Failing criteria are reported but the process exits zero, so the suite
//! can sit inside `cargo test --workspace`. Set `ECSI_ACCEPTANCE_STRICT=1`
//! to exit non-zero on any failure.

mod gaussian;
mod pipeline;
mod properties;

use std::process::ExitCode;
use std::time::Instant;

pub type CheckResult = Result<Verdict, Box<dyn std::error::Error>>;

pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    run: fn() -> CheckResult,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: "1", name: "energy rate matches Monte-Carlo derivative", run: properties::energy_rate_identity },
    Criterion { id: "2", name: "interpolant boundary conditions", run: properties::boundary_conditions },
    Criterion { id: "3a", name: "optimized interpolant flattens the energy rate", run: properties::optimizer_efficacy },
    Criterion { id: "3b", name: "energy W-1: SI_opt,div <= SI on the desk pipeline", run: pipeline::energy_w1_ordering },
    Criterion { id: "4", name: "projection", run: properties::projection },
    Criterion { id: "5", name: "DNS validation", run: properties::dns_validation },
    Criterion { id: "6", name: "drift-net gradients", run: properties::drift_gradients },
    Criterion { id: "7", name: "Heun integrator", run: properties::heun_integrator },
    Criterion { id: "8", name: "linear-Gaussian oracle", run: gaussian::linear_gaussian_oracle },
    Criterion { id: "9", name: "projected rollouts stay divergence-free", run: pipeline::rollout_divergence },
    Criterion { id: "10", name: "metric self-consistency", run: properties::metric_consistency },
];

fn selected(id: &str, filters: &[String]) -> bool {
    filters.is_empty() || filters.iter().any(|f| f == id || id.strip_prefix(f.as_str()).is_some_and(|r| r.chars().all(char::is_alphabetic)))
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| selected(c.id, &filters)) {
        ran += 1;
        let start = Instant::now();
        let (passed, detail) = match (c.run)() {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let status = if passed { "PASS" } else { "FAIL" };
        println!("{status} [{:>3}] {}: {detail} ({:.1} s)", c.id, c.name, start.elapsed().as_secs_f64());
        if !passed {
            failures += 1;
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    let strict = std::env::var("ECSI_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failures > 0 && strict { ExitCode::FAILURE } else { ExitCode::SUCCESS }
}
