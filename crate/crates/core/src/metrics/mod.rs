//! Trajectory metrics: errors, energy statistics, decorrelation time and
//! energy spectra, plus their aggregation over rollout ensembles.

mod spectrum;

pub use spectrum::energy_spectrum;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{kinetic_energy, VelocityField};
use crate::sample::RolloutEnsemble;

fn check_same_len(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} steps", a.len()), b.len()));
    }
    for (x, y) in a.iter().zip(b) {
        if x.len() != y.len() {
            return Err(Error::shape(
                format!("states of length {}", x.len()),
                y.len(),
            ));
        }
    }
    Ok(())
}

/// Mean squared difference over the first `horizon` steps and all entries.
pub fn mse(generated: &[Vec<f64>], reference: &[Vec<f64>], horizon: usize) -> Result<f64> {
    check_same_len(generated, reference)?;
    if horizon == 0 || horizon > generated.len() {
        return Err(Error::Config(format!(
            "horizon {horizon} outside 1..={}",
            generated.len()
        )));
    }
    let mut se = 0.0;
    let mut count = 0usize;
    for (a, b) in generated[..horizon].iter().zip(&reference[..horizon]) {
        se += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        count += a.len();
    }
    Ok(se / count as f64)
}

/// `‖(qⁿ − qⁿ⁻¹)/Δt‖₁` for `n = 1..len`.
pub fn rate_of_change(traj: &[Vec<f64>], dt: f64) -> Vec<f64> {
    traj.windows(2)
        .map(|w| {
            w[1].iter()
                .zip(&w[0])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / dt
        })
        .collect()
}

/// Empirical Wasserstein-1 distance between two 1-D sample sets.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let sorted = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as u128, b.len() as u128);
    // Walk the merged quantile grid in units of 1/(n·m).
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0u128;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let (next_a, next_b) = ((i as u128 + 1) * m, (j as u128 + 1) * n);
        let next = next_a.min(next_b);
        total += (next - prev) as f64 * (a[i] - b[j]).abs();
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / (n * m) as f64)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// First step whose Pearson correlation with the reference falls below
/// `threshold`, as a fraction of the trajectory length; `1.0` if none does.
/// Zero-variance states count as decorrelated.
pub fn correlation_time(
    generated: &[Vec<f64>],
    reference: &[Vec<f64>],
    threshold: f64,
) -> Result<f64> {
    check_same_len(generated, reference)?;
    if generated.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let n = generated.len();
    for (k, (a, b)) in generated.iter().zip(reference).enumerate() {
        match pearson(a, b) {
            Some(r) if r >= threshold => {}
            _ => return Ok(k as f64 / n as f64),
        }
    }
    Ok(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// Short error horizon (clipped to the trajectory length).
    pub short_horizon: usize,
    pub corr_threshold: f64,
    /// Steps at which spectra are reported; empty means the last step.
    pub spectrum_steps: Vec<usize>,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            short_horizon: 50,
            corr_threshold: 0.8,
            spectrum_steps: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSnapshot {
    pub step: usize,
    pub reference: Vec<f64>,
    /// Mean over all realizations.
    pub generated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_steps: usize,
    pub short_horizon: usize,
    pub mse_short: f64,
    pub mse_full: f64,
    pub energy_w1: f64,
    pub corr_time: f64,
    /// `[trajectory][step]` reference kinetic energy.
    pub reference_energy: Vec<Vec<f64>>,
    /// `[trajectory · realization][step]` generated kinetic energy.
    pub energy_series: Vec<Vec<f64>>,
    pub reference_roc: Vec<Vec<f64>>,
    pub roc_series: Vec<Vec<f64>>,
    pub spectra: Vec<SpectrumSnapshot>,
}

struct RealizationMetrics {
    mse_short: f64,
    mse_full: f64,
    corr_time: f64,
    energy: Vec<f64>,
    roc: Vec<f64>,
}

fn energies(states: &[Vec<f64>], ens: &RolloutEnsemble) -> Result<Vec<f64>> {
    let grid = ens.shape.grid()?;
    states
        .iter()
        .map(|s| Ok(kinetic_energy(&VelocityField::from_flat(grid, s)?)))
        .collect()
}

/// Prepends the last initial state so the rate of change is defined from
/// the first generated step.
fn roc_from_start(ens: &RolloutEnsemble, traj: &[Vec<f64>]) -> Vec<f64> {
    let mut full = Vec::with_capacity(traj.len() + 1);
    full.extend(ens.initial.last().cloned());
    full.extend(traj.iter().cloned());
    rate_of_change(&full, ens.dt)
}

/// Aggregates metrics over every realization of every ensemble. Scalar
/// metrics are averaged over realizations; the energy W-1 distance pools
/// all per-step energies on each side.
pub fn evaluate(ensembles: &[RolloutEnsemble], opts: &MetricOptions) -> Result<MetricReport> {
    let first = ensembles.first().ok_or(Error::Empty("rollout ensembles"))?;
    let n_steps = first.n_steps();
    if n_steps == 0 {
        return Err(Error::Empty("rollout steps"));
    }
    let short = opts.short_horizon.clamp(1, n_steps);
    let grid = first.shape.grid()?;
    let mut per_realization = vec![];
    let mut reference_energy = vec![];
    let mut reference_roc = vec![];
    for ens in ensembles {
        let reference = ens
            .reference
            .as_ref()
            .ok_or(Error::Empty("reference trajectory"))?;
        if ens.n_steps() != n_steps || ens.shape != first.shape || ens.realizations.is_empty() {
            return Err(Error::shape(
                format!("ensembles of {n_steps} steps"),
                ens.n_steps(),
            ));
        }
        reference_energy.push(energies(reference, ens)?);
        reference_roc.push(roc_from_start(ens, reference));
        let rows = ens
            .realizations
            .par_iter()
            .map(|traj| {
                Ok(RealizationMetrics {
                    mse_short: mse(traj, reference, short)?,
                    mse_full: mse(traj, reference, n_steps)?,
                    corr_time: correlation_time(traj, reference, opts.corr_threshold)?,
                    energy: energies(traj, ens)?,
                    roc: roc_from_start(ens, traj),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        per_realization.extend(rows);
    }
    let count = per_realization.len() as f64;
    let mean =
        |f: fn(&RealizationMetrics) -> f64| per_realization.iter().map(f).sum::<f64>() / count;
    let pooled_gen: Vec<f64> = per_realization
        .iter()
        .flat_map(|r| r.energy.iter().copied())
        .collect();
    let pooled_ref: Vec<f64> = reference_energy.iter().flatten().copied().collect();

    let steps = if opts.spectrum_steps.is_empty() {
        vec![n_steps - 1]
    } else {
        opts.spectrum_steps.clone()
    };
    let mut spectra = vec![];
    for step in steps {
        if step >= n_steps {
            return Err(Error::Config(format!(
                "spectrum step {step} beyond {n_steps} steps"
            )));
        }
        let mut reference: Vec<f64> = vec![];
        let mut generated: Vec<f64> = vec![];
        let (mut n_ref, mut n_gen) = (0.0, 0.0);
        let accumulate = |acc: &mut Vec<f64>, s: Vec<f64>| {
            if acc.is_empty() {
                acc.resize(s.len(), 0.0);
            }
            acc.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        };
        for ens in ensembles {
            let r = &ens.reference.as_ref().expect("checked above")[step];
            accumulate(
                &mut reference,
                energy_spectrum(&VelocityField::from_flat(grid, r)?),
            );
            n_ref += 1.0;
            for traj in &ens.realizations {
                accumulate(
                    &mut generated,
                    energy_spectrum(&VelocityField::from_flat(grid, &traj[step])?),
                );
                n_gen += 1.0;
            }
        }
        reference.iter_mut().for_each(|e| *e /= n_ref);
        generated.iter_mut().for_each(|e| *e /= n_gen);
        spectra.push(SpectrumSnapshot {
            step,
            reference,
            generated,
        });
    }

    let report = MetricReport {
        n_steps,
        short_horizon: short,
        mse_short: mean(|r| r.mse_short),
        mse_full: mean(|r| r.mse_full),
        energy_w1: wasserstein1(&pooled_gen, &pooled_ref)?,
        corr_time: mean(|r| r.corr_time),
        reference_energy,
        energy_series: per_realization.iter().map(|r| r.energy.clone()).collect(),
        reference_roc,
        roc_series: per_realization.into_iter().map(|r| r.roc).collect(),
        spectra,
    };
    if ![
        report.mse_short,
        report.mse_full,
        report.energy_w1,
        report.corr_time,
    ]
    .iter()
    .all(|v| v.is_finite())
    {
        return Err(Error::non_finite("metric report"));
    }
    Ok(report)
}

impl MetricReport {
    /// `metric,horizon,value` rows.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,horizon,value\n");
        let rows = [
            ("mse", self.short_horizon, self.mse_short),
            ("mse", self.n_steps, self.mse_full),
            ("energy_w1", self.n_steps, self.energy_w1),
            ("corr_time", self.n_steps, self.corr_time),
        ];
        for (name, h, v) in rows {
            s.push_str(&format!("{name},{h},{v:e}\n"));
        }
        s
    }

    /// Per-step ensemble means: `step,reference_energy,generated_energy,reference_roc,generated_roc`.
    /// Rate-of-change cells are empty for step 0 when the ensembles carry no
    /// initial state.
    pub fn series_csv(&self) -> String {
        let mean_at = |rows: &[Vec<f64>], k: usize| {
            rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64
        };
        let roc_at = |rows: &[Vec<f64>], k: usize| {
            let offset = self.n_steps - rows.first().map_or(0, Vec::len);
            k.checked_sub(offset)
                .map_or(String::new(), |i| format!("{:e}", mean_at(rows, i)))
        };
        let mut s =
            String::from("step,reference_energy,generated_energy,reference_roc,generated_roc\n");
        for k in 0..self.n_steps {
            s.push_str(&format!(
                "{k},{:e},{:e},{},{}\n",
                mean_at(&self.reference_energy, k),
                mean_at(&self.energy_series, k),
                roc_at(&self.reference_roc, k),
                roc_at(&self.roc_series, k)
            ));
        }
        s
    }

    /// `step,shell,reference,generated`.
    pub fn spectra_csv(&self) -> String {
        let mut s = String::from("step,shell,reference,generated\n");
        for snap in &self.spectra {
            for (k, (r, g)) in snap.reference.iter().zip(&snap.generated).enumerate() {
                s.push_str(&format!("{},{k},{r:e},{g:e}\n", snap.step));
            }
        }
        s
    }
}
