use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::output::{read_json, read_records_csv, CsvRow};
use super::scenarios::{
    rate_fits, CellAggregate, CellSummary, ImpossibilitySummary, Manifest, PacSummary, PositivelyRelatedSummary,
};
use crate::error::{Error, Result};
use crate::fedopt::{RoundKind, RunSummary};
use crate::stats::sign_test_p_value;

/// Recomputes a run summary from CSV rows, independently of the in-memory
/// reducer used while training.
pub fn reduce_rows(rows: &[CsvRow]) -> Result<RunSummary> {
    let last = rows.last().ok_or_else(|| Error::Data("empty run CSV".into()))?;
    if last.kind != RoundKind::Final {
        return Err(Error::Data("run CSV does not end with a final-state row".into()));
    }
    let mut client_rounds = 0;
    let mut server_rounds = 0;
    let mut g1: Option<f64> = None;
    for r in &rows[..rows.len() - 1] {
        match r.kind {
            RoundKind::Client => client_rounds += 1,
            RoundKind::Server => {
                server_rounds += 1;
                g1 = Some(g1.map_or(r.grad_norm_sq, |g| g.max(r.grad_norm_sq)));
            }
            RoundKind::Final => return Err(Error::Data("final-state row before the end of a run CSV".into())),
        }
    }
    let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let grads: Vec<f64> = rows.iter().map(|r| r.grad_norm_sq).collect();
    let states = if rows.len() > 1 { &rows[1..] } else { rows };
    let tail = &states[states.len() / 2..];
    let tail_grads: Vec<f64> = tail.iter().map(|r| r.grad_norm_sq).collect();
    let tail_dists: Option<Vec<f64>> = tail.iter().map(|r| r.dist_sq).collect();
    Ok(RunSummary {
        rounds: rows.len() - 1,
        client_rounds,
        server_rounds,
        server_client_ratio: (client_rounds > 0).then(|| server_rounds as f64 / client_rounds as f64),
        final_grad_norm_sq: last.grad_norm_sq,
        final_dist_sq: last.dist_sq,
        final_loss: last.loss,
        min_grad_norm_sq: grads.iter().copied().fold(f64::INFINITY, f64::min),
        mean_grad_norm_sq: avg(&grads),
        tail_mean_grad_norm_sq: avg(&tail_grads),
        tail_mean_dist_sq: tail_dists.map(|v| avg(&v)),
        g1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: Scenario,
    pub config_hash: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} (config {})", self.scenario, &self.config_hash[..12.min(self.config_hash.len())])?;
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            writeln!(f, "{} {:width$}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn within(lo: f64, v: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

/// Re-reads an output directory, checks that every JSON summary matches its
/// CSVs and evaluates the scenario's pass/fail criteria.
pub fn report(dir: &Path) -> Result<Report> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::DatasetNotFound(manifest_path));
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    let mut checks = Vec::new();
    match manifest.scenario {
        s if s.is_training() => training_checks(dir, &manifest, &mut checks)?,
        Scenario::Impossibility => impossibility_checks(dir, &manifest, &mut checks)?,
        Scenario::Pac => {
            let s: PacSummary = read_json(&dir.join("cells/pac/summary.json"))?;
            let slope = s.mixture.fit.slope;
            checks.push(Check::new("pac slope", within(-1.25, slope, -0.75), format!("slope {slope:.4} in [-1.25, -0.75]")));
            for (i, n) in s.mixture.n_grid.iter().enumerate() {
                let (mix, cen) = (s.mixture.mean_excess[i], s.centralized[i]);
                checks.push(Check::new(
                    format!("no worse than centralized n={n}"),
                    mix <= 1.15 * cen,
                    format!("mixture {mix:.3e} <= 1.15 x centralized {cen:.3e} (n_T={})", s.n_t[i]),
                ));
            }
        }
        Scenario::PositivelyRelated => {
            let s: PositivelyRelatedSummary = read_json(&dir.join("cells/positively-related/summary.json"))?;
            let beta_ok = s.fit.beta.is_some_and(|b| (b - 1.0).abs() <= 0.01);
            let alpha_ok = (s.fit.alpha - s.alpha_closed_form).abs() <= 0.01;
            checks.push(Check::new("beta", beta_ok, format!("fitted {:?}, expected 1 +/- 0.01", s.fit.beta)));
            checks.push(Check::new(
                "alpha",
                alpha_ok,
                format!("fitted {:.6}, expected {:.6} +/- 0.01", s.fit.alpha, s.alpha_closed_form),
            ));
        }
        other => return Err(Error::Data(format!("unsupported scenario {other}"))),
    }
    Ok(Report { scenario: manifest.scenario, config_hash: manifest.config_hash, checks })
}

fn training_checks(dir: &Path, manifest: &Manifest, checks: &mut Vec<Check>) -> Result<()> {
    let mut cells = Vec::new();
    let mut consistent = true;
    let mut mismatches = Vec::new();
    for name in &manifest.cells {
        let cell_dir = dir.join("cells").join(name);
        let summary: CellSummary = read_json(&cell_dir.join("summary.json"))?;
        if summary.config_hash != manifest.config_hash {
            consistent = false;
            mismatches.push(format!("{name}: config hash differs"));
        }
        let mut recomputed = Vec::new();
        for run in &summary.runs {
            let rows = read_records_csv(&cell_dir.join(format!("seed-{}.csv", run.seed)))?;
            let s = reduce_rows(&rows)?;
            if s != run.summary {
                consistent = false;
                mismatches.push(format!("{name}/seed-{}", run.seed));
            }
            recomputed.push(s);
        }
        let refs: Vec<&RunSummary> = recomputed.iter().collect();
        let accs: Vec<Option<f64>> = summary.runs.iter().map(|r| r.test_accuracy).collect();
        let aggregate = CellAggregate::from_summaries(&refs, &accs);
        cells.push((summary, recomputed, aggregate));
    }
    checks.push(Check::new(
        "summaries match CSVs",
        consistent,
        if consistent { format!("{} cells", cells.len()) } else { mismatches.join(", ") },
    ));

    let agg: Vec<_> = cells.iter().map(|(s, _, a)| (s.params.clone(), a.clone())).collect();
    match manifest.scenario {
        Scenario::SconvexRate | Scenario::NonconvexRate => {
            let (lo, hi) = if manifest.scenario == Scenario::SconvexRate { (-1.3, -0.7) } else { (f64::NEG_INFINITY, -0.35) };
            for fit in rate_fits(manifest.scenario, &agg)? {
                let slope = fit.fit.slope;
                checks.push(Check::new(
                    format!("{} slope [{}]", fit.metric, fit.group),
                    within(lo, slope, hi),
                    format!("slope {slope:.4} in [{lo}, {hi}], r2 {:.3}", fit.fit.r_squared),
                ));
            }
        }
        Scenario::FedavgBias => {
            for (summary, _, a) in &cells {
                if let (Some(bias), Some(dist)) = (summary.reference.bias_sq, a.mean_final_dist_sq) {
                    let rel = (dist - bias).abs() / bias;
                    checks.push(Check::new(
                        format!("bias plateau [{}]", summary.cell),
                        rel <= 0.1,
                        format!("mean final dist^2 {dist:.6e} vs bias {bias:.6e} (rel {rel:.3})"),
                    ));
                }
            }
        }
        Scenario::Speedup => {
            let find = |m: usize, k: usize| cells.iter().find(|(s, _, _)| s.params.m == m && s.params.local_steps == k);
            if let (Some(big), Some(small)) = (find(8, 8), find(2, 2)) {
                let wins = big.1.iter().zip(&small.1).filter(|(b, s)| b.tail_mean_grad_norm_sq < s.tail_mean_grad_norm_sq).count();
                let n = big.1.len().min(small.1.len());
                let p = sign_test_p_value(wins, n);
                checks.push(Check::new(
                    "speedup (8,8) < (2,2)",
                    p <= 0.05,
                    format!("{wins}/{n} seeds lower, one-sided sign test p = {p:.4}"),
                ));
            }
        }
        Scenario::MnistLr => {
            let acc = |q: f64, p: usize| {
                cells
                    .iter()
                    .find(|(s, _, _)| s.params.q == q && s.params.p == p)
                    .and_then(|(_, _, a)| a.mean_test_accuracy)
            };
            if let (Some(fedavg), Some(safari)) = (acc(1.0, 1), acc(0.8, 1)) {
                checks.push(Check::new("fedavg p=1 <= 70%", fedavg <= 0.70, format!("{:.2}%", 100.0 * fedavg)));
                checks.push(Check::new(
                    "safari p=1 >= fedavg + 10",
                    safari >= fedavg + 0.10,
                    format!("{:.2}% vs {:.2}%", 100.0 * safari, 100.0 * fedavg),
                ));
            }
            if let (Some(fedavg), Some(safari)) = (acc(1.0, 10), acc(0.8, 10)) {
                checks.push(Check::new(
                    "p=10 gap <= 2",
                    (safari - fedavg).abs() <= 0.02,
                    format!("{:.2}% vs {:.2}%", 100.0 * safari, 100.0 * fedavg),
                ));
            }
        }
        _ => {}
    }
    Ok(())
}

fn impossibility_checks(dir: &Path, manifest: &Manifest, checks: &mut Vec<Check>) -> Result<()> {
    let mut reports = Vec::new();
    for name in &manifest.cells {
        let s: ImpossibilitySummary = read_json(&dir.join("cells").join(name).join("summary.json"))?;
        let r = s.report;
        checks.push(Check::new(
            format!("failure > 1/20 [{name}]"),
            r.failure.lower > 0.05,
            format!("{:.4} (95% CI {:.4}..{:.4})", r.failure.fraction, r.failure.lower, r.failure.upper),
        ));
        checks.push(Check::new(
            format!("rare-point tail <= 17/20 [{name}]"),
            r.rare_excess.fraction <= 0.87,
            format!("{:.4} (95% CI {:.4}..{:.4})", r.rare_excess.fraction, r.rare_excess.lower, r.rare_excess.upper),
        ));
        reports.push(r);
    }
    for r in &reports {
        let n = r.instance.samples_per_client;
        if let Some(big) = reports
            .iter()
            .find(|o| o.instance.omega == r.instance.omega && o.instance.samples_per_client == 10 * n)
        {
            checks.push(Check::new(
                format!("n-independence omega={} n={}->{}", r.instance.omega, n, 10 * n),
                big.failure.fraction >= r.failure.fraction,
                format!("{:.4} -> {:.4}", r.failure.fraction, big.failure.fraction),
            ));
        }
    }
    Ok(())
}
