use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundKind {
    Client,
    Server,
    /// The state after the last round; not an update itself.
    Final,
}

impl RoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoundKind::Client => "client",
            RoundKind::Server => "server",
            RoundKind::Final => "final",
        }
    }
}

impl fmt::Display for RoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoundKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "client" => Ok(RoundKind::Client),
            "server" => Ok(RoundKind::Server),
            "final" => Ok(RoundKind::Final),
            other => Err(format!("unknown round kind '{other}'")),
        }
    }
}

/// Metrics of the state `x_r` at the start of round `r`, tagged with the kind
/// of update round `r` performs. A trailing [`RoundKind::Final`] record holds
/// `x_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub kind: RoundKind,
    pub grad_norm_sq: f64,
    pub dist_sq: Option<f64>,
    pub loss: f64,
    pub participants: Option<Vec<usize>>,
}

impl RoundRecord {
    pub fn n_participants(&self) -> usize {
        self.participants.as_ref().map_or(0, Vec::len)
    }
}

/// Realised-trajectory quantities entering the admissible-`q` formulas.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticStats {
    /// `max_{r ∈ T_s} ‖∇F(x_r)‖²`
    pub g1: Option<f64>,
    /// `max_{r ∈ T_c} ‖(1/m) Σ_i Σ_k ∇F_i(x^i_{r,k})‖²`
    pub g2: Option<f64>,
    /// `‖∇F(x_r)‖²` for every round.
    pub g3: Vec<f64>,
    /// `(r, (1/m) Σ_{i ∈ S_r} [F_i(x_r) − F_i(x*)])` for client rounds.
    pub g4: Vec<(usize, f64)>,
}

/// Scalar summary of a run. Every field is a pure function of the record list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rounds: usize,
    pub client_rounds: usize,
    pub server_rounds: usize,
    /// `R_s / R_c`; `None` when there were no client rounds.
    pub server_client_ratio: Option<f64>,
    pub final_grad_norm_sq: f64,
    pub final_dist_sq: Option<f64>,
    pub final_loss: f64,
    pub min_grad_norm_sq: f64,
    pub mean_grad_norm_sq: f64,
    /// Mean over the second half of the states `x_1 … x_R`.
    pub tail_mean_grad_norm_sq: f64,
    pub tail_mean_dist_sq: Option<f64>,
    /// `G1` recomputed from the records.
    pub g1: Option<f64>,
}

impl RunSummary {
    pub fn from_records(records: &[RoundRecord]) -> Option<Self> {
        let last = records.last()?;
        let updates: Vec<&RoundRecord> = records.iter().filter(|r| r.kind != RoundKind::Final).collect();
        let client_rounds = updates.iter().filter(|r| r.kind == RoundKind::Client).count();
        let server_rounds = updates.iter().filter(|r| r.kind == RoundKind::Server).count();
        // states x_1..x_R: every record but the first
        let states = &records[1.min(records.len() - 1)..];
        let tail = &states[states.len() / 2..];
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            let (s, n) = xs.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if n == 0 { f64::NAN } else { s / n as f64 }
        };
        let tail_mean_dist_sq = tail
            .iter()
            .map(|r| r.dist_sq)
            .collect::<Option<Vec<f64>>>()
            .map(|v| mean(&mut v.into_iter()));
        Some(Self {
            rounds: updates.len(),
            client_rounds,
            server_rounds,
            server_client_ratio: (client_rounds > 0).then(|| server_rounds as f64 / client_rounds as f64),
            final_grad_norm_sq: last.grad_norm_sq,
            final_dist_sq: last.dist_sq,
            final_loss: last.loss,
            min_grad_norm_sq: records.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min),
            mean_grad_norm_sq: mean(&mut records.iter().map(|r| r.grad_norm_sq)),
            tail_mean_grad_norm_sq: mean(&mut tail.iter().map(|r| r.grad_norm_sq)),
            tail_mean_dist_sq,
            g1: updates
                .iter()
                .filter(|r| r.kind == RoundKind::Server)
                .map(|r| r.grad_norm_sq)
                .reduce(f64::max),
        })
    }
}
