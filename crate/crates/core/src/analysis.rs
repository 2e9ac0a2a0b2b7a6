//! Rank correlation and CSV exports for the layer-importance and evolution
//! curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::accuracy_table::{from_micros, AccuracyLossTable};
use crate::error::{Error, Result};
use crate::specializer::EvolutionLog;

/// Two equally long samples, at least two observations.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSamples {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PairedSamples {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidConfig(format!(
                "paired samples differ in length: {} vs {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InvalidConfig(
                "need at least two paired samples".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| v.is_nan()) {
            return Err(Error::InvalidConfig("samples contain NaN".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Kendall's tau-b. Pairs tied in one variable count toward that
/// variable's tie correction and are neither concordant nor discordant.
pub fn kendall_tau(samples: &PairedSamples) -> Result<f64> {
    let (xs, ys) = (&samples.xs, &samples.ys);
    let n = xs.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_x, mut tied_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = xs[i].partial_cmp(&xs[j]).unwrap();
            let dy = ys[i].partial_cmp(&ys[j]).unwrap();
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (Equal, _) => tied_x += 1,
                (_, Equal) => tied_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    if tied_x == pairs {
        return Err(Error::UndefinedCorrelation("every x value is tied"));
    }
    if tied_y == pairs {
        return Err(Error::UndefinedCorrelation("every y value is tied"));
    }
    let denom = (((pairs - tied_x) * (pairs - tied_y)) as f64).sqrt();
    Ok((concordant - discordant) as f64 / denom)
}

/// `layer,max_loss` rows, one per layer.
pub fn importance_csv(loss: &AccuracyLossTable) -> String {
    let mut out = String::from("layer,max_loss\n");
    for (l, m) in loss.layer_importance_micros().into_iter().enumerate() {
        writeln!(out, "{l},{:.6}", from_micros(u64::from(m))).unwrap();
    }
    out
}

/// `generation,best_loss,mean_loss` rows, one per generation.
pub fn evolution_csv(log: &EvolutionLog) -> String {
    let mut out = String::from("generation,best_loss,mean_loss\n");
    for r in &log.records {
        writeln!(
            out,
            "{},{:.6},{:.6}",
            r.generation, r.best_loss, r.mean_loss
        )
        .unwrap();
    }
    out
}

pub fn export_importance(loss: &AccuracyLossTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, importance_csv(loss)).map_err(|e| Error::io(path, e))
}

pub fn export_evolution(log: &EvolutionLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, evolution_csv(log)).map_err(|e| Error::io(path, e))
}
