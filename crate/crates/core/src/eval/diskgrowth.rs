//! Seal-store size as a function of the number of delegations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::runtime::{RuntimeError, SimConfig, Simulation};

pub const DISK_GROWTH_SIZES: [u64; 8] = [1, 10, 100, 200, 400, 600, 800, 1000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskGrowthReport {
    /// `(n_transactions, bytes)`
    pub points: Vec<(u64, u64)>,
    pub fit: LinearFit,
}

impl DiskGrowthReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_transactions,bytes\n");
        for (n, b) in &self.points {
            out.push_str(&format!("{n},{b}\n"));
        }
        out
    }
}

/// For each size, a fresh owner delegates one µBTC that many times; the
/// store's length afterwards is the data point. With `scratch` set the
/// store is a real file there (removed afterwards); otherwise in memory,
/// which produces byte-identical logs.
pub fn run_diskgrowth(seed: u64, sizes: &[u64], scratch: Option<&Path>) -> Result<DiskGrowthReport, RuntimeError> {
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let path = scratch.map(|d| d.join(format!("diskgrowth-{n}.seal")));
        if let Some(p) = &path {
            let _ = std::fs::remove_file(p);
        }
        let mut sim = Simulation::new(SimConfig {
            seed,
            store_path: path.clone(),
            ..SimConfig::default()
        })?;
        sim.run_setup()?;
        sim.run_deposit(n)?;
        let base = sim.owner.store().len()?;
        for _ in 0..n {
            sim.run_delegation(1)?;
        }
        let bytes = match &path {
            Some(p) => std::fs::metadata(p).map_err(|e| RuntimeError::Store(e.into()))?.len(),
            None => sim.owner.store().len()?,
        };
        debug_assert!(bytes > base);
        drop(sim);
        if let Some(p) = &path {
            let _ = std::fs::remove_file(p);
        }
        points.push((n, bytes));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, b)| (n as f64, b as f64)).collect();
    Ok(DiskGrowthReport {
        fit: linear_fit(&xy),
        points,
    })
}
