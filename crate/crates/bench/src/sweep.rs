use std::time::Instant;

use anyhow::{bail, Result};
use log::warn;
use rayon::prelude::*;

use mmroute::mdp::{optimal_loss, RviOptions};
use mmroute::split::obs_loss_probability;
use mmroute::{bound_lbp, bound_lbr, evaluate_index_policy, solve_obs_default, Family, SystemInstance};

/// Slack allowed when re-checking dominance and bound validity.
pub const DOMINANCE_TOL: f64 = 1e-9;
/// Smallest admissible percent deviation of a policy from the optimum.
pub const DEVIATION_FLOOR: f64 = -1e-6;

/// Families compared against RB in the improvement columns, in CSV order.
pub const RB_COMPARATORS: [Family; 5] = [Family::Sq, Family::Sed, Family::Nq, Family::Fas, Family::Pi];

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub families: Vec<Family>,
    pub rvi: RviOptions<f64>,
    pub tag: String,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            rvi: RviOptions::default(),
            tag: String::new(),
        }
    }
}

/// One load point of a sweep. Values that were not computed are `None`.
#[derive(Debug, Clone, Default)]
pub struct SweepRow {
    pub tag: String,
    pub rho: f64,
    pub lambda: f64,
    pub z_op: Option<f64>,
    /// Loss probability per family, indexed like `Family::ALL`.
    pub z: [Option<f64>; 6],
    pub z_obs: Option<f64>,
    pub lb_lbr: Option<f64>,
    pub lb_lbp: Option<f64>,
    /// Largest `|throughput + loss rate − λ| / λ` over evaluated policies.
    pub conservation_error: Option<f64>,
    pub wall_op: f64,
    pub wall_obs: f64,
    pub wall: [f64; 6],
    pub error: Option<mmroute::Error>,
}

fn slot(f: Family) -> usize {
    Family::ALL.iter().position(|&g| g == f).expect("family listed in ALL")
}

impl SweepRow {
    pub fn z_of(&self, f: Family) -> Option<f64> {
        self.z[slot(f)]
    }

    pub fn deviation(&self, f: Family) -> Option<f64> {
        percent_deviation(self.z_of(f)?, self.z_op?)
    }

    pub fn improvement_of_rb(&self, f: Family) -> Option<f64> {
        rb_improvement(self.z_of(f)?, self.z_of(Family::Rb)?)
    }

    /// Dominance and bound-validity violations, empty when the row is sound.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let Some(z_op) = self.z_op else {
            return out;
        };
        for f in Family::ALL {
            if let Some(z) = self.z_of(f) {
                if z_op > z + DOMINANCE_TOL {
                    out.push(format!("z_op {z_op:e} exceeds z_{f} {z:e}"));
                }
                if let Some(d) = percent_deviation(z, z_op) {
                    if d < DEVIATION_FLOOR {
                        out.push(format!("dev_{f} {d:e} below {DEVIATION_FLOOR:e}"));
                    }
                }
            }
        }
        if let Some(z) = self.z_obs {
            if z_op > z + DOMINANCE_TOL {
                out.push(format!("z_op {z_op:e} exceeds z_obs {z:e}"));
            }
        }
        for (name, lb) in [("lbr", self.lb_lbr), ("lbp", self.lb_lbp)] {
            if let Some(lb) = lb {
                if lb > z_op + DOMINANCE_TOL {
                    out.push(format!("lb_{name} {lb:e} exceeds z_op {z_op:e}"));
                }
            }
        }
        out
    }
}

/// `100 (z − z_op) / z_op`; undefined when `z_op` is not positive.
pub fn percent_deviation(z: f64, z_op: f64) -> Option<f64> {
    (z_op > 0.0 && z.is_finite()).then(|| 100.0 * (z - z_op) / z_op)
}

/// `100 (z − z_rb) / z`: how much RB saves relative to a comparator.
pub fn rb_improvement(z: f64, z_rb: f64) -> Option<f64> {
    (z > 0.0 && z_rb.is_finite()).then(|| 100.0 * (z - z_rb) / z)
}

/// Grid `from, from + step, …` up to `to` inclusive, each point rounded to
/// ten decimals so that accumulated steps print cleanly.
pub fn rho_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from > 0.0 && to.is_finite() && step > 0.0 && to >= from) {
        bail!("invalid load grid: from {from}, to {to}, step {step}");
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((from + step * i as f64) * 1e10).round() / 1e10)
        .collect())
}

pub fn default_grid() -> Vec<f64> {
    rho_grid(0.70, 1.20, 0.05).expect("default grid is valid")
}

/// Runs every grid point, in parallel on the current rayon pool. Rows come
/// back in grid order; a failing point is kept with its error message.
pub fn run_sweep(base: &SystemInstance, grid: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        bail!("empty load grid");
    }
    if let Some(bad) = grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        bail!("load {bad} is not positive");
    }
    if opts.families.is_empty() {
        warn!("no policy families requested; sweep produces no rows");
        return Ok(Vec::new());
    }
    Ok(grid.par_iter().map(|&rho| sweep_point(base, rho, opts)).collect())
}

pub fn sweep_point(base: &SystemInstance, rho: f64, opts: &SweepOptions) -> SweepRow {
    let mut row = SweepRow {
        tag: opts.tag.clone(),
        rho,
        ..SweepRow::default()
    };
    if let Err(e) = fill_row(base, rho, opts, &mut row) {
        row.error = Some(e);
    }
    row
}

fn fill_row(base: &SystemInstance, rho: f64, opts: &SweepOptions, row: &mut SweepRow) -> mmroute::Result<()> {
    let inst = base.scale_to_nominal_load(rho)?;
    row.lambda = inst.lambda();
    row.lb_lbr = Some(bound_lbr(&inst)?);
    row.lb_lbp = Some(bound_lbp(&inst)?);

    let t = Instant::now();
    let split = solve_obs_default(&inst)?;
    row.z_obs = Some(obs_loss_probability(&inst, &split));
    row.wall_obs = t.elapsed().as_secs_f64();

    let mut worst = 0.0f64;
    for &f in &opts.families {
        let t = Instant::now();
        let eval = evaluate_index_policy(&inst, f, Some(&split))?;
        row.wall[slot(f)] = t.elapsed().as_secs_f64();
        row.z[slot(f)] = Some(eval.loss_probability);
        worst = worst.max((eval.throughput + eval.loss_rate - inst.lambda()).abs() / inst.lambda());
    }
    row.conservation_error = Some(worst);

    let t = Instant::now();
    row.z_op = Some(optimal_loss(&inst, &opts.rvi)?.z_op);
    row.wall_op = t.elapsed().as_secs_f64();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmroute::QueueParams;

    #[test]
    fn deviation_examples() {
        assert_eq!(percent_deviation(0.2, 0.2), Some(0.0));
        assert!((percent_deviation(0.3, 0.2).unwrap() - 50.0).abs() < 1e-12);
        assert!(percent_deviation(0.1, 0.2).unwrap() <= 0.0);
        assert_eq!(percent_deviation(0.1, 0.0), None);
        assert_eq!(rb_improvement(0.0, 0.0), None);
        assert!((rb_improvement(0.4, 0.3).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        let g = default_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.7);
        assert_eq!(g[3], 0.85);
        assert_eq!(g[10], 1.2);
        assert_eq!(rho_grid(0.7, 1.2, 0.1).unwrap(), vec![0.7, 0.8, 0.9, 1.0, 1.1, 1.2]);
        assert_eq!(rho_grid(1.0, 1.0, 0.1).unwrap(), vec![1.0]);
        assert!(rho_grid(0.0, 1.0, 0.1).is_err());
        assert!(rho_grid(1.0, 0.5, 0.1).is_err());
        assert!(rho_grid(0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_queue_row_has_no_spread() {
        let base = SystemInstance::at_nominal_load(1.0, vec![QueueParams::new(2, 5, 1.5).unwrap()]).unwrap();
        let rows = run_sweep(&base, &[1.0], &SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!(row.error.is_none());
        for f in Family::ALL {
            assert!(row.deviation(f).unwrap().abs() < 1e-8, "{f}");
        }
        assert!(row.violations().is_empty());
    }

    #[test]
    fn failures_stay_in_the_row() {
        let qs = (0..3).map(|_| QueueParams::new(1, 150, 1.0).unwrap()).collect();
        let base = SystemInstance::at_nominal_load(1.0, qs).unwrap();
        let rows = run_sweep(&base, &[0.9, 1.0], &SweepOptions::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| matches!(r.error, Some(mmroute::Error::Capacity(_)))));
        assert!(run_sweep(&base, &[], &SweepOptions::default()).is_err());
        let none = SweepOptions { families: vec![], ..SweepOptions::default() };
        assert!(run_sweep(&base, &[1.0], &none).unwrap().is_empty());
    }
}
