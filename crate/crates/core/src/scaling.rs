//! Demand-scaling experiments.
//!
//! A sweep fixes the OD shares and varies total demand `T`. Each point
//! solves both programs and records the price of anarchy, the normalized
//! costs `C / T^(beta+1)` and how far the optimum is from being an
//! equilibrium. The helpers below turn a sweep into asymptotic summaries:
//! a log-log decay slope, a saturation point and the cost of the limit game
//! obtained by dividing costs by `T^beta`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::cost::{CostError, CostSpec, LimitForm};
use crate::metrics::{self, solve_pair};
use crate::network::{ArcId, Distribution, FlowProfile, Instance, ModelError};
use crate::solver::{self, Objective, SolveError, SolveOptions, SolveResult};

/// Noise filter multiplier on the sum of relative gaps.
pub const NOISE_GAP_FACTOR: f64 = 10.0;
/// Smallest `poa - 1` treated as signal regardless of reported gaps; f64
/// rounding of two costs of similar size sits a few ulps below this.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("arc {0} has a divergent limit price at this scaling exponent")]
    DivergentArc(ArcId),
    #[error("only {found} points above the noise floor, need {needed}")]
    TooFewValidPoints { found: usize, needed: usize },
    #[error("invalid grid specification: {0}")]
    BadGrid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub distribution: Distribution,
    pub t_values: Vec<f64>,
    pub options: SolveOptions,
    pub beta_ref: f64,
}

impl SweepSpec {
    fn check(&self, instance: &Instance) -> Result<(), ScalingError> {
        if self.distribution.len() != instance.od_pairs.len() {
            return Err(ModelError::DimensionMismatch {
                expected: instance.od_pairs.len(),
                got: self.distribution.len(),
            }
            .into());
        }
        if self.t_values.is_empty() {
            return Err(ScalingError::InvalidSweep("no demand levels".into()));
        }
        if self.t_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(ScalingError::InvalidSweep("demand levels must be positive".into()));
        }
        if self.t_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ScalingError::InvalidSweep(
                "demand levels must be strictly increasing".into(),
            ));
        }
        if !self.beta_ref.is_finite() || self.beta_ref < 0.0 {
            return Err(ScalingError::InvalidSweep("beta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Metrics at one demand level.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t: f64,
    pub c_ne: f64,
    pub c_so: f64,
    pub poa: f64,
    pub ratio_ne: f64,
    pub ratio_so: f64,
    pub eps_so: f64,
    pub ne_gap: f64,
    pub so_gap: f64,
    /// Set when a solve failed or did not converge at this level.
    pub flag: Option<String>,
}

impl SweepRow {
    fn failed(t: f64, why: String) -> Self {
        Self {
            t,
            c_ne: f64::NAN,
            c_so: f64::NAN,
            poa: f64::NAN,
            ratio_ne: f64::NAN,
            ratio_so: f64::NAN,
            eps_so: f64::NAN,
            ne_gap: f64::NAN,
            so_gap: f64::NAN,
            flag: Some(why),
        }
    }

    /// `poa - 1` when it clears the solver-noise filter.
    pub fn excess_above_noise(&self) -> Option<f64> {
        let excess = self.poa - 1.0;
        let noise = (NOISE_GAP_FACTOR * (self.ne_gap.max(0.0) + self.so_gap.max(0.0))).max(NOISE_FLOOR);
        (excess.is_finite() && excess > noise).then_some(excess)
    }
}

/// One sweep level with both solved profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub row: SweepRow,
    pub ne: Option<SolveResult>,
    pub so: Option<SolveResult>,
}

fn sweep_point(instance: &Instance, spec: &SweepSpec, t: f64) -> SweepPoint {
    let scaled = match instance.scale(&spec.distribution, t) {
        Ok(s) => s,
        Err(e) => {
            return SweepPoint {
                row: SweepRow::failed(t, e.to_string()),
                ne: None,
                so: None,
            }
        }
    };
    let (ne, so) = match solve_pair(&scaled, &spec.options) {
        Ok(pair) => pair,
        Err(e) => {
            return SweepPoint {
                row: SweepRow::failed(t, e.to_string()),
                ne: None,
                so: None,
            }
        }
    };
    let eps_so = metrics::epsilon_of_profile(&scaled, &so.profile, None).unwrap_or(f64::NAN);
    let norm = t.powf(spec.beta_ref + 1.0);
    let flag = match (ne.converged, so.converged) {
        (true, true) => None,
        (false, true) => Some("equilibrium solve did not converge".to_string()),
        (true, false) => Some("optimum solve did not converge".to_string()),
        (false, false) => Some("neither solve converged".to_string()),
    };
    let report = metrics::report_from(&ne, &so);
    SweepPoint {
        row: SweepRow {
            t,
            c_ne: report.c_ne,
            c_so: report.c_so,
            poa: report.poa,
            ratio_ne: report.c_ne / norm,
            ratio_so: report.c_so / norm,
            eps_so,
            ne_gap: report.ne_gap,
            so_gap: report.so_gap,
            flag,
        },
        ne: Some(ne),
        so: Some(so),
    }
}

/// Runs every demand level, on `jobs` worker threads when `jobs > 1`.
/// Points come back in `t` order.
pub fn run_sweep_detailed(
    instance: &Instance,
    spec: &SweepSpec,
    jobs: usize,
) -> Result<Vec<SweepPoint>, ScalingError> {
    spec.check(instance)?;
    if jobs <= 1 {
        return Ok(spec.t_values.iter().map(|&t| sweep_point(instance, spec, t)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ScalingError::InvalidSweep(e.to_string()))?;
    Ok(pool.install(|| {
        spec.t_values
            .par_iter()
            .map(|&t| sweep_point(instance, spec, t))
            .collect()
    }))
}

pub fn run_sweep(instance: &Instance, spec: &SweepSpec) -> Result<Vec<SweepRow>, ScalingError> {
    Ok(run_sweep_detailed(instance, spec, 1)?
        .into_iter()
        .map(|p| p.row)
        .collect())
}

/// Exact price of anarchy of the two-arc network with costs `x^beta` and `1`
/// at demand `t`.
pub fn pigou_poa(beta: f64, t: f64) -> f64 {
    let x_star = (beta + 1.0).powf(-1.0 / beta);
    let c_ne = if t <= 1.0 { t.powf(beta + 1.0) } else { t };
    let c_so = if t <= x_star {
        t.powf(beta + 1.0)
    } else {
        t - x_star * beta / (beta + 1.0)
    };
    c_ne / c_so
}

/// The widely quoted closed form `T / (T - (beta+1)^(-1/beta) + (beta+1)^(-1))`.
/// It drops a factor `(beta+1)^(-1/beta)` from the last term and returns 1
/// at `beta = 1, T = 1`; kept only to flag the discrepancy.
pub fn pigou_poa_quoted(beta: f64, t: f64) -> f64 {
    t / (t - (beta + 1.0).powf(-1.0 / beta) + 1.0 / (beta + 1.0))
}

/// Game with monomial costs `gamma_a x^beta` and demands equal to the shares.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitGame {
    pub instance: Instance,
    pub beta: f64,
}

pub fn build_limit_game(
    instance: &Instance,
    distribution: &Distribution,
    beta_ref: f64,
) -> Result<LimitGame, ScalingError> {
    let mut limit = instance.scale(distribution, 1.0)?;
    for arc in &mut limit.network.arcs {
        let gamma = match arc.cost.limit_cost(beta_ref)? {
            LimitForm::Finite(l) => l.gamma,
            LimitForm::Vanishing => 0.0,
            LimitForm::Divergent => return Err(ScalingError::DivergentArc(arc.id)),
        };
        arc.cost = CostSpec::monomial(gamma, beta_ref);
    }
    Ok(LimitGame {
        instance: limit,
        beta: beta_ref,
    })
}

/// Equilibrium cost `L` of the limit game, the asymptotic value of
/// `C / T^(beta+1)`.
pub fn limit_ratio(
    instance: &Instance,
    distribution: &Distribution,
    beta_ref: f64,
    options: &SolveOptions,
) -> Result<f64, ScalingError> {
    let game = build_limit_game(instance, distribution, beta_ref)?;
    let opts = options.clone().with_objective(Objective::UserEquilibrium);
    Ok(solver::solve(&game.instance, &opts)?.social_cost)
}

/// Least-squares slope of `ln(poa - 1)` against `ln t` over the last
/// `tail_fraction` of the rows, skipping rows inside the noise band.
pub fn decay_exponent(rows: &[SweepRow], tail_fraction: f64) -> Result<f64, ScalingError> {
    const NEEDED: usize = 4;
    let frac = tail_fraction.clamp(0.0, 1.0);
    let take = ((rows.len() as f64) * frac).ceil() as usize;
    let pts: Vec<(f64, f64)> = rows[rows.len() - take..]
        .iter()
        .filter_map(|r| r.excess_above_noise().map(|e| (r.t.ln(), e.ln())))
        .collect();
    if pts.len() < NEEDED {
        return Err(ScalingError::TooFewValidPoints {
            found: pts.len(),
            needed: NEEDED,
        });
    }
    Ok(least_squares_slope(&pts))
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Smallest `t` from which every row has `poa <= 1 + tol`.
pub fn saturation_point(rows: &[SweepRow], tol: f64) -> Option<f64> {
    let mut found = None;
    for r in rows.iter().rev() {
        if r.poa <= 1.0 + tol {
            found = Some(r.t);
        } else {
            break;
        }
    }
    found
}

/// `max_s |f_ne(s) - f_so(s)| / t` over the union of registered paths.
pub fn distribution_gap(ne: &FlowProfile, so: &FlowProfile, t: f64) -> f64 {
    let mut union: BTreeMap<(usize, &[ArcId]), (f64, f64)> = BTreeMap::new();
    for p in &ne.paths {
        union.entry((p.od, &p.arcs)).or_default().0 += p.flow;
    }
    for p in &so.paths {
        union.entry((p.od, &p.arcs)).or_default().1 += p.flow;
    }
    union
        .values()
        .map(|(a, b)| (a / t - b / t).abs())
        .fold(0.0, f64::max)
}

/// Rows with `t` in the last decade `[t_max / 10, t_max]`.
pub fn top_decade(rows: &[SweepRow]) -> &[SweepRow] {
    let Some(last) = rows.last() else {
        return rows;
    };
    let cutoff = last.t / 10.0 * (1.0 - 1e-12);
    let start = rows.iter().position(|r| r.t >= cutoff).unwrap_or(rows.len());
    &rows[start..]
}

/// `max / min` of a positive sequence; `None` for fewer than two values or
/// non-positive entries.
pub fn spread(values: &[f64]) -> Option<f64> {
    if values.len() < 2 || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return None;
    }
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    Some(max / min)
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, ScalingError> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || n < 2 {
        return Err(ScalingError::BadGrid(format!("log grid {lo}..{hi} with {n} points")));
    }
    let (a, b) = (lo.log10(), hi.log10());
    let mut pts: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect();
    pts[0] = lo;
    pts[n - 1] = hi;
    Ok(pts)
}

/// Log grid with `per_decade` points per factor of ten.
pub fn decade_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>, ScalingError> {
    if !(lo > 0.0 && hi > lo) || per_decade == 0 {
        return Err(ScalingError::BadGrid(format!("decade grid {lo}..{hi}")));
    }
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round() as usize + 1;
    log_grid(lo, hi, n.max(2))
}

/// Parses `log:<lo>:<hi>:<n>` or a comma-separated list of levels.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, ScalingError> {
    let bad = || ScalingError::BadGrid(text.to_string());
    if let Some(rest) = text.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        return log_grid(lo, hi, n);
    }
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<f64>, _>>()?;
    if values.is_empty() || values.windows(2).any(|w| w[1] <= w[0]) || values[0] <= 0.0 {
        return Err(bad());
    }
    Ok(values)
}
