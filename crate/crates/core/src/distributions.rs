//! Monte Carlo estimates of free path distributions.
//!
//! Every estimate reports the survivor function `t ↦ vol{p : 2ε·τ(p) > t}` on
//! a fixed grid. Sample `i` draws from its own ChaCha stream `(seed, i)`, so
//! results do not depend on how samples are spread over worker threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::{renormalization_matrix, Vec2};
use crate::surface::{SurfaceError, TranslationSurface};
use crate::trace::{CircularObstacles, HitResult, SegmentObstacles, TraceError, UnitTangentState};
use crate::Scalar;

/// Retries allowed for a single sample before giving up on it.
const MAX_RETRIES: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),
    #[error("grids differ ({left} vs {right} points or mismatched values)")]
    GridMismatch { left: usize, right: usize },
    #[error("{aborted} of {samples} samples hit a cone point (limit 0.1%)")]
    TooManyAborts { aborted: usize, samples: usize },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaMode {
    /// θ uniform on `[0, 2π)`, independently per sample.
    Uniform,
    Fixed(f64),
}

/// Uniform grid of `points` values from `lo` to `hi` inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for TGrid {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 4.0,
            points: 401,
        }
    }
}

impl TGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.lo + (self.hi - self.lo) * (i as f64) / last)
            .collect()
    }

    fn validate(&self) -> Result<(), DistError> {
        if self.points == 0
            || !self.lo.is_finite()
            || !self.hi.is_finite()
            || self.lo < 0.0
            || self.hi < self.lo
        {
            return Err(DistError::InvalidPlan(format!(
                "grid needs 0 <= lo <= hi and at least one point, got [{}, {}] x {}",
                self.lo, self.hi, self.points
            )));
        }
        if self.points > 1 && self.hi == self.lo {
            return Err(DistError::InvalidPlan(
                "grid with several points must have hi > lo".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub n_samples: usize,
    pub seed: u64,
    pub theta_mode: ThetaMode,
    pub epsilon: f64,
    pub grid: TGrid,
    /// Worker cap; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl SamplePlan {
    pub fn new(n_samples: usize, seed: u64, epsilon: f64) -> Self {
        Self {
            n_samples,
            seed,
            theta_mode: ThetaMode::Uniform,
            epsilon,
            grid: TGrid::default(),
            workers: None,
        }
    }

    pub fn with_theta(mut self, mode: ThetaMode) -> Self {
        self.theta_mode = mode;
        self
    }

    pub fn with_grid(mut self, grid: TGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn validate(&self) -> Result<(), DistError> {
        if self.n_samples == 0 {
            return Err(DistError::InvalidPlan("n_samples must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(TraceError::InvalidEpsilon {
                epsilon: self.epsilon,
                reason: "must be positive and finite".into(),
            }
            .into());
        }
        if let ThetaMode::Fixed(t) = self.theta_mode {
            if !t.is_finite() {
                return Err(DistError::InvalidPlan("fixed theta must be finite".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(DistError::InvalidPlan(
                "worker count must be positive".into(),
            ));
        }
        self.grid.validate()
    }

    /// Flow time cap: a censored path's scaled time lies beyond the grid.
    fn t_max(&self) -> f64 {
        (self.grid.hi + 1.0) / (2.0 * self.epsilon)
    }
}

/// Survivor function estimate on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCCDF {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    pub n_censored: usize,
    pub n_aborted: usize,
}

impl EmpiricalCCDF {
    /// Builds the estimate from scaled times (`+∞` for censored samples).
    pub fn from_times(grid: &[f64], times: &[f64], n_aborted: usize) -> Self {
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let nf = n as f64;
        let values: Vec<f64> = grid
            .iter()
            .map(|&t| (n - sorted.partition_point(|&x| x <= t)) as f64 / nf)
            .collect();
        let stderr = values
            .iter()
            .map(|&v| (v * (1.0 - v) / nf).sqrt())
            .collect();
        Self {
            grid: grid.to_vec(),
            values,
            stderr,
            n_samples: n,
            n_censored: times.iter().filter(|t| t.is_infinite()).count(),
            n_aborted,
        }
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().copied().fold(0.0, f64::max)
    }
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// `max_t |a(t) − b(t)|` over a shared grid.
pub fn ks_distance(a: &EmpiricalCCDF, b: &EmpiricalCCDF) -> Result<f64, DistError> {
    if !same_grid(&a.grid, &b.grid) {
        return Err(DistError::GridMismatch {
            left: a.grid.len(),
            right: b.grid.len(),
        });
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// `max_t sqrt(σa(t)² + σb(t)²)`.
pub fn pooled_sigma(a: &EmpiricalCCDF, b: &EmpiricalCCDF) -> f64 {
    a.stderr
        .iter()
        .zip(&b.stderr)
        .map(|(x, y)| x.hypot(*y))
        .fold(0.0, f64::max)
}

/// Area-uniform point sampler over the polygons of a surface.
#[derive(Clone, Debug)]
pub struct AreaSampler<T> {
    triangles: Vec<(usize, [Vec2<T>; 3])>,
    cumulative: Vec<f64>,
}

impl<T: Scalar> AreaSampler<T> {
    pub fn new(surface: &TranslationSurface<T>) -> Self {
        let mut triangles = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (chart, poly) in surface.polygons().iter().enumerate() {
            for [i, j, k] in poly.triangulate() {
                let tri = [poly.vertex(i), poly.vertex(j), poly.vertex(k)];
                let area = (tri[1] - tri[0]).cross(tri[2] - tri[0]).as_f64() / 2.0;
                if area <= 0.0 {
                    continue;
                }
                acc += area;
                triangles.push((chart, tri));
                cumulative.push(acc);
            }
        }
        Self {
            triangles,
            cumulative,
        }
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec2<T>) {
        let total = *self.cumulative.last().expect("surface has positive area");
        let u = rng.random::<f64>() * total;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.triangles.len() - 1);
        let (chart, [a, b, c]) = self.triangles[idx];
        let (mut r1, mut r2) = (rng.random::<f64>(), rng.random::<f64>());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let p = a + (b - a).scale(T::lit(r1)) + (c - a).scale(T::lit(r2));
        (chart, p)
    }

    pub fn sample_state<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        mode: ThetaMode,
    ) -> UnitTangentState<T> {
        let (chart, point) = self.sample_point(rng);
        let theta = match mode {
            ThetaMode::Uniform => rng.random::<f64>() * 2.0 * PI,
            ThetaMode::Fixed(t) => t,
        };
        UnitTangentState::new(chart, point, T::lit(theta))
    }
}

/// One area-uniform point with θ uniform on `[0, 2π)`.
pub fn sample_uniform_state<T: Scalar, R: Rng + ?Sized>(
    surface: &TranslationSurface<T>,
    rng: &mut R,
) -> UnitTangentState<T> {
    AreaSampler::new(surface).sample_state(rng, ThetaMode::Uniform)
}

/// Random stream of sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Outcome of evaluating one sampled state.
enum Attempt<R> {
    Done(R),
    /// Measure-zero event; the sample is redrawn.
    Abort,
}

/// Runs `eval` on `n_samples` states, redrawing aborted ones from the same
/// stream. Returns results in index order plus the total abort count.
fn run_samples<T, R, F>(
    surface: &TranslationSurface<T>,
    plan: &SamplePlan,
    eval: F,
) -> Result<(Vec<R>, usize), DistError>
where
    T: Scalar,
    R: Send,
    F: Fn(&UnitTangentState<T>) -> Result<Attempt<R>, DistError> + Sync,
{
    let sampler = AreaSampler::new(surface);
    let one = |i: usize| -> Result<(R, u32), DistError> {
        let mut rng = sample_rng(plan.seed, i);
        for aborts in 0..=MAX_RETRIES {
            let state = sampler.sample_state(&mut rng, plan.theta_mode);
            if let Attempt::Done(r) = eval(&state)? {
                return Ok((r, aborts));
            }
        }
        Err(DistError::TooManyAborts {
            aborted: MAX_RETRIES as usize + 1,
            samples: plan.n_samples,
        })
    };
    let collect = || {
        (0..plan.n_samples)
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>, _>>()
    };
    let results = match plan.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| DistError::InvalidPlan(format!("cannot start {n} workers: {e}")))?
            .install(collect)?,
        None => collect()?,
    };
    let aborted: usize = results.iter().map(|(_, a)| *a as usize).sum();
    if aborted * 1000 > plan.n_samples {
        return Err(DistError::TooManyAborts {
            aborted,
            samples: plan.n_samples,
        });
    }
    Ok((results.into_iter().map(|(r, _)| r).collect(), aborted))
}

fn scaled(hit: HitResult<f64>, epsilon: f64) -> Option<f64> {
    hit.time_or_inf().map(|t| 2.0 * epsilon * t)
}

fn to_f64<T: Scalar>(hit: HitResult<T>) -> HitResult<f64> {
    match hit {
        HitResult::Hit(t) => HitResult::Hit(t.as_f64()),
        HitResult::Censored(t) => HitResult::Censored(t.as_f64()),
        HitResult::SingularImpact => HitResult::SingularImpact,
    }
}

/// Segment obstacles for the plan's θ, rebuilt per sample when θ varies.
enum SegmentSource<'s, T> {
    Fixed(SegmentObstacles<'s, T>),
    PerSample(&'s TranslationSurface<T>, T),
}

impl<'s, T: Scalar> SegmentSource<'s, T> {
    fn new(surface: &'s TranslationSurface<T>, plan: &SamplePlan) -> Result<Self, DistError> {
        let eps = T::lit(plan.epsilon);
        Ok(match plan.theta_mode {
            ThetaMode::Fixed(theta) => {
                SegmentSource::Fixed(SegmentObstacles::new(surface, eps, T::lit(theta))?)
            }
            ThetaMode::Uniform => SegmentSource::PerSample(surface, eps),
        })
    }

    /// `None` when the obstacle for this direction runs into a cone point.
    fn free_path(
        &self,
        state: &UnitTangentState<T>,
        t_max: T,
    ) -> Result<Option<HitResult<T>>, DistError> {
        match self {
            SegmentSource::Fixed(obs) => Ok(Some(obs.free_path(state, t_max)?)),
            SegmentSource::PerSample(surface, eps) => {
                match SegmentObstacles::new(surface, *eps, state.theta) {
                    Ok(obs) => Ok(Some(obs.free_path(state, t_max)?)),
                    Err(TraceError::InvalidEpsilon { .. }) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            }
        }
    }
}

fn ccdf_from<T: Scalar>(
    surface: &TranslationSurface<T>,
    plan: &SamplePlan,
    eval: impl Fn(&UnitTangentState<T>, T) -> Result<Option<HitResult<T>>, DistError> + Sync,
) -> Result<EmpiricalCCDF, DistError> {
    let t_max = T::lit(plan.t_max());
    let (times, aborted) = run_samples(surface, plan, |state| {
        Ok(
            match eval(state, t_max)?
                .map(to_f64)
                .and_then(|h| scaled(h, plan.epsilon))
            {
                Some(t) => Attempt::Done(t),
                None => Attempt::Abort,
            },
        )
    })?;
    Ok(EmpiricalCCDF::from_times(
        &plan.grid.values(),
        &times,
        aborted,
    ))
}

/// `F_ε`: circular obstacles of radius ε. Points inside a disc have free path 0.
#[allow(non_snake_case)]
pub fn estimate_F<T: Scalar>(
    surface: &TranslationSurface<T>,
    plan: &SamplePlan,
) -> Result<EmpiricalCCDF, DistError> {
    plan.validate()?;
    let obstacles = CircularObstacles::new(surface, T::lit(plan.epsilon))?;
    ccdf_from(surface, plan, |s, t_max| {
        Ok(Some(obstacles.free_path(s, t_max)?))
    })
}

/// `F̃_ε`: segment obstacles perpendicular to the flow, θ drawn per sample.
#[allow(non_snake_case)]
pub fn estimate_Ftilde<T: Scalar>(
    surface: &TranslationSurface<T>,
    plan: &SamplePlan,
) -> Result<EmpiricalCCDF, DistError> {
    let plan = plan.clone().with_theta(ThetaMode::Uniform);
    plan.validate()?;
    let source = SegmentSource::new(surface, &plan)?;
    ccdf_from(surface, &plan, |s, t_max| source.free_path(s, t_max))
}

/// `f̃_ε(·; θ)`: segment obstacles, fixed direction.
pub fn estimate_ftilde<T: Scalar>(
    surface: &TranslationSurface<T>,
    plan: &SamplePlan,
) -> Result<EmpiricalCCDF, DistError> {
    plan.validate()?;
    if plan.theta_mode == ThetaMode::Uniform {
        return Err(DistError::InvalidPlan(
            "estimate_ftilde needs a fixed theta".into(),
        ));
    }
    let source = SegmentSource::new(surface, plan)?;
    ccdf_from(surface, plan, |s, t_max| source.free_path(s, t_max))
}

/// Coupled comparison of circular and segment obstacles on one sample stream.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationReport {
    pub epsilon: f64,
    pub kappa: u32,
    pub circular: EmpiricalCCDF,
    pub segment: EmpiricalCCDF,
    /// `max_t |F̂_ε(t) − F̂̃_ε(t)|`.
    pub sup_gap: f64,
    /// Largest standard error of the paired difference over the grid.
    pub sigma: f64,
    /// `2κπε²`.
    pub bound: f64,
    /// `max_t` volume of points outside the discs with `2ετ > t ≥ 2ετ̃`.
    pub r10_volume: f64,
    /// `max_t` volume of points outside the discs with `2ετ ≤ t < 2ετ̃`.
    pub r01_volume: f64,
    /// Largest standard error of the R₀₁ volume estimate.
    pub r01_sigma: f64,
    /// `κπε²`.
    pub disc_volume: f64,
    /// Samples with `2ετ > 2ετ̃ + 1e-12`.
    pub domination_violations: usize,
}

impl ApproximationReport {
    pub fn gap_within_bound(&self) -> bool {
        self.sup_gap <= self.bound + 3.0 * self.sigma
    }

    pub fn r01_within_bound(&self) -> bool {
        self.r01_volume <= self.disc_volume + 3.0 * self.r01_sigma
    }
}

/// Grid indices `i` with `lo ≤ grid[i] < hi`.
fn grid_span(grid: &[f64], lo: f64, hi: f64) -> (usize, usize) {
    (
        grid.partition_point(|&t| t < lo),
        grid.partition_point(|&t| t < hi),
    )
}

fn add_span(acc: &mut [i64], (a, b): (usize, usize), v: i64) {
    if a < b {
        acc[a] += v;
        acc[b] -= v;
    }
}

fn prefix(acc: &[i64]) -> Vec<i64> {
    acc.iter()
        .scan(0i64, |s, &v| {
            *s += v;
            Some(*s)
        })
        .take(acc.len() - 1)
        .collect()
}

pub fn approximation_check<T: Scalar>(
    surface: &TranslationSurface<T>,
    plan: &SamplePlan,
) -> Result<ApproximationReport, DistError> {
    plan.validate()?;
    let eps = plan.epsilon;
    let circular = CircularObstacles::new(surface, T::lit(eps))?;
    let segments = SegmentSource::new(surface, plan)?;
    let t_max = T::lit(plan.t_max());
    let (pairs, aborted) = run_samples(surface, plan, |state| {
        let c = to_f64(circular.free_path(state, t_max)?);
        let Some(s) = segments.free_path(state, t_max)?.map(to_f64) else {
            return Ok(Attempt::Abort);
        };
        let inside = c == HitResult::Hit(0.0);
        Ok(match (scaled(c, eps), scaled(s, eps)) {
            (Some(a), Some(b)) => Attempt::Done((a, b, inside)),
            _ => Attempt::Abort,
        })
    })?;

    let grid = plan.grid.values();
    let g = grid.len();
    let n = pairs.len() as f64;
    // paired difference 1[2ετ̃ > t] − 1[2ετ > t], split by sign, and the R sets
    let mut plus = vec![0i64; g + 1];
    let mut minus = vec![0i64; g + 1];
    let mut r01 = vec![0i64; g + 1];
    let mut r10 = vec![0i64; g + 1];
    let mut violations = 0;
    for &(c, s, inside) in &pairs {
        if c > s + 1e-12 {
            violations += 1;
        }
        if c < s {
            let span = grid_span(&grid, c, s);
            add_span(&mut plus, span, 1);
            if !inside {
                add_span(&mut r01, span, 1);
            }
        } else if s < c {
            let span = grid_span(&grid, s, c);
            add_span(&mut minus, span, 1);
            if !inside {
                add_span(&mut r10, span, 1);
            }
        }
    }
    let (plus, minus, r01, r10) = (prefix(&plus), prefix(&minus), prefix(&r01), prefix(&r10));
    let mut sup_gap: f64 = 0.0;
    let mut sigma: f64 = 0.0;
    let mut r01_volume: f64 = 0.0;
    let mut r01_sigma: f64 = 0.0;
    let mut r10_volume: f64 = 0.0;
    for i in 0..g {
        let (p, m) = (plus[i] as f64 / n, minus[i] as f64 / n);
        let mean = p - m;
        sup_gap = sup_gap.max(mean.abs());
        sigma = sigma.max(((p + m - mean * mean).max(0.0) / n).sqrt());
        let v = r01[i] as f64 / n;
        r01_volume = r01_volume.max(v);
        r01_sigma = r01_sigma.max((v * (1.0 - v) / n).sqrt());
        r10_volume = r10_volume.max(r10[i] as f64 / n);
    }

    let circ_times: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let seg_times: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let kappa = surface.stratum().kappa;
    let disc_volume = kappa as f64 * PI * eps * eps;
    Ok(ApproximationReport {
        epsilon: eps,
        kappa,
        circular: EmpiricalCCDF::from_times(&grid, &circ_times, aborted),
        segment: EmpiricalCCDF::from_times(&grid, &seg_times, aborted),
        sup_gap,
        sigma,
        bound: 2.0 * disc_volume,
        r10_volume,
        r01_volume,
        r01_sigma,
        disc_volume,
        domination_violations: violations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KsRow {
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    pub distance: f64,
    pub pooled_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub estimates: Vec<EmpiricalCCDF>,
    pub rows: Vec<KsRow>,
}

impl ConvergenceReport {
    /// Each distance is at most the previous one plus three pooled standard errors.
    pub fn weakly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].distance <= w[0].distance + 3.0 * w[0].pooled_sigma.max(w[1].pooled_sigma)
        })
    }
}

/// `F̃_ε` for each ε (same seed) and KS distances between neighbours.
pub fn convergence_sweep<T: Scalar>(
    surface: &TranslationSurface<T>,
    epsilons: &[f64],
    plan: &SamplePlan,
) -> Result<ConvergenceReport, DistError> {
    if epsilons.is_empty() {
        return Err(DistError::InvalidPlan("epsilon list is empty".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DistError::InvalidPlan(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    let estimates = epsilons
        .iter()
        .map(|&e| estimate_Ftilde(surface, &plan.clone().with_epsilon(e)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for i in 1..estimates.len() {
        rows.push(KsRow {
            epsilon_a: epsilons[i - 1],
            epsilon_b: epsilons[i],
            distance: ks_distance(&estimates[i - 1], &estimates[i])?,
            pooled_sigma: pooled_sigma(&estimates[i - 1], &estimates[i]),
        });
    }
    Ok(ConvergenceReport {
        epsilons: epsilons.to_vec(),
        estimates,
        rows,
    })
}

/// Pathwise comparison of `2ε·τ̃_ε(S, p, θ)` with `τ̃_{1/2}(gS, gp, −π/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RenormalizationReport {
    pub epsilon: f64,
    pub checked: usize,
    pub censored: usize,
    pub aborted: usize,
    pub max_relative_difference: f64,
    pub failures: usize,
    pub tolerance: f64,
}

impl RenormalizationReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn renormalization_check<T: Scalar>(
    surface: &TranslationSurface<T>,
    plan: &SamplePlan,
) -> Result<RenormalizationReport, DistError> {
    plan.validate()?;
    let eps = plan.epsilon;
    let tol = 1e-9;
    let cap = plan.grid.hi + 1.0;
    let half = T::lit(0.5);
    let down = T::lit(-PI / 2.0);
    let (rows, aborted) = run_samples(surface, plan, |state| {
        let theta = state.theta;
        let g = renormalization_matrix(T::lit(eps), theta);
        let Ok(here) = SegmentObstacles::new(surface, T::lit(eps), theta) else {
            return Ok(Attempt::Abort);
        };
        let gs = surface.apply_matrix(&g)?;
        let Ok(there) = SegmentObstacles::new(&gs, half, down) else {
            return Ok(Attempt::Abort);
        };
        let a = to_f64(here.free_path(state, T::lit(cap / (2.0 * eps)))?);
        let gstate = UnitTangentState::new(state.chart, g * state.point, down);
        let b = to_f64(there.free_path(&gstate, T::lit(cap))?);
        Ok(match (scaled(a, eps), b.time_or_inf()) {
            (Some(a), Some(b)) => Attempt::Done((a, b)),
            _ => Attempt::Abort,
        })
    })?;
    let mut report = RenormalizationReport {
        epsilon: eps,
        checked: 0,
        censored: 0,
        aborted,
        max_relative_difference: 0.0,
        failures: 0,
        tolerance: tol,
    };
    for (a, b) in rows {
        match (a.is_finite(), b.is_finite()) {
            (false, false) => report.censored += 1,
            (true, true) => {
                report.checked += 1;
                let rel = (a - b).abs() / a.abs().max(1.0);
                report.max_relative_difference = report.max_relative_difference.max(rel);
                if rel > tol {
                    report.failures += 1;
                }
            }
            // one side censored: the other must sit at the cap too
            (true, false) | (false, true) => {
                let finite = if a.is_finite() { a } else { b };
                if finite < cap * (1.0 - tol) {
                    report.failures += 1;
                    report.max_relative_difference = f64::INFINITY;
                } else {
                    report.censored += 1;
                }
            }
        }
    }
    Ok(report)
}
