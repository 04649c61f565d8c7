//! The four-parameter generalized beta distribution on `(0, 1)`:
//!
//! ```text
//! f(x) = x^{φ2-1} (1-x)^{φ3-1} (1-λx)^{-φ1} / [B(φ2, φ3) 2F1(φ2, φ1; φ2+φ3; λ)]
//! ```

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numkernel::dist::brent;
use crate::numkernel::hyp2f1::kernel_spec;
use crate::numkernel::rng::sample_uniform;
use crate::numkernel::{log_2f1, log_beta, log_sum_exp, EulerKernel, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G4BParams {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
    pub lambda: f64,
}

impl G4BParams {
    pub fn new(phi1: f64, phi2: f64, phi3: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            phi1,
            phi2,
            phi3,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi1.is_finite() && self.phi1 >= 0.0) {
            return Err(domain(format!("phi1 must be finite and >= 0, got {}", self.phi1)));
        }
        if !(self.phi2.is_finite() && self.phi2 > 0.0) {
            return Err(domain(format!("phi2 must be > 0, got {}", self.phi2)));
        }
        if !(self.phi3.is_finite() && self.phi3 > 0.0) {
            return Err(domain(format!("phi3 must be > 0, got {}", self.phi3)));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(domain(format!("lambda must lie in [0, 1), got {}", self.lambda)));
        }
        Ok(())
    }

    fn kernel(&self) -> EulerKernel {
        EulerKernel {
            a: self.phi2,
            beta: self.phi3,
            b: self.phi1,
            z: self.lambda,
        }
    }

    /// `ln [B(φ2, φ3) 2F1(φ2, φ1; φ2+φ3; λ)]`.
    pub fn log_normalizer(&self) -> Result<f64> {
        self.validate()?;
        Ok(log_beta(self.phi2, self.phi3)? + log_2f1(self.phi2, self.phi1, self.phi2 + self.phi3, self.lambda)?)
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        G4B::new(*self)?.log_pdf(x)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        G4B::new(*self)?.cdf(x)
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        G4B::new(*self)?.quantile(q)
    }

    pub fn mean(&self) -> Result<f64> {
        self.validate()?;
        let (a, c) = (self.phi2, self.phi2 + self.phi3);
        let ratio = log_2f1(a + 1.0, self.phi1, c + 1.0, self.lambda)? - log_2f1(a, self.phi1, c, self.lambda)?;
        Ok(a / c * ratio.exp())
    }

    pub fn sampler(&self) -> Result<G4BSampler> {
        G4BSampler::new(*self)
    }

    /// One draw. Builds the interpolation table each call; keep a
    /// [`G4BSampler`] around for repeated sampling.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(self.sampler()?.sample(rng))
    }
}

/// A G4B distribution with its normalizing constant evaluated once.
#[derive(Debug, Clone, Copy)]
pub struct G4B {
    params: G4BParams,
    kernel: EulerKernel,
    log_norm: f64,
}

impl G4B {
    pub fn new(params: G4BParams) -> Result<Self> {
        let log_norm = params.log_normalizer()?;
        Ok(Self {
            params,
            kernel: params.kernel(),
            log_norm,
        })
    }

    pub fn params(&self) -> &G4BParams {
        &self.params
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(domain(format!("G4B density needs x in (0, 1), got {x}")));
        }
        Ok(self.kernel.log_value(x) - self.log_norm)
    }

    fn spec(&self) -> QuadratureSpec {
        kernel_spec()
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(domain("G4B cdf at NaN"));
        }
        if x <= 0.0 {
            return Ok(0.0);
        }
        if x >= 1.0 {
            return Ok(1.0);
        }
        let spec = self.spec();
        let lower = (self.kernel.log_integral(0.0, x, &spec)? - self.log_norm).exp();
        if lower <= 0.5 {
            return Ok(lower.min(1.0));
        }
        let upper = (self.kernel.log_integral(x, 1.0, &spec)? - self.log_norm).exp();
        Ok((1.0 - upper).clamp(0.0, 1.0))
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(domain(format!("quantile level must lie in (0, 1), got {q}")));
        }
        let mut failure = None;
        let x = brent(
            |x| match self.cdf(x) {
                Ok(c) => c - q,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            1.0,
            1e-15,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(x)
    }

    pub fn mean(&self) -> Result<f64> {
        self.params.mean()
    }
}

const SAMPLER_NODES: usize = 512;
const MASS_PHASE_NODES: usize = 384;
const INITIAL_CELLS: usize = 16;
const INTERP_TOL: f64 = 1e-6;

// Coordinate the inverse CDF is interpolated in. End cells use the power
// transforms under which the endpoint singularity of the density disappears.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Left,
    Plain,
    Right,
}

#[derive(Debug, Clone)]
struct Cell {
    lo: f64,
    hi: f64,
    log_mass: f64,
}

#[derive(Debug)]
struct Ranked(f64, usize);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        // larger key first, then the earlier cell for a deterministic order
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

#[derive(Debug, Clone)]
struct Segment {
    x_lo: f64,
    x_hi: f64,
    u_lo: f64,
    mass: f64,
    log_mass: f64,
    coord: Coord,
    s_lo: f64,
    s_hi: f64,
    d_lo: f64,
    d_hi: f64,
    exact: bool,
}

impl Segment {
    fn build(p: &G4BParams, cell: &Cell, coord: Coord, log_total: f64) -> Self {
        Segment {
            x_lo: cell.lo,
            x_hi: cell.hi,
            u_lo: 0.0,
            mass: (cell.log_mass - log_total).exp(),
            log_mass: cell.log_mass,
            coord,
            s_lo: to_coord(p, coord, cell.lo),
            s_hi: to_coord(p, coord, cell.hi),
            d_lo: slope(p, coord, cell.lo, log_total),
            d_hi: slope(p, coord, cell.hi, log_total),
            exact: false,
        }
    }
}

/// Cached inverse-CDF sampler: monotone cubic Hermite interpolation of the
/// quantile function over a mass-adaptive grid, with exact inversion in any
/// cell whose interpolant cannot be certified.
#[derive(Debug, Clone)]
pub struct G4BSampler {
    dist: G4B,
    segments: Vec<Segment>,
    // cumulative probability at each segment's right edge
    upper: Vec<f64>,
}

struct GridBuilder<'a> {
    params: G4BParams,
    kernel: EulerKernel,
    spec: &'a QuadratureSpec,
    log_total: f64,
    cells: Vec<Cell>,
    alive: Vec<bool>,
}

impl GridBuilder<'_> {
    fn push(&mut self, lo: f64, hi: f64) -> Result<usize> {
        let log_mass = self.kernel.log_integral(lo, hi, self.spec)?;
        self.cells.push(Cell { lo, hi, log_mass });
        self.alive.push(true);
        Ok(self.cells.len() - 1)
    }

    fn split(&mut self, idx: usize) -> Result<Option<[usize; 2]>> {
        let (lo, hi) = (self.cells[idx].lo, self.cells[idx].hi);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Ok(None);
        }
        self.alive[idx] = false;
        Ok(Some([self.push(lo, mid)?, self.push(mid, hi)?]))
    }

    fn coord_of(&self, c: &Cell) -> Coord {
        if c.lo == 0.0 {
            Coord::Left
        } else if c.hi == 1.0 {
            Coord::Right
        } else {
            Coord::Plain
        }
    }

    /// Interpolation error of the cell in probability units; infinite when
    /// the interpolant is not monotone.
    fn error(&self, idx: usize) -> Result<f64> {
        let c = &self.cells[idx];
        let seg = Segment::build(&self.params, c, self.coord_of(c), self.log_total);
        interp_error(&self.params, &self.kernel, self.spec, &seg)
    }
}

impl G4BSampler {
    pub fn new(params: G4BParams) -> Result<Self> {
        let dist = G4B::new(params)?;
        let spec = dist.spec();
        let mut b = GridBuilder {
            params,
            kernel: dist.kernel,
            spec: &spec,
            log_total: dist.log_norm,
            cells: Vec::with_capacity(2 * SAMPLER_NODES),
            alive: Vec::with_capacity(2 * SAMPLER_NODES),
        };
        for k in 0..INITIAL_CELLS {
            b.push(k as f64 / INITIAL_CELLS as f64, (k + 1) as f64 / INITIAL_CELLS as f64)?;
        }
        let mut n_cells = INITIAL_CELLS;

        // mass phase: split the heaviest cell
        let mut heap: BinaryHeap<Ranked> = (0..n_cells).map(|i| Ranked(b.cells[i].log_mass, i)).collect();
        while n_cells + 1 < MASS_PHASE_NODES {
            let Some(Ranked(_, idx)) = heap.pop() else { break };
            if let Some(children) = b.split(idx)? {
                for c in children {
                    heap.push(Ranked(b.cells[c].log_mass, c));
                }
                n_cells += 1;
            }
        }

        // error phase: split the worst interpolated cell
        let mut heap = BinaryHeap::new();
        for i in 0..b.cells.len() {
            if b.alive[i] {
                heap.push(Ranked(b.error(i)?, i));
            }
        }
        while n_cells + 1 < SAMPLER_NODES {
            let Some(Ranked(err, idx)) = heap.pop() else { break };
            if err <= 0.0 {
                break;
            }
            if let Some(children) = b.split(idx)? {
                for c in children {
                    heap.push(Ranked(b.error(c)?, c));
                }
                n_cells += 1;
            }
        }

        let mut grid: Vec<(Cell, f64)> = Vec::with_capacity(n_cells);
        for Ranked(err, idx) in heap {
            if b.alive[idx] {
                grid.push((b.cells[idx].clone(), err));
            }
        }
        grid.sort_by(|a, b| a.0.lo.total_cmp(&b.0.lo));

        let log_total = log_sum_exp(&grid.iter().map(|(c, _)| c.log_mass).collect::<Vec<_>>());
        let mut segments = Vec::with_capacity(grid.len());
        let mut upper = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        for (c, err) in &grid {
            let mut seg = Segment::build(&params, c, b.coord_of(c), log_total);
            seg.u_lo = acc;
            seg.exact = !(*err <= INTERP_TOL);
            acc += seg.mass;
            segments.push(seg);
            upper.push(acc);
        }
        // absorb the rounding in the running sum
        if let Some(u) = upper.last_mut() {
            *u = 1.0;
        }
        Ok(Self {
            dist,
            segments,
            upper,
        })
    }

    pub fn params(&self) -> &G4BParams {
        &self.dist.params
    }

    /// Number of grid cells.
    pub fn cells(&self) -> usize {
        self.segments.len()
    }

    /// Number of grid cells that fall back to exact inversion.
    pub fn exact_cells(&self) -> usize {
        self.segments.iter().filter(|s| s.exact).count()
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.invert(sample_uniform(rng))
    }

    /// Quantile through the cached table, `u ∈ (0, 1)`.
    pub fn invert(&self, u: f64) -> f64 {
        let idx = self.upper.partition_point(|&c| c < u).min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        let t = if seg.mass > 0.0 {
            ((u - seg.u_lo) / seg.mass).clamp(0.0, 1.0)
        } else {
            0.5
        };
        if seg.exact {
            if let Ok(x) = self.exact_inverse(seg, t) {
                return x;
            }
        }
        hermite_inverse(&self.dist.params, seg, t)
    }

    fn exact_inverse(&self, seg: &Segment, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(seg.x_lo);
        }
        if t >= 1.0 {
            return Ok(seg.x_hi);
        }
        let spec = self.dist.spec();
        let kernel = self.dist.kernel;
        let target = t.ln() + seg.log_mass;
        brent(
            |x| {
                if x <= seg.x_lo {
                    return -1.0;
                }
                match kernel.log_integral(seg.x_lo, x, &spec) {
                    Ok(v) => (v - target).exp_m1(),
                    Err(_) => f64::NAN,
                }
            },
            seg.x_lo,
            seg.x_hi,
            1e-15,
        )
    }
}

fn to_coord(p: &G4BParams, coord: Coord, x: f64) -> f64 {
    match coord {
        Coord::Plain => x,
        Coord::Left => x.powf(p.phi2),
        Coord::Right => (1.0 - x).powf(p.phi3),
    }
}

fn from_coord(p: &G4BParams, coord: Coord, s: f64) -> f64 {
    match coord {
        Coord::Plain => s,
        Coord::Left => s.max(0.0).powf(1.0 / p.phi2),
        Coord::Right => 1.0 - s.max(0.0).powf(1.0 / p.phi3),
    }
}

// ds/du at x, where u is the CDF and s the interpolation coordinate
fn slope(p: &G4BParams, coord: Coord, x: f64, log_total: f64) -> f64 {
    let log1m_lx = (-p.lambda * x).ln_1p();
    match coord {
        Coord::Plain => {
            let log_k = (p.phi2 - 1.0) * x.ln() + (p.phi3 - 1.0) * (-x).ln_1p() - p.phi1 * log1m_lx;
            (log_total - log_k).exp()
        }
        Coord::Left => {
            // s = x^{φ2}: the x^{φ2-1} factor cancels
            let log_g = (p.phi3 - 1.0) * (-x).ln_1p() - p.phi1 * log1m_lx;
            p.phi2 * (log_total - log_g).exp()
        }
        Coord::Right => {
            let log_h = (p.phi2 - 1.0) * x.ln() - p.phi1 * log1m_lx;
            -p.phi3 * (log_total - log_h).exp()
        }
    }
}

fn hermite_eval(seg: &Segment, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * seg.s_lo + h10 * seg.mass * seg.d_lo + h01 * seg.s_hi + h11 * seg.mass * seg.d_hi
}

fn hermite_inverse(p: &G4BParams, seg: &Segment, t: f64) -> f64 {
    let s = hermite_eval(seg, t);
    from_coord(p, seg.coord, s).clamp(seg.x_lo, seg.x_hi)
}

// Fritsch–Carlson monotonicity, then the midpoint error converted to
// probability units through the local slope.
fn interp_error(p: &G4BParams, kernel: &EulerKernel, spec: &QuadratureSpec, seg: &Segment) -> Result<f64> {
    if !(seg.mass > 0.0) {
        return Ok(0.0);
    }
    if !seg.d_lo.is_finite() || !seg.d_hi.is_finite() {
        return Ok(f64::INFINITY);
    }
    let secant = (seg.s_hi - seg.s_lo) / seg.mass;
    if secant == 0.0 || !secant.is_finite() {
        return Ok(f64::INFINITY);
    }
    let alpha = seg.d_lo / secant;
    let beta = seg.d_hi / secant;
    if alpha < 0.0 || beta < 0.0 || alpha * alpha + beta * beta > 9.0 {
        return Ok(f64::INFINITY);
    }
    let mid = 0.5 * (seg.x_lo + seg.x_hi);
    if !(mid > seg.x_lo && mid < seg.x_hi) {
        return Ok(0.0);
    }
    let t = (kernel.log_integral(seg.x_lo, mid, spec)? - seg.log_mass).exp();
    let s_err = (hermite_eval(seg, t) - to_coord(p, seg.coord, mid)).abs();
    let log_total = seg.log_mass - seg.mass.ln();
    let d_mid = slope(p, seg.coord, mid, log_total).abs();
    let err = s_err / d_mid;
    Ok(if err.is_nan() { f64::INFINITY } else { err })
}
