//! Post-hoc checks: mass, Pohozaev identity, Hopf constant, L¹ lower bound,
//! nondegeneracy of the bubble, barrier decay and the non-existence audit.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::Serialize;

use crate::ansatz::{log_mu_vector, z0, z1, AnsatzBundle, BubbleParams};
use crate::domain::{endpoint_nodes, lagrange, Closure, ConfigPoint, Grid, GridFunction, IntervalUnion, KappaField};
use crate::error::{Error, Result};
use crate::fracops::{circle_halflap, CircleSpectrum, DirichletSystem, PvQuadrature};
use crate::greens::GreenTable;
use crate::quad::{gauss_legendre01, integrate};
use crate::reduction::{assemble, ReductionState};

/// ε·s∫_I κ(s t) e^{u(t)} dt for u on the grid of `sys` in the variable t = x/s.
pub fn mass(u: &GridFunction, scale: f64, eps: f64, kappa: &KappaField, sys: &DirichletSystem) -> Result<f64> {
    if u.grid != *sys.grid() {
        return Err(Error::InvalidParameter("function and system grids differ".into()));
    }
    let vals: Vec<f64> = sys
        .interior
        .iter()
        .map(|&i| kappa.value(scale * u.grid.x(i)) * u.values[i].exp())
        .collect();
    let edge = sys
        .domain
        .components()
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .map(|e| kappa.value(scale * e))
        .sum::<f64>()
        / (2.0 * sys.domain.len() as f64);
    Ok(eps * scale * sys.integrate(&vals, edge))
}

/// λ = ε∫_I κ e^{u_ε} for a converged correction, computed in the expanded variable.
pub fn solution_mass(b: &AnsatzBundle, s: &ReductionState, sys: &DirichletSystem) -> f64 {
    let vals: Vec<f64> = sys.interior.iter().map(|&i| b.w.values[i] * s.phi.values[i].exp()).collect();
    let edge = sys
        .domain
        .components()
        .iter()
        .flat_map(|&(lo, hi)| [lo, hi])
        .map(|e| b.kappa.value(b.eps * e))
        .sum::<f64>()
        / (2.0 * sys.domain.len() as f64);
    sys.integrate(&vals, b.eps * b.eps * edge)
}

/// Deformation kernel of Υ(t) = max(t, 0).
pub fn pohozaev_kernel(x: f64, y: f64) -> Result<f64> {
    if x == y {
        return Err(Error::Singular(format!("kernel at the diagonal x = y = {x}")));
    }
    if x * y >= 0.0 {
        return Ok(0.0);
    }
    let d = x - y;
    Ok((1.0 - 2.0 * x.max(y) / d.abs()) / (2.0 * PI * d * d))
}

/// Interpolates a function vanishing outside the domain through its √-profile:
/// g = f/√((t−a)(b−t)) is smooth up to the endpoints of each component.
pub struct ProfileInterp<'a> {
    f: &'a GridFunction,
    ends: Vec<(usize, usize)>,
}

impl<'a> ProfileInterp<'a> {
    pub fn new(f: &'a GridFunction, dom: &IntervalUnion) -> Result<Self> {
        let ends = endpoint_nodes(&f.grid, dom)?;
        if ends.iter().any(|&(lo, hi)| hi < lo + 6) {
            return Err(Error::DomainUnresolved);
        }
        Ok(Self { f, ends })
    }

    pub fn components(&self) -> Vec<(f64, f64)> {
        let g = &self.f.grid;
        self.ends.iter().map(|&(lo, hi)| (g.x(lo), g.x(hi))).collect()
    }

    fn profile(&self, k: usize, j: usize) -> f64 {
        let g = &self.f.grid;
        let (lo, hi) = self.ends[k];
        let t = g.x(j);
        self.f.values[j] / ((t - g.x(lo)) * (g.x(hi) - t)).sqrt()
    }

    fn profile_at(&self, k: usize, t: f64) -> f64 {
        let g = &self.f.grid;
        let (lo, hi) = self.ends[k];
        let c = ((t - g.a) / g.h).floor() as usize;
        let s = c.saturating_sub(1).clamp(lo + 1, hi - 4);
        let xs: Vec<f64> = (s..s + 4).map(|j| j as f64).collect();
        let ys: Vec<f64> = (s..s + 4).map(|j| self.profile(k, j)).collect();
        lagrange(&xs, &ys, (t - g.a) / g.h)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let g = &self.f.grid;
        for (k, &(lo, hi)) in self.ends.iter().enumerate() {
            let (a, b) = (g.x(lo), g.x(hi));
            if t > a && t < b {
                return self.profile_at(k, t) * ((t - a) * (b - t)).sqrt();
            }
        }
        0.0
    }

    /// Profile value at an endpoint, extrapolated from the last interior
    /// nodes, with a flag when those nodes oscillate.
    pub fn edge_profile(&self, k: usize, right: bool) -> (f64, bool) {
        let (lo, hi) = self.ends[k];
        let idx: Vec<usize> = if right { (hi - 4..hi).rev().collect() } else { (lo + 1..lo + 5).collect() };
        let ys: Vec<f64> = idx.iter().map(|&j| self.profile(k, j)).collect();
        let xs: Vec<f64> = idx.iter().map(|&j| j as f64).collect();
        let end = if right { hi } else { lo } as f64;
        let d: Vec<f64> = ys.windows(2).map(|w| w[0] - w[1]).collect();
        let oscillating = d[0] * d[1] < 0.0 && d[1] * d[2] < 0.0;
        (lagrange(&xs[..3], &ys[..3], end), oscillating)
    }

    /// ∫ F(f(t)) dt over the components selected by `keep`, 4 Gauss points per cell.
    pub fn integrate(&self, keep: impl Fn(f64, f64) -> bool, fun: impl Fn(f64) -> f64) -> f64 {
        self.nodes(keep, 4).into_iter().map(|(_, w, v)| w * fun(v)).sum()
    }

    /// Gauss points and weights over the components selected by `keep`.
    fn nodes(&self, keep: impl Fn(f64, f64) -> bool, order: usize) -> Vec<(f64, f64, f64)> {
        let (x, w) = gauss_legendre01(order);
        let h = self.f.grid.h;
        let mut out = Vec::new();
        for (a, b) in self.components() {
            if !keep(a, b) {
                continue;
            }
            let cells = ((b - a) / h).round() as usize;
            for c in 0..cells {
                let lo = a + c as f64 * h;
                for (xi, wi) in x.iter().zip(&w) {
                    // d = h v² in the end cells absorbs the √d edge behaviour
                    let (t, wt) = if c == 0 {
                        (a + h * xi * xi, 2.0 * h * xi * wi)
                    } else if c + 1 == cells {
                        (b - h * xi * xi, 2.0 * h * xi * wi)
                    } else {
                        (lo + xi * h, wi * h)
                    };
                    out.push((t, wt, self.eval(t)));
                }
            }
        }
        out
    }
}

fn check_sign_split(dom: &IntervalUnion) -> Result<()> {
    if dom.components().iter().any(|&(a, b)| a < 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter("a component contains the origin".into()));
    }
    Ok(())
}

/// ℰ(v) = −(2/π)∫_{P}∫_{−N} v(x)v(−s)(s−x)/(x+s)³ ds dx with P, N the parts of
/// the domain right and left of the origin.
pub fn deformation_energy(v: &ProfileInterp<'_>) -> f64 {
    let pos = v.nodes(is_positive, 4);
    let neg = v.nodes(|a, b| !is_positive(a, b), 4);
    let mut s = 0.0;
    for &(x, wx, vx) in &pos {
        let mut inner = 0.0;
        for &(y, wy, vy) in &neg {
            let sv = -y;
            inner += wy * vy * (sv - x) / (x + sv).powi(3);
        }
        s += wx * vx * inner;
    }
    -2.0 / PI * s
}

/// ℰ(v) = ∬ (v(x)−v(y))² K(x,y) over ℝ², from the kernel itself: the
/// opposite-sign quadrants are summed over the support, and the parts where
/// only one factor lives in the support are integrated in closed form.
pub fn deformation_energy_kernel(v: &ProfileInterp<'_>) -> Result<f64> {
    let pos = v.nodes(is_positive, 4);
    let neg = v.nodes(|a, b| !is_positive(a, b), 4);
    let comps = v.components();
    let pos_c: Vec<(f64, f64)> = comps.iter().copied().filter(|&(a, b)| is_positive(a, b)).map(|(a, b)| (a.max(0.0), b)).collect();
    let neg_c: Vec<(f64, f64)> = comps.iter().copied().filter(|&(a, b)| !is_positive(a, b)).map(|(a, b)| ((-b).max(0.0), -a)).collect();
    // complement of a union of intervals inside (0, ∞)
    let complement = |c: &[(f64, f64)]| -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut from = 0.0;
        let mut sorted = c.to_vec();
        sorted.sort_by(|p, q| p.0.total_cmp(&q.0));
        for &(a, b) in &sorted {
            if a > from {
                out.push((from, a));
            }
            from = b;
        }
        out.push((from, f64::INFINITY));
        out
    };
    // K(x,−s) + K(−s,x) = −(1/π)(x−s)/(x+s)³
    let ds = |x: f64, s: f64| if s.is_infinite() { 0.0 } else { s / (x + s).powi(2) };
    let dx = |x: f64, s: f64| if x.is_infinite() { 0.0 } else { -x / (x + s).powi(2) };
    let mut total = 0.0;
    for &(x, wx, vx) in &pos {
        for &(y, wy, vy) in &neg {
            total += wx * wy * (vx - vy).powi(2) * (pohozaev_kernel(x, y)? + pohozaev_kernel(y, x)?);
        }
        let outside: f64 = complement(&neg_c).iter().map(|&(s1, s2)| ds(x, s2) - ds(x, s1)).sum();
        total += wx * vx * vx * (-outside / PI);
    }
    for &(y, wy, vy) in &neg {
        let s = -y;
        let outside: f64 = complement(&pos_c).iter().map(|&(x1, x2)| dx(x2, s) - dx(x1, s)).sum();
        total += wy * vy * vy * (-outside / PI);
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryTerm {
    pub endpoint: f64,
    pub upsilon: f64,
    /// lim w²/dist in the original variable, from the representation formula.
    pub limit: f64,
    /// The same limit extrapolated from the nearest nodes.
    pub extrapolated: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PohozaevReport {
    pub boundary: Vec<BoundaryTerm>,
    pub lhs: f64,
    pub volume: f64,
    pub energy: f64,
    pub residual: f64,
    pub relative_residual: f64,
    /// Nodes next to an endpoint oscillate.
    pub flagged: bool,
}

fn is_positive(a: f64, b: f64) -> bool {
    a + b > 0.0
}

/// lim u/√dist at an endpoint of component k (grid variable) for u solving
/// (−Δ)^{1/2}u = f(t, u) with zero exterior data.
///
/// The endpoint limit of the Green function of the component alone is
/// P(y) = 2√(2/r)·√((1±s)/(1∓s)); the other components enter through
/// g₀ = (1/2π)[∫_comp P f − ∫_others u (−Δ)^{1/2}P]. With y = c ± r cos θ
/// both integrands are smooth.
pub fn boundary_flux(p: &ProfileInterp<'_>, k: usize, right: bool, f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let comps = p.components();
    let (a, b) = comps[k];
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let side = if right { 1.0 } else { -1.0 };
    let y_of = |th: f64| c + side * r * th.cos();
    let pref = 2.0 * (2.0 * r).sqrt();
    let panels = ((b - a) / p.f.grid.h).round().max(16.0) as usize;
    let own = integrate(
        |th: f64| {
            let y = y_of(th);
            (1.0 + th.cos()) * f(y, p.eval(y))
        },
        0.0,
        PI,
        4,
        panels,
    );
    let others = p.nodes(|lo, hi| (lo, hi) != (a, b), 4);
    let mut cross = 0.0;
    for (y, wy, uy) in others {
        if uy == 0.0 {
            continue;
        }
        let dp = -integrate(|th: f64| (1.0 + th.cos()) / (y_of(th) - y).powi(2), 0.0, PI, 16, 16) / PI;
        cross += wy * uy * dp;
    }
    pref * (own - cross) / (2.0 * PI)
}

/// Pohozaev identity with Υ(t) = max(t,0) for (−Δ)^{1/2}w = f(w) on `dom`,
/// everything in the grid variable t = x/scale:
/// (π/4)Σ Υ ν lim w²/dist = 2∫_{t>0} F(w) − ℰ(w), F' = f, F(0) = 0.
pub fn pohozaev_general(
    w: &GridFunction,
    dom: &IntervalUnion,
    scale: f64,
    f: &dyn Fn(f64) -> f64,
    big_f: &dyn Fn(f64) -> f64,
) -> Result<PohozaevReport> {
    check_sign_split(dom)?;
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    let p = ProfileInterp::new(w, dom)?;
    let volume = 2.0 * p.integrate(is_positive, big_f);
    let energy = deformation_energy(&p);
    let mut boundary = Vec::new();
    let mut flagged = false;
    let mut lhs = 0.0;
    for (k, (a, b)) in p.components().into_iter().enumerate() {
        for (e, right) in [(a, false), (b, true)] {
            let ups = (scale * e).max(0.0);
            if ups <= 1e-12 * scale * (b - a) {
                continue;
            }
            let (g, osc) = p.edge_profile(k, right);
            flagged |= osc;
            let g0 = boundary_flux(&p, k, right, &|_, u| f(u));
            let limit = g0 * g0 / scale;
            lhs += if right { ups * limit } else { -ups * limit };
            boundary.push(BoundaryTerm { endpoint: scale * e, upsilon: ups, limit, extrapolated: g * g * (b - a) / scale });
        }
    }
    lhs *= PI / 4.0;
    let residual = lhs - (volume - energy);
    let size = lhs.abs().max(volume.abs()).max(energy.abs());
    Ok(PohozaevReport {
        boundary,
        lhs,
        volume,
        energy,
        residual,
        relative_residual: if size > 0.0 { residual.abs() / size } else { 0.0 },
        flagged,
    })
}

/// Pohozaev identity for w solving the mean-field problem
/// (−Δ)^{1/2}w = e^{λw}/∫e^{λw} on `dom` (grid variable, x = scale·t).
pub fn pohozaev_check(w: &GridFunction, lambda: f64, dom: &IntervalUnion, scale: f64) -> Result<PohozaevReport> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("λ must be positive".into()));
    }
    let p = ProfileInterp::new(w, dom)?;
    // the normalisation is scale free: both sides carry the same Jacobian
    let z = p.integrate(|_, _| true, |v| (lambda * v).exp()) + dom_gap_measure(&p, dom);
    pohozaev_general(w, dom, scale, &|v| (lambda * v).exp() / z, &|v| (lambda * v).exp_m1() / (lambda * z))
}

// The snapped components may differ from the declared ones; e^{λw} ≈ 1 there.
fn dom_gap_measure(p: &ProfileInterp<'_>, dom: &IntervalUnion) -> f64 {
    let snapped: f64 = p.components().iter().map(|(a, b)| b - a).sum();
    dom.measure() - snapped
}

/// Pohozaev check for a converged solution transplanted to mean-field form.
pub fn pohozaev_for_solution(b: &AnsatzBundle, s: &ReductionState, sys: &DirichletSystem) -> Result<PohozaevReport> {
    pohozaev_for_profile(&assemble(b, s)?, b.eps, &sys.domain)
}

/// Same check for u on the expanded grid (κ ≡ 1).
pub fn pohozaev_for_profile(u: &GridFunction, eps: f64, dom_eps: &IntervalUnion) -> Result<PohozaevReport> {
    let p = ProfileInterp::new(u, dom_eps)?;
    let lambda = eps * eps * (p.integrate(|_, _| true, f64::exp) + dom_gap_measure(&p, dom_eps));
    let w = GridFunction::new(u.grid, u.values.iter().map(|v| v / lambda).collect(), Closure::Zero)?;
    pohozaev_check(&w, lambda, dom_eps, eps)
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfReport {
    /// inf u / (‖u‖_{L¹} √min(x,1−x)) on the normalised interval; None when u ≡ 0.
    pub c0: Option<f64>,
    pub at: f64,
    pub l1: f64,
    pub superharmonic: Option<bool>,
}

/// Empirical Hopf constant of u on the component (a, b) of the grid variable.
pub fn hopf_bound_check(u: &GridFunction, a: f64, b: f64, quad: Option<&PvQuadrature>) -> Result<HopfReport> {
    let g = &u.grid;
    let (lo, hi) = (g.nearest(a), g.nearest(b));
    if hi < lo + 4 {
        return Err(Error::DomainUnresolved);
    }
    let (ta, tb) = (g.x(lo), g.x(hi));
    let nodes: Vec<usize> = (lo + 1..hi).collect();
    if nodes.iter().any(|&i| u.values[i] < 0.0) {
        return Err(Error::InvalidParameter("Hopf check needs u ≥ 0".into()));
    }
    let l1 = nodes.iter().map(|&i| u.values[i]).sum::<f64>() * g.h / (tb - ta);
    let superharmonic = match quad {
        Some(q) => {
            let stride = (nodes.len() / 40).max(1);
            let sample: Vec<usize> = nodes.iter().copied().step_by(stride).collect();
            let du = q.eval_nodes(u, &sample)?;
            let scale = du.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            Some(du.iter().all(|&v| v >= -1e-6 * scale))
        }
        None => None,
    };
    if l1 == 0.0 {
        return Ok(HopfReport { c0: None, at: f64::NAN, l1, superharmonic });
    }
    let (mut best, mut at) = (f64::INFINITY, 0.0);
    for &i in &nodes {
        let x = (g.x(i) - ta) / (tb - ta);
        let r = u.values[i] / (l1 * x.min(1.0 - x).sqrt());
        if r < best {
            best = r;
            at = x;
        }
    }
    Ok(HopfReport { c0: Some(best), at, l1, superharmonic })
}

/// ∫_I 𝒰 dx / (m log(1+δ₀)).
pub fn l1_lower_bound_check(b: &AnsatzBundle, delta0: f64) -> Result<f64> {
    if !(delta0 > 0.0) {
        return Err(Error::InvalidParameter("δ₀ must be positive".into()));
    }
    let s: f64 = b.interior.iter().map(|&i| b.big_u.values[i]).sum::<f64>() * b.grid().h * b.eps;
    Ok(s / (b.m() as f64 * (1.0 + delta0).ln()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyIdentity {
    pub name: String,
    /// 2π∫ J φ² with J = 2/(1+x²).
    pub weighted_l2: f64,
    pub circle: f64,
    pub line: f64,
    pub circle_rel_err: f64,
    pub line_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NondegeneracyReport {
    pub modes: usize,
    pub kernel_modes: Vec<i64>,
    pub lift_error: f64,
    /// Per μ: largest Fourier weight outside n = ±1 and the circle-equation residual.
    pub rescaled: Vec<(f64, f64, f64)>,
    pub energy: Vec<EnergyIdentity>,
    pub pass: bool,
}

/// x = cos θ/(1 − sin θ); θ = π/2 maps to infinity.
pub fn stereographic(theta: f64) -> f64 {
    theta.cos() / (1.0 - theta.sin())
}

fn dft(samples: &[f64]) -> Vec<Complex<f64>> {
    let n = samples.len();
    let m = (n - 1) / 2;
    (0..n)
        .map(|k| {
            let freq = k as f64 - m as f64;
            let mut c = Complex::new(0.0, 0.0);
            for (j, &v) in samples.iter().enumerate() {
                let a = -2.0 * PI * freq * j as f64 / n as f64;
                c += Complex::new(a.cos(), a.sin()) * v;
            }
            c / n as f64
        })
        .collect()
}

fn line_energy(phi: fn(f64) -> f64) -> Result<f64> {
    // 2π∫φ(−Δ)^{1/2}φ over |x| < L, extrapolated in 1/L
    let grid = Grid::new(-60.0, 60.0, 2401)?;
    let q = PvQuadrature::plain(grid);
    let f = GridFunction::from_fn(grid, phi)?;
    let nodes: Vec<usize> = (0..grid.n).filter(|&i| grid.x(i).abs() <= 40.0 + 1e-9).collect();
    let d = q.eval_nodes(&f, &nodes)?;
    let partial = |l: f64| -> f64 {
        let mut s = 0.0;
        for (k, &i) in nodes.iter().enumerate() {
            let x = grid.x(i);
            if x.abs() <= l + 1e-9 {
                let w = if (x.abs() - l).abs() < 1e-9 { 0.5 } else { 1.0 };
                s += w * f.values[i] * d[k];
            }
        }
        s * grid.h
    };
    // the truncation error is O(1/L)
    Ok(2.0 * PI * (2.0 * partial(40.0) - partial(20.0)))
}

/// Kernel of the linearised operator via the circle lift, with the energy identity.
pub fn nondegeneracy_check(mus: &[f64], modes: usize) -> Result<NondegeneracyReport> {
    if modes < 8 {
        return Err(Error::InvalidParameter("need at least 8 modes".into()));
    }
    let spec = CircleSpectrum::new(modes);
    // lifted linearised operator: |n| − 1
    let kernel_modes: Vec<i64> = (-(modes as i64)..=modes as i64)
        .filter(|&n| (spec.multiplier(n) - 1.0).abs() < 1e-12)
        .collect();

    let phi0 = |x: f64| (x * x - 1.0) / (x * x + 1.0);
    let phi1 = |x: f64| 2.0 * x / (1.0 + x * x);
    let mut lift_error = 0.0f64;
    for k in 1..200 {
        let th = -1.5 * PI + 2.0 * PI * k as f64 / 200.0;
        if (th - 0.5 * PI).abs() < 1e-3 {
            continue;
        }
        let x = stereographic(th);
        lift_error = lift_error.max((phi0(x) - th.sin()).abs()).max((phi1(x) - th.cos()).abs());
    }

    let n = 2 * modes + 1;
    let thetas: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
    let mut rescaled = Vec::new();
    for &mu in mus {
        let p = BubbleParams { mu, xi: 0.0 };
        let mut off = 0.0f64;
        let mut eq = 0.0f64;
        for z in [z0 as fn(&BubbleParams, f64) -> f64, z1] {
            // x ↦ μ·Z(μx) has the μ = 1 profile; θ = π/2 is the point at infinity
            let samples: Vec<f64> = thetas
                .iter()
                .map(|&t| {
                    if (t - 0.5 * PI).abs() < 1e-12 {
                        mu * z(&p, 1e12 * mu)
                    } else {
                        mu * z(&p, mu * stereographic(t))
                    }
                })
                .collect();
            let c = dft(&samples);
            let total: f64 = c.iter().map(|v| v.norm_sqr()).sum();
            for (k, v) in c.iter().enumerate() {
                let f = k as i64 - modes as i64;
                if f.abs() != 1 {
                    off = off.max(v.norm_sqr() / total);
                }
            }
            let d = circle_halflap(&c)?;
            eq = eq.max(d.iter().zip(&c).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        }
        rescaled.push((mu, off, eq));
    }

    let mut energy = Vec::new();
    for (name, phi) in [("phi0", phi0 as fn(f64) -> f64), ("phi1", phi1 as fn(f64) -> f64)] {
        // x = tan a turns J dx into 2 da
        let weighted_l2 = 2.0 * PI * integrate(|a: f64| 2.0 * phi(a.tan()).powi(2), -0.5 * PI, 0.5 * PI, 20, 16);
        let samples: Vec<f64> = thetas
            .iter()
            .map(|&t| if (t - 0.5 * PI).abs() < 1e-12 { phi(1e12) } else { phi(stereographic(t)) })
            .collect();
        let c = dft(&samples);
        let circle = 4.0 * PI * PI * c
            .iter()
            .enumerate()
            .map(|(k, v)| (k as f64 - modes as f64).abs() * v.norm_sqr())
            .sum::<f64>();
        let line = line_energy(phi)?;
        energy.push(EnergyIdentity {
            name: name.into(),
            weighted_l2,
            circle,
            line,
            circle_rel_err: (circle - weighted_l2).abs() / weighted_l2,
            line_rel_err: (line - weighted_l2).abs() / weighted_l2,
        });
    }
    let pass = kernel_modes == vec![-1, 1]
        && lift_error < 1e-12
        && rescaled.iter().all(|&(_, off, eq)| off < 1e-20 && eq < 1e-12)
        && energy.iter().all(|e| e.circle_rel_err < 1e-3 && e.line_rel_err < 1e-3);
    Ok(NondegeneracyReport { modes, kernel_modes, lift_error, rescaled, energy, pass })
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierReport {
    pub sigma: f64,
    pub values: Vec<(f64, f64)>,
    /// Smallest sampled radius beyond which every value is negative.
    pub r0: Option<f64>,
    pub exponent: f64,
    pub gamma_integral: f64,
    pub gamma_limit: f64,
    pub gamma_closed: f64,
    pub pass: bool,
}

/// γ(σ) = −(1/π)∫₀¹(t^{σ/2} − t^{−σ/2})² (1/(t−1)² + 1/(t+1)²) dt.
pub fn gamma_sigma(sigma: f64) -> f64 {
    // t = v^k with k(1−σ) = 2 removes the endpoint singularity
    let k = 2.0 / (1.0 - sigma);
    let f = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let t = v.powf(k);
        let a = t.powf(0.5 * sigma) - t.powf(-0.5 * sigma);
        let kern = if (1.0 - t).abs() < 1e-6 {
            // (t^{σ/2} − t^{−σ/2})/(t−1) → σ near t = 1
            let r = sigma * (1.0 - 0.5 * (t - 1.0));
            r * r + a * a / (t + 1.0).powi(2)
        } else {
            a * a / (t - 1.0).powi(2) + a * a / (t + 1.0).powi(2)
        };
        kern * k * v.powf(k - 1.0)
    };
    -integrate(f, 0.0, 1.0, 20, 32) / PI
}

/// Sign, decay and limiting constant of (−Δ)^{1/2}(1+y²)^{−σ/2}.
pub fn barrier_check(sigma: f64, radii: &[f64]) -> Result<BarrierReport> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidParameter(format!("σ = {sigma} outside (0,1)")));
    }
    let grid = Grid::new(-2000.0, 2000.0, 16001)?;
    let q = PvQuadrature::plain(grid);
    let f = GridFunction::from_fn(grid, move |y| (1.0 + y * y).powf(-0.5 * sigma))?;
    let nodes: Vec<usize> = radii.iter().map(|&r| grid.nearest(r)).collect();
    let d = q.eval_nodes(&f, &nodes)?;
    let values: Vec<(f64, f64)> = nodes.iter().zip(&d).map(|(&i, &v)| (grid.x(i), v)).collect();
    let r0 = {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
        let mut r = None;
        for (y, v) in sorted.iter().rev() {
            if *v < 0.0 {
                r = Some(y.abs());
            } else {
                break;
            }
        }
        r
    };
    let fit: Vec<(f64, f64)> = values.iter().filter(|(y, v)| y.abs() >= 20.0 && *v < 0.0).map(|&(y, v)| (y.abs(), v)).collect();
    let exponent = envelope_exponent(&fit)?;
    // y^{1+σ}Dw = γ + c·y^{σ−1} + …; eliminate the correction from two radii
    let lim_nodes = [grid.nearest(250.0), grid.nearest(500.0)];
    let dl = q.eval_nodes(&f, &lim_nodes)?;
    let (y1, y2) = (grid.x(lim_nodes[0]), grid.x(lim_nodes[1]));
    let (f1, f2) = (y1.powf(1.0 + sigma) * dl[0], y2.powf(1.0 + sigma) * dl[1]);
    let (p1, p2) = (y1.powf(1.0 - sigma), y2.powf(1.0 - sigma));
    let gamma_limit = (f2 * p2 - f1 * p1) / (p2 - p1);
    let gamma_integral = gamma_sigma(sigma);
    let gamma_closed = -sigma * (0.5 * PI * sigma).tan();
    let pass = r0.is_some()
        && (exponent + 1.0 + sigma).abs() <= 0.1
        && gamma_integral < 0.0
        && (gamma_limit / gamma_integral - 1.0).abs() < 0.05;
    Ok(BarrierReport { sigma, values, r0, exponent, gamma_integral, gamma_limit, gamma_closed, pass })
}

/// Exponent p of the envelope A·y^p + B·y^{−2}, the second term being the
/// leading far-field correction; fitted by variable projection in relative error.
pub fn envelope_exponent(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::InvalidParameter("need at least 3 radii beyond 20 for the envelope fit".into()));
    }
    let misfit = |p: f64| -> f64 {
        let mut m = nalgebra::Matrix2::zeros();
        let mut r = nalgebra::Vector2::zeros();
        for &(y, v) in pts {
            let row = nalgebra::Vector2::new(y.powf(p) / v, y.powi(-2) / v);
            m += row * row.transpose();
            r += row;
        }
        let Some(c) = m.lu().solve(&r) else { return f64::INFINITY };
        pts.iter().map(|&(y, v)| ((c[0] * y.powf(p) + c[1] * y.powi(-2)) / v - 1.0).powi(2)).sum()
    };
    let mut best = (f64::INFINITY, f64::NAN);
    for k in 0..=2500 {
        let p = -3.0 + k as f64 * 1e-3;
        // y^p collinear with y^{−2}
        if (p + 2.0).abs() < 0.05 {
            continue;
        }
        let f = misfit(p);
        if f < best.0 {
            best = (f, p);
        }
    }
    Ok(best.1)
}

/// Least-squares slope of y against x.
pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

/// J_b = (−2b−1, −2b) ∪ (0, 1).
pub fn audit_domain(b: f64) -> Result<IntervalUnion> {
    if !(b >= 1.0) {
        return Err(Error::InvalidParameter(format!("b = {b} must be at least 1")));
    }
    IntervalUnion::new(vec![(-2.0 * b - 1.0, -2.0 * b), (0.0, 1.0)])
}

/// Points that fit in one unit component at separation δ and distance δ₀ from the ends.
pub fn component_capacity(delta0: f64, delta: f64) -> usize {
    ((1.0 - 2.0 * delta0) / delta + 1e-9).floor() as usize + 1
}

/// m points alternating between the two components, evenly spread in each.
pub fn pack_points(m: usize, dom: &IntervalUnion, delta0: f64, delta: f64) -> Result<Vec<f64>> {
    let cap = component_capacity(delta0, delta);
    let d = dom.len();
    if m > d * cap {
        return Err(Error::Infeasible(d * cap));
    }
    let mut pts = Vec::with_capacity(m);
    for (k, &(a, b)) in dom.components().iter().enumerate().rev() {
        let count = m / d + usize::from(d - 1 - k < m % d);
        let pad = delta0 * (1.0 + 1e-9);
        let (lo, hi) = (a + pad, b - pad);
        for i in 0..count {
            pts.push(if count == 1 { 0.5 * (a + b) } else { lo + (hi - lo) * i as f64 / (count - 1) as f64 });
        }
    }
    Ok(pts)
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub ms: Vec<usize>,
    pub delta0: f64,
    pub delta: f64,
    /// None chooses b⋆ from the measured Hopf constant.
    pub b: Option<f64>,
    /// log₁₀ ε values; ε is only used through log ε.
    pub log10_eps: Vec<f64>,
    /// Grid spacing of the Green and torsion solves.
    pub h: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { ms: vec![], delta0: 0.1, delta: 0.02, b: None, log10_eps: vec![-30.0, -100.0, -300.0], h: 0.005 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub m: usize,
    pub log10_eps: f64,
    pub max_eps_mu: f64,
    pub concentrated: bool,
    pub lambda: f64,
    pub lambda_in_band: bool,
    pub l1_domain: f64,
    pub l1_right: f64,
    pub c0: f64,
    pub l1_ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub contradiction: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub b: f64,
    pub c0: f64,
    pub c1: f64,
    pub m_star_formula: f64,
    pub feasible_max: usize,
    pub rows: Vec<AuditRow>,
    pub crossover: Option<usize>,
    pub extrapolated_crossover: Option<f64>,
}

struct AuditGeometry {
    dom: IntervalUnion,
    table: GreenTable,
    torsion: GridFunction,
    torsion_right: GridFunction,
}

impl AuditGeometry {
    fn new(b: f64, h: f64) -> Result<Self> {
        let dom = audit_domain(b)?;
        let table = GreenTable::numeric(&dom, h)?;
        let sys = table.system().ok_or(Error::Discretization)?.clone();
        let ones = vec![1.0; sys.size()];
        let right: Vec<f64> = sys.interior.iter().map(|&i| if sys.grid().x(i) > 0.0 { 1.0 } else { 0.0 }).collect();
        let torsion = sys.solve(&ones, &Closure::Zero)?.u;
        let torsion_right = sys.solve(&right, &Closure::Zero)?.u;
        Ok(Self { dom, table, torsion, torsion_right })
    }

    /// ∫ 2τ(ξ + s·tan θ) dθ: the integral of τ against ε e^{u_j}.
    fn bubble_moment(&self, tau: &ProfileInterp<'_>, xi: f64, s: f64) -> f64 {
        integrate(|th: f64| 2.0 * tau.eval(xi + s * th.tan()), -0.5 * PI, 0.5 * PI, 16, 16)
    }

    fn row(&self, pts: &[f64], log_eps: f64, delta0: f64, delta: f64) -> Result<AuditRow> {
        let m = pts.len();
        let cfg = ConfigPoint::new(pts.to_vec(), delta0.min(delta));
        let log_mu = log_mu_vector(&cfg, &KappaField::default(), &self.table)?;
        let s: Vec<f64> = log_mu.iter().map(|lm| (lm + log_eps).exp()).collect();
        let max_eps_mu = s.iter().cloned().fold(0.0, f64::max);
        let sys = self.table.system().ok_or(Error::Discretization)?;
        let tau = ProfileInterp::new(&self.torsion, &sys.domain)?;
        let tau_r = ProfileInterp::new(&self.torsion_right, &sys.domain)?;
        let l1_domain: f64 = pts.iter().zip(&s).map(|(&x, &sj)| self.bubble_moment(&tau, x, sj)).sum();
        let l1_right: f64 = pts.iter().zip(&s).map(|(&x, &sj)| self.bubble_moment(&tau_r, x, sj)).sum();

        // λ: Σ_j ∫ 2 e^{R_j} dθ over the Voronoi cell of ξ_j
        let mut lambda = 0.0;
        for (j, &xj) in pts.iter().enumerate() {
            let comp = self.dom.component_of(xj).ok_or(Error::Discretization)?;
            let (a, b) = self.dom.components()[comp];
            let mut lo = a;
            let mut hi = b;
            for &xi in pts {
                if xi != xj && self.dom.component_of(xi) == Some(comp) {
                    if xi < xj {
                        lo = lo.max(0.5 * (xi + xj));
                    } else {
                        hi = hi.min(0.5 * (xi + xj));
                    }
                }
            }
            let base_h = self.table.robin(xj)?;
            let mut base_g = 0.0;
            for (i, &xi) in pts.iter().enumerate() {
                if i != j {
                    base_g += self.table.green(xj, xi)?;
                }
            }
            let r = |x: f64| -> Result<f64> {
                let mut v = self.table.regular(x, xj)? - base_h;
                for (i, &xi) in pts.iter().enumerate() {
                    if i != j {
                        v += self.table.green(x, xi)?;
                    }
                }
                Ok(v - base_g)
            };
            let (t0, t1) = (((lo - xj) / s[j]).atan(), ((hi - xj) / s[j]).atan());
            let (gx, gw) = gauss_legendre01(16);
            let panels = 16;
            let len = (t1 - t0) / panels as f64;
            for p in 0..panels {
                for (u, w) in gx.iter().zip(&gw) {
                    let th = t0 + (p as f64 + u) * len;
                    let x = (xj + s[j] * th.tan()).clamp(lo, hi);
                    let v = if x <= a || x >= b { f64::NEG_INFINITY } else { r(x)? };
                    lambda += 2.0 * w * len * v.exp();
                }
            }
        }

        // Hopf constant of 𝒰 ≈ Σ G(·, ξ_j) on (0, 1), away from the cores
        let grid = sys.grid();
        let mut c0 = f64::INFINITY;
        let l1_unit = l1_right;
        for &i in &sys.interior {
            let x = grid.x(i);
            if x <= 0.0 || pts.iter().any(|&p| (x - p).abs() < 0.25 * delta) {
                continue;
            }
            let mut u = 0.0;
            for &p in pts {
                u += self.table.green(x, p)?;
            }
            c0 = c0.min(u / (l1_unit * x.min(1.0 - x).sqrt()));
        }
        let l1_ratio = l1_domain / (m as f64 * (1.0 + delta0).ln());
        let mf = m as f64;
        Ok(AuditRow {
            m,
            log10_eps: log_eps / std::f64::consts::LN_10,
            max_eps_mu,
            concentrated: max_eps_mu < 0.05 * delta.min(delta0),
            lambda,
            lambda_in_band: lambda >= mf * PI && lambda <= 3.0 * mf * PI,
            l1_domain,
            l1_right,
            c0,
            l1_ratio,
            lhs: 0.0,
            rhs: 2.0 / lambda,
            contradiction: false,
        })
    }
}

/// Evaluates both sides of (c₀²π/32)‖w‖²_{L¹} < 2/λ for packed ansätze w = 𝒰/λ on J_b.
pub fn nonexistence_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    if !(cfg.delta0 > 0.0 && cfg.delta0 <= 0.1 && cfg.delta > 0.0 && cfg.delta <= 0.1) {
        return Err(Error::InvalidParameter("δ₀, δ must lie in (0, 0.1]".into()));
    }
    if cfg.log10_eps.is_empty() {
        return Err(Error::InvalidParameter("empty ε list".into()));
    }
    let feasible_max = 2 * component_capacity(cfg.delta0, cfg.delta);
    if cfg.ms.iter().any(|&m| m > feasible_max) {
        return Err(Error::Infeasible(feasible_max));
    }
    let mut ms: Vec<usize> = if cfg.ms.is_empty() {
        std::iter::successors(Some(1usize), |m| Some(2 * m)).take_while(|&m| m <= feasible_max).collect()
    } else {
        cfg.ms.clone()
    };
    ms.sort_unstable();
    ms.dedup();

    let rows_for = |geo: &AuditGeometry, ms: &[usize]| -> Result<Vec<AuditRow>> {
        let mut rows = Vec::new();
        for &m in ms {
            let pts = pack_points(m, &geo.dom, cfg.delta0, cfg.delta)?;
            for &l in &cfg.log10_eps {
                rows.push(geo.row(&pts, l * std::f64::consts::LN_10, cfg.delta0, cfg.delta)?);
            }
        }
        Ok(rows)
    };
    let min_c0 = |rows: &[AuditRow]| rows.iter().filter(|r| r.concentrated).map(|r| r.c0).fold(f64::INFINITY, f64::min);

    let mut b = cfg.b.unwrap_or(1.0);
    let mut geo = AuditGeometry::new(b, cfg.h)?;
    let mut rows = rows_for(&geo, &ms)?;
    if cfg.b.is_none() {
        let b_star = (2.0 * 2f64.sqrt() / (min_c0(&rows) * PI)).max(1.0);
        if b_star > b {
            b = b_star;
            geo = AuditGeometry::new(b, cfg.h)?;
            rows = rows_for(&geo, &ms)?;
        }
    }
    let c0 = min_c0(&rows);
    if !c0.is_finite() {
        return Err(Error::InvalidParameter("no concentrated configuration; lower the ε list".into()));
    }
    let c1 = rows
        .iter()
        .filter(|r| r.concentrated && r.m >= 2)
        .map(|r| r.l1_ratio)
        .fold(f64::INFINITY, f64::min);
    let close = |r: &mut AuditRow| {
        let wl1 = r.l1_domain / r.lambda;
        r.lhs = c0 * c0 * PI / 32.0 * wl1 * wl1;
        r.contradiction = r.concentrated && r.lhs >= r.rhs;
    };
    rows.iter_mut().for_each(close);
    let m_star_formula = (3.0 * (16.0 / (c0 * c1 * (1.0 + cfg.delta0).ln())).powi(2)).ceil();

    // per m, the smallest concentrated ε decides
    fn decisive(rows: &[AuditRow], m: usize) -> Option<&AuditRow> {
        rows.iter()
            .filter(|r| r.m == m && r.concentrated)
            .min_by(|a, b| a.log10_eps.total_cmp(&b.log10_eps))
    }
    let first = ms.iter().position(|&m| decisive(&rows, m).is_some_and(|r| r.contradiction));
    let crossover = match first {
        Some(0) => Some(ms[0]),
        Some(k) => {
            // bisect between the last slack and the first contradicting m
            let (mut lo, mut hi) = (ms[k - 1], ms[k]);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                let mut extra = rows_for(&geo, &[mid])?;
                extra.iter_mut().for_each(close);
                rows.extend(extra);
                if decisive(&rows, mid).is_some_and(|r| r.contradiction) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        }
        None => None,
    };
    let best: Vec<&AuditRow> = ms.iter().filter_map(|&m| decisive(&rows, m)).collect();
    let pts: Vec<(f64, f64)> = best.iter().map(|r| ((r.m as f64).ln(), (r.lhs / r.rhs).ln())).collect();
    let extrapolated_crossover = if pts.len() >= 2 {
        let k = slope(&pts);
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        (k > 0.0).then(|| (mx - my / k).exp())
    } else {
        None
    };
    Ok(AuditReport {
        b,
        c0,
        c1: if c1.is_finite() { c1 } else { f64::NAN },
        m_star_formula,
        feasible_max,
        rows,
        crossover,
        extrapolated_crossover,
    })
}
