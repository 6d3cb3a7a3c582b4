//! Bubbles, boundary correctors and the approximate solution in the expanded
//! variable y = x/ε.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{expand_domain, Closure, ConfigPoint, Grid, GridFunction, IntervalUnion, KappaField};
use crate::error::{Error, Result};
use crate::fracops::DirichletSystem;
use crate::greens::GreenTable;

/// Largest |φ| accepted by the nonlinearity.
pub const PHI_OVERFLOW: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleParams {
    pub mu: f64,
    pub xi: f64,
}

/// log(2μ/(μ² + (x−ξ)²)).
pub fn bubble(p: &BubbleParams, x: f64) -> f64 {
    (2.0 * p.mu / (p.mu * p.mu + (x - p.xi).powi(2))).ln()
}

/// e^{bubble} = 2μ/(μ² + (x−ξ)²).
pub fn bubble_density(p: &BubbleParams, x: f64) -> f64 {
    2.0 * p.mu / (p.mu * p.mu + (x - p.xi).powi(2))
}

/// ∂_μ of the bubble.
pub fn z0(p: &BubbleParams, x: f64) -> f64 {
    let r2 = (x - p.xi).powi(2);
    (r2 - p.mu * p.mu) / (p.mu * (p.mu * p.mu + r2))
}

/// ∂_ξ of the bubble.
pub fn z1(p: &BubbleParams, x: f64) -> f64 {
    let r = x - p.xi;
    2.0 * r / (p.mu * p.mu + r * r)
}

/// μ_j = ½ exp(log κ(ξ_j) + H(ξ_j,ξ_j) + Σ_{i≠j} G(ξ_j,ξ_i)).
pub fn mu_vector(xi: &ConfigPoint, kappa: &KappaField, gt: &GreenTable) -> Result<Vec<f64>> {
    log_mu_vector(xi, kappa, gt).map(|v| v.into_iter().map(f64::exp).collect())
}

/// log μ_j; stays finite when μ_j itself would overflow.
pub fn log_mu_vector(xi: &ConfigPoint, kappa: &KappaField, gt: &GreenTable) -> Result<Vec<f64>> {
    let pts = &xi.xi;
    pts.iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut s = kappa.value(x).ln() + gt.robin(x)?;
            for (i, &z) in pts.iter().enumerate() {
                if i != j {
                    s += gt.green(x, z)?;
                }
            }
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("Robin term at ξ = {x}")));
            }
            Ok(s - 2f64.ln())
        })
        .collect()
}

/// One construction instance.
#[derive(Debug, Clone)]
pub struct BlowupConfig {
    pub eps: f64,
    pub xi: ConfigPoint,
    pub sigma: f64,
    pub kappa: KappaField,
    pub domain: IntervalUnion,
    /// Allows m > d (non-existence audit only).
    pub audit: bool,
}

impl BlowupConfig {
    pub fn new(domain: IntervalUnion, eps: f64, xi: ConfigPoint) -> Self {
        Self { eps, xi, sigma: 0.25, kappa: KappaField::default(), domain, audit: false }
    }

    pub fn m(&self) -> usize {
        self.xi.m()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter(format!("ε = {} outside (0,1)", self.eps)));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidParameter(format!("σ = {} outside (0,1)", self.sigma)));
        }
        if !self.audit && self.m() > self.domain.len() {
            return Err(Error::TooManyPoints);
        }
        self.kappa.validate(&self.domain)?;
        self.xi.validate(&self.domain)
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn with_xi(&self, xi: Vec<f64>) -> Self {
        Self { xi: ConfigPoint::new(xi, self.xi.delta0), ..self.clone() }
    }

    pub fn expanded_domain(&self) -> Result<IntervalUnion> {
        expand_domain(&self.domain, self.eps)
    }

    /// Dirichlet system for I_ε on a grid of spacing h_y.
    pub fn expanded_system(&self, h_y: f64) -> Result<DirichletSystem> {
        let dom = self.expanded_domain()?;
        DirichletSystem::new(&dom, Grid::for_domain(&dom, h_y)?)
    }
}

/// Fields of the approximate solution on the y-grid.
#[derive(Debug, Clone)]
pub struct AnsatzBundle {
    pub eps: f64,
    pub sigma: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub kappa_at: Vec<f64>,
    pub kappa: KappaField,
    pub domain_eps: IntervalUnion,
    pub interior: Vec<usize>,
    /// u_j(εy), sampled on the whole window.
    pub u: Vec<GridFunction>,
    /// H_j(εy).
    pub h: Vec<GridFunction>,
    /// 𝒰(εy).
    pub big_u: GridFunction,
    /// 𝒱(y) = 𝒰(εy) + 2 log ε.
    pub v: GridFunction,
    /// κ(εy) e^𝒱 on interior nodes, zero elsewhere.
    pub w: GridFunction,
    pub theta: GridFunction,
    pub residual: f64,
    pub flagged: bool,
}

impl AnsatzBundle {
    pub fn grid(&self) -> &Grid {
        &self.v.grid
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    pub fn params(&self, j: usize) -> BubbleParams {
        BubbleParams { mu: self.mu[j], xi: self.eta[j] }
    }

    /// Star norm of interior values of f.
    pub fn star_norm(&self, f: &GridFunction) -> Result<f64> {
        crate::domain::star_norm(f, &self.domain_eps, self.sigma, &self.eta, self.eps)
    }

    /// 𝒰 at a point x of the original variable (nearest y-node interpolation).
    pub fn big_u_at(&self, x: f64) -> f64 {
        self.big_u.value_at(x / self.eps)
    }

    /// Wraps interior values into a grid function that vanishes elsewhere.
    pub fn interior_function(&self, vals: &[f64]) -> Result<GridFunction> {
        let mut out = vec![0.0; self.grid().n];
        for (r, &i) in self.interior.iter().enumerate() {
            out[i] = vals[r];
        }
        GridFunction::new(*self.grid(), out, Closure::Zero)
    }

    pub fn interior_values(&self, f: &GridFunction) -> Vec<f64> {
        self.interior.iter().map(|&i| f.values[i]).collect()
    }
}

/// Builds the bundle with μ from the Green table.
pub fn build_bundle(cfg: &BlowupConfig, sys: &DirichletSystem, gt: &GreenTable) -> Result<AnsatzBundle> {
    cfg.validate()?;
    let mu = mu_vector(&cfg.xi, &cfg.kappa, gt)?;
    build_bundle_with_mu(cfg, sys, &mu)
}

/// Builds the bundle for prescribed μ (used for perturbation fixtures).
pub fn build_bundle_with_mu(cfg: &BlowupConfig, sys: &DirichletSystem, mu: &[f64]) -> Result<AnsatzBundle> {
    let eps = cfg.eps;
    let m = cfg.m();
    if mu.len() != m || mu.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("μ must be positive, one per point".into()));
    }
    let grid = *sys.grid();
    let log_eps = eps.ln();
    let eta: Vec<f64> = cfg.xi.xi.iter().map(|x| x / eps).collect();
    let kappa_at: Vec<f64> = cfg.xi.xi.iter().map(|&x| cfg.kappa.value(x)).collect();

    let pieces: Vec<Result<(GridFunction, GridFunction, f64)>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let p = BubbleParams { mu: mu[j], xi: eta[j] };
            let shift = kappa_at[j].ln() + 2.0 * log_eps;
            let u = GridFunction::from_fn(grid, move |y| bubble(&p, y) - shift)?;
            let ext = Closure::analytic(move |y| shift - bubble(&p, y));
            let sol = sys.solve(&vec![0.0; sys.size()], &ext)?;
            Ok((u, sol.u, sol.residual))
        })
        .collect();
    let mut u = Vec::with_capacity(m);
    let mut h = Vec::with_capacity(m);
    let mut residual = 0.0f64;
    for piece in pieces {
        let (a, b, r) = piece?;
        u.push(a);
        h.push(b);
        residual = residual.max(r);
    }

    let mut big_u = vec![0.0; grid.n];
    for &i in &sys.interior {
        big_u[i] = (0..m).map(|j| u[j].values[i] + h[j].values[i]).sum();
    }
    let v_vals: Vec<f64> = big_u.iter().map(|x| x + 2.0 * log_eps).collect();
    let mut w_vals = vec![0.0; grid.n];
    let mut theta_vals = vec![0.0; grid.n];
    for &i in &sys.interior {
        let y = grid.x(i);
        w_vals[i] = cfg.kappa.value(eps * y) * v_vals[i].exp();
        let bubbles: f64 = (0..m).map(|j| bubble_density(&BubbleParams { mu: mu[j], xi: eta[j] }, y)).sum();
        theta_vals[i] = w_vals[i] - bubbles;
    }
    if w_vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("potential W".into()));
    }
    Ok(AnsatzBundle {
        eps,
        sigma: cfg.sigma,
        xi: cfg.xi.xi.clone(),
        eta,
        mu: mu.to_vec(),
        kappa_at,
        kappa: cfg.kappa.clone(),
        domain_eps: sys.domain.clone(),
        interior: sys.interior.clone(),
        u,
        h,
        big_u: GridFunction::new(grid, big_u, Closure::Zero)?,
        v: GridFunction::new(grid, v_vals, Closure::Constant(2.0 * log_eps))?,
        w: GridFunction::new(grid, w_vals, Closure::Zero)?,
        theta: GridFunction::new(grid, theta_vals, Closure::Zero)?,
        residual,
        flagged: residual > sys.tolerance(),
    })
}

/// ℰ = (−Δ)^{1/2}𝒱 − κ(εy)e^𝒱 at the interior nodes, zero elsewhere.
pub fn error_field(b: &AnsatzBundle, sys: &DirichletSystem) -> Result<GridFunction> {
    let dv = sys.quad.eval_nodes(&b.v, &b.interior)?;
    let vals: Vec<f64> = b.interior.iter().zip(dv).map(|(&i, d)| d - b.w.values[i]).collect();
    b.interior_function(&vals)
}

/// 𝒩(φ) = W(e^φ − 1 − φ) on the interior nodes.
pub fn nonlinearity(b: &AnsatzBundle, phi: &GridFunction) -> Result<GridFunction> {
    let mut out = vec![0.0; phi.grid.n];
    for &i in &b.interior {
        let p = phi.values[i];
        if !(p.abs() <= PHI_OVERFLOW) {
            return Err(Error::CorrectionOverflow);
        }
        out[i] = b.w.values[i] * (p.exp_m1() - p);
    }
    GridFunction::new(phi.grid, out, Closure::Zero)
}

/// Largest ratio |θ(y)| / (ε Σ_j (1+|y−η_j|)^{−1}) over I_ε.
pub fn theta_constant(b: &AnsatzBundle) -> f64 {
    let g = b.grid();
    b.interior
        .iter()
        .map(|&i| {
            let y = g.x(i);
            let s: f64 = b.eta.iter().map(|e| 1.0 / (1.0 + (y - e).abs())).sum();
            b.theta.values[i].abs() / (b.eps * s)
        })
        .fold(0.0, f64::max)
}

/// Header metadata for exported bundles.
#[derive(Debug, Clone, Serialize)]
pub struct BundleHeader {
    pub eps: f64,
    pub sigma: f64,
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
    pub residual: f64,
    pub flagged: bool,
}

pub fn bundle_header(b: &AnsatzBundle) -> BundleHeader {
    BundleHeader {
        eps: b.eps,
        sigma: b.sigma,
        mu: b.mu.clone(),
        eta: b.eta.clone(),
        xi: b.xi.clone(),
        residual: b.residual,
        flagged: b.flagged,
    }
}

/// CSV rows x, U, V, W, E over the interior nodes.
pub fn write_bundle_csv<W: Write>(b: &AnsatzBundle, err: &GridFunction, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["x", "U", "V", "W", "E"]).map_err(io)?;
    let g = b.grid();
    for &i in &b.interior {
        let rec = [b.eps * g.x(i), b.big_u.values[i], b.v.values[i], b.w.values[i], err.values[i]];
        w.write_record(rec.map(|v| format!("{v:.16e}"))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Mass 2π of a bubble over ℝ, for reference.
pub const BUBBLE_MASS: f64 = 2.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::PvQuadrature;
    use crate::greens::green_single;
    use crate::quad::integrate;

    fn unit_cfg(eps: f64, xi: f64) -> BlowupConfig {
        BlowupConfig::new(IntervalUnion::single(-1.0, 1.0).unwrap(), eps, ConfigPoint::new(vec![xi], 0.1))
    }

    #[test]
    fn bubble_values() {
        let p = BubbleParams { mu: 1.0, xi: 0.0 };
        assert!((bubble(&p, 0.0) - 2f64.ln()).abs() < 1e-15);
        let q = BubbleParams { mu: 3.0, xi: -0.4 };
        assert!((bubble(&q, -0.4) - (2.0 / 3.0f64).ln()).abs() < 1e-15);
        let mass = integrate(|t: f64| {
            let x = q.xi + q.mu * t.tan();
            bubble_density(&q, x) * q.mu / t.cos().powi(2)
        }, -PI / 2.0, PI / 2.0, 20, 8);
        assert!((mass - BUBBLE_MASS).abs() < 1e-12);
    }

    #[test]
    fn mu_examples() {
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let gt = GreenTable::closed_form(&dom).unwrap();
        let k = KappaField::default();
        let mu0 = mu_vector(&ConfigPoint::new(vec![0.0], 0.1), &k, &gt).unwrap();
        assert!((mu0[0] - 2.0).abs() < 1e-14);
        let mu1 = mu_vector(&ConfigPoint::new(vec![0.5], 0.1), &k, &gt).unwrap();
        assert!((mu1[0] - 1.125).abs() < 1e-14);
        let mu3 = mu_vector(&ConfigPoint::new(vec![0.5], 0.1), &k.scaled(3.0), &gt).unwrap();
        assert!((mu3[0] - 3.375).abs() < 1e-13);
        assert!(mu_vector(&ConfigPoint::new(vec![1.5], 0.1), &k, &gt).is_err());
    }

    #[test]
    fn config_validation() {
        let dom = IntervalUnion::parse("-2,-1,1,2").unwrap();
        let mut cfg = BlowupConfig::new(dom, 0.05, ConfigPoint::new(vec![-1.5, 1.2, 1.7], 0.1));
        assert_eq!(cfg.validate(), Err(Error::TooManyPoints));
        cfg.audit = true;
        assert!(cfg.validate().is_ok());
        assert!(unit_cfg(1.5, 0.0).validate().is_err());
        assert!(unit_cfg(0.1, 0.95).validate().is_err());
    }

    #[test]
    fn bubble_solves_liouville_in_expanded_variable() {
        let grid = Grid::new(-200.0, 200.0, 4001).unwrap();
        let q = PvQuadrature::plain(grid);
        let p = BubbleParams { mu: 2.0, xi: 0.3 };
        let f = GridFunction::from_fn(grid, move |y| bubble(&p, y)).unwrap();
        let mut worst = 0.0f64;
        for i in (1800..2200).step_by(7) {
            worst = worst.max((q.eval_node(&f, i).unwrap() - bubble_density(&p, grid.x(i))).abs());
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn bundle_structure() {
        let cfg = unit_cfg(0.05, 0.0);
        let gt = GreenTable::closed_form(&cfg.domain).unwrap();
        let sys = cfg.expanded_system(0.1).unwrap();
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        assert!(!b.flagged);
        let g = b.grid();
        for i in 0..g.n {
            if sys.row_of(i).is_none() {
                assert_eq!(b.big_u.values[i], 0.0);
                assert!((b.v.values[i] - 2.0 * 0.05f64.ln()).abs() < 1e-14);
            }
        }
        for &i in &b.interior {
            assert!(b.w.values[i] > 0.0);
            let j = g.nearest(-g.x(i));
            assert!((g.x(j) + g.x(i)).abs() < 1e-9);
            assert!((b.big_u.values[i] - b.big_u.values[j]).abs() < 1e-8, "{}", b.big_u.values[i] - b.big_u.values[j]);
        }
        // far field: 𝒰 ≈ G(·, ξ)
        for x in [-0.8, -0.5, 0.5, 0.7] {
            let i = g.nearest(x / 0.05);
            let xx = 0.05 * g.x(i);
            let d = (b.big_u.values[i] - green_single(xx, 0.0, -1.0, 1.0).unwrap()).abs();
            // bubble tail correction is μ²ε²/x²
            assert!(d < 2.0 * (b.mu[0] * 0.05 / xx).powi(2), "{x} {d}");
        }
        // H_j matches the closed-form expansion H(x,ξ) − log(2μ/κ) up to O(ε²)
        for x in [-0.6, 0.2, 0.9] {
            let i = g.nearest(x / 0.05);
            let xx = 0.05 * g.x(i);
            let want = crate::greens::regular_part_single(xx, 0.0, -1.0, 1.0).unwrap() - (2.0 * b.mu[0]).ln();
            assert!((b.h[0].values[i] - want).abs() < 0.05, "{x}");
        }
    }

    #[test]
    fn theta_scales_with_eps() {
        let mut c = Vec::new();
        for eps in [0.1, 0.05] {
            let cfg = unit_cfg(eps, 0.2);
            let gt = GreenTable::closed_form(&cfg.domain).unwrap();
            let sys = cfg.expanded_system(0.1).unwrap();
            c.push(theta_constant(&build_bundle(&cfg, &sys, &gt).unwrap()));
        }
        assert!(c[1] < 2.0 * c[0] && c[1] > 0.25 * c[0], "{c:?}");
    }

    #[test]
    fn nonlinearity_properties() {
        let cfg = unit_cfg(0.1, 0.0);
        let gt = GreenTable::closed_form(&cfg.domain).unwrap();
        let sys = cfg.expanded_system(0.1).unwrap();
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        let g = *b.grid();
        let zero = GridFunction::zeros(g);
        assert!(nonlinearity(&b, &zero).unwrap().sup_norm() == 0.0);
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut consts = Vec::new();
        for amp in [1e-1, 1e-2, 1e-3] {
            let vals: Vec<f64> = (0..g.n).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
            let phi = GridFunction::new(g, vals, Closure::Zero).unwrap();
            let n = nonlinearity(&b, &phi).unwrap();
            assert!(n.values.iter().all(|&v| v >= 0.0));
            consts.push(b.star_norm(&n).unwrap() / phi.sup_norm().powi(2));
        }
        assert!(consts.iter().all(|&c| c < 2.0 * consts[2] && c > 0.3 * consts[2]), "{consts:?}");
        let big = GridFunction::new(g, vec![40.0; g.n], Closure::Zero).unwrap();
        assert_eq!(nonlinearity(&b, &big).unwrap_err(), Error::CorrectionOverflow);
    }

    #[test]
    fn far_error_is_small() {
        let cfg = unit_cfg(0.05, 0.0);
        let gt = GreenTable::closed_form(&cfg.domain).unwrap();
        let sys = cfg.expanded_system(0.1).unwrap();
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        let e = error_field(&b, &sys).unwrap();
        let g = b.grid();
        let far = b
            .interior
            .iter()
            .filter(|&&i| g.x(i).abs() >= 0.05 / (2.0 * 0.05))
            .map(|&i| e.values[i].abs())
            .fold(0.0, f64::max);
        assert!(far < 20.0 * 0.05 * 0.05, "{far}");
    }
}
