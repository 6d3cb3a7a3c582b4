//! Reduced energy Ξ of the concentration points, its minimisation, and the
//! full energy functional.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, Mutex};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{ConfigPoint, GridFunction, IntervalUnion, KappaField};
use crate::error::{Error, Result};
use crate::fracops::DirichletSystem;
use crate::greens::GreenTable;

/// Ξ(ξ) = −Σ_j (2 log κ(ξ_j) + H(ξ_j,ξ_j) + Σ_{i≠j} G(ξ_j,ξ_i)).
///
/// Returns −∞ when two points coincide and +∞ when a point leaves the domain.
pub fn xi_energy(xi: &[f64], kappa: &KappaField, gt: &GreenTable) -> Result<f64> {
    for (k, &x) in xi.iter().enumerate() {
        if xi[..k].contains(&x) {
            return Ok(f64::NEG_INFINITY);
        }
    }
    if xi.iter().any(|&x| gt.domain.dist_to_complement(x) <= 0.0) {
        return Ok(f64::INFINITY);
    }
    let mut s = 0.0;
    for (j, &x) in xi.iter().enumerate() {
        let k = kappa.value(x);
        if !(k > 0.0) {
            return Err(Error::InvalidParameter(format!("κ({x}) = {k} not positive")));
        }
        s += 2.0 * k.ln() + gt.robin(x)?;
        for (i, &z) in xi.iter().enumerate() {
            if i != j {
                s += gt.green(x, z)?;
            }
        }
    }
    Ok(-s)
}

/// Result of a landscape minimisation.
#[derive(Debug, Clone, Serialize)]
pub struct XiMinimum {
    pub xi: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

/// Ξ restricted to the box Q_δ of one assignment of points to components.
pub struct XiLandscape {
    pub table: Arc<GreenTable>,
    pub kappa: KappaField,
    /// Component hosting each point.
    pub assignment: Vec<usize>,
    pub delta: f64,
    pub samples: Vec<(Vec<f64>, f64)>,
    pub minimizer: Option<XiMinimum>,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl XiLandscape {
    pub fn new(table: Arc<GreenTable>, kappa: KappaField, assignment: Vec<usize>, delta: f64) -> Result<Self> {
        let d = table.domain.len();
        if assignment.is_empty() || assignment.iter().any(|&c| c >= d) {
            return Err(Error::InvalidParameter("assignment refers to a missing component".into()));
        }
        let shortest = assignment
            .iter()
            .map(|&c| table.domain.components()[c])
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        if !(delta > 0.0 && 2.0 * delta < shortest) {
            return Err(Error::InvalidParameter(format!("δ = {delta} leaves an empty box")));
        }
        Ok(Self {
            table,
            kappa,
            assignment,
            delta,
            samples: Vec::new(),
            minimizer: None,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// One point per component, in order.
    pub fn injective(table: Arc<GreenTable>, kappa: KappaField, m: usize, delta: f64) -> Result<Self> {
        if m > table.domain.len() {
            return Err(Error::TooManyPoints);
        }
        Self::new(table, kappa, (0..m).collect(), delta)
    }

    pub fn domain(&self) -> &IntervalUnion {
        &self.table.domain
    }

    pub fn m(&self) -> usize {
        self.assignment.len()
    }

    /// Box limits of coordinate j.
    pub fn bounds(&self, j: usize) -> (f64, f64) {
        let (a, b) = self.domain().components()[self.assignment[j]];
        (a + self.delta, b - self.delta)
    }

    pub fn in_box(&self, xi: &[f64]) -> bool {
        xi.len() == self.m()
            && xi.iter().enumerate().all(|(j, &x)| {
                let (lo, hi) = self.bounds(j);
                x >= lo && x <= hi
            })
    }

    /// Component midpoints (spread evenly when a component hosts several points).
    pub fn start(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for c in 0..self.domain().len() {
            let idx: Vec<usize> = (0..self.m()).filter(|&j| self.assignment[j] == c).collect();
            let (lo, hi) = (self.domain().components()[c].0 + self.delta, self.domain().components()[c].1 - self.delta);
            for (k, &j) in idx.iter().enumerate() {
                out[j] = lo + (hi - lo) * (k as f64 + 1.0) / (idx.len() as f64 + 1.0);
            }
        }
        out
    }

    /// Ξ with +∞ outside Q_δ; cached.
    pub fn value(&self, xi: &[f64]) -> Result<f64> {
        if !self.in_box(xi) {
            return Ok(f64::INFINITY);
        }
        let key: Vec<u64> = xi.iter().map(|x| x.to_bits()).collect();
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let v = match xi_energy(xi, &self.kappa, &self.table) {
            Err(Error::SourceUnresolved) => f64::INFINITY,
            r => r?,
        };
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }

    /// Samples Ξ on an n^m product grid of Q_δ.
    pub fn sample(&mut self, n: usize) -> Result<()> {
        let m = self.m();
        if m > 3 || n < 2 {
            return Err(Error::InvalidParameter("sampling needs m ≤ 3 and n ≥ 2".into()));
        }
        let total = n.pow(m as u32);
        let pts: Vec<Vec<f64>> = (0..total)
            .map(|mut k| {
                (0..m)
                    .map(|j| {
                        let (lo, hi) = self.bounds(j);
                        let t = (k % n) as f64 / (n - 1) as f64;
                        k /= n;
                        lo + t * (hi - lo)
                    })
                    .collect()
            })
            .collect();
        let vals: Vec<Result<f64>> = pts.par_iter().map(|p| self.value(p)).collect();
        self.samples = pts.into_iter().zip(vals).map(|(p, v)| v.map(|v| (p, v))).collect::<Result<_>>()?;
        Ok(())
    }

    /// CSV with columns xi_1..xi_m, Xi.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut head: Vec<String> = (1..=self.m()).map(|j| format!("xi_{j}")).collect();
        head.push("Xi".into());
        w.write_record(&head).map_err(io)?;
        for (p, v) in &self.samples {
            w.write_record(p.iter().chain([v]).map(|x| format!("{x:.16e}"))).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Central-difference gradient of Ξ.
    pub fn gradient(&self, xi: &[f64], step: f64) -> Result<Vec<f64>> {
        (0..xi.len())
            .map(|j| {
                let mut p = xi.to_vec();
                let mut q = xi.to_vec();
                p[j] += step;
                q[j] -= step;
                Ok((self.value(&p)? - self.value(&q)?) / (2.0 * step))
            })
            .collect()
    }

    /// Finite-difference step matched to the table resolution.
    fn fd_step(&self) -> f64 {
        match self.table.system() {
            Some(sys) => 2.0 * sys.grid().h,
            None => 1e-5,
        }
    }
}

struct SimplexCost<'a>(&'a XiLandscape);

impl CostFunction for SimplexCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let v = self.0.value(p).map_err(|e| argmin::core::Error::msg(e.to_string()))?;
        // the simplex cannot rank −∞; treat coincidences as infeasible
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

struct LineCost<'a> {
    land: &'a XiLandscape,
    base: Vec<f64>,
    j: usize,
}

impl CostFunction for LineCost<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, t: &f64) -> std::result::Result<f64, argmin::core::Error> {
        let mut p = self.base.clone();
        p[self.j] = *t;
        let v = self.land.value(&p).map_err(|e| argmin::core::Error::msg(e.to_string()))?;
        Ok(if v.is_finite() { v } else { f64::MAX })
    }
}

fn optim_err(e: argmin::core::Error) -> Error {
    Error::NonFinite(format!("optimizer: {e}"))
}

/// Local minimiser of Ξ in the interior of Q_δ.
///
/// Simplex search from the best sample (or the component midpoints), then a
/// golden-section sweep per coordinate. Fails with `NoInteriorMinimum` when the
/// result sits on the box boundary.
pub fn minimize_xi(land: &mut XiLandscape, tol: f64) -> Result<ConfigPoint> {
    let m = land.m();
    let x0 = land
        .samples
        .iter()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p.clone())
        .unwrap_or_else(|| land.start());
    let mut simplex = vec![x0.clone()];
    for j in 0..m {
        let (lo, hi) = land.bounds(j);
        let mut p = x0.clone();
        let step = 0.1 * (hi - lo);
        p[j] = if p[j] + step <= hi { p[j] + step } else { p[j] - step };
        simplex.push(p);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).map_err(optim_err)?;
    let res = Executor::new(SimplexCost(land), solver)
        .configure(|s| s.max_iters(400 * m as u64))
        .run()
        .map_err(optim_err)?;
    let mut x = res.state.get_best_param().cloned().unwrap_or(x0);

    for _ in 0..3 {
        for j in 0..m {
            let (lo, hi) = land.bounds(j);
            let w = 0.05 * (hi - lo);
            let (a, b) = ((x[j] - w).max(lo), (x[j] + w).min(hi));
            if !(b > a) {
                continue;
            }
            let gs = GoldenSectionSearch::new(a, b)
                .and_then(|g| g.with_tolerance(1e-12))
                .map_err(optim_err)?;
            let start = x[j].clamp(a, b);
            let r = Executor::new(LineCost { land, base: x.clone(), j }, gs)
                .configure(|s| s.param(start).max_iters(200))
                .run()
                .map_err(optim_err)?;
            if let Some(&t) = r.state.get_best_param() {
                let mut trial = x.clone();
                trial[j] = t;
                if land.value(&trial)? <= land.value(&x)? {
                    x = trial;
                }
            }
        }
    }

    let value = land.value(&x)?;
    let edge = tol.max(1e-9);
    let on_edge = (0..m).any(|j| {
        let (lo, hi) = land.bounds(j);
        x[j] - lo < edge * (hi - lo) * 1e3 || hi - x[j] < edge * (hi - lo) * 1e3
    });
    if !value.is_finite() || on_edge {
        return Err(Error::NoInteriorMinimum);
    }
    let grad = land.gradient(&x, land.fd_step())?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    land.minimizer = Some(XiMinimum { xi: x.clone(), value, grad_norm });
    Ok(ConfigPoint::new(x, land.delta))
}

/// 𝒥(u) = ½∫_I u (−Δ)^{1/2}u − ε∫_I κ e^u for u sampled on the grid of `sys`
/// in the variable t = x/scale and vanishing outside the domain.
///
/// The seminorm is scale invariant, so only the potential term sees `scale`.
pub fn full_energy(u: &GridFunction, scale: f64, eps: f64, kappa: &KappaField, sys: &DirichletSystem) -> Result<f64> {
    if u.grid != *sys.grid() {
        return Err(Error::InvalidParameter("function and system grids differ".into()));
    }
    let du = sys.quad.eval_nodes(u, &sys.interior)?;
    let quad: Vec<f64> = sys.interior.iter().zip(&du).map(|(&i, d)| u.values[i] * d).collect();
    let pot: Vec<f64> = sys
        .interior
        .iter()
        .map(|&i| kappa.value(scale * u.grid.x(i)) * u.values[i].exp())
        .collect();
    // e^u = 1 at the endpoints; κ is sampled there by the snapped node
    let edge = sys
        .domain
        .components()
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .map(|e| kappa.value(e))
        .sum::<f64>()
        / (2.0 * sys.domain.len() as f64);
    let e = 0.5 * sys.integrate(&quad, 0.0) - eps * scale * sys.integrate(&pot, edge);
    if !e.is_finite() {
        return Err(Error::NonFinite("energy".into()));
    }
    Ok(e)
}

/// Leading-order prediction −2πm(1 + log ε) + πΞ for 𝒥(𝒰).
pub fn energy_expansion(m: usize, eps: f64, xi_value: f64) -> f64 {
    -2.0 * PI * m as f64 * (1.0 + eps.ln()) + PI * xi_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_bundle, BlowupConfig};

    fn closed(a: f64, b: f64) -> Arc<GreenTable> {
        Arc::new(GreenTable::closed_form(&IntervalUnion::single(a, b).unwrap()).unwrap())
    }

    #[test]
    fn single_interval_values() {
        let gt = closed(-1.0, 1.0);
        let k = KappaField::default();
        let v0 = xi_energy(&[0.0], &k, &gt).unwrap();
        assert!((v0 + 2.0 * 2f64.ln()).abs() < 1e-14);
        for x in [-0.7f64, 0.2, 0.9] {
            let want = -2.0 * (2.0 * (1.0 - x * x)).ln();
            assert!((xi_energy(&[x], &k, &gt).unwrap() - want).abs() < 1e-12);
        }
        assert_eq!(xi_energy(&[1.0], &k, &gt).unwrap(), f64::INFINITY);
        assert!(xi_energy(&[0.999999], &k, &gt).unwrap() > 20.0);
    }

    #[test]
    fn sentinels_and_shift() {
        let gt = closed(-1.0, 1.0);
        let k = KappaField::default();
        assert_eq!(xi_energy(&[0.2, 0.2], &k, &gt).unwrap(), f64::NEG_INFINITY);
        let pts = [-0.4, 0.3];
        let base = xi_energy(&pts, &k, &gt).unwrap();
        let c = 0.7f64;
        let shifted = xi_energy(&pts, &k.scaled(c.exp()), &gt).unwrap();
        assert!((shifted - (base - 2.0 * 2.0 * c)).abs() < 1e-12);
    }

    #[test]
    fn minimiser_single_interval() {
        let mut land = XiLandscape::injective(closed(-1.0, 1.0), KappaField::default(), 1, 1e-3).unwrap();
        land.sample(11).unwrap();
        let xi = minimize_xi(&mut land, 1e-6).unwrap();
        assert!(xi.xi[0].abs() < 1e-6, "{:?}", xi.xi);
        let min = land.minimizer.as_ref().unwrap();
        assert!((min.value + 2.0 * 2f64.ln()).abs() < 1e-6);
        assert!(min.grad_norm < 1e-4);
    }

    #[test]
    fn minimiser_generic_interval_and_scaled_kappa() {
        for (a, b) in [(0.3, 2.1), (-5.0, -1.5)] {
            for k in [KappaField::default(), KappaField::Constant(3.5)] {
                let mut land = XiLandscape::injective(closed(a, b), k, 1, 1e-3).unwrap();
                let xi = minimize_xi(&mut land, 1e-6).unwrap();
                assert!((xi.xi[0] - 0.5 * (a + b)).abs() < 1e-6, "{a} {b} {:?}", xi.xi);
            }
        }
    }

    #[test]
    fn gradient_matches_closed_form() {
        let land = XiLandscape::injective(closed(-1.0, 1.0), KappaField::default(), 1, 1e-3).unwrap();
        for x in [-0.5, 0.1, 0.6] {
            let g = land.gradient(&[x], 1e-5).unwrap()[0];
            let want = 4.0 * x / (1.0 - x * x);
            assert!((g - want).abs() <= 1e-4 * want.abs().max(1e-3), "{x} {g} {want}");
        }
    }

    #[test]
    fn edge_minimum_is_rejected() {
        // κ = (2+x)^20 pushes the minimiser past 0.8
        let mut c = vec![1.0f64];
        for _ in 0..20 {
            let mut next = vec![0.0; c.len() + 1];
            for (k, &v) in c.iter().enumerate() {
                next[k] += 2.0 * v;
                next[k + 1] += v;
            }
            c = next;
        }
        let k = KappaField::Polynomial(c);
        let mut land = XiLandscape::injective(closed(-1.0, 1.0), k, 1, 0.2).unwrap();
        assert_eq!(minimize_xi(&mut land, 1e-6).unwrap_err(), Error::NoInteriorMinimum);
    }

    #[test]
    fn landscape_csv() {
        let mut land = XiLandscape::injective(closed(-1.0, 1.0), KappaField::default(), 1, 0.01).unwrap();
        land.sample(5).unwrap();
        let mut buf = Vec::new();
        land.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("xi_1,Xi"));
    }

    #[test]
    fn energy_of_zero() {
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let sys = DirichletSystem::new(&dom, crate::domain::Grid::for_domain(&dom, 0.01).unwrap()).unwrap();
        let u = GridFunction::zeros(*sys.grid());
        let e = full_energy(&u, 1.0, 0.3, &KappaField::default(), &sys).unwrap();
        assert!((e + 0.3 * 2.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn energy_expansion_of_ansatz() {
        let mut gaps = Vec::new();
        for eps in [0.1, 0.05, 0.025] {
            let cfg = BlowupConfig::new(IntervalUnion::single(-1.0, 1.0).unwrap(), eps, ConfigPoint::new(vec![0.2], 0.1));
            let gt = GreenTable::closed_form(&cfg.domain).unwrap();
            let sys = cfg.expanded_system(0.1).unwrap();
            let b = build_bundle(&cfg, &sys, &gt).unwrap();
            let j = full_energy(&b.big_u, eps, eps, &cfg.kappa, &sys).unwrap();
            let xi = xi_energy(&cfg.xi.xi, &cfg.kappa, &gt).unwrap();
            gaps.push((j - energy_expansion(1, eps, xi)).abs() / (eps * eps.ln().abs()));
        }
        assert!(gaps.iter().all(|&g| g < 10.0), "{gaps:?}");
    }
}
