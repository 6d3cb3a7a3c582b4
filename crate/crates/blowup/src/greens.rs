//! Fundamental solution, Green function and regular part on interval unions.
//!
//! On a single interval everything is closed form. On unions the regular part
//! H(·, z) is the Dirichlet solution with exterior data 2 log|y − z|; the
//! factorised system does not depend on z, so sources are solved on demand and
//! cached.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::domain::{Closure, Grid, GridFunction, IntervalUnion};
use crate::error::{Error, Result};
use crate::fracops::DirichletSystem;

/// Γ(x) = −2 log|x|.
pub fn gamma(x: f64) -> Result<f64> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::InvalidParameter("Γ is singular at 0".into()));
    }
    Ok(-2.0 * x.abs().ln())
}

fn check_interval(z: f64, a: f64, b: f64) -> Result<()> {
    if !(a < b) {
        return Err(Error::EndpointsNotIncreasing);
    }
    if !(z > a && z < b) {
        return Err(Error::SourceUnresolved);
    }
    Ok(())
}

fn to_unit(x: f64, a: f64, b: f64) -> f64 {
    (2.0 * x - a - b) / (b - a)
}

/// log(1 − st + √((1−s²)(1−t²))) on (−1,1)².
fn unit_log_term(s: f64, t: f64) -> f64 {
    (1.0 - s * t + ((1.0 - s * s) * (1.0 - t * t)).max(0.0).sqrt()).ln()
}

/// Green function of (a, b) with pole z.
pub fn green_single(x: f64, z: f64, a: f64, b: f64) -> Result<f64> {
    check_interval(z, a, b)?;
    if x == z {
        return Err(Error::InvalidParameter("G is singular on the diagonal".into()));
    }
    if x <= a || x >= b {
        return Ok(0.0);
    }
    let (s, t) = (to_unit(x, a, b), to_unit(z, a, b));
    Ok(2.0 * unit_log_term(s, t) - 2.0 * (s - t).abs().ln())
}

/// G − Γ(· − z) on (a, b), continuous across x = z.
pub fn regular_part_single(x: f64, z: f64, a: f64, b: f64) -> Result<f64> {
    check_interval(z, a, b)?;
    if x <= a || x >= b {
        return Ok(2.0 * (x - z).abs().ln());
    }
    let (s, t) = (to_unit(x, a, b), to_unit(z, a, b));
    Ok(2.0 * unit_log_term(s, t) + 2.0 * (0.5 * (b - a)).ln())
}

/// Upper bound for the Robin function of any domain inside ℝ∖[−1, 1].
pub fn kelvin_bound(z: f64) -> f64 {
    2.0 * (2.0 * (z * z - 1.0)).ln()
}

/// G(·, z) and H(·, z) on the grid of `sys`, with z moved at least h/4 away from nodes.
pub fn green_multi(z: f64, sys: &DirichletSystem) -> Result<(GridFunction, GridFunction, f64)> {
    let grid = *sys.grid();
    let z = snap_source(z, &grid);
    let h = solve_source(z, sys)?;
    let mut g = h.values.clone();
    for (i, v) in g.iter_mut().enumerate() {
        *v = if sys.row_of(i).is_some() { *v + gamma(grid.x(i) - z)? } else { 0.0 };
    }
    Ok((GridFunction::new(grid, g, Closure::Zero)?, h, z))
}

/// (−Δ)^{1/2} G(·, z) at interior node i, with the Γ singularity removed
/// analytically (its half-Laplacian vanishes away from z).
pub fn green_halflap(g: &GridFunction, z: f64, sys: &DirichletSystem, i: usize) -> Result<f64> {
    let grid = *sys.grid();
    let mut vals = g.values.clone();
    for (j, v) in vals.iter_mut().enumerate() {
        *v -= gamma(grid.x(j) - z)?;
    }
    let smooth = GridFunction::new(grid, vals, Closure::analytic(move |y: f64| 2.0 * (y - z).abs().ln()))?;
    sys.quad.eval_node(&smooth, i)
}

fn snap_source(z: f64, grid: &Grid) -> f64 {
    let i = grid.nearest(z);
    let off = z - grid.x(i);
    if off.abs() >= 0.25 * grid.h {
        z
    } else if off >= 0.0 {
        grid.x(i) + 0.25 * grid.h
    } else {
        grid.x(i) - 0.25 * grid.h
    }
}

fn solve_source(z: f64, sys: &DirichletSystem) -> Result<GridFunction> {
    let h = sys.grid().h;
    if !sys.domain.contains(z) || sys.domain.dist_to_complement(z) < 2.0 * h {
        return Err(Error::SourceUnresolved);
    }
    let ext = Closure::analytic(move |y: f64| 2.0 * (y - z).abs().ln());
    let sol = sys.solve(&vec![0.0; sys.size()], &ext)?;
    if sol.flagged {
        return Err(Error::Discretization);
    }
    Ok(sol.u)
}

/// Green function evaluator for a fixed domain.
pub struct GreenTable {
    pub domain: IntervalUnion,
    system: Option<Arc<DirichletSystem>>,
    cache: Mutex<HashMap<u64, Arc<GridFunction>>>,
}

impl std::fmt::Debug for GreenTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenTable")
            .field("domain", &self.domain)
            .field("numeric", &self.system.is_some())
            .finish()
    }
}

impl GreenTable {
    /// Closed form; single intervals only.
    pub fn closed_form(domain: &IntervalUnion) -> Result<Self> {
        if domain.len() != 1 {
            return Err(Error::InvalidParameter("closed form needs a single interval".into()));
        }
        Ok(Self { domain: domain.clone(), system: None, cache: Mutex::default() })
    }

    pub fn numeric(domain: &IntervalUnion, h: f64) -> Result<Self> {
        let grid = Grid::for_domain(domain, h)?;
        Ok(Self::from_system(Arc::new(DirichletSystem::new(domain, grid)?)))
    }

    pub fn from_system(sys: Arc<DirichletSystem>) -> Self {
        Self { domain: sys.domain.clone(), system: Some(sys), cache: Mutex::default() }
    }

    /// Closed form for one interval, numeric otherwise.
    pub fn new(domain: &IntervalUnion, h: f64) -> Result<Self> {
        if domain.len() == 1 {
            Self::closed_form(domain)
        } else {
            Self::numeric(domain, h)
        }
    }

    pub fn is_closed_form(&self) -> bool {
        self.system.is_none()
    }

    pub fn system(&self) -> Option<&Arc<DirichletSystem>> {
        self.system.as_ref()
    }

    /// Numeric H(·, z) at the nodes, cached per source.
    pub fn profile(&self, z: f64) -> Result<Arc<GridFunction>> {
        let sys = self.system.as_ref().ok_or(Error::InvalidParameter("closed-form table".into()))?;
        let key = z.to_bits();
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(solve_source(z, sys)?);
        self.cache.lock().expect("cache lock").insert(key, p.clone());
        Ok(p)
    }

    pub fn clear_cache(&self) {
        self.cache.lock().expect("cache lock").clear();
    }

    /// H(x, z).
    pub fn regular(&self, x: f64, z: f64) -> Result<f64> {
        self.domain.component_of(z).ok_or(Error::SourceUnresolved)?;
        let Some(sys) = &self.system else {
            let (a, b) = self.domain.components()[0];
            return regular_part_single(x, z, a, b);
        };
        if !self.domain.contains(x) {
            return Ok(2.0 * (x - z).abs().ln());
        }
        let p = self.profile(z)?;
        Ok(interpolate_in_component(&p, sys, x))
    }

    /// G(x, z); zero outside the domain.
    pub fn green(&self, x: f64, z: f64) -> Result<f64> {
        if x == z {
            return Err(Error::InvalidParameter("G is singular on the diagonal".into()));
        }
        if !self.domain.contains(x) {
            self.domain.component_of(z).ok_or(Error::SourceUnresolved)?;
            return Ok(0.0);
        }
        Ok(self.regular(x, z)? + gamma(x - z)?)
    }

    /// Robin function H(z, z).
    pub fn robin(&self, z: f64) -> Result<f64> {
        self.regular(z, z)
    }

    /// Largest |G(x,z) − G(z,x)| over the given pairs.
    pub fn symmetry_error(&self, pairs: &[(f64, f64)]) -> Result<f64> {
        let errs: Result<Vec<f64>> = pairs
            .par_iter()
            .map(|&(x, z)| Ok((self.green(x, z)? - self.green(z, x)?).abs()))
            .collect();
        Ok(errs?.into_iter().fold(0.0, f64::max))
    }

    /// Writes rows x, z, G, H for every pair of the two lists (x ≠ z).
    pub fn write_csv<W: Write>(&self, out: W, xs: &[f64], zs: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "z", "G", "H"]).map_err(|e| Error::Io(e.to_string()))?;
        for &z in zs {
            for &x in xs {
                if x == z {
                    continue;
                }
                let rec = [x, z, self.green(x, z)?, self.regular(x, z)?].map(|v| format!("{v:.16e}"));
                w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Cubic interpolation using nodes of the component containing x (endpoint nodes included).
fn interpolate_in_component(p: &GridFunction, sys: &DirichletSystem, x: f64) -> f64 {
    let g = sys.grid();
    let t = (x - g.a) / g.h;
    let c = t.floor() as usize;
    let (mut lo, mut hi) = (c, c + 1);
    while lo > 0 && sys.row_of(lo).is_some() {
        lo -= 1;
    }
    while hi + 1 < g.n && sys.row_of(hi).is_some() {
        hi += 1;
    }
    let s = c.saturating_sub(1).clamp(lo, hi.saturating_sub(3).max(lo));
    let len = (hi - s + 1).min(4);
    let xs: Vec<f64> = (s..s + len).map(|j| j as f64).collect();
    crate::domain::lagrange(&xs, &p.values[s..s + len], t)
}

/// Outcome of the logarithmic lower bound comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LowerBoundReport {
    pub pairs: usize,
    pub min_ratio: f64,
    pub worst_pair: (f64, f64),
    pub pass: bool,
}

/// Smallest ratio G(x,y) / log(1 + √(d(x)d(y))/|x−y|) over the sample.
pub fn green_lower_bound_check(table: &GreenTable, pairs: &[(f64, f64)]) -> Result<LowerBoundReport> {
    let dom = &table.domain;
    let mut min_ratio = f64::INFINITY;
    let mut worst = (f64::NAN, f64::NAN);
    let mut count = 0;
    for &(x, y) in pairs {
        if x == y || !dom.contains(x) || !dom.contains(y) {
            continue;
        }
        let lb = (1.0 + (dom.dist_to_complement(x) * dom.dist_to_complement(y)).sqrt() / (x - y).abs()).ln();
        let r = table.green(x, y)? / lb;
        count += 1;
        if r < min_ratio {
            min_ratio = r;
            worst = (x, y);
        }
    }
    Ok(LowerBoundReport { pairs: count, min_ratio, worst_pair: worst, pass: count > 0 && min_ratio > 0.0 })
}

/// Robin values and the exterior comparison bound at each source.
pub fn kelvin_check(table: &GreenTable, zs: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if table.domain.components().iter().any(|&(a, b)| a < 1.0 && b > -1.0) {
        return Err(Error::InvalidParameter("domain must avoid [-1, 1]".into()));
    }
    zs.iter().map(|&z| Ok((z, table.robin(z)?, kelvin_bound(z)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_values() {
        assert_eq!(gamma(1.0).unwrap(), 0.0);
        assert_eq!(gamma(-1.0).unwrap(), 0.0);
        assert!((gamma((-1.0f64).exp()).unwrap() - 2.0).abs() < 1e-15);
        assert!(gamma(0.0).is_err());
    }

    #[test]
    fn single_interval_values() {
        let g = green_single(0.0, 0.5, -1.0, 1.0).unwrap();
        let oracle = 2.0 * ((1.0 + 0.75f64.sqrt()) / 0.5).ln();
        assert!((g - oracle).abs() < 1e-14);
        assert!((g - 2.63392).abs() < 1e-5);
        assert_eq!(green_single(1.5, 0.5, -1.0, 1.0).unwrap(), 0.0);
        assert!(green_single(0.5, 0.5, -1.0, 1.0).is_err());
        let h00 = regular_part_single(0.0, 0.0, -1.0, 1.0).unwrap();
        assert!((h00 - 2.0 * 2f64.ln()).abs() < 1e-14);
        let h = regular_part_single(0.0, 0.5, -1.0, 1.0).unwrap();
        assert!((h - 1.24763).abs() < 1e-5);
        for x in [0.3, -0.7, 0.95] {
            let d = regular_part_single(x, x, -1.0, 1.0).unwrap();
            assert!((d - 2.0 * (2.0 * (1.0 - x * x)).ln()).abs() < 1e-13);
            let lim = regular_part_single(x + 1e-7, x, -1.0, 1.0).unwrap();
            assert!((lim - d).abs() < 1e-5);
        }
        assert!(regular_part_single(0.999999, 0.999999, -1.0, 1.0).unwrap() < -20.0);
    }

    #[test]
    fn affine_transplant() {
        // (2, 6) is (−1, 1) stretched by 2 and shifted by 4
        let g = green_single(4.0, 5.0, 2.0, 6.0).unwrap();
        assert!((g - green_single(0.0, 0.5, -1.0, 1.0).unwrap()).abs() < 1e-13);
        let h = regular_part_single(4.0, 4.0, 2.0, 6.0).unwrap();
        assert!((h - 2.0 * 2f64.ln() - 2.0 * 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn robin_even_and_decreasing() {
        let r = |x: f64| regular_part_single(x, x, -1.0, 1.0).unwrap();
        let mut prev = r(0.0);
        for k in 1..20 {
            let x = k as f64 * 0.05;
            assert!((r(x) - r(-x)).abs() < 1e-13);
            assert!(r(x) < prev);
            prev = r(x);
        }
    }

    #[test]
    fn numeric_table_matches_closed_form() {
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let t = GreenTable::numeric(&dom, 0.01).unwrap();
        let mut err = 0.0f64;
        for z in [-0.6, 0.0, 0.3] {
            for k in 0..40 {
                let x = -0.95 + k as f64 * 0.0475;
                if (x - z).abs() < 0.1 {
                    continue;
                }
                err = err.max((t.green(x, z).unwrap() - green_single(x, z, -1.0, 1.0).unwrap()).abs());
            }
        }
        assert!(err < 1e-4, "{err}");
        assert!((t.robin(0.0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-4);
    }

    #[test]
    fn union_symmetry_and_sign() {
        let dom = IntervalUnion::new(vec![(-2.0, -1.0), (0.5, 2.0)]).unwrap();
        let t = GreenTable::numeric(&dom, 0.01).unwrap();
        let pts = [-1.8, -1.5, -1.2, 0.7, 1.0, 1.6, 1.9];
        let pairs: Vec<_> = pts.iter().flat_map(|&x| pts.iter().map(move |&z| (x, z))).filter(|(x, z)| x != z).collect();
        assert!(t.symmetry_error(&pairs).unwrap() < 1e-3);
        for &(x, z) in &pairs {
            assert!(t.green(x, z).unwrap() > -1e-6);
        }
        let report = green_lower_bound_check(&t, &pairs).unwrap();
        assert!(report.pass);
        assert!(t.green(0.0, 1.0).unwrap() == 0.0);
    }

    #[test]
    fn green_multi_is_harmonic_off_source() {
        let dom = IntervalUnion::new(vec![(-2.0, -1.0), (1.0, 2.0)]).unwrap();
        let grid = Grid::for_domain(&dom, 0.01).unwrap();
        let sys = DirichletSystem::new(&dom, grid).unwrap();
        let (g, _h, z) = green_multi(1.5, &sys).unwrap();
        assert!((z - 1.5).abs() <= 0.25 * grid.h + 1e-12);
        let mut worst = 0.0f64;
        for &i in &sys.interior {
            let x = grid.x(i);
            if (x - z).abs() >= 5.0 * grid.h {
                worst = worst.max(green_halflap(&g, z, &sys, i).unwrap().abs());
            }
        }
        assert!(worst < 1e-9, "{worst}");
        assert!(green_multi(1.001, &sys).is_err());
    }

    #[test]
    fn kelvin_comparison() {
        let dom = IntervalUnion::new(vec![(-3.0, -1.2), (1.2, 3.0)]).unwrap();
        let t = GreenTable::numeric(&dom, 0.01).unwrap();
        for (z, h, bound) in kelvin_check(&t, &[-2.5, -1.6, 1.5, 2.0, 2.8]).unwrap() {
            assert!(h <= bound + 1e-4, "z={z} H={h} bound={bound}");
        }
    }

    #[test]
    fn csv_export_rows() {
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let t = GreenTable::closed_form(&dom).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &[-0.5, 0.0, 0.5], &[0.0, 0.5]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1 + 4);
        assert!(s.starts_with("x,z,G,H"));
    }

    proptest! {
        #[test]
        fn closed_form_symmetric(x in -0.99f64..0.99, z in -0.99f64..0.99, a in -3.0f64..0.0, w in 0.5f64..4.0) {
            prop_assume!((x - z).abs() > 1e-6);
            let (xa, za) = (a + (x + 1.0) * w / 2.0, a + (z + 1.0) * w / 2.0);
            let g1 = green_single(xa, za, a, a + w).unwrap();
            let g2 = green_single(za, xa, a, a + w).unwrap();
            prop_assert!((g1 - g2).abs() < 1e-10 * (1.0 + g1.abs()));
            prop_assert!(g1 >= 0.0);
        }
    }
}
