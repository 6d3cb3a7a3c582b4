//! Projected linear solver, Picard iteration for the correction φ and the
//! outer loop driving the multipliers c to zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::{build_bundle, error_field, nonlinearity, z0, z1, AnsatzBundle, BlowupConfig};
use crate::domain::{Closure, GridFunction};
use crate::error::{Error, Result};
use crate::fracops::DirichletSystem;
use crate::greens::GreenTable;

pub const DEFAULT_RBAR: f64 = 10.0;

/// Quintic smoothstep on [0,1], clamped outside.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Even cutoff: 1 on |r| ≤ R̄, 0 on |r| ≥ R̄ + 1.
pub fn cutoff(r: f64, rbar: f64) -> f64 {
    1.0 - smoothstep(r.abs() - rbar)
}

/// Kernel elements Z_{0j}, Z_{1j} and cutoffs χ_j restricted to I_ε.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub rbar: f64,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    pub z0: Vec<GridFunction>,
    pub z1: Vec<GridFunction>,
    pub chi: Vec<GridFunction>,
}

impl KernelBasis {
    pub fn new(b: &AnsatzBundle, rbar: f64) -> Result<Self> {
        if !(rbar > 0.0) {
            return Err(Error::InvalidParameter(format!("cutoff radius {rbar} must be positive")));
        }
        let g = *b.grid();
        let mut z0s = Vec::new();
        let mut z1s = Vec::new();
        let mut chis = Vec::new();
        for j in 0..b.m() {
            let p = b.params(j);
            let on = |f: &dyn Fn(f64) -> f64| -> Result<GridFunction> {
                let vals: Vec<f64> = b.interior.iter().map(|&i| f(g.x(i))).collect();
                b.interior_function(&vals)
            };
            z0s.push(on(&|y| z0(&p, y))?);
            z1s.push(on(&|y| z1(&p, y))?);
            chis.push(on(&|y| cutoff(y - p.xi, rbar))?);
        }
        Ok(Self { rbar, eta: b.eta.clone(), mu: b.mu.clone(), z0: z0s, z1: z1s, chi: chis })
    }

    pub fn m(&self) -> usize {
        self.eta.len()
    }

    /// χ_j Z_{1j} at the interior nodes.
    pub fn constraint(&self, j: usize, interior: &[usize]) -> Vec<f64> {
        interior.iter().map(|&i| self.chi[j].values[i] * self.z1[j].values[i]).collect()
    }

    /// M_{jk} = ∫ χ_k Z_{1k} Z_{1j} dy.
    pub fn gram(&self, sys: &DirichletSystem) -> DMatrix<f64> {
        let m = self.m();
        DMatrix::from_fn(m, m, |j, k| {
            let v: Vec<f64> = sys
                .interior
                .iter()
                .map(|&i| self.chi[k].values[i] * self.z1[k].values[i] * self.z1[j].values[i])
                .collect();
            sys.integrate(&v, 0.0)
        })
    }
}

/// Correction φ with multipliers and diagnostics.
#[derive(Debug, Clone)]
pub struct ReductionState {
    pub phi: GridFunction,
    pub c: Vec<f64>,
    /// Backward error of the bordered system.
    pub equation_residual: f64,
    /// max_j |∫ φ χ_j Z_{1j}|.
    pub constraint_residual: f64,
    pub iterations: usize,
    /// ‖φ_{k+1} − φ_k‖_∞ per Picard step.
    pub steps: Vec<f64>,
    pub flagged: bool,
}

impl ReductionState {
    pub fn phi_sup(&self) -> f64 {
        self.phi.sup_norm()
    }

    pub fn c_max(&self) -> f64 {
        self.c.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Bordered system [A − diag W, −B; Bᵀ, 0] for one bundle, factorised once.
pub struct ProjectedSystem<'a> {
    sys: &'a DirichletSystem,
    constraints: Vec<Vec<f64>>,
    kkt: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a> ProjectedSystem<'a> {
    pub fn new(sys: &'a DirichletSystem, w: &GridFunction, basis: &KernelBasis) -> Result<Self> {
        let n = sys.size();
        let m = basis.m();
        let h = sys.grid().h;
        let constraints: Vec<Vec<f64>> = (0..m).map(|j| basis.constraint(j, &sys.interior)).collect();
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(sys.matrix());
        for (r, &i) in sys.interior.iter().enumerate() {
            kkt[(r, r)] -= w.values[i];
        }
        for (j, col) in constraints.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                kkt[(r, n + j)] = -v;
                kkt[(n + j, r)] = h * v;
            }
        }
        let lu = kkt.clone().lu();
        let diag: Vec<f64> = (0..n + m).map(|k| lu.u()[(k, k)].abs()).collect();
        let big = diag.iter().cloned().fold(0.0, f64::max);
        if diag.iter().any(|&d| !(d > 1e-13 * big)) {
            return Err(Error::Resonance);
        }
        Ok(Self { sys, constraints, kkt, lu })
    }

    /// Solves L φ = g + Σ c_j χ_j Z_{1j}, ∫ φ χ_j Z_{1j} = 0, with g at the interior nodes.
    pub fn solve(&self, g: &[f64]) -> Result<ReductionState> {
        let n = self.sys.size();
        let m = self.constraints.len();
        if g.len() != n {
            return Err(Error::InvalidParameter("right-hand side length".into()));
        }
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from_slice(g);
        let x = self.lu.solve(&rhs).ok_or(Error::Resonance)?;
        let r = &self.kkt * &x - &rhs;
        let scale = 1.0 + rhs.amax() + x.amax();
        let equation_residual = r.amax() / scale;
        let phi_vals: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let c: Vec<f64> = x.rows(n, m).iter().copied().collect();
        let constraint_residual = self
            .constraints
            .iter()
            .map(|col| self.sys.integrate(&col.iter().zip(&phi_vals).map(|(a, b)| a * b).collect::<Vec<_>>(), 0.0).abs())
            .fold(0.0, f64::max);
        if !(equation_residual.is_finite() && c.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("projected solve".into()));
        }
        let mut values = vec![0.0; self.sys.grid().n];
        for (r, &i) in self.sys.interior.iter().enumerate() {
            values[i] = phi_vals[r];
        }
        Ok(ReductionState {
            phi: GridFunction::new(*self.sys.grid(), values, Closure::Zero)?,
            c,
            equation_residual,
            constraint_residual,
            iterations: 1,
            steps: Vec::new(),
            flagged: equation_residual > 1e-8,
        })
    }
}

/// One-shot projected solve for right-hand side g.
pub fn solve_projected(g: &GridFunction, basis: &KernelBasis, w: &GridFunction, sys: &DirichletSystem) -> Result<ReductionState> {
    let ps = ProjectedSystem::new(sys, w, basis)?;
    let rhs: Vec<f64> = sys.interior.iter().map(|&i| g.values[i]).collect();
    ps.solve(&rhs)
}

#[derive(Debug, Clone)]
pub struct ReductionOptions {
    pub rbar: f64,
    pub tol_fp: f64,
    pub max_iter: usize,
    pub tol_c: f64,
    pub max_newton: usize,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        Self { rbar: DEFAULT_RBAR, tol_fp: 1e-10, max_iter: 20, tol_c: 1e-6, max_newton: 8 }
    }
}

/// Picard iteration φ ↦ L⁻¹(−ℰ + N(φ)) with the projection built in.
pub fn fixed_point_with(
    ps: &ProjectedSystem<'_>,
    b: &AnsatzBundle,
    err: &GridFunction,
    phi0: Option<GridFunction>,
    opts: &ReductionOptions,
) -> Result<ReductionState> {
    let sys = ps.sys;
    let mut phi = phi0.unwrap_or_else(|| GridFunction::new(*sys.grid(), vec![0.0; sys.grid().n], Closure::Zero).unwrap());
    let mut steps = Vec::new();
    let mut growth = 0;
    for k in 1..=opts.max_iter {
        let nl = nonlinearity(b, &phi)?;
        let g: Vec<f64> = sys.interior.iter().map(|&i| nl.values[i] - err.values[i]).collect();
        let mut next = ps.solve(&g)?;
        let d = next.phi.values.iter().zip(&phi.values).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        if let Some(&last) = steps.last() {
            if d > last {
                growth += 1;
                if growth >= 2 {
                    return Err(Error::NoContraction);
                }
            }
        }
        steps.push(d);
        if d < opts.tol_fp {
            next.iterations = k;
            next.steps = steps;
            return Ok(next);
        }
        phi = next.phi;
    }
    Err(Error::NoContraction)
}

/// Builds the projected system and runs the Picard iteration from φ = 0.
pub fn fixed_point(b: &AnsatzBundle, basis: &KernelBasis, sys: &DirichletSystem, opts: &ReductionOptions) -> Result<ReductionState> {
    let ps = ProjectedSystem::new(sys, &b.w, basis)?;
    let err = error_field(b, sys)?;
    fixed_point_with(&ps, b, &err, None, opts)
}

/// Bundle, basis and converged correction at one configuration.
pub struct Solved {
    pub bundle: AnsatzBundle,
    pub basis: KernelBasis,
    pub state: ReductionState,
}

pub fn solve_at(cfg: &BlowupConfig, gt: &GreenTable, sys: &DirichletSystem, opts: &ReductionOptions) -> Result<Solved> {
    let bundle = build_bundle(cfg, sys, gt)?;
    let basis = KernelBasis::new(&bundle, opts.rbar)?;
    let state = fixed_point(&bundle, &basis, sys, opts)?;
    Ok(Solved { bundle, basis, state })
}

/// Outcome of the outer loop.
pub struct OuterResult {
    pub cfg: BlowupConfig,
    pub solved: Solved,
    pub newton_steps: usize,
    /// max |c| after each accepted step.
    pub history: Vec<f64>,
    /// false when |c| < tol_c was not reached.
    pub converged: bool,
}

/// Newton iteration on c(ξ) = 0 from the configuration in `cfg`, with a
/// central-difference Jacobian and step halving.
pub fn outer_reduce(cfg: &BlowupConfig, gt: &GreenTable, sys: &DirichletSystem, opts: &ReductionOptions) -> Result<OuterResult> {
    let m = cfg.m();
    let mut cur = cfg.clone();
    let mut solved = solve_at(&cur, gt, sys, opts)?;
    let mut history = vec![solved.state.c_max()];
    let fd = 0.5 * cfg.eps;
    let mut steps = 0;
    while solved.state.c_max() >= opts.tol_c && steps < opts.max_newton {
        steps += 1;
        let cols: Vec<Result<Vec<f64>>> = (0..m)
            .into_par_iter()
            .map(|k| {
                let mut p = cur.xi.xi.clone();
                let mut q = cur.xi.xi.clone();
                p[k] += fd;
                q[k] -= fd;
                let cp = solve_at(&cur.with_xi(p), gt, sys, opts)?.state.c;
                let cq = solve_at(&cur.with_xi(q), gt, sys, opts)?.state.c;
                Ok(cp.iter().zip(&cq).map(|(a, b)| (a - b) / (2.0 * fd)).collect())
            })
            .collect();
        let mut jac = DMatrix::zeros(m, m);
        for (k, col) in cols.into_iter().enumerate() {
            for (j, v) in col?.into_iter().enumerate() {
                jac[(j, k)] = v;
            }
        }
        let c = DVector::from_vec(solved.state.c.clone());
        let Some(dx) = jac.lu().solve(&c) else { break };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..6 {
            let trial: Vec<f64> = cur.xi.xi.iter().zip(dx.iter()).map(|(x, d)| x - t * d).collect();
            let tc = cur.with_xi(trial);
            if tc.validate().is_ok() {
                if let Ok(s) = solve_at(&tc, gt, sys, opts) {
                    if s.state.c_max() < solved.state.c_max() {
                        accepted = Some((tc, s));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((tc, s)) = accepted else { break };
        cur = tc;
        solved = s;
        history.push(solved.state.c_max());
    }
    let converged = solved.state.c_max() < opts.tol_c;
    Ok(OuterResult { cfg: cur, solved, newton_steps: steps, history, converged })
}

/// u_ε(εy) = 𝒰(εy) + φ(y) on the y-grid, zero outside I_ε.
pub fn assemble(b: &AnsatzBundle, state: &ReductionState) -> Result<GridFunction> {
    let vals: Vec<f64> = b.big_u.values.iter().zip(&state.phi.values).map(|(u, p)| u + p).collect();
    GridFunction::new(*b.grid(), vals, Closure::Zero)
}

/// sup over I of |(−Δ)^{1/2}u_ε − εκe^{u_ε}| in the original variable.
pub fn end_to_end_residual(b: &AnsatzBundle, state: &ReductionState, sys: &DirichletSystem) -> Result<f64> {
    let u = assemble(b, state)?;
    let du = sys.quad.eval_nodes(&u, &sys.interior)?;
    Ok(sys
        .interior
        .iter()
        .zip(du)
        .map(|(&i, d)| (d - b.w.values[i] * state.phi.values[i].exp()).abs() / b.eps)
        .fold(0.0, f64::max))
}

/// JSON record of a converged state.
#[derive(Debug, Clone, Serialize)]
pub struct StateRecord {
    pub eps: f64,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    pub c: Vec<f64>,
    pub phi_sup: f64,
    pub iterations: usize,
    pub equation_residual: f64,
    pub constraint_residual: f64,
    pub picard_steps: Vec<f64>,
}

pub fn state_record(b: &AnsatzBundle, s: &ReductionState) -> StateRecord {
    StateRecord {
        eps: b.eps,
        xi: b.xi.clone(),
        mu: b.mu.clone(),
        c: s.c.clone(),
        phi_sup: s.phi_sup(),
        iterations: s.iterations,
        equation_residual: s.equation_residual,
        constraint_residual: s.constraint_residual,
        picard_steps: s.steps.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{bubble_density, BubbleParams};
    use crate::domain::{ConfigPoint, Grid, IntervalUnion};
    use crate::fracops::PvQuadrature;

    fn fixture(eps: f64, xi: f64) -> (BlowupConfig, GreenTable, DirichletSystem) {
        let cfg = BlowupConfig::new(IntervalUnion::single(-1.0, 1.0).unwrap(), eps, ConfigPoint::new(vec![xi], 0.1));
        let gt = GreenTable::closed_form(&cfg.domain).unwrap();
        let sys = cfg.expanded_system(0.1).unwrap();
        (cfg, gt, sys)
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0, 10.0), 1.0);
        assert_eq!(cutoff(10.0, 10.0), 1.0);
        assert_eq!(cutoff(-11.0, 10.0), 0.0);
        assert!((cutoff(10.5, 10.0) - 0.5).abs() < 1e-15);
        assert_eq!(cutoff(3.7, 10.0), cutoff(-3.7, 10.0));
    }

    #[test]
    fn kernel_elements_solve_linearised_equation() {
        let grid = Grid::new(-400.0, 400.0, 8001).unwrap();
        let q = PvQuadrature::plain(grid);
        let p = BubbleParams { mu: 1.5, xi: 0.0 };
        let f0 = GridFunction::from_fn(grid, move |y| z0(&p, y)).unwrap();
        let f1 = GridFunction::from_fn(grid, move |y| z1(&p, y)).unwrap();
        for i in (3900..4100).step_by(9) {
            let y = grid.x(i);
            let e = bubble_density(&p, y);
            assert!((q.eval_node(&f0, i).unwrap() - e * z0(&p, y)).abs() < 1e-3, "{y}");
            assert!((q.eval_node(&f1, i).unwrap() - e * z1(&p, y)).abs() < 1e-3, "{y}");
        }
    }

    #[test]
    fn basis_parity() {
        let (cfg, gt, sys) = fixture(0.05, 0.0);
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        let basis = KernelBasis::new(&b, DEFAULT_RBAR).unwrap();
        let g = b.grid();
        for &i in &b.interior {
            let j = g.nearest(-g.x(i));
            assert!((basis.z0[0].values[i] - basis.z0[0].values[j]).abs() < 1e-12);
            assert!((basis.z1[0].values[i] + basis.z1[0].values[j]).abs() < 1e-12);
            if g.x(i).abs() > DEFAULT_RBAR + 1.0 {
                assert_eq!(basis.chi[0].values[i], 0.0);
            }
        }
    }

    #[test]
    fn zero_rhs_and_absorbed_projection() {
        let (cfg, gt, sys) = fixture(0.05, 0.2);
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        let basis = KernelBasis::new(&b, DEFAULT_RBAR).unwrap();
        let ps = ProjectedSystem::new(&sys, &b.w, &basis).unwrap();
        let s0 = ps.solve(&vec![0.0; sys.size()]).unwrap();
        assert_eq!(s0.phi_sup(), 0.0);
        assert_eq!(s0.c, vec![0.0]);
        let g = basis.constraint(0, &sys.interior);
        let s1 = ps.solve(&g).unwrap();
        assert!((s1.c[0] + 1.0).abs() < 1e-9, "{:?}", s1.c);
        assert!(s1.phi_sup() < 1e-9);
        assert!(s1.equation_residual < 1e-12);
    }

    #[test]
    fn picard_fixture() {
        let (cfg, gt, sys) = fixture(0.05, 0.0);
        let opts = ReductionOptions::default();
        let s = solve_at(&cfg, &gt, &sys, &opts).unwrap();
        let st = &s.state;
        assert!(st.iterations <= 20);
        assert!(st.constraint_residual < 1e-10);
        assert!(st.equation_residual < 1e-12);
        assert!(st.c_max() < 1e-9, "{:?}", st.c);
        assert!(st.phi_sup() < 0.5);
        assert_eq!(st.phi.values[0], 0.0);
    }

    #[test]
    fn zero_error_gives_zero_step() {
        let (cfg, gt, sys) = fixture(0.05, 0.0);
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        let basis = KernelBasis::new(&b, DEFAULT_RBAR).unwrap();
        let ps = ProjectedSystem::new(&sys, &b.w, &basis).unwrap();
        let zero = GridFunction::zeros(*b.grid());
        let s = fixed_point_with(&ps, &b, &zero, None, &ReductionOptions::default()).unwrap();
        assert_eq!(s.iterations, 1);
        assert_eq!(s.phi_sup(), 0.0);
    }

    #[test]
    fn picard_is_unique() {
        use rand::{Rng, SeedableRng};
        let (cfg, gt, sys) = fixture(0.05, 0.1);
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        let basis = KernelBasis::new(&b, DEFAULT_RBAR).unwrap();
        let ps = ProjectedSystem::new(&sys, &b.w, &basis).unwrap();
        let err = error_field(&b, &sys).unwrap();
        let opts = ReductionOptions::default();
        let a = fixed_point_with(&ps, &b, &err, None, &opts).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let vals: Vec<f64> = (0..b.grid().n)
            .map(|i| if sys.row_of(i).is_some() { 0.05 * rng.random_range(-1.0..1.0) } else { 0.0 })
            .collect();
        let phi0 = GridFunction::new(*b.grid(), vals, Closure::Zero).unwrap();
        let c = fixed_point_with(&ps, &b, &err, Some(phi0), &opts).unwrap();
        let d = a.phi.values.iter().zip(&c.phi.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(d < 10.0 * opts.tol_fp, "{d}");
    }

    #[test]
    fn outer_loop_off_centre() {
        let (cfg, gt, sys) = fixture(0.05, 0.1);
        let r = outer_reduce(&cfg, &gt, &sys, &ReductionOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.history);
        assert!(r.cfg.xi.xi[0].abs() < 0.05 * 2.0, "{:?}", r.cfg.xi.xi);
        let res = end_to_end_residual(&r.solved.bundle, &r.solved.state, &sys).unwrap();
        assert!(res < sys.tolerance() * 0.05, "{res}");
    }

    #[test]
    fn gram_is_positive() {
        let (cfg, gt, sys) = fixture(0.05, 0.0);
        let b = build_bundle(&cfg, &sys, &gt).unwrap();
        let basis = KernelBasis::new(&b, DEFAULT_RBAR).unwrap();
        let g = basis.gram(&sys);
        assert!(g[(0, 0)] > 0.5, "{g}");
    }

    #[test]
    fn cutoff_radius_sensitivity() {
        let (cfg, gt, sys) = fixture(0.05, 0.0);
        let sups: Vec<f64> = [5.0, 10.0, 20.0]
            .iter()
            .map(|&rbar| {
                let opts = ReductionOptions { rbar, ..Default::default() };
                solve_at(&cfg, &gt, &sys, &opts).unwrap().state.phi_sup()
            })
            .collect();
        assert!(sups.iter().all(|&s| (s - sups[1]).abs() < 0.5 * sups[1]), "{sups:?}");
    }
}
