//! Discrete half-Laplacian on uniform grids, the Dirichlet solver on interval
//! unions and the Fourier multiplier on the circle.
//!
//! Rows are built by product integration: the sampled function is replaced by
//! a local cubic interpolant on every cell and the 1/z² kernel is integrated
//! against it exactly up to Gauss quadrature. The two cells around the
//! evaluation node use a single quartic interpolant and the symmetric second
//! difference, so the principal value never has to be split. Within a few
//! cells of a declared breakpoint (an interval endpoint) interpolation is done
//! in the variable √(distance), which captures the square-root profile of
//! Dirichlet solutions.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::domain::{endpoint_nodes, Closure, Grid, GridFunction, IntervalUnion};
use crate::error::{Error, Result};
use crate::quad::gauss_legendre01;

/// Cells closer than this to a breakpoint interpolate in √(distance).
pub const SQRT_ZONE: usize = 16;
const RULE_SIZES: [usize; 4] = [16, 10, 6, 4];
const NEAR_POINTS: usize = 16;
const TAIL_POINTS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    Plain,
    Sqrt(f64),
}

#[derive(Debug, Clone, Copy)]
struct Stencil {
    start: usize,
    len: usize,
    var: Var,
}

#[derive(Debug, Clone, Copy)]
struct CellInfo {
    stencil: Stencil,
    standard: bool,
    touches: bool,
}

/// Quadrature for (−Δ)^{1/2} on a grid, with optional breakpoints.
#[derive(Debug, Clone)]
pub struct PvQuadrature {
    grid: Grid,
    breaks: Vec<usize>,
    cells: Vec<CellInfo>,
    /// Unit-spacing weights of a standard cell at each offset: four cardinal moments and ∫K.
    table: Vec<[f64; 5]>,
    rules: Vec<(Vec<f64>, Vec<f64>)>,
    near_rule: (Vec<f64>, Vec<f64>),
    tail_rule: (Vec<f64>, Vec<f64>),
}

impl PvQuadrature {
    /// Operator without breakpoints, for functions smooth on the whole window.
    pub fn plain(grid: Grid) -> Self {
        Self::build(grid, Vec::new())
    }

    /// Operator with breakpoints at the snapped endpoints of `dom`.
    pub fn for_domain(grid: Grid, dom: &IntervalUnion) -> Result<Self> {
        let ends = endpoint_nodes(&grid, dom)?;
        Ok(Self::build(grid, ends.into_iter().flat_map(|(a, b)| [a, b]).collect()))
    }

    pub fn with_breaks(grid: Grid, mut breaks: Vec<usize>) -> Result<Self> {
        breaks.sort_unstable();
        breaks.dedup();
        let mut prev = 0usize;
        for &b in &breaks {
            if b < 4 || b + 4 >= grid.n || (prev > 0 && b < prev + 4) {
                return Err(Error::DomainUnresolved);
            }
            prev = b;
        }
        Ok(Self::build(grid, breaks))
    }

    fn build(grid: Grid, breaks: Vec<usize>) -> Self {
        let n = grid.n;
        let rules: Vec<_> = RULE_SIZES.iter().map(|&k| gauss_legendre01(k)).collect();
        let mut q = Self {
            grid,
            breaks,
            cells: Vec::with_capacity(n - 1),
            table: Vec::new(),
            rules,
            near_rule: gauss_legendre01(NEAR_POINTS),
            tail_rule: gauss_legendre01(TAIL_POINTS),
        };
        for c in 0..n - 1 {
            let (lo, hi) = q.cell_segment(c);
            let var = q.pick_var(lo, hi, c - lo, hi - (c + 1));
            let start = (c.saturating_sub(1)).clamp(lo, hi - 3);
            let touches = matches!(var, Var::Sqrt(_)) && (q.breaks.contains(&c) || q.breaks.contains(&(c + 1)));
            q.cells.push(CellInfo {
                stencil: Stencil { start, len: 4, var },
                standard: var == Var::Plain && c >= 1 && start == c - 1,
                touches,
            });
        }
        q.table = (0..2 * n - 1).map(|k| q.table_entry(k as isize - (n as isize - 1))).collect();
        q
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    fn cell_segment(&self, c: usize) -> (usize, usize) {
        let lo = self.breaks.iter().rev().find(|&&b| b <= c).copied().unwrap_or(0);
        let hi = self.breaks.iter().find(|&&b| b > c).copied().unwrap_or(self.grid.n - 1);
        (lo, hi)
    }

    fn node_segment(&self, i: usize) -> (usize, usize) {
        let lo = self.breaks.iter().rev().find(|&&b| b < i).copied().unwrap_or(0);
        let hi = self.breaks.iter().find(|&&b| b > i).copied().unwrap_or(self.grid.n - 1);
        (lo, hi)
    }

    fn pick_var(&self, lo: usize, hi: usize, dl: usize, dr: usize) -> Var {
        let left = self.breaks.contains(&lo);
        let right = self.breaks.contains(&hi);
        let choice = match (left, right) {
            (true, true) => Some(if dl <= dr { (lo, dl) } else { (hi, dr) }),
            (true, false) => Some((lo, dl)),
            (false, true) => Some((hi, dr)),
            (false, false) => None,
        };
        match choice {
            Some((b, d)) if d < SQRT_ZONE => Var::Sqrt(self.grid.x(b)),
            _ => Var::Plain,
        }
    }

    fn rule_for(&self, d: usize) -> &(Vec<f64>, Vec<f64>) {
        match d {
            0..=2 => &self.rules[0],
            3..=7 => &self.rules[1],
            8..=29 => &self.rules[2],
            _ => &self.rules[3],
        }
    }

    fn table_entry(&self, o: isize) -> [f64; 5] {
        if o == 0 || o == -1 {
            return [0.0; 5];
        }
        let d = if o >= 1 { o as usize } else { (-o - 1) as usize };
        let (gx, gw) = self.rule_for(d);
        let mut out = [0.0; 5];
        for (v, w) in gx.iter().zip(gw) {
            let y = o as f64 + v;
            let k = w / (y * y);
            let u = y - (o as f64 - 1.0);
            let l = cubic_cardinals(u);
            for j in 0..4 {
                out[j] += k * l[j];
            }
            out[4] += k;
        }
        out
    }

    fn cardinals(&self, st: &Stencil, y: f64, out: &mut [f64; 5]) {
        let h = self.grid.h;
        let mut nodes = [0.0; 5];
        let t = match st.var {
            Var::Plain => {
                for (k, v) in nodes.iter_mut().enumerate().take(st.len) {
                    *v = k as f64;
                }
                (y - self.grid.x(st.start)) / h
            }
            Var::Sqrt(b) => {
                for (k, v) in nodes.iter_mut().enumerate().take(st.len) {
                    *v = ((self.grid.x(st.start + k) - b).abs() / h).sqrt();
                }
                ((y - b).abs() / h).sqrt()
            }
        };
        for j in 0..st.len {
            let mut l = 1.0;
            for k in 0..st.len {
                if k != j {
                    l *= (t - nodes[k]) / (nodes[j] - nodes[k]);
                }
            }
            out[j] = l;
        }
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i == 0 || i + 1 >= self.grid.n {
            return Err(Error::InvalidParameter(format!("node {i} is not strictly inside the window")));
        }
        if self.breaks.contains(&i) {
            return Err(Error::InvalidParameter(format!("node {i} is a breakpoint")));
        }
        Ok(())
    }

    /// Emits the unscaled weights (without 1/π) of row i.
    fn visit_row(&self, i: usize, emit: &mut impl FnMut(usize, f64)) {
        let n = self.grid.n;
        let h = self.grid.h;
        let mut diag = 0.0;
        for c in 0..n - 1 {
            if c + 1 == i || c == i {
                continue;
            }
            let info = &self.cells[c];
            if info.standard {
                let t = &self.table[c + n - 1 - i];
                let s = info.stencil.start;
                emit(s, -t[0] / h);
                emit(s + 1, -t[1] / h);
                emit(s + 2, -t[2] / h);
                emit(s + 3, -t[3] / h);
                diag += t[4] / h;
            } else {
                diag += self.cell_explicit(i, c, emit);
            }
        }
        self.near(i, emit);
        let xi = self.grid.x(i);
        diag += 1.0 / (self.grid.b() - xi) + 1.0 / (xi - self.grid.a);
        emit(i, diag);
    }

    fn cell_explicit(&self, i: usize, c: usize, emit: &mut impl FnMut(usize, f64)) -> f64 {
        let info = &self.cells[c];
        let h = self.grid.h;
        let xi = self.grid.x(i);
        let d = if c > i { c - i } else { i - c - 1 };
        let (gx, gw) = self.rule_for(d);
        let x0 = self.grid.x(c);
        let mut kint = 0.0;
        let mut acc = [0.0; 5];
        let mut l = [0.0; 5];
        for (v, w) in gx.iter().zip(gw) {
            let (y, wt) = match (info.touches, info.stencil.var) {
                (true, Var::Sqrt(b)) => {
                    let s = h * v * v;
                    let y = if (b - x0).abs() < 0.5 * h { b + s } else { b - s };
                    (y, 2.0 * h * v * w)
                }
                _ => (x0 + v * h, w * h),
            };
            let k = wt / ((xi - y) * (xi - y));
            kint += k;
            self.cardinals(&info.stencil, y, &mut l);
            for j in 0..info.stencil.len {
                acc[j] += k * l[j];
            }
        }
        for j in 0..info.stencil.len {
            emit(info.stencil.start + j, -acc[j]);
        }
        kint
    }

    fn near(&self, i: usize, emit: &mut impl FnMut(usize, f64)) {
        let h = self.grid.h;
        let (lo, hi) = self.node_segment(i);
        let start = (i.saturating_sub(2)).clamp(lo, hi - 4);
        let var = self.pick_var(lo, hi, i - lo, hi - i);
        if var == Var::Plain && start + 2 == i {
            let c = 1.0 / (18.0 * h);
            for (k, a) in [1.0, -22.0, 42.0, -22.0, 1.0].iter().enumerate() {
                emit(start + k, a * c);
            }
            return;
        }
        let st = Stencil { start, len: 5, var };
        let xi = self.grid.x(i);
        let (gx, gw) = &self.near_rule;
        let mut acc = [0.0; 5];
        let mut lp = [0.0; 5];
        let mut lm = [0.0; 5];
        for (v, w) in gx.iter().zip(gw) {
            let z = h * (1.0 - v * v);
            let wz = 2.0 * h * v * w / (z * z);
            self.cardinals(&st, xi + z, &mut lp);
            self.cardinals(&st, xi - z, &mut lm);
            for j in 0..5 {
                let li = if start + j == i { 2.0 } else { 0.0 };
                acc[j] += (li - lp[j] - lm[j]) * wz;
            }
        }
        for (j, a) in acc.iter().enumerate() {
            emit(start + j, *a);
        }
    }

    /// −∫ g(y)/(y−x_i)² over the complement of the window (unscaled).
    fn tail_value(&self, i: usize, ext: &Closure) -> f64 {
        let xi = self.grid.x(i);
        let (ra, rb) = (xi - self.grid.a, self.grid.b() - xi);
        match ext {
            Closure::Zero => 0.0,
            Closure::Constant(c) => -c * (1.0 / ra + 1.0 / rb),
            Closure::Analytic(g) => {
                let (gx, gw) = &self.tail_rule;
                let mut s = 0.0;
                for (v, w) in gx.iter().zip(gw) {
                    let v3 = v * v * v;
                    for (r, sign) in [(rb, 1.0), (ra, -1.0)] {
                        let tau0 = 1.0 / r;
                        let y = xi + sign / (tau0 * v3);
                        s += 3.0 * tau0 * v * v * w * g(y);
                    }
                }
                -s
            }
        }
    }

    /// Full row i of the operator (length N, including 1/π).
    pub fn row(&self, i: usize) -> Result<Vec<f64>> {
        self.check_row(i)?;
        let mut w = vec![0.0; self.grid.n];
        self.visit_row(i, &mut |j, v| w[j] += v);
        w.iter_mut().for_each(|v| *v /= PI);
        Ok(w)
    }

    /// Contribution of the exterior closure to row i (including 1/π).
    pub fn tail(&self, i: usize, ext: &Closure) -> f64 {
        self.tail_value(i, ext) / PI
    }

    /// (−Δ)^{1/2} f at node i.
    pub fn eval_node(&self, f: &GridFunction, i: usize) -> Result<f64> {
        if f.grid != self.grid {
            return Err(Error::InvalidParameter("grid mismatch".into()));
        }
        self.check_row(i)?;
        let mut s = 0.0;
        let vals = &f.values;
        self.visit_row(i, &mut |j, v| s += v * vals[j]);
        Ok((s + self.tail_value(i, &f.exterior)) / PI)
    }

    /// (−Δ)^{1/2} f at each listed node.
    pub fn eval_nodes(&self, f: &GridFunction, nodes: &[usize]) -> Result<Vec<f64>> {
        nodes.par_iter().map(|&i| self.eval_node(f, i)).collect()
    }
}

fn cubic_cardinals(u: f64) -> [f64; 4] {
    let (a, b, c, d) = (u, u - 1.0, u - 2.0, u - 3.0);
    [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0]
}

/// (1/π) P.V.∫ (f(x) − f(x+z))/z² dz at the grid node x.
pub fn eval_halflap(f: &GridFunction, x: f64, q: &PvQuadrature) -> Result<f64> {
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("grid function".into()));
    }
    let g = q.grid();
    let i = ((x - g.a) / g.h).round();
    if !(i >= 1.0 && i <= (g.n - 2) as f64) || (g.x(i as usize) - x).abs() > 1e-9 * g.h.max(x.abs() * 1e-3) {
        return Err(Error::InvalidParameter(format!("x = {x} is not an interior grid node")));
    }
    q.eval_node(f, i as usize)
}

/// Collocation system for (−Δ)^{1/2} u = f in I, u = g outside I.
pub struct DirichletSystem {
    pub domain: IntervalUnion,
    pub quad: PvQuadrature,
    pub interior: Vec<usize>,
    row_of: Vec<usize>,
    matrix: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Solution of a Dirichlet problem with its discrete residual.
#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub u: GridFunction,
    pub residual: f64,
    pub flagged: bool,
}

impl DirichletSystem {
    pub fn new(domain: &IntervalUnion, grid: Grid) -> Result<Self> {
        let quad = PvQuadrature::for_domain(grid, domain)?;
        let interior = crate::domain::interior_nodes(&grid, domain)?;
        let n = interior.len();
        let mut row_of = vec![usize::MAX; grid.n];
        for (r, &i) in interior.iter().enumerate() {
            row_of[i] = r;
        }
        let rows: Vec<Vec<f64>> = interior
            .par_iter()
            .map(|&i| {
                let mut out = vec![0.0; n];
                quad.visit_row(i, &mut |j, v| {
                    let r = row_of[j];
                    if r != usize::MAX {
                        out[r] += v / PI;
                    }
                });
                out
            })
            .collect();
        let mut matrix = DMatrix::zeros(n, n);
        for (r, row) in rows.into_iter().enumerate() {
            for (s, v) in row.into_iter().enumerate() {
                matrix[(r, s)] = v;
            }
        }
        if (0..n).any(|r| !(matrix[(r, r)] > 0.0)) {
            return Err(Error::Discretization);
        }
        let lu = matrix.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Discretization);
        }
        Ok(Self { domain: domain.clone(), quad, interior, row_of, matrix, lu })
    }

    pub fn grid(&self) -> &Grid {
        self.quad.grid()
    }

    pub fn size(&self) -> usize {
        self.interior.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Index of node i among the unknowns, if it is interior.
    pub fn row_of(&self, i: usize) -> Option<usize> {
        let r = self.row_of[i];
        (r != usize::MAX).then_some(r)
    }

    /// Tolerance 10·h for accepting a solve.
    pub fn tolerance(&self) -> f64 {
        10.0 * self.grid().h
    }

    /// Values of exterior data at every node (interior nodes set to zero).
    pub fn exterior_values(&self, g: &Closure) -> Vec<f64> {
        let grid = self.grid();
        (0..grid.n)
            .map(|j| if self.row_of[j] == usize::MAX { g.eval(grid.x(j)) } else { 0.0 })
            .collect()
    }

    /// Action of the operator on the exterior part of u at the interior nodes.
    pub fn exterior_action(&self, g: &Closure) -> Vec<f64> {
        let ext = self.exterior_values(g);
        self.interior
            .par_iter()
            .map(|&i| {
                let mut s = 0.0;
                self.quad.visit_row(i, &mut |j, v| {
                    if self.row_of[j] == usize::MAX {
                        s += v * ext[j];
                    }
                });
                (s + self.quad.tail_value(i, g)) / PI
            })
            .collect()
    }

    /// Trapezoid integral over the snapped components of values given at the
    /// interior nodes, with `edge` at every endpoint node.
    pub fn integrate(&self, vals: &[f64], edge: f64) -> f64 {
        let d = self.domain.len() as f64;
        self.grid().h * (vals.iter().sum::<f64>() + d * edge)
    }

    /// Solves A x = b for the interior unknowns.
    pub fn solve_interior(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = self.lu.solve(&DVector::from_column_slice(b)).ok_or(Error::Discretization)?;
        Ok(x.iter().copied().collect())
    }

    /// Solves with right-hand side given at the interior nodes and exterior data g.
    pub fn solve(&self, rhs: &[f64], g: &Closure) -> Result<DirichletSolution> {
        if rhs.len() != self.size() {
            return Err(Error::InvalidParameter("right-hand side length".into()));
        }
        let ext = self.exterior_action(g);
        let b: Vec<f64> = rhs.iter().zip(&ext).map(|(f, e)| f - e).collect();
        let x = self.solve_interior(&b)?;
        let ax = &self.matrix * DVector::from_column_slice(&x);
        let residual = (0..x.len()).fold(0.0f64, |m, r| m.max((ax[r] + ext[r] - rhs[r]).abs()));
        let mut values = self.exterior_values(g);
        for (r, &i) in self.interior.iter().enumerate() {
            values[i] = x[r];
        }
        let u = GridFunction::new(*self.grid(), values, g.clone())?;
        if !residual.is_finite() {
            return Err(Error::Discretization);
        }
        Ok(DirichletSolution { u, residual, flagged: residual > self.tolerance() })
    }

    /// Same as `solve` with the right-hand side sampled from a grid function.
    pub fn solve_gf(&self, h_rhs: &GridFunction, g: &Closure) -> Result<DirichletSolution> {
        let rhs: Vec<f64> = self.interior.iter().map(|&i| h_rhs.values[i]).collect();
        self.solve(&rhs, g)
    }
}

/// One-shot Dirichlet solve on the grid of `h_rhs`.
pub fn solve_dirichlet(dom: &IntervalUnion, h_rhs: &GridFunction, g_ext: &Closure) -> Result<DirichletSolution> {
    DirichletSystem::new(dom, h_rhs.grid)?.solve_gf(h_rhs, g_ext)
}

/// Multipliers |n| of (−Δ)^{1/2} on the circle for |n| ≤ M.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleSpectrum {
    pub modes: usize,
    pub multipliers: Vec<f64>,
}

impl CircleSpectrum {
    pub fn new(modes: usize) -> Self {
        let m = modes as i64;
        Self { modes, multipliers: (-m..=m).map(|n| n.abs() as f64).collect() }
    }

    pub fn multiplier(&self, n: i64) -> f64 {
        self.multipliers[(n + self.modes as i64) as usize]
    }
}

/// Multiplies the coefficient of mode n (array index n + M) by |n|.
pub fn circle_halflap(phi_hat: &[Complex<f64>]) -> Result<Vec<Complex<f64>>> {
    if phi_hat.is_empty() || phi_hat.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter("coefficients must be indexed by n in [-M, M]".into()));
    }
    let spec = CircleSpectrum::new(phi_hat.len() / 2);
    Ok(phi_hat.iter().zip(&spec.multipliers).map(|(c, m)| c * *m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bubble_gf(grid: Grid, mu: f64, xi: f64) -> GridFunction {
        GridFunction::from_fn(grid, move |x| (2.0 * mu / (mu * mu + (x - xi).powi(2))).ln()).unwrap()
    }

    #[test]
    fn constants_are_annihilated() {
        let grid = Grid::new(-4.0, 4.0, 161).unwrap();
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let q = PvQuadrature::for_domain(grid, &dom).unwrap();
        let one = GridFunction::new(grid, vec![1.0; grid.n], Closure::Constant(1.0)).unwrap();
        for i in [3, 50, 61, 70, 80, 99, 140] {
            assert!(q.eval_node(&one, i).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn bubble_center_value() {
        let grid = Grid::new(-20.0, 20.0, 4001).unwrap();
        let q = PvQuadrature::plain(grid);
        let f = bubble_gf(grid, 1.0, 0.0);
        let v = eval_halflap(&f, 0.0, &q).unwrap();
        assert!((v - 2.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn sqrt_profile_gives_one() {
        let grid = Grid::new(-3.0, 3.0, 601).unwrap();
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let q = PvQuadrature::for_domain(grid, &dom).unwrap();
        let f = GridFunction::sample(grid, |x| (1.0 - x * x).max(0.0).sqrt(), Closure::Zero).unwrap();
        let v = eval_halflap(&f, 0.0, &q).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        let worst = (201..400).map(|i| (q.eval_node(&f, i).unwrap() - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn power_profile_sign_and_scale() {
        // |x|^{-1/2}: exact value at 1 is -1/2; node 0 is kept off the grid
        let h = 1e-3;
        let grid = Grid::with_spacing(-400.0 - 0.5 * h, h, 800_002).unwrap();
        let q = PvQuadrature::plain(grid);
        let f = GridFunction::from_fn(grid, |x: f64| x.abs().powf(-0.5)).unwrap();
        let i = grid.nearest(1.0 - 0.5 * h);
        let v = q.eval_node(&f, i).unwrap() * (grid.x(i).abs()).powf(1.5);
        assert!(v < 0.0);
        assert!((v + 0.5).abs() < 0.05, "{v}");
    }

    #[test]
    fn dirichlet_trivial_and_constant_rhs() {
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let grid = Grid::for_domain(&dom, 0.02).unwrap();
        let sys = DirichletSystem::new(&dom, grid).unwrap();
        let z = sys.solve(&vec![0.0; sys.size()], &Closure::Zero).unwrap();
        assert!(z.u.sup_norm() < 1e-14);
        let s = sys.solve(&vec![1.0; sys.size()], &Closure::Zero).unwrap();
        let err = sys
            .interior
            .iter()
            .map(|&i| (s.u.values[i] - (1.0 - grid.x(i).powi(2)).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-5, "{err}");
        assert!(!s.flagged && s.residual < 1e-10);
    }

    #[test]
    fn dirichlet_green_regular_part() {
        let dom = IntervalUnion::single(-1.0, 1.0).unwrap();
        let grid = Grid::for_domain(&dom, 0.01).unwrap();
        let sys = DirichletSystem::new(&dom, grid).unwrap();
        let z = 0.3;
        let g = Closure::analytic(move |y: f64| 2.0 * (y - z).abs().ln());
        let s = sys.solve(&vec![0.0; sys.size()], &g).unwrap();
        let err = sys
            .interior
            .iter()
            .map(|&i| {
                let x = grid.x(i);
                let exact = 2.0 * (1.0 - x * z + ((1.0 - x * x) * (1.0 - z * z)).sqrt()).ln();
                (s.u.values[i] - exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn torsion_error_shrinks_under_refinement() {
        let dom = IntervalUnion::new(vec![(-2.0, -1.0), (0.0, 1.5)]).unwrap();
        let at = |h: f64| {
            let sys = DirichletSystem::new(&dom, Grid::for_domain(&dom, h).unwrap()).unwrap();
            sys.solve(&vec![1.0; sys.size()], &Closure::Zero).unwrap().u.value_at(0.75)
        };
        let (a, b, c) = (at(0.04), at(0.02), at(0.01));
        // successive differences contract
        assert!((c - b).abs() < 0.6 * (b - a).abs(), "{a} {b} {c}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        // nonnegative data give a nonnegative solution
        #[test]
        fn maximum_principle(c in proptest::collection::vec(0.0f64..2.0, 3), ext in 0.0f64..1.0) {
            let dom = IntervalUnion::new(vec![(-1.5, -0.5), (0.25, 1.0)]).unwrap();
            let grid = Grid::for_domain(&dom, 0.025).unwrap();
            let sys = DirichletSystem::new(&dom, grid).unwrap();
            let rhs: Vec<f64> = sys.interior.iter().map(|&i| {
                let x = grid.x(i);
                c[0] + c[1] * x * x + c[2] * (3.0 * x).cos().abs()
            }).collect();
            let s = sys.solve(&rhs, &Closure::analytic(move |y: f64| ext / (1.0 + y * y))).unwrap();
            let min = sys.interior.iter().map(|&i| s.u.values[i]).fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-10, "{min}");
        }
    }

    #[test]
    fn circle_multiplier() {
        let spec = CircleSpectrum::new(4);
        assert_eq!(spec.multiplier(0), 0.0);
        assert_eq!(spec.multiplier(-3), spec.multiplier(3));
        let mut c = vec![Complex::new(0.0, 0.0); 9];
        c[4] = Complex::new(1.0, 0.0);
        c[5] = Complex::new(0.5, 0.0);
        c[3] = Complex::new(0.5, 0.0);
        c[7] = Complex::new(1.0, 0.0);
        let out = circle_halflap(&c).unwrap();
        assert_eq!(out[4], Complex::new(0.0, 0.0));
        assert_eq!(out[5], Complex::new(0.5, 0.0));
        assert_eq!(out[7], Complex::new(3.0, 0.0));
        assert!(circle_halflap(&c[..8]).is_err());
    }

    #[test]
    fn rejects_bad_nodes() {
        let grid = Grid::new(-1.0, 1.0, 21).unwrap();
        let q = PvQuadrature::plain(grid);
        let f = GridFunction::zeros(grid);
        assert!(eval_halflap(&f, -1.0, &q).is_err());
        assert!(eval_halflap(&f, 0.05, &q).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0.5f64..2.0, i in 20usize..180) {
            let grid = Grid::new(-5.0, 5.0, 201).unwrap();
            let dom = IntervalUnion::single(-2.0, 2.0).unwrap();
            let q = PvQuadrature::for_domain(grid, &dom).unwrap();
            prop_assume!(!q.breaks().contains(&i));
            let f = GridFunction::from_fn(grid, move |x| (-(x * s).powi(2)).exp()).unwrap();
            let g = GridFunction::from_fn(grid, |x| 1.0 / (1.0 + x * x)).unwrap();
            let comb = GridFunction::from_fn(grid, move |x| a * (-(x * s).powi(2)).exp() + b / (1.0 + x * x)).unwrap();
            let lhs = q.eval_node(&comb, i).unwrap();
            let rhs = a * q.eval_node(&f, i).unwrap() + b * q.eval_node(&g, i).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn scaling_covariance(tau in 0.5f64..2.0, k in 10usize..70) {
            let grid = Grid::new(-40.0, 40.0, 3201).unwrap();
            let q = PvQuadrature::plain(grid);
            let f = bubble_gf(grid, 1.0, 0.0);
            let ft = GridFunction::from_fn(grid, move |y| (2.0 / (1.0 + (tau * y).powi(2))).ln()).unwrap();
            let i = 1600 + k;
            let y = grid.x(i);
            let lhs = q.eval_node(&ft, i).unwrap();
            let exact = tau * 2.0 / (1.0 + (tau * y).powi(2));
            let base = q.eval_node(&f, 1600).unwrap();
            prop_assert!((lhs - exact).abs() < 1e-4);
            prop_assert!((base - 2.0).abs() < 1e-4);
        }
    }
}
