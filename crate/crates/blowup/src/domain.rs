//! Interval unions, uniform grids, sampled functions and the weighted sup norm.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Minimum number of grid nodes strictly inside each component.
pub const MIN_INTERIOR_NODES: usize = 6;
/// Minimum number of cells in a gap between two components.
pub const MIN_GAP_CELLS: usize = 4;

/// Finite union of open intervals with ordered, disjoint closures.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUnion {
    ends: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(ends: Vec<(f64, f64)>) -> Result<Self> {
        if ends.is_empty() {
            return Err(Error::InvalidParameter("domain needs at least one interval".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for &(a, b) in &ends {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::NonFinite("domain endpoints".into()));
            }
            if !(a > prev && b > a) {
                return Err(Error::EndpointsNotIncreasing);
            }
            prev = b;
        }
        Ok(Self { ends })
    }

    pub fn single(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    /// Parses the flat form "a1,b1,a2,b2,...".
    pub fn parse(spec: &str) -> Result<Self> {
        let vals: Vec<f64> = spec
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad domain entry '{s}'")))
            })
            .collect::<Result<_>>()?;
        if vals.is_empty() || !vals.len().is_multiple_of(2) {
            return Err(Error::Config("domain needs an even number of endpoints".into()));
        }
        Self::new(vals.chunks(2).map(|c| (c[0], c[1])).collect())
    }

    pub fn to_spec(&self) -> String {
        self.ends
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn components(&self) -> &[(f64, f64)] {
        &self.ends
    }

    /// Number of components d.
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.ends[0].0
    }

    pub fn hi(&self) -> f64 {
        self.ends[self.ends.len() - 1].1
    }

    /// D = max(|a_1|, |b_d|).
    pub fn diameter(&self) -> f64 {
        self.lo().abs().max(self.hi().abs())
    }

    pub fn measure(&self) -> f64 {
        self.ends.iter().map(|(a, b)| b - a).sum()
    }

    pub fn component_of(&self, x: f64) -> Option<usize> {
        self.ends.iter().position(|&(a, b)| x > a && x < b)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.component_of(x).is_some()
    }

    /// Distance from x to the complement of the union; zero outside.
    pub fn dist_to_complement(&self, x: f64) -> f64 {
        match self.component_of(x) {
            Some(k) => {
                let (a, b) = self.ends[k];
                (x - a).min(b - x)
            }
            None => 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter(format!("scale {s} must be positive")));
        }
        Self::new(self.ends.iter().map(|&(a, b)| (a * s, b * s)).collect())
    }

    pub fn shifted(&self, t: f64) -> Result<Self> {
        Self::new(self.ends.iter().map(|&(a, b)| (a + t, b + t)).collect())
    }
}

impl fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.ends.iter().map(|(a, b)| format!("({a},{b})")).collect();
        write!(f, "{}", parts.join("∪"))
    }
}

/// I_ε = I/ε.
pub fn expand_domain(dom: &IntervalUnion, eps: f64) -> Result<IntervalUnion> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("ε = {eps} must be positive")));
    }
    IntervalUnion::new(dom.ends.iter().map(|&(a, b)| (a / eps, b / eps)).collect())
}

/// Uniform grid over a window [a, a + (n-1)h].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 8 || !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("bad grid [{a},{b}] with {n} nodes")));
        }
        Ok(Self { a, h: (b - a) / (n - 1) as f64, n })
    }

    pub fn with_spacing(a: f64, h: f64, n: usize) -> Result<Self> {
        if n < 8 || !(h > 0.0) || !a.is_finite() || !h.is_finite() {
            return Err(Error::InvalidParameter(format!("bad grid spacing {h}")));
        }
        Ok(Self { a, h, n })
    }

    /// Default window [a_1 - 3D, b_d + 3D], with a_1 placed on a node.
    pub fn for_domain(dom: &IntervalUnion, h: f64) -> Result<Self> {
        Self::for_domain_margin(dom, h, 3.0)
    }

    pub fn for_domain_margin(dom: &IntervalUnion, h: f64, margin: f64) -> Result<Self> {
        if !(h > 0.0) || !(margin > 0.0) {
            return Err(Error::InvalidParameter("grid spacing and margin must be positive".into()));
        }
        let pad = margin * dom.diameter().max(dom.hi() - dom.lo());
        let k = (pad / h).ceil() as usize + 1;
        let a = dom.lo() - k as f64 * h;
        let last = dom.hi() + pad;
        let n = ((last - a) / h - 1e-9).ceil() as usize + 1;
        Self::with_spacing(a, h, n)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.a + i as f64 * self.h
    }

    pub fn b(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.a) / self.h).round();
        k.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { a: self.a * s, h: self.h * s, n: self.n }
    }

    /// Every endpoint of the domain lies within h/2 of a node inside the window.
    pub fn resolves(&self, dom: &IntervalUnion) -> bool {
        dom.components().iter().flat_map(|&(a, b)| [a, b]).all(|e| {
            e > self.a && e < self.b() && (self.x(self.nearest(e)) - e).abs() <= 0.5 * self.h * (1.0 + 1e-9)
        })
    }
}

/// Node indices of the snapped endpoints of each component.
pub fn endpoint_nodes(grid: &Grid, dom: &IntervalUnion) -> Result<Vec<(usize, usize)>> {
    if !grid.resolves(dom) {
        return Err(Error::DomainUnresolved);
    }
    let ends: Vec<(usize, usize)> = dom
        .components()
        .iter()
        .map(|&(a, b)| (grid.nearest(a), grid.nearest(b)))
        .collect();
    for (k, &(lo, hi)) in ends.iter().enumerate() {
        if hi < lo + MIN_INTERIOR_NODES + 1 || lo < 2 || hi + 2 >= grid.n {
            return Err(Error::DomainUnresolved);
        }
        if k + 1 < ends.len() && ends[k + 1].0 < hi + MIN_GAP_CELLS {
            return Err(Error::DomainUnresolved);
        }
    }
    Ok(ends)
}

/// Nodes strictly inside the snapped components, in increasing order.
pub fn interior_nodes(grid: &Grid, dom: &IntervalUnion) -> Result<Vec<usize>> {
    Ok(endpoint_nodes(grid, dom)?
        .into_iter()
        .flat_map(|(lo, hi)| lo + 1..hi)
        .collect())
}

/// How a sampled function continues beyond the computational window.
#[derive(Clone)]
pub enum Closure {
    Zero,
    Constant(f64),
    Analytic(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Closure {
    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Closure::Analytic(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Closure::Zero => 0.0,
            Closure::Constant(c) => *c,
            Closure::Analytic(f) => f(x),
        }
    }
}

impl fmt::Debug for Closure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Closure::Zero => write!(f, "Zero"),
            Closure::Constant(c) => write!(f, "Constant({c})"),
            Closure::Analytic(_) => write!(f, "Analytic"),
        }
    }
}

/// Values on a grid plus the exterior rule beyond its window.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub exterior: Closure,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>, exterior: Closure) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidParameter(format!(
                "{} values for {} nodes",
                values.len(),
                grid.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function".into()));
        }
        Ok(Self { grid, values, exterior })
    }

    pub fn sample(grid: Grid, f: impl Fn(f64) -> f64, exterior: Closure) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect(), exterior)
    }

    /// Samples f on the window and also uses it as the exterior rule.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let f = Arc::new(f);
        let g = f.clone();
        Self::new(grid, grid.nodes().into_iter().map(|x| f(x)).collect(), Closure::Analytic(Arc::new(move |x| g(x))))
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.n], exterior: Closure::Zero }
    }

    /// Cubic interpolation inside the window, closure outside.
    pub fn value_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x < g.a || x > g.b() {
            return self.exterior.eval(x);
        }
        let t = (x - g.a) / g.h;
        let c = (t.floor() as usize).min(g.n - 2);
        let s = c.saturating_sub(1).min(g.n - 4);
        lagrange(&(s..s + 4).map(|j| j as f64).collect::<Vec<_>>(), &self.values[s..s + 4], t)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().fold(0.0, |m, &i| m.max(self.values[i].abs()))
    }
}

/// Lagrange interpolation through (xs, ys) evaluated at t.
pub fn lagrange(xs: &[f64], ys: &[f64], t: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..xs.len() {
        let mut l = 1.0;
        for k in 0..xs.len() {
            if k != j {
                l *= (t - xs[k]) / (xs[j] - xs[k]);
            }
        }
        s += l * ys[j];
    }
    s
}

/// The weight κ: constant, polynomial or tabulated (piecewise linear).
#[derive(Debug, Clone, PartialEq)]
pub enum KappaField {
    Constant(f64),
    Polynomial(Vec<f64>),
    Tabulated { x: Vec<f64>, k: Vec<f64> },
}

impl Default for KappaField {
    fn default() -> Self {
        KappaField::Constant(1.0)
    }
}

impl KappaField {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            KappaField::Constant(c) => *c,
            KappaField::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &a| acc * x + a),
            KappaField::Tabulated { x: xs, k } => {
                let j = table_cell(xs, x);
                let t = ((x - xs[j]) / (xs[j + 1] - xs[j])).clamp(0.0, 1.0);
                k[j] * (1.0 - t) + k[j + 1] * t
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            KappaField::Constant(_) => 0.0,
            KappaField::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, &a)| acc * x + i as f64 * a),
            KappaField::Tabulated { x: xs, k } => {
                let j = table_cell(xs, x);
                (k[j + 1] - k[j]) / (xs[j + 1] - xs[j])
            }
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        match self {
            KappaField::Constant(c) => KappaField::Constant(c * t),
            KappaField::Polynomial(c) => KappaField::Polynomial(c.iter().map(|v| v * t).collect()),
            KappaField::Tabulated { x, k } => KappaField::Tabulated {
                x: x.clone(),
                k: k.iter().map(|v| v * t).collect(),
            },
        }
    }

    /// Checks inf κ > 0 over sampled points of the closure of the domain.
    pub fn validate(&self, dom: &IntervalUnion) -> Result<()> {
        if let KappaField::Tabulated { x, k } = self {
            if x.len() < 2 || x.len() != k.len() || x.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("tabulated κ needs increasing abscissae".into()));
            }
        }
        for &(a, b) in dom.components() {
            for i in 0..=200 {
                let v = self.value(a + (b - a) * i as f64 / 200.0);
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter("κ must be positive on the domain".into()));
                }
            }
        }
        Ok(())
    }
}

fn table_cell(xs: &[f64], x: f64) -> usize {
    match xs.iter().position(|&v| v > x) {
        Some(0) => 0,
        Some(p) => p - 1,
        None => xs.len() - 2,
    }
    .min(xs.len() - 2)
}

/// Concentration points ξ together with the separation parameter δ₀.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigPoint {
    pub xi: Vec<f64>,
    pub delta0: f64,
}

impl ConfigPoint {
    pub fn new(xi: Vec<f64>, delta0: f64) -> Self {
        Self { xi, delta0 }
    }

    pub fn m(&self) -> usize {
        self.xi.len()
    }

    /// Membership in the admissible set: distance δ₀ to the complement and to each other.
    pub fn is_admissible(&self, dom: &IntervalUnion) -> bool {
        self.xi.iter().enumerate().all(|(k, &x)| {
            dom.dist_to_complement(x) >= self.delta0
                && self
                    .xi
                    .iter()
                    .enumerate()
                    .all(|(l, &y)| l == k || (x - y).abs() >= self.delta0)
        })
    }

    pub fn validate(&self, dom: &IntervalUnion) -> Result<()> {
        if self.xi.is_empty() {
            return Err(Error::InvalidParameter("no concentration points".into()));
        }
        if !self.is_admissible(dom) {
            return Err(Error::InvalidParameter(format!(
                "points {:?} violate the δ₀ = {} separation",
                self.xi, self.delta0
            )));
        }
        Ok(())
    }
}

/// Weight ε + Σ (1+|y-η_j|)^{-1-σ} of the star norm.
pub fn star_weight(y: f64, sigma: f64, eta: &[f64], eps: f64) -> f64 {
    eps + eta.iter().map(|&e| (1.0 + (y - e).abs()).powf(-1.0 - sigma)).sum::<f64>()
}

/// sup over nodes of I_ε of |f(y)| divided by the star weight.
pub fn star_norm(f: &GridFunction, dom_eps: &IntervalUnion, sigma: f64, eta: &[f64], eps: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidParameter(format!("σ = {sigma} outside (0,1)")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("ε = {eps} must be positive")));
    }
    let g = &f.grid;
    let mut best: Option<f64> = None;
    for i in 0..g.n {
        let y = g.x(i);
        if dom_eps.contains(y) {
            let r = f.values[i].abs() / star_weight(y, sigma, eta, eps);
            best = Some(best.map_or(r, |b| b.max(r)));
        }
    }
    best.ok_or(Error::DomainUnresolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_validate() {
        let d = IntervalUnion::parse("-2,-1,1,2").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.diameter(), 2.0);
        assert_eq!(d.to_spec(), "-2,-1,1,2");
        assert_eq!(IntervalUnion::parse("1,0"), Err(Error::EndpointsNotIncreasing));
        assert_eq!(IntervalUnion::parse("0,2,1,3"), Err(Error::EndpointsNotIncreasing));
        assert!(IntervalUnion::parse("0,1,2").is_err());
    }

    #[test]
    fn expand_examples() {
        let d = IntervalUnion::single(-1.0, 1.0).unwrap();
        assert_eq!(expand_domain(&d, 0.5).unwrap().components(), &[(-2.0, 2.0)]);
        let d2 = IntervalUnion::parse("-2,-1,1,2").unwrap();
        let e = expand_domain(&d2, 0.1).unwrap();
        for (got, want) in e.components().iter().zip([(-20.0, -10.0), (10.0, 20.0)]) {
            assert!((got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12);
        }
        assert_eq!(expand_domain(&d, 1.0).unwrap(), d);
        assert!(expand_domain(&d, 0.0).is_err());
    }

    #[test]
    fn grid_for_domain_aligns_endpoints() {
        let d = IntervalUnion::parse("-2,-1,1,2").unwrap();
        let g = Grid::for_domain(&d, 0.01).unwrap();
        assert!(g.a < -2.0 - 6.0 + 1e-9 && g.b() >= 2.0 + 6.0 - 1e-9);
        assert!(g.resolves(&d));
        let ends = endpoint_nodes(&g, &d).unwrap();
        assert!((g.x(ends[0].0) + 2.0).abs() < 1e-12);
        assert!((g.x(ends[1].1) - 2.0).abs() < 1e-9);
        let rel = (g.a + (g.n - 1) as f64 * g.h - g.b()).abs() / g.b().abs();
        assert!(rel < 1e-12);
    }

    #[test]
    fn unresolved_domain() {
        let d = IntervalUnion::single(-0.01, 0.01).unwrap();
        let g = Grid::new(-1.0, 1.0, 21).unwrap();
        assert_eq!(interior_nodes(&g, &d), Err(Error::DomainUnresolved));
    }

    #[test]
    fn kappa_variants() {
        let p = KappaField::Polynomial(vec![1.0, 2.0, 3.0]);
        assert!((p.value(2.0) - 17.0).abs() < 1e-14);
        assert!((p.derivative(2.0) - 14.0).abs() < 1e-14);
        let t = KappaField::Tabulated { x: vec![0.0, 1.0, 2.0], k: vec![1.0, 3.0, 2.0] };
        assert!((t.value(0.5) - 2.0).abs() < 1e-14);
        assert!((t.derivative(1.5) + 1.0).abs() < 1e-14);
        let d = IntervalUnion::single(-1.0, 1.0).unwrap();
        assert!(KappaField::Polynomial(vec![0.0, 1.0]).validate(&d).is_err());
    }

    #[test]
    fn admissible_points() {
        let d = IntervalUnion::single(-1.0, 1.0).unwrap();
        assert!(ConfigPoint::new(vec![0.0], 0.1).is_admissible(&d));
        assert!(!ConfigPoint::new(vec![0.95], 0.1).is_admissible(&d));
        assert!(!ConfigPoint::new(vec![0.0, 0.05], 0.1).is_admissible(&d));
    }

    fn expanded_fixture(eps: f64) -> (GridFunction, IntervalUnion) {
        let d = expand_domain(&IntervalUnion::single(-1.0, 1.0).unwrap(), eps).unwrap();
        let g = Grid::for_domain_margin(&d, 0.05, 0.5).unwrap();
        (GridFunction::zeros(g), d)
    }

    #[test]
    fn star_norm_examples() {
        let (f, d) = expanded_fixture(0.1);
        assert_eq!(star_norm(&f, &d, 0.25, &[0.0], 0.1).unwrap(), 0.0);
        // peak profile: ratio maximal at the center, equal to 1/(1+ε)
        let sigma = 0.25;
        let g = GridFunction::sample(f.grid, |y| (1.0 + y.abs()).powf(-1.0 - sigma), Closure::Zero).unwrap();
        let v = star_norm(&g, &d, sigma, &[0.0], 0.1).unwrap();
        let dense = (0..=20000)
            .map(|k| -10.0 + 20.0 * k as f64 / 20000.0)
            .map(|y| (1.0 + y.abs()).powf(-1.0 - sigma) / star_weight(y, sigma, &[0.0], 0.1))
            .fold(0.0, f64::max);
        assert!((v - 1.0 / 1.1).abs() < 1e-12);
        assert!((v - dense).abs() < 1e-12);
        // constant on a huge domain: far-field floor ε dominates
        let (f, d) = expanded_fixture(1e-3);
        let c = GridFunction::sample(f.grid, |_| 2.0, Closure::Zero).unwrap();
        let v = star_norm(&c, &d, sigma, &[0.0], 1e-3).unwrap();
        let far = 2.0 / star_weight(d.hi() - 0.05, sigma, &[0.0], 1e-3);
        assert!((v - far).abs() / far < 1e-3, "{v} vs {far}");
        assert!(v < 2.0 / 1e-3);
    }

    #[test]
    fn star_norm_rejects_empty() {
        let d = IntervalUnion::single(100.0, 101.0).unwrap();
        let g = GridFunction::zeros(Grid::new(-1.0, 1.0, 11).unwrap());
        assert_eq!(star_norm(&g, &d, 0.25, &[0.0], 0.1), Err(Error::DomainUnresolved));
    }

    proptest! {
        #[test]
        fn star_norm_homogeneous(vals in proptest::collection::vec(-5.0f64..5.0, 41), t in -4.0f64..4.0) {
            let d = IntervalUnion::single(-1.0, 1.0).unwrap();
            let g = Grid::new(-2.0, 2.0, 41).unwrap();
            let f = GridFunction::new(g, vals.clone(), Closure::Zero).unwrap();
            let tf = GridFunction::new(g, vals.iter().map(|v| t * v).collect(), Closure::Zero).unwrap();
            let a = star_norm(&f, &d, 0.3, &[0.2], 0.05).unwrap();
            let b = star_norm(&tf, &d, 0.3, &[0.2], 0.05).unwrap();
            prop_assert!((b - t.abs() * a).abs() <= 1e-12 * (1.0 + b.abs()));
        }

        #[test]
        fn star_norm_monotone(vals in proptest::collection::vec(-5.0f64..5.0, 41), bump in proptest::collection::vec(0.0f64..2.0, 41)) {
            let d = IntervalUnion::single(-1.0, 1.0).unwrap();
            let g = Grid::new(-2.0, 2.0, 41).unwrap();
            let f = GridFunction::new(g, vals.clone(), Closure::Zero).unwrap();
            let big = GridFunction::new(g, vals.iter().zip(&bump).map(|(v, b)| v.abs() + b).collect(), Closure::Zero).unwrap();
            prop_assert!(star_norm(&f, &d, 0.25, &[0.0], 0.1).unwrap() <= star_norm(&big, &d, 0.25, &[0.0], 0.1).unwrap());
        }

        #[test]
        fn expand_roundtrip(a in -10.0f64..0.0, w in 0.1f64..5.0, gap in 0.1f64..3.0, eps in 0.01f64..2.0) {
            let d = IntervalUnion::new(vec![(a, a + w), (a + w + gap, a + 2.0 * w + gap)]).unwrap();
            let back = expand_domain(&expand_domain(&d, eps).unwrap(), 1.0 / eps).unwrap();
            for (p, q) in d.components().iter().zip(back.components()) {
                prop_assert!((p.0 - q.0).abs() <= 1e-12 * (1.0 + p.0.abs()));
                prop_assert!((p.1 - q.1).abs() <= 1e-12 * (1.0 + p.1.abs()));
            }
        }
    }
}
