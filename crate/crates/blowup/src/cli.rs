//! Command-line driver: TOML run configs, per-ε sweeps and reproducible outputs.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::ansatz::{build_bundle, BlowupConfig};
use crate::domain::{Closure, ConfigPoint, GridFunction, IntervalUnion, KappaField};
use crate::error::{Error, Result};
use crate::greens::GreenTable;
use crate::reduced::{full_energy, minimize_xi, XiLandscape};
use crate::reduction::{assemble, end_to_end_residual, outer_reduce, state_record, ReductionOptions, StateRecord};
use crate::verify;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "blowup", version, about = "Blow-up solutions of (−Δ)^{1/2}u = εκe^u on unions of intervals")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated checks for `verify` (mass, residual, pohozaev, hopf, l1, nondegeneracy, barrier, audit, all).
    #[arg(long, global = true, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum Command {
    /// Green function table of the domain.
    Greens,
    /// Full construction over the ε sweep.
    Construct,
    /// Post-hoc checks on a constructed sweep.
    Verify,
    /// Reduced energy landscape and its interior minimiser.
    Landscape,
    /// Non-existence audit on the two-interval family.
    Audit,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum KappaSpec {
    Constant(f64),
    Polynomial(Vec<f64>),
    Tabulated { x: Vec<f64>, k: Vec<f64> },
}

impl Default for KappaSpec {
    fn default() -> Self {
        KappaSpec::Constant(1.0)
    }
}

impl KappaSpec {
    pub fn field(&self) -> KappaField {
        match self {
            KappaSpec::Constant(c) => KappaField::Constant(*c),
            KappaSpec::Polynomial(c) => KappaField::Polynomial(c.clone()),
            KappaSpec::Tabulated { x, k } => KappaField::Tabulated { x: x.clone(), k: k.clone() },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub fixed_point: f64,
    pub outer: f64,
    pub xi: f64,
    pub max_iter: usize,
    pub max_newton: usize,
    pub rbar: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = ReductionOptions::default();
        Self { fixed_point: d.tol_fp, outer: d.tol_c, xi: 1e-6, max_iter: d.max_iter, max_newton: d.max_newton, rbar: d.rbar }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSpec {
    pub delta: f64,
    pub log10_eps: Vec<f64>,
    pub ms: Vec<usize>,
    pub b: Option<f64>,
    pub h: f64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        let d = verify::AuditConfig::default();
        Self { delta: d.delta, log10_eps: d.log10_eps, ms: d.ms, b: d.b, h: d.h }
    }
}

fn d_m() -> usize {
    1
}
fn d_sigma() -> f64 {
    0.25
}
fn d_delta0() -> f64 {
    0.1
}
fn d_h() -> f64 {
    0.1
}
fn d_green_h() -> f64 {
    0.005
}
fn d_box() -> f64 {
    0.01
}
fn d_samples() -> usize {
    21
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Endpoints a₁,b₁,a₂,b₂,…
    pub domain: String,
    #[serde(default)]
    pub kappa: KappaSpec,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default = "d_delta0")]
    pub delta0: f64,
    /// Grid spacing in the expanded variable.
    #[serde(default = "d_h")]
    pub h: f64,
    /// Grid spacing of numeric Green tables.
    #[serde(default = "d_green_h")]
    pub green_h: f64,
    /// Distance of the search box from the boundary.
    #[serde(default = "d_box")]
    pub box_delta: f64,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default)]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub checks: Option<Vec<String>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn domain(&self) -> Result<IntervalUnion> {
        IntervalUnion::parse(&self.domain)
    }

    pub fn validate(&self) -> Result<()> {
        let dom = self.domain()?;
        self.kappa.field().validate(&dom)?;
        if self.eps.is_empty() {
            return Err(Error::Config("empty ε list".into()));
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("ε must lie in (0,1)".into()));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("ε list must be strictly decreasing".into()));
        }
        let t = &self.tolerances;
        if ![t.fixed_point, t.outer, t.xi, t.rbar].iter().all(|&v| v > 0.0) || t.max_iter == 0 {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Config("σ must lie in (0,1)".into()));
        }
        if ![self.h, self.green_h, self.delta0, self.box_delta].iter().all(|&v| v > 0.0) {
            return Err(Error::Config("grid spacings and distances must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        Ok(())
    }

    pub fn options(&self) -> ReductionOptions {
        let t = &self.tolerances;
        ReductionOptions { rbar: t.rbar, tol_fp: t.fixed_point, max_iter: t.max_iter, tol_c: t.outer, max_newton: t.max_newton }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn header(&self) -> Header {
        Header { tool: "blowup".into(), version: VERSION.into(), config_sha256: self.hash(), seed: self.seed }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    fn comment(&self) -> String {
        format!(
            "# tool: {} {}\n# config_sha256: {}\n# seed: {}\n",
            self.tool, self.version, self.config_sha256, self.seed
        )
    }
}

/// Exit status of a numerical or configuration failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Io(_)
        | Error::EndpointsNotIncreasing
        | Error::InvalidParameter(_)
        | Error::TooManyPoints
        | Error::Infeasible(_) => 2,
        _ => 1,
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_csv(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes a CSV body behind the comment header.
fn write_csv(path: &Path, header: &Header, cols: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(header.comment().as_bytes())?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(cols).map_err(io_csv)?;
    for r in rows {
        w.write_record(r).map_err(io_csv)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, header: &Header, body: serde_json::Value) -> Result<()> {
    let mut v = json!({ "header": header });
    if let (Some(o), serde_json::Value::Object(b)) = (v.as_object_mut(), body) {
        o.extend(b);
    }
    let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let cols: Vec<String> = r.headers().map_err(io_csv)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io_csv)?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?);
    }
    Ok((cols, rows))
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub header: Header,
}

impl Context {
    pub fn new(cfg: RunConfig, out: Option<PathBuf>) -> Result<Self> {
        let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
        let header = cfg.header();
        Ok(Self { cfg, out, header })
    }

    fn eps_dir(&self, k: usize) -> PathBuf {
        self.out.join(format!("eps_{k:02}"))
    }

    fn table(&self) -> Result<Arc<GreenTable>> {
        Ok(Arc::new(GreenTable::new(&self.cfg.domain()?, self.cfg.green_h)?))
    }
}

/// Writes greens.csv and greens.json.
pub fn cmd_greens(ctx: &Context) -> Result<()> {
    let dom = ctx.cfg.domain()?;
    let table = ctx.table()?;
    let mut xs = Vec::new();
    for &(a, b) in dom.components() {
        for k in 1..10 {
            xs.push(a + (b - a) * k as f64 / 10.0);
        }
    }
    let mut rows = Vec::new();
    for &z in &xs {
        for &x in &xs {
            if x != z {
                rows.push(vec![num(x), num(z), num(table.green(x, z)?), num(table.regular(x, z)?)]);
            }
        }
    }
    let cols = ["x", "z", "G", "H"].map(String::from);
    write_csv(&ctx.out.join("greens.csv"), &ctx.header, &cols, &rows)?;
    let robin: Vec<(f64, f64)> = xs.iter().map(|&z| Ok((z, table.robin(z)?))).collect::<Result<_>>()?;
    let pairs: Vec<(f64, f64)> = xs.iter().zip(xs.iter().rev()).filter(|(a, b)| a != b).map(|(&a, &b)| (a, b)).collect();
    write_json(
        &ctx.out.join("greens.json"),
        &ctx.header,
        json!({
            "domain": dom.to_spec(),
            "closed_form": table.is_closed_form(),
            "h": ctx.cfg.green_h,
            "robin": robin,
            "symmetry_error": table.symmetry_error(&pairs)?,
        }),
    )
}

/// Interior minimiser of the reduced energy; seeded random restarts join the samples.
pub fn find_xi(cfg: &RunConfig, table: Arc<GreenTable>) -> Result<(XiLandscape, ConfigPoint)> {
    let mut land = XiLandscape::injective(table, cfg.kappa.field(), cfg.m, cfg.box_delta)?;
    if cfg.m <= 3 {
        land.sample(cfg.samples.max(2))?;
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        let p: Vec<f64> = (0..cfg.m)
            .map(|j| {
                let (lo, hi) = land.bounds(j);
                rng.random_range(lo..hi)
            })
            .collect();
        let v = land.value(&p)?;
        land.samples.push((p, v));
    }
    let xi = minimize_xi(&mut land, cfg.tolerances.xi)?;
    Ok((land, ConfigPoint::new(xi.xi, cfg.delta0)))
}

/// Writes landscape.csv and landscape.json.
pub fn cmd_landscape(ctx: &Context) -> Result<()> {
    let (land, xi) = find_xi(&ctx.cfg, ctx.table()?)?;
    let mut buf = Vec::new();
    land.write_csv(&mut buf)?;
    let mut f = fs::File::create(ctx.out.join("landscape.csv"))?;
    f.write_all(ctx.header.comment().as_bytes())?;
    f.write_all(&buf)?;
    write_json(&ctx.out.join("landscape.json"), &ctx.header, json!({ "xi": xi.xi, "minimum": land.minimizer }))
}

/// One row of summary.csv.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub status: String,
    pub state: Option<StateRecord>,
    pub c_max: f64,
    pub mass: f64,
    pub energy: f64,
    pub residual: f64,
}

fn construct_one(ctx: &Context, table: &GreenTable, xi: &ConfigPoint, k: usize, eps: f64) -> Result<SweepRow> {
    let cfg = &ctx.cfg;
    let dom = cfg.domain()?;
    let mut bc = BlowupConfig::new(dom, eps, xi.clone());
    bc.sigma = cfg.sigma;
    bc.kappa = cfg.kappa.field();
    bc.validate()?;
    let sys = bc.expanded_system(cfg.h)?;
    let r = outer_reduce(&bc, table, &sys, &cfg.options())?;
    let (b, s) = (&r.solved.bundle, &r.solved.state);
    let u = assemble(b, s)?;
    let mass = verify::mass(&u, eps, eps, &b.kappa, &sys)?;
    let energy = full_energy(&u, eps, eps, &b.kappa, &sys)?;
    let residual = end_to_end_residual(b, s, &sys)?;

    let dir = ctx.eps_dir(k);
    fs::create_dir_all(&dir)?;
    let g = b.grid();
    let rows: Vec<Vec<String>> = sys
        .interior
        .iter()
        .map(|&i| vec![num(eps * g.x(i)), num(g.x(i)), num(b.big_u.values[i]), num(s.phi.values[i]), num(u.values[i])])
        .collect();
    write_csv(&dir.join("solution.csv"), &ctx.header, &["x", "y", "U", "phi", "u"].map(String::from), &rows)?;
    let rec = state_record(b, s);
    write_json(
        &dir.join("state.json"),
        &ctx.header,
        json!({
            "state": rec,
            "h": cfg.h,
            "grid": { "a": g.a, "h": g.h, "n": g.n },
            "converged": r.converged,
            "newton_steps": r.newton_steps,
            "history": r.history,
            "mass": mass,
            "energy": energy,
            "residual": residual,
        }),
    )?;
    Ok(SweepRow {
        eps,
        status: if r.converged { "ok".into() } else { "outer_not_converged".into() },
        c_max: s.c_max(),
        state: Some(rec),
        mass,
        energy,
        residual,
    })
}

/// Runs the sweep; failures become rows with their error message.
pub fn cmd_construct(ctx: &Context) -> Result<Vec<SweepRow>> {
    let cfg = &ctx.cfg;
    let dom = cfg.domain()?;
    if cfg.m > dom.len() {
        return Err(Error::TooManyPoints);
    }
    let table = ctx.table()?;
    let (_, xi) = find_xi(cfg, table.clone())?;
    let rows: Vec<SweepRow> = cfg
        .eps
        .par_iter()
        .enumerate()
        .map(|(k, &eps)| {
            construct_one(ctx, &table, &xi, k, eps).unwrap_or_else(|e| SweepRow {
                eps,
                status: e.to_string(),
                state: None,
                c_max: f64::NAN,
                mass: f64::NAN,
                energy: f64::NAN,
                residual: f64::NAN,
            })
        })
        .collect();

    let m = cfg.m;
    let mut cols = vec!["eps".to_string()];
    cols.extend((1..=m).map(|j| format!("xi_hat_{j}")));
    cols.extend((1..=m).map(|j| format!("mu_{j}")));
    cols.extend(["c_max", "phi_sup", "mass", "energy", "residual", "status"].map(String::from));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![num(r.eps)];
            match &r.state {
                Some(s) => {
                    v.extend(s.xi.iter().map(|&x| num(x)));
                    v.extend(s.mu.iter().map(|&x| num(x)));
                    v.push(num(r.c_max));
                    v.push(num(s.phi_sup));
                }
                None => v.extend(std::iter::repeat_n(num(f64::NAN), 2 * m + 2)),
            }
            v.extend([num(r.mass), num(r.energy), num(r.residual), r.status.clone()]);
            v
        })
        .collect();
    write_csv(&ctx.out.join("summary.csv"), &ctx.header, &cols, &body)?;
    Ok(rows)
}

pub const DEFAULT_CHECKS: [&str; 7] = ["mass", "residual", "pohozaev", "hopf", "l1", "nondegeneracy", "barrier"];
pub const ALL_CHECKS: [&str; 8] = ["mass", "residual", "pohozaev", "hopf", "l1", "nondegeneracy", "barrier", "audit"];

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub inputs: serde_json::Value,
    pub measured: serde_json::Value,
    pub pass: bool,
}

fn record(check: &str, inputs: serde_json::Value, measured: impl Serialize, pass: bool) -> CheckRecord {
    CheckRecord {
        check: check.into(),
        inputs,
        measured: serde_json::to_value(measured).unwrap_or(serde_json::Value::Null),
        pass,
    }
}

pub fn resolve_checks(list: Option<&[String]>) -> Result<Vec<String>> {
    let list: Vec<String> = match list {
        None => DEFAULT_CHECKS.iter().map(|s| s.to_string()).collect(),
        Some(l) if l.iter().any(|s| s == "all") => ALL_CHECKS.iter().map(|s| s.to_string()).collect(),
        Some(l) => l.iter().map(|s| s.trim().to_string()).collect(),
    };
    if let Some(bad) = list.iter().find(|c| !ALL_CHECKS.contains(&c.as_str())) {
        return Err(Error::Config(format!("unknown check '{bad}'")));
    }
    Ok(list)
}

/// Reruns the selected checks against the files written by `construct`.
pub fn cmd_verify(ctx: &Context, checks: &[String]) -> Result<Vec<CheckRecord>> {
    let cfg = &ctx.cfg;
    let dom = cfg.domain()?;
    let want = |c: &str| checks.iter().any(|s| s == c);
    let per_solution = ["mass", "residual", "pohozaev", "hopf", "l1", "nondegeneracy"].iter().any(|c| want(c));
    let mut out = Vec::new();

    let mut masses = Vec::new();
    if per_solution {
        let table = ctx.table()?;
        for (k, &eps) in cfg.eps.iter().enumerate() {
            let dir = ctx.eps_dir(k);
            let state_path = dir.join("state.json");
            let text = fs::read_to_string(&state_path).map_err(|e| Error::Io(format!("{}: {e}", state_path.display())))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
            let xi: Vec<f64> = serde_json::from_value(v["state"]["xi"].clone()).map_err(|e| Error::Io(e.to_string()))?;
            let (_, rows) = read_csv(&dir.join("solution.csv"))?;

            let mut bc = BlowupConfig::new(dom.clone(), eps, ConfigPoint::new(xi.clone(), cfg.delta0));
            bc.sigma = cfg.sigma;
            bc.kappa = cfg.kappa.field();
            let sys = bc.expanded_system(cfg.h)?;
            if rows.len() != sys.size() {
                return Err(Error::Io(format!("{}: expected {} rows, found {}", dir.display(), sys.size(), rows.len())));
            }
            let g = *sys.grid();
            let mut vals = vec![0.0; g.n];
            for (&i, r) in sys.interior.iter().zip(&rows) {
                vals[i] = r[4];
            }
            let u = GridFunction::new(g, vals, Closure::Zero)?;
            let kappa = cfg.kappa.field();
            let inputs = json!({ "eps": eps, "xi": xi, "h": cfg.h });

            if want("mass") {
                masses.push((eps, verify::mass(&u, eps, eps, &kappa, &sys)?));
            }
            if want("residual") {
                let du = sys.quad.eval_nodes(&u, &sys.interior)?;
                let res = sys
                    .interior
                    .iter()
                    .zip(&du)
                    .map(|(&i, d)| (d - eps * eps * kappa.value(eps * g.x(i)) * u.values[i].exp()).abs() / eps)
                    .fold(0.0, f64::max);
                let tol = 10.0 * eps * cfg.h;
                out.push(record("residual", inputs.clone(), json!({ "sup": res, "tolerance": tol }), res <= tol));
            }
            if want("pohozaev") {
                let straddles = sys.domain.components().iter().any(|&(a, b)| a < 0.0 && b > 0.0);
                if !matches!(kappa, KappaField::Constant(_)) {
                    out.push(record("pohozaev", inputs.clone(), json!({ "skipped": "identity needs constant κ" }), true));
                } else if straddles {
                    out.push(record("pohozaev", inputs.clone(), json!({ "skipped": "a component contains the origin" }), true));
                } else {
                    let r = verify::pohozaev_for_profile(&u, eps, &sys.domain)?;
                    let ok = r.relative_residual < 1e-3;
                    out.push(record("pohozaev", inputs.clone(), r, ok));
                }
            }
            if want("hopf") {
                let mut reps = Vec::new();
                for &(a, b) in sys.domain.components() {
                    reps.push(verify::hopf_bound_check(&u, a, b, Some(&sys.quad))?);
                }
                let ok = reps.iter().all(|r| r.c0.is_some_and(|c| c > 0.0) && r.superharmonic != Some(false));
                out.push(record("hopf", inputs.clone(), reps, ok));
            }
            if want("l1") || want("nondegeneracy") {
                let b = build_bundle(&bc, &sys, &table)?;
                if want("l1") {
                    let r = verify::l1_lower_bound_check(&b, cfg.delta0)?;
                    out.push(record("l1", inputs.clone(), json!({ "ratio": r }), r > 0.0));
                }
                if want("nondegeneracy") {
                    let r = verify::nondegeneracy_check(&b.mu, 64)?;
                    let ok = r.pass;
                    out.push(record("nondegeneracy", json!({ "mu": b.mu, "modes": 64 }), r, ok));
                }
            }
        }
    }
    if want("mass") {
        // quantisation is asymptotic: the error must shrink along the sweep and be small at its end
        let target = 2.0 * PI * cfg.m as f64;
        let errs: Vec<f64> = masses.iter().map(|(_, m)| (m - target).abs() / target).collect();
        let ok = errs.windows(2).all(|w| w[1] < w[0]) && errs.last().is_some_and(|&e| e < 0.1);
        out.insert(
            0,
            record("mass", json!({ "eps": cfg.eps, "target": target }), json!({ "mass": masses, "relative_error": errs }), ok),
        );
    }
    if want("barrier") {
        let radii = [0.0, 5.0, 20.0, 30.0, 50.0, 80.0, 120.0, 160.0, 200.0];
        let r = verify::barrier_check(cfg.sigma, &radii)?;
        let ok = r.pass;
        out.push(record("barrier", json!({ "sigma": cfg.sigma, "radii": radii }), r, ok));
    }
    if want("audit") {
        let a = &cfg.audit;
        let ac = verify::AuditConfig {
            ms: a.ms.clone(),
            delta0: cfg.delta0,
            delta: a.delta,
            b: a.b,
            log10_eps: a.log10_eps.clone(),
            h: a.h,
        };
        let r = verify::nonexistence_audit(&ac)?;
        let ok = r.crossover.is_some();
        out.push(record("audit", json!({ "delta0": cfg.delta0, "delta": a.delta, "log10_eps": a.log10_eps }), r, ok));
    }
    write_json(&ctx.out.join("verify.json"), &ctx.header, json!({ "checks": checks, "records": out }))?;
    Ok(out)
}

/// Writes audit.csv and audit.json.
pub fn cmd_audit(ctx: &Context) -> Result<verify::AuditReport> {
    let cfg = &ctx.cfg;
    let a = &cfg.audit;
    let ac = verify::AuditConfig { ms: a.ms.clone(), delta0: cfg.delta0, delta: a.delta, b: a.b, log10_eps: a.log10_eps.clone(), h: a.h };
    let r = verify::nonexistence_audit(&ac)?;
    let cols = ["m", "log10_eps", "max_eps_mu", "lambda", "l1_domain", "c0", "l1_ratio", "lhs", "rhs", "contradiction"].map(String::from);
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .map(|w| {
            vec![
                w.m.to_string(),
                num(w.log10_eps),
                num(w.max_eps_mu),
                num(w.lambda),
                num(w.l1_domain),
                num(w.c0),
                num(w.l1_ratio),
                num(w.lhs),
                num(w.rhs),
                w.contradiction.to_string(),
            ]
        })
        .collect();
    write_csv(&ctx.out.join("audit.csv"), &ctx.header, &cols, &rows)?;
    write_json(&ctx.out.join("audit.json"), &ctx.header, json!({ "report": r }))?;
    Ok(r)
}

/// Runs one subcommand and returns the process exit code.
pub fn run(args: &Args) -> i32 {
    match run_inner(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_inner(args: &Args) -> Result<i32> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let checks = resolve_checks(args.checks.as_deref().or(cfg.checks.as_deref()))?;
    let ctx = Context::new(cfg, args.out.clone())?;
    let threads = args.parallel.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match args.command {
        Command::Greens => cmd_greens(&ctx).map(|_| 0),
        Command::Landscape => cmd_landscape(&ctx).map(|_| 0),
        Command::Construct => {
            let rows = cmd_construct(&ctx)?;
            for r in &rows {
                println!("eps {:.6e}  mass {:.10}  c_max {:.3e}  {}", r.eps, r.mass, r.c_max, r.status);
            }
            Ok(if rows.iter().all(|r| r.status == "ok") { 0 } else { 1 })
        }
        Command::Verify => {
            let recs = cmd_verify(&ctx, &checks)?;
            for r in &recs {
                println!("{:<14} {}", r.check, if r.pass { "pass" } else { "FAIL" });
            }
            Ok(if recs.iter().all(|r| r.pass) { 0 } else { 1 })
        }
        Command::Audit => {
            let r = cmd_audit(&ctx)?;
            println!("b {}  c0 {:.6}  c1 {:.6}  crossover {:?}  formula m* {}", r.b, r.c0, r.c1, r.crossover, r.m_star_formula);
            Ok(if r.crossover.is_some() { 0 } else { 1 })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "domain = \"-1,1\"\neps = [0.1, 0.05]\n";

    #[test]
    fn defaults_and_kappa_variants() {
        let c = RunConfig::from_toml(BASE).unwrap();
        assert_eq!((c.m, c.sigma, c.seed), (1, 0.25, 0));
        assert_eq!(c.kappa, KappaSpec::Constant(1.0));
        let p = RunConfig::from_toml(&format!("{BASE}kappa = {{ polynomial = [1.0, 0.1] }}\n")).unwrap();
        assert!(matches!(p.kappa.field(), KappaField::Polynomial(ref v) if v.len() == 2));
        let t = RunConfig::from_toml(&format!("{BASE}[kappa.tabulated]\nx = [-1.0, 1.0]\nk = [1.0, 2.0]\n")).unwrap();
        assert!(matches!(t.kappa, KappaSpec::Tabulated { .. }));
        assert!(RunConfig::from_toml(&format!("{BASE}kappa = {{ constant = -1.0 }}\n")).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::from_toml(BASE).unwrap();
        let b = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = RunConfig::from_toml(&format!("{BASE}seed = 9\n")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn validation_errors_map_to_exit_codes() {
        let e = RunConfig::from_toml("domain = \"1,0\"\neps = [0.1]\n").unwrap_err();
        assert_eq!(e.to_string(), "endpoints not increasing");
        assert_eq!(exit_code(&e), 2);
        for bad in ["eps = []", "eps = [0.1, 0.1]", "eps = [1.5]", "eps = [0.1]\nsigma = 1.0", "eps = [0.1]\nm = 0"] {
            let e = RunConfig::from_toml(&format!("domain = \"0,1\"\n{bad}\n")).unwrap_err();
            assert_eq!(exit_code(&e), 2, "{bad}");
        }
        assert_eq!(exit_code(&Error::NoContraction), 1);
    }

    #[test]
    fn check_lists() {
        assert_eq!(resolve_checks(None).unwrap().len(), DEFAULT_CHECKS.len());
        assert_eq!(resolve_checks(Some(&["all".into()])).unwrap().len(), ALL_CHECKS.len());
        assert!(resolve_checks(Some(&["mass".into(), "bogus".into()])).is_err());
    }
}
