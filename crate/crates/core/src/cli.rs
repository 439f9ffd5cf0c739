//! Configuration loading, pipeline orchestration and report/CSV emission.
//!
//! Every run is driven by a single TOML config; command-line flags only pick
//! the command and the config path, so a run is reproducible from the one
//! artifact.  Exit codes are a stable contract: 0 pass, 1 usage/config
//! error, 2 Gauss-Bonnet infeasible, 3 positivity failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvature::{certify, relaxed_band_bound, CertificationReport, DirectionParams, GridSpec, Region};
use crate::mollify::{curvature_in_measure, smooth_pipeline, SmoothOptions, SmoothOutcome};
use crate::orbit_space::{
    check_free_action, induced_isotropy, is_simply_connected, small_case, subtorus_lattice,
    validate_disk, Location, WeightedDisk,
};
use crate::profile::{Branch, MetricParams, ProfileG};
use crate::quadrangle::{assemble_polygon, solve_gauss_bonnet, GaussBonnetOutcome, PolygonD};
use crate::metric_total::TotalMetric;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
}

// ---------------------------------------------------------------------------
// Config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub disk: DiskConfig,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub mollify: MollifyConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskConfig {
    /// Torus rank.
    pub n: usize,
    /// Number of disk edges.
    pub m: usize,
    /// One integer weight of length n per edge.
    pub weights: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub nu: f64,
    pub mu: f64,
    pub mu1: f64,
    /// Initial k₂; the Gauss-Bonnet search escalates from here.
    pub k2: f64,
    /// Initial strip height Δ for the search.
    pub big_delta: f64,
    /// x-coordinate of the geodesic chord endpoints.
    pub r: f64,
    /// "shifted" or "principal".
    pub branch: String,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = MetricParams::reference(Branch::Shifted);
        ParamsConfig {
            epsilon: p.epsilon,
            delta: p.delta,
            nu: p.nu,
            mu: p.mu,
            mu1: p.mu1,
            k2: p.k2,
            big_delta: p.big_delta,
            r: p.r,
            branch: "shifted".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub cap_nx: usize,
    pub cap_ny: usize,
    pub deep_nx: usize,
    pub deep_ny: usize,
    /// Direction-sweep resolution per base point.
    pub angles: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { cap_nx: 12, cap_ny: 24, deep_nx: 8, deep_ny: 10, angles: 36 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifyConfig {
    /// Decreasing smoothing radii.
    pub lambda_ladder: Vec<f64>,
    /// Extension margin as a multiple of λ.
    pub sigma_factor: f64,
    /// Right end of the convergence compact (defaulted from the profile).
    pub beta: Option<f64>,
}

impl Default for MollifyConfig {
    fn default() -> Self {
        MollifyConfig { lambda_ladder: vec![1e-2, 1e-3, 1e-4], sigma_factor: 4.0, beta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Required |∫K dA + π/2| of a feasible solve.
    pub gauss_bonnet: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { gauss_bonnet: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub polygon_csv: String,
    pub samples_csv: String,
    pub ladder_csv: String,
    pub report: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            polygon_csv: "polygon.csv".into(),
            samples_csv: "samples.csv".into(),
            ladder_csv: "ladder.csv".into(),
            report: "report.txt".into(),
        }
    }
}

pub fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// TOML parse with the library's location-aware messages surfaced verbatim.
pub fn parse_config(text: &str) -> Result<Config, CliError> {
    toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
}

pub fn config_to_toml(cfg: &Config) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

impl Config {
    pub fn metric_params(&self) -> Result<MetricParams, CliError> {
        let branch = match self.params.branch.as_str() {
            "shifted" => Branch::Shifted,
            "principal" => Branch::Principal,
            other => {
                return Err(CliError::Parse(format!(
                    "params.branch: expected \"shifted\" or \"principal\", got \"{other}\""
                )))
            }
        };
        Ok(MetricParams {
            epsilon: self.params.epsilon,
            delta: self.params.delta,
            nu: self.params.nu,
            big_delta: self.params.big_delta,
            k2: self.params.k2,
            k1: f64::NAN,
            x0: f64::NAN,
            mu1: self.params.mu1,
            mu: self.params.mu,
            r: self.params.r,
            branch,
        })
    }

    pub fn disk(&self) -> Result<WeightedDisk, String> {
        if self.disk.weights.len() != self.disk.m {
            return Err(format!(
                "disk.weights: expected {} rows, got {}",
                self.disk.m,
                self.disk.weights.len()
            ));
        }
        for (i, w) in self.disk.weights.iter().enumerate() {
            if w.len() != self.disk.n {
                return Err(format!(
                    "disk.weights[{i}]: expected length {}, got {}",
                    self.disk.n,
                    w.len()
                ));
            }
        }
        let rows: Vec<&[i64]> = self.disk.weights.iter().map(|w| w.as_slice()).collect();
        WeightedDisk::from_i64(self.disk.n, &rows).map_err(|e| e.to_string())
    }

    fn out_path(&self, name: &str) -> PathBuf {
        Path::new(&self.output.dir).join(name)
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass,
    Usage,
    Infeasible,
    NotPositive,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::Usage => 1,
            ExitStatus::Infeasible => 2,
            ExitStatus::NotPositive => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StageReport {
    pub name: String,
    pub ok: bool,
    pub status: String,
    pub millis: u128,
}

#[derive(Debug)]
pub struct RunReport {
    pub command: String,
    /// Stages in pipeline order; a failure short-circuits everything after.
    pub stages: Vec<StageReport>,
    pub files: Vec<PathBuf>,
    pub exit: ExitStatus,
}

impl RunReport {
    fn new(command: &str) -> RunReport {
        RunReport { command: command.into(), stages: Vec::new(), files: Vec::new(), exit: ExitStatus::Pass }
    }

    fn stage<T, E: std::fmt::Display>(
        &mut self,
        name: &str,
        on_err: ExitStatus,
        f: impl FnOnce() -> Result<(T, String), E>,
    ) -> Option<T> {
        if self.exit != ExitStatus::Pass {
            return None;
        }
        let t0 = Instant::now();
        match f() {
            Ok((value, status)) => {
                self.stages.push(StageReport {
                    name: name.into(),
                    ok: true,
                    status,
                    millis: t0.elapsed().as_millis(),
                });
                Some(value)
            }
            Err(e) => {
                self.stages.push(StageReport {
                    name: name.into(),
                    ok: false,
                    status: e.to_string(),
                    millis: t0.elapsed().as_millis(),
                });
                self.exit = on_err;
                None
            }
        }
    }

    pub fn render(&self) -> String {
        self.render_inner(true)
    }

    /// Like [`render`](Self::render) but without wall-clock timings, so the
    /// output is byte-identical across reruns with the same config.  Used for
    /// the report file written next to the CSVs.
    pub fn render_stable(&self) -> String {
        self.render_inner(false)
    }

    fn render_inner(&self, timings: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command: {}", self.command);
        for s in &self.stages {
            let mark = if s.ok { "ok  " } else { "FAIL" };
            if timings {
                let _ = writeln!(out, "[{mark}] {:<28} {:>6} ms  {}", s.name, s.millis, s.status);
            } else {
                let _ = writeln!(out, "[{mark}] {:<28} {}", s.name, s.status);
            }
        }
        for f in &self.files {
            let _ = writeln!(out, "wrote {}", f.display());
        }
        let _ = writeln!(out, "exit: {}", self.exit.code());
        out
    }
}

fn write_output(report: &mut RunReport, cfg: &Config, name: &str, content: &str) {
    let path = cfg.out_path(name);
    if let Some(parent) = path.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    match std::fs::write(&path, content) {
        Ok(()) => report.files.push(path),
        Err(e) => {
            report.stages.push(StageReport {
                name: format!("write {name}"),
                ok: false,
                status: e.to_string(),
                millis: 0,
            });
            report.exit = ExitStatus::Usage;
        }
    }
}

fn finish(mut report: RunReport, cfg: &Config) -> RunReport {
    let text = report.render_stable();
    write_output(&mut report, cfg, &cfg.output.report.clone(), &text);
    report
}

// ---------------------------------------------------------------------------
// validate

pub fn cmd_validate(cfg: &Config) -> RunReport {
    let mut report = RunReport::new("validate");
    let disk = report.stage("disk", ExitStatus::Usage, || {
        let d = cfg.disk()?;
        let v = validate_disk(&d);
        if v.pass {
            Ok((d, format!("{} edges, all weights primitive, all pairs legal", cfg.disk.m)))
        } else {
            let bad: Vec<String> = v
                .pairs
                .iter()
                .filter(|p| !(p.first_primitive && p.legal))
                .map(|p| {
                    let what = if p.first_primitive { "not legal" } else { "not primitive" };
                    format!("pair ({}, {}): {what}", p.pair.0, p.pair.1)
                })
                .collect();
            Err(bad.join("; "))
        }
    });
    let Some(disk) = disk else { return finish(report, cfg) };

    if cfg.disk.m <= 4 {
        report.stage::<_, String>("small case", ExitStatus::Usage, || {
            let sc = small_case(cfg.disk.m, cfg.disk.n).map_err(|e| e.to_string())?;
            Ok(((), format!("{} — {}; pipeline stops here", sc.model_name, sc.action_description)))
        });
        return finish(report, cfg);
    }

    report.stage("simple connectivity", ExitStatus::Usage, || {
        if is_simply_connected(&disk) {
            Ok(((), "weights span the integer lattice".into()))
        } else {
            Err("weights do not span the integer lattice".to_string())
        }
    });
    report.stage("free action", ExitStatus::Usage, || {
        match check_free_action(&disk) {
            Ok(true) => Ok(((), "subtorus acts freely".into())),
            Ok(false) => Err("subtorus action is not free".to_string()),
            Err(e) => Err(e.to_string()),
        }
    });
    report.stage::<_, String>("isotropy reconstruction", ExitStatus::Usage, || {
        for i in 1..=cfg.disk.m {
            induced_isotropy(&disk, Location::Edge(i)).map_err(|e| e.to_string())?;
            induced_isotropy(&disk, Location::Vertex(i)).map_err(|e| e.to_string())?;
        }
        Ok(((), format!("{} edges and {} vertices match declared weights", cfg.disk.m, cfg.disk.m)))
    });
    finish(report, cfg)
}

// ---------------------------------------------------------------------------
// build

pub struct BuildArtifacts {
    pub metric: TotalMetric,
    pub total: f64,
    pub corner_angles: (f64, f64),
}

fn polygon_csv(polygon: &PolygonD) -> String {
    let mut csv = String::from("edge,kind,x,y\n");
    for e in &polygon.edges {
        for p in &e.points {
            let _ = writeln!(csv, "{},{:?},{:.12e},{:.12e}", e.label, e.kind, p.0, p.1);
        }
    }
    csv
}

/// The CLI admits ν = 0 so the degenerate-bound path is reportable; the
/// strict profile invariants are still enforced by the solve stage.
fn check_params(params: &MetricParams) -> Result<(), String> {
    if params.nu == 0.0 {
        let mut relaxed = *params;
        relaxed.nu = f64::MIN_POSITIVE;
        return relaxed.validate().map_err(|e| e.to_string());
    }
    params.validate().map_err(|e| e.to_string())
}

fn params_stage(report: &mut RunReport, cfg: &Config) -> Option<MetricParams> {
    if cfg.disk.m <= 4 {
        report.stage::<(), _>("params", ExitStatus::Usage, || {
            Err(format!(
                "m = {} is a small case; run the validate command for its model",
                cfg.disk.m
            ))
        });
        return None;
    }
    report.stage::<_, String>("params", ExitStatus::Usage, || {
        let p = cfg.metric_params().map_err(|e| e.to_string())?;
        check_params(&p)?;
        Ok((p, format!("epsilon {}, delta {}, nu {}, branch {}", p.epsilon, p.delta, p.nu, cfg.params.branch)))
    })
}

fn build_stages(report: &mut RunReport, cfg: &Config, params: MetricParams) -> Option<BuildArtifacts> {
    let profile = report.stage::<_, String>("profile", ExitStatus::Usage, || {
        let g = ProfileG::solve(params).map_err(|e| e.to_string())?;
        Ok((g.clone(), format!("k1 = {:.6}, x0 = {:.6}", g.params.k1, g.params.x0)))
    })?;
    let _ = profile;
    let outcome = report.stage("gauss-bonnet", ExitStatus::Usage, || {
        solve_gauss_bonnet(params, -std::f64::consts::FRAC_PI_2).map_err(|e| e.to_string()).map(|o| (o, String::new()))
    })?;
    let (g, quad, total, corner_angles) = match outcome {
        GaussBonnetOutcome::Feasible { profile, quad, total, corner_angles } => {
            let residual = (total + std::f64::consts::FRAC_PI_2).abs();
            let ok = residual < cfg.tolerances.gauss_bonnet;
            let status = format!(
                "total {total:.9}, residual {residual:.3e}, corners ({:.6}, {:.6})",
                corner_angles.0, corner_angles.1
            );
            let last = report.stages.last_mut().unwrap();
            last.status = status;
            if !ok {
                last.ok = false;
                report.exit = ExitStatus::Infeasible;
                return None;
            }
            (profile, quad, total, corner_angles)
        }
        GaussBonnetOutcome::Infeasible(rep) => {
            let last = report.stages.last_mut().unwrap();
            last.ok = false;
            last.status = format!(
                "infeasible: {} (lower bound rate {:.6} = sinh nu)",
                rep.message, rep.lower_bound_rate
            );
            report.exit = ExitStatus::Infeasible;
            return None;
        }
    };
    let polygon = report.stage::<_, String>("polygon", ExitStatus::Usage, || {
        let d = assemble_polygon(&g, &quad, cfg.disk.m).map_err(|e| e.to_string())?;
        let status = format!("height {:.6}, {} edges", d.height, cfg.disk.m);
        Ok((d, status))
    })?;
    let metric = report.stage::<_, String>("metric", ExitStatus::Usage, || {
        let tm = TotalMetric::build(&g, &polygon).map_err(|e| e.to_string())?;
        Ok((tm, format!("{} fiber charts", polygon.m)))
    })?;
    Some(BuildArtifacts { metric, total, corner_angles })
}

pub fn cmd_build(cfg: &Config) -> RunReport {
    let mut report = RunReport::new("build");
    let art = params_stage(&mut report, cfg).and_then(|p| build_stages(&mut report, cfg, p));
    if let Some(art) = art {
        let csv = polygon_csv(&art.metric.polygon);
        write_output(&mut report, cfg, &cfg.output.polygon_csv.clone(), &csv);
    }
    finish(report, cfg)
}

// ---------------------------------------------------------------------------
// certify

/// Closed-form sweep of the relaxed hyperbolic-band estimate over vertical
/// planes, with the frame constant of the μ-scale fibers.  The only positive
/// term of a vertical direction carries tanh ν, so the diagnostic pins down
/// the degeneration at ν = 0 before any solve is attempted.
fn band_diagnostic(params: &MetricParams, n: usize) -> (f64, f64) {
    let c = 1.0 / ((n as f64).sqrt() * params.mu);
    let mut min = f64::INFINITY;
    let mut arg = 0.0;
    for a in 0..128 {
        let tau = std::f64::consts::TAU * a as f64 / 128.0;
        let dirs = DirectionParams { x: (0.0, 0.0), y: (0.0, 0.0), z: (tau.cos(), tau.sin()) };
        let b = relaxed_band_bound(params, n, c, &dirs);
        if b < min {
            min = b;
            arg = tau;
        }
    }
    (min, arg)
}

fn certification_status(rep: &CertificationReport) -> String {
    format!(
        "{} points, {} samples, min ric_X {:.6e} at ({:.4}, {:.4}) [{}], min ric_U {:.6e}",
        rep.points,
        rep.samples,
        rep.min_ric_x,
        rep.argmin_x.point.0,
        rep.argmin_x.point.1,
        rep.argmin_x.region.as_str(),
        rep.min_ric_u,
    )
}

pub fn cmd_certify(cfg: &Config) -> RunReport {
    let mut report = RunReport::new("certify");
    let Some(params) = params_stage(&mut report, cfg) else { return finish(report, cfg) };

    // Closed-form pre-check: runs before any solve so a degenerate bound
    // (e.g. ν = 0) is reported as a positivity failure, not a solver error.
    report.stage("band diagnostic", ExitStatus::NotPositive, || {
        let (min, tau) = band_diagnostic(&params, cfg.disk.n);
        if min > 0.0 {
            Ok(((), format!("relaxed bound min {min:.6e} over vertical planes")))
        } else {
            let x = 1.5 * params.epsilon;
            Err(format!(
                "relaxed bound {min:.6e} at z-angle {tau:.4}, argmin x = {x:.4} [{}]",
                Region::of(&params, x).as_str()
            ))
        }
    });

    let Some(art) = build_stages(&mut report, cfg, params) else { return finish(report, cfg) };
    let tm = &art.metric;
    let params = tm.profile.params;

    let subtorus = report.stage::<_, String>("subtorus", ExitStatus::Usage, || {
        let d = cfg.disk().map_err(|e| e.to_string())?;
        let k = subtorus_lattice(&d).map_err(|e| e.to_string())?;
        let rank = k.rank();
        Ok((k, format!("rank {rank}")))
    });
    let Some(subtorus) = subtorus else { return finish(report, cfg) };

    let mut samples_csv: Option<String> = None;
    report.stage("certification (piecewise)", ExitStatus::NotPositive, || {
        let mut cap = GridSpec::cap_default(tm, cfg.grid.cap_nx, cfg.grid.cap_ny);
        cap.angles = cfg.grid.angles;
        let mut deep = GridSpec::deep_interior(tm, cfg.grid.deep_nx, cfg.grid.deep_ny);
        deep.angles = cfg.grid.angles;
        let cap_rep = certify(tm, &subtorus, &cap).map_err(|e| e.to_string())?;
        let deep_rep = certify(tm, &subtorus, &deep).map_err(|e| e.to_string())?;
        let mut csv = cap_rep.csv.clone();
        csv.push_str(deep_rep.csv.split_once('\n').map(|(_, r)| r).unwrap_or(""));
        samples_csv = Some(csv);
        let k2 = params.k2;
        let deep_dev = (deep_rep.min_ric_x - 1.0 / (k2 * k2)).abs();
        if !cap_rep.pass {
            return Err(format!("cap window failed: {}", certification_status(&cap_rep)));
        }
        if !(deep_rep.min_ric_x > 0.0) {
            return Err(format!("deep window failed: {}", certification_status(&deep_rep)));
        }
        Ok((
            cap_rep.min_ric_x.min(cap_rep.min_ric_u).min(deep_rep.min_ric_x),
            format!(
                "cap: {}; deep: min ric_X {:.6e} (|.-1/k2^2| = {:.2e})",
                certification_status(&cap_rep),
                deep_rep.min_ric_x,
                deep_dev
            ),
        ))
    });
    if let Some(csv) = &samples_csv {
        write_output(&mut report, cfg, &cfg.output.samples_csv.clone(), csv);
    }

    let mut ladder_csv: Option<String> = None;
    report.stage("certification (smoothed)", ExitStatus::NotPositive, || {
        let opts = SmoothOptions {
            ladder: cfg.mollify.lambda_ladder.clone(),
            sigma_factor: cfg.mollify.sigma_factor,
            beta: cfg.mollify.beta,
            cap_grid: (cfg.grid.cap_nx, cfg.grid.cap_ny),
            deep_grid: (cfg.grid.deep_nx, cfg.grid.deep_ny),
            angles: cfg.grid.angles,
            charts_from_resolve: true,
        };
        let outcome = smooth_pipeline(tm, &subtorus, &opts).map_err(|e| e.to_string())?;
        match outcome {
            SmoothOutcome::Certified(cert) => {
                ladder_csv = Some(cert.csv.clone());
                let last = cert.rows.last().unwrap();
                if !cert.pass {
                    return Err(format!(
                        "smoothed min bound {:.6e} at lambda {:.1e}, argmin ({:.4}, {:.4})",
                        last.min_bound, last.lambda, cert.cap_report.argmin.0, cert.cap_report.argmin.1
                    ));
                }
                Ok((
                    (),
                    format!(
                        "final lambda {:.1e}: min bound {:.6e}, sup distance {:.3e}, bad set {:.3e}, gb residual {:.3e}",
                        last.lambda, last.min_bound, last.sup_distance, last.bad_set, cert.gb_residual
                    ),
                ))
            }
            SmoothOutcome::Infeasible(rep) => Err(format!("re-solve infeasible: {}", rep.message)),
        }
    });
    if let Some(csv) = &ladder_csv {
        write_output(&mut report, cfg, &cfg.output.ladder_csv.clone(), csv);
    }
    finish(report, cfg)
}

// ---------------------------------------------------------------------------
// mollify-report

pub fn cmd_mollify_report(cfg: &Config) -> RunReport {
    let mut report = RunReport::new("mollify-report");
    let params = report.stage::<_, String>("params", ExitStatus::Usage, || {
        let p = cfg.metric_params().map_err(|e| e.to_string())?;
        check_params(&p)?;
        Ok((p, String::from("loaded")))
    });
    let Some(params) = params else { return finish(report, cfg) };
    let profile = report.stage::<_, String>("profile", ExitStatus::Usage, || {
        let g = ProfileG::solve(params).map_err(|e| e.to_string())?;
        Ok((g.clone(), format!("k1 = {:.6}", g.params.k1)))
    });
    let Some(g) = profile else { return finish(report, cfg) };

    let mut csv = String::from("lambda,sup_distance,bad_set\n");
    report.stage("convergence ladder", ExitStatus::Usage, || {
        let beta = cfg
            .mollify
            .beta
            .unwrap_or(2.0 * params.epsilon + 0.5 * (g.x_right - 2.0 * params.epsilon));
        let src = {
            let g = g.clone();
            move |x: f64| g.eval_piece(g.piece_of(x), x).0
        };
        let rep = crate::mollify::convergence_report(
            &src,
            &g.breakpoints(),
            -params.delta,
            beta,
            &cfg.mollify.lambda_ladder,
        );
        for (i, &lambda) in rep.lambdas.iter().enumerate() {
            let bad = curvature_in_measure(&g, lambda, beta);
            let _ = writeln!(csv, "{:.6e},{:.12e},{:.12e}", lambda, rep.sup_distances[i], bad);
        }
        if !rep.monotone {
            return Err("sup distances are not decreasing".to_string());
        }
        Ok(((), format!(
            "{} rungs, monotone, converging: {}",
            rep.lambdas.len(),
            rep.converging
        )))
    });
    write_output(&mut report, cfg, &cfg.output.ladder_csv.clone(), &csv);
    finish(report, cfg)
}
