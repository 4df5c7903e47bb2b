//! Command-line front end. Exit codes: 0 success, 1 verification failure,
//! 2 infeasible or invalid parameters, 3 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;

use crate::ambient::Epsilon;
use crate::correspondence::{
    congruence_check, extract_pmc_data, integrate_cmc_frenet, pmc_to_cmc, weak_congruence_check, CmcFrenetData,
    PmcFrenetData, Reconstruction, WEAK_TOL,
};
use crate::diffgeo::{
    analyze_chart, analyze_cmc, chart_jets, default_grid, holomorphy_residual, Grid, JetMode, Residual, SampledSurface,
    SurfaceInvariants,
};
use crate::error::{Error, Result};
use crate::families::*;
use crate::io::{self, FactorView, Metadata};
use crate::par::Execution;
use crate::profile::ProfileParams;

/// `println!` that ignores a closed stdout (e.g. piping into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! esay {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stderr(), $($t)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_PARAMS: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "pmc", version, about = "Parallel mean curvature surfaces in M²(ε)×M²(ε) and their CMC partners")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write OBJ meshes and a metadata file for a family member.
    Generate(RunConfig),
    /// Run the identity suite; exit 1 if any residual exceeds the tolerance.
    Verify(RunConfig),
    /// Map a PMC surface to its two CMC surfaces and rebuild them.
    Correspond(RunConfig),
    /// Write per-node CSV tables and a residual summary.
    Report(RunConfig),
}

#[derive(Args, Clone, Debug)]
pub struct RunConfig {
    /// invariant_pmc, invariant_cmc, sinh_profile, phi0, torus, psi_lambda, leite, product,
    /// sphere_torus, circle_horocycle, two_horocycles.
    #[arg(long)]
    pub family: String,
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub eps: i32,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub hnorm: Option<f64>,
    #[arg(long, default_value_t = 81)]
    pub nx: usize,
    #[arg(long, default_value_t = 81)]
    pub ny: usize,
    /// `x0,x1,y0,y1`.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Use second-order differences with this step instead of exact jets.
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Draw H² factors in the Poincaré disk (S² factors stereographically).
    #[arg(long)]
    pub poincare: bool,
    /// Lift charts into M²(ε)×ℝ to M²(ε)×M²(ε) by the geodesic inclusion.
    #[arg(long)]
    pub lift: bool,
    /// Scale the second factor (or the height) by this factor: a negative control.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run the grid kernels on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

impl RunConfig {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn mode(&self) -> JetMode {
        self.fd_step.map_or(JetMode::Analytic, JetMode::FiniteDifference)
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 5 || self.ny < 5 {
            return Err(Error::Usage(format!("grid must be at least 5×5, got {}×{}", self.nx, self.ny)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Usage(format!("tolerance must be positive, got {}", self.tol)));
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0) {
                return Err(Error::Usage(format!("fd step must be positive, got {h}")));
            }
        }
        Ok(())
    }

    fn rect(&self) -> Result<Option<Rect>> {
        let Some(d) = &self.domain else { return Ok(None) };
        let v: Vec<f64> = d
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Usage(format!("bad --domain '{d}': {e}")))?;
        match v[..] {
            [x0, x1, y0, y1] => Ok(Some(Rect::new(x0, x1, y0, y1)?)),
            _ => Err(Error::Usage(format!("--domain needs x0,x1,y0,y1, got '{d}'"))),
        }
    }

    fn need(&self, v: Option<f64>, name: &str) -> Result<f64> {
        v.ok_or_else(|| Error::Usage(format!("family {} needs --{name}", self.family)))
    }

    fn epsilon(&self) -> Result<Epsilon> {
        Epsilon::from_sign(self.eps)
    }

    /// The chart named by the configuration, before lifting or perturbation.
    pub fn base_chart(&self) -> Result<ImmersionChart> {
        let rect = self.rect()?;
        let spans = rect.map_or(((-1.0, 1.0), (-1.0, 1.0)), |r| ((r.x0, r.x1), (r.y0, r.y1)));
        let profile = || -> Result<ProfileParams> {
            ProfileParams::new(self.epsilon()?, self.need(self.a, "a")?, self.need(self.b, "b")?, self.c.unwrap_or(0.0))
        };
        let chart = match self.family.as_str() {
            "invariant_pmc" => return invariant_pmc_chart(profile()?, spans.0, spans.1),
            "invariant_cmc" => return invariant_cmc_chart(profile()?, spans.0, spans.1),
            "sinh_profile" => return sinh_profile_member(self.lambda.unwrap_or(1.0), spans.0, spans.1),
            "phi0" => pmc_phi0(self.hnorm.unwrap_or(0.25))?,
            "torus" => cmc_torus(self.a.unwrap_or(2.0), self.b.unwrap_or(1.0))?.0,
            "psi_lambda" => psi_lambda(self.lambda.unwrap_or(1.0))?,
            "leite" => leite(self.hnorm.unwrap_or(0.25))?,
            "product" => product_of_curves(self.epsilon()?, self.need(self.a, "a")?, self.need(self.b, "b")?)?,
            "sphere_torus" => example_sphere_torus(self.need(self.a, "a")?, self.need(self.b, "b")?)?,
            "circle_horocycle" => example_circle_horocycle(self.need(self.a, "a")?)?,
            "two_horocycles" => example_two_horocycles()?,
            other => return Err(Error::Usage(format!("unknown family '{other}'"))),
        };
        match rect {
            Some(r) => {
                let d = chart.domain.intersect(&r)?;
                Ok(chart.with_domain(d))
            }
            None => Ok(chart),
        }
    }

    /// The chart with `--lift` and `--perturb` applied.
    pub fn chart(&self) -> Result<ImmersionChart> {
        let mut chart = self.base_chart()?;
        if self.lift && chart.target != Target::Product {
            chart = geodesic_inclusion(&chart)?;
        }
        if let Some(s) = self.perturb {
            chart = match chart.target {
                Target::Product => perturb_second_factor(&chart, s)?,
                _ => scale_height(&chart, s)?,
            };
        }
        Ok(chart)
    }

    fn grid(&self, chart: &ImmersionChart) -> Result<Grid> {
        default_grid(chart, self.nx, self.ny, self.mode())
    }

    fn stem(&self) -> String {
        self.family.replace(|c: char| !c.is_ascii_alphanumeric() && c != '_', "_")
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.out.join(format!("{}{suffix}", self.stem()))
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Domain(_) | Error::Infeasible(_) => EXIT_PARAMS,
        Error::Io(_) => EXIT_IO,
        Error::Precondition(_) | Error::Verification(_) | Error::Internal(_) => EXIT_VERIFY,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARAMS } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Generate(c) => c.validate().and_then(|_| cmd_generate(c)),
        Command::Verify(c) => c.validate().and_then(|_| cmd_verify(c)),
        Command::Correspond(c) => c.validate().and_then(|_| cmd_correspond(c)),
        Command::Report(c) => c.validate().and_then(|_| cmd_report(c)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            esay!("error: {e}");
            exit_code(&e)
        }
    }
}

fn base_metadata(cfg: &RunConfig, chart: &ImmersionChart, grid: &Grid, command: &str) -> Metadata {
    let mut m = Metadata::default();
    m.push("command", command);
    m.push("family", &chart.family);
    m.push("eps", chart.eps.value());
    for (k, v) in chart.params.iter().filter(|(k, _)| k != "eps") {
        m.push(format!("param.{k}"), v);
    }
    m.push("target", format!("{:?}", chart.target));
    m.push("grid", format!("{}x{}", grid.nx, grid.ny));
    m.push("domain", grid.rect());
    m.push(
        "jets",
        match cfg.mode() {
            JetMode::Analytic => "analytic".to_string(),
            JetMode::FiniteDifference(h) => format!("finite_difference({h})"),
        },
    );
    m.push("tol", cfg.tol);
    for n in &chart.notes {
        m.push("note", n);
    }
    m
}

fn summarize_pmc(m: &mut Metadata, inv: &SurfaceInvariants) {
    let c = inv.center();
    m.push("h_norm", format!("{:.12e}", c.h_norm));
    m.push("conformal_defect", format!("{:.3e}", inv.conformal_defect()));
    m.push("parallelism", format!("{:.3e}", inv.parallelism()));
    for j in 0..2 {
        m.push(format!("c{}_range", j + 1), format!("{:.9},{:.9}", inv.min_over(|p| p.c[j]), inv.max_over(|p| p.c[j])));
        m.push(format!("theta{}_center", j + 1), fmt_c(c.theta[j]));
        m.push(format!("theta{}_spread", j + 1), format!("{:.3e}", inv.theta_spread(j)));
    }
}

fn fmt_c(z: C64) -> String {
    format!("{:.12e}{:+.12e}i", z.re, z.im)
}

fn cmd_generate(cfg: &RunConfig) -> Result<i32> {
    let chart = cfg.chart()?;
    let grid = cfg.grid(&chart)?;
    let exec = cfg.exec();
    let surface = SampledSurface::from_chart(&chart, &grid, exec)?;
    let view = if cfg.poincare { FactorView::Disk } else { FactorView::Model };
    let mut meta = base_metadata(cfg, &chart, &grid, "generate");
    let mut files = Vec::new();
    if chart.target == Target::Product {
        for (which, name) in [(0, "_phi.obj"), (1, "_psi.obj")] {
            let v = io::factor_vertices(&surface, which, view)?;
            let path = cfg.path(name);
            let comment = format!("{} factor {} ({})", chart.family, which + 1, io::view_name(chart.eps, view));
            io::write_file(&path, &io::obj_string(&grid, &v, &comment)?)?;
            files.push(path);
        }
        meta.push("view", io::view_name(chart.eps, view));
        let inv = analyze_chart(&chart, &grid, cfg.mode(), exec)?;
        summarize_pmc(&mut meta, &inv);
    } else {
        let v = io::line_vertices(&surface)?;
        let path = cfg.path(".obj");
        let comment = format!("{}: projected factor in the plane, height on the third axis", chart.family);
        io::write_file(&path, &io::obj_string(&grid, &v, &comment)?)?;
        files.push(path);
        meta.push("view", io::view_name(chart.eps, FactorView::Disk));
        let jets = chart_jets(&chart, &grid, cfg.mode(), exec)?;
        let inv = analyze_cmc(chart.eps, &grid, &jets, exec)?;
        meta.push("h", format!("{:.12e}", inv.center().h));
        meta.push("h_spread", format!("{:.3e}", inv.h_spread()));
        meta.push("theta_ar_center", fmt_c(inv.center().theta_ar));
        meta.push("theta_ar_spread", format!("{:.3e}", inv.theta_spread()));
        if let Some((px, py)) = chart.periods {
            meta.push("periods", format!("{px:.15e},{py:.15e}"));
        }
    }
    let meta_path = cfg.path(".meta");
    io::write_file(&meta_path, &meta.to_string())?;
    files.push(meta_path);
    for f in &files {
        say!("wrote {}", f.display());
    }
    Ok(EXIT_OK)
}

/// One line of a verification report.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub description: String,
    pub value: f64,
    pub tol: f64,
}

impl Check {
    fn new(name: impl Into<String>, description: impl Into<String>, value: f64, tol: f64) -> Self {
        Self { name: name.into(), description: description.into(), value, tol }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.tol
    }

    fn from_residual(r: &Residual, tol: f64) -> Self {
        Self::new(r.name, r.description, r.value, tol)
    }
}

fn holomorphy_check(name: &str, grid: &Grid, field: &[C64], tol: f64) -> Result<Check> {
    let h = holomorphy_residual(grid, field)?;
    let big = field.iter().map(|z| z.norm()).fold(1.0, f64::max);
    Ok(Check::new(name, "max |∂z̄ θ| / max(1, max |θ|)", h.max_dzbar / big, tol))
}

fn pmc_checks(cfg: &RunConfig, chart: &ImmersionChart, grid: &Grid) -> Result<Vec<Check>> {
    let tol = cfg.tol;
    let inv = analyze_chart(chart, grid, cfg.mode(), cfg.exec())?;
    let mut out = vec![
        Check::new("conformal", "|⟨Φx,Φx⟩ − ⟨Φy,Φy⟩| + 2|⟨Φx,Φy⟩| over e^{2u}", inv.conformal_defect(), tol),
        Check::new("parallel_mean_curvature", "|∇⊥H| / |H|", inv.parallelism(), tol),
    ];
    out.extend(inv.identity_residuals().iter().map(|r| Check::from_residual(r, tol)));
    for j in 0..2 {
        let field: Vec<C64> = inv.points.iter().map(|p| p.theta[j]).collect();
        out.push(holomorphy_check(&format!("hopf{}_holomorphic", j + 1), grid, &field, tol)?);
    }
    if chart.family == "phi0" {
        let m = inv.max_over(|p| p.theta[0].norm().max(p.theta[1].norm()));
        out.push(Check::new("hopf_vanishing", "max |θ_j|", m, 1e-7));
    }
    Ok(out)
}

fn cmc_checks(cfg: &RunConfig, chart: &ImmersionChart, grid: &Grid) -> Result<Vec<Check>> {
    let tol = cfg.tol;
    let jets = chart_jets(chart, grid, cfg.mode(), cfg.exec())?;
    let inv = analyze_cmc(chart.eps, grid, &jets, cfg.exec())?;
    let h = inv.center().h;
    Ok(vec![
        Check::new("conformal", "conformal defect over e^{2u}", inv.max_over(|p| p.conformal_defect), tol),
        Check::new("constant_mean_curvature", "(max H − min H) / max(1, H)", inv.h_spread() / h.max(1.0), tol),
        holomorphy_check("abresch_rosenberg_holomorphic", grid, &inv.theta_field(), tol)?,
    ])
}

fn all_checks(cfg: &RunConfig, chart: &ImmersionChart) -> Result<Vec<Check>> {
    let grid = cfg.grid(chart)?;
    if chart.target == Target::Product {
        return pmc_checks(cfg, chart, &grid);
    }
    let mut out = cmc_checks(cfg, chart, &grid)?;
    let lifted = geodesic_inclusion(chart)?;
    for mut c in pmc_checks(cfg, &lifted, &grid)? {
        c.name = format!("lifted.{}", c.name);
        out.push(c);
    }
    Ok(out)
}

fn format_checks(checks: &[Check]) -> String {
    let w = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    checks
        .iter()
        .map(|c| {
            format!(
                "{:<w$}  {:.3e}  tol {:.1e}  {}  {}\n",
                c.name,
                c.value,
                c.tol,
                if c.passed() { "PASS" } else { "FAIL" },
                c.description
            )
        })
        .collect()
}

fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let chart = cfg.chart()?;
    let checks = all_checks(cfg, &chart)?;
    let text = format_checks(&checks);
    let path = cfg.path("_verify.txt");
    io::write_file(&path, &format!("# {}\n{text}", chart.family))?;
    say!("{}", text.trim_end());
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        say!("all {} checks passed; report in {}", checks.len(), path.display());
        Ok(EXIT_OK)
    } else {
        esay!("failed: {}", failed.join(", "));
        Ok(EXIT_VERIFY)
    }
}

/// Outcome of one side of a correspondence run.
pub struct CorrespondSide {
    pub data: CmcFrenetData,
    pub reconstruction: Reconstruction,
    /// Largest `|H − |H_source||` over the rebuilt chart.
    pub h_mismatch: f64,
    /// Largest `|2θ_AR − θ_j|`, rebuilt against source.
    pub theta_mismatch: f64,
}

/// Outcome of a full correspondence run.
pub struct Correspondence {
    pub pmc: PmcFrenetData,
    pub round_trip: f64,
    pub sides: [CorrespondSide; 2],
    pub weakly_congruent: bool,
    pub weak_distance: f64,
    pub congruent: bool,
    pub strict_distance: f64,
    /// Largest `|C₁ − C₂| + |γ₁ − γ₂| + |f₁ − f₂|`: zero when Φ factorizes.
    pub factor_defect: f64,
}

/// Extracts the PMC data of `chart`, maps it to both CMC data sets and
/// rebuilds each CMC chart.
pub fn correspond(
    chart: &ImmersionChart,
    grid: &Grid,
    mode: JetMode,
    exec: Execution,
    tol: f64,
) -> Result<Correspondence> {
    let pmc = extract_pmc_data(chart, grid, mode, exec, tol)?;
    let source = analyze_chart(chart, grid, mode, exec)?;
    let side = |j: usize| -> Result<CorrespondSide> {
        let data = pmc_to_cmc(&pmc, j, tol)?;
        let rec = integrate_cmc_frenet(&data, exec, tol)?;
        let (inner, jets) = rec.surface.jets()?;
        let inv = analyze_cmc(chart.eps, &inner, &jets, exec)?;
        let h_mismatch = inv.max_over(|p| (p.h - pmc.h_norm).abs());
        let mut theta_mismatch = 0.0f64;
        for m in 0..inner.len() {
            let (i, jj) = inner.ij(m);
            let src = source.points[grid.idx(2 * (i + 2), 2 * (jj + 2))].theta[j - 1];
            theta_mismatch = theta_mismatch.max((2.0 * inv.points[m].theta_ar - src).norm());
        }
        Ok(CorrespondSide { data, reconstruction: rec, h_mismatch, theta_mismatch })
    };
    let sides = [side(1)?, side(2)?];
    let back = crate::correspondence::cmc_to_pmc(&sides[0].data, &sides[1].data)?;
    let round_trip = back.max_difference(&pmc)?;
    let (a, b) = (&sides[0].reconstruction.surface, &sides[1].reconstruction.surface);
    let weak = weak_congruence_check(a, b, WEAK_TOL)?;
    let strict = congruence_check(a, b, WEAK_TOL)?;
    let factor_defect = (0..grid.len())
        .map(|k| {
            (pmc.c[0][k] - pmc.c[1][k]).abs()
                + (pmc.gamma[0][k] - pmc.gamma[1][k]).norm()
                + (pmc.f[0][k] - pmc.f[1][k]).norm()
        })
        .fold(0.0, f64::max);
    Ok(Correspondence {
        pmc,
        round_trip,
        sides,
        weakly_congruent: weak.congruent,
        weak_distance: weak.distance,
        congruent: strict.congruent,
        strict_distance: strict.distance,
        factor_defect,
    })
}

fn cmd_correspond(cfg: &RunConfig) -> Result<i32> {
    let mut chart = cfg.chart()?;
    if chart.target != Target::Product {
        chart = geodesic_inclusion(&chart)?;
    }
    let grid = cfg.grid(&chart)?;
    let res = correspond(&chart, &grid, cfg.mode(), cfg.exec(), cfg.tol)?;
    let mut meta = base_metadata(cfg, &chart, &grid, "correspond");
    meta.push("h_norm", format!("{:.12e}", res.pmc.h_norm));
    meta.push("data_round_trip", format!("{:.3e}", res.round_trip));
    let mut checks = vec![Check::new("data_round_trip", "pmc → (cmc, cmc) → pmc", res.round_trip, 1e-6)];
    for (j, s) in res.sides.iter().enumerate() {
        let j1 = j + 1;
        let path = cfg.path(&format!("_cmc{j1}.obj"));
        let v = io::line_vertices(&s.reconstruction.surface)?;
        let comment = format!("CMC surface {j1} rebuilt from the Frenet data of {}", chart.family);
        io::write_file(&path, &io::obj_string(&s.reconstruction.surface.grid, &v, &comment)?)?;
        io::write_file(&cfg.path(&format!("_cmc{j1}_data.csv")), &io::cmc_data_csv(&s.data))?;
        meta.push(format!("cmc{j1}.h_mismatch"), format!("{:.3e}", s.h_mismatch));
        meta.push(format!("cmc{j1}.theta_mismatch"), format!("{:.3e}", s.theta_mismatch));
        meta.push(format!("cmc{j1}.loop_defect"), format!("{:.3e}", s.reconstruction.loop_defect));
        meta.push(format!("cmc{j1}.eta_loop"), format!("{:.3e}", s.data.eta_loop));
        checks.push(Check::new(format!("cmc{j1}.mean_curvature"), "max |H_j − |H||", s.h_mismatch, cfg.tol));
        checks.push(Check::new(format!("cmc{j1}.hopf"), "max |2θ_AR − θ_j|", s.theta_mismatch, cfg.tol));
    }
    io::write_file(&cfg.path("_pmc_data.csv"), &io::pmc_data_csv(&res.pmc))?;
    meta.push("weakly_congruent", res.weakly_congruent);
    meta.push("weak_distance", format!("{:.3e}", res.weak_distance));
    meta.push("congruent", res.congruent);
    meta.push("congruent_distance", format!("{:.3e}", res.strict_distance));
    meta.push("factorizing_defect", format!("{:.3e}", res.factor_defect));
    let path = cfg.path("_correspondence.txt");
    let commented: String = format_checks(&checks).lines().map(|l| format!("# {l}\n")).collect();
    io::write_file(&path, &format!("{meta}{commented}"))?;
    say!("{}", format_checks(&checks).trim_end());
    say!(
        "weakly congruent: {} (distance {:.3e}); congruent: {} (distance {:.3e})",
        res.weakly_congruent,
        res.weak_distance,
        res.congruent,
        res.strict_distance
    );
    say!("report in {}", path.display());
    Ok(if checks.iter().all(Check::passed) { EXIT_OK } else { EXIT_VERIFY })
}

fn cmd_report(cfg: &RunConfig) -> Result<i32> {
    let chart = cfg.chart()?;
    let grid = cfg.grid(&chart)?;
    let exec = cfg.exec();
    let mut written: Vec<PathBuf> = Vec::new();
    let mut put = |p: PathBuf, s: &str| -> Result<()> {
        io::write_file(&p, s)?;
        written.push(p);
        Ok(())
    };
    if chart.target == Target::Product {
        let inv = analyze_chart(&chart, &grid, cfg.mode(), exec)?;
        put(cfg.path("_invariants.csv"), &io::pmc_invariants_csv(&inv))?;
        if let Ok(d) = PmcFrenetData::from_invariants(&inv, cfg.tol) {
            put(cfg.path("_pmc_data.csv"), &io::pmc_data_csv(&d))?;
        }
    } else {
        let jets = chart_jets(&chart, &grid, cfg.mode(), exec)?;
        let inv = analyze_cmc(chart.eps, &grid, &jets, exec)?;
        put(cfg.path("_invariants.csv"), &io::cmc_invariants_csv(&inv))?;
    }
    let checks = all_checks(cfg, &chart)?;
    put(cfg.path("_summary.txt"), &format!("# {}\n{}", chart.family, format_checks(&checks)))?;
    for p in &written {
        say!("wrote {}", p.display());
    }
    Ok(EXIT_OK)
}

/// Reads a metadata file written by `generate`.
pub fn read_metadata(path: &Path) -> Result<Metadata> {
    Metadata::parse(&std::fs::read_to_string(path)?)
}
