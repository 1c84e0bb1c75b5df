//! Command-line workbench: configuration, dispatch and artifact emission.
//!
//! Every run writes its artifacts, `config.json` (the resolved configuration)
//! and `manifest.json` (configuration echo, version, wall time, summary) into
//! the output directory. Errors are reported on stderr as
//! `error[<category>]: <message>` and mapped to the exit codes of
//! [`Error::exit_code`].

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::{Cache, Lookup};
use crate::diagrams::{diagram_correlation, diagram_count, feynman_diagrams, DensityOptions, GridWindow};
use crate::error::{Error, Result};
use crate::kernels::{z_closed, z_from_tcal, z_quadrature, GammaQuad, KernelBundle};
use crate::kinetic::{base_grid, linear_spectrum, KineticOptions, KineticPlan};
use crate::lattice::{count_resonant_pairs, finite_field_count, quadric_intersection_count, quadric_polys, IncidenceMatrix, Sum2Options};
use crate::model::ModelParams;
use crate::quadrature::{c_d, heath_brown_check, sigma_integral, sphere_area, Summand, SurfaceOptions};
use crate::report::{self, Scale};
use crate::stochastic::{mc_spectrum_with_table, McConfig, ResonantTable, SiteGrid, Variant};
use crate::wke::{fit_envelope_c2, long_time_check, solve_batch, stationary_batch, WkeConfig};

/// Exit code of a `report` run in which some criterion failed.
pub const EXIT_CRITERIA_FAILED: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "wavekin", version, about = "Numerical workbench for resonant wave kinetics")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON run configuration; replaces the subcommand and all flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "wavekin-out")]
    pub out: PathBuf,
    /// Cache directory; the WAVEKIN_CACHE_DIR environment variable overrides
    /// the default `<out>/cache`.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
}

/// Model parameters; unset flags keep the defaults.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, global = true)]
    pub d: Option<usize>,
    #[arg(long = "L", global = true)]
    pub l: Option<f64>,
    #[arg(long, global = true)]
    pub r_star: Option<f64>,
    #[arg(long, global = true)]
    pub b0: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
}

impl ModelArgs {
    fn resolve(&self) -> ModelParams {
        let base = ModelParams::default();
        ModelParams {
            d: self.d.unwrap_or(base.d),
            l: self.l.unwrap_or(base.l),
            r_star: self.r_star.unwrap_or(base.r_star),
            b0: self.b0.unwrap_or(base.b0),
            sigma: self.sigma.unwrap_or(base.sigma),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    /// Resonant pair counts and normalised lattice sums of a Gaussian.
    Resonance {
        /// Only count orthogonal pairs in the box |m|_inf <= M.
        #[arg(long)]
        count_only: bool,
        #[arg(long = "M", default_value_t = 1)]
        m: i64,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        ls: Vec<f64>,
        #[arg(long, default_value_t = 5.3)]
        radius: f64,
    },
    /// Gaussian integral over the resonant quadric through the origin.
    Quadrature {
        #[arg(long, default_value_t = 8)]
        sphere_order: usize,
        #[arg(long, default_value_t = 8)]
        radial_panels: usize,
    },
    /// Memory kernels at given rates, or a sweep of closed form vs quadrature.
    Kernels {
        #[arg(long)]
        sweep: bool,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        tau0: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,1.5,2,3")]
        rates: Vec<f64>,
    },
    /// Kinetic operator applied to the linear spectrum.
    Kinetic {
        /// Memory time; omitted means the infinite-memory operator.
        #[arg(long)]
        tau0: Option<f64>,
        /// Time of the linear spectrum the operator acts on.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 12)]
        radii: usize,
        #[arg(long, default_value_t = 4.0)]
        r_max: f64,
    },
    /// Kinetic equation with damping and forcing from zero data.
    Wke {
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Amplitudes to run; defaults to the model epsilon (which may be 0 here).
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        #[arg(long, default_value_t = 16)]
        knots: usize,
    },
    /// Monte Carlo spectrum of the truncated quasisolution.
    Simulate {
        #[arg(long, default_value_t = 3)]
        m_cut: i64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Observation time; omitted means long-time stationarity.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 0.02)]
        h: f64,
        #[arg(long, default_value_t = 1)]
        max_order: usize,
        #[arg(long, value_enum, default_value = "approx")]
        variant: Variant,
    },
    /// Diagram counts, Feynman diagrams of one order and their correlation.
    Diagrams {
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Also evaluate the correlation at the origin on |m|_inf <= m_cut.
        #[arg(long)]
        correlate: bool,
        #[arg(long, default_value_t = 3)]
        m_cut: i64,
    },
    /// Integer points on coupled quadrics in a box against the counting bound.
    CountQuadric {
        /// Size of the cyclic incidence matrix.
        #[arg(long = "N", default_value_t = 3)]
        n: usize,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,0")]
        z1: Vec<i64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1")]
        v: Vec<i64>,
        #[arg(long = "R", default_value_t = 1.0)]
        r: f64,
    },
    /// Finite-field point counts of the reduced quadric system.
    Bezout {
        #[arg(long = "N", default_value_t = 3)]
        n: usize,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,0")]
        z1: Vec<i64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1")]
        v: Vec<i64>,
        #[arg(long, value_delimiter = ',', default_value = "5,7,11")]
        primes: Vec<u64>,
    },
    /// Runs acceptance criteria and writes one summary table.
    Report {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10,11")]
        ids: Vec<u8>,
        /// Reduced problem sizes.
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Resonance { .. } => "resonance",
            Command::Quadrature { .. } => "quadrature",
            Command::Kernels { .. } => "kernels",
            Command::Kinetic { .. } => "kinetic",
            Command::Wke { .. } => "wke",
            Command::Simulate { .. } => "simulate",
            Command::Diagrams { .. } => "diagrams",
            Command::CountQuadric { .. } => "count-quadric",
            Command::Bezout { .. } => "bezout",
            Command::Report { .. } => "report",
        }
    }
}

/// Fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    pub seed: u64,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    pub fn from_cli(cli: &Cli) -> Result<Self> {
        if let Some(path) = &cli.config {
            if cli.command.is_some() {
                return Err(Error::Config("give either --config or a subcommand, not both".into()));
            }
            return Self::from_json_str(&fs::read_to_string(path)?);
        }
        let command = cli.command.clone().ok_or_else(|| Error::Config("no subcommand given".into()))?;
        Ok(Self {
            command,
            params: cli.model.resolve(),
            seed: cli.common.seed,
            out: cli.common.out.clone(),
            cache_dir: cli.common.cache_dir.clone(),
            threads: cli.common.threads,
        })
    }

    /// Model checks; `wke` alone accepts a zero amplitude.
    pub fn validate(&self) -> Result<()> {
        match &self.command {
            Command::Wke { sweep, .. } => {
                let probe = ModelParams { epsilon: 0.1, ..self.params.clone() };
                probe.validate()?;
                let eps = if sweep.is_empty() { vec![self.params.epsilon] } else { sweep.clone() };
                if eps.iter().any(|e| !(e.is_finite() && (0.0..=0.5).contains(e))) {
                    return Err(Error::InvalidParam(format!("amplitudes must lie in [0, 1/2], got {eps:?}")));
                }
            }
            _ => self.params.validate()?,
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParam("thread count must be positive".into()));
        }
        Ok(())
    }

    fn cache(&self) -> Cache {
        match &self.cache_dir {
            Some(d) => Cache::new(d),
            None => Cache::from_env_or(self.out.join("cache")),
        }
    }
}

/// Output of one subcommand.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub summary: Value,
    /// Text printed on stdout.
    pub stdout: String,
    pub exit_code: i32,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn gamma_half(k: usize) -> f64 {
    // Gamma(k / 2) for k >= 1
    if k % 2 == 0 {
        (1..k / 2).map(|i| i as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < k as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Closed form of the Gaussian integral over the quadric through the origin:
/// `pi^{(d-1)/2} |S^{d-1}| Gamma((d-1)/2) / 2`.
pub fn gaussian_surface_closed_form(d: usize) -> f64 {
    std::f64::consts::PI.powf((d as f64 - 1.0) / 2.0) * sphere_area(d - 1) * gamma_half(d - 1) / 2.0
}

fn alpha_and_check(n: usize, z1: &[i64], v: &[i64], d: usize) -> Result<IncidenceMatrix> {
    if n < 3 {
        return Err(Error::InvalidParam(format!("N must be >= 3, got {n}")));
    }
    if z1.len() != d || v.len() != d {
        return Err(Error::InvalidParam(format!("z1 and v must have {d} components")));
    }
    Ok(IncidenceMatrix::cyclic(n))
}

fn run_command(cfg: &RunConfig) -> Result<Artifacts> {
    let p = &cfg.params;
    let mut a = Artifacts::default();
    match &cfg.command {
        Command::Resonance { count_only, m, ls, radius } => {
            if *count_only {
                let c = count_resonant_pairs(p.d, *m)?;
                a.summary = json!({ "d": p.d, "M": m, "count": c });
                a.stdout = format!("{c}\n");
            } else {
                let opts = Sum2Options { radius: *radius, ..Sum2Options::default() };
                let rows = heath_brown_check(Summand::Biradial(&|x, y| (-x - y).exp()), p.d, ls, opts, SurfaceOptions::default())?;
                let mut csv = String::from("L,lattice_sum,limit,residual,wall_time_s\n");
                for r in &rows {
                    csv.push_str(&format!("{},{:.12e},{:.12e},{:.12e},{:.3}\n", r.l, r.lattice_sum, r.limit, r.residual, r.wall_time_s));
                }
                a.stdout = csv.clone();
                a.files.push(("resonance.csv".into(), csv));
                a.summary = json!({ "d": p.d, "rows": to_value(&rows)? });
            }
        }
        Command::Quadrature { sphere_order, radial_panels } => {
            let opts = SurfaceOptions { sphere_order: *sphere_order, radial_panels: *radial_panels, ..SurfaceOptions::default() };
            let gauss = |z: &[f64]| (-z.iter().map(|x| x * x).sum::<f64>()).exp();
            let v = sigma_integral(&|x, y| gauss(x) * gauss(y), &vec![0.0; p.d], opts)?;
            let exact = gaussian_surface_closed_form(p.d);
            let cd = if p.d >= 3 { Some(c_d(p.d)?) } else { None };
            a.summary = json!({ "d": p.d, "integral": v, "closed_form": exact,
                "relative_error": (v - exact).abs() / exact, "c_d": cd });
            a.stdout = format!("integral {v:.12e}\nclosed form {exact:.12e}\n");
        }
        Command::Kernels { sweep, samples, tau0, rates } => {
            if *sweep {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut csv = String::from("tau0,g1,g2,g3,g4,j,closed,quadrature,time_factor,residual_quadrature,residual_time_factor\n");
                let mut worst = 0.0f64;
                for _ in 0..*samples {
                    let q = GammaQuad::new([0; 4].map(|_| rng.gen_range(1.0..7.0)))?;
                    let t = 10f64.powf(rng.gen_range(-2.0..1.0));
                    for j in 0..4 {
                        let c = z_closed(t, &q, j);
                        let qd = z_quadrature(t, &q, j)?;
                        let tf = z_from_tcal(t, &q, j)?;
                        worst = worst.max((c - qd).abs()).max((c - tf).abs());
                        let g = q.0;
                        csv.push_str(&format!(
                            "{t:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{j},{c:.16e},{qd:.16e},{tf:.16e},{:.3e},{:.3e}\n",
                            g[0], g[1], g[2], g[3], (c - qd).abs(), (c - tf).abs()
                        ));
                    }
                }
                a.files.push(("kernels_sweep.csv".into(), csv));
                a.summary = json!({ "samples": samples, "max_residual": worst });
                a.stdout = format!("max residual {worst:.3e}\n");
            } else {
                let g: [f64; 4] = rates
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::InvalidParam(format!("need four rates, got {}", rates.len())))?;
                let b = KernelBundle::new(*tau0, GammaQuad::new(g)?);
                a.summary = to_value(&b)?;
                a.stdout = format!("{}\n", serde_json::to_string_pretty(&b)?);
            }
        }
        Command::Kinetic { tau0, tau, radii, r_max } => {
            let plan = KineticPlan::new(p, base_grid(*r_max, *radii), KineticOptions::default())?;
            let n0 = linear_spectrum(p, *tau);
            let prof = plan.apply(tau0.unwrap_or(f64::INFINITY), &n0)?;
            let csv = prof.to_csv();
            a.stdout = csv.clone();
            a.files.push(("kinetic.csv".into(), csv));
            a.summary = json!({ "tau0": tau0, "tau": tau, "nodes": plan.node_count(), "profile": to_value(&prof)? });
        }
        Command::Wke { t_end, sweep, h, knots } => {
            let mut wc = WkeConfig::new(p);
            wc.h = *h;
            wc.knots = base_grid(5.0 * p.sigma, *knots);
            let eps = if sweep.is_empty() { vec![p.epsilon] } else { sweep.clone() };
            let trs = solve_batch(p, &eps, *t_end, &wc)?;
            let stats = stationary_batch(p, &eps, &wc)?;
            let mut csv = String::from("eps,tau,radius,z,norm\n");
            let mut rows = Vec::new();
            for (t, s) in trs.iter().zip(&stats) {
                for line in t.to_csv().lines().skip(1) {
                    csv.push_str(&format!("{},{line}\n", t.eps));
                }
                let c2 = fit_envelope_c2(t, s, wc.norm_r)?;
                let env = long_time_check(t, s, c2, wc.norm_r)?;
                rows.push(json!({
                    "eps": t.eps,
                    "sup_deviation_from_linear": t.sup_deviation_from_linear(p, 0.0),
                    "weighted_deviation_from_linear": t.sup_deviation_from_linear(p, wc.norm_r),
                    "min_value": t.min_value,
                    "stationary_residual": s.residual(),
                    "stationary_deviation": s.deviation(p, wc.norm_r),
                    "envelope_c1": env.c1,
                    "envelope_c2": c2,
                }));
            }
            a.files.push(("wke_trajectories.csv".into(), csv));
            a.files.push(("wke_stationary.json".into(), serde_json::to_string_pretty(&stats)?));
            a.stdout = format!("{}\n", serde_json::to_string_pretty(&rows)?);
            a.summary = json!({ "config": to_value(&wc)?, "runs": rows });
        }
        Command::Simulate { m_cut, samples, tau, h, max_order, variant } => {
            let mc = McConfig {
                m_cut: *m_cut,
                h: *h,
                tau: *tau,
                samples: *samples,
                seed: cfg.seed,
                variant: *variant,
                max_order: *max_order,
                sites: None,
            };
            let key = json!({ "d": p.d, "L": p.l, "m_cut": m_cut });
            let (table, lookup) = cfg
                .cache()
                .get_or_compute("resonant-table", &key, || Ok(ResonantTable::build(&SiteGrid::new(p.d, p.l, *m_cut)?)))?;
            let rep = mc_spectrum_with_table(p, &mc, &table)?;
            let csv = rep.to_csv();
            a.stdout = csv.clone();
            a.files.push(("spectrum.csv".into(), csv));
            a.files.push(("spectrum.json".into(), serde_json::to_string_pretty(&rep)?));
            a.summary = json!({ "table_cache": lookup == Lookup::Hit, "tau": rep.tau, "steps": rep.steps,
                "table_entries": rep.table_entries, "sites": to_value(&rep.sites)? });
        }
        Command::Diagrams { m, n, correlate, m_cut } => {
            let counts: Vec<u64> = (0..=(*m).max(*n)).map(diagram_count).collect();
            let fs = feynman_diagrams(*m, *n)?;
            let untrue = fs.iter().filter(|f| !f.is_true()).count();
            let mut text = String::new();
            for (k, f) in fs.iter().enumerate() {
                text.push_str(&format!("# diagram {k}\n{}\n", f.render()));
            }
            a.files.push(("diagrams.txt".into(), text));
            a.files.push(("diagrams.json".into(), serde_json::to_string_pretty(&fs)?));
            let mut summary = json!({ "counts": counts, "m": m, "n": n, "feynman": fs.len(), "not_true": untrue });
            if *correlate {
                let w = GridWindow { l: p.l, m_cut: *m_cut };
                let opts = DensityOptions { window: Some(w), ..DensityOptions::default() };
                let e = diagram_correlation(p, *m, *n, &vec![0.0; p.d], &opts, w.z_radius(p.d))?;
                summary["correlation"] = json!({ "re": e.re, "im": e.im });
            }
            a.stdout = format!("{}\n", serde_json::to_string_pretty(&summary)?);
            a.summary = summary;
        }
        Command::CountQuadric { n, z1, v, r } => {
            let alpha = alpha_and_check(*n, z1, v, p.d)?;
            let c = quadric_intersection_count(&alpha, z1, v, *r, p.l)?;
            a.summary = to_value(&c)?;
            a.stdout = format!("count {} bound {:.6e} ratio {:.6}\n", c.count, c.bound, c.ratio);
        }
        Command::Bezout { n, z1, v, primes } => {
            let alpha = alpha_and_check(*n, z1, v, p.d)?;
            let polys = quadric_polys(&alpha, z1, v)?;
            let m = (n - 2) * p.d;
            let dim = m - polys.len();
            let mut rows = Vec::new();
            let mut csv = String::from("p,count,bound,holds\n");
            for &q in primes {
                let (c, b) = finite_field_count(&polys, q, m, dim)?;
                csv.push_str(&format!("{q},{c},{b},{}\n", c as f64 <= b));
                rows.push(json!({ "p": q, "count": c, "bound": b }));
            }
            a.stdout = csv.clone();
            a.files.push(("bezout.csv".into(), csv));
            a.summary = json!({ "variables": m, "dimension": dim, "rows": rows });
        }
        Command::Report { ids, quick } => {
            let scale = if *quick { Scale::Quick } else { Scale::Full };
            let out = report::run(ids, scale, cfg.seed);
            a.stdout = out.iter().map(|o| o.line() + "\n").collect();
            a.files.push(("report.csv".into(), report::to_csv(&out)));
            a.summary = to_value(&out)?;
            if out.iter().any(|o| !o.pass) {
                a.exit_code = EXIT_CRITERIA_FAILED;
            }
        }
    }
    Ok(a)
}

fn write_manifest(dir: &Path, cfg: &RunConfig, status: &str, wall: f64, files: &[String], summary: Value) -> Result<()> {
    let manifest = json!({
        "command": cfg.command.name(),
        "status": status,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_s": wall,
        "threads": rayon::current_num_threads(),
        "config": to_value(cfg)?,
        "artifacts": files,
        "summary": summary,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Executes a resolved configuration and writes its artifacts. Returns the
/// process exit code.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    cfg.validate()?;
    let pool = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::Internal(e.to_string()))?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.json"), cfg.to_json_string())?;
    let t0 = Instant::now();
    let result = pool.install(|| run_command(cfg));
    let wall = t0.elapsed().as_secs_f64();
    match result {
        Ok(a) => {
            let mut names = Vec::new();
            for (name, body) in &a.files {
                fs::write(cfg.out.join(name), body)?;
                names.push(name.clone());
            }
            let status = if a.exit_code == 0 { "ok" } else { "criteria-failed" };
            pool.install(|| write_manifest(&cfg.out, cfg, status, wall, &names, a.summary))?;
            print!("{}", a.stdout);
            Ok(a.exit_code)
        }
        Err(e) => {
            let summary = json!({ "error": e.to_string(), "category": e.category() });
            write_manifest(&cfg.out, cfg, "error", wall, &[], summary)?;
            Err(e)
        }
    }
}

/// Entry point of the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = RunConfig::from_cli(&cli).and_then(|cfg| {
        if cli.print_config {
            cfg.validate()?;
            println!("{}", cfg.to_json_string());
            return Ok(0);
        }
        run(&cfg)
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        let mut v = vec!["wavekin"];
        v.extend_from_slice(args);
        RunConfig::from_cli(&Cli::try_parse_from(v).unwrap()).unwrap()
    }

    #[test]
    fn config_round_trip() {
        for args in [
            vec!["resonance", "--d", "3", "--count-only", "--M", "1"],
            vec!["--seed", "9", "simulate", "--d", "2", "--L", "2", "--variant", "full"],
            vec!["wke", "--epsilon", "0", "--sweep", "0.05,0.1"],
            vec!["count-quadric", "--z1", "-1,2", "--v", "2,1", "--N", "4"],
            vec!["report", "--quick", "--ids", "1,2"],
        ] {
            let cfg = parse(&args);
            let text = cfg.to_json_string();
            assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = parse(&["quadrature"]);
        let mut v: Value = serde_json::from_str(&cfg.to_json_string()).unwrap();
        v["extra"] = json!(1);
        assert!(matches!(RunConfig::from_json_str(&v.to_string()), Err(Error::Config(_))));
        let mut v: Value = serde_json::from_str(&cfg.to_json_string()).unwrap();
        v["command"]["bogus"] = json!(true);
        assert!(RunConfig::from_json_str(&v.to_string()).is_err());
        let mut v: Value = serde_json::from_str(&cfg.to_json_string()).unwrap();
        v["params"]["bogus"] = json!(true);
        assert!(RunConfig::from_json_str(&v.to_string()).is_err());
    }

    #[test]
    fn zero_amplitude_only_for_the_solver() {
        assert!(parse(&["wke", "--epsilon", "0"]).validate().is_ok());
        assert!(parse(&["quadrature", "--epsilon", "0"]).validate().is_err());
        assert!(parse(&["wke", "--sweep", "0.7"]).validate().is_err());
    }

    #[test]
    fn gaussian_closed_form() {
        let pi = std::f64::consts::PI;
        assert!((gaussian_surface_closed_form(3) - 2.0 * pi * pi).abs() < 1e-12);
        assert!((gaussian_surface_closed_form(2) - pi * pi).abs() < 1e-12);
        // d = 4: pi^{3/2} 2 pi^2 Gamma(3/2) / 2 = pi^4 / 2
        assert!((gaussian_surface_closed_form(4) - pi.powi(4) / 2.0).abs() < 1e-10);
    }
}
