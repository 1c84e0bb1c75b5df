//! Monte Carlo side: exact Ornstein-Uhlenbeck paths for the linear modes on
//! a truncated frequency grid, the Duhamel iterates of the resonant
//! nonlinearity, the quadratic quasisolution and its energy spectrum.
//!
//! Random numbers come from ChaCha8 keyed by `(seed, sample)` with one stream
//! per site, drawn in step order, so estimates do not depend on the thread
//! count or on which other sites are simulated.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::dot;
use crate::model::ModelParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Sites `m / L` with `|m|_inf <= m_cut`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGrid {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub m_cut: i64,
    sites: Vec<Vec<i64>>,
}

impl SiteGrid {
    pub fn new(d: usize, l: f64, m_cut: i64) -> Result<Self> {
        if d < 1 || m_cut < 1 {
            return Err(Error::InvalidParam(format!("need d >= 1 and m_cut >= 1, got d = {d}, m_cut = {m_cut}")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidParam(format!("L must be positive, got {l}")));
        }
        let side = (2 * m_cut + 1) as usize;
        let count = side.checked_pow(d as u32).filter(|c| *c <= 1 << 20).ok_or_else(|| {
            Error::InvalidParam(format!("grid with side {side} in dimension {d} is too large"))
        })?;
        let sites = (0..count)
            .map(|mut k| {
                (0..d)
                    .map(|_| {
                        let c = (k % side) as i64 - m_cut;
                        k /= side;
                        c
                    })
                    .collect()
            })
            .collect();
        Ok(Self { d, l, m_cut, sites })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.sites[i]
    }

    pub fn index(&self, m: &[i64]) -> Option<usize> {
        if m.len() != self.d || m.iter().any(|c| c.abs() > self.m_cut) {
            return None;
        }
        let side = 2 * self.m_cut + 1;
        Some(m.iter().rev().fold(0i64, |acc, &c| acc * side + c + self.m_cut) as usize)
    }

    /// `|s|^2` of site `i` in frequency units.
    pub fn norm2(&self, i: usize) -> f64 {
        self.sites[i].iter().map(|&c| (c * c) as f64).sum::<f64>() / (self.l * self.l)
    }

    pub fn origin(&self) -> usize {
        self.index(&vec![0; self.d]).expect("origin lies on the grid")
    }
}

/// For every site `s` the ordered pairs `(s1, s2)` with `s3 = s1 + s2 - s` on
/// the grid, `(s1 - s) . (s2 - s) = 0` and `s1, s2 != s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonantTable {
    pub grid: SiteGrid,
    entries: Vec<Vec<[u32; 3]>>,
}

impl ResonantTable {
    pub fn build(grid: &SiteGrid) -> Self {
        let n = grid.len();
        let entries = (0..n)
            .into_par_iter()
            .map(|s| {
                let m = grid.site(s);
                let d = grid.d;
                let mut out = Vec::new();
                let mut z1 = vec![0i64; d];
                let mut z2 = vec![0i64; d];
                let mut m3 = vec![0i64; d];
                for i1 in 0..n {
                    if i1 == s {
                        continue;
                    }
                    for t in 0..d {
                        z1[t] = grid.site(i1)[t] - m[t];
                    }
                    for i2 in 0..n {
                        if i2 == s {
                            continue;
                        }
                        for t in 0..d {
                            z2[t] = grid.site(i2)[t] - m[t];
                        }
                        if dot(&z1, &z2) != 0 {
                            continue;
                        }
                        for t in 0..d {
                            m3[t] = m[t] + z1[t] + z2[t];
                        }
                        if let Some(i3) = grid.index(&m3) {
                            assert!(i3 != i1 && i3 != i2 && i3 != s, "resonant quadruple is not disjoint");
                            out.push([i1 as u32, i2 as u32, i3 as u32]);
                        }
                    }
                }
                out
            })
            .collect();
        Self { grid: grid.clone(), entries }
    }

    pub fn entries(&self, site: usize) -> &[[u32; 3]] {
        &self.entries[site]
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    /// `sites` together with every site entering their resonant sums.
    pub fn closure(&self, sites: &[usize]) -> Vec<usize> {
        let mut mark = vec![false; self.grid.len()];
        for &s in sites {
            mark[s] = true;
            for e in &self.entries[s] {
                for &i in e {
                    mark[i as usize] = true;
                }
            }
        }
        (0..mark.len()).filter(|&i| mark[i]).collect()
    }
}

/// Which nonlinearity the iterates use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Resonant sum only.
    Approx,
    /// Resonant sum minus the cubic self-interaction `|a_s|^2 a_s`.
    Full,
}

/// Amplitudes on the whole grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeField {
    pub tau: f64,
    pub values: Vec<Complex64>,
}

impl AmplitudeField {
    pub fn zeros(grid: &SiteGrid) -> Self {
        Self { tau: 0.0, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }
}

/// Independent stream for one `(seed, sample, site)`.
pub fn site_rng(seed: u64, sample: u64, site: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(site as u64);
    rng
}

/// Circular complex Gaussian with `E|x|^2 = var`.
pub fn circular_gaussian(rng: &mut ChaCha8Rng, var: f64) -> Complex64 {
    let sd = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(sd * re, sd * im)
}

/// Exact one-step law of the linear modes at one site: decay and noise variance.
fn ou_coefficients(params: &ModelParams, r2: f64, h: f64) -> (f64, f64) {
    let g = params.gamma_r2(r2);
    ((-g * h).exp(), params.b_coeff_r2(r2) * -(-2.0 * g * h).exp_m1())
}

/// `a_s(t + h) = e^{-g h} a_s(t) + eta`, `E|eta|^2 = B_s (1 - e^{-2 g h})`;
/// `rngs` holds one stream per site.
pub fn ou_step(
    params: &ModelParams,
    grid: &SiteGrid,
    a: &AmplitudeField,
    h: f64,
    rngs: &mut [ChaCha8Rng],
) -> Result<AmplitudeField> {
    if !(h > 0.0) {
        return Err(Error::InvalidParam(format!("step must be positive, got {h}")));
    }
    check_shapes(grid, a, rngs)?;
    let values = (0..grid.len())
        .map(|i| {
            let (decay, var) = ou_coefficients(params, grid.norm2(i), h);
            decay * a.values[i] + circular_gaussian(&mut rngs[i], var)
        })
        .collect();
    Ok(AmplitudeField { tau: a.tau + h, values })
}

fn check_shapes(grid: &SiteGrid, a: &AmplitudeField, rngs: &[ChaCha8Rng]) -> Result<()> {
    if a.values.len() != grid.len() || rngs.len() != grid.len() {
        return Err(Error::InvalidParam("field, grid and generators must have one entry per site".into()));
    }
    Ok(())
}

/// Stored paths on the uniform grid `t_k = k h`, one vector per site
/// (empty for sites that were not simulated).
pub type Paths = Vec<Vec<Complex64>>;

/// Linear-mode paths at the listed sites from a zero start.
pub fn sample_linear_paths(
    params: &ModelParams,
    grid: &SiteGrid,
    sites: &[usize],
    steps: usize,
    h: f64,
    seed: u64,
    sample: u64,
) -> Paths {
    let mut out: Paths = vec![Vec::new(); grid.len()];
    for &i in sites {
        let (decay, var) = ou_coefficients(params, grid.norm2(i), h);
        let mut rng = site_rng(seed, sample, i);
        let mut path = Vec::with_capacity(steps + 1);
        let mut a = Complex64::new(0.0, 0.0);
        path.push(a);
        for _ in 0..steps {
            a = decay * a + circular_gaussian(&mut rng, var);
            path.push(a);
        }
        out[i] = path;
    }
    out
}

// Weights of the exponential trapezoid
// int_0^h e^{-g (h - u)} y(u) du ~ w0 y(0) + w1 y(h) with y linear.
fn exp_trapezoid(g: f64, h: f64) -> (f64, f64) {
    let x = g * h;
    // phi1 = (1 - e^{-x}) / x, phi2 = (x - 1 + e^{-x}) / x^2
    let (phi1, phi2) = if x < 1e-4 {
        (1.0 - x / 2.0 + x * x / 6.0, 0.5 - x / 6.0 + x * x / 24.0)
    } else {
        let em = -(-x).exp_m1();
        (em / x, (x - em) / (x * x))
    };
    (h * (phi1 - phi2), h * phi2)
}

/// Path of the `n`-th iterate at `sites_out`, given the lower iterates
/// `lower[k]` (`k < n`) at every site their resonant sums touch.
pub fn duhamel_iterate(
    params: &ModelParams,
    table: &ResonantTable,
    lower: &[&Paths],
    n: usize,
    sites_out: &[usize],
    h: f64,
    variant: Variant,
) -> Result<Paths> {
    if n == 0 || lower.len() < n {
        return Err(Error::InvalidParam(format!("iterate {n} needs {n} lower iterates, got {}", lower.len())));
    }
    let grid = &table.grid;
    let steps = lower[0].iter().map(Vec::len).max().unwrap_or(0);
    if steps == 0 {
        return Err(Error::InvalidParam("empty paths".into()));
    }
    let combos: Vec<[usize; 3]> = (0..n)
        .flat_map(|a| (0..n - a).map(move |b| [a, b, n - 1 - a - b]))
        .collect();
    let scale = grid.l.powi(-(grid.d as i32));
    let mut out: Paths = vec![Vec::new(); grid.len()];
    for &s in sites_out {
        let get = |k: usize, site: usize| -> Result<&Vec<Complex64>> {
            let p = &lower[k][site];
            if p.len() != steps {
                return Err(Error::InvalidParam(format!("iterate {k} missing at site {site}")));
            }
            Ok(p)
        };
        let mut y = vec![Complex64::new(0.0, 0.0); steps];
        for c in &combos {
            for e in table.entries(s) {
                let (p1, p2, p3) = (get(c[0], e[0] as usize)?, get(c[1], e[1] as usize)?, get(c[2], e[2] as usize)?);
                for t in 0..steps {
                    y[t] += p1[t] * p2[t] * p3[t].conj();
                }
            }
            if variant == Variant::Full {
                let (p1, p2, p3) = (get(c[0], s)?, get(c[1], s)?, get(c[2], s)?);
                for t in 0..steps {
                    y[t] -= p1[t] * p2[t] * p3[t].conj();
                }
            }
        }
        let g = params.gamma_r2(grid.norm2(s));
        let decay = (-g * h).exp();
        let (w0, w1) = exp_trapezoid(g, h);
        let mut path = Vec::with_capacity(steps);
        let mut a = Complex64::new(0.0, 0.0);
        path.push(a);
        for t in 0..steps - 1 {
            a = decay * a + I * scale * (w0 * y[t] + w1 * y[t + 1]);
            path.push(a);
        }
        out[s] = path;
    }
    Ok(out)
}

/// First iterate at `sites_out` from linear-mode paths.
pub fn duhamel_a1(
    params: &ModelParams,
    table: &ResonantTable,
    a0: &Paths,
    sites_out: &[usize],
    h: f64,
    variant: Variant,
) -> Result<Paths> {
    duhamel_iterate(params, table, &[a0], 1, sites_out, h, variant)
}

/// Second iterate, summing the three placements of the first iterate.
pub fn duhamel_a2(
    params: &ModelParams,
    table: &ResonantTable,
    a0: &Paths,
    a1: &Paths,
    sites_out: &[usize],
    h: f64,
    variant: Variant,
) -> Result<Paths> {
    duhamel_iterate(params, table, &[a0, a1], 2, sites_out, h, variant)
}

/// `a0 + rho a1 + rho^2 a2`.
pub fn quasisolution(a0: Complex64, a1: Complex64, a2: Complex64, rho: f64) -> Complex64 {
    a0 + rho * a1 + rho * rho * a2
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64], seed: u64) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, count: 0, seed };
        }
        let mean = crate::sum::pairwise(xs) / n as f64;
        let var = if n > 1 {
            let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            crate::sum::pairwise(&sq) / (n - 1) as f64
        } else {
            0.0
        };
        Self { mean, stderr: (var / n as f64).sqrt(), count: n, seed }
    }

    /// `|mean - target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let dev = (self.mean - target).abs();
        if self.stderr > 0.0 {
            dev / self.stderr
        } else if dev == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target) <= sigmas
    }
}

/// Settings of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub m_cut: i64,
    pub h: f64,
    /// Observation time; `None` uses `10 / min gamma` as a proxy for infinity.
    pub tau: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Highest iterate simulated, `0..=2`.
    pub max_order: usize,
    /// Output sites as integer vectors; `None` means the origin only.
    pub sites: Option<Vec<Vec<i64>>>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { m_cut: 3, h: 0.02, tau: None, samples: 10_000, seed: 1, variant: Variant::Approx, max_order: 1, sites: None }
    }
}

/// Estimates at one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSpectrum {
    pub site: Vec<i64>,
    pub radius: f64,
    /// Spectrum components `n^(0..=4)`; orders beyond the simulated ones are zero.
    pub components: Vec<McEstimate>,
    /// `E|A_s|^2` of the quasisolution at the configured amplitude.
    pub total: McEstimate,
    pub a1_sq: McEstimate,
    pub a1_re: McEstimate,
    pub a1_im: McEstimate,
    pub a2_re: McEstimate,
    pub a2_im: McEstimate,
    /// `E a0 a0`, which vanishes for circular modes.
    pub pseudo_re: McEstimate,
    pub pseudo_im: McEstimate,
    /// `B_s (1 - e^{-2 g tau})`.
    pub n0_exact: f64,
    /// Stationary `E|a1|^2` of the resonant-only iterate.
    pub a1_stationary: f64,
}

/// Full Monte Carlo report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub params: ModelParams,
    pub config: McConfig,
    pub tau: f64,
    pub steps: usize,
    pub rho: f64,
    pub table_entries: usize,
    pub coarse_path: bool,
    pub sites: Vec<SiteSpectrum>,
}

impl McReport {
    /// CSV rows `radius,site,mean,stderr,reference` for `E|a0|^2` and `E|a1|^2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,site,radius,mean,stderr,reference\n");
        for s in &self.sites {
            let tag = s.site.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
            let c = &s.components[0];
            out.push_str(&format!("n0,{tag},{:.6},{:.10e},{:.3e},{:.10e}\n", s.radius, c.mean, c.stderr, s.n0_exact));
            out.push_str(&format!(
                "a1_sq,{tag},{:.6},{:.10e},{:.3e},{:.10e}\n",
                s.radius, s.a1_sq.mean, s.a1_sq.stderr, s.a1_stationary
            ));
            out.push_str(&format!("total,{tag},{:.6},{:.10e},{:.3e},\n", s.radius, s.total.mean, s.total.stderr));
        }
        out
    }
}

/// `(2 / g_s) L^{-2d} sum B1 B2 B3 / (g1 + g2 + g3 + g_s)` over the table.
pub fn a1_stationary_closed_form(params: &ModelParams, table: &ResonantTable, site: usize) -> f64 {
    let grid = &table.grid;
    let gs = params.gamma_r2(grid.norm2(site));
    let terms: Vec<f64> = table
        .entries(site)
        .iter()
        .map(|e| {
            let mut b = 1.0;
            let mut g = gs;
            for &i in e {
                let r2 = grid.norm2(i as usize);
                b *= params.b_coeff_r2(r2);
                g += params.gamma_r2(r2);
            }
            b / g
        })
        .collect();
    2.0 / gs * grid.l.powi(-2 * grid.d as i32) * crate::sum::pairwise(&terms)
}

const N_OBS: usize = 14;

/// Monte Carlo estimate of the spectrum of the quasisolution and of its
/// components at the configured sites.
pub fn mc_spectrum(params: &ModelParams, cfg: &McConfig) -> Result<McReport> {
    let grid = SiteGrid::new(params.d, params.l, cfg.m_cut)?;
    let table = ResonantTable::build(&grid);
    mc_spectrum_with_table(params, cfg, &table)
}

pub fn mc_spectrum_with_table(params: &ModelParams, cfg: &McConfig, table: &ResonantTable) -> Result<McReport> {
    let grid = &table.grid;
    if grid.d != params.d || grid.l != params.l || grid.m_cut != cfg.m_cut {
        return Err(Error::InvalidParam("table does not match the model and grid".into()));
    }
    if cfg.max_order > 2 {
        return Err(Error::InvalidParam(format!("max_order must be <= 2, got {}", cfg.max_order)));
    }
    if cfg.samples < 2 {
        return Err(Error::InvalidParam("need at least two samples".into()));
    }
    if !(cfg.h > 0.0) {
        return Err(Error::InvalidParam(format!("step must be positive, got {}", cfg.h)));
    }
    let min_gamma = (0..grid.len()).map(|i| params.gamma_r2(grid.norm2(i))).fold(f64::INFINITY, f64::min);
    let tau = cfg.tau.unwrap_or(10.0 / min_gamma);
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParam(format!("observation time must be positive, got {tau}")));
    }
    let steps = (tau / cfg.h).round().max(1.0) as usize;
    let h = tau / steps as f64;
    let out: Vec<usize> = match &cfg.sites {
        None => vec![grid.origin()],
        Some(list) => list
            .iter()
            .map(|m| grid.index(m).ok_or_else(|| Error::InvalidParam(format!("site {m:?} is off the grid"))))
            .collect::<Result<_>>()?,
    };
    let (a1_sites, a0_sites) = match cfg.max_order {
        0 => (vec![], out.clone()),
        1 => (out.clone(), table.closure(&out)),
        _ => {
            let a1 = table.closure(&out);
            let a0 = table.closure(&a1);
            (a1, a0)
        }
    };
    let lchi = params.l * params.chi();
    let rho = params.epsilon * lchi;
    let per_sample: Vec<Vec<[f64; N_OBS]>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<[f64; N_OBS]>> {
            let p0 = sample_linear_paths(params, grid, &a0_sites, steps, h, cfg.seed, k);
            let zero = Complex64::new(0.0, 0.0);
            let p1 = if cfg.max_order >= 1 {
                duhamel_a1(params, table, &p0, &a1_sites, h, cfg.variant)?
            } else {
                vec![Vec::new(); grid.len()]
            };
            let p2 = if cfg.max_order >= 2 {
                duhamel_a2(params, table, &p0, &p1, &out, h, cfg.variant)?
            } else {
                vec![Vec::new(); grid.len()]
            };
            Ok(out
                .iter()
                .map(|&s| {
                    let a0 = p0[s][steps];
                    let a1 = p1[s].get(steps).copied().unwrap_or(zero);
                    let a2 = p2[s].get(steps).copied().unwrap_or(zero);
                    let big_a = quasisolution(a0, a1, a2, rho);
                    let pseudo = a0 * a0;
                    [
                        a0.norm_sqr(),
                        lchi * 2.0 * (a0 * a1.conj()).re,
                        lchi * lchi * (a1.norm_sqr() + 2.0 * (a0 * a2.conj()).re),
                        lchi.powi(3) * 2.0 * (a1 * a2.conj()).re,
                        lchi.powi(4) * a2.norm_sqr(),
                        big_a.norm_sqr(),
                        a1.norm_sqr(),
                        a1.re,
                        a1.im,
                        a2.re,
                        a2.im,
                        pseudo.re,
                        pseudo.im,
                        0.0,
                    ]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let sites = out
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let col = |o: usize| -> McEstimate {
                let xs: Vec<f64> = per_sample.iter().map(|v| v[j][o]).collect();
                McEstimate::from_samples(&xs, cfg.seed)
            };
            let r2 = grid.norm2(s);
            SiteSpectrum {
                site: grid.site(s).to_vec(),
                radius: r2.sqrt(),
                components: (0..5).map(col).collect(),
                total: col(5),
                a1_sq: col(6),
                a1_re: col(7),
                a1_im: col(8),
                a2_re: col(9),
                a2_im: col(10),
                pseudo_re: col(11),
                pseudo_im: col(12),
                n0_exact: params.b_coeff_r2(r2) * -(-2.0 * params.gamma_r2(r2) * tau).exp_m1(),
                a1_stationary: a1_stationary_closed_form(params, table, s),
            }
        })
        .collect();
    Ok(McReport {
        params: params.clone(),
        config: cfg.clone(),
        tau,
        steps,
        rho,
        table_entries: table.total(),
        coarse_path: h > 0.1,
        sites,
    })
}

/// `L^{-d} (sum_table a1 a2 conj(a3) - |a_s|^2 a_s)` at every site.
pub fn resonant_nonlinearity(table: &ResonantTable, a: &[Complex64]) -> Vec<Complex64> {
    let grid = &table.grid;
    let scale = grid.l.powi(-(grid.d as i32));
    (0..grid.len())
        .map(|s| {
            let mut y = Complex64::new(0.0, 0.0);
            for e in table.entries(s) {
                y += a[e[0] as usize] * a[e[1] as usize] * a[e[2] as usize].conj();
            }
            scale * (y - a[s].norm_sqr() * a[s])
        })
        .collect()
}

/// One step of `da = (-g a + i rho Y(a)) dt + b dbeta`: exact linear and noise
/// part, explicit nonlinearity.
pub fn effective_sde_step(
    params: &ModelParams,
    table: &ResonantTable,
    a: &AmplitudeField,
    h: f64,
    rho: f64,
    rngs: &mut [ChaCha8Rng],
) -> Result<AmplitudeField> {
    let grid = &table.grid;
    if !(h > 0.0) {
        return Err(Error::InvalidParam(format!("step must be positive, got {h}")));
    }
    check_shapes(grid, a, rngs)?;
    let y = if rho != 0.0 { Some(resonant_nonlinearity(table, &a.values)) } else { None };
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (decay, var) = ou_coefficients(params, grid.norm2(i), h);
        let mut drift = a.values[i];
        if let Some(y) = &y {
            drift += I * rho * h * y[i];
        }
        let v = decay * drift + circular_gaussian(&mut rngs[i], var);
        if !v.norm_sqr().is_finite() || v.norm_sqr() > 1e12 {
            return Err(Error::BlowUp("amplitude blow-up: step size too large".into()));
        }
        values.push(v);
    }
    Ok(AmplitudeField { tau: a.tau + h, values })
}

/// Energy balance of the effective equation along one path:
/// `sum|a(T)|^2 - int_0^T sum(-2 g |a|^2 + 2 b^2) dt` (trapezoid), which has
/// zero mean when the nonlinearity conserves `sum |a|^2`.
pub fn energy_defect(
    params: &ModelParams,
    table: &ResonantTable,
    rho: f64,
    h: f64,
    steps: usize,
    seed: u64,
    sample: u64,
) -> Result<f64> {
    let grid = &table.grid;
    let mut rngs: Vec<ChaCha8Rng> = (0..grid.len()).map(|i| site_rng(seed, sample, i)).collect();
    let g: Vec<f64> = (0..grid.len()).map(|i| params.gamma_r2(grid.norm2(i))).collect();
    let b2: f64 = (0..grid.len()).map(|i| params.forcing().squared_r2(grid.norm2(i))).sum();
    let rate = |a: &AmplitudeField| -> f64 {
        a.values.iter().zip(&g).map(|(v, g)| -2.0 * g * v.norm_sqr()).sum::<f64>() + 2.0 * b2
    };
    let mut a = AmplitudeField::zeros(grid);
    let mut integral = 0.0;
    let mut prev = rate(&a);
    for _ in 0..steps {
        a = effective_sde_step(params, table, &a, h, rho, &mut rngs)?;
        let cur = rate(&a);
        integral += 0.5 * h * (prev + cur);
        prev = cur;
    }
    Ok(a.values.iter().map(|v| v.norm_sqr()).sum::<f64>() - integral)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params2(l: f64) -> ModelParams {
        ModelParams { d: 2, l, ..ModelParams::default() }
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = SiteGrid::new(3, 2.0, 2).unwrap();
        assert_eq!(g.len(), 125);
        for i in 0..g.len() {
            assert_eq!(g.index(g.site(i)), Some(i));
        }
        assert_eq!(g.index(&[3, 0, 0]), None);
        assert_eq!(g.site(g.origin()), &[0, 0, 0]);
        assert!((g.norm2(g.index(&[1, 1, 0]).unwrap()) - 0.5).abs() < 1e-15);
        assert!(SiteGrid::new(2, 2.0, 0).is_err());
    }

    #[test]
    fn table_matches_brute_force() {
        for (l, m_cut) in [(1.0, 1), (2.0, 2)] {
            let grid = SiteGrid::new(2, l, m_cut).unwrap();
            let table = ResonantTable::build(&grid);
            for s in 0..grid.len() {
                let m = grid.site(s);
                let mut brute = Vec::new();
                for i1 in 0..grid.len() {
                    for i2 in 0..grid.len() {
                        for i3 in 0..grid.len() {
                            let (a, b, c) = (grid.site(i1), grid.site(i2), grid.site(i3));
                            let linear = (0..2).all(|t| a[t] + b[t] == c[t] + m[t]);
                            let sq = |v: &[i64]| v.iter().map(|x| x * x).sum::<i64>();
                            let omega = sq(a) + sq(b) - sq(c) - sq(m);
                            let same = (i1 == i3 && i2 == s) || (i1 == s && i2 == i3);
                            if linear && omega == 0 && !same {
                                brute.push([i1 as u32, i2 as u32, i3 as u32]);
                            }
                        }
                    }
                }
                let mut got = table.entries(s).to_vec();
                got.sort();
                brute.sort();
                assert_eq!(got, brute, "site {m:?}");
            }
        }
    }

    #[test]
    fn table_symmetries() {
        let grid = SiteGrid::new(2, 2.0, 3).unwrap();
        let table = ResonantTable::build(&grid);
        let s = grid.origin();
        let set: std::collections::HashSet<[u32; 3]> = table.entries(s).iter().cloned().collect();
        for e in table.entries(s) {
            assert!(set.contains(&[e[1], e[0], e[2]]));
            // coordinate swap and reflection fix the origin
            let map = |i: u32, f: &dyn Fn(&[i64]) -> Vec<i64>| grid.index(&f(grid.site(i as usize))).unwrap() as u32;
            let swap = |m: &[i64]| vec![m[1], m[0]];
            let refl = |m: &[i64]| vec![-m[0], m[1]];
            assert!(set.contains(&[map(e[0], &swap), map(e[1], &swap), map(e[2], &swap)]));
            assert!(set.contains(&[map(e[0], &refl), map(e[1], &refl), map(e[2], &refl)]));
        }
        assert!(table.total() > 1000);
    }

    #[test]
    fn corner_site_of_smallest_grid_has_no_resonances() {
        let grid = SiteGrid::new(1, 1.0, 1).unwrap();
        let table = ResonantTable::build(&grid);
        // in one dimension (s1 - s)(s2 - s) = 0 forces s1 = s or s2 = s
        assert_eq!(table.total(), 0);
    }

    #[test]
    fn unforced_modes_stay_at_rest() {
        let p = ModelParams { b0: 0.0, ..params2(2.0) };
        let grid = SiteGrid::new(2, 2.0, 1).unwrap();
        let mut rngs: Vec<_> = (0..grid.len()).map(|i| site_rng(3, 0, i)).collect();
        let mut a = AmplitudeField::zeros(&grid);
        for _ in 0..10 {
            a = ou_step(&p, &grid, &a, 0.1, &mut rngs).unwrap();
        }
        assert!(a.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
        assert!(ou_step(&p, &grid, &a, 0.0, &mut rngs).is_err());
    }

    #[test]
    fn linear_modes_have_exact_law() {
        let p = params2(2.0);
        let grid = SiteGrid::new(2, 2.0, 1).unwrap();
        let sites: Vec<usize> = (0..grid.len()).collect();
        let n = 10_000u64;
        let (steps, h) = (40, 0.05);
        let samples: Vec<Paths> = (0..n).map(|k| sample_linear_paths(&p, &grid, &sites, steps, h, 7, k)).collect();
        for s in [grid.origin(), grid.index(&[1, 1]).unwrap()] {
            let r2 = grid.norm2(s);
            let (g, b) = (p.gamma_r2(r2), p.b_coeff_r2(r2));
            // variance at two times and the lag correlation between them
            let (k1, k2) = (10, 40);
            let (t1, t2) = (k1 as f64 * h, k2 as f64 * h);
            let v2: Vec<f64> = samples.iter().map(|x| x[s][k2].norm_sqr()).collect();
            let est = McEstimate::from_samples(&v2, 7);
            assert!(est.within(b * -(-2.0 * g * t2).exp_m1(), 4.0), "{est:?}");
            let lag: Vec<f64> = samples.iter().map(|x| (x[s][k1] * x[s][k2].conj()).re).collect();
            let est = McEstimate::from_samples(&lag, 7);
            let exact = b * ((-g * (t2 - t1)).exp() - (-g * (t1 + t2)).exp());
            assert!(est.within(exact, 4.0), "{est:?} vs {exact}");
            let pseudo: Vec<f64> = samples.iter().map(|x| (x[s][k2] * x[s][k2]).re).collect();
            assert!(McEstimate::from_samples(&pseudo, 7).within(0.0, 4.0));
            let other = grid.index(&[0, 1]).unwrap();
            let cross: Vec<f64> = samples.iter().map(|x| (x[s][k2] * x[other][k2].conj()).re).collect();
            assert!(McEstimate::from_samples(&cross, 7).within(0.0, 4.0));
        }
    }

    #[test]
    fn ou_step_matches_stored_paths() {
        let p = params2(2.0);
        let grid = SiteGrid::new(2, 2.0, 1).unwrap();
        let sites: Vec<usize> = (0..grid.len()).collect();
        let paths = sample_linear_paths(&p, &grid, &sites, 5, 0.1, 9, 4);
        let mut rngs: Vec<_> = (0..grid.len()).map(|i| site_rng(9, 4, i)).collect();
        let mut a = AmplitudeField::zeros(&grid);
        for _ in 0..5 {
            a = ou_step(&p, &grid, &a, 0.1, &mut rngs).unwrap();
        }
        for i in 0..grid.len() {
            assert!((a.values[i] - paths[i][5]).norm() < 1e-15);
        }
        // only a subset of sites: identical values
        let sub = sample_linear_paths(&p, &grid, &[3], 5, 0.1, 9, 4);
        assert_eq!(sub[3], paths[3]);
    }

    #[test]
    fn exponential_trapezoid_is_exact_for_linear_data() {
        let (g, h) = (2.5, 0.3);
        let (w0, w1) = exp_trapezoid(g, h);
        // y(u) = 1 + u
        let e = (-g * h).exp();
        let exact = (1.0 + h) * (1.0 - e) / g - (1.0 / (g * g) - e * (h / g + 1.0 / (g * g)));
        assert!((w0 + w1 * (1.0 + h) - exact).abs() < 1e-13);
        let (s0, s1) = exp_trapezoid(1e-6, 0.1);
        assert!((s0 - 0.05).abs() < 1e-7 && (s1 - 0.05).abs() < 1e-7);
    }

    #[test]
    fn zero_paths_give_zero_iterates() {
        let p = params2(2.0);
        let grid = SiteGrid::new(2, 2.0, 2).unwrap();
        let table = ResonantTable::build(&grid);
        let zero: Paths = vec![vec![Complex64::new(0.0, 0.0); 11]; grid.len()];
        let all: Vec<usize> = (0..grid.len()).collect();
        let a1 = duhamel_a1(&p, &table, &zero, &all, 0.1, Variant::Full).unwrap();
        let a2 = duhamel_a2(&p, &table, &zero, &a1, &all, 0.1, Variant::Full).unwrap();
        assert!(a2.iter().flatten().all(|v| v.norm() == 0.0));
        assert!(duhamel_a1(&p, &table, &vec![Vec::new(); grid.len()], &all, 0.1, Variant::Full).is_err());
    }

    #[test]
    fn first_iterate_solves_its_equation() {
        // deterministic smooth inputs: compare with a fine-step reference
        let p = params2(2.0);
        let grid = SiteGrid::new(2, 2.0, 1).unwrap();
        let table = ResonantTable::build(&grid);
        let s = grid.origin();
        let make = |steps: usize| -> Paths {
            let h = 1.0 / steps as f64;
            (0..grid.len())
                .map(|i| (0..=steps).map(|k| Complex64::from_polar(1.0 + 0.1 * i as f64, 0.3 * i as f64 * k as f64 * h)).collect())
                .collect()
        };
        let coarse = duhamel_a1(&p, &table, &make(50), &[s], 1.0 / 50.0, Variant::Full).unwrap();
        let fine = duhamel_a1(&p, &table, &make(400), &[s], 1.0 / 400.0, Variant::Full).unwrap();
        let (c, f) = (coarse[s][50], fine[s][400]);
        assert!(f.norm() > 0.0);
        assert!((c - f).norm() < 1e-3 * f.norm(), "{c} vs {f}");
    }

    #[test]
    fn spectrum_identities_at_small_scale() {
        let p = ModelParams { epsilon: 0.2, ..params2(2.0) };
        let cfg = McConfig {
            m_cut: 2,
            h: 0.05,
            tau: Some(1.5),
            samples: 2000,
            seed: 5,
            variant: Variant::Approx,
            max_order: 2,
            sites: Some(vec![vec![0, 0], vec![1, 0]]),
        };
        let rep = mc_spectrum(&p, &cfg).unwrap();
        for s in &rep.sites {
            assert!(s.components[0].within(s.n0_exact, 3.5), "{:?}", s.components[0]);
            assert!(s.components[1].within(0.0, 3.5));
            assert!(s.a1_re.within(0.0, 3.5) && s.a1_im.within(0.0, 3.5));
            assert!(s.a2_re.within(0.0, 3.5) && s.a2_im.within(0.0, 3.5));
            assert!(s.pseudo_re.within(0.0, 3.5) && s.pseudo_im.within(0.0, 3.5));
            // the quasisolution spectrum is the degree-four polynomial in eps
            let poly: f64 = s.components.iter().enumerate().map(|(k, c)| p.epsilon.powi(k as i32) * c.mean).sum();
            assert!((poly - s.total.mean).abs() <= 1e-9 * s.total.mean.abs());
        }
    }

    #[test]
    fn estimates_are_reproducible() {
        let p = params2(2.0);
        let cfg = McConfig { m_cut: 2, samples: 64, tau: Some(1.0), ..McConfig::default() };
        let a = mc_spectrum(&p, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_spectrum(&p, &cfg).unwrap());
        assert_eq!(a, b);
        let c = mc_spectrum(&p, &McConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.sites[0].components[0].mean, c.sites[0].components[0].mean);
    }

    #[test]
    fn stationary_first_iterate_matches_closed_form() {
        let p = params2(2.0);
        let cfg = McConfig { m_cut: 2, samples: 3000, seed: 17, ..McConfig::default() };
        let rep = mc_spectrum(&p, &cfg).unwrap();
        let s = &rep.sites[0];
        assert!(s.a1_stationary > 0.0);
        assert!(s.a1_sq.within(s.a1_stationary, 3.0), "{:?} vs {}", s.a1_sq, s.a1_stationary);
    }

    #[test]
    fn effective_equation_without_coupling_is_linear() {
        let p = params2(2.0);
        let grid = SiteGrid::new(2, 2.0, 1).unwrap();
        let table = ResonantTable::build(&grid);
        let mut r1: Vec<_> = (0..grid.len()).map(|i| site_rng(1, 0, i)).collect();
        let mut r2 = r1.clone();
        let mut a = AmplitudeField::zeros(&grid);
        let mut b = a.clone();
        for _ in 0..20 {
            a = effective_sde_step(&p, &table, &a, 0.05, 0.0, &mut r1).unwrap();
            b = ou_step(&p, &grid, &b, 0.05, &mut r2).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn nonlinearity_conserves_energy() {
        let grid = SiteGrid::new(2, 2.0, 2).unwrap();
        let table = ResonantTable::build(&grid);
        let a: Vec<Complex64> =
            (0..grid.len()).map(|i| Complex64::from_polar(0.3 + 0.01 * i as f64, 0.7 * i as f64)).collect();
        let y = resonant_nonlinearity(&table, &a);
        // d/dt sum |a|^2 = 2 Re sum conj(a) i Y = 0
        let rate: Complex64 = a.iter().zip(&y).map(|(a, y)| a.conj() * I * y).sum();
        assert!(rate.re.abs() < 1e-12);
    }

    #[test]
    fn energy_balance_holds_on_average() {
        let p = params2(2.0);
        let grid = SiteGrid::new(2, 2.0, 1).unwrap();
        let table = ResonantTable::build(&grid);
        let xs: Vec<f64> = (0..400).map(|k| energy_defect(&p, &table, 1.0, 0.005, 200, 3, k).unwrap()).collect();
        let est = McEstimate::from_samples(&xs, 3);
        assert!(est.within(0.0, 3.0), "{est:?}");
    }
}
