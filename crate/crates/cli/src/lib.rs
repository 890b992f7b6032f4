//! Experiment runner behind the `bht` binary.
//!
//! Every command reads an [`ExperimentConfig`], writes CSV tables and a `report.json` into
//! the output directory, and returns an [`Outcome`] whose verdict maps to the exit code.
//! Reports carry the config hash, the grid parameters and the crate versions.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bht_core::embedding::{embed, Grid3};
use bht_core::geometry::{Band, Point, Tree};
use bht_core::outer::{
    greedy_cover, inequality_sampler, outer_lp_profile, Aggregation, Cut, FieldSize, Generator, InequalityKind, Lattice,
    LocalSize, LpOptions, OuterSpec, RatioReport, SampleWindow, SamplerInputs,
};
use bht_core::signal::SampledSignal;
use bht_core::sizes::{Ext, SizeKind, SizeSpec};
use bht_core::transform::{
    c_beta, central_relative_l2, direct_bht, halfplane_multiplier, support_region, wp_representation, RepresentationOpts,
};
use bht_core::wavepacket::{make_mother_packet, WavePacket};
use bht_core::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Failure of a command, with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] bht_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bht_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(E::Parameter(_) | E::Shape(_) | E::Io(_)) => 2,
            CliError::Core(E::Convergence(_) | E::IterationCap { .. }) => 1,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Periodic sampling grid of input signals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalGrid {
    pub n: usize,
    pub dx: f64,
    pub x0: f64,
}

impl SignalGrid {
    pub fn period(&self) -> f64 {
        self.n as f64 * self.dx
    }
}

/// Finite Fourier series over every grid frequency `k/L` in the union of `bands`, with
/// seeded coefficients uniform in the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub bands: Vec<(f64, f64)>,
    /// Remove the `ξ = 0` coefficient.
    #[serde(default)]
    pub zero_mean: bool,
}

impl SignalSpec {
    pub fn new(bands: &[(f64, f64)]) -> Self {
        SignalSpec { bands: bands.to_vec(), zero_mean: false }
    }

    fn validate(&self, g: &SignalGrid) -> CliResult<()> {
        let nyq = 0.5 / g.dx;
        for &(lo, hi) in &self.bands {
            if !(lo <= hi) || lo.abs() >= nyq / 2.0 || hi.abs() >= nyq / 2.0 {
                return Err(bad(format!("band [{lo}, {hi}] must be ordered and inside half the Nyquist frequency {nyq}")));
            }
        }
        Ok(())
    }

    pub fn draw(&self, g: &SignalGrid, rng: &mut ChaCha8Rng) -> CliResult<SampledSignal<f64>> {
        self.validate(g)?;
        let l = g.period();
        let kmax = (g.n / 2) as i64;
        let mut terms = Vec::new();
        for k in -kmax..kmax {
            let xi = k as f64 / l;
            if (k == 0 && self.zero_mean) || !self.bands.iter().any(|&(lo, hi)| lo <= xi && xi <= hi) {
                continue;
            }
            terms.push((xi, Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
        Ok(SampledSignal::from_fourier_series(g.n, g.dx, g.x0, &terms)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub r: f64,
    pub plateau_fraction: f64,
}

impl PacketConfig {
    pub fn build(&self) -> CliResult<WavePacket<f64>> {
        Ok(make_mother_packet(self.r, self.plateau_fraction)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiplierConfig {
    /// Nodes of the `ξ̃`-grid on `B_{4r}(1)` for the envelope diagnostic.
    pub envelope_nodes: usize,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        MultiplierConfig { envelope_nodes: 2048 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub grid: SignalGrid,
    pub f1: SignalSpec,
    pub f2: SignalSpec,
    pub beta: f64,
    /// Shrink factors of the a-priori support box, increasing.
    pub scales: Vec<f64>,
    pub tol: f64,
    pub eta_step: f64,
    pub t_per_octave: usize,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            grid: SignalGrid { n: 1024, dx: 1.0 / 64.0, x0: -8.0 },
            f1: SignalSpec::new(&[(-2.0, -1.0), (1.0, 2.0)]),
            f2: SignalSpec::new(&[(-0.5, 0.5)]),
            beta: 1.0,
            scales: vec![0.6, 0.8, 1.0],
            tol: 1e-2,
            eta_step: 0.125,
            t_per_octave: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub grid: SignalGrid,
    pub f1: SignalSpec,
    pub f2: SignalSpec,
    pub pairs: usize,
    /// `(p₁, p₂)` with `1/p = 1/p₁ + 1/p₂`.
    pub exponents: Vec<(f64, f64)>,
    /// Bound on `max_β ratio / ratio at the largest β`.
    pub factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: SignalGrid { n: 512, dx: 1.0 / 32.0, x0: -8.0 },
            f1: SignalSpec::new(&[(-1.0, 1.0)]),
            f2: SignalSpec::new(&[(-1.0, 1.0)]),
            pairs: 10,
            exponents: vec![(2.0, 2.0), (4.0, 4.0), (3.0, 6.0)],
            factor: 3.0,
        }
    }
}

/// Embedded test field shared by `norms`, `cover` and `check`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub signal_grid: SignalGrid,
    pub signal: SignalSpec,
    pub packet: PacketConfig,
    pub grid: Grid3<f64>,
    pub size: SizeSpec<f64>,
    pub outer: OuterSpec<f64>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        let band = Band { lo: -1.0, hi: 1.0 };
        FieldConfig {
            signal_grid: SignalGrid { n: 256, dx: 1.0 / 16.0, x0: -8.0 },
            signal: SignalSpec::new(&[(-0.5, 0.5)]),
            packet: PacketConfig { r: 0.25, plateau_fraction: 0.5 },
            grid: Grid3 { eta0: -8.0, deta: 0.002, n_eta: 8001, y0: -2.0, dy: 1.0 / 16.0, n_y: 65, t0: 1.0 / 64.0, rho: 2f64.powf(0.25), n_t: 29 },
            size: SizeSpec::lebesgue(2.0, f64::INFINITY),
            outer: OuterSpec::new(
                Generator::Trees { band },
                Aggregation::L1,
                Lattice { s_max: 1.0, n_scales: 2, x_lo: -1.0, x_hi: 1.0, x_step: 0.5, xi_lo: -0.5, xi_hi: 0.5, xi_step: 0.25 },
                SampleWindow { eta: (-3.0, 3.0), n_eta: 16, y: (-1.0, 1.0), n_y: 32, t: (1.0 / 32.0, 2.0), n_t: 16 },
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormsConfig {
    pub exponents: Vec<Ext>,
    pub lp: LpOptions,
}

impl Default for NormsConfig {
    fn default() -> Self {
        NormsConfig { exponents: vec![Ext(1.0), Ext(2.0), Ext(4.0), Ext::INF], lp: LpOptions { levels: 24, span_log2: 12.0, ..LpOptions::default() } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverConfig {
    /// `λ` as a fraction of the largest lattice size.
    pub lambda_fraction: f64,
}

impl Default for CoverConfig {
    fn default() -> Self {
        CoverConfig { lambda_fraction: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub kinds: Vec<InequalityKind>,
    pub trials: usize,
    pub trees: Vec<Tree<f64>>,
    pub single_tree_exponents: Vec<f64>,
    pub holder_exponents: Vec<f64>,
    pub uniform_exponent: f64,
    pub factor: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        let band = Band { lo: -2.0, hi: 2.0 };
        CheckConfig {
            kinds: vec![InequalityKind::RnDomination, InequalityKind::UniformEmbedding],
            trials: 2,
            trees: vec![Tree { xi: 0.2, x: 0.0, s: 1.0, band }, Tree { xi: -0.1, x: 0.25, s: 1.0, band }],
            single_tree_exponents: vec![3.0, 3.0, 3.0],
            holder_exponents: vec![2.0, 2.0],
            uniform_exponent: 2.0,
            factor: 3.0,
        }
    }
}

/// Full experiment description; every section has defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub packet: PacketConfig,
    pub betas: Vec<f64>,
    pub multiplier: MultiplierConfig,
    pub reconstruct: ReconstructConfig,
    pub sweep: SweepConfig,
    pub field: FieldConfig,
    pub norms: NormsConfig,
    pub cover: CoverConfig,
    pub check: CheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            packet: PacketConfig { r: 1.0 / 32.0, plateau_fraction: 0.5 },
            betas: (0..=8).map(|k| 2f64.powi(-k)).collect(),
            multiplier: MultiplierConfig::default(),
            reconstruct: ReconstructConfig::default(),
            sweep: SweepConfig::default(),
            field: FieldConfig::default(),
            norms: NormsConfig::default(),
            cover: CoverConfig::default(),
            check: CheckConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> CliResult<Self> {
        serde_json::from_str(s).map_err(|e| bad(e.to_string()))
    }

    /// Checks the preconditions shared by all commands.
    pub fn validate(&self) -> CliResult<()> {
        if self.betas.is_empty() || self.betas.iter().any(|&b| !(b > 0.0 && b <= 1.0)) {
            return Err(bad("betas must be a nonempty list in (0, 1]"));
        }
        self.packet.build()?;
        self.field.packet.build()?;
        let g = &self.field.grid;
        Grid3::new(g.eta0, g.deta, g.n_eta, g.y0, g.dy, g.n_y, g.t0, g.rho, g.n_t)?;
        for t in &self.check.trees {
            Tree::new(t.xi, t.x, t.s, Band::new(t.band.lo, t.band.hi)?)?;
        }
        let r = &self.reconstruct;
        if r.scales.is_empty() || r.scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) || r.scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("reconstruct.scales must increase within (0, 1]"));
        }
        if !(r.beta > 0.0 && r.beta <= 1.0) || !(r.tol > 0.0) {
            return Err(bad("reconstruct needs β in (0, 1] and tol > 0"));
        }
        let s = &self.sweep;
        if s.exponents.iter().any(|&(a, b)| !(a >= 1.0 && b >= 1.0)) || !(s.factor >= 1.0) {
            return Err(bad("sweep exponents must be ≥ 1 and factor ≥ 1"));
        }
        if !(self.cover.lambda_fraction > 0.0 && self.cover.lambda_fraction < 1.0) {
            return Err(bad("cover.lambda_fraction must lie in (0, 1)"));
        }
        if self.norms.exponents.iter().any(|p| !(p.0 > 0.0)) {
            return Err(bad("norm exponents must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the effective config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Multiplier,
    Reconstruct,
    SweepBeta,
    Norms,
    Cover,
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Multiplier => "multiplier",
            Command::Reconstruct => "reconstruct",
            Command::SweepBeta => "sweep-beta",
            Command::Norms => "norms",
            Command::Cover => "cover",
            Command::Check => "check",
        }
    }
}

/// Verdict and written files of a command.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct Header<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    versions: Versions,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Versions {
    bht_core: &'static str,
    bht_cli: &'static str,
}

#[derive(Serialize)]
struct Report<'a, R: Serialize> {
    header: Header<'a>,
    pass: bool,
    results: R,
}

struct Out {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Out { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        Ok(BufWriter::new(File::create(p)?))
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(header).map_err(core_csv)?;
        for r in rows {
            w.write_record(r).map_err(core_csv)?;
        }
        w.flush()?;
        Ok(())
    }

    fn report<R: Serialize>(&mut self, cmd: Command, cfg: &ExperimentConfig, pass: bool, results: R) -> CliResult<Outcome> {
        let report = Report {
            header: Header {
                command: cmd.name(),
                config_hash: cfg.hash(),
                seed: cfg.seed,
                versions: Versions { bht_core: bht_core::VERSION, bht_cli: env!("CARGO_PKG_VERSION") },
                config: cfg,
            },
            pass,
            results,
        };
        let mut w = self.create("report.json")?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::Io(e.into()))?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(Outcome { pass, files: std::mem::take(&mut self.files) })
    }
}

fn core_csv(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

/// Runs one command and writes its files into `out`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> CliResult<Outcome> {
    cfg.validate()?;
    let mut o = Out::new(out)?;
    match cmd {
        Command::Multiplier => cmd_multiplier(cfg, &mut o),
        Command::Reconstruct => cmd_reconstruct(cfg, &mut o),
        Command::SweepBeta => cmd_sweep_beta(cfg, &mut o),
        Command::Norms => cmd_norms(cfg, &mut o),
        Command::Cover => cmd_cover(cfg, &mut o),
        Command::Check => cmd_check(cfg, &mut o),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CBetaRow {
    pub beta: f64,
    pub c_beta: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub within: bool,
}

/// `C_{φ,β}` for every β with the bounds `(r²/8, 8r²)`.
pub fn c_beta_sweep(phi: &WavePacket<f64>, betas: &[f64]) -> CliResult<Vec<CBetaRow>> {
    let r = phi.radius;
    let (lo, hi) = (r * r / 8.0, 8.0 * r * r);
    betas
        .par_iter()
        .map(|&beta| {
            let c = c_beta(phi, beta)?.value;
            Ok(CBetaRow { beta, c_beta: c, lower_bound: lo, upper_bound: hi, within: lo < c && c < hi })
        })
        .collect()
}

/// Pointwise comparison of `m` with `(r/4) 1_{B_{r/4}(1)} ≤ m ≤ r 1_{B_{2r}(1)}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub beta: f64,
    pub nodes: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    pub support_violations: usize,
    /// `max m / r`.
    pub max_over_r: f64,
}

impl EnvelopeCheck {
    pub fn ok(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0 && self.support_violations == 0
    }
}

pub fn multiplier_envelope(phi: &WavePacket<f64>, beta: f64, nodes: usize) -> EnvelopeCheck {
    let r = phi.radius;
    let vals: Vec<(f64, f64)> = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let x = 1.0 - 4.0 * r + 8.0 * r * i as f64 / (nodes - 1) as f64;
            (x, halfplane_multiplier(phi, beta, x))
        })
        .collect();
    let mut c = EnvelopeCheck { beta, nodes, lower_violations: 0, upper_violations: 0, support_violations: 0, max_over_r: 0.0 };
    for (x, m) in vals {
        let d = (x - 1.0).abs();
        if d < r / 4.0 && m < r / 4.0 {
            c.lower_violations += 1;
        }
        if d < 2.0 * r && m > r {
            c.upper_violations += 1;
        }
        if d >= 2.0 * r && m != 0.0 {
            c.support_violations += 1;
        }
        c.max_over_r = c.max_over_r.max(m / r);
    }
    c
}

fn cmd_multiplier(cfg: &ExperimentConfig, o: &mut Out) -> CliResult<Outcome> {
    let phi = cfg.packet.build()?;
    let rows = c_beta_sweep(&phi, &cfg.betas)?;
    let env: Vec<EnvelopeCheck> = cfg.betas.iter().map(|&b| multiplier_envelope(&phi, b, cfg.multiplier.envelope_nodes)).collect();
    let csv_rows: Vec<Vec<String>> =
        rows.iter().map(|r| vec![num(r.beta), num(r.c_beta), num(r.lower_bound), num(r.upper_bound)]).collect();
    o.csv("multiplier.csv", &["beta", "C_beta", "lower_bound", "upper_bound"], &csv_rows)?;
    let pass = rows.iter().all(|r| r.within);
    #[derive(Serialize)]
    struct R {
        c_beta: Vec<CBetaRow>,
        envelope: Vec<EnvelopeCheck>,
    }
    o.report(Command::Multiplier, cfg, pass, R { c_beta: rows, envelope: env })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructRow {
    pub region_index: usize,
    pub scale: f64,
    pub rel_l2_error: f64,
    pub tail_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReconstructReport {
    pub rows: Vec<ReconstructRow>,
    pub strictly_decreasing: bool,
    pub final_below_tol: bool,
}

/// Distance between `BHT_β/(πi)` and the truncated wave packet representation on nested boxes.
pub fn reconstruct(
    f1: &SampledSignal<f64>,
    f2: &SampledSignal<f64>,
    phi: &WavePacket<f64>,
    rc: &ReconstructConfig,
) -> CliResult<ReconstructReport> {
    let target = direct_bht(f1, f2, rc.beta)?.scale(Complex::new(0.0, -1.0 / std::f64::consts::PI));
    let sup = support_region(f1, f2, rc.beta, phi.radius)?
        .ok_or_else(|| CliError::Core(bht_core::Error::Precondition("the inputs have no frequency pair with ξ₁ > βξ₂".into())))?;
    let opts = RepresentationOpts { eta_step: rc.eta_step, t_per_octave: rc.t_per_octave };
    let mut rows = Vec::new();
    for (i, &s) in rc.scales.iter().enumerate() {
        let rep = wp_representation(f1, f2, rc.beta, phi, &sup.scaled(s), &opts)?;
        rows.push(ReconstructRow {
            region_index: i,
            scale: s,
            rel_l2_error: central_relative_l2(&rep.signal, &target),
            tail_estimate: rep.tail_estimate,
        });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].rel_l2_error < w[0].rel_l2_error);
    let final_below_tol = rows.last().map_or(false, |r| r.rel_l2_error < rc.tol);
    Ok(ReconstructReport { rows, strictly_decreasing, final_below_tol })
}

fn cmd_reconstruct(cfg: &ExperimentConfig, o: &mut Out) -> CliResult<Outcome> {
    let rc = &cfg.reconstruct;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f1 = rc.f1.draw(&rc.grid, &mut rng)?;
    let f2 = rc.f2.draw(&rc.grid, &mut rng)?;
    let rep = reconstruct(&f1, &f2, &cfg.packet.build()?, rc)?;
    let rows: Vec<Vec<String>> =
        rep.rows.iter().map(|r| vec![r.region_index.to_string(), num(r.rel_l2_error), num(r.tail_estimate)]).collect();
    o.csv("reconstruct.csv", &["region_index", "rel_L2_error", "tail_estimate"], &rows)?;
    let pass = rep.strictly_decreasing && rep.final_below_tol;
    o.report(Command::Reconstruct, cfg, pass, rep)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub p1: f64,
    pub p2: f64,
    pub pair: usize,
    pub beta: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepVerdict {
    pub p1: f64,
    pub p2: f64,
    pub pair: usize,
    /// Ratio at the largest β.
    pub reference: f64,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub uniform: bool,
}

/// `‖BHT_β[f₁,f₂]‖_p / (‖f₁‖_{p₁}‖f₂‖_{p₂})` for every pair, exponent and β.
pub fn sweep_beta(pairs: &[(SampledSignal<f64>, SampledSignal<f64>)], betas: &[f64], exps: &[(f64, f64)], factor: f64) -> CliResult<(Vec<SweepRow>, Vec<SweepVerdict>)> {
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    let mut order: Vec<f64> = betas.to_vec();
    order.sort_by(|a, b| b.partial_cmp(a).expect("finite β"));
    for &(p1, p2) in exps {
        let p = 1.0 / (1.0 / p1 + 1.0 / p2);
        for (i, (f1, f2)) in pairs.iter().enumerate() {
            let den = f1.lp_norm(p1) * f2.lp_norm(p2);
            let ratios: Vec<f64> = order
                .par_iter()
                .map(|&b| Ok(if den > 0.0 { direct_bht(f1, f2, b)?.lp_norm(p) / den } else { 0.0 }))
                .collect::<CliResult<_>>()?;
            for (&b, &r) in order.iter().zip(&ratios) {
                rows.push(SweepRow { p1, p2, pair: i, beta: b, ratio: r });
            }
            let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
            let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            verdicts.push(SweepVerdict { p1, p2, pair: i, reference: ratios[0], max_ratio, min_ratio, uniform: max_ratio <= factor * ratios[0] });
        }
    }
    Ok((rows, verdicts))
}

/// Seeded input pairs of the sweep.
pub fn sweep_pairs(sc: &SweepConfig, seed: u64) -> CliResult<Vec<(SampledSignal<f64>, SampledSignal<f64>)>> {
    (0..sc.pairs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            Ok((sc.f1.draw(&sc.grid, &mut rng)?, sc.f2.draw(&sc.grid, &mut rng)?))
        })
        .collect()
}

fn cmd_sweep_beta(cfg: &ExperimentConfig, o: &mut Out) -> CliResult<Outcome> {
    let sc = &cfg.sweep;
    let pairs = sweep_pairs(sc, cfg.seed)?;
    let (rows, verdicts) = sweep_beta(&pairs, &cfg.betas, &sc.exponents, sc.factor)?;
    let csv: Vec<Vec<String>> =
        rows.iter().map(|r| vec![num(r.beta), num(r.p1), num(r.p2), r.pair.to_string(), num(r.ratio)]).collect();
    o.csv("sweep_beta.csv", &["beta", "p1", "p2", "pair", "ratio"], &csv)?;
    let pass = verdicts.iter().all(|v| v.uniform);
    o.report(Command::SweepBeta, cfg, pass, verdicts)
}

fn field_size(cfg: &ExperimentConfig) -> CliResult<FieldSize<f64>> {
    let fc = &cfg.field;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = fc.signal.draw(&fc.signal_grid, &mut rng)?;
    let e = embed(&f, &fc.grid, &[fc.packet.build()?], None)?;
    Ok(FieldSize::new(e, fc.size)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct NormRow {
    p: Ext,
    strong: f64,
    weak: f64,
    top: f64,
    levels: usize,
    widened: usize,
    converged: bool,
}

fn cmd_norms(cfg: &ExperimentConfig, o: &mut Out) -> CliResult<Outcome> {
    let size = field_size(cfg)?;
    let mut rows = Vec::new();
    for (i, &p) in cfg.norms.exponents.iter().enumerate() {
        let prof = outer_lp_profile(&size, &cfg.field.outer, p, &Cut::everything(), &cfg.norms.lp)?;
        let mut w = o.create(&format!("profile_{i}.csv"))?;
        prof.write_csv(&mut w)?;
        w.flush()?;
        rows.push(NormRow {
            p,
            strong: prof.strong,
            weak: prof.weak,
            top: prof.top,
            levels: prof.levels.len(),
            widened: prof.widened,
            converged: prof.converged,
        });
    }
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.p.to_string(), num(r.strong), num(r.weak), num(r.top), r.widened.to_string(), r.converged.to_string()])
        .collect();
    o.csv("norms.csv", &["p", "strong", "weak", "top", "widened", "converged"], &csv)?;
    let pass = rows.iter().all(|r| r.converged && r.weak <= r.strong * (1.0 + 1e-12));
    o.report(Command::Norms, cfg, pass, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct CoverChecks {
    lambda: f64,
    top: f64,
    residual_ok: bool,
    disjoint_ok: bool,
    /// `min mass(X_T) / (λ μ¹(T))`, required `≥ |Θ|/2` for the `(1,1)` Lebesgue size.
    min_mass_ratio: Option<f64>,
    mass_asserted: bool,
    mass_ok: bool,
}

fn cmd_cover(cfg: &ExperimentConfig, o: &mut Out) -> CliResult<Outcome> {
    let size = field_size(cfg)?;
    let spec = &cfg.field.outer;
    let lattice = spec.lattice.sets(&spec.generator)?;
    let top = size.sizes(&lattice, &Cut::everything())?.into_iter().fold(0.0, f64::max);
    if !top.is_finite() {
        return Err(CliError::Core(bht_core::Error::Precondition("the size is infinite on some lattice tree".into())));
    }
    let cut = Cut::everything();
    let (c, checks) = if top == 0.0 {
        (None, CoverChecks { lambda: 0.0, top, residual_ok: true, disjoint_ok: true, min_mass_ratio: None, mass_asserted: false, mass_ok: true })
    } else {
        let lambda = cfg.cover.lambda_fraction * top;
        let c = greedy_cover(&size, lambda, spec, &cut)?;
        let samples: Vec<Point<f64>> = spec.window.points()?.into_iter().map(|p| p.0).collect();
        let s = &cfg.field.size;
        let width = match spec.generator {
            Generator::Trees { band } => band.width(),
            Generator::Strips { .. } => 0.0,
        };
        let mass_asserted = s.kind == SizeKind::Lebesgue && s.u == Ext(1.0) && s.v == Ext(1.0) && width >= 2.0;
        let ratio = c.min_mass_ratio();
        let mass_ok = !mass_asserted || ratio.map_or(true, |r| r >= width / 2.0 * (1.0 - 1e-12));
        let checks = CoverChecks {
            lambda,
            top,
            residual_ok: c.residual_size <= lambda,
            disjoint_ok: c.distinguished_disjoint(&samples, &cut),
            min_mass_ratio: ratio,
            mass_asserted,
            mass_ok,
        };
        (Some(c), checks)
    };
    let pass = checks.residual_ok && checks.disjoint_ok && checks.mass_ok;
    let rows: Vec<Vec<String>> = c
        .iter()
        .flat_map(|c| c.distinguished_subsets.iter())
        .map(|s| {
            vec![num(s.set.xi()), num(s.set.top_x()), num(s.set.scale()), num(s.size), s.mass.map_or(String::new(), num)]
        })
        .collect();
    o.csv("cover.csv", &["xi", "x", "s", "size", "mass"], &rows)?;
    #[derive(Serialize)]
    struct R {
        checks: CoverChecks,
        cover: Option<bht_core::outer::CoverResult<f64>>,
    }
    o.report(Command::Cover, cfg, pass, R { checks, cover: c })
}

fn cmd_check(cfg: &ExperimentConfig, o: &mut Out) -> CliResult<Outcome> {
    let fc = &cfg.field;
    let ck = &cfg.check;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let signals: Vec<SampledSignal<f64>> = (0..3 * ck.trials.max(1)).map(|_| fc.signal.draw(&fc.signal_grid, &mut rng)).collect::<CliResult<_>>()?;
    let packets = [fc.packet.build()?];
    let mut reports: Vec<RatioReport> = Vec::new();
    for &kind in &ck.kinds {
        let exponents = match kind {
            InequalityKind::SingleTree => ck.single_tree_exponents.clone(),
            InequalityKind::OuterHolder => ck.holder_exponents.clone(),
            InequalityKind::UniformEmbedding => vec![ck.uniform_exponent],
            InequalityKind::RnDomination => Vec::new(),
        };
        let inputs = SamplerInputs {
            signals: &signals,
            grid: &fc.grid,
            packets: &packets,
            betas: &cfg.betas,
            trees: &ck.trees,
            exponents: &exponents,
            size: SizeSpec::lebesgue(1.0, 1.0),
            outer: Some(&fc.outer),
            lp: cfg.norms.lp,
            factor: ck.factor,
        };
        reports.push(inequality_sampler(kind, &inputs, ck.trials)?);
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            let kind = serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            r.trials.iter().map(move |t| {
                vec![kind.clone(), t.label.clone(), num(t.beta), num(t.lhs), num(t.rhs), t.ratio.map_or(String::new(), num)]
            })
        })
        .collect();
    o.csv("check.csv", &["kind", "label", "beta", "lhs", "rhs", "ratio"], &rows)?;
    let pass = reports.iter().all(|r| r.uniform);
    o.report(Command::Check, cfg, pass, reports)
}
