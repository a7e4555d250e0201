//! JSON run configurations, command dispatch and CSV emission.
//!
//! A run configuration is one flat JSON document. Physical fields sit at the
//! top level; each command reads its own block:
//!
//! ```json
//! {
//!   "g0": 0.3, "gamma_c": 0.1, "epsilon": 0.01,
//!   "delta1": "-nu", "delta2": "-nu",
//!   "mirror": {"fock": 0},
//!   "truncation": {"n_ph": 6},
//!   "times": {"t_start": 0, "t_end": 100, "n": 201}
//! }
//! ```
//!
//! `g0` may be the token `"scan"` for the `g2scan` command, in which case the
//! `scan` block supplies the range and the detunings must be `"-nu"`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::franck_condon::{fc_table, overlap_combo, FcOrder, OverlapKind};
use crate::oracle::{self, Discretization, OdeOptions, SweepAxis};
use crate::params::{MirrorInit, PhotonPacket, SystemParams, Truncation};
use crate::spectrum::{self, GridSpec};
use crate::transient::{self, TransientTrace};

/// Formats a number with 17 significant digits; non-finite values print as `nan`.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".to_string(), fmt_num)
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Coupling: a value, or `"scan"` to sweep it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Value(f64),
    Token(ScanToken),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanToken {
    #[serde(rename = "scan")]
    Scan,
}

/// A packet detuning, or `"-nu"` for the single-photon resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Detuning {
    Value(f64),
    Token(NuToken),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NuToken {
    #[serde(rename = "-nu")]
    MinusNu,
}

/// Truncation block; `n_ph` may be omitted and is then chosen from the
/// Franck-Condon tail at `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ph: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_window: Option<f64>,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
}

fn default_tol() -> f64 {
    Truncation::DEFAULT_TOL
}

fn default_quad_tol() -> f64 {
    Truncation::DEFAULT_QUAD_TOL
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec {
            n_ph: None,
            tol: default_tol(),
            k_window: None,
            quad_tol: default_quad_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_q: Option<usize>,
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec {
            p_range: (self.p_min, self.p_max),
            q_range: (self.q_min.unwrap_or(self.p_min), self.q_max.unwrap_or(self.p_max)),
            n_p: self.n_p,
            n_q: self.n_q.unwrap_or(self.n_p),
        }
    }
}

/// Sample times: an explicit list, or `n` equally spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSpec {
    Values { values: Vec<f64> },
    Range { t_start: f64, t_end: f64, n: usize },
}

impl TimeSpec {
    pub fn samples(&self) -> Result<Vec<f64>> {
        let v = match self {
            TimeSpec::Values { values } => values.clone(),
            TimeSpec::Range { t_start, t_end, n } => {
                if *n == 0 || (*n > 1 && t_end <= t_start) {
                    return Err(Error::invalid("cli", "times", "need n >= 1 and t_end > t_start"));
                }
                if *n == 1 {
                    vec![*t_start]
                } else {
                    let h = (t_end - t_start) / (*n - 1) as f64;
                    (0..*n)
                        .map(|i| if i + 1 == *n { *t_end } else { t_start + h * i as f64 })
                        .collect()
                }
            }
        };
        if v.is_empty() {
            return Err(Error::invalid("cli", "times", "no sample times"));
        }
        if v.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("cli", "times", "times must be finite and >= 0"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub g0_start: f64,
    pub g0_end: f64,
    pub g0_step: f64,
}

impl ScanSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.g0_step > 0.0 && self.g0_end >= self.g0_start && self.g0_start >= 0.0) {
            return Err(Error::invalid(
                "cli",
                "scan",
                "need g0_step > 0 and 0 <= g0_start <= g0_end",
            ));
        }
        let n = ((self.g0_end - self.g0_start) / self.g0_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.g0_start + self.g0_step * i as f64).collect())
    }
}

/// Oracle block for `validate`. Omitted fields take the desk profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default = "OracleSpec::default_n_k")]
    pub n_k: usize,
    #[serde(default = "OracleSpec::default_w")]
    pub w: f64,
    #[serde(default = "OracleSpec::default_n_ph")]
    pub n_ph: usize,
    #[serde(default = "OracleSpec::default_tol")]
    pub tol: f64,
    #[serde(default = "OracleSpec::default_t_end")]
    pub t_end: f64,
    #[serde(default = "OracleSpec::default_dt_out")]
    pub dt_out: f64,
    #[serde(default = "OracleSpec::default_factors")]
    pub sweep_factors: Vec<f64>,
    /// Pass threshold on max |ΔP| against the analytic result.
    #[serde(default = "OracleSpec::default_threshold")]
    pub threshold: f64,
}

impl OracleSpec {
    fn default_n_k() -> usize {
        Discretization::desk().n_k
    }
    fn default_w() -> f64 {
        Discretization::desk().w
    }
    fn default_n_ph() -> usize {
        Discretization::desk().n_ph
    }
    fn default_tol() -> f64 {
        1e-7
    }
    fn default_t_end() -> f64 {
        100.0
    }
    fn default_dt_out() -> f64 {
        5.0
    }
    fn default_factors() -> Vec<f64> {
        vec![1.0, 1.25]
    }
    fn default_threshold() -> f64 {
        1e-2
    }

    fn validate(&self) -> Result<()> {
        Discretization::new(self.n_k, self.w, self.n_ph)?;
        for (name, v) in [
            ("oracle.tol", self.tol),
            ("oracle.t_end", self.t_end),
            ("oracle.dt_out", self.dt_out),
            ("oracle.threshold", self.threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid("cli", name, "must be finite and > 0"));
            }
        }
        if self.sweep_factors.len() < 2 {
            return Err(Error::invalid("cli", "oracle.sweep_factors", "need at least two factors"));
        }
        Ok(())
    }
}

impl Default for OracleSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all oracle fields have defaults")
    }
}

/// Block for the `fc` command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FcSpec {
    /// Displacement; defaults to beta0 = g0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Table size; defaults to n_ph + 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// One of `m2_n1`, `m1_n2`, `m1_n`, `m_n1`; absent means the plain D(beta).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// A validated run configuration.
///
/// After [`parse_config`] the `"-nu"` tokens are replaced by numbers (unless
/// `g0` is scanned) and `truncation.n_ph` is filled in, so serializing and
/// parsing again gives the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<Coupling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<Detuning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta2: Option<Detuning>,
    #[serde(default = "RunConfig::default_mirror")]
    pub mirror: MirrorInit,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default)]
    pub fc_order: FcOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<TimeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_probe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc: Option<FcSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    fn default_mirror() -> MirrorInit {
        MirrorInit::Fock(0)
    }

    /// The coupling, unless it is scanned.
    pub fn g0_value(&self) -> Option<f64> {
        match self.g0 {
            Some(Coupling::Value(g)) => Some(g),
            _ => None,
        }
    }

    pub fn is_scan(&self) -> bool {
        matches!(self.g0, Some(Coupling::Token(_)))
    }

    pub fn system(&self) -> Result<SystemParams> {
        let g0 = self
            .g0_value()
            .ok_or_else(|| config_err("this command needs a numeric `g0`"))?;
        let gamma_c = self.gamma_c.ok_or_else(|| config_err("missing field `gamma_c`"))?;
        SystemParams::new(g0, gamma_c)
    }

    pub fn packet(&self) -> Result<PhotonPacket> {
        let params = self.system()?;
        let eps = self.epsilon.ok_or_else(|| config_err("missing field `epsilon`"))?;
        let resolve = |name: &str, d: Option<Detuning>| match d {
            Some(Detuning::Value(v)) => Ok(v),
            Some(Detuning::Token(_)) => Ok(-params.nu()),
            None => Err(config_err(format!("missing field `{name}`"))),
        };
        PhotonPacket::new(resolve("delta1", self.delta1)?, resolve("delta2", self.delta2)?, eps)
    }

    /// The truncation with `n_ph` resolved.
    pub fn truncation(&self) -> Result<Truncation> {
        let n_ph = self
            .truncation
            .n_ph
            .ok_or_else(|| config_err("`truncation.n_ph` is unresolved; set `g0` or give it explicitly"))?;
        let t = Truncation {
            n_ph,
            tol: self.truncation.tol,
            k_window: self.truncation.k_window,
            quad_tol: self.truncation.quad_tol,
        };
        t.validate()?;
        Ok(t)
    }

    fn grid_spec(&self) -> GridSpec {
        self.grid.map(|g| g.spec()).unwrap_or_default()
    }

    /// Compact JSON of the resolved configuration, for CSV headers.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn header(&self) -> String {
        format!("# config={}\n", self.echo())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| config_err(format!("config: {e}")))?;
    resolve(&mut cfg)?;
    Ok(cfg)
}

fn resolve(cfg: &mut RunConfig) -> Result<()> {
    cfg.mirror.validate()?;
    if let Some(eps) = cfg.epsilon {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::invalid(
                "params",
                "epsilon",
                format!("spectral half-width must be > 0, got {eps}"),
            ));
        }
    }
    if let Some(g) = cfg.gamma_c {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::invalid("params", "gamma_c", format!("must be finite and > 0, got {g}")));
        }
    }
    if let Some(t) = cfg.t_probe {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::invalid("cli", "t_probe", "must be finite and > 0"));
        }
    }
    if let Some(grid) = &cfg.grid {
        grid.spec().validate()?;
    }
    if let Some(times) = &cfg.times {
        times.samples()?;
    }
    if let Some(o) = &cfg.oracle {
        o.validate()?;
    }
    if let Some(fc) = &cfg.fc {
        if let Some(kind) = &fc.kind {
            kind.parse::<OverlapKind>()?;
        }
        if fc.dim == Some(0) {
            return Err(Error::invalid("cli", "fc.dim", "must be at least 1"));
        }
    }
    // Checks the ranges of n_ph-independent fields before n_ph is known.
    Truncation::new(1)
        .with_tol(cfg.truncation.tol)
        .with_quad_tol(cfg.truncation.quad_tol)
        .validate()?;
    if let Some(w) = cfg.truncation.k_window {
        Truncation::new(1).with_window(w).validate()?;
    }

    let n0_max = cfg.mirror.required_cutoff(cfg.truncation.tol);
    let g_for_tail = match cfg.g0 {
        Some(Coupling::Value(g)) => {
            let params = SystemParams::new(g, cfg.gamma_c.unwrap_or(1.0))?;
            for d in [&mut cfg.delta1, &mut cfg.delta2] {
                if let Some(Detuning::Token(_)) = d {
                    *d = Some(Detuning::Value(-params.nu()));
                }
            }
            if cfg.epsilon.is_some() && cfg.delta1.is_some() && cfg.delta2.is_some() && cfg.gamma_c.is_some() {
                cfg.packet()?;
            }
            Some(g)
        }
        Some(Coupling::Token(_)) => {
            for (name, d) in [("delta1", cfg.delta1), ("delta2", cfg.delta2)] {
                if let Some(Detuning::Value(_)) = d {
                    return Err(Error::invalid("cli", name, "a scanned g0 requires the detuning \"-nu\""));
                }
            }
            match &cfg.scan {
                Some(s) => {
                    let v = s.values()?;
                    Some(v.last().copied().unwrap_or(s.g0_start))
                }
                None => None,
            }
        }
        None => None,
    };
    match (cfg.truncation.n_ph, g_for_tail) {
        (Some(n_ph), _) => Truncation::new(n_ph).check_labels(n0_max)?,
        (None, Some(g)) => {
            let params = SystemParams::new(g, cfg.gamma_c.unwrap_or(1.0))?;
            let t = Truncation::from_fc_tail(&params, n0_max, cfg.truncation.tol);
            cfg.truncation.n_ph = Some(t.n_ph);
        }
        (None, None) => {}
    }
    Ok(())
}

/// The five commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Fc,
    JointSpectrum,
    Transient,
    G2scan,
    Validate,
}

#[derive(Debug, Parser)]
#[command(name = "optoscatter", version, about = "Two-photon scattering off an optomechanical cavity")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// `fc` only: displacement.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// `fc` only: table size.
    #[arg(long)]
    pub dim: Option<usize>,
    /// `fc` only: overlap combination (m2_n1, m1_n2, m1_n, m_n1).
    #[arg(long)]
    pub kind: Option<String>,
}

/// What a command produced besides files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    /// Text for stdout.
    pub stdout: String,
    /// False when `validate` reports FAIL.
    pub passed: bool,
}

/// Exit status for an error: 3 for numerical failures, 2 for anything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Runs one command. Artifacts go to `out` (or the config's `output`), or
/// into the returned stdout text when neither is set.
pub fn run_command(cmd: Command, cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let out = out.or(cfg.output.as_deref());
    match cmd {
        Command::Fc => run_fc(cfg, out),
        Command::JointSpectrum => run_spectrum(cfg, out),
        Command::Transient => run_transient(cfg, out),
        Command::G2scan => run_scan(cfg, out),
        Command::Validate => run_validate(cfg, out),
    }
}

fn emit(out: Option<&Path>, body: &str) -> Result<String> {
    match out {
        Some(p) => {
            let mut f = fs::File::create(p)?;
            f.write_all(body.as_bytes())?;
            Ok(String::new())
        }
        None => Ok(body.to_string()),
    }
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_fc(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let spec = cfg.fc.clone().unwrap_or_default();
    let beta = match spec.beta {
        Some(b) => b,
        None => cfg.system()?.beta0(),
    };
    let dim = match spec.dim {
        Some(d) => d,
        None => cfg.truncation()?.dim(),
    };
    let mut body = cfg.header();
    match &spec.kind {
        None => body.push_str(&fc_table(beta, dim, cfg.fc_order)?.to_csv()),
        Some(k) => {
            let kind: OverlapKind = k.parse()?;
            if !beta.is_finite() {
                return Err(Error::invalid("franck_condon", "beta", "must be finite"));
            }
            for m in 0..dim {
                let row: Vec<String> = (0..dim).map(|n| fmt_num(overlap_combo(kind, m, n, beta))).collect();
                body.push_str(&row.join(","));
                body.push('\n');
            }
        }
    }
    Ok(Outcome {
        stdout: emit(out, &body)?,
        passed: true,
    })
}

fn run_spectrum(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let params = cfg.system()?;
    let packet = cfg.packet()?;
    let trunc = cfg.truncation()?;
    let grid = spectrum::joint_spectrum(&params, &packet, &trunc, cfg.fc_order, &cfg.mirror, &cfg.grid_spec())?;
    let stats = spectrum::spectrum_stats(&grid)?;
    let mut body = cfg.header().into_bytes();
    grid.write_csv(&mut body)?;
    let body = String::from_utf8(body).expect("csv is utf-8");
    let kv = stats.to_key_value();
    let mut stdout = emit(out, &body)?;
    if let Some(p) = out {
        fs::write(sibling(p, ".stats"), &kv)?;
    }
    stdout.push_str(&kv);
    Ok(Outcome { stdout, passed: true })
}

/// CSV body `t,p1,p2,g2` for a trace.
pub fn trace_csv(trace: &TransientTrace) -> String {
    let mut s = String::from("t,p1,p2,g2\n");
    for i in 0..trace.times.len() {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_num(trace.times[i]),
            fmt_num(trace.p1[i]),
            fmt_num(trace.p2[i]),
            fmt_opt(trace.g2[i])
        );
    }
    s
}

fn run_transient(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let params = cfg.system()?;
    let packet = cfg.packet()?;
    let trunc = cfg.truncation()?;
    let times = cfg
        .times
        .as_ref()
        .ok_or_else(|| config_err("transient needs a `times` block"))?
        .samples()?;
    let trace = transient::probabilities_with_order(&cfg.mirror, &params, &packet, &trunc, &times, cfg.fc_order)?;
    let body = cfg.header() + &trace_csv(&trace);
    Ok(Outcome {
        stdout: emit(out, &body)?,
        passed: true,
    })
}

fn run_scan(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    if !cfg.is_scan() {
        return Err(config_err("g2scan needs `\"g0\": \"scan\"`"));
    }
    let scan = cfg.scan.ok_or_else(|| config_err("g2scan needs a `scan` block"))?;
    let t_probe = cfg.t_probe.ok_or_else(|| config_err("g2scan needs `t_probe`"))?;
    let gamma_c = cfg.gamma_c.ok_or_else(|| config_err("missing field `gamma_c`"))?;
    let eps = cfg.epsilon.ok_or_else(|| config_err("missing field `epsilon`"))?;
    let trunc = cfg.truncation()?;
    let points = transient::g2_scan(&scan.values()?, t_probe, &cfg.mirror, gamma_c, eps, &trunc)?;
    let mut body = cfg.header() + "g0,g2\n";
    for p in &points {
        let _ = writeln!(body, "{},{}", fmt_num(p.g0), fmt_opt(p.g2));
    }
    Ok(Outcome {
        stdout: emit(out, &body)?,
        passed: true,
    })
}

fn run_validate(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let params = cfg.system()?;
    let packet = cfg.packet()?;
    let n0 = match cfg.mirror {
        MirrorInit::Fock(n) => n,
        _ => return Err(config_err("validate needs a Fock mirror state")),
    };
    let spec = cfg.oracle.clone().unwrap_or_default();
    let base = Discretization::new(spec.n_k, spec.w, spec.n_ph)?;
    let opts = OdeOptions {
        tol: spec.tol,
        ..OdeOptions::default()
    };
    let sweep = oracle::convergence_sweep(
        &params,
        &packet,
        n0,
        &base,
        SweepAxis::Spacing,
        &spec.sweep_factors,
        spec.t_end,
        spec.dt_out,
        &opts,
    )?;
    let finest = sweep.finest();
    let times: Vec<f64> = finest.trajectory.iter().map(|s| s.t).collect();
    let trunc = Truncation::new(spec.n_ph).with_tol(cfg.truncation.tol).with_quad_tol(cfg.truncation.quad_tol);
    let analytic = transient::probabilities(&cfg.mirror, &params, &packet, &trunc, &times)?;
    let mut dp1 = 0.0_f64;
    let mut dp2 = 0.0_f64;
    let mut drift = 0.0_f64;
    for (i, s) in finest.trajectory.iter().enumerate() {
        dp1 = dp1.max((s.p1 - analytic.p1[i]).abs());
        dp2 = dp2.max((s.p2 - analytic.p2[i]).abs());
        drift = drift.max((s.norm - 1.0).abs());
    }
    let max_dp = dp1.max(dp2);
    let converged = sweep.final_difference() < 0.5 * spec.threshold;
    let passed = max_dp < spec.threshold && converged;

    let mut report = String::new();
    let _ = writeln!(report, "max_abs_dp1={}", fmt_num(dp1));
    let _ = writeln!(report, "max_abs_dp2={}", fmt_num(dp2));
    let _ = writeln!(report, "max_abs_dp={}", fmt_num(max_dp));
    let _ = writeln!(report, "threshold={}", fmt_num(spec.threshold));
    let _ = writeln!(report, "norm_drift={}", fmt_num(drift));
    report.push_str(&sweep.to_key_value());
    let _ = writeln!(report, "converged={converged}");
    let _ = writeln!(report, "verdict={}", if passed { "PASS" } else { "FAIL" });

    let mut stdout = emit(out, &report)?;
    if let Some(p) = out {
        let mut csv = cfg.header() + "t,p1,p2\n";
        for s in &finest.trajectory {
            let _ = writeln!(csv, "{},{},{}", fmt_num(s.t), fmt_num(s.p1), fmt_num(s.p2));
        }
        fs::write(sibling(p, ".trajectory.csv"), csv)?;
        stdout.push_str(&report);
    }
    Ok(Outcome { stdout, passed })
}

fn load(args: &Args) -> Result<RunConfig> {
    match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            let mut cfg = parse_config(&text)?;
            if args.command == Command::Fc && (args.beta.is_some() || args.dim.is_some() || args.kind.is_some()) {
                let base = cfg.fc.clone().unwrap_or_default();
                cfg.fc = Some(FcSpec {
                    beta: args.beta.or(base.beta),
                    dim: args.dim.or(base.dim),
                    kind: args.kind.clone().or(base.kind),
                });
                resolve(&mut cfg)?;
            }
            Ok(cfg)
        }
        None if args.command == Command::Fc => {
            let (beta, dim) = match (args.beta, args.dim) {
                (Some(b), Some(d)) => (b, d),
                _ => return Err(config_err("fc without --config needs --beta and --dim")),
            };
            let mut cfg = RunConfig {
                fc: Some(FcSpec {
                    beta: Some(beta),
                    dim: Some(dim),
                    kind: args.kind.clone(),
                }),
                ..parse_config("{}")?
            };
            resolve(&mut cfg)?;
            Ok(cfg)
        }
        None => Err(config_err("--config is required")),
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_entry<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let run = || -> Result<Outcome> {
        let cfg = load(&args)?;
        run_command(args.command, &cfg, args.out.as_deref())
    };
    let result = match args.workers {
        Some(0) => Err(Error::invalid("cli", "workers", "must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(config_err(format!("thread pool: {e}"))),
        },
        None => run(),
    };
    match result {
        Ok(o) => {
            print!("{}", o.stdout);
            if o.passed {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("optoscatter: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG4: &str = r#"{"g0": "scan", "gamma_c": 0.1, "epsilon": 0.01,
        "delta1": "-nu", "delta2": "-nu", "mirror": {"fock": 0}, "t_probe": 50,
        "scan": {"g0_start": 0.05, "g0_end": 1.4, "g0_step": 0.01}}"#;

    #[test]
    fn scan_preset_parses() {
        let cfg = parse_config(FIG4).unwrap();
        assert!(cfg.is_scan());
        assert_eq!(cfg.delta1, Some(Detuning::Token(NuToken::MinusNu)));
        assert!(cfg.truncation.n_ph.is_some());
        assert_eq!(cfg.scan.unwrap().values().unwrap().len(), 136);
    }

    #[test]
    fn minus_nu_resolves_to_minus_g0_squared() {
        let cfg = parse_config(r#"{"g0": 0.3, "gamma_c": 0.1, "epsilon": 0.01, "delta1": "-nu", "delta2": 0.5}"#)
            .unwrap();
        assert_eq!(cfg.delta1, Some(Detuning::Value(-0.09)));
        assert_eq!(cfg.packet().unwrap().delta2(), 0.5);
    }

    #[test]
    fn negative_epsilon_names_the_field() {
        let err = parse_config(r#"{"g0": 0.3, "gamma_c": 0.1, "epsilon": -0.01, "delta1": 0, "delta2": 0}"#)
            .unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(r#"{"g0": 0.3, "gamma": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = parse_config(r#"{"g0": 0.3, "truncation": {"nph": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("nph"), "{err}");
    }

    #[test]
    fn resolved_config_round_trips() {
        for text in [
            FIG4,
            r#"{"g0": 0.6, "gamma_c": 0.1, "epsilon": 0.01, "delta1": "-nu", "delta2": "-nu",
                "mirror": {"pure": [[0.6, 0], [0, 0.8]]}, "truncation": {"tol": 1e-6},
                "grid": {"p_min": -1, "p_max": 1, "n_p": 5}, "times": {"values": [1, 2.5]},
                "fc_order": "first", "oracle": {"n_k": 101}}"#,
        ] {
            let cfg = parse_config(text).unwrap();
            let again = parse_config(&cfg.echo()).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(cfg.echo(), again.echo());
        }
    }

    #[test]
    fn thermal_mirror_fills_n_ph_past_the_weight_tail() {
        let cfg = parse_config(
            r#"{"g0": 0.3, "gamma_c": 0.1, "epsilon": 0.01, "delta1": 0, "delta2": 0,
                "mirror": {"thermal": 1.0}, "truncation": {"tol": 1e-3}}"#,
        )
        .unwrap();
        let cut = MirrorInit::Thermal(1.0).required_cutoff(1e-3);
        assert!(cfg.truncation.n_ph.unwrap() > cut);
        assert!((MirrorInit::thermal_weight(1.0, 3) - 2f64.powi(-4)).abs() < 1e-16);
    }

    #[test]
    fn explicit_n_ph_below_the_mirror_label_is_rejected() {
        let err = parse_config(r#"{"g0": 0.3, "mirror": {"fock": 4}, "truncation": {"n_ph": 4}}"#).unwrap_err();
        assert!(err.to_string().contains("n_ph"), "{err}");
    }

    #[test]
    fn scanned_g0_with_numeric_detuning_is_rejected() {
        let err = parse_config(r#"{"g0": "scan", "delta1": 0.1, "delta2": "-nu"}"#).unwrap_err();
        assert!(err.to_string().contains("delta1"), "{err}");
    }

    #[test]
    fn fc_without_config_writes_the_table() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("fc.csv");
        let code = main_entry([
            "optoscatter",
            "fc",
            "--beta",
            "0.5",
            "--dim",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = fs::read_to_string(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config="));
        assert_eq!(lines.len(), 4);
        let d00: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        assert!((d00 - (-0.125f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn numbers_use_seventeen_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_opt(None), "nan");
        let x = 0.123_456_789_012_345_68_f64;
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }
}
