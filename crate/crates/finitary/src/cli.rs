//! Batch front end: reproducible runs driven entirely by a `RunConfig`.
//!
//! Every output CSV starts with a `#` comment echoing the configuration
//! that produced it, so a run can be replayed from the artifact alone.
//! Exit codes: 0 success, 1 statistical failure, 2 usage or input error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dilution::{undilute, BlockFillPlan};
use crate::dist::{DistributionSpec, JumpDistribution};
use crate::gf::{self, KappaEstimate};
use crate::markov::{self, KernelSpec, MuPolicy, TransitionKernel};
use crate::renewal::{self, CoderParams};
use crate::stream::{tags, UniformStream};
use crate::verify;

/// Directory prepended to relative output paths when set.
const SEED_DIR_VAR: &str = "FINITARY_SEED_DIR";

#[derive(Parser)]
#[command(
    name = "finitary",
    version,
    about = "Finitary factor codings of renewal processes and Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct OutArg {
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze the diluted jump law: ν, c, and the T* pmf with residuals.
    AnalyzeGf {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        /// Table length for the T* pmf.
        #[arg(long, default_value_t = 500)]
        nmax: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Code a renewal process from indexed uniforms.
    CodeRenewal {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Half-open index range, e.g. -1000..1000.
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        range: (i64, i64),
        /// Scan budget override for the regeneration search.
        #[arg(long)]
        budget: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Code a finite ergodic Markov chain end to end.
    CodeMarkov {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        range: (i64, i64),
        /// Dilution parameter (auto-selected when omitted).
        #[arg(long)]
        mu: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Rebuild T-renewal points from T*-points by exact block filling.
    Undilute {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV of renewal positions, one per line.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Statistical checks of a coded sample against a jump law.
    Verify {
        #[arg(long)]
        dist: PathBuf,
        /// CSV written by code-renewal.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Full chain: analyze, code the T* skeleton, undilute, verify.
    Pipeline {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        range: (i64, i64),
        #[arg(long)]
        mu: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmax: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

impl RunConfig {
    fn new(command: &str) -> Self {
        RunConfig {
            command: command.into(),
            dist: None,
            kernel: None,
            input: None,
            seed: None,
            range: None,
            mu: None,
            nmax: None,
            budget: None,
        }
    }

    fn comment(&self) -> String {
        format!(
            "# {}",
            serde_json::to_string(self).expect("config serializes")
        )
    }
}

fn parse_range(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("range '{s}' must look like lo..hi"))?;
    let lo: i64 = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad range start: {e}"))?;
    let hi: i64 = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad range end: {e}"))?;
    if lo >= hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

/// Entry point used by the binary: parses `std::env::args`.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Parses the given arguments and executes; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap reserves 2 for usage errors; keep help/version at 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.cmd) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn execute(cmd: Command) -> Result<i32, String> {
    match cmd {
        Command::AnalyzeGf {
            dist,
            mu,
            nmax,
            out,
        } => analyze_gf(&dist, mu, nmax, out),
        Command::CodeRenewal {
            dist,
            seed,
            range,
            budget,
            out,
        } => code_renewal(&dist, seed, range, budget, out),
        Command::CodeMarkov {
            kernel,
            seed,
            range,
            mu,
            out,
        } => code_markov(&kernel, seed, range, mu, out),
        Command::Undilute {
            dist,
            mu,
            seed,
            input,
            out,
        } => run_undilute(&dist, mu, seed, &input, out),
        Command::Verify { dist, input, out } => run_verify(&dist, &input, out),
        Command::Pipeline {
            dist,
            seed,
            range,
            mu,
            out,
        } => pipeline(&dist, seed, range, mu, out),
    }
}

// ---------------------------------------------------------------------
// commands

fn analyze_gf(dist: &Path, mu: f64, nmax: usize, out: OutArg) -> Result<i32, String> {
    let d = load_dist(dist)?;
    let mut config = RunConfig::new("analyze-gf");
    config.dist = Some(dist.display().to_string());
    config.mu = Some(mu);
    config.nmax = Some(nmax);

    let mut report = gf::analyze(&d, mu).map_err(|e| e.to_string())?;
    let q = gf::pmf_tstar(&d, mu, nmax.max(1));
    let fit = gf::verify_asymptotic(&q, &report).map_err(|e| e.to_string())?;
    report.kappa_est = Some(fit.kappa);

    let mut body = String::new();
    let kappa = match fit.kappa {
        KappaEstimate::Exact => "exact".to_string(),
        KappaEstimate::Fitted { kappa, r2 } => format!("{kappa} (r2={r2})"),
    };
    let _ = writeln!(
        body,
        "# report mu={} nu={} c={} radius={} kappa={}",
        report.mu, report.nu, report.c, report.radius, kappa
    );
    let _ = writeln!(body, "n,q,geometric,residual");
    for n in 1..q.len() {
        let geom = report.c * (1.0 / report.nu).powi(n as i32 + 1);
        let _ = writeln!(body, "{},{},{},{}", n, q[n], geom, q[n] - geom);
    }
    emit(&config, &body, &out)?;
    Ok(0)
}

fn code_renewal(
    dist: &Path,
    seed: u64,
    range: (i64, i64),
    budget: Option<u64>,
    out: OutArg,
) -> Result<i32, String> {
    let d = load_dist(dist)?;
    let mut config = RunConfig::new("code-renewal");
    config.dist = Some(dist.display().to_string());
    config.seed = Some(seed);
    config.range = Some(format!("{}..{}", range.0, range.1));
    config.budget = budget;

    let y = UniformStream::new(seed, tags::CHAIN);
    let mut body = String::from("index,bit,window,regen_time\n");
    if d.is_bounded() {
        // Bounded jumps: coupling from the past on the finite age space.
        let (bits, windows) =
            renewal::cftp_code_range(&d, &y, range.0..range.1).map_err(|e| e.to_string())?;
        for (k, (&bit, &w)) in bits.iter().zip(&windows).enumerate() {
            let j = range.0 + k as i64;
            let _ = writeln!(body, "{},{},{},{}", j, bit as u8, w, j - w as i64);
        }
    } else {
        let mut params = CoderParams::new(&d).map_err(|e| e.to_string())?;
        if let Some(b) = budget {
            params = params.with_scan_budget(b);
        }
        let sample =
            renewal::code_range(&y, range.0..range.1, &params, &d).map_err(|e| e.to_string())?;
        for (k, j) in sample.range().enumerate() {
            let _ = writeln!(
                body,
                "{},{},{},{}",
                j, sample.bits[k] as u8, sample.windows[k], sample.regen[k]
            );
        }
    }
    emit(&config, &body, &out)?;
    Ok(0)
}

fn code_markov(
    kernel: &Path,
    seed: u64,
    range: (i64, i64),
    mu: Option<f64>,
    out: OutArg,
) -> Result<i32, String> {
    let k = load_kernel(kernel)?;
    let mut config = RunConfig::new("code-markov");
    config.kernel = Some(kernel.display().to_string());
    config.seed = Some(seed);
    config.range = Some(format!("{}..{}", range.0, range.1));
    config.mu = mu;

    let anchor = markov::pick_anchor(&k);
    let policy = mu.map_or(MuPolicy::Auto, MuPolicy::Fixed);
    let y = UniformStream::new(seed, tags::CHAIN);
    let sample =
        markov::code_range(&k, anchor, &y, range.0..range.1, policy).map_err(|e| e.to_string())?;

    let mut body = String::from("index,state,window\n");
    for (i, j) in sample.range().enumerate() {
        let _ = writeln!(
            body,
            "{},{},{}",
            j,
            k.label(sample.states[i]),
            sample.windows[i]
        );
    }
    emit(&config, &body, &out)?;
    Ok(0)
}

fn run_undilute(dist: &Path, mu: f64, seed: u64, input: &Path, out: OutArg) -> Result<i32, String> {
    let d = load_dist(dist)?;
    let points = read_positions(input)?;
    let mut config = RunConfig::new("undilute");
    config.dist = Some(dist.display().to_string());
    config.input = Some(input.display().to_string());
    config.mu = Some(mu);
    config.seed = Some(seed);

    let mut plan = BlockFillPlan::new(d, mu);
    let y = UniformStream::new(seed, tags::CHAIN);
    let filled = undilute(&points, &mut plan, &y).map_err(|e| e.to_string())?;
    let mut body = String::from("position\n");
    for p in filled {
        let _ = writeln!(body, "{p}");
    }
    emit(&config, &body, &out)?;
    Ok(0)
}

fn run_verify(dist: &Path, input: &Path, out: OutArg) -> Result<i32, String> {
    let d = load_dist(dist)?;
    let (bits, windows) = read_sample(input)?;
    let mut config = RunConfig::new("verify");
    config.dist = Some(dist.display().to_string());
    config.input = Some(input.display().to_string());

    let gaps = crate::dist::gaps_of(&bits);
    let mut body = String::from("check,value,threshold,pass\n");
    let mut all_pass = true;
    let mut record = |line: String, pass: bool, all: &mut bool| {
        *all &= pass;
        let _ = writeln!(body, "{line},{}", if pass { "1" } else { "0" });
    };

    let chi = verify::chi_square_gaps(&gaps, &d).map_err(|e| e.to_string())?;
    record(
        format!("gap_chi_square_p,{},{}", chi.p_value, 1e-3),
        chi.p_value > 1e-3,
        &mut all_pass,
    );

    let density = bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64;
    let expect = 1.0 / d.mean();
    let sigma = (expect * (1.0 - expect) / bits.len() as f64).sqrt();
    record(
        format!(
            "point_density_error,{},{}",
            (density - expect).abs(),
            4.0 * sigma
        ),
        (density - expect).abs() < 4.0 * sigma,
        &mut all_pass,
    );

    let lag = verify::independence_lag(&gaps).map_err(|e| e.to_string())?;
    let max_rho = lag.rho.iter().cloned().fold(0.0f64, |m, r| m.max(r.abs()));
    record(
        format!("gap_lag_correlation,{},{}", max_rho, lag.threshold),
        lag.passes(),
        &mut all_pass,
    );

    if let Ok(params) = CoderParams::new(&d) {
        let tail = verify::fit_window_tail(&windows, &params).map_err(|e| e.to_string())?;
        record(
            format!("window_tail_r2,{},{}", tail.r2, 0.98),
            tail.r2 > 0.98 && tail.slope < 0.0,
            &mut all_pass,
        );
    }

    emit(&config, &body, &out)?;
    print!("{body}");
    Ok(if all_pass { 0 } else { 1 })
}

fn pipeline(
    dist: &Path,
    seed: u64,
    range: (i64, i64),
    mu: Option<f64>,
    out: OutArg,
) -> Result<i32, String> {
    let d = load_dist(dist)?;
    let mut config = RunConfig::new("pipeline");
    config.dist = Some(dist.display().to_string());
    config.seed = Some(seed);
    config.range = Some(format!("{}..{}", range.0, range.1));
    config.mu = mu;

    let mu = match mu {
        Some(m) => m,
        None => gf::choose_mu(&d).map_err(|e| e.to_string())?.0,
    };
    let (d_star, report) = gf::tstar_jump_distribution(&d, mu).map_err(|e| e.to_string())?;
    let params = CoderParams::new(&d_star).map_err(|e| e.to_string())?;
    let y = UniformStream::new(seed, tags::CHAIN);
    let skeleton =
        renewal::code_range(&y, range.0..range.1, &params, &d_star).map_err(|e| e.to_string())?;
    let mut plan = BlockFillPlan::new(d.clone(), mu);
    let filled = undilute(&skeleton.points(), &mut plan, &y).map_err(|e| e.to_string())?;
    let gaps: Vec<u64> = filled.windows(2).map(|w| (w[1] - w[0]) as u64).collect();

    let chi = verify::chi_square_gaps(&gaps, &d).map_err(|e| e.to_string())?;
    let lag = verify::independence_lag(&gaps).map_err(|e| e.to_string())?;
    let tail = verify::fit_window_tail(&skeleton.windows, &params).map_err(|e| e.to_string())?;

    let mut body = String::from("check,value,threshold,pass\n");
    let mut all_pass = true;
    for (name, value, threshold, pass) in [
        ("gap_chi_square_p", chi.p_value, 1e-3, chi.p_value > 1e-3),
        (
            "gap_lag_correlation",
            lag.rho.iter().cloned().fold(0.0f64, |m, r| m.max(r.abs())),
            lag.threshold,
            lag.passes(),
        ),
        (
            "window_tail_r2",
            tail.r2,
            0.98,
            tail.r2 > 0.98 && tail.slope < 0.0,
        ),
    ] {
        all_pass &= pass;
        let _ = writeln!(
            body,
            "{name},{value},{threshold},{}",
            if pass { "1" } else { "0" }
        );
    }
    let _ = writeln!(
        body,
        "# mu={mu} nu={} c={} n0={} a={} b={} skeleton_points={} filled_points={}",
        report.nu,
        report.c,
        params.n0(),
        params.a(),
        params.b(),
        skeleton.points().len(),
        filled.len()
    );

    if let Some(base) = &out.out {
        let base = resolve_out(base);
        let skel_path = sibling(&base, "skeleton");
        let points_path = sibling(&base, "points");
        let mut skel = String::from("index,bit,window,regen_time\n");
        for (k, j) in skeleton.range().enumerate() {
            let _ = writeln!(
                skel,
                "{},{},{},{}",
                j, skeleton.bits[k] as u8, skeleton.windows[k], skeleton.regen[k]
            );
        }
        write_file(&skel_path, &format!("{}\n{}", config.comment(), skel))?;
        let mut pts = String::from("position\n");
        for p in &filled {
            let _ = writeln!(pts, "{p}");
        }
        write_file(&points_path, &format!("{}\n{}", config.comment(), pts))?;
        write_file(&base, &format!("{}\n{}", config.comment(), body))?;
    }
    print!("{body}");
    Ok(if all_pass { 0 } else { 1 })
}

// ---------------------------------------------------------------------
// io helpers

fn load_dist(path: &Path) -> Result<JumpDistribution, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read distribution file {}: {e}", path.display()))?;
    let spec: DistributionSpec =
        serde_json::from_str(&text).map_err(|e| format!("bad distribution file: {e}"))?;
    JumpDistribution::from_spec(&spec).map_err(|e| e.to_string())
}

fn load_kernel(path: &Path) -> Result<TransitionKernel, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read kernel file {}: {e}", path.display()))?;
    let spec: KernelSpec =
        serde_json::from_str(&text).map_err(|e| format!("bad kernel file: {e}"))?;
    TransitionKernel::from_spec(&spec).map_err(|e| e.to_string())
}

fn read_positions(path: &Path) -> Result<Vec<i64>, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read positions file {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap().trim();
        if field.parse::<i64>().is_err() && out.is_empty() {
            continue; // header
        }
        out.push(
            field
                .parse::<i64>()
                .map_err(|e| format!("bad position '{field}': {e}"))?,
        );
    }
    Ok(out)
}

/// Reads a code-renewal CSV: (bits in index order, windows).
fn read_sample(path: &Path) -> Result<(Vec<bool>, Vec<u64>), String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read sample file {}: {e}", path.display()))?;
    let mut bits = Vec::new();
    let mut windows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields[0].parse::<i64>().is_err() && bits.is_empty() {
            continue; // header
        }
        if fields.len() < 3 {
            return Err(format!("expected index,bit,window columns, got '{line}'"));
        }
        bits.push(fields[1].trim() == "1");
        windows.push(
            fields[2]
                .trim()
                .parse::<u64>()
                .map_err(|e| format!("bad window '{}': {e}", fields[2]))?,
        );
    }
    Ok((bits, windows))
}

fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var(SEED_DIR_VAR) {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}

fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}.{suffix}.{ext}"))
}

fn write_file(path: &Path, content: &str) -> Result<(), String> {
    fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn emit(config: &RunConfig, body: &str, out: &OutArg) -> Result<(), String> {
    let full = format!("{}\n{}", config.comment(), body);
    match &out.out {
        Some(path) => write_file(&resolve_out(path), &full),
        None => {
            print!("{full}");
            Ok(())
        }
    }
}
