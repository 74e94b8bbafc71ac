//! Command-line front end: input specs, configuration, canonical reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use szekeres::diffeo::fmt17;
use szekeres::flow::{centralizer_time, flow_map, FieldFlow};
use szekeres::homotopy::{build_path, path_to_frames, verify_path, write_frames_csv, ProbeLattice};
use szekeres::interval::Interval as Iv;
use szekeres::structure::{decompose, ComponentKind};
use szekeres::szekeres::{audit_bounds, scaling_check, szekeres_at, Base};
use szekeres::{Diffeo, Error, Interval, Openness, Tolerances};

pub const SCHEMA_VERSION: u64 = 1;

pub mod exit {
    pub const OK: i32 = 0;
    /// Anything not covered below, including failed verification checks.
    pub const FAILURE: i32 = 1;
    pub const CLASSIFICATION: i32 = 2;
    pub const INPUT: i32 = 3;
    pub const FLOW_RANGE: i32 = 4;
    pub const NOT_COMMUTING: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "szekeres", about = "Szekeres fields, centralizers and homotopies of commuting interval diffeomorphisms")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a commuting pair into fixed points and classified components.
    Analyze(PairArgs),
    /// Szekeres vector field of a single map without interior fixed points.
    Szekeres(SingleArgs),
    /// Build and verify the homotopy of the pair to the identity.
    Path(PathArgs),
    /// Bound audit, uniqueness scaling and flow checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Nodes per grid, `2^k + 1`.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// `key=value` tolerance file; `--tol.KEY=VAL` flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Domain of `expr:` inputs as `lo,hi`.
    #[arg(long, default_value = "0,1", value_parser = parse_pair)]
    pub domain: (f64, f64),
    /// Treat `expr:` inputs as half-open at this end.
    #[arg(long, value_parser = ["lo", "hi"])]
    pub half_open: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct PairArgs {
    /// First map: `expr:<formula in x>` or `csv:<path>` with columns `x,f,df`
    #[arg(long)]
    pub f: String,
    /// Second map, commuting with the first
    #[arg(long)]
    pub g: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct SingleArgs {
    /// The map: `expr:<formula in x>` or `csv:<path>` with columns `x,f,df`
    #[arg(long)]
    pub f: String,
    /// Anchor of the pullback.
    #[arg(long, default_value = "lo", value_parser = ["lo", "hi"])]
    pub base: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct PathArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Frame times.
    #[arg(long, default_value = "0,0.25,0.5,0.75,1", value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Points per frame.
    #[arg(long, default_value_t = 257)]
    pub frame_points: usize,
    /// Probe times in [0, 1] for the path checks
    #[arg(long, default_value_t = 21)]
    pub lattice_t: usize,
    /// Probe points per time
    #[arg(long, default_value_t = 2048)]
    pub lattice_x: usize,
    /// Dyadic scales 2^-k probed next to flat fixed points
    #[arg(long, default_value_t = 4)]
    pub k_min: u32,
    #[arg(long, default_value_t = 16)]
    pub k_max: u32,
}

#[derive(Debug, Args, Clone)]
pub struct VerifyArgs {
    /// The map: `expr:<formula in x>` or `csv:<path>` with columns `x,f,df`
    #[arg(long)]
    pub f: String,
    /// Optional commuting partner; enables the commutation precheck and
    /// the centralizer time.
    #[arg(long)]
    pub g: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

/// CLI-level failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. }
            | Error::Csv(_)
            | Error::EndpointNotFixed { .. }
            | Error::NotMonotone { .. }
            | Error::InvalidInterval { .. }
            | Error::DomainMismatch { .. }
            | Error::Config(_) => exit::INPUT,
            Error::Classification { .. }
            | Error::NonConstantTime { .. }
            | Error::InteriorFixedPoint { .. }
            | Error::InteriorZero { .. }
            | Error::IdentityMap { .. } => exit::CLASSIFICATION,
            Error::FlowRange { .. } => exit::FLOW_RANGE,
            Error::NotCommuting { .. } => exit::NOT_COMMUTING,
            _ => exit::FAILURE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: exit::FAILURE, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

type Overrides = Vec<(String, String)>;

/// Splits `--tol.KEY=VAL` flags off `argv`; clap sees the rest.
pub fn split_tolerance_flags(argv: Vec<String>) -> CliResult<(Vec<String>, Overrides)> {
    let mut rest = Vec::new();
    let mut tols = Vec::new();
    for a in argv {
        if let Some(kv) = a.strip_prefix("--tol.") {
            let (k, v) = kv.split_once('=').ok_or_else(|| Failure { code: exit::INPUT, message: format!("expected --tol.KEY=VAL, got `{a}`") })?;
            tols.push((k.to_string(), v.to_string()));
        } else {
            rest.push(a);
        }
    }
    Ok((rest, tols))
}

/// Defaults, then the config file, then `--grid` and `--tol.*` flags.
pub fn load_tolerances(common: &Common, overrides: &[(String, String)]) -> CliResult<Tolerances> {
    let mut tol = Tolerances::default();
    if let Some(p) = &common.config {
        let text = fs::read_to_string(p).map_err(|e| Failure { code: exit::INPUT, message: format!("{}: {e}", p.display()) })?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure { code: exit::INPUT, message: format!("{}:{}: expected key=value", p.display(), i + 1) })?;
            tol.set(k, v)?;
        }
    }
    if let Some(n) = common.grid {
        tol.grid = n;
    }
    for (k, v) in overrides {
        tol.set(k, v)?;
    }
    tol.validate()?;
    Ok(tol)
}

/// `expr:<DSL>` or `csv:<path>`.
pub fn load_map(spec: &str, common: &Common) -> CliResult<Diffeo> {
    let open = match common.half_open.as_deref() {
        Some("lo") => Openness::OpenLo,
        Some("hi") => Openness::OpenHi,
        _ => Openness::Closed,
    };
    if let Some(text) = spec.strip_prefix("expr:") {
        let dom = Interval::new(common.domain.0, common.domain.1)?;
        Ok(Diffeo::parse(text, dom, open)?)
    } else if let Some(path) = spec.strip_prefix("csv:") {
        let file = fs::File::open(path).map_err(|e| Failure { code: exit::INPUT, message: format!("{path}: {e}") })?;
        let d = Diffeo::read_csv(std::io::BufReader::new(file), open)?;
        d.check_monotone(4097)?;
        Ok(d)
    } else {
        Err(Failure { code: exit::INPUT, message: format!("input spec must start with `expr:` or `csv:`, got `{spec}`") })
    }
}

/// Canonical JSON: sorted keys, two-space indent, floats with 17
/// significant digits, non-finite numbers as `null`, trailing newline.
pub fn canonical_json<S: Serialize>(value: &S) -> String {
    let v = serde_json::to_value(value).expect("report types serialize");
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| {
        for _ in 0..d {
            out.push_str("  ");
        }
    };
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if x.is_finite() {
                    out.push_str(&fmt17(x));
                } else {
                    out.push_str("null");
                }
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            if a.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in a.iter().enumerate() {
                pad(depth + 1, out);
                write_value(item, depth + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(m) => {
            if m.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(depth + 1, out);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(&m[*k], depth + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
    }
}

/// Writes next to the target and renames, so a failed run leaves no
/// partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    schema_version: u64,
    command: &'a str,
    tolerances: &'a Tolerances,
    inputs: Vec<&'a str>,
    #[serde(flatten)]
    report: R,
}

/// Output files and timing lines collected during a run; nothing touches
/// the output directory until every computation has succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    log: String,
    clock: Instant,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new(), log: String::new(), clock: Instant::now() }
    }

    fn stage(&mut self, what: &str) {
        let _ = writeln!(self.log, "{what}: {:.3} s", self.clock.elapsed().as_secs_f64());
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn commit(self) -> CliResult<()> {
        for (name, bytes) in &self.files {
            write_atomic(&self.dir.join(name), bytes)?;
        }
        write_atomic(&self.dir.join("run.log"), self.log.as_bytes())?;
        Ok(())
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> szekeres::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn analyze(args: &PairArgs, tol: &Tolerances, out: &mut Outputs) -> CliResult<String> {
    let f = load_map(&args.f, &args.common)?;
    let g = load_map(&args.g, &args.common)?;
    out.stage("inputs");
    let dec = decompose(&f, &g, tol)?;
    out.stage("decompose");
    let report = dec.report();
    let mut summary = format!("common fixed points: {}\n", report.fixed_points.len());
    for (i, c) in dec.payloads.iter().enumerate() {
        match &c.kind {
            ComponentKind::Rational { p, q, .. } => {
                let _ = writeln!(summary, "component [{}, {}]: rational p = {p}, q = {q}", c.interval.lo, c.interval.hi);
            }
            ComponentKind::Irrational { nu, tau } => {
                let _ = writeln!(summary, "component [{}, {}]: irrational tau = {}", c.interval.lo, c.interval.hi, fmt17(*tau));
                out.add(&format!("component_{i}_field.csv"), csv_bytes(|w| nu.write_csv(w, tol.grid))?);
            }
        }
    }
    let doc = Envelope { schema_version: SCHEMA_VERSION, command: "analyze", tolerances: tol, inputs: vec![&args.f, &args.g], report };
    out.add("decomposition.json", canonical_json(&doc).into_bytes());
    Ok(summary)
}

fn szekeres_cmd(args: &SingleArgs, tol: &Tolerances, out: &mut Outputs) -> CliResult<String> {
    let f = load_map(&args.f, &args.common)?;
    let base = if args.base == "hi" { Base::Hi } else { Base::Lo };
    let res = szekeres_at(&f, base, tol)?;
    out.stage("szekeres");
    out.add("field.csv", csv_bytes(|w| res.field.write_csv(w, tol.grid))?);
    let summary = format!(
        "lambda = {}, iterations = {}, c1 residual = {:e}\n",
        fmt17(res.lambda),
        res.iterations_used,
        res.c1_residual
    );
    let doc = Envelope { schema_version: SCHEMA_VERSION, command: "szekeres", tolerances: tol, inputs: vec![&args.f], report: &res };
    out.add("szekeres.json", canonical_json(&doc).into_bytes());
    Ok(summary)
}

#[derive(Serialize)]
struct PathDoc {
    decomposition: szekeres::structure::DecompositionReport,
    path: szekeres::homotopy::PathReport,
    times: Vec<f64>,
}

fn path_cmd(args: &PathArgs, tol: &Tolerances, out: &mut Outputs) -> CliResult<(String, bool)> {
    let common = &args.pair.common;
    let f = load_map(&args.pair.f, common)?;
    let g = load_map(&args.pair.g, common)?;
    out.stage("inputs");
    let dec = decompose(&f, &g, tol)?;
    out.stage("decompose");
    let decomposition = dec.report();
    let path = build_path(&f, &g, dec, tol)?;
    out.stage("build");
    let lat = ProbeLattice { n_t: args.lattice_t, n_x: args.lattice_x, k_min: args.k_min, k_max: args.k_max };
    let report = verify_path(&path, &lat)?;
    out.stage("verify");
    let frames = path_to_frames(&path, &args.times, args.frame_points)?;
    out.add("frames.csv", csv_bytes(|w| write_frames_csv(&frames, w))?);
    out.stage("frames");
    let ok = report.ok;
    let summary = format!(
        "commutation residual {:e}, min Df_t {}, checks {}\n",
        report.commutation_residual,
        fmt17(report.derivative_positivity_min),
        if ok { "passed" } else { "FAILED" }
    );
    let doc = Envelope {
        schema_version: SCHEMA_VERSION,
        command: "path",
        tolerances: tol,
        inputs: vec![&args.pair.f, &args.pair.g],
        report: PathDoc { decomposition, path: report, times: args.times.clone() },
    };
    out.add("path_report.json", canonical_json(&doc).into_bytes());
    Ok((summary, ok))
}

#[derive(Serialize)]
struct GroupLaw {
    /// `sup |flow(ν, 1) - f|`.
    flow_closure: f64,
    /// `sup |flow(ν, s) ∘ flow(ν, t) - flow(ν, s + t)|` over a few pairs.
    flow_additivity: f64,
}

#[derive(Serialize)]
struct VerifyDoc {
    lambda: f64,
    /// Absent when the certified `δ` is not below 1.
    audit: Option<szekeres::szekeres::BoundAudit>,
    audit_note: Option<String>,
    scaling_check: f64,
    group_law: GroupLaw,
    centralizer: Option<szekeres::flow::CentralizerTime>,
    ok: bool,
}

fn verify_cmd(args: &VerifyArgs, tol: &Tolerances, out: &mut Outputs) -> CliResult<(String, bool)> {
    let f = load_map(&args.f, &args.common)?;
    let g = args.g.as_deref().map(|s| load_map(s, &args.common)).transpose()?;
    if let Some(g) = &g {
        let res = f.commutator_residual(g, 1025);
        if res.is_nan() || res > tol.eps_comm {
            return Err(Error::NotCommuting { residual: res, tol: tol.eps_comm }.into());
        }
    }
    out.stage("inputs");
    let res = szekeres_at(&f, Base::Lo, tol)?;
    out.stage("szekeres");
    let (audit, audit_note) = match audit_bounds(&f, &res, tol) {
        Ok(a) => (Some(a), None),
        Err(e @ Error::DeltaTooLarge { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    out.stage("audit");
    let scaling = scaling_check(&f, tol)?;
    out.stage("scaling");
    let nu = &res.field;
    let dom: Iv<f64> = nu.domain();
    let probe = dom.shrink(0.05);
    let closure = flow_map(nu, 1.0, tol)?.sup_distance_on(&f, &probe, 513);
    let flow = FieldFlow::new(nu.clone(), tol.eps_quad);
    let mut additivity = 0.0f64;
    for (s, t) in [(0.25, 0.5), (0.5, 0.5), (0.3, -0.7)] {
        for x in szekeres::interval::uniform_grid(&probe, 65) {
            let step = || -> szekeres::Result<f64> {
                let a = flow.displacement(x, t)?;
                let b = flow.displacement(x + a, s)?;
                let c = flow.displacement(x, s + t)?;
                Ok((a + b - c).abs())
            };
            match step() {
                Ok(r) => additivity = additivity.max(r),
                // times outside the attainable window are simply not probed
                Err(Error::FlowRange { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    out.stage("group law");
    let centralizer = match &g {
        Some(g) => Some(centralizer_time(&f.restrict(dom), &g.restrict(dom), nu, tol)?),
        None => None,
    };
    let ok = audit.as_ref().is_none_or(|a| a.log_ratio_ok && a.dnu_ok && a.theta_ok && a.flow_c1_bound_ok);
    let bounds = match &audit {
        Some(a) => format!("delta = {}, bounds {}", fmt17(a.delta), if ok { "hold" } else { "VIOLATED" }),
        None => "bound audit not applicable".to_string(),
    };
    let summary = format!("lambda = {}, scaling {:e}, flow closure {:e}, {bounds}\n", fmt17(res.lambda), scaling, closure);
    let mut inputs = vec![args.f.as_str()];
    if let Some(g) = &args.g {
        inputs.push(g);
    }
    let doc = Envelope {
        schema_version: SCHEMA_VERSION,
        command: "verify",
        tolerances: tol,
        inputs,
        report: VerifyDoc {
            lambda: res.lambda,
            audit,
            audit_note,
            scaling_check: scaling,
            group_law: GroupLaw { flow_closure: closure, flow_additivity: additivity },
            centralizer,
            ok,
        },
    };
    out.add("audit.json", canonical_json(&doc).into_bytes());
    Ok((summary, ok))
}

/// Runs one command; returns the exit code and writes the human summary
/// (or the error) to the given streams.
pub fn run<W: Write, E: Write>(argv: Vec<String>, stdout: &mut W, stderr: &mut E) -> i32 {
    let outcome = (|| -> CliResult<(String, bool)> {
        let (rest, tols) = split_tolerance_flags(argv)?;
        let cli = Cli::try_parse_from(rest).map_err(|e| {
            let code = if e.use_stderr() { exit::INPUT } else { exit::OK };
            Failure { code, message: e.to_string() }
        })?;
        let common = match &cli.command {
            Command::Analyze(a) => &a.common,
            Command::Szekeres(a) => &a.common,
            Command::Path(a) => &a.pair.common,
            Command::Verify(a) => &a.common,
        };
        let tol = load_tolerances(common, &tols)?;
        let mut out = Outputs::new(&common.out);
        let result = match &cli.command {
            Command::Analyze(a) => analyze(a, &tol, &mut out).map(|s| (s, true)),
            Command::Szekeres(a) => szekeres_cmd(a, &tol, &mut out).map(|s| (s, true)),
            Command::Path(a) => path_cmd(a, &tol, &mut out),
            Command::Verify(a) => verify_cmd(a, &tol, &mut out),
        }?;
        out.commit()?;
        Ok(result)
    })();
    match outcome {
        Ok((summary, ok)) => {
            let _ = stdout.write_all(summary.as_bytes());
            if ok {
                exit::OK
            } else {
                exit::FAILURE
            }
        }
        Err(f) if f.code == exit::OK => {
            let _ = stdout.write_all(f.message.as_bytes());
            exit::OK
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message.trim_end());
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_and_formats() {
        let v = serde_json::json!({"b": 1.0, "a": [0.1, f64::NAN, 3], "c": {"z": true, "y": null}});
        let s = canonical_json(&v);
        assert_eq!(
            s,
            "{\n  \"a\": [\n    1.0000000000000001e-1,\n    null,\n    3\n  ],\n  \"b\": 1.0000000000000000e0,\n  \"c\": {\n    \"y\": null,\n    \"z\": true\n  }\n}\n"
        );
    }

    #[test]
    fn tolerance_flags_are_split_out() {
        let argv = ["szekeres", "analyze", "--tol.eps_rat=1e-6", "--f", "expr:x"].map(String::from).to_vec();
        let (rest, tols) = split_tolerance_flags(argv).unwrap();
        assert_eq!(rest, ["szekeres", "analyze", "--f", "expr:x"]);
        assert_eq!(tols, [("eps_rat".to_string(), "1e-6".to_string())]);
        assert!(split_tolerance_flags(vec!["--tol.eps_rat".into()]).is_err());
    }

    #[test]
    fn precedence_flag_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("tol.conf");
        fs::write(&cfg, "# comment\neps_rat = 1e-6\nq_max=12\ngrid=513\n").unwrap();
        let common = Common { grid: None, out: dir.path().into(), config: Some(cfg), domain: (0.0, 1.0), half_open: None };
        let t = load_tolerances(&common, &[("q_max".into(), "20".into())]).unwrap();
        assert_eq!(t.eps_rat, 1e-6);
        assert_eq!(t.q_max, 20);
        assert_eq!(t.grid, 513);
        assert_eq!(t.eps_comp, Tolerances::default().eps_comp);
        let bad = load_tolerances(&common, &[("grid".into(), "1000".into())]).unwrap_err();
        assert_eq!(bad.code, exit::INPUT);
    }

    #[test]
    fn error_codes() {
        let f: Failure = Error::NotCommuting { residual: 1.0, tol: 1e-7 }.into();
        assert_eq!(f.code, exit::NOT_COMMUTING);
        let f: Failure = Error::FlowRange { at: 0.5, time: 2.0, t_min: -1.0, t_max: 1.0 }.into();
        assert_eq!(f.code, exit::FLOW_RANGE);
        let f: Failure = Error::Classification { lo: 0.0, hi: 1.0, msg: String::new() }.into();
        assert_eq!(f.code, exit::CLASSIFICATION);
    }
}
