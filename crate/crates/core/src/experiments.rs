//! Data sweeps behind the command-line tool.
//!
//! Every subcommand turns a [`SweepSpec`] into rows of a single fixed CSV
//! schema ([`ResultRow`]) plus a JSON sidecar echoing the resolved
//! configuration. Sweep points run on the rayon pool; rows are sorted by a
//! total key order before they are written.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{
    epsilon_opt, q_ccp_exact, q_chain_necklace, q_general_ccp, q_star_necklace,
};
use crate::arch::{effective_memory, Arch};
use crate::error::{Error, Result};
use crate::model::{
    gain, q_no_reset, steady_state, wrong_arm_probability, PolicyTable, RewardVector, SteadyMethod,
    TaskSpec, WrongArmIndicator, DEFAULT_POWER_TOL,
};
use crate::necklace::{gray_chain_search, GrayChain, SearchOutcome, DEFAULT_SEARCH_BUDGET};
use crate::optimizer::{gradient_flow, FlowConfig, FlowTrace};
use crate::policies::{
    ccp_policy, init_policy, necklace_policy, CcpConfig, InitOptions, InitScheme, NecklaceConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CcpSweep,
    Learn,
    NecklaceEval,
    Gray,
    Table1,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::CcpSweep,
        Command::Learn,
        Command::NecklaceEval,
        Command::Gray,
        Command::Table1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::CcpSweep => "ccp-sweep",
            Command::Learn => "learn",
            Command::NecklaceEval => "necklace-eval",
            Command::Gray => "gray",
            Command::Table1 => "table1",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown subcommand {s:?}")))
    }
}

/// Keys accepted in config files and as flags.
pub const CONFIG_KEYS: [&str; 16] = [
    "mu", "r", "M", "m", "eps", "eps0", "eps1", "k", "seeds", "budget", "tol", "method", "schemes",
    "flow", "out", "delta",
];

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", n + 1)))?;
        let key = k.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Parse(format!(
                "config line {}: unknown key {key:?}",
                n + 1
            )));
        }
        map.insert(key.to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_list<T: FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::Parse(format!("{key}: cannot parse {t:?}")))
        })
        .collect()
}

/// `0..10` (half open) or a comma list.
fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("seeds: bad range start {a:?}")))?;
        let hi: u64 = b
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("seeds: bad range end {b:?}")))?;
        return Ok((lo..hi).collect());
    }
    parse_list("seeds", s)
}

/// `0.8:0.6,0.9:0.5`.
fn parse_pairs(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (a, b) = t
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("k: expected kA:kB, got {t:?}")))?;
            let pa = a
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("k: cannot parse {a:?}")))?;
            let pb = b
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("k: cannot parse {b:?}")))?;
            Ok((pa, pb))
        })
        .collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse(format!(
            "{key}: expected true or false, got {s:?}"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSpec {
    pub command: Command,
    pub mu: Vec<f64>,
    pub r: Vec<f64>,
    /// RAM sizes `M`.
    pub ram_sizes: Vec<usize>,
    /// Memento lengths `m`.
    pub memento_sizes: Vec<usize>,
    pub eps: Vec<f64>,
    pub eps0: Vec<f64>,
    pub eps1: Vec<f64>,
    /// Explicit `(k_A, k_B)` pairs (Table 1).
    pub k: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    /// Accepted flow steps for `learn` and `ccp-sweep`; search nodes for `gray`.
    pub budget: u64,
    /// Power-method tolerance; gradient-norm threshold in `learn`.
    pub tol: f64,
    pub method: SteadyMethod,
    pub schemes: Vec<String>,
    /// Add flow-refined rows to `ccp-sweep`.
    pub flow: bool,
    /// Mixing weight of the `*_near` initializations.
    pub delta: f64,
    pub out: PathBuf,
}

impl SweepSpec {
    /// Resolves a spec from merged config/flag values, filling per-command
    /// defaults.
    pub fn from_map(command: Command, map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown key {k:?}")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let floats = |k: &str, default: &[f64]| -> Result<Vec<f64>> {
            get(k).map_or_else(|| Ok(default.to_vec()), |s| parse_list(k, s))
        };
        let sizes = |k: &str, default: &[usize]| -> Result<Vec<usize>> {
            get(k).map_or_else(|| Ok(default.to_vec()), |s| parse_list(k, s))
        };
        use Command::*;
        let (ram_default, mem_default): (&[usize], &[usize]) = match command {
            CcpSweep => (&[2, 4, 8], &[]),
            Learn => (&[8], &[]),
            NecklaceEval => (&[], &[3]),
            Gray => (&[], &[3, 4, 5, 7]),
            Table1 => (&[2, 3, 5], &[3]),
        };
        let r = match command {
            CcpSweep => floats("r", &[1e-3, 1e-2, 1e-1])?,
            NecklaceEval => floats("r", &[1e-6, 1e-8, 1e-10])?,
            Learn => {
                let r = floats("r", &[])?;
                if r.is_empty() {
                    return Err(Error::Parse(
                        "learn needs an explicit reset probability (r)".into(),
                    ));
                }
                r
            }
            Gray | Table1 => floats("r", &[])?,
        };
        let seeds = match get("seeds") {
            Some(s) => parse_seeds(s)?,
            None if command == Learn => {
                return Err(Error::Parse(
                    "learn needs explicit seeds (e.g. 0..20)".into(),
                ))
            }
            None => vec![0],
        };
        let budget = match get("budget") {
            Some(s) => s
                .parse()
                .map_err(|_| Error::Parse(format!("budget: cannot parse {s:?}")))?,
            None if command == Gray => DEFAULT_SEARCH_BUDGET,
            None => FlowConfig::default().max_accepted as u64,
        };
        let tol = match get("tol") {
            Some(s) => s
                .parse()
                .map_err(|_| Error::Parse(format!("tol: cannot parse {s:?}")))?,
            None if command == Learn => FlowConfig::default().grad_tol,
            None => DEFAULT_POWER_TOL,
        };
        let (eps0_default, eps1_default): (&[f64], &[f64]) = match command {
            NecklaceEval => (&[1e-2, 1e-4, 1e-6], &[1e-1, 1e-2, 1e-3]),
            Table1 => (&[1e-9], &[1e-4]),
            _ => (&[1e-2], &[1e-1]),
        };
        let k = get("k").map_or_else(
            || {
                Ok(if command == Table1 {
                    vec![(0.8, 0.6), (0.9, 0.5), (0.7, 0.4)]
                } else {
                    vec![]
                })
            },
            parse_pairs,
        )?;
        let spec = SweepSpec {
            command,
            mu: floats("mu", &[0.1])?,
            r,
            ram_sizes: sizes("M", ram_default)?,
            memento_sizes: sizes("m", mem_default)?,
            eps: floats("eps", if command == Table1 { &[1e-6] } else { &[] })?,
            eps0: floats("eps0", eps0_default)?,
            eps1: floats("eps1", eps1_default)?,
            k,
            seeds,
            budget,
            tol,
            method: get("method").map_or(Ok(SteadyMethod::Solve), str::parse)?,
            schemes: get("schemes").map_or_else(|| Ok(vec![]), |s| parse_list("schemes", s))?,
            flow: get("flow").map_or(Ok(false), |s| parse_bool("flow", s))?,
            delta: get("delta").map_or(Ok(InitOptions::default().delta), |s| {
                s.parse()
                    .map_err(|_| Error::Parse(format!("delta: cannot parse {s:?}")))
            })?,
            out: PathBuf::from(
                get("out").map_or_else(|| format!("{}.csv", command.name()), str::to_string),
            ),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::Parse(format!("{name} grid is empty")))
            } else {
                Ok(())
            }
        };
        match self.command {
            Command::CcpSweep => {
                nonempty("M", self.ram_sizes.len())?;
                nonempty("mu", self.mu.len())?;
                nonempty("r", self.r.len())?;
            }
            Command::Learn => {
                nonempty("M/m", self.ram_sizes.len() + self.memento_sizes.len())?;
                nonempty("mu", self.mu.len())?;
                nonempty("seeds", self.seeds.len())?;
            }
            Command::NecklaceEval => {
                nonempty("m", self.memento_sizes.len())?;
                if let Some(&m) = self.memento_sizes.iter().find(|&&m| m > 6) {
                    return Err(Error::Domain(format!(
                        "necklace-eval supports m <= 6, got {m}"
                    )));
                }
            }
            Command::Gray => {
                nonempty("m", self.memento_sizes.len())?;
                if let Some(&m) = self.memento_sizes.iter().find(|&&m| m > 14) {
                    return Err(Error::Domain(format!("gray supports m <= 14, got {m}")));
                }
            }
            Command::Table1 => {
                nonempty("M/m", self.ram_sizes.len() + self.memento_sizes.len())?;
            }
        }
        if self.tol <= 0.0 || self.tol.is_nan() {
            return Err(Error::Domain(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    /// `out` with its extension replaced by `ext`.
    pub fn sibling(&self, ext: &str) -> PathBuf {
        self.out.with_extension(ext)
    }
}

/// One measurement. Absent fields serialize as empty CSV cells.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResultRow {
    pub arch: String,
    pub size: usize,
    pub m_eff: usize,
    pub mu: Option<f64>,
    pub k_a: f64,
    pub k_b: f64,
    pub r: Option<f64>,
    pub eps: Option<f64>,
    pub eps0: Option<f64>,
    pub eps1: Option<f64>,
    pub init: String,
    pub seed: Option<u64>,
    pub t: Option<f64>,
    pub q: f64,
    pub g: Option<f64>,
    /// `1/q - 1`.
    pub perf: f64,
    pub source: String,
    pub note: String,
}

pub const CSV_HEADER: &str =
    "arch,size,m_eff,mu,k_a,k_b,r,eps,eps0,eps1,init,seed,t,q,g,perf,source,note";

impl ResultRow {
    fn new(arch: Arch, k: (f64, f64), mu: Option<f64>, q: f64, source: &str) -> Self {
        ResultRow {
            arch: arch.name().into(),
            size: arch.size(),
            m_eff: effective_memory(&arch),
            mu,
            k_a: k.0,
            k_b: k.1,
            q,
            perf: 1.0 / q - 1.0,
            source: source.into(),
            ..Default::default()
        }
    }
}

fn source_rank(s: &str) -> u8 {
    match s {
        "analytic" => 0,
        "matrix" => 1,
        "mc" => 2,
        "flow" => 3,
        _ => 4,
    }
}

fn cmp_opt<T: PartialOrd>(a: &Option<T>, b: &Option<T>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
    }
}

fn row_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    source_rank(&a.source)
        .cmp(&source_rank(&b.source))
        .then_with(|| a.arch.cmp(&b.arch))
        .then_with(|| a.size.cmp(&b.size))
        .then_with(|| cmp_opt(&a.mu, &b.mu))
        .then_with(|| a.k_a.total_cmp(&b.k_a))
        .then_with(|| a.k_b.total_cmp(&b.k_b))
        .then_with(|| cmp_opt(&a.r, &b.r))
        .then_with(|| cmp_opt(&a.eps, &b.eps))
        .then_with(|| cmp_opt(&a.eps0, &b.eps0))
        .then_with(|| cmp_opt(&a.eps1, &b.eps1))
        .then_with(|| a.init.cmp(&b.init))
        .then_with(|| a.note.cmp(&b.note))
        .then_with(|| cmp_opt(&a.seed, &b.seed))
        .then_with(|| cmp_opt(&a.t, &b.t))
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(row_order);
}

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Gray-search summary for one `m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrayReport {
    pub m: usize,
    pub n: usize,
    pub total: usize,
    pub full_cover: bool,
    pub budget_exhausted: bool,
    pub expansions: u64,
    /// Smallest primitive period among chain members.
    pub y: usize,
    pub chain: Vec<String>,
}

impl GrayReport {
    fn from_outcome(m: usize, o: &SearchOutcome) -> Self {
        GrayReport {
            m,
            n: o.chain.len(),
            total: o.total_necklaces,
            full_cover: o.full_cover,
            budget_exhausted: o.budget_exhausted,
            expansions: o.expansions,
            y: o.chain.min_period(),
            chain: o
                .chain
                .to_text()
                .split_whitespace()
                .map(str::to_string)
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    /// Gray-search results (only for `gray`).
    pub gray: Vec<GrayReport>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    spec: &'a SweepSpec,
    csv: String,
    header: &'static str,
    rows: usize,
    warnings: &'a [String],
    #[serde(skip_serializing_if = "<[GrayReport]>::is_empty")]
    gray: &'a [GrayReport],
}

/// Runs the spec's subcommand.
pub fn run(spec: &SweepSpec) -> Result<RunOutput> {
    spec.validate()?;
    let mut out = match spec.command {
        Command::CcpSweep => cmd_ccp_sweep(spec)?,
        Command::Learn => cmd_learn(spec)?,
        Command::NecklaceEval => cmd_necklace_eval(spec)?,
        Command::Gray => cmd_gray(spec)?,
        Command::Table1 => cmd_table1(spec)?,
    };
    sort_rows(&mut out.rows);
    Ok(out)
}

/// Writes the CSV, the JSON sidecar and, for `gray`, the chain text file.
/// Returns the paths written.
pub fn write_outputs(spec: &SweepSpec, output: &RunOutput) -> Result<Vec<PathBuf>> {
    let csv_path = spec.out.clone();
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut written = Vec::new();
    if spec.command == Command::Gray {
        write_gray_csv(&output.gray, fs::File::create(&csv_path)?)?;
        let txt = spec.sibling("txt");
        fs::write(&txt, gray_text(&output.gray))?;
        written.push(csv_path.clone());
        written.push(txt);
    } else {
        write_rows(&output.rows, fs::File::create(&csv_path)?)?;
        written.push(csv_path.clone());
    }
    let sidecar = Sidecar {
        tool: "finmem",
        version: env!("CARGO_PKG_VERSION"),
        spec,
        csv: file_name(&csv_path),
        header: if spec.command == Command::Gray {
            GRAY_HEADER
        } else {
            CSV_HEADER
        },
        rows: if spec.command == Command::Gray {
            output.gray.len()
        } else {
            output.rows.len()
        },
        warnings: &output.warnings,
        gray: &output.gray,
    };
    let json = spec.sibling("json");
    fs::write(&json, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    written.push(json);
    Ok(written)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

pub const GRAY_HEADER: &str = "m,n,total,full_cover,budget_exhausted,expansions,y,chain";

fn write_gray_csv<W: Write>(reports: &[GrayReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRAY_HEADER.split(','))?;
    for g in reports {
        w.write_record([
            g.m.to_string(),
            g.n.to_string(),
            g.total.to_string(),
            g.full_cover.to_string(),
            g.budget_exhausted.to_string(),
            g.expansions.to_string(),
            g.y.to_string(),
            g.chain.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn gray_text(reports: &[GrayReport]) -> String {
    let mut s = String::new();
    for g in reports {
        s += &format!(
            "m={} n={} N={} full_cover={} y={}{}\n{}\n",
            g.m,
            g.n,
            g.total,
            g.full_cover,
            g.y,
            if g.budget_exhausted {
                " (budget exhausted)"
            } else {
                ""
            },
            g.chain.join(" ")
        );
    }
    s
}

fn matrix_eval(
    task: &TaskSpec,
    policy: &PolicyTable,
    method: SteadyMethod,
    tol: f64,
) -> Result<(f64, f64)> {
    let space = task.space();
    let p = steady_state(task, policy, method, tol)?;
    Ok((
        wrong_arm_probability(&p, &WrongArmIndicator::new(&space)),
        gain(&p, &RewardVector::new(&space), task.r()),
    ))
}

fn sym_k(mu: f64) -> (f64, f64) {
    ((1.0 + mu) / 2.0, (1.0 - mu) / 2.0)
}

fn grid3<A: Copy, B: Copy, C: Copy>(a: &[A], b: &[B], c: &[C]) -> Vec<(A, B, C)> {
    let mut v = Vec::with_capacity(a.len() * b.len() * c.len());
    for &x in a {
        for &y in b {
            for &z in c {
                v.push((x, y, z));
            }
        }
    }
    v
}

fn flow_config(spec: &SweepSpec, seed: u64, grad_tol: Option<f64>) -> FlowConfig {
    let mut cfg = FlowConfig {
        max_accepted: spec.budget as usize,
        seed,
        ..Default::default()
    };
    if let Some(t) = grad_tol {
        cfg.grad_tol = t;
    }
    cfg
}

/// Analytic CCP error at the chosen `eps`, the matrix value for the explicit
/// table, and optionally a flow started next to it.
pub fn cmd_ccp_sweep(spec: &SweepSpec) -> Result<RunOutput> {
    let points = grid3(&spec.ram_sizes, &spec.mu, &spec.r);
    let chunks: Vec<Vec<ResultRow>> = points
        .par_iter()
        .map(|&(size, mu, r)| -> Result<Vec<ResultRow>> {
            let arch = Arch::ram(size)?;
            let task = TaskSpec::symmetric(mu, r, arch)?;
            let (eps_list, note) = if spec.eps.is_empty() {
                (vec![epsilon_opt(size, mu, r)?], "eps_opt")
            } else {
                (spec.eps.clone(), "")
            };
            let mut rows = Vec::new();
            for &eps in &eps_list {
                let base = |q: f64, source: &str| ResultRow {
                    r: Some(r),
                    eps: Some(eps),
                    init: "ccp".into(),
                    note: note.into(),
                    ..ResultRow::new(arch, sym_k(mu), Some(mu), q, source)
                };
                let qa = q_ccp_exact(size, mu, r, eps)?;
                rows.push(ResultRow {
                    g: Some(mu / r * (1.0 - 2.0 * qa)),
                    ..base(qa, "analytic")
                });
                let policy = ccp_policy(&CcpConfig::new(size, eps)?)?;
                let (qm, gm) = matrix_eval(&task, &policy, spec.method, spec.tol)?;
                rows.push(ResultRow {
                    g: Some(gm),
                    ..base(qm, "matrix")
                });
                if spec.flow {
                    let opts = InitOptions {
                        delta: spec.delta,
                        ..Default::default()
                    };
                    let seed = spec.seeds[0];
                    let w0 = init_policy(&arch, InitScheme::CcpNear { eps }, seed, &opts)?;
                    let res = gradient_flow(&w0, &task, &flow_config(spec, seed, None))?;
                    let last = res.trace.last();
                    rows.push(ResultRow {
                        init: "ccp_near".into(),
                        seed: Some(seed),
                        t: Some(last.t),
                        g: Some(last.gain),
                        ..base(last.q, "flow")
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(RunOutput {
        rows: chunks.into_iter().flatten().collect(),
        gray: vec![],
        warnings: vec![],
    })
}

fn parse_scheme(name: &str, arch: &Arch, mu: f64, r: f64, spec: &SweepSpec) -> Result<InitScheme> {
    Ok(match name {
        "random" => InitScheme::Random,
        "linear" => InitScheme::Linear,
        "columns" => InitScheme::Columns,
        "cycles" => InitScheme::Cycles,
        "ccp_near" => InitScheme::CcpNear {
            eps: epsilon_opt(arch.size(), mu, r)?,
        },
        "necklace_near" => InitScheme::NecklaceNear {
            eps0: spec.eps0[0],
            eps1: spec.eps1[0],
        },
        _ => return Err(Error::Parse(format!("unknown init scheme {name:?}"))),
    })
}

fn default_schemes(arch: &Arch) -> Vec<String> {
    let names: &[&str] = match arch {
        Arch::Ram(_) => &["random", "linear", "columns", "ccp_near"],
        Arch::Memento(_) => &["random", "cycles", "necklace_near"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Value of a trace at flow time `t`: the last accepted point at or before it.
fn trace_q_at(trace: &FlowTrace, t: f64) -> f64 {
    let idx = trace.points.partition_point(|p| p.t <= t);
    trace.points[idx.saturating_sub(1)].q
}

/// Log-spaced grid from the smallest positive to the largest trace time,
/// with `t = 0` prepended.
pub fn log_time_grid(traces: &[&FlowTrace], per_decade: usize) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for tr in traces {
        if let Some(p) = tr.points.iter().find(|p| p.t > 0.0) {
            lo = lo.min(p.t);
        }
        hi = hi.max(tr.last().t);
    }
    let mut grid = vec![0.0];
    if lo.is_finite() && hi > lo {
        let decades = (hi / lo).log10();
        let n = ((decades * per_decade as f64).ceil() as usize).max(1);
        grid.extend((0..=n).map(|i| lo * 10f64.powf(decades * i as f64 / n as f64)));
    } else if lo.is_finite() {
        grid.push(lo);
    }
    grid
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Gradient-flow traces per seed and initialization, plus the per-time median
/// across seeds.
pub fn cmd_learn(spec: &SweepSpec) -> Result<RunOutput> {
    let archs: Vec<Arch> = spec
        .ram_sizes
        .iter()
        .map(|&m| Arch::ram(m))
        .chain(spec.memento_sizes.iter().map(|&m| Arch::memento(m)))
        .collect::<Result<_>>()?;
    struct Job {
        arch: Arch,
        mu: f64,
        r: f64,
        scheme_name: String,
        scheme: InitScheme,
        seed: u64,
    }
    let mut jobs = Vec::new();
    for arch in &archs {
        let names = if spec.schemes.is_empty() {
            default_schemes(arch)
        } else {
            spec.schemes.clone()
        };
        for &mu in &spec.mu {
            for &r in &spec.r {
                for name in &names {
                    let scheme = parse_scheme(name, arch, mu, r, spec)?;
                    for &seed in &spec.seeds {
                        jobs.push(Job {
                            arch: *arch,
                            mu,
                            r,
                            scheme_name: name.clone(),
                            scheme,
                            seed,
                        });
                    }
                }
            }
        }
    }
    let opts = InitOptions {
        delta: spec.delta,
        ..Default::default()
    };
    let traces: Vec<FlowTrace> = jobs
        .par_iter()
        .map(|j| -> Result<FlowTrace> {
            let task = TaskSpec::symmetric(j.mu, j.r, j.arch)?;
            let w0 = init_policy(&j.arch, j.scheme, j.seed, &opts)?;
            Ok(gradient_flow(&w0, &task, &flow_config(spec, j.seed, Some(spec.tol)))?.trace)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, (j, tr)) in jobs.iter().zip(&traces).enumerate() {
        let base = ResultRow {
            r: Some(j.r),
            init: j.scheme_name.clone(),
            seed: Some(j.seed),
            note: format!("{:?}", tr.stop).to_lowercase(),
            ..ResultRow::new(j.arch, sym_k(j.mu), Some(j.mu), 0.0, "flow")
        };
        for p in &tr.points {
            rows.push(ResultRow {
                t: Some(p.t),
                q: p.q,
                perf: 1.0 / p.q - 1.0,
                g: Some(p.gain),
                ..base.clone()
            });
        }
        // group key: first job index of the (arch, mu, r, scheme) block
        let key = jobs
            .iter()
            .position(|k| {
                k.arch == j.arch && k.mu == j.mu && k.r == j.r && k.scheme_name == j.scheme_name
            })
            .unwrap_or(i);
        groups.entry(key).or_default().push(i);
    }
    for members in groups.values() {
        let j = &jobs[members[0]];
        let trs: Vec<&FlowTrace> = members.iter().map(|&i| &traces[i]).collect();
        for t in log_time_grid(&trs, 10) {
            let q = median(trs.iter().map(|tr| trace_q_at(tr, t)).collect());
            rows.push(ResultRow {
                r: Some(j.r),
                init: j.scheme_name.clone(),
                t: Some(t),
                g: Some(j.mu / j.r * (1.0 - 2.0 * q)),
                note: "median".into(),
                ..ResultRow::new(j.arch, sym_k(j.mu), Some(j.mu), q, "flow")
            });
        }
    }
    Ok(RunOutput {
        rows,
        gray: vec![],
        warnings: vec![],
    })
}

/// Longest Gray chain for `m` with the default search budget.
pub fn default_chain(m: usize) -> Result<GrayChain> {
    Ok(gray_chain_search(m, DEFAULT_SEARCH_BUDGET)?.chain)
}

/// The ordered-limit condition `r << eps0 << eps1`, read as a factor of 10.
pub fn is_ordered(r: f64, eps0: f64, eps1: f64) -> bool {
    10.0 * r <= eps0 && 10.0 * eps0 <= eps1
}

/// Small-reset bound and matrix values of the necklace policy over a grid.
pub fn cmd_necklace_eval(spec: &SweepSpec) -> Result<RunOutput> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &m in &spec.memento_sizes {
        let arch = Arch::memento(m)?;
        let chain = default_chain(m)?;
        for &mu in &spec.mu {
            let qs = q_star_necklace(m, mu, chain.len())?;
            rows.push(ResultRow {
                r: Some(0.0),
                init: "necklace".into(),
                note: format!("q_star n={}", chain.len()),
                ..ResultRow::new(arch, sym_k(mu), Some(mu), qs, "analytic")
            });
            let points = grid3(&spec.r, &spec.eps0, &spec.eps1);
            let evaluated: Vec<ResultRow> = points
                .par_iter()
                .map(|&(r, eps0, eps1)| -> Result<ResultRow> {
                    let task = TaskSpec::symmetric(mu, r, arch)?;
                    let policy = necklace_policy(&NecklaceConfig {
                        len: m,
                        eps0,
                        eps1,
                        chain: chain.clone(),
                    })?;
                    let (q, g) = matrix_eval(&task, &policy, spec.method, spec.tol)?;
                    let ordered = is_ordered(r, eps0, eps1);
                    Ok(ResultRow {
                        r: Some(r),
                        eps0: Some(eps0),
                        eps1: Some(eps1),
                        init: "necklace".into(),
                        g: Some(g),
                        note: if ordered {
                            String::new()
                        } else {
                            "unordered".into()
                        },
                        ..ResultRow::new(arch, sym_k(mu), Some(mu), q, "matrix")
                    })
                })
                .collect::<Result<_>>()?;
            for row in &evaluated {
                if row.note == "unordered" {
                    warnings.push(format!(
                        "m={m} r={} eps0={} eps1={}: grid point violates r << eps0 << eps1",
                        row.r.unwrap_or(0.0),
                        row.eps0.unwrap_or(0.0),
                        row.eps1.unwrap_or(0.0)
                    ));
                }
            }
            rows.extend(evaluated);
        }
    }
    Ok(RunOutput {
        rows,
        gray: vec![],
        warnings,
    })
}

/// Longest Gray chains with their counts.
pub fn cmd_gray(spec: &SweepSpec) -> Result<RunOutput> {
    let gray: Vec<GrayReport> = spec
        .memento_sizes
        .par_iter()
        .map(|&m| {
            Ok(GrayReport::from_outcome(
                m,
                &gray_chain_search(m, spec.budget)?,
            ))
        })
        .collect::<Result<_>>()?;
    let warnings = gray
        .iter()
        .filter(|g| g.budget_exhausted)
        .map(|g| {
            format!(
                "m={}: search budget exhausted after {} expansions",
                g.m, g.expansions
            )
        })
        .collect();
    Ok(RunOutput {
        rows: vec![],
        gray,
        warnings,
    })
}

/// General-`k` formulas for both policies against matrix evaluation, either
/// in the no-reset limit or at the given `r` values.
pub fn cmd_table1(spec: &SweepSpec) -> Result<RunOutput> {
    let mut pairs: Vec<(f64, f64, Option<f64>)> =
        spec.k.iter().map(|&(a, b)| (a, b, None)).collect();
    pairs.extend(spec.mu.iter().map(|&mu| {
        let (a, b) = sym_k(mu);
        (a, b, Some(mu))
    }));
    let resets: Vec<Option<f64>> = if spec.r.is_empty() {
        vec![None]
    } else {
        spec.r.iter().map(|&r| Some(r)).collect()
    };
    let chains: Vec<(usize, GrayChain)> = spec
        .memento_sizes
        .iter()
        .map(|&m| Ok((m, default_chain(m)?)))
        .collect::<Result<_>>()?;
    enum Job<'a> {
        Ccp(usize, f64),
        Necklace(&'a GrayChain, f64, f64),
    }
    let mut jobs = Vec::new();
    for &(k_a, k_b, mu) in &pairs {
        for &r in &resets {
            for &size in &spec.ram_sizes {
                for &eps in &spec.eps {
                    jobs.push((k_a, k_b, mu, r, Job::Ccp(size, eps)));
                }
            }
            for (_, chain) in &chains {
                for &eps0 in &spec.eps0 {
                    for &eps1 in &spec.eps1 {
                        jobs.push((k_a, k_b, mu, r, Job::Necklace(chain, eps0, eps1)));
                    }
                }
            }
        }
    }
    let chunks: Vec<Vec<ResultRow>> = jobs
        .par_iter()
        .map(|(k_a, k_b, mu, r, job)| -> Result<Vec<ResultRow>> {
            let (k_a, k_b) = (*k_a, *k_b);
            let (arch, analytic, policy, base) = match job {
                Job::Ccp(size, eps) => {
                    let arch = Arch::ram(*size)?;
                    let base = ResultRow {
                        eps: Some(*eps),
                        init: "ccp".into(),
                        ..ResultRow::new(arch, (k_a, k_b), *mu, 0.0, "")
                    };
                    (
                        arch,
                        q_general_ccp(k_a, k_b, *size)?,
                        ccp_policy(&CcpConfig::new(*size, *eps)?)?,
                        base,
                    )
                }
                Job::Necklace(chain, eps0, eps1) => {
                    let m = chain.word_len();
                    let arch = Arch::memento(m)?;
                    let policy = necklace_policy(&NecklaceConfig {
                        len: m,
                        eps0: *eps0,
                        eps1: *eps1,
                        chain: (*chain).clone(),
                    })?;
                    let base = ResultRow {
                        eps0: Some(*eps0),
                        eps1: Some(*eps1),
                        init: "necklace".into(),
                        note: format!("n={}", chain.len()),
                        ..ResultRow::new(arch, (k_a, k_b), *mu, 0.0, "")
                    };
                    (arch, q_chain_necklace(k_a, k_b, chain)?, policy, base)
                }
            };
            let task = TaskSpec::general(k_a, k_b, r.unwrap_or(1e-12), arch)?;
            let (q, g) = match r {
                None => (q_no_reset(&task, &policy)?, None),
                Some(_) => {
                    let (q, g) = matrix_eval(&task, &policy, spec.method, spec.tol)?;
                    (q, Some(g))
                }
            };
            let row = |q: f64, source: &str, r: Option<f64>, g: Option<f64>| ResultRow {
                q,
                perf: 1.0 / q - 1.0,
                source: source.into(),
                r,
                g,
                ..base.clone()
            };
            Ok(vec![
                row(analytic, "analytic", Some(0.0), None),
                row(q, "matrix", Some(r.unwrap_or(0.0)), g),
            ])
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    // analytic rows repeat across reset values
    rows.sort_by(row_order);
    rows.dedup();
    Ok(RunOutput {
        rows,
        gray: vec![],
        warnings: vec![],
    })
}

/// Reads an optional config file and lays `overrides` over it.
pub fn resolve_spec(
    command: Command,
    config: Option<&Path>,
    overrides: &BTreeMap<String, String>,
) -> Result<SweepSpec> {
    let mut map = match config {
        Some(p) => parse_config(&fs::read_to_string(p)?)?,
        None => BTreeMap::new(),
    };
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    SweepSpec::from_map(command, &map)
}
