//! The `llm-energy` command line.
//!
//! Exit codes: 0 success, 1 validation error (bad arguments, unreadable or
//! malformed input), 2 computation error (singular fit, overflow, degenerate
//! model). Files are written atomically; when `--out` is given the rendered
//! output goes to the file and a one-line summary to stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::arch_cost::{self, ModelArch, SequenceShape};
use crate::estimator::{self, FamilyComparison, FitResult, FitSpace};
use crate::io::{self, ascii_table, fmt_sig, IoError};
use crate::model_zoo::{self, ModelFamily, ReferenceTheta, SweetSpotPrediction, ThetaVector};
use crate::par::Execution;
use crate::synth::{self, SynthSpec};
use crate::trace::{self, Heatmap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub emitted_files: Vec<PathBuf>,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Failure {
    Validation,
    Computation,
}

#[derive(Debug)]
struct CliError {
    kind: Failure,
    message: String,
}

impl CliError {
    fn validation(m: impl ToString) -> Self {
        CliError {
            kind: Failure::Validation,
            message: m.to_string(),
        }
    }
    fn computation(m: impl ToString) -> Self {
        CliError {
            kind: Failure::Computation,
            message: m.to_string(),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::validation(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "llm-energy", version, about = "Energy models for transformer inference")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    ETok,
    EEff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    PerToken,
    PerRequest,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the rendered output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ThetaSource {
    /// Theta vector, fit output, or reference-table JSON.
    #[arg(long, required_unless_present = "reference", conflicts_with = "reference")]
    theta: Option<PathBuf>,
    /// Use the bundled reference coefficient table.
    #[arg(long)]
    reference: bool,
    /// Select one entry by name when the source holds several.
    #[arg(long)]
    model: Option<String>,
    /// Family to take from fit output (defaults to SWEETSPOT_FULL).
    #[arg(long)]
    family: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Prefill/decode/total FLOPs and memory accesses.
    Flops {
        #[arg(long, required_unless_present = "arch_name", conflicts_with = "arch_name")]
        arch: Option<PathBuf>,
        /// Name of a bundled architecture, e.g. "Llama 3.2 1B".
        #[arg(long)]
        arch_name: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        n_in: u64,
        #[arg(long)]
        n_out: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Trapezoidal energy of a power trace.
    Integrate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, requires = "t_end")]
        t_start: Option<f64>,
        #[arg(long, requires = "t_start")]
        t_end: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit model families to one or more grid CSVs.
    Fit {
        #[arg(long, required = true, num_args = 1..)]
        grid: Vec<PathBuf>,
        /// Family id or "all".
        #[arg(long, default_value = "all")]
        family: String,
        #[arg(long, value_enum, default_value = "per-token")]
        space: SpaceArg,
        /// Also write the aligned text table here.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Closed-form optimum output length, with grid snapping and a brute-force check.
    Sweetspot {
        #[command(flatten)]
        source: ThetaSource,
        #[arg(long, required = true, value_delimiter = ',')]
        n_in: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        snap_grid: Option<Vec<u64>>,
        #[arg(long, default_value_t = 8192)]
        n_out_max: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Predicted E_tok or efficiency heatmap over a grid of lengths.
    Sweep {
        #[command(flatten)]
        source: ThetaSource,
        #[arg(long, required = true, value_delimiter = ',')]
        n_in: Vec<u64>,
        #[arg(long, required = true, value_delimiter = ',')]
        n_out: Vec<u64>,
        #[arg(long, value_enum, default_value = "e-eff")]
        metric: Metric,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a synthetic grid CSV and ground-truth JSON.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
        /// Grid CSV path; ground truth goes to `<stem>.truth.json` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Average of per-grid min-max normalised efficiency.
    Aggregate {
        #[arg(long, required = true, num_args = 1..)]
        grid: Vec<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CommandOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return CommandOutcome {
                exit_code: code,
                emitted_files: vec![],
                summary: text.lines().next().unwrap_or_default().to_string(),
            };
        }
    };
    let mut ctx = Ctx {
        stdout,
        stderr,
        emitted: Vec::new(),
    };
    match dispatch(cli.command, &mut ctx) {
        Ok(summary) => CommandOutcome {
            exit_code: 0,
            emitted_files: ctx.emitted,
            summary,
        },
        Err(e) => {
            let _ = writeln!(ctx.stderr, "error: {}", e.message);
            CommandOutcome {
                exit_code: match e.kind {
                    Failure::Validation => 1,
                    Failure::Computation => 2,
                },
                emitted_files: ctx.emitted,
                summary: e.message,
            }
        }
    }
}

struct Ctx<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
    emitted: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn warn(&mut self, msg: &str) {
        let _ = writeln!(self.stderr, "warning: {msg}");
    }

    fn write_file(&mut self, path: &Path, contents: &str) -> CliResult<()> {
        io::write_atomic(path, contents.as_bytes()).map_err(CliError::validation)?;
        self.emitted.push(path.to_path_buf());
        Ok(())
    }

    /// Sends rendered output to `--out` or stdout and returns the summary.
    fn emit(&mut self, output: &OutputArgs, rendered: String, summary: String) -> CliResult<String> {
        match &output.out {
            Some(path) => {
                self.write_file(path, &rendered)?;
                let _ = writeln!(self.stdout, "{summary}");
            }
            None => {
                let _ = write!(self.stdout, "{rendered}");
            }
        }
        Ok(summary)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn dispatch(cmd: Command, ctx: &mut Ctx<'_>) -> CliResult<String> {
    match cmd {
        Command::Flops {
            arch,
            arch_name,
            model,
            n_in,
            n_out,
            output,
        } => cmd_flops(ctx, arch.as_deref(), arch_name.as_deref(), model.as_deref(), n_in, n_out, &output),
        Command::Integrate {
            trace,
            t_start,
            t_end,
            output,
        } => cmd_integrate(ctx, &trace, t_start.zip(t_end), &output),
        Command::Fit {
            grid,
            family,
            space,
            table,
            output,
        } => cmd_fit(ctx, &grid, &family, space, table.as_deref(), &output),
        Command::Sweetspot {
            source,
            n_in,
            snap_grid,
            n_out_max,
            output,
        } => cmd_sweetspot(ctx, &source, &n_in, snap_grid.as_deref(), n_out_max, &output),
        Command::Sweep {
            source,
            n_in,
            n_out,
            metric,
            output,
        } => cmd_sweep(ctx, &source, n_in, n_out, metric, &output),
        Command::Synth { spec, seed, out } => cmd_synth(ctx, &spec, seed, &out),
        Command::Aggregate { grid, output } => cmd_aggregate(ctx, &grid, &output),
    }
}

fn load_arch(path: Option<&Path>, builtin: Option<&str>, model: Option<&str>) -> CliResult<ModelArch> {
    if let Some(name) = builtin {
        return arch_cost::find_builtin(name)
            .ok_or_else(|| CliError::validation(format!("no bundled architecture named `{name}`")));
    }
    let path = path.expect("clap enforces one source");
    let text = io::read_to_string(path)?;
    let parse_err = |e: serde_json::Error| CliError::validation(format!("{}: {e}", path.display()));
    let value: Value = serde_json::from_str(&text).map_err(parse_err)?;
    match value {
        Value::Array(_) => {
            let all: Vec<ModelArch> = serde_json::from_value(value).map_err(parse_err)?;
            select_named(all, model, |a| &a.name, path)
        }
        _ => serde_json::from_value(value).map_err(parse_err),
    }
}

fn select_named<T>(mut items: Vec<T>, name: Option<&str>, key: impl Fn(&T) -> &str, path: &Path) -> CliResult<T> {
    match name {
        Some(n) => {
            let n = n.to_ascii_lowercase();
            items
                .into_iter()
                .find(|i| key(i).to_ascii_lowercase() == n)
                .ok_or_else(|| CliError::validation(format!("{}: no entry named `{n}`", path.display())))
        }
        None if items.len() == 1 => Ok(items.remove(0)),
        None => Err(CliError::validation(format!(
            "{}: holds {} entries; pick one with --model",
            path.display(),
            items.len()
        ))),
    }
}

fn si(x: u128) -> String {
    const UNITS: [&str; 7] = ["", "K", "M", "G", "T", "P", "E"];
    let mut v = x as f64;
    let mut u = 0;
    while v >= 1000.0 && u < UNITS.len() - 1 {
        v /= 1000.0;
        u += 1;
    }
    format!("{}{}", fmt_sig(v, 4), UNITS[u])
}

fn cmd_flops(
    ctx: &mut Ctx<'_>,
    path: Option<&Path>,
    builtin: Option<&str>,
    model: Option<&str>,
    n_in: u64,
    n_out: u64,
    output: &OutputArgs,
) -> CliResult<String> {
    let arch = load_arch(path, builtin, model)?;
    for w in arch.warnings() {
        ctx.warn(&w);
    }
    let b = arch_cost::breakdown(&arch, SequenceShape::new(n_in, n_out)).map_err(CliError::computation)?;
    let rows = [
        ("prefill", b.prefill_flops, b.prefill_mem_ops),
        ("decode", b.decode_flops, b.decode_mem_ops),
        ("total", b.total_flops, b.total_mem_ops),
    ];
    let rendered = match output.format.unwrap_or(Format::Table) {
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                arch: &'a ModelArch,
                n_in: u64,
                n_out: u64,
                #[serde(flatten)]
                counts: arch_cost::CostBreakdown,
            }
            to_json(&Out {
                arch: &arch,
                n_in,
                n_out,
                counts: b,
            })
        }
        Format::Csv => {
            let mut s = String::from("phase,flops,mem_ops\n");
            for (p, f, m) in rows {
                s.push_str(&format!("{p},{f},{m}\n"));
            }
            s
        }
        Format::Table => {
            let mut t = vec![vec![
                "phase".to_string(),
                "flops".into(),
                "".into(),
                "mem_ops".into(),
                "".into(),
            ]];
            for (p, f, m) in rows {
                t.push(vec![p.into(), f.to_string(), si(f), m.to_string(), si(m)]);
            }
            ascii_table(&t)
        }
    };
    let summary = format!(
        "{} n_in={n_in} n_out={n_out}: total_flops={} total_mem_ops={}",
        if arch.name.is_empty() { "arch" } else { &arch.name },
        b.total_flops,
        b.total_mem_ops
    );
    ctx.emit(output, rendered, summary)
}

fn cmd_integrate(
    ctx: &mut Ctx<'_>,
    path: &Path,
    window: Option<(f64, f64)>,
    output: &OutputArgs,
) -> CliResult<String> {
    let tr = io::read_trace(path)?;
    for w in tr.warnings() {
        ctx.warn(&w);
    }
    let energy = trace::integrate_power(&tr, window).map_err(|e| match e {
        trace::TraceError::WindowOutOfRange { .. } | trace::TraceError::TooFewSamples(_) => {
            CliError::validation(e)
        }
        other => CliError::computation(other),
    })?;
    let rendered = match output.format.unwrap_or(Format::Table) {
        Format::Json => {
            #[derive(Serialize)]
            struct Out {
                energy_j: f64,
                samples: usize,
                window: Option<(f64, f64)>,
            }
            to_json(&Out {
                energy_j: energy,
                samples: tr.len(),
                window,
            })
        }
        Format::Csv => format!("energy_j\n{energy}\n"),
        Format::Table => format!("energy_j  {}\n", fmt_sig(energy, 6)),
    };
    ctx.emit(output, rendered, format!("{}: {} J", path.display(), fmt_sig(energy, 6)))
}

fn cmd_fit(
    ctx: &mut Ctx<'_>,
    grids: &[PathBuf],
    family: &str,
    space: SpaceArg,
    table_path: Option<&Path>,
    output: &OutputArgs,
) -> CliResult<String> {
    let families: Vec<ModelFamily> = if family.eq_ignore_ascii_case("all") {
        ModelFamily::ALL.to_vec()
    } else {
        vec![ModelFamily::parse(family)
            .ok_or_else(|| CliError::validation(format!("unknown family `{family}`")))?]
    };
    let space = match space {
        SpaceArg::PerToken => FitSpace::PerToken,
        SpaceArg::PerRequest => FitSpace::PerRequest,
    };
    let loaded = grids
        .iter()
        .map(|p| io::read_grid(p))
        .collect::<Result<Vec<_>, _>>()?;
    let comparisons: Vec<FamilyComparison> = loaded
        .iter()
        .map(|g| estimator::compare_families_with(g, &families, space, Execution::default()))
        .collect();

    for c in &comparisons {
        for f in &c.fits {
            if let Some(err) = &f.error {
                ctx.warn(&format!("{} {}: {err}", c.model_name, f.family));
            }
            if let Some(r) = &f.fit {
                let curved = matches!(f.family, ModelFamily::SweetspotFlops | ModelFamily::SweetspotFull);
                if curved && r.theta.coefficients[4] <= 0.0 {
                    ctx.warn(&format!(
                        "{} {}: theta4 <= 0, no sweet spot exists",
                        c.model_name, f.family
                    ));
                }
            }
        }
    }
    if comparisons.iter().all(|c| c.fits.iter().all(|f| f.fit.is_none())) {
        return Err(CliError::computation("no family could be fitted"));
    }

    let table = fit_text(&comparisons, &families);
    if let Some(p) = table_path {
        ctx.write_file(p, &table)?;
    }
    let rendered = match output.format.unwrap_or(Format::Json) {
        Format::Json => {
            if comparisons.len() == 1 {
                to_json(&comparisons[0])
            } else {
                to_json(&comparisons)
            }
        }
        Format::Csv => fit_csv(&comparisons),
        Format::Table => table,
    };
    let best: Vec<String> = comparisons
        .iter()
        .map(|c| {
            let b = c.best_family.map_or("-".to_string(), |f| {
                format!("{f} ({}%)", fmt_sig(c.get(f).unwrap().mape_percent, 6))
            });
            format!("{}: best {b}", c.model_name)
        })
        .collect();
    ctx.emit(output, rendered, best.join("; "))
}

fn fit_text(comparisons: &[FamilyComparison], families: &[ModelFamily]) -> String {
    let mut s = estimator::comparison_table(comparisons);
    if families.len() == 1 {
        for c in comparisons {
            if let Some(r) = c.get(families[0]) {
                s.push_str(&format!("{}\n", c.model_name));
                s.push_str(&estimator::coefficient_table(r));
                s.push('\n');
            }
        }
    }
    let full: Vec<&FitResult> = comparisons
        .iter()
        .filter_map(|c| c.get(ModelFamily::SweetspotFull))
        .collect();
    if full.len() > 1 {
        let n = full.len();
        let mut rows = vec![vec![
            "SWEETSPOT_FULL".to_string(),
            "p<0.001 (***)".into(),
            "p<0.01 (**)".into(),
            "p<0.05 (*)".into(),
            "p>=0.05 (n.s.)".into(),
        ]];
        for (i, counts) in estimator::significance_summary(&full).iter().enumerate() {
            let mut row = vec![format!("theta{i}")];
            row.extend(counts.iter().map(|&k| format!("{k}/{n}")));
            rows.push(row);
        }
        s.push_str(&ascii_table(&rows));
    }
    s
}

fn fit_csv(comparisons: &[FamilyComparison]) -> String {
    let mut s = String::from("model,family,n_obs,sse,mape_percent,theta0,theta1,theta2,theta3,theta4,theta5,error\n");
    for c in comparisons {
        for f in &c.fits {
            match (&f.fit, &f.error) {
                (Some(r), _) => {
                    let mut thetas: Vec<String> = r.theta.coefficients.iter().map(|v| v.to_string()).collect();
                    thetas.resize(6, String::new());
                    s.push_str(&format!(
                        "{},{},{},{},{},{},\n",
                        csv_field(&c.model_name),
                        f.family,
                        r.n_obs,
                        r.sse,
                        r.mape_percent,
                        thetas.join(",")
                    ));
                }
                (None, err) => s.push_str(&format!(
                    "{},{},,,,,,,,,,{}\n",
                    csv_field(&c.model_name),
                    f.family,
                    csv_field(err.as_deref().unwrap_or(""))
                )),
            }
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Named coefficient vectors extracted from any supported JSON document.
fn load_thetas(source: &ThetaSource) -> CliResult<Vec<(String, ThetaVector)>> {
    let preferred = match &source.family {
        Some(f) => Some(
            ModelFamily::parse(f).ok_or_else(|| CliError::validation(format!("unknown family `{f}`")))?,
        ),
        None => None,
    };
    let mut out = Vec::new();
    let label;
    if source.reference {
        label = "reference".to_string();
        for r in model_zoo::reference_thetas() {
            out.push((r.model, r.theta));
        }
    } else {
        let path = source.theta.as_deref().expect("clap enforces one source");
        label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = io::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        collect_thetas(&value, "", preferred, &mut out)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    }
    for (i, (name, _)) in out.iter_mut().enumerate() {
        if name.is_empty() {
            *name = format!("{label}#{i}");
        }
    }
    if out.is_empty() {
        return Err(CliError::validation("no coefficient vectors found"));
    }
    match &source.model {
        Some(m) => {
            let m = m.to_ascii_lowercase();
            let picked: Vec<_> = out.into_iter().filter(|(n, _)| n.to_ascii_lowercase() == m).collect();
            if picked.is_empty() {
                return Err(CliError::validation(format!("no entry named `{m}`")));
            }
            Ok(picked)
        }
        None => Ok(out),
    }
}

fn collect_thetas(
    v: &Value,
    name: &str,
    preferred: Option<ModelFamily>,
    out: &mut Vec<(String, ThetaVector)>,
) -> Result<(), String> {
    let err = |e: serde_json::Error| e.to_string();
    match v {
        Value::Array(items) => {
            for item in items {
                collect_thetas(item, name, preferred, out)?;
            }
            Ok(())
        }
        Value::Object(map) if map.contains_key("fits") => {
            let c: FamilyComparison = serde_json::from_value(v.clone()).map_err(err)?;
            let want = preferred.unwrap_or(ModelFamily::SweetspotFull);
            let r = c
                .get(want)
                .ok_or_else(|| format!("fit output for `{}` has no {want} fit", c.model_name))?;
            out.push((c.model_name.clone(), r.theta.clone()));
            Ok(())
        }
        Value::Object(map) if map.contains_key("model") && map.contains_key("theta") => {
            let r: ReferenceTheta = serde_json::from_value(v.clone()).map_err(err)?;
            out.push((r.model, r.theta));
            Ok(())
        }
        Value::Object(map) if map.contains_key("theta") => {
            let r: FitResult = serde_json::from_value(v.clone()).map_err(err)?;
            out.push((name.to_string(), r.theta));
            Ok(())
        }
        Value::Object(map) if map.contains_key("coefficients") => {
            let t: ThetaVector = serde_json::from_value(v.clone()).map_err(err)?;
            out.push((name.to_string(), t));
            Ok(())
        }
        _ => Err("unrecognised coefficient document".into()),
    }
}

#[derive(Debug, Serialize)]
struct SweetSpotRow {
    model: String,
    #[serde(flatten)]
    prediction: SweetSpotPrediction,
    brute_force: u64,
}

fn cmd_sweetspot(
    ctx: &mut Ctx<'_>,
    source: &ThetaSource,
    n_in: &[u64],
    snap: Option<&[u64]>,
    n_out_max: u64,
    output: &OutputArgs,
) -> CliResult<String> {
    if n_out_max == 0 {
        return Err(CliError::validation("--n-out-max must be >= 1"));
    }
    let thetas = load_thetas(source)?;
    let mut rows = Vec::new();
    for (name, theta) in &thetas {
        for &x in n_in {
            let prediction = model_zoo::sweet_spot_closed_form(theta, x, snap)
                .map_err(|e| CliError::computation(format!("{name}: {e}")))?;
            let brute_force = model_zoo::sweet_spot_brute_force(theta, x, n_out_max)
                .map_err(|e| CliError::computation(format!("{name}: {e}")))?;
            rows.push(SweetSpotRow {
                model: name.clone(),
                prediction,
                brute_force,
            });
        }
    }
    let rendered = match output.format.unwrap_or(Format::Table) {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from("model,n_in,n_out_star,n_out_star_rounded,snapped_to_grid,brute_force\n");
            for r in &rows {
                let p = &r.prediction;
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    csv_field(&r.model),
                    p.n_in,
                    p.n_out_star_continuous,
                    p.n_out_star_rounded,
                    p.snapped_to_grid.map_or(String::new(), |v| v.to_string()),
                    r.brute_force
                ));
            }
            s
        }
        Format::Table => {
            let mut t = vec![vec![
                "model".to_string(),
                "n_in".into(),
                "n_out*".into(),
                "rounded".into(),
                "snapped".into(),
                "brute_force".into(),
            ]];
            for r in &rows {
                let p = &r.prediction;
                t.push(vec![
                    r.model.clone(),
                    p.n_in.to_string(),
                    fmt_sig(p.n_out_star_continuous, 6),
                    p.n_out_star_rounded.to_string(),
                    p.snapped_to_grid.map_or("-".into(), |v| v.to_string()),
                    r.brute_force.to_string(),
                ]);
            }
            ascii_table(&t)
        }
    };
    ctx.emit(output, rendered, format!("{} sweet-spot rows", rows.len()))
}

fn render_heatmap(map: &Heatmap, format: Format) -> String {
    match format {
        Format::Csv => io::heatmap_csv(map),
        Format::Json => to_json(map),
        Format::Table => {
            let mut t = vec![{
                let mut h = vec!["n_in\\n_out".to_string()];
                h.extend(map.n_out_axis.iter().map(u64::to_string));
                h
            }];
            for (n_in, row) in map.n_in_axis.iter().zip(&map.values) {
                let mut r = vec![n_in.to_string()];
                r.extend(row.iter().map(|v| v.map_or("-".into(), |x| fmt_sig(x, 6))));
                t.push(r);
            }
            ascii_table(&t)
        }
    }
}

fn cmd_sweep(
    ctx: &mut Ctx<'_>,
    source: &ThetaSource,
    mut n_in: Vec<u64>,
    mut n_out: Vec<u64>,
    metric: Metric,
    output: &OutputArgs,
) -> CliResult<String> {
    let thetas = load_thetas(source)?;
    let (name, theta) = match thetas.len() {
        1 => thetas.into_iter().next().unwrap(),
        n => {
            return Err(CliError::validation(format!(
                "{n} coefficient vectors found; pick one with --model"
            )))
        }
    };
    for axis in [&mut n_in, &mut n_out] {
        axis.sort_unstable();
        axis.dedup();
    }
    let keys: Vec<(u64, u64)> = n_in
        .iter()
        .flat_map(|&i| n_out.iter().map(move |&o| (i, o)))
        .collect();
    let values = Execution::default()
        .map(&keys, |&(i, o)| {
            let shape = SequenceShape::new(i, o);
            match metric {
                Metric::ETok => model_zoo::predict_e_tok(&theta, shape),
                Metric::EEff => model_zoo::efficiency(&theta, shape),
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| match e {
            model_zoo::ModelError::ZeroOutputLength => CliError::validation(e),
            other => CliError::computation(other),
        })?;
    let mut it = values.into_iter();
    let map = Heatmap::from_fn(n_in, n_out, |_, _| it.next());
    let rendered = render_heatmap(&map, output.format.unwrap_or(Format::Csv));
    ctx.emit(
        output,
        rendered,
        format!("{name}: {}x{} sweep", map.n_in_axis.len(), map.n_out_axis.len()),
    )
}

fn cmd_synth(ctx: &mut Ctx<'_>, spec_path: &Path, seed: Option<u64>, out: &Path) -> CliResult<String> {
    let text = io::read_to_string(spec_path)?;
    let mut spec: SynthSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: {e}", spec_path.display())))?;
    if seed.is_some() {
        spec.seed = seed;
    }
    if spec.model_name.is_empty() {
        spec.model_name = out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    let result = synth::generate(&spec).map_err(|e| match e {
        synth::SynthError::InvalidSpec(_) | synth::SynthError::MissingSeed => CliError::validation(e),
        other => CliError::computation(other),
    })?;
    let truth_path = truth_path(out);
    ctx.write_file(out, &io::grid_csv(&result.grid))?;
    ctx.write_file(&truth_path, &to_json(&result.truth))?;
    let summary = format!(
        "wrote {} cells to {} and ground truth to {}",
        result.grid.len(),
        out.display(),
        truth_path.display()
    );
    let _ = writeln!(ctx.stdout, "{summary}");
    Ok(summary)
}

/// `dir/name.csv` -> `dir/name.truth.json`
pub fn truth_path(grid_path: &Path) -> PathBuf {
    let stem = grid_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "grid".into());
    grid_path.with_file_name(format!("{stem}.truth.json"))
}

fn cmd_aggregate(ctx: &mut Ctx<'_>, paths: &[PathBuf], output: &OutputArgs) -> CliResult<String> {
    let grids = paths
        .iter()
        .map(|p| io::read_grid(p))
        .collect::<Result<Vec<_>, _>>()?;
    let map = trace::aggregate_normalized(&grids).map_err(|e| match e {
        trace::TraceError::AxisMismatch(_) | trace::TraceError::EmptyGrid => CliError::validation(e),
        other => CliError::computation(other),
    })?;
    let rendered = render_heatmap(&map, output.format.unwrap_or(Format::Csv));
    ctx.emit(output, rendered, format!("aggregated {} grids", grids.len()))
}
