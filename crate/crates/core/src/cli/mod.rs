//! Command-line front end: `check`, `bench` and `sweep`.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or validation error.

mod checks;
mod measure;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::control::{default_tree, enumerate_trees, parse_tree, validate, ControlError, ControlNode, OpKind, Problem};
use crate::scalar::DType;
use crate::tensor::ContractionSpec;

pub use checks::{suites, Suite, GROUPS};
pub use measure::{
    cholesky_residual, flops, ltlt_residual, lu_residual, measure, measure_contract, orthogonality, qr_residual, rng, skew,
    spd, uniform, Dims, MeasureError, SweepRow, HEADER, ORACLE_CAP,
};

/// Set to a suite name (or `all`) to make that suite fail; exercises the
/// failure path of `check`.
pub const FAULT_ENV: &str = "FAMLIES_INJECT_FAULT";

#[derive(Parser, Debug)]
#[command(name = "famlies", version, about = "Dense linear algebra families driven by control trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the invariant suites, optionally only those of one group.
    Check { filter: Option<String> },
    /// Time one configuration and print a CSV row.
    Bench(BenchArgs),
    /// Time every enumerated tree and write CSV rows.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// cholesky, lu, qr, ltlt, gemm or contract
    #[arg(long)]
    pub op: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "f64")]
    pub dtype: DType,
    /// Control-tree JSON file; the op's default tree otherwise.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Overrides `ways` on every level of the tree.
    #[arg(long)]
    pub ways: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Contraction spec for `--op contract`; every label gets extent `n`.
    #[arg(long)]
    pub einsum: Option<String>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub op: OpKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "f64")]
    pub dtype: DType,
    /// Comma-separated variant numbers; all of the op's variants by default.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<u8>,
    /// Comma-separated block sizes (kc values for gemm).
    #[arg(long, value_delimiter = ',', default_value = "64,128")]
    pub bs: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Comma-separated worker counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub ways: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Check { filter } => cmd_check(filter.as_deref(), out, err),
        Command::Bench(a) => cmd_bench(&a, out, err),
        Command::Sweep(a) => cmd_sweep(&a, out, err),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(err, "error: {e}");
        2
    })
}

type CmdResult = Result<i32, String>;

pub fn cmd_check(filter: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    if let Some(f) = filter {
        if !GROUPS.contains(&f) {
            writeln!(err, "error: unknown suite group `{f}` (expected one of {})", GROUPS.join(", ")).ok();
            return Ok(2);
        }
    }
    let fault = std::env::var(FAULT_ENV).ok();
    let mut failed = vec![];
    for s in suites().into_iter().filter(|s| filter.is_none_or(|f| f == s.group)) {
        let mut res = (s.run)();
        if fault.as_deref().is_some_and(|f| f == "all" || f == s.name || f == s.group) {
            res = Err(format!("fault injected via {FAULT_ENV}"));
        }
        match res {
            Ok(()) => writeln!(out, "PASS {}", s.name),
            Err(e) => {
                failed.push(s.name);
                writeln!(out, "FAIL {}: {e}", s.name)
            }
        }
        .map_err(|e| e.to_string())?;
    }
    if failed.is_empty() {
        Ok(0)
    } else {
        writeln!(err, "{} suite(s) failed: {}", failed.len(), failed.join(", ")).ok();
        Ok(1)
    }
}

fn load_tree(path: &PathBuf) -> Result<ControlNode, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_tree(&text).map_err(|e| match e {
        ControlError::Invalid(vs) => vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"),
        e => e.to_string(),
    })
}

fn dims_for(op: OpKind, n: usize, m: Option<usize>, k: Option<usize>) -> Dims {
    let m = m.unwrap_or(n);
    Dims { m: if op == OpKind::Qr || op == OpKind::Lu || op == OpKind::Gemm { m } else { n }, n, k: k.unwrap_or(n) }
}

fn check_repeats(r: usize) -> Result<(), String> {
    if r < 3 {
        Err(format!("--repeats must be at least 3, got {r}"))
    } else {
        Ok(())
    }
}

fn measure_any(op: OpKind, dtype: DType, dims: Dims, tree: &ControlNode, repeats: usize, seed: u64) -> Result<SweepRow, String> {
    match dtype {
        DType::F32 => measure::<f32>(op, dims, tree, repeats, seed),
        DType::F64 => measure::<f64>(op, dims, tree, repeats, seed),
    }
    .map_err(|e| e.to_string())
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    check_repeats(a.repeats)?;
    if a.op == "contract" {
        let spec: ContractionSpec = a
            .einsum
            .as_deref()
            .ok_or("--op contract needs --einsum")?
            .parse()
            .map_err(|e: crate::tensor::TensorError| e.to_string())?;
        let ways = a.ways.unwrap_or(1);
        let row = match a.dtype {
            DType::F32 => measure_contract::<f32>(&spec, a.n, ways, a.repeats, a.seed),
            DType::F64 => measure_contract::<f64>(&spec, a.n, ways, a.repeats, a.seed),
        }
        .map_err(|e| e.to_string())?;
        writeln!(out, "{HEADER}\n{}", row.to_csv()).map_err(|e| e.to_string())?;
        return Ok(0);
    }
    let op: OpKind = a.op.parse()?;
    let mut tree = match &a.tree {
        Some(p) => load_tree(p)?,
        None => default_tree(op, a.n, a.dtype),
    };
    if let Some(w) = a.ways {
        tree = tree.with_ways(w);
    }
    let dims = dims_for(op, a.n, a.m, a.k);
    if let Err(vs) = validate(&tree, &Problem { op, m: dims.m, n: dims.n, k: dims.k }) {
        for v in vs {
            writeln!(err, "invalid tree: {v}").ok();
        }
        return Ok(2);
    }
    let row = measure_any(op, a.dtype, dims, &tree, a.repeats, a.seed)?;
    writeln!(out, "{HEADER}\n{}", row.to_csv()).map_err(|e| e.to_string())?;
    Ok(0)
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write, _err: &mut dyn Write) -> CmdResult {
    check_repeats(a.repeats)?;
    let variants: Vec<u8> = if a.variants.is_empty() { (1..=a.op.variant_count()).collect() } else { a.variants.clone() };
    let trees = enumerate_trees(a.op, &variants, &a.bs, a.depth).map_err(|e| e.to_string())?;
    if trees.is_empty() || a.ways.is_empty() {
        return Err("the enumeration is empty".into());
    }
    if let Some(&w) = a.ways.iter().find(|&&w| w == 0) {
        return Err(format!("ways must be >= 1, got {w}"));
    }
    let dims = dims_for(a.op, a.n, a.m, a.k);
    let mut file = match &a.out {
        Some(p) => Some(fs::File::create(p).map_err(|e| format!("cannot write {}: {e}", p.display()))?),
        None => None,
    };
    let sink: &mut dyn Write = match file.as_mut() {
        Some(f) => f,
        None => out,
    };
    writeln!(sink, "{HEADER}").map_err(|e| e.to_string())?;
    for tree in &trees {
        for &w in &a.ways {
            let t = tree.clone().with_ways(w);
            if let Err(vs) = validate(&t, &Problem { op: a.op, m: dims.m, n: dims.n, k: dims.k }) {
                let msg: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                return Err(format!("tree {} is invalid: {}", t.descriptor(), msg.join("; ")));
            }
            let row = measure_any(a.op, a.dtype, dims, &t, a.repeats, a.seed)?;
            writeln!(sink, "{}", row.to_csv()).map_err(|e| e.to_string())?;
        }
    }
    sink.flush().map_err(|e| e.to_string())?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (vec![], vec![]);
        let code = run(std::iter::once("famlies").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_cli(&["bench", "--op", "gemm"]).0, 2);
        assert_eq!(run_cli(&["bench", "--op", "nope", "--n", "4"]).0, 2);
        assert_eq!(run_cli(&["bench", "--op", "gemm", "--n", "4", "--repeats", "2"]).0, 2);
        assert_eq!(run_cli(&["check", "nonsense"]).0, 2);
        assert_eq!(run_cli(&["--help"]).0, 0);
    }

    #[test]
    fn bench_prints_header_and_row() {
        let (code, out, _) = run_cli(&["bench", "--op", "lu", "--n", "24", "--m", "30"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert!(lines[1].starts_with("lu,24,unb,"));
    }

    #[test]
    fn contract_bench() {
        let (code, out, err) = run_cli(&["bench", "--op", "contract", "--einsum", "abk,kc->abc", "--n", "4"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.lines().nth(1).unwrap().starts_with("contract,4,abk;kc->abc,"));
    }

    #[test]
    fn gemm_sweep_over_kc() {
        let (code, out, _) = run_cli(&["sweep", "--op", "gemm", "--n", "32", "--bs", "128,256"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 3);
        assert!(out.contains("gemm[kc=128]") && out.ends_with('\n'));
    }
}
