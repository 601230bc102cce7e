//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self as stdio, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use peos_core::{Dataset, HnswIndex, HnswParams, Metric, RoutingConfig, RoutingMode, SearchParams};

use crate::bench::{self, BenchmarkSpec};
use crate::error::{Error, Result};
use crate::{data, format, io};

/// Exit code of a failed audit.
pub const EXIT_AUDIT_FAIL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "peos", version, about = "HNSW search with probabilistic routing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build an index and write it to --out.
    Build(BuildArgs),
    /// Attach (or replace) routing metadata of a saved index.
    Attach(AttachArgs),
    /// Search a saved index.
    Search(SearchArgs),
    /// Recall/throughput sweep, written as CSV.
    Bench(BenchArgs),
    /// Measure how often improving neighbors pass their routing test.
    Audit(AuditArgs),
    /// Print a summary of a saved index.
    Stats(StatsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Base vectors (.fvecs). Synthetic Gaussian data when absent.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Query vectors (.fvecs). Synthetic Gaussian queries when absent.
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Ground truth (.ivecs); computed and written here when missing.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "l2")]
    pub metric: Metric,
    #[arg(long, default_value_t = data::DEFAULT_N)]
    pub n: usize,
    #[arg(long, default_value_t = data::DEFAULT_NQ)]
    pub nq: usize,
    #[arg(long, default_value_t = data::DEFAULT_DIM)]
    pub dim: usize,
}

#[derive(Args, Debug, Clone)]
pub struct GraphArgs {
    #[arg(long = "M", default_value_t = 32)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub efc: usize,
    /// Reorder dimensions so subspaces carry balanced energy.
    #[arg(long)]
    pub permute: bool,
}

#[derive(Args, Debug, Clone)]
pub struct RoutingArgs {
    /// Comma-separated list of peos, rceos, simhash, none.
    #[arg(long, value_delimiter = ',')]
    pub routing: Option<Vec<RoutingMode>>,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub epsilon: Vec<f64>,
    /// Number of subspaces for PEOs (default 8).
    #[arg(long = "L")]
    pub l: Option<usize>,
    /// Projection vectors per subspace.
    #[arg(long = "m-proj", default_value_t = 128)]
    pub m_proj: usize,
    #[arg(long, default_value_t = 64)]
    pub simhash_bits: usize,
    /// One-byte norms and no residual term (PEOs only).
    #[arg(long)]
    pub compact: bool,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub routing: RoutingArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttachArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub routing: RoutingArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output path; the input index is overwritten when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Routing to search with; the attached routing when absent.
    #[arg(long)]
    pub routing: Option<RoutingMode>,
    /// Overrides the attached epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub efs: Vec<usize>,
    #[arg(long = "K", default_value_t = 10)]
    pub k: usize,
    /// Write result ids of the last efs value as .ivecs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub routing: RoutingArgs,
    /// Prebuilt index; built from the data arguments when absent.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100,200,500")]
    pub efs: Vec<usize>,
    #[arg(long = "K", default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub routing: RoutingArgs,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub efs: usize,
    #[arg(long = "K", default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub index: PathBuf,
}

impl RoutingArgs {
    /// Cartesian product of modes and epsilons; `none` appears once.
    pub fn configs(&self, default: &[RoutingMode]) -> Result<Vec<RoutingConfig>> {
        let modes = self.routing.as_deref().unwrap_or(default);
        if self.compact && !modes.contains(&RoutingMode::Peos) {
            return Err(Error::Usage("--compact applies to PEOs only".into()));
        }
        let mut out = Vec::new();
        for &mode in modes {
            let base = match mode {
                RoutingMode::None => {
                    out.push(RoutingConfig::none());
                    continue;
                }
                RoutingMode::Peos => {
                    RoutingConfig { compact: self.compact, ..RoutingConfig::peos(0.0, self.l.unwrap_or(8), self.m_proj) }
                }
                RoutingMode::Rceos => {
                    if let Some(l) = self.l.filter(|&l| l != 1) {
                        return Err(Error::Usage(format!("RCEOs uses a single subspace; got --L {l}")));
                    }
                    RoutingConfig::rceos(0.0, self.m_proj)
                }
                RoutingMode::SimHash => RoutingConfig::simhash(0.0, self.simhash_bits),
            };
            for &eps in &self.epsilon {
                let cfg = RoutingConfig { eps, ..base };
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}

impl GraphArgs {
    fn params(&self, seed: u64) -> HnswParams {
        HnswParams { m: self.m, efc: self.efc, seed }
    }
}

struct Workload {
    base: Dataset,
    queries: Dataset,
}

fn load_data(d: &DataArgs, seed: u64) -> Result<Workload> {
    let base = match &d.base {
        Some(p) => io::read_fvecs(p)?,
        None => data::gaussian(d.n, d.dim, seed, peos_core::rng::stream::DATA)?,
    };
    let queries = match &d.query {
        Some(p) => io::read_fvecs(p)?,
        None => data::gaussian(d.nq, base.dim(), seed, peos_core::rng::stream::QUERIES)?,
    };
    if queries.dim() != base.dim() {
        return Err(Error::Usage(format!("queries have dimension {}, base has {}", queries.dim(), base.dim())));
    }
    Ok(Workload { base, queries })
}

fn build_index(w: &Workload, metric: Metric, g: &GraphArgs, seed: u64, parts: usize) -> Result<HnswIndex> {
    let t = Instant::now();
    let mut idx = HnswIndex::build(&w.base, metric, g.params(seed))?;
    eprintln!("built {} points in {:.1}s", idx.len(), t.elapsed().as_secs_f64());
    if g.permute {
        idx.permute_dimensions(parts)?;
    }
    Ok(idx)
}

fn obtain_index(path: Option<&Path>, w: &Workload, d: &DataArgs, g: &GraphArgs, seed: u64, parts: usize) -> Result<HnswIndex> {
    match path {
        Some(p) => {
            let idx = format::load_index(p)?;
            if idx.dim() != w.queries.dim() {
                return Err(Error::Usage(format!("index has dimension {}, queries {}", idx.dim(), w.queries.dim())));
            }
            Ok(idx)
        }
        None => build_index(w, d.metric, g, seed, parts),
    }
}

fn build(a: BuildArgs) -> Result<i32> {
    let cfgs = match &a.routing.routing {
        Some(_) => a.routing.configs(&[])?,
        None => Vec::new(),
    };
    let w = load_data(&a.data, a.seed)?;
    let mut idx = build_index(&w, a.data.metric, &a.graph, a.seed, a.routing.l.unwrap_or(8))?;
    if let Some(cfg) = cfgs.iter().find(|c| c.mode != RoutingMode::None) {
        idx.attach_routing(*cfg, a.seed)?;
    }
    format::save_index(&a.out, &idx)?;
    println!("wrote {} ({} points, {} base edges)", a.out.display(), idx.len(), idx.base_edge_count());
    Ok(0)
}

fn attach(a: AttachArgs) -> Result<i32> {
    let cfgs = a.routing.configs(&[RoutingMode::Peos])?;
    let [cfg] = cfgs.as_slice() else {
        return Err(Error::Usage("attach takes exactly one routing mode and epsilon".into()));
    };
    let mut idx = format::load_index(&a.index)?;
    if cfg.mode == RoutingMode::None {
        return Err(Error::Usage("nothing to attach for routing `none`".into()));
    }
    let t = Instant::now();
    idx.attach_routing(*cfg, a.seed)?;
    let out = a.out.as_ref().unwrap_or(&a.index);
    format::save_index(out, &idx)?;
    println!("attached {} to {} edges in {:.1}s", cfg.mode, idx.base_edge_count(), t.elapsed().as_secs_f64());
    Ok(0)
}

fn search(a: SearchArgs) -> Result<i32> {
    let idx = format::load_index(&a.index)?;
    let queries = io::read_fvecs(&a.query)?;
    let truth = a.truth.as_ref().map(io::read_ivecs).transpose()?;
    let cfg = match a.routing {
        Some(RoutingMode::None) => RoutingConfig::none(),
        Some(mode) => {
            let attached = idx.routing_config().filter(|c| c.mode == mode);
            let attached = attached.ok_or_else(|| Error::Usage(format!("index has no {mode} metadata attached")))?;
            RoutingConfig { eps: a.epsilon.unwrap_or(attached.eps), ..attached }
        }
        None => idx.routing_config().unwrap_or_else(RoutingConfig::none),
    };
    let mut last = None;
    for &efs in &a.efs {
        let run = bench::run_queries(&idx, &queries, SearchParams::new(a.k, efs, cfg))?;
        let nq = queries.len() as f64;
        let mut line = format!(
            "mode={} efs={efs} K={} qps={:.1} dist_comps={:.1}",
            cfg.mode,
            a.k,
            nq / run.secs.max(1e-12),
            run.stats.total_dist_computations() as f64 / nq
        );
        if let Some(t) = &truth {
            line += &format!(" recall={:.4}", bench::compute_recall(&run.ids, t, a.k)?);
        }
        println!("{line}");
        last = Some(run);
    }
    if let (Some(out), Some(run)) = (&a.out, last) {
        io::write_ivecs(out, &run.ids)?;
    }
    Ok(0)
}

fn bench_cmd(a: BenchArgs) -> Result<i32> {
    let cfgs = a.routing.configs(&[RoutingMode::None, RoutingMode::Peos])?;
    let w = load_data(&a.data, a.seed)?;
    let truth = bench::ground_truth(&w.base, &w.queries, a.k, a.data.metric, a.data.truth.as_deref())?;
    let mut idx = obtain_index(a.index.as_deref(), &w, &a.data, &a.graph, a.seed, a.routing.l.unwrap_or(8))?;
    let spec = BenchmarkSpec { routings: cfgs, efs: a.efs.clone(), k: a.k, repetitions: a.repetitions, routing_seed: a.seed };
    let rows = bench::run_sweep(&mut idx, &w.queries, &truth, &spec)?;
    match &a.out {
        Some(p) => bench::write_csv(&rows, BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))?,
        None => bench::write_csv(&rows, stdio::stdout().lock())?,
    }
    Ok(0)
}

fn audit(a: AuditArgs) -> Result<i32> {
    let cfgs = a.routing.configs(&[RoutingMode::Peos])?;
    let [cfg] = cfgs.as_slice() else {
        return Err(Error::Usage("audit takes exactly one routing mode and epsilon".into()));
    };
    let w = load_data(&a.data, a.seed)?;
    let mut idx = obtain_index(a.index.as_deref(), &w, &a.data, &a.graph, a.seed, cfg.parts)?;
    if idx.routing_config().map_or(true, |c| RoutingConfig { eps: cfg.eps, ..c } != *cfg) {
        idx.attach_routing(*cfg, a.seed)?;
    }
    let r = bench::audit_guarantee(&idx, &w.queries, *cfg, a.k, a.efs)?;
    println!(
        "{} mode={} epsilon={} evaluated={} true_positives={} passed={} rate={:.4} bound={:.4}",
        if r.pass { "PASS" } else { "FAIL" },
        cfg.mode,
        cfg.eps,
        r.evaluated,
        r.true_positives,
        r.tp_passed,
        r.rate,
        r.bound
    );
    Ok(if r.pass { 0 } else { EXIT_AUDIT_FAIL })
}

fn stats(a: StatsArgs) -> Result<i32> {
    let idx = format::load_index(&a.index)?;
    let p = idx.params();
    println!("metric      {}", idx.metric());
    println!("points      {}", idx.len());
    println!("dim         {}", idx.dim());
    println!("M / efc     {} / {}", p.m, p.efc);
    println!("levels      {}", idx.levels());
    println!("base edges  {} (mean degree {:.2})", idx.base_edge_count(), idx.base_edge_count() as f64 / idx.len() as f64);
    println!("reachable   {}", idx.reachable_count());
    match idx.plan() {
        Some(plan) => println!("permutation {} subspaces", plan.parts()),
        None => println!("permutation none"),
    }
    match idx.routing_config() {
        Some(c) => {
            println!(
                "routing     {} eps={} L={} m={} compact={} simhash_bits={}",
                c.mode, c.eps, c.parts, c.m, c.compact, c.simhash_bits
            )
        }
        None => println!("routing     none"),
    }
    Ok(0)
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Build(a) => build(a),
        Command::Attach(a) => attach(a),
        Command::Search(a) => search(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Audit(a) => audit(a),
        Command::Stats(a) => stats(a),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
