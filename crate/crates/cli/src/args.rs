use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lgmc", version, about = "Local and global motion compensation toolkit")]
pub struct Cli {
    /// Print error chains with debug detail.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-attention between query and key/value tensors.
    Attend(AttendArgs),
    /// Backward-warp a feature tensor by a flow field.
    Warp(WarpArgs),
    /// Code a sequence of frames and write reconstructions plus stats.
    Code(CodeArgs),
    /// Time both attention kernels and fit log-log slopes.
    Bench(BenchArgs),
    /// BD-rate of a test curve against an anchor curve, in percent.
    Bdrate(BdrateArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a parametric flow field.
    Synthflow(SynthflowArgs),
    /// Full-search block matching between two frames.
    Blockmatch(BlockmatchArgs),
    /// Bit-allocation report from per-frame stats, or BD-rate aggregation.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Vanilla,
    Efficient,
}

#[derive(Debug, Args)]
pub struct AttendArgs {
    /// Query tensor: L×C tokens or C×H×W map.
    pub query: PathBuf,
    /// Key/value tensor: L×C tokens or C×H×W map.
    pub keyvalue: PathBuf,
    #[arg(long, value_enum, default_value = "efficient")]
    pub variant: Variant,
    /// Output tensor path.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also write the L_q×L_k similarity matrix.
    #[arg(long)]
    pub materialize: bool,
    /// Similarity output path (default: `<out>.sim`).
    #[arg(long)]
    pub sim_out: Option<PathBuf>,
    /// Largest similarity matrix, in entries, that may be materialized.
    #[arg(long, default_value_t = lgmc_core::attention::DEFAULT_SIMILARITY_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    /// Feature tensor, C×H×W.
    pub feature: PathBuf,
    /// Middlebury .flo file with the same H×W.
    pub flow: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Both,
    LocalOnly,
    GlobalOnly,
    GlobalEncOnly,
    GlobalDecOnly,
}

#[derive(Debug, Args)]
pub struct CodeArgs {
    /// Frames to code (binary PPM), in order.
    #[arg(long = "frame", required = true)]
    pub frames: Vec<PathBuf>,
    /// Reference feature tensor C×H×W. Defaults to the first frame.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Flow per frame, or one flow reused for all. Defaults to zero flow.
    #[arg(long = "flow")]
    pub flows: Vec<PathBuf>,
    /// Directory for reconstructed frames.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Per-frame stats CSV (default: `<out-dir>/stats.csv`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: Mode,
    #[arg(long, default_value_t = 1024.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frames between reference resets.
    #[arg(long, default_value_t = 32)]
    pub intra_period: usize,
    /// Context channels per scale, e.g. `32,48,64`.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    /// Scale of the Gaussian rate model.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Token counts to time.
    #[arg(long = "ls", value_delimiter = ',', default_values_t = lgmc_core::bench::DEFAULT_LS)]
    pub ls: Vec<usize>,
    #[arg(short = 'C', long = "channels", default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 9)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Vanilla L×L buffer budget; accepts K, M, G suffixes.
    #[arg(long, default_value = "2G", value_parser = parse_bytes)]
    pub mem_budget: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Channel counts for an additional efficient-kernel sweep.
    #[arg(long, value_delimiter = ',')]
    pub channel_sweep: Option<Vec<usize>>,
    /// Token count used by the channel sweep.
    #[arg(long, default_value_t = 4096)]
    pub sweep_l: usize,
    /// Run kernels multi-threaded. Slopes are not fitted in this mode.
    #[arg(long)]
    pub parallel: bool,
    /// Timing CSV path.
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
    /// JSON summary path.
    #[arg(long, default_value = "bench_summary.json")]
    pub summary: PathBuf,
}

pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, mult) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let m = match c.to_ascii_uppercase() {
                'K' => 1u64 << 10,
                'M' => 1 << 20,
                'G' => 1 << 30,
                _ => return Err(format!("unknown size suffix {c:?}")),
            };
            (&s[..i], m)
        }
        _ => (s, 1),
    };
    digits
        .parse::<u64>()
        .ok()
        .and_then(|n| n.checked_mul(mult))
        .ok_or_else(|| format!("bad byte size {s:?}"))
}

#[derive(Debug, Args)]
pub struct BdrateArgs {
    /// Anchor curve CSV (rate_bpp,quality).
    pub anchor: PathBuf,
    /// Test curve CSV (rate_bpp,quality).
    pub test: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradKernel {
    Softmax,
    Matmul,
    Warp,
    EfficientAttention,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub kernel: GradKernel,
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Use an all-zero upstream gradient.
    #[arg(long)]
    pub zero_upstream: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotionKind {
    Translation,
    Rotation,
    Zoom,
}

#[derive(Debug, Args)]
pub struct SynthflowArgs {
    #[arg(long, value_enum)]
    pub motion: MotionKind,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub u: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub v: f64,
    /// Rotation angle in radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BlockmatchArgs {
    /// Reference frame (PGM/PPM or 1×H×W tensor).
    pub reference: PathBuf,
    /// Current frame (PGM/PPM or 1×H×W tensor).
    pub current: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    #[arg(long, default_value_t = 8)]
    pub range: usize,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["stats", "bd_table"])))]
pub struct ReportArgs {
    /// Per-frame stats CSV.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Second stats CSV for side-by-side deltas (first minus second).
    #[arg(long, requires = "stats")]
    pub compare: Option<PathBuf>,
    /// CSV with class,sequence,bd_rate rows to aggregate.
    #[arg(long)]
    pub bd_table: Option<PathBuf>,
    /// Report CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Whitespace plot table output path.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}
