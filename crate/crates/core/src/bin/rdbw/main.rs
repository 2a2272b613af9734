//! `rdbw`: bandwidth selection and estimation for sharp RD designs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;

use rd_bandwidth::bandwidth::{BandwidthPair, SearchConfig, Selector};
use rd_bandwidth::designs::{design_truth, Design};
use rd_bandwidth::estimator::{estimate_with, EstimateOptions, RdEstimate};
use rd_bandwidth::kernels::KernelKind;
use rd_bandwidth::lpr::{RegressionSample, Sides};
use rd_bandwidth::simulate::stats::TrimMode;
use rd_bandwidth::simulate::theory::{efficiency_surface, rmse_star_table, EfficiencyCase};
use rd_bandwidth::simulate::{error_cdf, mean_function_errors, run_simulation_with_jobs, SimulationConfig};

/// Usage or validation failure.
const EXIT_USAGE: u8 = 2;
/// Estimation or simulation failure.
const EXIT_COMPUTE: u8 = 3;

enum Failure {
    Usage(String),
    Compute(String),
}

impl From<rd_bandwidth::Error> for Failure {
    fn from(e: rd_bandwidth::Error) -> Self {
        match e {
            rd_bandwidth::Error::InvalidInput(_) | rd_bandwidth::Error::ConfigInvalid(_) => Failure::Usage(e.to_string()),
            other => Failure::Compute(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "rdbw", version, about = "Two-sided bandwidth selection for sharp regression-discontinuity designs")]
struct Cli {
    /// Print progress and pilot warnings to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the jump at the cutoff from a CSV with columns y,x.
    Estimate(EstimateArgs),
    /// Monte-Carlo comparison of selectors on a simulation design.
    Simulate(SimulateArgs),
    /// Theoretical RMSE of each selector from the true design quantities.
    RmseStar(RmseStarArgs),
    /// AMSE efficiency ratios of the AFO bandwidths against IK and IND.
    Efficiency(EfficiencyArgs),
    /// True cutoff quantities of a design.
    Truth(TruthArgs),
    /// Draw a sample from a design and write it as y,x CSV.
    Sample(SampleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectorArg {
    Mmse,
    Afo,
    Ind,
    Ik,
}

impl From<SelectorArg> for Selector {
    fn from(s: SelectorArg) -> Self {
        match s {
            SelectorArg::Mmse => Selector::Mmse,
            SelectorArg::Afo => Selector::Afo,
            SelectorArg::Ind => Selector::Ind,
            SelectorArg::Ik => Selector::Ik,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Triangular,
    Epanechnikov,
    Uniform,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Triangular => KernelKind::Triangular,
            KernelArg::Epanechnikov => KernelKind::Epanechnikov,
            KernelArg::Uniform => KernelKind::Uniform,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TrimArg {
    Absolute,
    PerTail,
}

#[derive(Clone, Copy, ValueEnum)]
enum CaseArg {
    Negative,
    Equal,
}

#[derive(Args)]
struct DesignArgs {
    /// Built-in design id (1-4).
    #[arg(long, conflicts_with = "design_config")]
    design: Option<u8>,
    /// JSON file describing a custom design.
    #[arg(long)]
    design_config: Option<PathBuf>,
}

impl DesignArgs {
    fn load(&self) -> Result<Design, Failure> {
        match (&self.design, &self.design_config) {
            (Some(id), None) => Ok(Design::builtin(*id)?),
            (None, Some(p)) => Ok(Design::from_json_file(p)?),
            _ => Err(Failure::Usage("one of --design or --design-config is required".into())),
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV file with a header row naming columns y and x.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    cutoff: f64,
    #[arg(long, value_enum, default_value = "mmse")]
    selector: SelectorArg,
    #[arg(long, value_enum, default_value = "triangular")]
    kernel: KernelArg,
    /// Manual right bandwidth; requires --h0 and skips the selector.
    #[arg(long, requires = "h0")]
    h1: Option<f64>,
    /// Manual left bandwidth.
    #[arg(long, requires = "h1")]
    h0: Option<f64>,
    /// Lower end of the MMSE search interval (both sides).
    #[arg(long)]
    h_min: Option<f64>,
    /// Upper end of the MMSE search interval (both sides).
    #[arg(long)]
    h_max: Option<f64>,
    /// Multi-start grid points per axis for the MMSE search.
    #[arg(long, default_value_t = SearchConfig::DEFAULT_STARTS)]
    starts: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the result here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mmse,ind,ik")]
    selectors: Vec<SelectorArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 0.05)]
    trim: f64,
    #[arg(long, value_enum, default_value = "absolute")]
    trim_mode: TrimArg,
    #[arg(long, value_enum, default_value = "triangular")]
    kernel: KernelArg,
    /// Grid step of the absolute-error CDF table.
    #[arg(long, default_value_t = 0.0025)]
    cdf_step: f64,
    /// Output directory for summary.json, summary.csv, cdf.csv and mean_functions.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RmseStarArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mmse,ind,ik")]
    selectors: Vec<SelectorArg>,
    #[arg(long, value_enum, default_value = "triangular")]
    kernel: KernelArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EfficiencyArgs {
    #[arg(long, value_enum)]
    case: CaseArg,
    /// Single gamma (equal case) or gamma1 (negative case); omit for a grid.
    #[arg(long)]
    gamma: Option<f64>,
    /// Variance ratio for a single negative-case point.
    #[arg(long)]
    gamma2: Option<f64>,
    /// Grid points per axis, log-spaced on [grid-min, grid-max].
    #[arg(long, default_value_t = 50)]
    grid: usize,
    #[arg(long, default_value_t = 0.1)]
    grid_min: f64,
    #[arg(long, default_value_t = 10.0)]
    grid_max: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TruthArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, value_enum, default_value = "triangular")]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replication substream.
    #[arg(long, default_value_t = 0)]
    rep: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| Failure::Compute(format!("stdout: {e}")))
        }
    }
}

fn read_sample(path: &Path, cutoff: f64) -> Result<RegressionSample, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::Usage(format!("{}: missing column '{name}'", path.display())))
    };
    let (iy, ix) = (col("y")?, col("x")?);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse = |i: usize, name: &str| -> Result<f64, Failure> {
            let field = rec.get(i).unwrap_or("");
            field.parse::<f64>().map_err(|_| {
                Failure::Usage(format!(
                    "{}: line {line}: column '{name}' value '{field}' is not a number",
                    path.display()
                ))
            })
        };
        y.push(parse(iy, "y")?);
        x.push(parse(ix, "x")?);
    }
    RegressionSample::new(x, y, cutoff).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn pair<T: std::fmt::Display>(s: &Sides<T>) -> String {
    format!("<{}, {}>", s.right, s.left)
}

fn render_estimate(e: &RdEstimate, kernel: KernelKind) -> String {
    let mut s = String::new();
    s += &format!("selector      {} ({kernel} kernel)\n", e.bandwidths.selector);
    s += &format!("bandwidths    <{:.4}, {:.4}>\n", e.bandwidths.h1, e.bandwidths.h0);
    s += &format!("nonzero obs   {}\n", pair(&e.n_effective));
    s += &format!("tau_hat       {:.6}\n", e.tau_hat);
    match e.se {
        Some(se) => s += &format!("se            {se:.6}\n"),
        None => s += "se            n/a (pilot estimates unavailable)\n",
    }
    s += &format!("m1_hat        {:.6}\nm0_hat        {:.6}\n", e.m1_hat, e.m0_hat);
    s
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let sample = read_sample(&a.input, a.cutoff)?;
    let kernel = KernelKind::from(a.kernel);
    let search = match (a.h_min, a.h_max) {
        (None, None) if a.starts == SearchConfig::DEFAULT_STARTS => None,
        (lo, hi) => {
            let mut s = rd_bandwidth::bandwidth::search_config_default(&sample).unwrap_or(SearchConfig::uniform(1e-3, 1.0));
            if let Some(lo) = lo {
                s.h_min = Sides::new(lo, lo);
            }
            if let Some(hi) = hi {
                s.h_max = Sides::new(hi, hi);
            }
            s.starts = a.starts;
            s.validate()?;
            Some(s)
        }
    };
    let overrides = match (a.h1, a.h0) {
        (Some(h1), Some(h0)) => Some(BandwidthPair::manual(h1, h0)),
        _ => None,
    };
    let opts = EstimateOptions {
        selector: a.selector.into(),
        kernel,
        overrides,
        search,
        ..EstimateOptions::default()
    };
    let est = estimate_with(&sample, &opts)?;
    let text = match a.format {
        Format::Text => render_estimate(&est, kernel),
        Format::Json => serde_json::to_string_pretty(&est).expect("serializable") + "\n",
    };
    emit(&a.output, &text)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let design = a.design.load()?;
    let mut config = SimulationConfig::new(
        design,
        a.n,
        a.reps,
        a.selectors.iter().map(|&s| s.into()).collect(),
        a.seed,
    );
    config.trim = a.trim;
    config.trim_mode = match a.trim_mode {
        TrimArg::Absolute => TrimMode::Absolute,
        TrimArg::PerTail => TrimMode::PerTail,
    };
    config.kernel = a.kernel.into();
    config.validate()?;
    if !(a.cdf_step > 0.0) {
        return Err(Failure::Usage("--cdf-step must be positive".into()));
    }
    let run = run_simulation_with_jobs(&config, a.jobs)?;
    let s = &run.summary;

    let mut table = format!(
        "{}, n = {}, reps = {}, seed = {}, trim = {} ({:?})\n",
        s.design, s.n, s.reps, s.seed, s.trim, s.trim_mode
    );
    table += &format!(
        "{:<6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>7} {:>8} {:>7} {:>5}\n",
        "", "h1", "SD", "h0", "SD", "Bias", "RMSE", "Eff", "RMSE*", "Eff*", "fail"
    );
    for r in &s.selectors {
        table += &format!(
            "{:<6} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>7.3} {:>8.3} {:>7.3} {:>5}\n",
            r.selector.name().to_uppercase(),
            r.mean_h1,
            r.sd_h1,
            r.mean_h0,
            r.sd_h0,
            r.trimmed_bias,
            r.trimmed_rmse,
            r.eff,
            r.rmse_star.unwrap_or(f64::NAN),
            r.eff_star.unwrap_or(f64::NAN),
            r.failures
        );
    }
    print!("{table}");

    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let json = serde_json::to_string_pretty(s).expect("serializable") + "\n";
        fs::write(dir.join("summary.json"), json).map_err(|e| io_err(dir, e))?;

        let mut csv = String::from(
            "selector,mean_h1,sd_h1,mean_h0,sd_h0,trimmed_bias,trimmed_rmse,eff,rmse_star,eff_star,failures\n",
        );
        for r in &s.selectors {
            csv += &format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
                r.selector,
                r.mean_h1,
                r.sd_h1,
                r.mean_h0,
                r.sd_h0,
                r.trimmed_bias,
                r.trimmed_rmse,
                r.eff,
                opt(r.rmse_star),
                opt(r.eff_star),
                r.failures
            );
        }
        fs::write(dir.join("summary.csv"), csv).map_err(|e| io_err(dir, e))?;

        let cdf = error_cdf(&run, a.cdf_step);
        let mut out = String::from("t");
        for sel in &cdf.selectors {
            out += &format!(",{sel}");
        }
        out.push('\n');
        for (g, t) in cdf.grid.iter().enumerate() {
            out += &format!("{t:.6}");
            for col in &cdf.values {
                out += &format!(",{:.6}", col[g]);
            }
            out.push('\n');
        }
        fs::write(dir.join("cdf.csv"), out).map_err(|e| io_err(dir, e))?;

        let mut mf = String::from("selector,m1_bias,m1_rmse,m0_bias,m0_rmse\n");
        for m in mean_function_errors(&run) {
            mf += &format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                m.selector, m.m1_bias, m.m1_rmse, m.m0_bias, m.m0_rmse
            );
        }
        fs::write(dir.join("mean_functions.csv"), mf).map_err(|e| io_err(dir, e))?;
    }
    Ok(())
}

fn cmd_rmse_star(a: &RmseStarArgs) -> Result<(), Failure> {
    let design = a.design.load()?;
    if a.n < 1 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    let selectors: Vec<Selector> = a.selectors.iter().map(|&s| s.into()).collect();
    let rows = rmse_star_table(&design, a.n, &selectors, a.kernel.into())?;
    let mut out = String::from("selector,h1,h0,rmse_star,eff_star\n");
    for r in rows {
        out += &format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.selector, r.h1, r.h0, r.rmse_star, r.eff_star
        );
    }
    emit(&a.output, &out)
}

fn log_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![lo];
    }
    (0..m)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (m - 1) as f64).exp())
        .collect()
}

fn cmd_efficiency(a: &EfficiencyArgs) -> Result<(), Failure> {
    if !(a.grid_min > 0.0 && a.grid_max >= a.grid_min) || a.grid == 0 {
        return Err(Failure::Usage("grid needs 0 < grid-min <= grid-max and at least one point".into()));
    }
    let grid = log_grid(a.grid_min, a.grid_max, a.grid);
    let out = match a.case {
        CaseArg::Equal => {
            let g = a.gamma.map(|g| vec![g]).unwrap_or(grid);
            let rows = efficiency_surface(EfficiencyCase::EqualSecondDerivs, &g, &[])?;
            let mut out = String::from("gamma,afo_ik\n");
            for r in rows {
                out += &format!("{},{:.6}\n", r.gamma1, r.afo_ik);
            }
            out
        }
        CaseArg::Negative => {
            let g1 = a.gamma.map(|g| vec![g]).unwrap_or_else(|| grid.clone());
            let g2 = a.gamma2.map(|g| vec![g]).unwrap_or(grid);
            let rows = efficiency_surface(EfficiencyCase::NegativeProduct, &g1, &g2)?;
            let mut out = String::from("gamma1,gamma2,afo_ik,afo_ind\n");
            for r in rows {
                out += &format!(
                    "{},{},{:.6},{:.6}\n",
                    r.gamma1,
                    r.gamma2.unwrap_or(f64::NAN),
                    r.afo_ik,
                    r.afo_ind.unwrap_or(f64::NAN)
                );
            }
            out
        }
    };
    emit(&a.output, &out)
}

fn cmd_truth(a: &TruthArgs) -> Result<(), Failure> {
    let design = a.design.load()?;
    let t = design_truth(&design, a.kernel.into())?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&t).expect("serializable") + "\n",
        Format::Text => {
            let mut s = format!("{}\n", design.label());
            s += &format!("tau      {}\n", design.tau());
            s += &format!("f(c)     {}\nf'(c)    {}\n", t.f_c, t.f1_c);
            s += &format!("m2       {}\n", pair(&t.m2.map(|v| format!("{v:.2}"))));
            s += &format!("m3       {}\n", pair(&t.m3.map(|v| format!("{v:.2}"))));
            s += &format!("sigma2   {}\n", pair(&t.sigma2));
            s += &format!("b2       {}\n", pair(&t.b2.map(|v| format!("{v:.4}"))));
            s += &format!("p1, p0   {}, {}\n", t.p1, t.p0);
            s
        }
    };
    emit(&None, &text)
}

fn cmd_sample(a: &SampleArgs) -> Result<(), Failure> {
    let design = a.design.load()?;
    if a.n < 1 {
        return Err(Failure::Usage("--n must be positive".into()));
    }
    let s = design.sample_rep(a.n, a.seed, a.rep);
    let mut out = String::from("y,x\n");
    for (y, x) in s.y().iter().zip(s.x()) {
        out += &format!("{y:?},{x:?}\n");
    }
    emit(&a.output, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { LevelFilter::Info } else { LevelFilter::Error })
        .init();
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::RmseStar(a) => cmd_rmse_star(a),
        Command::Efficiency(a) => cmd_efficiency(a),
        Command::Truth(a) => cmd_truth(a),
        Command::Sample(a) => cmd_sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_COMPUTE)
        }
    }
}
