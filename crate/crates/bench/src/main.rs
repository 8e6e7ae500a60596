use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egp_bench::compare::{self, McCompare};
use egp_bench::config::SimConfig;
use egp_bench::methods::{self, MethodId, MethodParams};
use egp_bench::scaling::{self, Vary};
use egp_bench::sweep::{self, RunOptions};
use egp_bench::{records, Error, Result};
use egp_core::datagen::{self, Dataset};
use egp_core::Rng;

#[derive(Parser)]
#[command(name = "egp", version, about = "Exact gradient pruning benchmarks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run description
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, env = "EGP_THREADS")]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Comma-separated method ids
    #[arg(long, global = true, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Replications (runs for mc-compare, repetitions for scaling)
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Write zero wall times so repeated runs give identical files
    #[arg(long, global = true)]
    no_timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep settings × ρ × SNR × replications × methods
    Bench {
        /// Only recompute aggregate.csv from an existing raw CSV
        #[arg(long)]
        from_raw: Option<PathBuf>,
    },
    /// EGP against Monte Carlo gradient estimators on one dataset
    McCompare {
        /// M1 or M2
        #[arg(long)]
        setting: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Wall time while n or p grows
    Scaling {
        /// n or p
        #[arg(long)]
        vary: Option<String>,
        /// Comma-separated, strictly increasing
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        /// Size of the dimension that stays fixed
        #[arg(long)]
        fixed: Option<usize>,
    },
    /// Write one dataset file
    Gen {
        /// S1..S4, M1 or M2
        #[arg(long, default_value = "S1")]
        setting: String,
        #[arg(long, default_value_t = 0.0)]
        rho: f64,
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
    },
    /// Fit one method to a dataset file and print the coefficients
    Solve {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "egp")]
        method: String,
    },
}

impl Common {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions { threads: self.threads.unwrap_or(0), timing: !self.no_timing }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, common: &Common) -> Result<()> {
    let mut cfg = common.config()?;
    let opts = common.options();
    let out = &common.out;
    match command {
        Command::Bench { from_raw } => {
            let raw = match from_raw {
                Some(path) => records::read_records(&path)?,
                None => {
                    if let Some(m) = &common.methods {
                        cfg.methods = m.clone();
                    }
                    cfg.replications = common.reps.unwrap_or(cfg.replications);
                    sweep::run_sweep(&cfg, opts)?
                }
            };
            let (raw_path, agg_path, aggs) = sweep::write_outputs(out, &raw)?;
            println!("{} rows -> {}", raw.len(), raw_path.display());
            println!("{} aggregates -> {}", aggs.len(), agg_path.display());
        }
        Command::McCompare { setting, epochs } => {
            let mc = &mut cfg.mc;
            if let Some(m) = &common.methods {
                mc.methods = m.clone();
            }
            mc.runs = common.reps.unwrap_or(mc.runs);
            mc.setting = setting.unwrap_or(mc.setting.clone());
            mc.epochs = epochs.unwrap_or(mc.epochs);
            let res = compare::run_mc_compare(mc, cfg.seed, opts)?;
            print_summary(&res);
            for p in res.write(out)? {
                println!("-> {}", p.display());
            }
        }
        Command::Scaling { vary, grid, fixed } => {
            let sc = &mut cfg.scaling;
            if let Some(m) = &common.methods {
                sc.methods = m.clone();
            }
            sc.reps = common.reps.unwrap_or(sc.reps);
            sc.vary = vary.unwrap_or(sc.vary.clone());
            sc.grid = grid.unwrap_or(sc.grid.clone());
            sc.fixed = fixed.unwrap_or(sc.fixed);
            let raw = scaling::run_scaling(&cfg, opts)?;
            let rows = scaling::summarize(&raw, Vary::parse(&cfg.scaling.vary)?);
            println!("{:<26} {:>6} {:>6} {:>12} {:>8}", "method", "n", "p", "median_s", "ratio");
            for r in &rows {
                let ratio = r.ratio.map(|v| format!("{v:.2}")).unwrap_or_default();
                println!("{:<26} {:>6} {:>6} {:>12.4} {:>8}", r.method, r.n, r.p, r.median_seconds, ratio);
            }
            for p in scaling::write_outputs(out, &raw, &rows)? {
                println!("-> {}", p.display());
            }
        }
        Command::Gen { setting, rho, snr } => {
            let ds = generate(&setting, rho, snr, cfg.seed)?;
            std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
            let path = out.join(format!("{setting}-rho{rho}-snr{snr}-seed{}.egpd", cfg.seed));
            let file = std::fs::File::create(&path).map_err(|e| io(&path, e))?;
            datagen::write_dataset(&ds, std::io::BufWriter::new(file)).map_err(|e| io(&path, e))?;
            println!("n={} p={} s={} sigma2={} -> {}", ds.n(), ds.p(), ds.s, ds.sigma2, path.display());
        }
        Command::Solve { data, method } => solve(&cfg, &data, &method, opts, out)?,
    }
    Ok(())
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn generate(setting: &str, rho: f64, snr: f64, seed: u64) -> Result<Dataset> {
    let mut rng = Rng::new(seed, 0);
    if setting.to_ascii_uppercase().starts_with('M') {
        return Ok(datagen::generate_mc(&compare::mc_setting(setting)?, &mut rng)?);
    }
    Ok(datagen::generate_cs(&datagen::lookup_setting(setting, rho, snr)?, &mut rng)?)
}

fn solve(cfg: &SimConfig, data: &Path, method: &str, opts: RunOptions, out: &Path) -> Result<()> {
    let file = std::fs::File::open(data).map_err(|e| io(data, e))?;
    let ds = datagen::read_dataset(std::io::BufReader::new(file)).map_err(|e| io(data, e))?;
    let id = MethodId::parse(method)?;
    let params = MethodParams::from_config(cfg)?;
    let (train, val) = datagen::validation_split(&ds, cfg.validation_rows, &mut Rng::new(cfg.seed, 1));
    let res = methods::run(id, &train, &val, &params, &mut Rng::new(cfg.seed, 2))?;
    let wall = if opts.timing { res.wall_seconds } else { 0.0 };
    let name = data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let rec = records::evaluate(id.label(), &name, &ds, &res.coef, cfg.loss_lambda, res.epochs, wall)?;
    println!("active set: {:?}", res.coef.active_set());
    for i in res.coef.active_set() {
        println!("  theta[{i}] = {}", res.coef.values()[i]);
    }
    println!("rte={} asre={} re={} loss_norm={} epochs={}", rec.rte, rec.asre, rec.re, rec.loss_norm, rec.epochs);
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let path = out.join("solve.csv");
    records::write_records(&path, &[rec])?;
    println!("-> {}", path.display());
    Ok(())
}

fn print_summary(res: &McCompare) {
    println!("{:<14} {:>8} {:>10} {:>12} {:>6} {:>8} {:>10}", "method", "RE", "loss/n", "loss", "ASRE", "EUC", "TUC");
    for s in res.summary() {
        println!(
            "{:<14} {:>8.3} {:>10.4} {:>12.4} {:>6.2} {:>8.1} {:>10.4}",
            s.method, s.re, s.loss_norm, s.loss_raw, s.asre_median, s.euc, s.tuc
        );
    }
}
