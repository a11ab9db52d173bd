//! `glht`: regularized linear hypothesis tests, shrinkage selection, composite tests
//! and Monte Carlo campaigns from the command line.
//!
//! Exit status: 0 on success, 2 on invalid input or configuration, 3 on numerical failure.

mod matrix_io;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glht::composite::{composite_on_fit, CompositeConfig};
use glht::error::{Error, Result};
use glht::glht::{fit, m_eigenvalues, raw_statistics, test_on_fit, Criterion, FitArtifacts, GlhtProblem};
use glht::rng::DEFAULT_SEED;
use glht::selector::{default_ridge_bounds, select_higher_order, select_ridge, SelectionResult};
use glht::shrinkage::ShrinkageSpec;
use glht::sim::{
    empirical_size, parse_kv, parse_panel, parse_prior, persist, power_curve, write_plot_data, AlternativeModel,
    CovModel, SimConfig, SimResult, TestDescriptor,
};
use glht::spectral::PriorWeights;

use matrix_io::load_matrix;

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "glht", version, about = "Regularized general linear hypothesis tests for high-dimensional data")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "GLHT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one regularized test of H0: BC = 0.
    Test(TestArgs),
    /// Select the shrinkage maximizing the estimated local power.
    Select(SelectArgs),
    /// Composite test over a panel of priors.
    Composite(CompositeArgs),
    /// Empirical size under the null.
    SimulateSize(SimArgs),
    /// Power curve along a signal grid.
    SimulatePower(PowerArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Response matrix Y, p × N.
    #[arg(long = "y")]
    y: PathBuf,
    /// Design matrix X, k × N.
    #[arg(long = "x")]
    x: PathBuf,
    /// Constraint matrix C, k × q.
    #[arg(long = "c")]
    c: PathBuf,
    /// Also write the key-value record here.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShrinkageMode {
    /// Ridge at the selected ℓ*.
    Ridge,
    /// Ridge at `--ell`.
    Fixed,
    /// Best three-root mixture.
    Higher,
    /// f ≡ 1 (ZGZ).
    Identity,
    /// f(x) = 1/x, raw statistics only.
    Classical,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "LR")]
    criterion: Criterion,
    #[arg(long, value_enum, default_value = "ridge")]
    shrinkage: ShrinkageMode,
    /// Ridge parameter for `--shrinkage fixed`.
    #[arg(long, allow_hyphen_values = true)]
    ell: Option<f64>,
    /// Prior weights t0,t1,t2 for selection.
    #[arg(long, default_value = "1,0,0")]
    prior: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Prior weights t0,t1,t2, or `canonical` for all three unit priors.
    #[arg(long, default_value = "1,0,0")]
    prior: String,
    /// Search three-root mixtures instead of single ridges.
    #[arg(long)]
    higher: bool,
    /// Print every evaluated candidate.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct CompositeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "LR")]
    criterion: Criterion,
    /// `canonical`, or priors t0,t1,t2 separated by `/`.
    #[arg(long, default_value = "canonical")]
    prior: String,
    /// Bootstrap draws.
    #[arg(long, default_value_t = 10_000)]
    bootstrap: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SimArgs {
    /// Key-value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Results CSV; the `.config` sidecar is written next to it.
    #[arg(long, short)]
    output: PathBuf,
    /// Directory for per-test `signal,rate` files.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    /// Group sizes, e.g. 75,90,135.
    #[arg(long)]
    groups: Option<String>,
    /// identity | dense | toeplitz[:rho] | discrete[:raw]
    #[arg(long)]
    cov: Option<String>,
    /// Tests separated by `;`, e.g. "LR:ridge:1,0,0;LR:zgz;LR:composite".
    #[arg(long)]
    tests: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// dense:c | sparse:c:density:magnitude (c is replaced along the grid).
    #[arg(long)]
    alt: Option<String>,
    /// Comma-separated signal grid starting at 0.
    #[arg(long)]
    c_grid: Option<String>,
    /// Reject above the simulated null quantile instead of the normal one.
    #[arg(long)]
    size_adjusted: Option<bool>,
}

/// Key-value output record, printed and optionally written to a file.
#[derive(Default)]
struct Record(Vec<(String, String)>);

impl Record {
    fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.0.push((key.into(), value.to_string()));
    }

    fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn emit(&self, output: Option<&Path>) -> Result<()> {
        let text = self.render();
        print!("{text}");
        if let Some(path) = output {
            ensure_parent(path)?;
            fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
        }
        _ => Ok(()),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")))
    }
}

fn load_fit(data: &DataArgs) -> Result<FitArtifacts> {
    for path in [&data.y, &data.x, &data.c] {
        if !path.is_file() {
            return Err(Error::Io(format!("{}: no such file", path.display())));
        }
    }
    let problem = GlhtProblem::new(load_matrix(&data.y)?, load_matrix(&data.x)?, load_matrix(&data.c)?)?;
    fit(&problem)
}

fn parse_prior_arg(s: &str) -> Result<PriorWeights> {
    let w = parse_prior(s)?;
    if w.is_zero() {
        return Err(Error::InvalidPrior("all weights are zero".into()));
    }
    Ok(w)
}

fn describe_fit(rec: &mut Record, fit: &FitArtifacts) {
    rec.push("p", fit.p());
    rec.push("n", fit.n);
    rec.push("q", fit.q());
}

fn cmd_test(args: &TestArgs) -> Result<()> {
    check_alpha(args.alpha)?;
    let prior = parse_prior_arg(&args.prior)?;
    let fixed = match (args.shrinkage, args.ell) {
        (ShrinkageMode::Fixed, Some(ell)) => Some(ShrinkageSpec::ridge(ell)?),
        (ShrinkageMode::Fixed, None) => return Err(Error::Config("--shrinkage fixed needs --ell".into())),
        _ => None,
    };
    let fit = load_fit(&args.data)?;
    let mut rec = Record::default();
    rec.push("command", "test");
    describe_fit(&mut rec, &fit);
    rec.push("criterion", args.criterion);

    let f = match args.shrinkage {
        ShrinkageMode::Classical => {
            let raw = raw_statistics(&m_eigenvalues(&fit, &ShrinkageSpec::ClassicalInverse)?)?;
            rec.push("shrinkage", "classical");
            rec.push("raw_LR", raw.0);
            rec.push("raw_LH", raw.1);
            rec.push("raw_BNP", raw.2);
            rec.push("raw_stat", args.criterion.pick(raw));
            return rec.emit(args.data.output.as_deref());
        }
        ShrinkageMode::Identity => ShrinkageSpec::Identity,
        ShrinkageMode::Fixed => fixed.expect("checked above"),
        ShrinkageMode::Ridge => {
            let sel = select_ridge(&fit.spec, &prior, &default_ridge_bounds(&fit.spec)?)?;
            rec.push("prior", prior.label());
            rec.push("ell_star", sel.ell_star().expect("ridge selection returns a ridge"));
            rec.push("xi_star", sel.xi_star);
            sel.f_star
        }
        ShrinkageMode::Higher => {
            let sel = select_higher_order(&fit.spec, &prior, &default_ridge_bounds(&fit.spec)?)?;
            rec.push("prior", prior.label());
            rec.push("xi_star", sel.xi_star);
            sel.f_star
        }
    };
    let out = test_on_fit(&fit, &f, args.criterion)?;
    rec.push("shrinkage", f.label());
    rec.push("raw_stat", out.raw_stat);
    rec.push("omega_hat", out.omega_hat);
    rec.push("delta_hat", out.delta_hat);
    rec.push("statistic", out.standardized);
    rec.push("p_value", out.p_value);
    rec.push("alpha", args.alpha);
    rec.push("reject", out.rejects(args.alpha));
    rec.emit(args.data.output.as_deref())
}

fn push_selection(rec: &mut Record, prefix: &str, sel: &SelectionResult, trace: bool) {
    rec.push(format!("{prefix}f_star"), sel.f_star.label());
    if let Some(ell) = sel.ell_star() {
        rec.push(format!("{prefix}ell_star"), ell);
    }
    if let ShrinkageSpec::RidgeMixture(terms) = &sel.f_star {
        let desc: Vec<String> = terms.iter().map(|t| format!("{}@{}", t.weight, t.root)).collect();
        rec.push(format!("{prefix}mixture"), desc.join(";"));
    }
    rec.push(format!("{prefix}xi_star"), sel.xi_star);
    if trace {
        for (i, (f, xi)) in sel.trace.iter().enumerate() {
            rec.push(format!("{prefix}trace.{i}"), format!("{} {xi}", f.label()));
        }
    }
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let panel = parse_panel(&args.prior)?;
    if let Some(w) = panel.iter().find(|w| w.is_zero()) {
        return Err(Error::InvalidPrior(format!("prior {} has all weights zero", w.label())));
    }
    let fit = load_fit(&args.data)?;
    let bounds = default_ridge_bounds(&fit.spec)?;
    let mut rec = Record::default();
    rec.push("command", "select");
    describe_fit(&mut rec, &fit);
    rec.push("ell_lo", bounds.lo);
    rec.push("ell_hi", bounds.hi);
    for w in &panel {
        let sel = if args.higher {
            select_higher_order(&fit.spec, w, &bounds)?
        } else {
            select_ridge(&fit.spec, w, &bounds)?
        };
        let prefix = if panel.len() == 1 { String::new() } else { format!("{}.", w.label()) };
        if panel.len() == 1 {
            rec.push("prior", w.label());
        }
        push_selection(&mut rec, &prefix, &sel, args.trace);
    }
    rec.emit(args.data.output.as_deref())
}

fn cmd_composite(args: &CompositeArgs) -> Result<()> {
    check_alpha(args.alpha)?;
    let cfg = CompositeConfig {
        panel: parse_panel(&args.prior)?,
        criterion: args.criterion,
        bootstrap_g: args.bootstrap,
        seed: args.seed,
    };
    cfg.validate()?;
    let fit = load_fit(&args.data)?;
    let out = composite_on_fit(&fit, &cfg)?;
    let mut rec = Record::default();
    rec.push("command", "composite");
    describe_fit(&mut rec, &fit);
    rec.push("criterion", args.criterion);
    for (w, ell, stat) in &out.per_prior {
        rec.push(format!("{}.ell_star", w.label()), ell);
        rec.push(format!("{}.statistic", w.label()), stat);
    }
    rec.push("t_max", out.t_max);
    rec.push("bootstrap", cfg.bootstrap_g);
    rec.push("seed", cfg.seed);
    rec.push("p_value", out.p_value);
    rec.push("alpha", args.alpha);
    rec.push("reject", out.p_value < args.alpha);
    rec.emit(args.data.output.as_deref())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad {what} entry {t:?}"))))
        .collect()
}

/// Configuration file entries overridden by flags; missing keys take Table-1 defaults.
fn assemble(args: &SimArgs, extra: &[(&str, Option<String>)], defaults: &[(&str, &str)]) -> Result<Vec<(String, String)>> {
    let mut kv = match &args.config {
        Some(path) => {
            parse_kv(&fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)?
        }
        None => Vec::new(),
    };
    let mut set = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            kv.retain(|(k, _)| k != key);
            kv.push((key.into(), v));
        }
    };
    if let Some(g) = &args.groups {
        let sizes: Vec<usize> = parse_list(g, "group size")?;
        set("k", Some(sizes.len().to_string()));
        set("N", Some(sizes.iter().sum::<usize>().to_string()));
    }
    set("group_sizes", args.groups.clone());
    set("p", args.p.map(|v| v.to_string()));
    set("cov", args.cov.clone());
    set("tests", args.tests.clone());
    set("replicates", args.replicates.map(|v| v.to_string()));
    set("alpha", args.alpha.map(|v| v.to_string()));
    set("seed", args.seed.map(|v| v.to_string()));
    for (k, v) in extra {
        set(k, v.clone());
    }
    for (k, v) in defaults {
        if !kv.iter().any(|(key, _)| key == k) {
            kv.push((k.to_string(), v.to_string()));
        }
    }
    Ok(kv)
}

const TABLE_DEFAULTS: [(&str, &str); 8] = [
    ("p", "150"),
    ("N", "300"),
    ("k", "3"),
    ("group_sizes", "75,90,135"),
    ("cov", "identity"),
    ("tests", "LR:ridge:1,0,0;LR:zgz"),
    ("replicates", "2000"),
    ("alpha", "0.05"),
];

fn finish_sim(result: &SimResult, args: &SimArgs, stem: &str) -> Result<()> {
    persist(result, &args.output)?;
    if let Some(dir) = &args.plot_dir {
        write_plot_data(result, dir, stem)?;
    }
    let mut rec = Record::default();
    rec.push("results", args.output.display());
    rec.push("digest", &result.digest);
    for r in &result.rows {
        rec.push(format!("{}.c={}", r.test_id, r.c), format!("{} ± {:.4}", r.rate, r.se));
    }
    rec.push("elapsed_secs", format!("{:.2}", result.elapsed_secs));
    rec.emit(None)
}

fn with_seed_default(mut kv: Vec<(String, String)>) -> Vec<(String, String)> {
    if !kv.iter().any(|(k, _)| k == "seed") {
        kv.push(("seed".into(), DEFAULT_SEED.to_string()));
    }
    kv
}

fn sim_config(kv: &[(String, String)]) -> Result<SimConfig> {
    let cfg = SimConfig::from_kv(kv)?;
    check_alpha(cfg.alpha)?;
    Ok(cfg)
}

fn cmd_simulate_size(args: &SimArgs) -> Result<()> {
    let defaults: Vec<(&str, &str)> = TABLE_DEFAULTS.iter().copied().chain([("size_adjusted", "false")]).collect();
    let kv = with_seed_default(assemble(args, &[("alt", Some("null".into()))], &defaults)?);
    let cfg = sim_config(&kv)?;
    finish_sim(&empirical_size(&cfg)?, args, "size")
}

fn cmd_simulate_power(args: &PowerArgs) -> Result<()> {
    let extra = [
        ("alt", args.alt.clone()),
        ("c_grid", args.c_grid.clone()),
        ("size_adjusted", args.size_adjusted.map(|b| b.to_string())),
    ];
    let defaults: Vec<(&str, &str)> =
        TABLE_DEFAULTS.iter().copied().chain([("alt", "dense:0"), ("size_adjusted", "true")]).collect();
    let kv = with_seed_default(assemble(&args.sim, &extra, &defaults)?);
    let grid_text = kv
        .iter()
        .find(|(k, _)| k == "c_grid")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Config("power curves need --c-grid".into()))?;
    let grid: Vec<f64> = parse_list(&grid_text, "signal grid")?;
    let cfg = sim_config(&kv)?;
    finish_sim(&power_curve(&cfg, &grid)?, &args.sim, "power")
}

/// Checks that `s` parses as the given type without keeping the value.
fn check_parses<T: std::str::FromStr<Err = Error>>(s: &Option<String>) -> Result<()> {
    if let Some(s) = s {
        s.parse::<T>()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Select(a) => cmd_select(a),
        Command::Composite(a) => cmd_composite(a),
        Command::SimulateSize(a) => {
            check_parses::<CovModel>(&a.cov)?;
            cmd_simulate_size(a)
        }
        Command::SimulatePower(a) => {
            check_parses::<CovModel>(&a.sim.cov)?;
            check_parses::<AlternativeModel>(&a.alt)?;
            if let Some(t) = &a.sim.tests {
                t.split(';').map(str::parse::<TestDescriptor>).collect::<Result<Vec<_>>>()?;
            }
            cmd_simulate_power(a)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("glht: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID })
        }
    }
}
