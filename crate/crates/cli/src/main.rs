use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qcbo_gadgets::experiment::{
    gadgets_for, sweep_single, sweep_two, OverlapCase, SingleGrid, SweepOptions,
};
use qcbo_gadgets::gadget::{AnsatzConfig, AnsatzMode, FlagMode, GadgetSpec};
use qcbo_gadgets::solver::{run_gm_qaoa, SolveConfig};
use qcbo_gadgets::{canonicalize, parse_constraints, Comparison, GadgetStore, QcboInstance};

/// Constraint gadgets and Grover-mixer QAOA on an exact statevector simulator.
#[derive(Parser)]
#[command(name = "qcbo-gadgets", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gadget operations.
    #[command(subcommand)]
    Gadget(GadgetCommand),
    /// Reproducible experiment sweeps written as CSV.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Solve a QCBO instance given as JSON.
    Solve(SolveArgs),
}

#[derive(Subcommand)]
enum GadgetCommand {
    /// Train (or fetch from the store) the gadget for a set of constraints.
    Build(BuildArgs),
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Every `sum x_i (op) b` constraint on a grid of n and b.
    Single(SingleArgs),
    /// Random pairs of overlapping constraints on five variables.
    Two(TwoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AnsatzArg {
    Qaoa,
    MaQaoa,
}

impl From<AnsatzArg> for AnsatzMode {
    fn from(a: AnsatzArg) -> Self {
        match a {
            AnsatzArg::Qaoa => AnsatzMode::Shared,
            AnsatzArg::MaQaoa => AnsatzMode::MultiAngle,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FlagModeArg {
    Single,
    PerConstraint,
}

impl From<FlagModeArg> for FlagMode {
    fn from(f: FlagModeArg) -> Self {
        match f {
            FlagModeArg::Single => FlagMode::Single,
            FlagModeArg::PerConstraint => FlagMode::PerConstraint,
        }
    }
}

/// Options shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Master seed; every random draw is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gadget ansatz layers.
    #[arg(long, default_value_t = 1)]
    layers: usize,
    #[arg(long, value_enum, default_value = "ma-qaoa")]
    ansatz: AnsatzArg,
    /// Random restarts for gadget training.
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// Gadget store file, created if missing and updated after training.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Output file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn ansatz(&self) -> AnsatzConfig {
        AnsatzConfig {
            layers: self.layers,
            mode: self.ansatz.into(),
        }
    }

    fn open_store(&self) -> Result<Option<GadgetStore>> {
        self.store
            .as_ref()
            .map(|p| GadgetStore::open(p).with_context(|| format!("opening store {}", p.display())))
            .transpose()
    }
}

/// Options for the GM-QAOA stage.
#[derive(Args)]
struct SolveOptions {
    /// GM-QAOA layers.
    #[arg(short = 'p', long = "qaoa-layers", default_value_t = 1)]
    qaoa_layers: usize,
    /// Flag penalty; defaults to 5 + 2|f_min|.
    #[arg(long)]
    delta: Option<f64>,
    /// Grid points per axis seeding the GM-QAOA angle search.
    #[arg(long, default_value_t = 32)]
    grid: usize,
}

#[derive(Args)]
struct BuildArgs {
    /// Constraint such as "x0 + x1 <= 1"; repeat for several.
    #[arg(short, long = "constraint", required = true)]
    constraints: Vec<String>,
    #[arg(long, value_enum, default_value = "per-constraint")]
    flag_mode: FlagModeArg,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SingleArgs {
    #[arg(long, default_value_t = 5)]
    n_max: usize,
    #[arg(long, default_value_t = 5)]
    b_max: i64,
    /// Also sweep the strict comparisons < and >.
    #[arg(long)]
    strict: bool,
    /// Random QCBOs per satisfiable constraint.
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[command(flatten)]
    solve: SolveOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TwoArgs {
    /// Overlap case: the two supports share 1, 2 or 3 variables.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    case: u8,
    /// Constraint pairs to sample.
    #[arg(long, default_value_t = 10)]
    sets: usize,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[command(flatten)]
    solve: SolveOptions,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON: {"n", "q": [[i, j, coeff], ...], "constraints": [...]}.
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "per-constraint")]
    flag_mode: FlagModeArg,
    #[command(flatten)]
    solve: SolveOptions,
    #[command(flatten)]
    common: Common,
}

fn sweep_options(common: &Common, solve: &SolveOptions, instances: usize) -> SweepOptions {
    SweepOptions {
        seed: common.seed,
        ansatz: common.ansatz(),
        restarts: common.restarts,
        instances,
        solve_layers: solve.qaoa_layers,
        solve_grid: solve.grid,
        delta: solve.delta,
    }
}

fn write_output(
    out: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn save(store: Option<GadgetStore>) -> Result<()> {
    if let Some(store) = store {
        store.save().context("saving gadget store")?;
    }
    Ok(())
}

fn gadget_build(args: &BuildArgs) -> Result<()> {
    let constraints = parse_constraints(&args.constraints, None)?;
    let spec = GadgetSpec::new(&constraints, args.flag_mode.into())?;
    let opts = sweep_options(
        &args.common,
        &SolveOptions {
            qaoa_layers: 1,
            delta: None,
            grid: 32,
        },
        0,
    );
    let mut store = args.common.open_store()?;
    let key = canonicalize(&spec, &opts.ansatz)?.key;
    let hit = store.as_ref().is_some_and(|s| s.get(&key).is_some());
    let gadget = gadgets_for(std::slice::from_ref(&spec), &opts, store.as_mut())?.remove(0);
    save(store)?;

    eprintln!(
        "gadget_ar {:.9} fidelity {:.9} ({})",
        gadget.gadget_ar,
        gadget.fidelity,
        if hit { "store hit" } else { "trained" }
    );
    let doc = serde_json::json!({
        "key": key.as_str(),
        "store_hit": hit,
        "gadget": gadget,
    });
    write_output(args.common.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        writeln!(w)?;
        Ok(())
    })
}

fn run_sweep_single(args: &SingleArgs) -> Result<()> {
    let grid = SingleGrid {
        n_max: args.n_max,
        b_max: args.b_max,
        comparisons: if args.strict {
            Comparison::ALL.to_vec()
        } else {
            Comparison::NON_STRICT.to_vec()
        },
    };
    let opts = sweep_options(&args.common, &args.solve, args.instances);
    let mut store = args.common.open_store()?;
    let sweep = sweep_single(&grid, &opts, store.as_mut())?;
    save(store)?;
    write_output(args.common.out.as_deref(), |w| Ok(sweep.write_csv(w)?))
}

fn run_sweep_two(args: &TwoArgs) -> Result<()> {
    let case = OverlapCase::from_number(args.case)?;
    let opts = sweep_options(&args.common, &args.solve, args.instances);
    let mut store = args.common.open_store()?;
    let sweep = sweep_two(case, args.sets, &opts, store.as_mut())?;
    save(store)?;
    write_output(args.common.out.as_deref(), |w| Ok(sweep.write_csv(w)?))
}

fn solve(args: &SolveArgs) -> Result<()> {
    let text = fs::read_to_string(&args.instance)
        .with_context(|| format!("reading {}", args.instance.display()))?;
    let inst = QcboInstance::from_json(&text)
        .with_context(|| format!("parsing {}", args.instance.display()))?;
    if inst.constraints().is_empty() {
        bail!("the instance has no constraints to build a gadget from");
    }
    let spec = GadgetSpec::new(inst.constraints(), args.flag_mode.into())?;
    let opts = sweep_options(&args.common, &args.solve, 0);
    let mut store = args.common.open_store()?;
    let gadget = gadgets_for(std::slice::from_ref(&spec), &opts, store.as_mut())?.remove(0);
    save(store)?;

    let cfg = SolveConfig {
        layers: args.solve.qaoa_layers,
        delta: args.solve.delta,
        seed: args.common.seed,
        grid: args.solve.grid,
        ..SolveConfig::default()
    };
    let report = run_gm_qaoa(&inst, &gadget, &cfg)?;
    let json = report.to_json()?;
    write_output(args.common.out.as_deref(), |w| {
        writeln!(w, "{json}")?;
        Ok(())
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gadget(GadgetCommand::Build(args)) => gadget_build(&args),
        Command::Sweep(SweepCommand::Single(args)) => run_sweep_single(&args),
        Command::Sweep(SweepCommand::Two(args)) => run_sweep_two(&args),
        Command::Solve(args) => solve(&args),
    }
}
