use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use coevo::ame::{ame_degree_distribution, solve_ame};
use coevo::io::{degree_rows, write_csv_file, DegreeRow};
use coevo::pa::solve_pa;
use coevo::sim::{run_fresh, RunOptions, SamplePolicy, DEFAULT_EVENT_CAP};
use coevo::sweep::{
    replicate_rng, replicate_seed, sim_degree_distribution, sweep_grid, RunSummary, SweepSpec,
};
use coevo::{GameParams, Method, PlayerGraph, SolveOptions, SolvePoint, Variant};

#[derive(Parser, Debug)]
#[command(
    name = "coevo",
    version,
    about = "Prisoner's dilemma on adaptive networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the event simulation and write its trajectory.
    Simulate(SimulateArgs),
    /// Integrate the pair approximation.
    Pa(OdeArgs),
    /// Integrate the approximate master equations.
    Ame(OdeArgs),
    /// Evaluate a parameter grid.
    Sweep(SweepArgs),
    /// Final degree distribution per strategy.
    Degdist(DegdistArgs),
    /// Write a network as an edge list plus node states.
    ExportGraph(ExportArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    m: usize,
    #[arg(long, default_value_t = 0.5)]
    u: f64,
    #[arg(long, default_value_t = 0.1)]
    w: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 30.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Cd)]
    variant: VariantArg,
    #[arg(long, default_value_t = 50)]
    kmax: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    Cd,
    CdDd,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Sim,
    Pa,
    Ame,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sim => Method::Sim,
            MethodArg::Pa => Method::Pa,
            MethodArg::Ame => Method::Ame,
        }
    }
}

impl ModelArgs {
    fn params(&self) -> Result<GameParams> {
        let p = GameParams {
            u: self.u,
            w: self.w,
            alpha: self.alpha,
            rho: self.rho,
            variant: match self.variant {
                VariantArg::Cd => Variant::CdOnly,
                VariantArg::CdDd => Variant::CdAndDd,
            },
            n: self.n,
            m: self.m,
            k_max: self.kmax,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Runs to perform; the trajectory file holds the first one.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Trajectory CSV. Per-run summaries go next to it as `<stem>.summary.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Record a sample every this many events (0: first and last only).
    #[arg(long, default_value_t = 1000)]
    sample_every: u64,
    #[arg(long, default_value_t = DEFAULT_EVENT_CAP)]
    event_cap: u64,
}

#[derive(Args, Debug)]
struct OdeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
    /// Spacing of output samples in ODE time.
    #[arg(long, default_value_t = 0.1)]
    sample_dt: f64,
    #[arg(long, default_value_t = 1e4)]
    t_end: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Sim)]
    method: MethodArg,
    /// Comma-separated values; `a,b,...,c` expands to an arithmetic range.
    #[arg(long)]
    u_list: Option<String>,
    #[arg(long)]
    w_list: Option<String>,
    #[arg(long)]
    rho_list: Option<String>,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EVENT_CAP)]
    event_cap: u64,
}

#[derive(Args, Debug)]
struct DegdistArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Sim)]
    method: MethodArg,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EVENT_CAP)]
    event_cap: u64,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge-list file (`src,dst` per line).
    #[arg(long)]
    out: PathBuf,
    /// Node-state file (`node,state` per line); defaults to `<stem>.states.csv`.
    #[arg(long)]
    states_out: Option<PathBuf>,
    /// Export the initial network instead of the final one.
    #[arg(long)]
    initial: bool,
    #[arg(long, default_value_t = DEFAULT_EVENT_CAP)]
    event_cap: u64,
}

fn check_out(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    ensure!(
        parent.is_dir(),
        "output directory `{}` does not exist",
        parent.display()
    );
    ensure!(
        !path.is_dir(),
        "output path `{}` is a directory",
        path.display()
    );
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Rounds away binary noise from range arithmetic.
fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Parses `a,b,c` or `a,b,...,c`.
fn parse_list(s: &str) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| -> Result<f64> {
        t.parse::<f64>()
            .with_context(|| format!("`{t}` is not a number in list `{s}`"))
    };
    if let Some(pos) = tokens.iter().position(|t| *t == "...") {
        ensure!(
            pos == 2 && tokens.len() == 4,
            "range lists take the form `a,b,...,c`, got `{s}`"
        );
        let (a, b, c) = (num(tokens[0])?, num(tokens[1])?, num(tokens[3])?);
        let step = b - a;
        ensure!(step > 0.0 && c >= a, "range `{s}` must increase");
        let steps = ((c - a) / step).round();
        ensure!(
            (a + steps * step - c).abs() <= 1e-9 * c.abs().max(1.0),
            "range `{s}` does not land on its end point"
        );
        return Ok((0..=steps as usize)
            .map(|i| tidy(a + i as f64 * step))
            .collect());
    }
    let values = tokens.iter().map(|t| num(t)).collect::<Result<Vec<_>>>()?;
    ensure!(!values.is_empty(), "empty list");
    Ok(values)
}

fn simulate(a: &SimulateArgs) -> Result<String> {
    let params = a.model.params()?;
    ensure!(a.replicates >= 1, "--replicates must be at least 1");
    check_out(&a.out)?;
    let policy = if a.sample_every == 0 {
        SamplePolicy::EndsOnly
    } else {
        SamplePolicy::Every(a.sample_every)
    };
    let mut summaries = Vec::with_capacity(a.replicates);
    let mut first = None;
    for i in 0..a.replicates as u64 {
        let opts = RunOptions {
            policy: if i == 0 {
                policy.clone()
            } else {
                SamplePolicy::EndsOnly
            },
            event_cap: a.event_cap,
        };
        let mut rng = replicate_rng(a.seed, i);
        let outcome = run_fresh(&params, &mut rng, &opts)?;
        summaries.push(RunSummary::from_outcome(
            replicate_seed(a.seed, i),
            &outcome,
        ));
        if i == 0 {
            first = Some(outcome.trajectory);
        }
    }
    let trajectory = first.expect("at least one replicate");
    write_csv_file(&a.out, &trajectory)?;
    write_csv_file(sibling(&a.out, "summary.csv"), &summaries)?;
    let s = &summaries[0];
    Ok(format!(
        "simulate: {} ({} events) c={:.6} cc={:.6} cd={:.6} dd={:.6}",
        s.terminated.as_str(),
        s.events,
        s.c,
        s.cc,
        s.cd,
        s.dd
    ))
}

fn ode_options(a: &OdeArgs) -> Result<SolveOptions> {
    ensure!(a.sample_dt > 0.0, "--sample-dt must be positive");
    ensure!(a.t_end > 0.0, "--t-end must be positive");
    let count = (a.t_end / a.sample_dt).floor() as usize;
    ensure!(
        count <= 10_000_000,
        "--t-end / --sample-dt gives too many samples"
    );
    Ok(SolveOptions {
        t_end: a.t_end,
        sample_times: (0..=count).map(|i| tidy(i as f64 * a.sample_dt)).collect(),
        ..Default::default()
    })
}

fn ode_summary(name: &str, p: &SolvePoint, settled: bool) -> String {
    format!(
        "{name}: {} at t={:.6} c={:.6} cc={:.6} cd={:.6} dd={:.6}",
        if settled { "settled" } else { "unsettled" },
        p.t,
        p.c,
        p.cc,
        p.cd,
        p.dd
    )
}

fn pa(a: &OdeArgs) -> Result<String> {
    let params = a.model.params()?;
    check_out(&a.out)?;
    let res = solve_pa(&params, &ode_options(a)?)?;
    write_csv_file(&a.out, &res.trajectory)?;
    Ok(ode_summary("pa", &res.final_point, res.settled))
}

fn ame(a: &OdeArgs) -> Result<String> {
    let params = a.model.params()?;
    check_out(&a.out)?;
    let sol = solve_ame(&params, &ode_options(a)?)?;
    write_csv_file(&a.out, &sol.result.trajectory)?;
    let r = &sol.result;
    Ok(format!(
        "{} lost_mass={:.3e}",
        ode_summary("ame", &r.final_point, r.settled),
        r.lost_mass
    ))
}

fn sweep(a: &SweepArgs) -> Result<String> {
    let params = a.model.params()?;
    check_out(&a.out)?;
    let list = |s: &Option<String>, single: f64| match s {
        Some(s) => parse_list(s),
        None => Ok(vec![single]),
    };
    let spec = SweepSpec {
        u: list(&a.u_list, params.u)?,
        w: list(&a.w_list, params.w)?,
        rho: list(&a.rho_list, params.rho)?,
        replicates: a.replicates,
        base_seed: a.seed,
        method: a.method.into(),
        base: params,
        event_cap: a.event_cap,
        solve: SolveOptions::default(),
    };
    spec.validate()?;
    let rows = sweep_grid(&spec)?;
    write_csv_file(&a.out, &rows)?;
    let mean_c = rows.iter().map(|r| r.mean_c).sum::<f64>() / rows.len() as f64;
    Ok(format!(
        "sweep: {} rows ({}) grid mean c={:.6}",
        rows.len(),
        spec.method,
        mean_c
    ))
}

fn degdist(a: &DegdistArgs) -> Result<String> {
    let params = a.model.params()?;
    check_out(&a.out)?;
    let rows: Vec<DegreeRow> = match a.method {
        MethodArg::Sim => {
            ensure!(a.replicates >= 1, "--replicates must be at least 1");
            let (hc, hd) = sim_degree_distribution(&params, a.replicates, a.seed, a.event_cap)?;
            degree_rows(&hc, &hd)
        }
        MethodArg::Ame => {
            let sol = solve_ame(&params, &SolveOptions::default())?;
            let (hc, hd) = ame_degree_distribution(&sol.grid);
            degree_rows(&hc, &hd)
        }
        MethodArg::Pa => bail!("the pair approximation has no degree distribution; use sim or ame"),
    };
    write_csv_file(&a.out, &rows)?;
    let (nc, nd) = rows
        .iter()
        .fold((0.0, 0.0), |(c, d), r| (c + r.c_count, d + r.d_count));
    Ok(format!(
        "degdist: max degree {} cooperators={:.3} defectors={:.3}",
        rows.len().saturating_sub(1),
        nc,
        nd
    ))
}

fn export_graph(a: &ExportArgs) -> Result<String> {
    let params = a.model.params()?;
    check_out(&a.out)?;
    let states_out = a
        .states_out
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "states.csv"));
    check_out(&states_out)?;
    let mut rng = replicate_rng(a.seed, 0);
    let graph: PlayerGraph = if a.initial {
        let mut g = PlayerGraph::erdos_renyi(params.n, params.m, &mut rng)?;
        g.assign_states(params.rho, &mut rng);
        g
    } else {
        let opts = RunOptions {
            policy: SamplePolicy::EndsOnly,
            event_cap: a.event_cap,
        };
        run_fresh(&params, &mut rng, &opts)?.graph
    };
    let mut edges = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    graph.write_edge_list(&mut edges)?;
    let mut states = std::io::BufWriter::new(std::fs::File::create(&states_out)?);
    graph.write_node_states(&mut states)?;
    use std::io::Write;
    edges.flush()?;
    states.flush()?;
    let c = graph.counts();
    Ok(format!(
        "export-graph: {} nodes, {} edges (cc={} cd={} dd={})",
        graph.n(),
        graph.m(),
        c.n_cc,
        c.n_cd,
        c.n_dd
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Pa(a) => pa(a),
        Command::Ame(a) => ame(a),
        Command::Sweep(a) => sweep(a),
        Command::Degdist(a) => degdist(a),
        Command::ExportGraph(a) => export_graph(a),
    };
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
