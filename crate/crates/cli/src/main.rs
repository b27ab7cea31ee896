//! `hisd`: benchmark command line for the saddle-search library.
//!
//! Every subcommand writes machine-readable artifacts into `--out` and exits
//! with 0 on success, 2 when any row is flagged, and 1 on a hard error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use hisd::harness::{
    allen_cahn_landscape, compare_paths, convergence_table, landscape_bench, landscape_seeds,
    max_step, ConvergenceOptions, LandscapeSetup,
};
use hisd::io::write_json;
use hisd::landscape::{downward_search, SearchConfig};
use hisd::problems::benchmark_initial_data;
use hisd::{
    AllenCahn, EnergyModel, HisdError, ProblemName, ProblemSpec, SaddleState, Scheme, SchemeConfig,
};

use config::ConfigFile;

#[derive(Parser, Debug)]
#[command(
    name = "hisd",
    version,
    about = "High-index saddle dynamics benchmarks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat JSON object of flag values; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    problem: Option<String>,
    #[arg(long, global = true)]
    kappa: Option<f64>,
    #[arg(long, global = true)]
    index: Option<usize>,
    /// `ex` or `si`.
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Time horizon.
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    /// Relative GMRES tolerance.
    #[arg(long, global = true)]
    gmres_tol: Option<f64>,
    #[arg(long, global = true)]
    dimer_length: Option<f64>,
    /// Seed of the Lanczos start vectors.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convergence table against a fine reference run.
    Converge {
        /// Comma-separated time steps.
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        #[arg(long)]
        reference_tau: Option<f64>,
        #[arg(long)]
        exact_hvp: bool,
    },
    /// Largest step size for which a run converges.
    Maxstep {
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        /// Relative width at which bisection stops.
        #[arg(long)]
        width: Option<f64>,
        /// Time budget per probe; the step cap is this over `tau`.
        #[arg(long)]
        max_time: Option<f64>,
    },
    /// SI and EX index-1 pathways on the Rosenbrock-type function.
    ComparePaths {
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        b: Option<f64>,
        #[arg(long)]
        tau_si: Option<f64>,
        #[arg(long)]
        tau_ex: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Allen-Cahn solution landscape from `u = 1`, optionally followed by a
    /// downward search from the top node.
    Landscape {
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        downward: bool,
    },
    /// Work counters of one search per index, seeded from the landscape.
    Bench {
        /// Comma-separated indices; defaults to the odd indices up to `u = 0`.
        #[arg(long, value_delimiter = ',')]
        indices: Option<Vec<usize>>,
    },
    /// A single saddle search from the benchmark initial data.
    Run {
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        exact_hvp: bool,
    },
}

/// Resolved flags: command line first, then the config file.
struct Flags {
    cfg: ConfigFile,
    common: Common,
}

impl Flags {
    fn out(&self) -> Result<PathBuf> {
        let dir = self
            .common
            .out
            .clone()
            .or_else(|| self.cfg.string("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn f64(&self, cli: Option<f64>, key: &str) -> Result<Option<f64>> {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.cfg.f64(key),
        }
    }

    fn usize(&self, cli: Option<usize>, key: &str) -> Result<Option<usize>> {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.cfg.usize(key),
        }
    }

    fn problem(&self, default: ProblemName) -> Result<ProblemName> {
        match self
            .common
            .problem
            .clone()
            .or_else(|| self.cfg.string("problem"))
        {
            Some(p) => Ok(p.parse()?),
            None => Ok(default),
        }
    }

    fn scheme(&self, default: Scheme) -> Result<Scheme> {
        match self
            .common
            .scheme
            .clone()
            .or_else(|| self.cfg.string("scheme"))
        {
            Some(s) => Ok(s.parse()?),
            None => Ok(default),
        }
    }

    fn kappa(&self) -> Result<f64> {
        Ok(self.f64(self.common.kappa, "kappa")?.unwrap_or(0.001))
    }

    fn index(&self) -> Result<Option<usize>> {
        self.usize(self.common.index, "index")
    }

    fn tau(&self) -> Result<Option<f64>> {
        self.f64(self.common.tau, "tau")
    }

    fn horizon(&self) -> Result<Option<f64>> {
        self.f64(self.common.horizon, "T")
    }

    fn gmres_tol(&self) -> Result<Option<f64>> {
        self.f64(self.common.gmres_tol, "gmres-tol")
    }

    fn dimer_length(&self) -> Result<Option<f64>> {
        self.f64(self.common.dimer_length, "dimer-length")
    }

    fn seed(&self) -> Result<Option<u64>> {
        match self.common.seed {
            Some(s) => Ok(Some(s)),
            None => Ok(self.cfg.usize("seed")?.map(|s| s as u64)),
        }
    }

    fn bool(&self, cli: bool, key: &str) -> Result<bool> {
        Ok(cli || self.cfg.bool(key)?.unwrap_or(false))
    }

    /// Scheme settings shared by the Allen-Cahn drivers.
    fn dynamics(&self, scheme: Scheme, tau: f64) -> Result<SchemeConfig<f64>> {
        let mut c = SchemeConfig::new(scheme, tau, 1);
        if let Some(t) = self.gmres_tol()? {
            c.gmres.rel_tol = t;
        }
        c.dimer_length = self.dimer_length()?;
        c.trajectory_stride = Some(usize::MAX);
        Ok(c)
    }

    fn landscape_setup(&self) -> Result<LandscapeSetup> {
        let mut setup = LandscapeSetup::new(self.kappa()?);
        if let Some(s) = self.seed()? {
            setup.search.eig.seed = s;
        }
        Ok(setup)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn two_d_initial(name: ProblemName, k: usize) -> Result<SaddleState<f64>> {
    let Some((x0, frame)) = benchmark_initial_data::<f64>(name, k) else {
        bail!("no benchmark initial data for {name} with index {k}");
    };
    Ok(SaddleState::new(x0, frame)?)
}

fn problem_spec(flags: &Flags, name: ProblemName) -> Result<ProblemSpec> {
    let mut spec = ProblemSpec::new(name);
    match name {
        ProblemName::AllenCahn => spec = spec.with("kappa", flags.kappa()?),
        ProblemName::Rosenbrock => {
            for key in ["a", "b"] {
                if let Some(v) = flags.cfg.f64(key)? {
                    spec = spec.with(key, v);
                }
            }
        }
        _ => {}
    }
    Ok(spec)
}

/// Seed state of index `k`: benchmark data for the 2-D problems, the
/// landscape driver's starting state for Allen-Cahn.
fn seed_state(
    flags: &Flags,
    name: ProblemName,
    k: usize,
) -> Result<(Box<dyn EnergyModel<f64>>, SaddleState<f64>)> {
    if name != ProblemName::AllenCahn {
        let model = problem_spec(flags, name)?.build::<f64>()?;
        return Ok((model, two_d_initial(name, k)?));
    }
    let setup = flags.landscape_setup()?;
    let (model, graph) = allen_cahn_landscape(&setup)?;
    let seeds = landscape_seeds(&model, &graph, &setup.search, &[k])?;
    let Some(seed) = seeds.into_iter().next().and_then(|(_, s)| s) else {
        bail!("the landscape holds no index-{k} search to seed from");
    };
    Ok((Box::new(model), seed))
}

fn cmd_converge(
    flags: &Flags,
    taus: Option<Vec<f64>>,
    reference_tau: Option<f64>,
    exact_hvp: bool,
) -> Result<bool> {
    let name = flags.problem(ProblemName::Eckhardt)?;
    let k = flags.index()?.unwrap_or(1);
    let model = problem_spec(flags, name)?.build::<f64>()?;
    let initial = two_d_initial(name, k)?;
    let mut opts = ConvergenceOptions {
        scheme: flags.scheme(Scheme::SemiImplicit)?,
        exact_hvp: flags.bool(exact_hvp, "exact-hvp")?,
        dimer_length: flags.dimer_length()?,
        ..ConvergenceOptions::default()
    };
    if let Some(t) = flags.horizon()? {
        opts.horizon = t;
    }
    if let Some(t) = flags.f64(reference_tau, "reference-tau")? {
        opts.reference_tau = t;
    }
    if let Some(t) = flags.gmres_tol()? {
        opts.gmres_tol = t;
    }
    let taus = match taus.or(flags.cfg.f64_list("taus")?) {
        Some(t) => t,
        None => vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
    };
    let table = convergence_table(model.as_ref(), &initial, &taus, &opts)?;
    let out = flags.out()?;
    write_text(&out.join("converge.csv"), &table.to_csv()?)?;
    write_json(&out.join("converge.json"), &table)?;
    println!(
        "{name} k={k} {}: order_x = {}",
        opts.scheme,
        table.order_x.map_or("n/a".into(), |o| format!("{o:.3}"))
    );
    Ok(table.any_flagged())
}

fn cmd_maxstep(
    flags: &Flags,
    lo: Option<f64>,
    hi: Option<f64>,
    width: Option<f64>,
    max_time: Option<f64>,
) -> Result<bool> {
    let name = flags.problem(ProblemName::AllenCahn)?;
    let scheme = flags.scheme(Scheme::SemiImplicit)?;
    let (def_lo, def_hi) = match scheme {
        Scheme::SemiImplicit => (0.2, 8.0),
        Scheme::Explicit => (1e-4, 0.1),
    };
    let lo = flags.f64(lo, "lo")?.unwrap_or(def_lo);
    let hi = flags.f64(hi, "hi")?.unwrap_or(def_hi);
    let width = flags.f64(width, "width")?.unwrap_or(0.01);
    let max_time = flags.f64(max_time, "max-time")?.unwrap_or(5000.0);
    let k = match flags.index()? {
        Some(k) => k,
        None if name == ProblemName::AllenCahn => {
            AllenCahn::new(flags.kappa()?, 7)?.zero_state_index()
        }
        None => 1,
    };
    let (model, seed) = seed_state(flags, name, k)?;
    let mut base = flags.dynamics(scheme, lo)?;
    if name == ProblemName::AllenCahn && flags.gmres_tol()?.is_none() {
        base.gmres.rel_tol = 1e-6;
    }
    base.max_steps = (max_time / lo).ceil() as usize;
    let res = max_step(model.as_ref(), &seed, &base, lo, hi, width)?;
    let out = flags.out()?;
    write_text(&out.join("maxstep_probes.csv"), &res.probes_csv()?)?;
    write_json(&out.join("maxstep.json"), &res)?;
    println!("{name} k={k} {scheme}: tau_max = {:.4e}", res.tau_max);
    Ok(false)
}

fn cmd_compare_paths(
    flags: &Flags,
    a: Option<f64>,
    b: Option<f64>,
    tau_si: Option<f64>,
    tau_ex: Option<f64>,
    radius: Option<f64>,
) -> Result<bool> {
    let a = flags.f64(a, "a")?.unwrap_or(-30.0);
    let b = flags.f64(b, "b")?.unwrap_or(0.5);
    let tau_si = flags
        .f64(tau_si, "tau-si")?
        .or(flags.tau()?)
        .unwrap_or(1.0 / 300.0);
    let tau_ex = flags.f64(tau_ex, "tau-ex")?.unwrap_or(tau_si / 10.0);
    let horizon = flags.horizon()?.unwrap_or(20.0);
    let radius = flags.f64(radius, "radius")?.unwrap_or(1e-2);
    let cmp = compare_paths(a, b, tau_si, tau_ex, horizon, radius)?;
    let out = flags.out()?;
    write_text(&out.join("paths.csv"), &cmp.to_csv()?)?;
    let hit = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.4}"));
    println!(
        "sup |x_si - x_ex| = {:.4e}; first hit of the {radius:e} ball: si {}, ex {}",
        cmp.sup_distance,
        hit(cmp.first_hit_si),
        hit(cmp.first_hit_ex)
    );
    Ok(false)
}

fn cmd_landscape(
    flags: &Flags,
    target: Option<usize>,
    candidates: Option<usize>,
    downward: bool,
) -> Result<bool> {
    let mut setup = flags.landscape_setup()?;
    let scheme = flags.scheme(Scheme::SemiImplicit)?;
    let tau = flags.tau()?.unwrap_or(match scheme {
        Scheme::SemiImplicit => 0.4,
        Scheme::Explicit => 0.012,
    });
    let mut dynamics = flags.dynamics(scheme, tau)?;
    dynamics.max_steps = setup.search.dynamics.max_steps;
    setup.search.dynamics = dynamics;
    setup.target_index = flags.usize(target, "target")?;
    if let Some(c) = flags.usize(candidates, "candidates")? {
        setup.search.candidates = c;
    }
    let (model, graph) = allen_cahn_landscape(&setup)?;
    let out = flags.out()?;
    graph.write_json(&out.join("landscape.json"))?;
    write_text(&out.join("landscape.dot"), &graph.to_dot())?;
    let mut flagged = graph.nodes.iter().any(|n| n.flagged);
    println!(
        "{} nodes, max index {}",
        graph.nodes.len(),
        graph.max_index()
    );
    if flags.bool(downward, "downward")? {
        let top = graph.top_nodes()[0].clone();
        let down_cfg = SearchConfig {
            recursive: true,
            ..setup.search
        };
        let down = downward_search(&model, &top, &down_cfg)?;
        down.write_json(&out.join("landscape_down.json"))?;
        write_text(&out.join("landscape_down.dot"), &down.to_dot())?;
        flagged |= down.nodes.iter().any(|n| n.flagged);
        println!("downward: {} nodes", down.nodes.len());
    }
    Ok(flagged)
}

fn cmd_bench(flags: &Flags, indices: Option<Vec<usize>>) -> Result<bool> {
    let setup = flags.landscape_setup()?;
    let scheme = flags.scheme(Scheme::SemiImplicit)?;
    let tau = flags.tau()?.unwrap_or(match scheme {
        Scheme::SemiImplicit => 0.4,
        Scheme::Explicit => 0.012,
    });
    let mut cfg = flags.dynamics(scheme, tau)?;
    if flags.gmres_tol()?.is_none() {
        cfg.gmres.rel_tol = 1e-6;
    }
    cfg.max_steps = 2_000_000;
    let (model, graph) = allen_cahn_landscape(&setup)?;
    let indices = match indices {
        Some(i) => i,
        None => {
            let top = model.zero_state_index();
            (1..=top).filter(|i| i % 2 == 1).collect()
        }
    };
    let seeds = landscape_seeds(&model, &graph, &setup.search, &indices)?;
    let table = landscape_bench(&model, &seeds, &cfg)?;
    let out = flags.out()?;
    write_text(&out.join("bench.csv"), &table.to_csv()?)?;
    for r in &table.rows {
        println!(
            "index {:>2}: N_iter {:>8} N_F {:>10} cpu {:.2}s{}",
            r.index,
            r.n_iter,
            r.n_force,
            r.cpu_seconds,
            if r.flagged { " (flagged)" } else { "" }
        );
    }
    Ok(table.any_flagged())
}

fn cmd_run(flags: &Flags, max_steps: Option<usize>, exact_hvp: bool) -> Result<bool> {
    let name = flags.problem(ProblemName::Eckhardt)?;
    let k = flags.index()?.unwrap_or(1);
    let scheme = flags.scheme(Scheme::SemiImplicit)?;
    let tau = flags.tau()?.unwrap_or(0.01);
    let (model, seed) = seed_state(flags, name, k)?;
    let mut cfg = SchemeConfig::new(scheme, tau, k);
    cfg.exact_hvp = flags.bool(exact_hvp, "exact-hvp")?;
    cfg.dimer_length = flags.dimer_length()?;
    if let Some(t) = flags.gmres_tol()? {
        cfg.gmres.rel_tol = t;
    }
    if let Some(m) = flags.usize(max_steps, "max-steps")? {
        cfg.max_steps = m;
    }
    if let Some(t) = flags.horizon()? {
        cfg.max_steps = (t / tau).round() as usize;
    }
    let rec = hisd::run(model.as_ref(), &seed, &cfg)?;
    let out = flags.out()?;
    write_json(&out.join("run.json"), &rec)?;
    rec.write_trajectory_csv(&out.join("trajectory.csv"))?;
    println!(
        "{name} k={k} {scheme}: {:?} after {} steps, |F| = {:.3e}, N_F = {}",
        rec.termination,
        rec.n_iter,
        rec.final_force_norm,
        rec.n_force()
    );
    Ok(!rec.converged())
}

fn dispatch(cli: Cli) -> Result<bool> {
    let cfg = match &cli.common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let flags = Flags {
        cfg,
        common: cli.common,
    };
    match cli.command {
        Command::Converge {
            taus,
            reference_tau,
            exact_hvp,
        } => cmd_converge(&flags, taus, reference_tau, exact_hvp),
        Command::Maxstep {
            lo,
            hi,
            width,
            max_time,
        } => cmd_maxstep(&flags, lo, hi, width, max_time),
        Command::ComparePaths {
            a,
            b,
            tau_si,
            tau_ex,
            radius,
        } => cmd_compare_paths(&flags, a, b, tau_si, tau_ex, radius),
        Command::Landscape {
            target,
            candidates,
            downward,
        } => cmd_landscape(&flags, target, candidates, downward),
        Command::Bench { indices } => cmd_bench(&flags, indices),
        Command::Run {
            max_steps,
            exact_hvp,
        } => cmd_run(&flags, max_steps, exact_hvp),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            if let Some(HisdError::NoSignChange { .. }) = e.downcast_ref::<HisdError>() {
                eprintln!("error: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}
