use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{Map, Value};

use nonlocal_r0::config::{parse_config, Problem, RunConfig};
use nonlocal_r0::sis::{
    limit_d_i, limit_k, pointwise_lower_bound, r0_sis, LimitDirection, LimitReport, SweepParameter,
};
use nonlocal_r0::spectral::{rayleigh_bound, spectral_bound, SpectralReport};
use nonlocal_r0::variational::{cw_certificate, sign_relation_check, solve_mu0, R0Report};
use nonlocal_r0::verify::run_checks;
use nonlocal_r0::{Error, Simulator};

mod output;

use output::{num, nums, opt_num, render, OutputDir, Provenance};

#[derive(Parser, Debug)]
#[command(name = "nlr0", version, about = "Spectral bounds and R0 for nonlocal dispersal systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized checks; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps; overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Spectral bound of the operator at the configured mu, with a certificate.
    Spectral,
    /// R0 by every applicable route.
    R0,
    /// Parameter sweeps with their limit targets.
    Sweep,
    /// Time integration of the SIS system.
    Simulate,
    /// Invariant suite with a pass/fail table.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectral => "spectral",
            Command::R0 => "r0",
            Command::Sweep => "sweep",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
        }
    }
}

enum Outcome {
    Done,
    ChecksFailed,
}

fn spectral_json(rep: &SpectralReport) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("bound".into(), num(rep.bound));
    m.insert("essential_bound".into(), num(rep.essential_bound));
    m.insert("method".into(), Value::String(format!("{:?}", rep.method)));
    m.insert("residual".into(), num(rep.residual));
    m.insert("principal_exists".into(), Value::Bool(rep.principal_exists));
    m.insert("bracket".into(), nums([rep.bracket.0, rep.bracket.1]));
    m.insert("iterations".into(), Value::from(rep.iterations));
    m.insert(
        "principal_vector".into(),
        rep.principal_vector.as_ref().map(|v| nums(v.iter().copied())).unwrap_or(Value::Null),
    );
    m
}

fn r0_json(rep: &R0Report) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("r0".into(), num(rep.value()));
    m.insert("mu0_bisection".into(), num(rep.mu0_bisection));
    m.insert("mu0_next_generation".into(), num(rep.mu0_next_generation));
    m.insert("mu0_rayleigh".into(), opt_num(rep.mu0_rayleigh));
    m.insert("cw_bracket".into(), nums([rep.cw_lower, rep.cw_upper]));
    m.insert("agreement".into(), num(rep.agreement));
    m.insert("s_at_mu0".into(), num(rep.s_at_mu0));
    m.insert("s_l_infinity".into(), num(rep.l_infinity_bound));
    m.insert("clamped_entries".into(), Value::from(rep.clamped));
    m.insert("flagged".into(), Value::Bool(rep.flagged));
    m
}

fn spectral(cfg: &RunConfig, problem: &Problem, out: &OutputDir) -> Result<Outcome> {
    let power = cfg.solver.power_options();
    let mu = cfg.spectral.mu;
    let op = problem.operator(mu)?;
    let rep = spectral_bound(&op, power)?;
    let mut body = Map::new();
    body.insert("mu".into(), num(mu));
    body.insert("species".into(), Value::from(op.species()));
    body.insert("nodes".into(), Value::from(op.nodes()));
    body.insert("report".into(), Value::Object(spectral_json(&rep)));
    body.insert(
        "rayleigh_bound".into(),
        match rayleigh_bound(&op, power) {
            Ok(r) => num(r.bound),
            Err(Error::NotSelfAdjoint { .. }) => Value::Null,
            Err(e) => return Err(e.into()),
        },
    );
    let cert = if cfg.spectral.certificate {
        Some(cw_certificate(&op, cfg.solver.certificate_tol, power.max_iter))
    } else {
        None
    };
    let refusal = match cert {
        Some(Ok(c)) => {
            let mut m = Map::new();
            m.insert("lower".into(), num(c.lower));
            m.insert("upper".into(), num(c.upper));
            m.insert("gap".into(), num(c.gap));
            m.insert("iterations".into(), Value::from(c.iterations));
            body.insert("certificate".into(), Value::Object(m));
            None
        }
        Some(Err(e)) => {
            body.insert("certificate".into(), Value::Null);
            Some(e)
        }
        None => None,
    };
    let path = out.write_json("spectral.json", body)?;
    println!("s(L) = {} ({})", output::fmt_f64(rep.bound), path.display());
    match refusal {
        Some(e) => Err(e.into()),
        None => Ok(Outcome::Done),
    }
}

fn r0(cfg: &RunConfig, problem: &Problem, out: &OutputDir) -> Result<Outcome> {
    let opts = cfg.solver.mu0_options();
    let mut body = match problem {
        Problem::Sis(p) => {
            let rep = r0_sis(p, opts)?;
            let mut body = r0_json(&rep);
            body.insert("pointwise_lower_bound".into(), num(pointwise_lower_bound(p)?));
            body
        }
        Problem::System(_) => r0_json(&solve_mu0(&problem.weighted()?, opts)?),
    };
    body.insert("problem".into(), Value::String(format!("{:?}", cfg.problem).to_lowercase()));
    let r = body["r0"].clone();
    let path = out.write_json("r0.json", body)?;
    println!("R0 = {} ({})", render(&r).trim(), path.display());
    Ok(Outcome::Done)
}

fn limit_rows(rep: &LimitReport) -> (Vec<&'static str>, Vec<Vec<f64>>) {
    let name = match rep.parameter {
        SweepParameter::DispersalI => "d_i",
        SweepParameter::Population => "k",
    };
    let (zero, inf) = match rep.parameter {
        SweepParameter::DispersalI => (LimitDirection::DispersalToZero, LimitDirection::DispersalToInfinity),
        SweepParameter::Population => (LimitDirection::PopulationToZero, LimitDirection::PopulationToInfinity),
    };
    let (lo, hi) = rep.bounds.unwrap_or((f64::NAN, f64::NAN));
    let columns = vec![
        name,
        "r0_bisection",
        "r0_next_generation",
        "r0_rayleigh",
        "cw_lower",
        "cw_upper",
        "target_zero",
        "target_infinity",
        "sandwich_lower",
        "sandwich_upper",
    ];
    let rows = rep
        .points
        .iter()
        .map(|p| {
            vec![
                p.parameter,
                p.report.mu0_bisection,
                p.report.mu0_next_generation,
                p.report.mu0_rayleigh.unwrap_or(f64::NAN),
                p.report.cw_lower,
                p.report.cw_upper,
                rep.target(zero).unwrap_or(f64::NAN),
                rep.target(inf).unwrap_or(f64::NAN),
                lo,
                hi,
            ]
        })
        .collect();
    (columns, rows)
}

fn limit_json(rep: &LimitReport) -> Value {
    let mut m = Map::new();
    m.insert("points".into(), Value::from(rep.points.len()));
    let mut targets = Map::new();
    for t in &rep.targets {
        let key = serde_json::to_value(t.direction).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        targets.insert(key, num(t.value));
    }
    m.insert("targets".into(), Value::Object(targets));
    m.insert("bounds".into(), rep.bounds.map(|(a, b)| nums([a, b])).unwrap_or(Value::Null));
    m.insert("monotone".into(), Value::Bool(rep.monotone));
    m.insert("strictly_monotone".into(), Value::Bool(rep.strictly_monotone));
    m.insert("first".into(), opt_num(rep.points.first().map(|p| p.report.value())));
    m.insert("last".into(), opt_num(rep.points.last().map(|p| p.report.value())));
    Value::Object(m)
}

fn sweep(cfg: &RunConfig, problem: &Problem, out: &OutputDir) -> Result<Outcome> {
    let opts = cfg.solver.mu0_options();
    let mut body = Map::new();
    let mut any = false;
    if let Problem::Sis(p) = problem {
        for (key, spec) in [("d_i", &cfg.sweep.d_i), ("k", &cfg.sweep.k)] {
            let Some(spec) = spec else { continue };
            any = true;
            let values = spec.materialize(&format!("sweep.{key}"))?;
            let rep = if key == "d_i" {
                limit_d_i(p, &values, opts)?
            } else {
                limit_k(p, &values, opts)?
            };
            let (columns, rows) = limit_rows(&rep);
            let path = out.write_csv(&format!("sweep_{key}.csv"), &columns, &rows)?;
            println!("{key} sweep: {} points, monotone {} ({})", rows.len(), rep.monotone, path.display());
            body.insert(key.into(), limit_json(&rep));
        }
    }
    if let Some(spec) = &cfg.sweep.mu {
        any = true;
        let mus = spec.materialize("sweep.mu")?;
        let samples = sign_relation_check(&problem.weighted()?, &mus, opts)?;
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| vec![s.mu, s.spectral_bound, s.next_generation, if s.agree { 1.0 } else { 0.0 }])
            .collect();
        let path = out.write_csv("sweep_mu.csv", &["mu", "spectral_bound", "next_generation_minus_one", "agree"], &rows)?;
        let agree = samples.iter().all(|s| s.agree);
        println!("mu sweep: {} samples, signs agree {agree} ({})", rows.len(), path.display());
        let mut m = Map::new();
        m.insert("points".into(), Value::from(samples.len()));
        m.insert("signs_agree".into(), Value::Bool(agree));
        body.insert("mu".into(), Value::Object(m));
    }
    if !any {
        bail!(Error::Config("sweep: no sweep configured".into()));
    }
    out.write_json("sweep.json", body)?;
    Ok(Outcome::Done)
}

fn simulate(cfg: &RunConfig, problem: &Problem, out: &OutputDir) -> Result<Outcome> {
    let Problem::Sis(params) = problem else {
        bail!(Error::Config("simulate: only available for problem = \"sis\"".into()));
    };
    let spec = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("simulate: missing [simulate] section".into()))?;
    let grid = &params.grid;
    let i0 = DVector::from_vec(cfg.build_scalar("simulate.initial_i", grid, &spec.initial_i)?.samples().to_vec());
    let s0 = match &spec.initial_s {
        Some(s) => DVector::from_vec(cfg.build_scalar("simulate.initial_s", grid, s)?.samples().to_vec()),
        None => DVector::from_element(grid.len(), params.k_total) - &i0,
    };
    let sim = Simulator::new(params)?;
    let dt = spec.dt.unwrap_or_else(|| sim.stable_dt());
    let traj = sim.run(s0, i0, spec.t_end, dt)?;
    let last = traj.rows.len() - 1;
    let rows: Vec<Vec<f64>> = traj
        .rows
        .iter()
        .enumerate()
        .filter(|(k, _)| k % spec.record_every == 0 || *k == last)
        .map(|(_, r)| vec![r.t, r.integral_s, r.integral_i, r.min_i, r.max_i, r.drift])
        .collect();
    let path = out.write_csv("trajectory.csv", &["t", "integral_s", "integral_i", "min_i", "max_i", "drift"], &rows)?;
    let mut body = Map::new();
    body.insert("k_total".into(), num(traj.k_total));
    body.insert("t_end".into(), num(spec.t_end));
    body.insert("dt".into(), num(traj.final_state.dt));
    body.insert("steps".into(), Value::from(last));
    body.insert("max_drift".into(), num(traj.max_drift()));
    body.insert("initial_integral_i".into(), num(traj.rows[0].integral_i));
    body.insert("final_integral_i".into(), num(traj.rows[last].integral_i));
    out.write_json("simulate.json", body)?;
    println!(
        "simulated {} steps, max drift {} ({})",
        last,
        output::fmt_f64(traj.max_drift()),
        path.display()
    );
    Ok(Outcome::Done)
}

fn verify(cfg: &RunConfig, problem: &Problem, out: &OutputDir) -> Result<Outcome> {
    let report = run_checks(
        problem,
        cfg.spectral.mu,
        cfg.solver.mu0_options(),
        cfg.solver.certificate_tol,
        out.provenance().seed,
    );
    let width = report.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &report.checks {
        println!("{:<width$}  {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    let mut body = Map::new();
    body.insert("all_passed".into(), Value::Bool(report.all_passed()));
    body.insert(
        "checks".into(),
        Value::Array(
            report
                .checks
                .iter()
                .map(|c| {
                    let mut m = Map::new();
                    m.insert("name".into(), Value::String(c.name.clone()));
                    m.insert("passed".into(), Value::Bool(c.passed));
                    m.insert("detail".into(), Value::String(c.detail.clone()));
                    Value::Object(m)
                })
                .collect(),
        ),
    );
    out.write_json("verify.json", body)?;
    Ok(if report.all_passed() {
        Outcome::Done
    } else {
        Outcome::ChecksFailed
    })
}

fn error_record(command: Command, err: &anyhow::Error) -> (Map<String, Value>, bool) {
    let lib = err.chain().find_map(|e| e.downcast_ref::<Error>());
    let refusal = lib.is_some_and(Error::is_refusal);
    let mut inner = Map::new();
    inner.insert("kind".into(), Value::String(lib.map_or("internal", Error::kind).into()));
    inner.insert("message".into(), Value::String(format!("{err:#}")));
    inner.insert("refusal".into(), Value::Bool(refusal));
    let mut body = Map::new();
    body.insert("command".into(), Value::String(command.name().into()));
    body.insert("error".into(), Value::Object(inner));
    (body, refusal)
}

fn run(cli: &Cli, cfg: &RunConfig, out: &OutputDir) -> Result<Outcome> {
    let problem = cfg.build()?;
    match cli.command {
        Command::Spectral => spectral(cfg, &problem, out),
        Command::R0 => r0(cfg, &problem, out),
        Command::Sweep => sweep(cfg, &problem, out),
        Command::Simulate => simulate(cfg, &problem, out),
        Command::Verify => verify(cfg, &problem, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let Some(path) = cli.config.clone() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(1);
    };
    let loaded = std::fs::read(&path)
        .with_context(|| format!("cannot read {}", path.display()))
        .and_then(|bytes| Ok((bytes, parse_config(&path)?)));
    let (bytes, cfg) = match loaded {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let threads = cli.threads.unwrap_or(cfg.threads);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let out = match OutputDir::new(&cli.out, Provenance::new(&bytes, seed)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &cfg, &out) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(err) => {
            let (body, refusal) = error_record(cli.command, &err);
            eprintln!("{}", render(&out.provenance().wrap(body.clone())).trim_end());
            if let Err(e) = out.write_json("error.json", body) {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(if refusal { 2 } else { 1 })
        }
    }
}
