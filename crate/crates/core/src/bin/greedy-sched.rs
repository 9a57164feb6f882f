use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use greedy_sched::arrivals::{read_rates_csv, SplitMode};
use greedy_sched::em::{em_assign, sp_params_from_em, EmInit, EmOptions};
use greedy_sched::sim::{rate_sweep, replicate, write_summary_csv, write_trace_csv, SimConfig, SweepRow};
use greedy_sched::stability::{
    decompose, in_maximal_region, in_priority_region, sp_condition, sp_params_from_decomposition,
    test_feasibility,
};
use greedy_sched::{ConflictGraph, Error, PriorityVector, Result, SpParams};

#[derive(Parser)]
#[command(name = "greedy-sched", version, about = "Greedy maximal scheduling on conflict graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicated simulations and write the sampled queue trace.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Arrival specifier, e.g. bernoulli:0.45, ring6adv:0.1, trace:file.csv
        #[arg(long)]
        arrivals: Option<String>,
        /// Trace CSV destination (default stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicate at each uniform rate and write the summary CSV.
    Sweep {
        #[command(flatten)]
        sim: SimArgs,
        /// Arrival family (bernoulli, ring6adv, bipartiteadv, bipartitepairs).
        #[arg(long)]
        arrivals: Option<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        /// Summary CSV destination (default stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test a rate vector against a stability region.
    Check {
        #[arg(long)]
        graph: String,
        /// Uniform rate, comma-separated vector, or `link,rate` CSV file.
        #[arg(long, allow_hyphen_values = true)]
        rates: String,
        #[arg(long, value_enum, default_value = "lqf")]
        region: Region,
        /// Priority vector for `--region priority`, e.g. 1,2,3,4,5,6
        #[arg(long)]
        priority: Option<String>,
        /// Multi-priority parameter file for `--region sp`.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Two-priority assignment by alternating minimisation; prints JSON.
    AssignEm {
        #[arg(long)]
        graph: String,
        #[arg(long, allow_hyphen_values = true)]
        rates: String,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long, default_value_t = greedy_sched::em::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the resulting two-class parameter file.
        #[arg(long)]
        params_out: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        block: u64,
    },
    /// Write a rate vector as a convex combination of independent sets.
    Decompose {
        #[arg(long)]
        graph: String,
        #[arg(long, allow_hyphen_values = true)]
        rates: String,
        #[arg(long, default_value_t = 100)]
        block: u64,
        /// Also write the multi-priority parameter file.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Region {
    Maximal,
    Priority,
    Lqf,
    Sp,
}

#[derive(Args)]
struct SimArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ring:<n>, bipartite8, or an edge-list file.
    #[arg(long)]
    graph: Option<String>,
    /// lqf, lqf:random, maxweight, sp:<file|p1,p2,..>, spk:<file>, sp-opt, sp2-em, spk-cara
    #[arg(long)]
    scheduler: Option<String>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_every: Option<u64>,
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Probabilistic,
    RoundRobin,
}

impl SimArgs {
    fn config(&self, arrivals: Option<&String>) -> Result<SimConfig> {
        let mut c = match &self.config {
            Some(path) => SimConfig::from_json(&std::fs::read_to_string(path)?)?,
            None => {
                let need = |v: &Option<String>, flag: &str| {
                    v.clone()
                        .ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required without --config")))
                };
                SimConfig::new(
                    &need(&self.graph, "graph")?,
                    &need(&self.scheduler, "scheduler")?,
                    &need(&arrivals.cloned(), "arrivals")?,
                    100_000,
                )
            }
        };
        if let Some(v) = &self.graph {
            c.graph = v.clone();
        }
        if let Some(v) = &self.scheduler {
            c.scheduler = v.clone();
        }
        if let Some(v) = arrivals {
            c.arrivals = v.clone();
        }
        if let Some(v) = self.horizon {
            c.horizon = v;
        }
        if let Some(v) = self.runs {
            c.runs = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.sample_every {
            c.sample_every = v;
        }
        if let Some(v) = self.split {
            c.split = match v {
                SplitArg::Probabilistic => SplitMode::Probabilistic,
                SplitArg::RoundRobin => SplitMode::RoundRobin,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse_rates(spec: &str, n: usize) -> Result<Vec<f64>> {
    if let Ok(r) = spec.trim().parse::<f64>() {
        return Ok(vec![r; n]);
    }
    let rates = if spec.contains(',') && !std::path::Path::new(spec).exists() {
        spec.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad rate `{t}`"))))
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut r = read_rates_csv(File::open(spec)?)?;
        r.resize(n.max(r.len()), 0.0);
        r
    };
    if rates.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rates.len(),
        });
    }
    Ok(rates)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct EmReport<'a> {
    t: f64,
    x: &'a [f64],
    p1: &'a [usize],
    p2: &'a [usize],
    trace: &'a [f64],
    stable: bool,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { sim, arrivals, out } => {
            let config = sim.config(arrivals.as_ref())?;
            let rep = replicate(&config)?;
            write_trace_csv(&rep, output(&out)?)?;
            for (r, run) in rep.runs.iter().enumerate() {
                eprintln!(
                    "run={r} seed={} final_max_queue={} slope={:.6} departure_rate_error={:.6} verdict={}",
                    run.seed,
                    run.final_max_queue(),
                    run.slope(),
                    run.departure_rate_error(),
                    run.verdict(None)
                );
            }
            eprintln!(
                "mean_final_max_queue={} max_final_max_queue={} mean_slope={:.6} max_slope={:.6}",
                rep.mean_final_max_queue(),
                rep.max_final_max_queue(),
                rep.mean_slope(),
                rep.max_slope()
            );
        }
        Command::Sweep {
            sim,
            arrivals,
            rates,
            out,
        } => {
            let config = sim.config(arrivals.as_ref())?;
            let rows: Vec<SweepRow> = rate_sweep(&config, &rates)?;
            write_summary_csv(&rows, output(&out)?)?;
            for row in &rows {
                eprintln!(
                    "scheduler={} rate={} mean_final_max_queue={} mean_slope={:.6}",
                    row.scheduler,
                    row.rate,
                    row.result.mean_final_max_queue(),
                    row.result.mean_slope()
                );
            }
        }
        Command::Check {
            graph,
            rates,
            region,
            priority,
            params,
        } => {
            let g = ConflictGraph::from_spec(&graph)?;
            let (name, verdict) = match region {
                Region::Maximal => ("maximal", in_maximal_region(&g, &parse_rates(&rates, g.n())?)?),
                Region::Lqf => ("lqf", test_feasibility(&g, &parse_rates(&rates, g.n())?)?),
                Region::Priority => {
                    let p = priority
                        .ok_or_else(|| Error::InvalidParameter("--priority is required".into()))?;
                    let p = PriorityVector::parse(&p.replace(',', " "))?;
                    ("priority", in_priority_region(&g, &p, &parse_rates(&rates, g.n())?)?)
                }
                Region::Sp => {
                    let path =
                        params.ok_or_else(|| Error::InvalidParameter("--params is required".into()))?;
                    let params = SpParams::from_json(&std::fs::read_to_string(path)?)?;
                    ("sp", sp_condition(&g, &params)?)
                }
            };
            println!("{}", verdict.report(name));
        }
        Command::AssignEm {
            graph,
            rates,
            tol,
            max_iter,
            restarts,
            seed,
            params_out,
            block,
        } => {
            let g = ConflictGraph::from_spec(&graph)?;
            let a = parse_rates(&rates, g.n())?;
            let opts = EmOptions {
                tol,
                max_iter,
                init: EmInit::Half,
                restarts,
                seed,
            };
            let s = em_assign(&g, &a, &opts)?;
            let out = EmReport {
                t: s.t,
                x: &s.x,
                p1: s.p1.as_slice(),
                p2: s.p2.as_slice(),
                trace: &s.trace,
                stable: s.stable(),
            };
            println!("{}", serde_json::to_string(&out)?);
            if let Some(path) = params_out {
                std::fs::write(path, sp_params_from_em(&s, &a, block)?.to_json())?;
            }
        }
        Command::Decompose {
            graph,
            rates,
            block,
            params_out,
        } => {
            let g = ConflictGraph::from_spec(&graph)?;
            let a = parse_rates(&rates, g.n())?;
            let d = decompose(&g, &a)?;
            for (s, w) in d.sets.iter().zip(&d.weights) {
                println!("{w}\t{s}");
            }
            if let Some(path) = params_out {
                std::fs::write(path, sp_params_from_decomposition(&g, &d, block)?.to_json())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_invariant_violation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
