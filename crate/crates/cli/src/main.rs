//! `tmc` — batch front-end for the mobility-credit market simulator.
//!
//! Scenario files in, reproducible experiment artifacts out. Exit codes:
//! 0 success, 2 configuration error, 3 simulation/runtime error.

mod artifacts;
mod scenario_file;

use anyhow::{anyhow, bail};
use artifacts::{
    day_log_csv, flow_csv, reported_days, summary_json, transactions_csv, welfare_json,
    write_text, Stamp,
};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use scenario_file::{load_scenario_file, ConfigError, ScenarioFile};
use std::fmt::Write as _;
use std::path::PathBuf;
use tmc_core::demand::{InstrumentKind, InstrumentSpec, Mode, TollProfile};
use tmc_core::engine::{pre_day_choices_for, run_to_equilibrium};
use tmc_core::metrics::{welfare_report, WelfareReport};
use tmc_core::optimizer::{grid_search_allocation, optimize, optimize_toll, DeConfig};
use tmc_core::population::synthesize_population;
use tmc_core::scenario::Scenario;
use tmc_core::{Error as CoreError, NUM_INTERVALS};

#[derive(Parser)]
#[command(name = "tmc", version, about = "Tradable mobility credit market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Output directory (defaults to the scenario's output_dir or ./out)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the scenario seed (also drives the population stream)
    #[arg(long)]
    seed: Option<u64>,

    /// Override the day horizon
    #[arg(long)]
    horizon: Option<usize>,

    /// Dotted-path overrides, e.g. --set market.allocation_rate=0.0025
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario to equilibrium and write its artifacts
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Optimize the step-toll profile (or grid-search allocation rates)
    Optimize {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// DE population size
        #[arg(long, default_value_t = 15)]
        np: usize,
        /// DE generations
        #[arg(long, default_value_t = 60)]
        generations: usize,
        /// DE scale factor F
        #[arg(long, default_value_t = 0.8)]
        scale_factor: f64,
        /// DE crossover rate CR
        #[arg(long, default_value_t = 0.9)]
        crossover_rate: f64,
        /// Upper bound on step-toll levels
        #[arg(long, default_value_t = 4.0)]
        max_level: f64,
        /// Grid-search allocation rates instead: lo:hi:step (multiples of
        /// the scenario rate)
        #[arg(long, value_name = "LO:HI:STEP")]
        grid_allocation: Option<String>,
        /// Run the analytic sphere self-test instead of a simulation
        #[arg(long)]
        sphere_selftest: bool,
    },
    /// Compare NT, CP and TMC scenarios over a seed list
    Compare {
        nt: PathBuf,
        cp: PathBuf,
        tmc: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated seed list (defaults to the NT scenario's list)
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Demand-model peak-hour price elasticities by income quintile
    Elasticity {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated flat toll levels
        #[arg(long, default_value = "0,2.5,5")]
        tolls: String,
    },
    /// Synthesize the population and dump it as CSV
    Synth {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() {
    if let Ok(workers) = std::env::var("TMC_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(exit_code(&err));
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if let Some(core) = err.downcast_ref::<CoreError>() {
        if matches!(core, CoreError::Config { .. }) {
            return 2;
        }
    }
    3
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { scenario, common } => cmd_run(&scenario, &common),
        Command::Optimize {
            scenario,
            common,
            np,
            generations,
            scale_factor,
            crossover_rate,
            max_level,
            grid_allocation,
            sphere_selftest,
        } => cmd_optimize(
            &scenario,
            &common,
            np,
            generations,
            scale_factor,
            crossover_rate,
            max_level,
            grid_allocation.as_deref(),
            sphere_selftest,
        ),
        Command::Compare {
            nt,
            cp,
            tmc,
            common,
            seeds,
        } => cmd_compare(&nt, &cp, &tmc, &common, seeds.as_deref()),
        Command::Elasticity {
            scenario,
            common,
            tolls,
        } => cmd_elasticity(&scenario, &common, &tolls),
        Command::Synth { scenario, common } => cmd_synth(&scenario, &common),
    }
}

fn out_dir(file: &ScenarioFile, common: &CommonArgs) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| file.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load(path: &PathBuf, common: &CommonArgs) -> anyhow::Result<(ScenarioFile, String)> {
    load_scenario_file(path, &common.overrides, common.seed, common.horizon)
}

/// NT pairing of a scenario: same population and every other knob, no toll.
fn nt_twin(scenario: &Scenario) -> Scenario {
    let mut twin = scenario.clone();
    twin.instrument = InstrumentSpec::nt();
    twin.interventions.clear();
    twin.supply.capacity_overrides.clear();
    twin
}

fn run_with_welfare(
    scenario: &Scenario,
) -> anyhow::Result<(tmc_core::engine::EquilibriumResult, WelfareReport)> {
    let travelers = synthesize_population(&scenario.population, scenario.supply.free_flow)
        .map_err(anyhow::Error::from)?;
    let result = run_to_equilibrium(scenario).map_err(anyhow::Error::from)?;
    let (nt_scenario, nt_result) = if scenario.instrument.kind == InstrumentKind::NT {
        (scenario.clone(), result.clone())
    } else {
        let twin = nt_twin(scenario);
        let nt_result = run_to_equilibrium(&twin).map_err(anyhow::Error::from)?;
        (twin, nt_result)
    };
    let report = welfare_report(scenario, &result, &travelers, &nt_scenario, &nt_result)
        .map_err(anyhow::Error::from)?;
    Ok((result, report))
}

fn cmd_run(path: &PathBuf, common: &CommonArgs) -> anyhow::Result<()> {
    let (file, hash) = load(path, common)?;
    let dir = out_dir(&file, common);
    let scenario = file.clone().into_scenario();
    let stamp = Stamp {
        scenario_sha256: &hash,
        seed: scenario.seed,
    };
    let (result, report) = run_with_welfare(&scenario)?;
    let days = reported_days(&result);
    write_text(&dir, "summary.json", &summary_json(&scenario, &result, Some(&report), &stamp))?;
    write_text(&dir, "welfare.json", &welfare_json(&report, &stamp))?;
    write_text(&dir, "day_log.csv", &day_log_csv(&days, &stamp))?;
    write_text(&dir, "flows.csv", &flow_csv(&days, &stamp))?;
    write_text(&dir, "transactions.csv", &transactions_csv(&days, &stamp))?;
    println!(
        "run: converged={} days={} sw={:.2} -> {}",
        result.converged,
        result.days_run,
        report.social_welfare,
        dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_optimize(
    path: &PathBuf,
    common: &CommonArgs,
    np: usize,
    generations: usize,
    scale_factor: f64,
    crossover_rate: f64,
    max_level: f64,
    grid_allocation: Option<&str>,
    sphere_selftest: bool,
) -> anyhow::Result<()> {
    let (file, hash) = load(path, common)?;
    let dir = out_dir(&file, common);
    let scenario = file.clone().into_scenario();
    let stamp = Stamp {
        scenario_sha256: &hash,
        seed: scenario.seed,
    };

    if sphere_selftest {
        let cfg = DeConfig {
            population_size: 40,
            scale_factor: 0.5,
            crossover_rate: 0.3,
            max_generations: generations.max(200),
            bounds: vec![(-5.0, 5.0); 11],
            objective_replications: 1,
            seed: scenario.seed,
        };
        let result = optimize(|x| (-x.iter().map(|v| v * v).sum::<f64>(), true), &cfg)
            .map_err(anyhow::Error::from)?;
        let dist = result.best_params.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("sphere self-test: best fitness {:.3e}, |x| {:.3e}", result.best_fitness, dist);
        if dist > 1e-3 {
            bail!("sphere self-test failed to reach the optimum (|x| = {dist:.3e})");
        }
        return Ok(());
    }

    if scenario.instrument.kind == InstrumentKind::NT {
        return Err(anyhow!(ConfigError(
            "nothing to optimize under NT".to_string()
        )));
    }

    if let Some(spec) = grid_allocation {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(anyhow!(ConfigError(format!(
                "--grid-allocation expects LO:HI:STEP, got '{spec}'"
            ))));
        }
        let lo: f64 = parts[0].parse().map_err(|_| anyhow!(ConfigError("bad LO".into())))?;
        let hi: f64 = parts[1].parse().map_err(|_| anyhow!(ConfigError("bad HI".into())))?;
        let step: f64 = parts[2].parse().map_err(|_| anyhow!(ConfigError("bad STEP".into())))?;
        if step <= 0.0 || hi < lo {
            return Err(anyhow!(ConfigError("grid requires lo <= hi, step > 0".into())));
        }
        let base_rate = scenario.market.allocation_rate;
        let mut grid = Vec::new();
        let mut x = lo;
        while x <= hi + 1e-9 {
            grid.push(base_rate * x);
            x += step;
        }
        let (best, trace) =
            grid_search_allocation(&scenario, &grid).map_err(anyhow::Error::from)?;
        let mut csv = stamp.csv_header();
        csv.push_str("allocation_rate,rate_multiple,social_welfare\n");
        for (rate, welfare) in &trace {
            let _ = writeln!(csv, "{},{},{}", rate, rate / base_rate, welfare);
        }
        write_text(&dir, "allocation_grid.csv", &csv)?;
        println!(
            "grid: best rate {} ({}x base) -> {}",
            best,
            best / base_rate,
            dir.display()
        );
        return Ok(());
    }

    let mut bounds = vec![(0.0, max_level); 5];
    bounds.extend(vec![(330.0, 630.0); 6]);
    let cfg = DeConfig {
        population_size: np,
        scale_factor,
        crossover_rate,
        max_generations: generations,
        bounds,
        objective_replications: 1,
        seed: scenario.seed,
    };
    let (best, de) = optimize_toll(&scenario, &cfg).map_err(anyhow::Error::from)?;

    let mut trace = stamp.csv_header();
    trace.push_str("generation,best_welfare,mean_welfare");
    for i in 0..11 {
        let _ = write!(trace, ",p{i}");
    }
    trace.push('\n');
    for g in &de.trace {
        let _ = write!(trace, "{},{},{}", g.generation, g.best_fitness, g.mean_fitness);
        for p in &g.best_params {
            let _ = write!(trace, ",{p}");
        }
        trace.push('\n');
    }
    write_text(&dir, "optimize_trace.csv", &trace)?;

    let profile_doc = serde_json::json!({
        "scenario_sha256": hash,
        "seed": scenario.seed,
        "best_welfare": de.best_fitness,
        "nonconverged_evaluations": de.nonconverged_evaluations,
        "profile": best,
    });
    write_text(
        &dir,
        "best_profile.json",
        &serde_json::to_string_pretty(&profile_doc)?,
    )?;
    println!(
        "optimize: best welfare {:.2} -> {}",
        de.best_fitness,
        dir.display()
    );
    Ok(())
}

struct CompareRow {
    welfare: f64,
    gini: f64,
    tti: f64,
    pt_share: f64,
    benefits: Vec<f64>,
    incomes: Vec<f64>,
}

fn cmd_compare(
    nt_path: &PathBuf,
    cp_path: &PathBuf,
    tmc_path: &PathBuf,
    common: &CommonArgs,
    seeds: Option<&str>,
) -> anyhow::Result<()> {
    let (nt_file, nt_hash) = load(nt_path, common)?;
    let (cp_file, _) = load(cp_path, common)?;
    let (tmc_file, _) = load(tmc_path, common)?;
    let dir = out_dir(&nt_file, common);

    if nt_file.instrument.kind != InstrumentKind::NT
        || cp_file.instrument.kind != InstrumentKind::CP
        || tmc_file.instrument.kind != InstrumentKind::TMC
    {
        return Err(anyhow!(ConfigError(
            "compare expects scenarios in the order NT CP TMC".into()
        )));
    }
    if nt_file.population.seed != cp_file.population.seed
        || nt_file.population.seed != tmc_file.population.seed
    {
        return Err(anyhow!(ConfigError(
            "compare requires all three scenarios to share the population seed".into()
        )));
    }

    let seed_list: Vec<u64> = match seeds {
        Some(spec) => spec
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| anyhow!(ConfigError(format!("bad --seeds: {e}"))))?,
        None => nt_file.seed_list(),
    };

    let scenarios = [
        nt_file.clone().into_scenario(),
        cp_file.into_scenario(),
        tmc_file.into_scenario(),
    ];

    // One job per (seed, instrument); instruments of a seed share the
    // population draw through the common seed.
    let jobs: Vec<(u64, usize)> = seed_list
        .iter()
        .flat_map(|&s| (0..3).map(move |i| (s, i)))
        .collect();
    let rows: Vec<((u64, usize), CompareRow)> = jobs
        .par_iter()
        .map(|&(seed, idx)| {
            let mut scenario = scenarios[idx].clone();
            scenario.seed = seed;
            scenario.population.seed = seed;
            let travelers =
                synthesize_population(&scenario.population, scenario.supply.free_flow)?;
            let result = run_to_equilibrium(&scenario)?;
            let (nt_scenario, nt_result) = if idx == 0 {
                (scenario.clone(), result.clone())
            } else {
                let mut nt = scenarios[0].clone();
                nt.seed = seed;
                nt.population.seed = seed;
                let r = run_to_equilibrium(&nt)?;
                (nt, r)
            };
            let report = welfare_report(&scenario, &result, &travelers, &nt_scenario, &nt_result)?;
            let incomes: Vec<f64> = travelers.iter().map(|t| t.disposable_income).collect();
            Ok((
                (seed, idx),
                CompareRow {
                    welfare: report.social_welfare,
                    gini: report.gini,
                    tti: report.tti.unwrap_or(f64::NAN),
                    pt_share: report.pt_share,
                    benefits: report.per_traveler_benefit,
                    incomes,
                },
            ))
        })
        .collect::<tmc_core::Result<Vec<_>>>()
        .map_err(anyhow::Error::from)?;

    let names = ["NT", "CP", "TMC"];
    let mut table = Stamp {
        scenario_sha256: &nt_hash,
        seed: nt_file.seed,
    }
    .csv_header();
    table.push_str(
        "instrument,welfare_mean,welfare_sd,gini_mean,gini_sd,tti_mean,tti_sd,pt_share_mean,pt_share_sd\n",
    );
    for idx in 0..3 {
        let vals: Vec<&CompareRow> = rows
            .iter()
            .filter(|((_, i), _)| *i == idx)
            .map(|(_, r)| r)
            .collect();
        let stat = |f: &dyn Fn(&CompareRow) -> f64| -> (f64, f64) {
            let xs: Vec<f64> = vals.iter().map(|r| f(r)).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n.max(1.0);
            (mean, var.sqrt())
        };
        let (wm, ws) = stat(&|r| r.welfare);
        let (gm, gs) = stat(&|r| r.gini);
        let (tm, ts) = stat(&|r| r.tti);
        let (pm, ps) = stat(&|r| r.pt_share);
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{},{}",
            names[idx], wm, ws, gm, gs, tm, ts, pm, ps
        );
    }
    write_text(&dir, "comparison.csv", &table)?;

    // Cumulative user-benefit curves, averaged over seeds, for CP and TMC.
    let curve = |idx: usize, by_income: bool| -> Vec<f64> {
        let vals: Vec<&CompareRow> = rows
            .iter()
            .filter(|((_, i), _)| *i == idx)
            .map(|(_, r)| r)
            .collect();
        let mut acc = vec![0.0; 101];
        for row in &vals {
            let mut order: Vec<usize> = (0..row.benefits.len()).collect();
            if by_income {
                order.sort_by(|&a, &b| row.incomes[a].partial_cmp(&row.incomes[b]).unwrap());
            } else {
                order.sort_by(|&a, &b| row.benefits[a].partial_cmp(&row.benefits[b]).unwrap());
            }
            let n = order.len();
            let mut cumulative = 0.0;
            let mut next_idx = 0usize;
            for (rank, &t) in order.iter().enumerate() {
                cumulative += row.benefits[t];
                while next_idx <= 100 && (rank + 1) * 100 >= next_idx * n {
                    acc[next_idx] += cumulative / n as f64;
                    next_idx += 1;
                }
            }
            while next_idx <= 100 {
                acc[next_idx] += cumulative / n as f64;
                next_idx += 1;
            }
        }
        acc.iter().map(|x| x / vals.len() as f64).collect()
    };
    for (name, by_income) in [("benefit_curve.csv", false), ("benefit_curve_by_income.csv", true)] {
        let cp = curve(1, by_income);
        let tmc = curve(2, by_income);
        let mut csv = Stamp {
            scenario_sha256: &nt_hash,
            seed: nt_file.seed,
        }
        .csv_header();
        csv.push_str("percentile,cp,tmc\n");
        for p in 0..=100 {
            let _ = writeln!(csv, "{},{},{}", p, cp[p], tmc[p]);
        }
        write_text(&dir, name, &csv)?;
    }

    println!("compare: {} seeds -> {}", seed_list.len(), dir.display());
    Ok(())
}

/// Demand-model arc elasticity of 7-8 AM car demand at frozen free-flow
/// forecasts; the toll perturbs by +/-10%, the operating cost stands in at
/// toll zero.
fn cmd_elasticity(path: &PathBuf, common: &CommonArgs, tolls: &str) -> anyhow::Result<()> {
    let (file, hash) = load(path, common)?;
    let dir = out_dir(&file, common);
    if file.instrument.kind != InstrumentKind::CP {
        return Err(anyhow!(ConfigError(
            "elasticity requires a CP scenario".into()
        )));
    }
    let levels: Vec<f64> = tolls
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!(ConfigError(format!("bad --tolls: {e}"))))?;
    let base = file.clone().into_scenario();
    let seeds = file.seed_list();

    let mut csv = Stamp {
        scenario_sha256: &hash,
        seed: base.seed,
    }
    .csv_header();
    csv.push_str("toll,q1,q2,q3,q4,q5,total\n");
    let mut totals = Vec::new();
    for &level in &levels {
        let per_seed: Vec<[f64; 6]> = seeds
            .par_iter()
            .map(|&seed| elasticity_for(&base, level, seed))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut mean = [0.0_f64; 6];
        for row in &per_seed {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / per_seed.len() as f64;
            }
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            level, mean[0], mean[1], mean[2], mean[3], mean[4], mean[5]
        );
        totals.push((level, mean[5]));
    }
    write_text(&dir, "elasticity.csv", &csv)?;
    for (level, total) in totals {
        println!("toll {level}: total elasticity {total:.3}");
    }
    Ok(())
}

fn elasticity_for(base: &Scenario, level: f64, seed: u64) -> anyhow::Result<[f64; 6]> {
    let free_flow = vec![base.supply.free_flow; NUM_INTERVALS];
    let variant = |toll: f64, cf_scale: f64| -> Scenario {
        let mut s = base.clone();
        s.seed = seed;
        s.population.seed = seed;
        s.instrument = InstrumentSpec {
            kind: InstrumentKind::CP,
            toll_profile: Some(TollProfile::flat(toll, 390.0, 570.0)),
        };
        s.supply.car_operating_cost *= cf_scale;
        s
    };
    let (lo, hi) = if level == 0.0 {
        (variant(0.0, 0.9), variant(0.0, 1.1))
    } else {
        (variant(level * 0.9, 1.0), variant(level * 1.1, 1.0))
    };
    let travelers = synthesize_population(&lo.population, lo.supply.free_flow)
        .map_err(anyhow::Error::from)?;
    // Income quintile of every traveler.
    let mut order: Vec<usize> = (0..travelers.len()).collect();
    order.sort_by(|&a, &b| {
        travelers[a]
            .disposable_income
            .partial_cmp(&travelers[b].disposable_income)
            .unwrap()
    });
    let mut quintile = vec![0usize; travelers.len()];
    for (rank, &t) in order.iter().enumerate() {
        quintile[t] = (rank * 5 / travelers.len()).min(4);
    }

    let peak = |scenario: &Scenario| -> anyhow::Result<[f64; 6]> {
        let decisions = pre_day_choices_for(scenario, &free_flow).map_err(anyhow::Error::from)?;
        let mut counts = [0.0_f64; 6];
        for (i, d) in decisions.iter().enumerate() {
            if d.mode == Mode::Car && (84..96).contains(&d.interval) {
                counts[quintile[i]] += 1.0;
                counts[5] += 1.0;
            }
        }
        Ok(counts)
    };
    let ql = peak(&lo)?;
    let qh = peak(&hi)?;
    let mut out = [0.0_f64; 6];
    for k in 0..6 {
        let mid = (ql[k] + qh[k]) / 2.0;
        out[k] = if mid == 0.0 {
            0.0
        } else {
            ((qh[k] - ql[k]) / mid) / 0.2
        };
    }
    Ok(out)
}

fn cmd_synth(path: &PathBuf, common: &CommonArgs) -> anyhow::Result<()> {
    let (file, hash) = load(path, common)?;
    let dir = out_dir(&file, common);
    let scenario = file.clone().into_scenario();
    let travelers = synthesize_population(&scenario.population, scenario.supply.free_flow)
        .map_err(anyhow::Error::from)?;
    let mut csv = Stamp {
        scenario_sha256: &hash,
        seed: scenario.seed,
    }
    .csv_header();
    csv.push_str(&tmc_core::population::population_to_csv(&travelers));
    write_text(&dir, "population.csv", &csv)?;
    println!("synth: {} travelers -> {}", travelers.len(), dir.display());
    Ok(())
}
