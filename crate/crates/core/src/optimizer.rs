//! Differential evolution over step-toll profiles and grid search over
//! allocation rates.
//!
//! DE/rand/1/bin: mutation `Y = X_r1 + F (X_r2 - X_r3)` with clipping to
//! bounds, binomial crossover with one forced gene, and greedy selection on
//! simulated social welfare. Candidate evaluations within a generation share
//! the scenario seed (common random numbers), so fitness differences come
//! from the parameters alone.

use crate::demand::{InstrumentKind, InstrumentSpec, TollProfile};
use crate::engine::run_to_equilibrium;
use crate::metrics::welfare_report;
use crate::population::synthesize_population;
use crate::rng::{stream_rng, Stream};
use crate::scenario::Scenario;
use crate::{Error, Result, DAY_MINUTES};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Differential-evolution settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeConfig {
    /// Population size NP (at least 4; mutation draws three distinct peers).
    pub population_size: usize,
    /// Scale factor F.
    pub scale_factor: f64,
    /// Crossover rate CR.
    pub crossover_rate: f64,
    pub max_generations: usize,
    /// Per-gene (lower, upper) bounds.
    pub bounds: Vec<(f64, f64)>,
    /// Simulation replications averaged per evaluation.
    #[serde(default = "default_replications")]
    pub objective_replications: usize,
    pub seed: u64,
}

fn default_replications() -> usize {
    1
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::config(
                "de.population_size",
                "mutation needs three distinct peers besides the target",
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::config("de.crossover_rate", "must lie in [0, 1]"));
        }
        if self.bounds.is_empty() || self.bounds.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::config("de.bounds", "require lo <= hi per gene"));
        }
        if self.objective_replications == 0 {
            return Err(Error::config("de.objective_replications", "must be >= 1"));
        }
        Ok(())
    }

    /// Default bounds for a toll-profile search: five levels up to
    /// `max_level` and six breakpoints inside the day.
    pub fn toll_bounds(max_level: f64) -> Vec<(f64, f64)> {
        let mut bounds = vec![(0.0, max_level); 5];
        bounds.extend(vec![(0.0, DAY_MINUTES as f64); 6]);
        bounds
    }
}

/// DE/rand/1 mutation with clipping.
pub fn mutate(
    population: &[Vec<f64>],
    target: usize,
    scale_factor: f64,
    bounds: &[(f64, f64)],
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let np = population.len();
    if np < 4 {
        return Err(Error::config(
            "de.population_size",
            "mutation needs at least 4 candidates",
        ));
    }
    let mut picks = [0usize; 3];
    let mut chosen = 0;
    while chosen < 3 {
        let r = rng.random_range(0..np);
        if r != target && !picks[..chosen].contains(&r) {
            picks[chosen] = r;
            chosen += 1;
        }
    }
    let (r1, r2, r3) = (picks[0], picks[1], picks[2]);
    let variant = (0..bounds.len())
        .map(|g| {
            let y = population[r1][g] + scale_factor * (population[r2][g] - population[r3][g]);
            y.clamp(bounds[g].0, bounds[g].1)
        })
        .collect();
    Ok(variant)
}

/// Binomial crossover with one forced gene from the variant.
pub fn crossover(
    target: &[f64],
    variant: &[f64],
    crossover_rate: f64,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    debug_assert_eq!(target.len(), variant.len());
    let forced = rng.random_range(0..target.len());
    (0..target.len())
        .map(|g| {
            if rng.random::<f64>() < crossover_rate || g == forced {
                variant[g]
            } else {
                target[g]
            }
        })
        .collect()
}

/// Greedy selection: the trial survives only on a strict improvement.
pub fn select(target_fitness: f64, trial_fitness: f64) -> bool {
    trial_fitness > target_fitness
}

/// Per-generation trace entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_params: Vec<f64>,
}

/// Result of a DE run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeResult {
    pub best_params: Vec<f64>,
    pub best_fitness: f64,
    pub trace: Vec<GenerationStats>,
    /// Candidates whose simulation did not converge within the horizon.
    pub nonconverged_evaluations: usize,
}

/// Latin-hypercube-style stratified initial population.
fn initial_population(config: &DeConfig, rng: &mut ChaCha12Rng) -> Vec<Vec<f64>> {
    let np = config.population_size;
    let dims = config.bounds.len();
    let mut strata: Vec<Vec<usize>> = (0..dims)
        .map(|_| {
            let mut idx: Vec<usize> = (0..np).collect();
            idx.shuffle(rng);
            idx
        })
        .collect();
    (0..np)
        .map(|i| {
            (0..dims)
                .map(|d| {
                    let (lo, hi) = config.bounds[d];
                    let stratum = strata[d].pop().unwrap_or(i % np) as f64;
                    let u = (stratum + rng.random::<f64>()) / np as f64;
                    lo + u * (hi - lo)
                })
                .collect()
        })
        .collect()
}

/// Generic DE driver maximizing `objective`; evaluations within a
/// generation run in parallel.
pub fn optimize<F>(objective: F, config: &DeConfig) -> Result<DeResult>
where
    F: Fn(&[f64]) -> (f64, bool) + Sync,
{
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Optimizer);
    let mut population = initial_population(config, &mut rng);
    let evals: Vec<(f64, bool)> = population.par_iter().map(|c| objective(c)).collect();
    let mut nonconverged = evals.iter().filter(|(_, ok)| !ok).count();
    let mut fitness: Vec<f64> = evals.into_iter().map(|(f, _)| f).collect();

    let mut trace = Vec::with_capacity(config.max_generations);
    for generation in 0..config.max_generations {
        let trials: Vec<Vec<f64>> = (0..population.len())
            .map(|i| {
                let variant =
                    mutate(&population, i, config.scale_factor, &config.bounds, &mut rng)?;
                Ok(crossover(
                    &population[i],
                    &variant,
                    config.crossover_rate,
                    &mut rng,
                ))
            })
            .collect::<Result<_>>()?;
        let trial_evals: Vec<(f64, bool)> = trials.par_iter().map(|c| objective(c)).collect();
        for (i, (fit, ok)) in trial_evals.into_iter().enumerate() {
            if !ok {
                nonconverged += 1;
            }
            if select(fitness[i], fit) {
                population[i] = trials[i].clone();
                fitness[i] = fit;
            }
        }
        let (best_idx, best_fit) = fitness
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, f)| (i, *f))
            .expect("nonempty population");
        trace.push(GenerationStats {
            generation,
            best_fitness: best_fit,
            mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
            best_params: population[best_idx].clone(),
        });
    }
    let (best_idx, best_fitness) = fitness
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, f)| (i, *f))
        .expect("nonempty population");
    Ok(DeResult {
        best_params: population[best_idx].clone(),
        best_fitness,
        trace,
        nonconverged_evaluations: nonconverged,
    })
}

/// Decode a raw 11-gene vector into a valid step-toll profile: five levels
/// then six breakpoints, breakpoints sorted and separated by at least one
/// minute.
pub fn decode_toll(raw: &[f64]) -> Result<TollProfile> {
    if raw.len() != 11 {
        return Err(Error::domain(format!(
            "toll candidate needs 11 genes, got {}",
            raw.len()
        )));
    }
    let mut levels = [0.0; 5];
    for (i, l) in levels.iter_mut().enumerate() {
        *l = raw[i].max(0.0);
    }
    let mut b: Vec<f64> = raw[5..11].to_vec();
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut breakpoints = [0.0; 6];
    breakpoints[0] = b[0];
    for i in 1..6 {
        breakpoints[i] = b[i].max(breakpoints[i - 1] + 1.0);
    }
    let profile = TollProfile {
        breakpoints,
        levels,
    };
    profile.validate()?;
    Ok(profile)
}

/// Social welfare of a scenario, paired against its NT baseline.
///
/// Returns the welfare and whether the run converged; non-convergent runs
/// are scored with their final-window welfare.
pub fn evaluate_welfare(scenario: &Scenario) -> Result<(f64, bool)> {
    let mut nt = scenario.clone();
    nt.instrument = InstrumentSpec::nt();
    let travelers = synthesize_population(&scenario.population, scenario.supply.free_flow)?;
    let nt_result = run_to_equilibrium(&nt)?;
    let result = run_to_equilibrium(scenario)?;
    let report = welfare_report(scenario, &result, &travelers, &nt, &nt_result)?;
    Ok((report.social_welfare, result.converged))
}

/// Differential-evolution search for the welfare-maximizing toll profile.
pub fn optimize_toll(scenario: &Scenario, config: &DeConfig) -> Result<(TollProfile, DeResult)> {
    if scenario.instrument.kind == InstrumentKind::NT {
        return Err(Error::config("instrument", "nothing to optimize under NT"));
    }
    config.validate()?;
    if config.bounds.len() != 11 {
        return Err(Error::config(
            "de.bounds",
            "toll optimization needs 11 genes (5 levels + 6 breakpoints)",
        ));
    }
    // The NT pairing is shared by all evaluations (common random numbers).
    let mut nt = scenario.clone();
    nt.instrument = InstrumentSpec::nt();
    let travelers = synthesize_population(&scenario.population, scenario.supply.free_flow)?;
    let nt_result = run_to_equilibrium(&nt)?;

    let objective = |raw: &[f64]| -> (f64, bool) {
        let profile = match decode_toll(raw) {
            Ok(p) => p,
            Err(_) => return (f64::NEG_INFINITY, true),
        };
        let mut candidate = scenario.clone();
        candidate.instrument.toll_profile = Some(profile);
        match run_to_equilibrium(&candidate) {
            Ok(result) => {
                match welfare_report(&candidate, &result, &travelers, &nt, &nt_result) {
                    Ok(report) => (report.social_welfare, result.converged),
                    Err(_) => (f64::NEG_INFINITY, true),
                }
            }
            Err(_) => (f64::NEG_INFINITY, true),
        }
    };
    let de = optimize(objective, config)?;
    let best = decode_toll(&de.best_params)?;
    Ok((best, de))
}

/// Evaluate `eval` over a grid and return the argmax with the full trace.
pub fn grid_search<F>(grid: &[f64], eval: F) -> Result<(f64, Vec<(f64, f64)>)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::config("grid", "grid is empty"));
    }
    let evaluations: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&x| Ok((x, eval(x)?)))
        .collect::<Result<_>>()?;
    let best = evaluations
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(x, _)| *x)
        .expect("nonempty grid");
    Ok((best, evaluations))
}

/// Equilibrium welfare per allocation rate with the toll profile held
/// fixed; returns the welfare-maximizing rate. The NT pairing does not
/// depend on the rate and is computed once.
pub fn grid_search_allocation(
    scenario: &Scenario,
    rate_grid: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    let mut nt = scenario.clone();
    nt.instrument = InstrumentSpec::nt();
    let travelers = synthesize_population(&scenario.population, scenario.supply.free_flow)?;
    let nt_result = run_to_equilibrium(&nt)?;
    grid_search(rate_grid, |rate| {
        let mut candidate = scenario.clone();
        candidate.market.allocation_rate = rate;
        let result = run_to_equilibrium(&candidate)?;
        let report = welfare_report(&candidate, &result, &travelers, &nt, &nt_result)?;
        Ok(report.social_welfare)
    })
}
