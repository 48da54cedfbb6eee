// criterion-5 protocol: per allocation rate, re-optimize the token toll
// within the scale family of the base profile, then read the price
use tmc_core::demand::{InstrumentKind, InstrumentSpec, TollProfile};
use tmc_core::engine::run_to_equilibrium;
use tmc_core::metrics::welfare_report;
use tmc_core::population::synthesize_population;
use tmc_core::scenario::Scenario;

const RATE: f64 = 0.0032958;

fn scaled(profile: &TollProfile, s: f64) -> TollProfile {
    let mut p = profile.clone();
    for l in p.levels.iter_mut() { *l *= s; }
    p
}

fn main() {
    let profile: TollProfile =
        serde_json::from_str(&std::fs::read_to_string("/tmp/opt_profile.json").unwrap()).unwrap();
    let nt = Scenario::base(InstrumentSpec::nt(), 1);
    let travelers = synthesize_population(&nt.population, nt.supply.free_flow).unwrap();
    let nt_result = run_to_equilibrium(&nt).unwrap();

    for rate_scale in [0.85_f64, 1.0, 1.15] {
        let mut best: Option<(f64, f64, f64)> = None; // (welfare, toll scale, price)
        let mut s_grid: Vec<f64> = Vec::new();
        let lo = if rate_scale < 1.0 { 1.0 } else { 0.7 };
        let hi = if rate_scale < 1.0 { 1.4 } else { 1.05 };
        let mut x = lo;
        while x <= hi + 1e-9 { s_grid.push(x); x += 0.05; }
        if (rate_scale - 1.0).abs() < 1e-9 { s_grid = vec![0.9, 0.95, 1.0, 1.05, 1.1]; }
        for &s in &s_grid {
            let mut sc = Scenario::base(
                InstrumentSpec { kind: InstrumentKind::TMC, toll_profile: Some(scaled(&profile, s)) },
                1,
            );
            sc.market.allocation_rate = RATE * rate_scale;
            sc.engine.horizon = 250;
            let r = run_to_equilibrium(&sc).unwrap();
            if !r.converged {
                println!("  s {s:.2} not converged (price {:.2})", r.final_day().price);
                continue;
            }
            let rep = welfare_report(&sc, &r, &travelers, &nt, &nt_result).unwrap();
            let p = r.final_day().price;
            println!("  s {s:.2} price {p:.2} welfare {:.0}", rep.social_welfare);
            let better = best.map_or(true, |(w, _, _)| rep.social_welfare > w);
            if better { best = Some((rep.social_welfare, s, p)); }
        }
        match best {
            Some((w, s, p)) => println!("rate x{rate_scale}: best toll scale {s:.2} welfare {w:.0} price {p:.2}"),
            None => println!("rate x{rate_scale}: nothing converged"),
        }
    }
}
