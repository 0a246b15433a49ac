//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use scatfluct::ensemble::{detailed_balance_check, heat_exchange_ft_check, stochastic_matrix, ParticleEnergyDistribution, QuadratureSettings};
use scatfluct::fluct::{
    consumption_ceiling, dual_distribution, eta_direct, eta_gapsum, extraction_ceiling, forward_distribution, microreversibility_check,
    report, threshold_temperature, verify_fluctuation_relation,
};
use scatfluct::kraus::{eigenoperators, nudge_kinetic_energy, transition_probabilities, TransitionProbabilities, TransitionTable};
use scatfluct::maplab::{detailed_relation_residual, modified_jarzynski, random_map, KrausMap};
use scatfluct::model::{all_ones_offdiag, gap_structure, thermal_state, Profile, Shape, SystemSpec};
use scatfluct::solver::{oracle_two_channel_flat, solve_smatrix, square_barrier_transmission, Direction, Scatterer, SolverSettings};

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn(&Context) -> Check);

struct Context {
    /// Benchmark scatterers for N = 1..=4, sharing their S-matrix caches across criteria.
    scatterers: Vec<Scatterer>,
    /// 200 log-spaced kinetic energies on [0.05, 100], moved off exact gaps.
    sweep: Vec<Vec<f64>>,
}

impl Context {
    fn new() -> Self {
        let scatterers: Vec<Scatterer> = (1..=4)
            .map(|n| Scatterer::new(SystemSpec::benchmark(n).unwrap(), SolverSettings::default()).unwrap())
            .collect();
        let sweep = scatterers
            .iter()
            .map(|sc| {
                (0..200)
                    .map(|i| {
                        let e = 0.05 * (100.0f64 / 0.05).powf(i as f64 / 199.0);
                        nudge_kinetic_energy(sc.spec().levels(), e, sc.settings().threshold_eps)
                    })
                    .collect()
            })
            .collect();
        Self { scatterers, sweep }
    }

    fn tables(&self, n: usize, ep: f64) -> Vec<TransitionProbabilities> {
        Direction::BOTH
            .iter()
            .map(|&a| transition_probabilities(&eigenoperators(&self.scatterers[n - 1], ep, a).unwrap()))
            .collect()
    }
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unitarity(ctx: &Context) -> Check {
    // evaluated sequentially so the timing reflects one thread
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut solves = 0;
    for (sc, grid) in ctx.scatterers.iter().zip(&ctx.sweep) {
        for &ep in grid {
            for &e in sc.spec().levels() {
                worst = worst.max(sc.smatrix(ep + e).unwrap().unitarity_residual());
                solves += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-8 && secs < 120.0,
        format!("max |s^dag s - I| = {worst:.2e} over {solves} S-matrices, {secs:.1} s single-threaded"),
    )
}

fn oracles(_: &Context) -> Check {
    let barrier = SystemSpec::new(vec![0.0], DMatrix::from_element(1, 1, 1.0), Profile::new(100.0, 1.0, Shape::Square)).unwrap();
    let mut worst_t: f64 = 0.0;
    for i in 0..50 {
        let e = 0.87 + 6.1 * i as f64;
        let s = solve_smatrix(&barrier, e, &SolverSettings::default().with_slices(16)).unwrap();
        let t = s.probability(Direction::Plus, 0, Direction::Plus, 0);
        worst_t = worst_t.max((t - square_barrier_transmission(100.0, 1.0, e, 1.0, 1.0).unwrap()).abs());
    }
    let flat = SystemSpec::ladder(2, 1.0, all_ones_offdiag(2), Profile::new(100.0, 1.0, Shape::Square)).unwrap();
    let mut worst_s: f64 = 0.0;
    for &e in &[-0.3, 0.2, 0.8, 1.7, 12.0, 48.5, 99.0, 160.0] {
        let oracle = oracle_two_channel_flat(&flat, e, &SolverSettings::default()).unwrap();
        let s = solve_smatrix(&flat, e, &SolverSettings::default()).unwrap();
        worst_s = worst_s.max(s.max_difference(&oracle));
    }
    verdict(
        worst_t < 1e-6 && worst_s < 1e-10,
        format!("barrier |dT| = {worst_t:.2e} at 50 energies, flat two-channel |ds| = {worst_s:.2e}"),
    )
}

fn fluctuation_relation(ctx: &Context) -> Check {
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        for &beta in &[0.1, 1.0] {
            let th = thermal_state(ctx.scatterers[n - 1].spec(), beta).unwrap();
            for &ep in &ctx.sweep[n - 1] {
                for tp in ctx.tables(n, ep) {
                    let f = forward_distribution(&tp, &th).unwrap();
                    let d = dual_distribution(&tp, &th).unwrap();
                    worst = worst.max(verify_fluctuation_relation(&f, &d, beta).unwrap());
                }
            }
        }
    }
    verdict(worst < 1e-8, format!("max |e^(-bW) P(W) - p(-W)| = {worst:.2e} (N = 1..4, beta = 0.1, 1, both directions)"))
}

fn eta_consistency(ctx: &Context) -> Check {
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let spec = ctx.scatterers[n - 1].spec();
        for &beta in &[0.1, 1.0] {
            let th = thermal_state(spec, beta).unwrap();
            let gaps = gap_structure(spec, beta).unwrap();
            for &ep in &ctx.sweep[n - 1] {
                for tp in ctx.tables(n, ep) {
                    let direct = eta_direct(&dual_distribution(&tp, &th).unwrap());
                    worst = worst.max((direct - eta_gapsum(&tp, &gaps, &th).unwrap()).abs());
                }
            }
        }
    }
    verdict(worst < 1e-10, format!("max |eta_direct - eta_gapsum| = {worst:.2e} (N = 2..4)"))
}

fn bound_and_entropy(ctx: &Context) -> Check {
    let (mut slack, mut sigma, mut agree) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for n in 1..=4 {
        let spec = ctx.scatterers[n - 1].spec();
        for &beta in &[0.1, 1.0] {
            let th = thermal_state(spec, beta).unwrap();
            let gaps = gap_structure(spec, beta).unwrap();
            for &ep in &ctx.sweep[n - 1] {
                for tp in ctx.tables(n, ep) {
                    let r = report(&tp, &th, &gaps).unwrap();
                    slack = slack.min(r.bound_slack);
                    sigma = sigma.min(r.sigma);
                    agree = agree.max((r.sigma - r.sigma_bound).abs());
                }
            }
        }
    }
    verdict(
        slack >= -1e-10 && sigma >= -1e-10 && agree < 1e-9,
        format!("min slack = {slack:.2e}, min sigma = {sigma:.2e}, |sigma_rel - sigma_bound| <= {agree:.2e}"),
    )
}

fn closed_channel(ctx: &Context) -> Check {
    let sc = &ctx.scatterers[1];
    let th = thermal_state(sc.spec(), 0.1).unwrap();
    let gaps = gap_structure(sc.spec(), 0.1).unwrap();
    let mut grid: Vec<f64> = ctx.sweep[1].iter().copied().filter(|&e| e < 1.0).collect();
    grid.extend((0..100).map(|i| 0.005 + 0.0099 * i as f64));
    let (mut max_up, mut min_eta, mut max_w, mut active) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY, 0);
    for &ep in &grid {
        for tp in ctx.tables(2, ep) {
            max_up = max_up.max(tp.table[(1, 0)]);
            if tp.table[(0, 1)] > 0.0 {
                let r = report(&tp, &th, &gaps).unwrap();
                min_eta = min_eta.min(r.eta);
                max_w = max_w.max(r.avg_w);
                active += 1;
            }
        }
    }
    verdict(
        max_up == 0.0 && min_eta >= 0.0 && max_w <= 0.0 && active > 0,
        format!(
            "P_10 = {max_up} exactly on {} points below the gap; min eta = {min_eta:.2e}, max <W> = {max_w:.2e} on {active} active points",
            grid.len()
        ),
    )
}

fn high_energy_unitality(ctx: &Context) -> Check {
    let sc = &ctx.scatterers[1];
    let th = thermal_state(sc.spec(), 0.1).unwrap();
    let gaps = gap_structure(sc.spec(), 0.1).unwrap();
    let window = |lo: f64, hi: f64| -> f64 {
        let pts = 200;
        (0..pts)
            .map(|i| {
                let ep = nudge_kinetic_energy(sc.spec().levels(), lo + (hi - lo) * (i as f64 + 0.5) / pts as f64, 1e-8);
                let tp = transition_probabilities(&eigenoperators(sc, ep, Direction::Plus).unwrap());
                report(&tp, &th, &gaps).unwrap().eta.abs()
            })
            .sum::<f64>()
            / pts as f64
    };
    let low = window(1.5, 3.0);
    let high = window(80.0, 100.0);
    let ratio = low / high;
    verdict(
        ratio >= 5.0,
        format!("<|eta|> = {low:.3e} on [1.5, 3], {high:.3e} on [80, 100], ratio {ratio:.1}"),
    )
}

fn microreversibility(ctx: &Context) -> Check {
    let sc = &ctx.scatterers[1];
    let th = thermal_state(sc.spec(), 0.1).unwrap();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for &ep in &[2.0, 5.0, 10.0] {
        for averaged in [false, true] {
            let r = microreversibility_check(sc, ep, &th, averaged).unwrap();
            worst = worst.max(r.residual);
            skipped += r.skipped.len();
        }
    }
    verdict(
        worst < 1e-8 && skipped == 0,
        format!("max |e^(-bW) P(E, W) - P(E - W, -W)| = {worst:.2e} at E_p = 2, 5, 10; {skipped} skipped"),
    )
}

fn thermal_ensemble(ctx: &Context) -> Check {
    let sc = &ctx.scatterers[1];
    let quadrature = QuadratureSettings {
        check_convergence: true,
        ..Default::default()
    };
    let mut cols: f64 = 0.0;
    let mut db: f64 = 0.0;
    let mut h4 = f64::NAN;
    for &bt in &[0.5, 1.0] {
        let dist = ParticleEnergyDistribution::thermal(bt).unwrap().with_quadrature(quadrature).unwrap();
        let s = match stochastic_matrix(sc, &dist) {
            Ok(s) => s,
            Err(e) => return Err(format!("beta_tilde = {bt}: {e}")),
        };
        cols = cols.max(s.column_residual());
        db = db.max(detailed_balance_check(&s, sc.spec(), bt).unwrap());
        if bt == 0.5 {
            let th = thermal_state(sc.spec(), 0.1).unwrap();
            h4 = heat_exchange_ft_check(&s, sc.spec(), &th, bt).unwrap();
        }
    }
    verdict(
        cols < 1e-6 && db < 1e-6 && h4 < 1e-6,
        format!("column sums within {cols:.2e}, detailed balance {db:.2e}, heat exchange {h4:.2e} (Q = 400, stable under doubling)"),
    )
}

fn generic_maps(ctx: &Context) -> Check {
    let (mut a5, mut jz, mut unital_gamma) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let d = 2 + (seed % 3) as usize;
        let l = 1 + ((seed / 3) % 5) as usize;
        let beta = 0.2 + 0.05 * (seed % 17) as f64;
        let map = random_map(d, l, seed, false).unwrap();
        a5 = a5.max(detailed_relation_residual(&map, beta).unwrap());
        let j = modified_jarzynski(&map, beta).unwrap();
        jz = jz.max((j.lhs - j.rhs).abs());
        let u = random_map(d, l, 1000 + seed, true).unwrap();
        a5 = a5.max(detailed_relation_residual(&u, beta).unwrap());
        let ju = modified_jarzynski(&u, beta).unwrap();
        jz = jz.max((ju.lhs - ju.rhs).abs());
        unital_gamma = unital_gamma.max((ju.gamma - 1.0).abs());
    }
    let mut cross: f64 = 0.0;
    for n in 2..=4 {
        let sc = &ctx.scatterers[n - 1];
        let th = thermal_state(sc.spec(), 0.1).unwrap();
        for &ep in &[0.5, 2.3, 7.7] {
            for a in Direction::BOTH {
                let e = eigenoperators(sc, ep, a).unwrap();
                let gamma = dual_distribution(&transition_probabilities(&e), &th).unwrap().total_mass();
                let map = KrausMap::from_eigenoperators(&e).unwrap();
                cross = cross.max((modified_jarzynski(&map, 0.1).unwrap().gamma - gamma).abs());
            }
        }
    }
    verdict(
        a5 < 1e-10 && jz < 1e-10 && unital_gamma < 1e-12 && cross < 1e-10,
        format!("detailed relation {a5:.2e}, Jarzynski |lhs - rhs| {jz:.2e}, unital |gamma - 1| {unital_gamma:.2e}, scattering gamma {cross:.2e}"),
    )
}

fn anchors(_: &Context) -> Check {
    let b0 = threshold_temperature(1.0).unwrap();
    let e0 = (extraction_ceiling(b0, 1.0) - 1.0 / 3.0).abs();
    let c0 = (consumption_ceiling(b0, 1.0) - 1.0 / 3.0).abs();
    let ext = extraction_ceiling(0.1, 1.0);
    let con = consumption_ceiling(0.1, 1.0);
    verdict(
        (b0 - std::f64::consts::LN_2).abs() < 1e-15 && e0 < 1e-12 && c0 < 1e-12 && (ext - 0.47502).abs() < 1e-5 && (con - 0.049958).abs() < 1e-5,
        format!("beta_0 = {b0:.6}, ceilings at beta_0 off by {e0:.1e} / {c0:.1e}; extraction {ext:.6}, consumption {con:.6}"),
    )
}

fn main() -> ExitCode {
    let ctx = Context::new();
    let criteria: [Criterion; 11] = [
        (1, "S-matrix unitarity", unitarity),
        (2, "oracle equivalence", oracles),
        (3, "fluctuation relation", fluctuation_relation),
        (4, "eta consistency", eta_consistency),
        (5, "bound and entropy production", bound_and_entropy),
        (6, "closed-channel structure", closed_channel),
        (7, "high-energy unitality", high_energy_unitality),
        (8, "microreversibility", microreversibility),
        (9, "thermal ensemble", thermal_ensemble),
        (10, "generic-map lab", generic_maps),
        (11, "analytic anchors", anchors),
    ];
    let mut failed = 0;
    for (id, title, run) in criteria {
        match run(&ctx) {
            Ok(detail) => println!("criterion {id:>2} PASS  {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {title}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
