//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every tolerance is pinned below.

use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use inftda_core::baselines::{stability_histogram, vanilla_gauss, DEFAULT_UNIVERSE_CAP};
use inftda_core::dp::{eps_from_rho, rho_from_eps_delta, DiscreteGaussian, PrivacyBudget, SensitivityModel};
use inftda_core::eval::{false_discovery_rate, max_abs_error_per_level};
use inftda_core::hierarchy::PartitionHierarchy;
use inftda_core::intopt::{brute_force_oracle, intopt_fast, intopt_simple, OptProblem, Order};
use inftda_core::release::{release, theoretical_error_envelope, OrderStrategy, ReleaseConfig, TreeShape};
use inftda_core::synth::{generate, support_size, Sparsity, SynthSpec};
use inftda_core::tree::{build_tree, HierTree, TreeMode};
use inftda_core::trips::TripTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DELTA: f64 = 1e-8;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn synth_tree(spec: &SynthSpec) -> HierTree {
    let (o, d, trips) = generate(spec).unwrap();
    build_tree(&trips, Arc::new(o), Arc::new(d), TreeMode::Destination).unwrap()
}

fn lift(truth: &HierTree, leaves: inftda_core::baselines::LeafRelease) -> HierTree {
    leaves
        .to_tree(
            truth.origin_hierarchy().clone(),
            truth.destination_hierarchy().clone(),
            truth.mode(),
        )
        .unwrap()
}

fn eps1() -> PrivacyBudget {
    PrivacyBudget::from_epsilon_delta(1.0, DELTA).unwrap()
}

fn orders(seed: u64) -> [Order; 3] {
    [Order::Ascending, Order::Descending, Order::Random(seed)]
}

/// Exhaustive small grid against the brute-force oracle, < 2 min.
fn c1_intopt_optimality() -> Outcome {
    let started = Instant::now();
    let mut instances = 0usize;
    for d in 2..=3u32 {
        for code in 0..7i64.pow(d) {
            let x: Vec<i64> = (0..d).map(|k| (code / 7i64.pow(k)) % 7 - 3).collect();
            for c in 0..=6 {
                let best = brute_force_oracle(&x, c).unwrap();
                for order in orders(code as u64) {
                    let sol = intopt_simple(&OptProblem::new(x.clone(), c, order)).unwrap();
                    let feasible = sol.y.iter().all(|&v| v >= 0) && sol.y.iter().sum::<i64>() == c;
                    if !feasible || sol.alpha != best {
                        return Err(format!("x={x:?} c={c} {order:?}: {sol:?}, optimum {best}"));
                    }
                    instances += 1;
                }
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 120.0, format!("{instances} instances optimal in {secs:.2}s (limit 120s)"))
}

/// 10⁴ seeded instances, d ≤ 50, entries in [−20, 20], c ≤ 200, < 1 min.
fn c2_fast_simple_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..10_000u64 {
        let d = rng.gen_range(1..=50);
        let x: Vec<i64> = (0..d).map(|_| rng.gen_range(-20..=20)).collect();
        let c = rng.gen_range(0..=200);
        let order = orders(i)[(i % 3) as usize];
        let p = OptProblem::new(x, c, order);
        let (fast, simple) = (intopt_fast(&p).unwrap(), intopt_simple(&p).unwrap());
        if fast != simple {
            return Err(format!("instance {i}: {fast:?} vs {simple:?}"));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 60.0, format!("10000 instances identical in {secs:.2}s (limit 60s)"))
}

/// x = (0, −1, 1), c = 2, ascending: distance exactly 1, y = (0, 0, 2).
fn c3_worked_example() -> Outcome {
    let sol = intopt_fast(&OptProblem::new(vec![0, -1, 1], 2, Order::Ascending)).unwrap();
    let simple = intopt_simple(&OptProblem::new(vec![0, -1, 1], 2, Order::Ascending)).unwrap();
    check(
        sol.alpha == 1 && sol.y == vec![0, 0, 2] && simple == sol,
        format!("y={:?} distance={}", sol.y, sol.alpha),
    )
}

fn random_hierarchy(rng: &mut ChaCha8Rng, levels: usize) -> PartitionHierarchy {
    let mut paths: Vec<Vec<String>> = vec![Vec::new()];
    for level in 1..=levels {
        let mut next = Vec::new();
        for path in &paths {
            for _ in 0..rng.gen_range(1..=3) {
                let mut p = path.clone();
                p.push(format!("a{level}_{}", next.len()));
                next.push(p);
            }
        }
        paths = next;
    }
    PartitionHierarchy::from_paths(paths).unwrap()
}

fn small_random_tree(seed: u64) -> HierTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = rng.gen_range(1..=3);
    let o = random_hierarchy(&mut rng, levels);
    let d = random_hierarchy(&mut rng, levels);
    let mut pairs = Vec::new();
    for i in 0..o.leaf_count() as u32 {
        for j in 0..d.leaf_count() as u32 {
            if rng.gen_bool(0.4) {
                pairs.push(((i, j), rng.gen_range(1..=20)));
            }
        }
    }
    let trips = TripTable::from_counts(pairs).unwrap();
    build_tree(&trips, Arc::new(o), Arc::new(d), TreeMode::Destination).unwrap()
}

/// 100 seeded releases: zero violations, root = n, no orphans.
fn c4_consistency() -> Outcome {
    for seed in 0..100 {
        let truth = small_random_tree(seed);
        let r = release(&truth, &ReleaseConfig::new(eps1(), seed)).unwrap();
        let violations = r.tree.validate_consistency().len();
        let orphans = (1..=r.tree.depth())
            .flat_map(|depth| r.tree.level(depth).collect::<Vec<_>>())
            .filter(|&(k, _)| r.tree.attribute(r.tree.parent(k).unwrap()) <= 0)
            .count();
        if violations > 0 || orphans > 0 || r.tree.root_attribute() != truth.root_attribute() {
            return Err(format!("seed {seed}: {violations} violations, {orphans} orphans"));
        }
    }
    Ok("100 releases, 0 violations, root = n, 0 orphans".into())
}

/// Solves `ε = ρ + 2√(ρ ln(1/δ))` for ρ by bisection.
fn rho_oracle(epsilon: f64, delta: f64) -> f64 {
    let l = (1.0 / delta).ln();
    let (mut lo, mut hi) = (0.0f64, epsilon);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + 2.0 * (mid * l).sqrt() < epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Round trip within 1e−9 on 1000 budgets; ρ(1, 1e−8) within 1e−6 of the
/// forward-substitution oracle.
fn c5_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let epsilon = 10f64.powf(rng.gen_range(-2.0..1.5));
        let delta = 10f64.powf(rng.gen_range(-12.0..-2.0));
        let rho = rho_from_eps_delta(epsilon, delta).unwrap();
        worst = worst.max((eps_from_rho(rho, delta).unwrap() - epsilon).abs());
        worst = worst.max((rho - rho_oracle(epsilon, delta)).abs());
    }
    let rho = rho_from_eps_delta(1.0, DELTA).unwrap();
    let oracle = rho_oracle(1.0, DELTA);
    check(
        worst < 1e-9 && (rho - oracle).abs() < 1e-6,
        format!(
            "round-trip max dev {worst:.1e} (limit 1e-9); rho(1, 1e-8) = {rho:.10}, oracle {oracle:.10}, quoted 0.013218"
        ),
    )
}

/// 10⁶ draws at σ² = 4: variance ≤ 4.05, |mean| ≤ 0.02, Pr[Z ≥ 4] ≤ e⁻² + 0.01.
fn c6_sampler() -> Outcome {
    let dg = DiscreteGaussian::new(4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 1_000_000;
    let draws: Vec<i64> = (0..n).map(|_| dg.sample(&mut rng)).collect();
    let mean = draws.iter().sum::<i64>() as f64 / n as f64;
    let var = draws.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    let tail = draws.iter().filter(|&&v| v >= 4).count() as f64 / n as f64;
    let bound = (-2.0f64).exp() + 0.01;
    check(
        var <= 4.05 && mean.abs() <= 0.02 && tail <= bound,
        format!("var {var:.4} (≤ 4.05), mean {mean:.4} (|·| ≤ 0.02), Pr[Z≥4] {tail:.4} (≤ {bound:.4})"),
    )
}

/// Binary complete, T = 16, ε = 1: every level within the envelope at
/// β = 0.01 in ≥ 95 of 100 runs.
fn c7_envelope() -> Outcome {
    let shape = TreeShape { branching: 2, depth: 16 };
    let mut within = 0;
    let mut worst_ratio = 0.0f64;
    for seed in 0..100 {
        let truth = synth_tree(&SynthSpec::binary(Sparsity::Complete, seed));
        let config = ReleaseConfig::new(eps1(), seed);
        assert_eq!(TreeShape::of(&truth), Some(shape));
        let r = release(&truth, &config).unwrap();
        let errors = max_abs_error_per_level(&truth, &r.tree).unwrap();
        let mut ok = true;
        for (level, &e) in errors.iter().enumerate() {
            let bound = theoretical_error_envelope(level, &config, shape, 0.01).unwrap();
            if level > 0 {
                worst_ratio = worst_ratio.max(e as f64 / bound);
            }
            ok &= e as f64 <= bound;
        }
        within += usize::from(ok);
    }
    check(
        within >= 95,
        format!("{within}/100 runs within envelope (need 95); worst error/envelope {worst_ratio:.3}"),
    )
}

/// Random sparse, ε = 1, 10 seeds: mean leaf FDR ascending ≤ random with
/// ≥ 8/10 per-seed wins; SH FDR exactly 0 at every level.
fn c8_false_discoveries() -> Outcome {
    let (mut asc_sum, mut rnd_sum, mut wins) = (0.0, 0.0, 0);
    let mut sh_max = 0.0f64;
    for seed in 0..10 {
        let truth = synth_tree(&SynthSpec::random(Sparsity::Sparse, seed));
        let leaf = truth.depth();
        let base = ReleaseConfig::new(eps1(), seed);
        let asc = release(&truth, &base.with_order(OrderStrategy::Ascending)).unwrap();
        let rnd = release(&truth, &base.with_order(OrderStrategy::Random)).unwrap();
        let fa = false_discovery_rate(&truth, &asc.tree, leaf).unwrap();
        let fr = false_discovery_rate(&truth, &rnd.tree, leaf).unwrap();
        asc_sum += fa;
        rnd_sum += fr;
        wins += usize::from(fa <= fr);
        let sh = lift(
            &truth,
            stability_histogram(&truth, &eps1(), &SensitivityModel::bounded_single_trip(), seed)
                .unwrap(),
        );
        for level in 0..=leaf {
            sh_max = sh_max.max(false_discovery_rate(&truth, &sh, level).unwrap());
        }
    }
    let (asc_mean, rnd_mean) = (asc_sum / 10.0, rnd_sum / 10.0);
    check(
        asc_mean <= rnd_mean && wins >= 8 && sh_max == 0.0,
        format!(
            "leaf FDR ascending {asc_mean:.2}% vs random {rnd_mean:.2}%, {wins}/10 wins (need 8); SH max FDR {sh_max}"
        ),
    )
}

/// Binary complete, ε = 1, 10 seeds: level 1 VanillaGauss > InfTDA, level T
/// InfTDA > SH, on mean max error.
fn c9_crossover() -> Outcome {
    let sens = SensitivityModel::bounded_single_trip();
    let (mut vg1, mut inf1, mut inf_t, mut sh_t) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..10 {
        let truth = synth_tree(&SynthSpec::binary(Sparsity::Complete, seed));
        let t = truth.depth();
        let err = |tree: &HierTree| max_abs_error_per_level(&truth, tree).unwrap();
        let inf = err(&release(&truth, &ReleaseConfig::new(eps1(), seed)).unwrap().tree);
        let vg = err(&lift(
            &truth,
            vanilla_gauss(&truth, &eps1(), &sens, seed, DEFAULT_UNIVERSE_CAP).unwrap(),
        ));
        let sh = err(&lift(&truth, stability_histogram(&truth, &eps1(), &sens, seed).unwrap()));
        vg1 += vg[1] as f64 / 10.0;
        inf1 += inf[1] as f64 / 10.0;
        inf_t += inf[t] as f64 / 10.0;
        sh_t += sh[t] as f64 / 10.0;
    }
    check(
        vg1 > inf1 && inf_t > sh_t,
        format!("level 1: vanilla {vg1:.1} > inftda {inf1:.1}; level T: inftda {inf_t:.1} > sh {sh_t:.1}"),
    )
}

/// Random-sparse release < 60 s on one worker; exact universe shapes; user
/// totals within a factor 10 of the reference table.
fn c10_performance_and_shapes() -> Outcome {
    let truth = synth_tree(&SynthSpec::random(Sparsity::Sparse, 0));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let started = Instant::now();
    let r = pool
        .install(|| release(&truth, &ReleaseConfig::new(eps1(), 0).with_parallel(false)))
        .unwrap();
    let secs = started.elapsed().as_secs_f64();
    let pairs = truth.level_len(truth.depth());
    let consistent = r.tree.validate_consistency().is_empty();

    let (bo, bd, complete) = generate(&SynthSpec::binary(Sparsity::Complete, 0)).unwrap();
    let universe = bo.leaf_count() * bd.leaf_count();
    let (_, _, sparse) = generate(&SynthSpec::binary(Sparsity::Sparse, 0)).unwrap();
    let (ro, rd, rsparse) = generate(&SynthSpec::random(Sparsity::Sparse, 0)).unwrap();
    let r_universe = (ro.leaf_count() * rd.leaf_count()) as u64;
    let shapes = universe == 65_536
        && complete.support_size() == 65_536
        && sparse.support_size() == 655
        && rsparse.support_size() as u64 == support_size(0.01, r_universe);

    let magnitude = |got: u64, reference: f64| (got as f64 / reference).log10().abs() < 1.0;
    let totals = magnitude(complete.total(), 1_051_271.0)
        && magnitude(sparse.total(), 23_302.0)
        && magnitude(rsparse.total(), 67_840.0);
    check(
        secs < 60.0 && consistent && shapes && totals,
        format!(
            "random sparse ({pairs} pairs) released in {secs:.2}s (limit 60s); universe {universe}, supports {}/{}/{} of {r_universe}; totals {}/{}/{}",
            complete.support_size(),
            sparse.support_size(),
            rsparse.support_size(),
            complete.total(),
            sparse.total(),
            rsparse.total(),
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("intopt optimality", c1_intopt_optimality),
        ("fast/simple equivalence", c2_fast_simple_equivalence),
        ("worked example", c3_worked_example),
        ("consistency and sparsity", c4_consistency),
        ("accounting", c5_accounting),
        ("sampler statistics", c6_sampler),
        ("utility envelope", c7_envelope),
        ("false discoveries", c8_false_discoveries),
        ("baseline crossover", c9_crossover),
        ("performance and shapes", c10_performance_and_shapes),
    ];
    // `cargo test -- --list` and filters are not meaningful for this target
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| Err(format!("panicked: {e:?}")));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
