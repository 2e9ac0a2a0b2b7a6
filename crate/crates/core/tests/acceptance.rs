//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use common::{binding_instance, random_accuracy, small_shape};
use ponas::analysis::{kendall_tau, PairedSamples};
use ponas::cost_model::{fixed_block_cost, LayerCostTable};
use ponas::search_space::{FixedBlock, LayerSlot};
use ponas::specializer::{
    brute_force, importance_extremes, improve_at, specialize_observed, worst_network,
};
use ponas::{
    architecture_cost, build_table, decode, default_macro, synth_table, AccuracyLossTable,
    AccuracyTable, ArchitectureSpec, Chromosome, Constraint, Evaluator, GaConfig, Metric,
    SynthProfile, SyntheticEvaluator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn synthetic_loss(seed: u64) -> AccuracyLossTable {
    let m = default_macro();
    let eval = SyntheticEvaluator::new(seed, m.num_searchable());
    build_table(&m, &eval, None).unwrap().table.to_loss_domain()
}

/// Runs the GA while checking elitism, feasibility and best-ever tracking on
/// every population it produces.
fn audited_run(
    loss: &AccuracyLossTable,
    costs: &LayerCostTable,
    constraint: Constraint,
    cfg: &GaConfig,
) -> Result<ponas::specializer::Specialized, String> {
    let mut best_seen = u64::MAX;
    let mut infeasible = None;
    let r = specialize_observed(loss, costs, constraint, cfg, |generation, pop| {
        for c in pop {
            if !constraint.admits(&costs.cost(c.genes())) && infeasible.is_none() {
                infeasible = Some((generation, c.clone()));
            }
            best_seen = best_seen.min(loss.total_micros(c.genes()));
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some((g, c)) = infeasible {
        return Err(format!("infeasible chromosome {c} in generation {g}"));
    }
    check(constraint.admits(&r.cost), || {
        "returned chromosome is infeasible".into()
    })?;
    check(r.loss_micros == best_seen, || {
        format!(
            "returned loss {} but best seen was {best_seen}",
            r.loss_micros
        )
    })?;
    for pair in r.log.records.windows(2) {
        check(pair[1].best_loss <= pair[0].best_loss, || {
            format!("best loss rose at generation {}", pair[1].generation)
        })?;
    }
    Ok(r)
}

fn speed() -> Outcome {
    let loss = synthetic_loss(42);
    let costs = LayerCostTable::from_macro(&default_macro()).unwrap();
    let constraint = Constraint::new(Metric::Flops, 330_000_000).unwrap();
    let cfg = GaConfig::default();
    let start = Instant::now();
    let r = audited_run(&loss, &costs, constraint, &cfg)?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    check(r.log.records.len() == 1000, || {
        "wrong generation count".into()
    })?;
    Ok(format!(
        "19x12, 1000 generations, population 20: {:.1} ms, loss {:.6}",
        elapsed.as_secs_f64() * 1e3,
        r.loss()
    ))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut hits = 0;
    for seed in 0..100u64 {
        let (l, i) = small_shape(seed);
        let inst = binding_instance(seed, l, i);
        let r = audited_run(
            &inst.loss,
            &inst.costs,
            inst.constraint,
            &GaConfig::with_seed(seed),
        )?;
        let (_, optimum) =
            brute_force(&inst.loss, &inst.costs, inst.constraint).map_err(|e| e.to_string())?;
        check(r.loss_micros >= optimum, || {
            format!("seed {seed}: GA beat the oracle")
        })?;
        hits += usize::from(r.loss_micros == optimum);
    }
    let elapsed = start.elapsed();
    check(hits >= 95, || format!("{hits}/100 optimal"))?;
    check(elapsed < Duration::from_secs(60), || {
        format!("suite took {elapsed:?}")
    })?;
    Ok(format!(
        "{hits}/100 optimal in {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn unconstrained() -> Outcome {
    let m = default_macro();
    let costs = LayerCostTable::from_macro(&m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..20u64 {
        let loss = random_accuracy(&mut rng, 19, 12).to_loss_domain();
        let metric = if k % 2 == 0 {
            Metric::Flops
        } else {
            Metric::Params
        };
        let r = audited_run(
            &loss,
            &costs,
            Constraint::unbounded(metric),
            &GaConfig::with_seed(k),
        )?;
        check(r.chromosome == Chromosome::new(loss.best_genes()), || {
            format!("table {k}: {} is not the row-best chromosome", r.chromosome)
        })?;
        check(r.loss_micros == 0, || {
            format!("table {k}: loss {}", r.loss())
        })?;
    }
    Ok("20/20 tables returned the row-best chromosome with loss 0".into())
}

fn cost_goldens() -> Outcome {
    let e1 = FixedBlock::MbConvE1 { kernel: 3 };
    let c =
        fixed_block_cost(e1, &LayerSlot::fixed(e1, 112, 32, 16, 1)).map_err(|e| e.to_string())?;
    check((c.flops, c.params) == (10_035_200, 896), || {
        format!("E1 slot {c:?}")
    })?;
    let stem = FixedBlock::StemConv { kernel: 3 };
    let c = fixed_block_cost(stem, &LayerSlot::fixed(stem, 224, 3, 32, 2))
        .map_err(|e| e.to_string())?;
    check(c.flops == 10_838_016, || format!("stem {c:?}"))?;
    let fc = FixedBlock::FullyConnected;
    let c =
        fixed_block_cost(fc, &LayerSlot::fixed(fc, 1, 1280, 1000, 1)).map_err(|e| e.to_string())?;
    check((c.flops, c.params) == (1_280_000, 1_281_000), || {
        format!("fc {c:?}")
    })?;

    let m = default_macro();
    let cost_of =
        |g: usize| architecture_cost(&decode(&Chromosome::uniform(19, g), &m).unwrap()).unwrap();
    let (big, small) = (cost_of(11), cost_of(0));
    check((big.flops, big.params) == (708_804_992, 15_331_256), || {
        format!("all-largest {big:?}")
    })?;
    check(
        (small.flops, small.params) == (315_629_504, 4_437_128),
        || format!("all-smallest {small:?}"),
    )?;
    check(small.flops < big.flops, || "ordering".into())?;
    Ok(format!(
        "all-largest {}/{}, all-smallest {}/{}",
        big.flops, big.params, small.flops, small.params
    ))
}

struct Counting<'a> {
    inner: &'a SyntheticEvaluator,
    calls: AtomicUsize,
}

impl Evaluator for Counting<'_> {
    fn evaluate(&self, spec: &ArchitectureSpec) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(spec)
    }
}

fn cli_stdout(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = ponas::cli::run(
        std::iter::once("ponas").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    check(code == 0, || {
        format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err))
    })?;
    Ok(String::from_utf8(out).unwrap())
}

fn table_determinism() -> Outcome {
    let m = default_macro();
    let eval = SyntheticEvaluator::new(42, 19);
    let counting = Counting {
        inner: &eval,
        calls: AtomicUsize::new(0),
    };
    let built = build_table(&m, &counting, Some(3)).map_err(|e| e.to_string())?;
    let calls = counting.calls.load(Ordering::Relaxed);
    check(calls == 228 && built.evaluations == 228, || {
        format!("{calls} evaluator calls")
    })?;

    let reference = cli_stdout(&["--seed", "42", "build-table"])?;
    for threads in ["1", "2", "8"] {
        for _ in 0..2 {
            let again = cli_stdout(&["--seed", "42", "--threads", threads, "build-table"])?;
            check(again == reference, || {
                format!("manifest differs with {threads} threads")
            })?;
        }
    }
    check(reference.contains("\"evaluations\": 228,"), || {
        "manifest evaluation count".into()
    })?;
    Ok("228 evaluations; manifests identical over repeats and 1/2/8 threads".into())
}

fn loss_domain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..1000 {
        let (l, i) = (rng.gen_range(1..=19), rng.gen_range(1..=12));
        let acc = random_accuracy(&mut rng, l, i);
        let loss = acc.to_loss_domain();
        for layer in 0..l {
            let row = loss.row(layer);
            check(row.contains(&0), || {
                format!("table {k} row {layer} has no zero")
            })?;
            check(row.iter().all(|&v| v <= 1_000_000), || {
                format!("table {k} row {layer} out of range")
            })?;
            let acc_best = acc.row_best(layer).unwrap();
            check(loss.row_best(layer).unwrap() == acc_best, || {
                format!("table {k} row {layer}: argmin loss != argmax accuracy")
            })?;
        }
        let mut shifted = Vec::with_capacity(l * i);
        for row in acc.rows() {
            let (lo, hi) = (*row.iter().min().unwrap(), *row.iter().max().unwrap());
            let shift = rng.gen_range(-(i64::from(lo))..=i64::from(1_000_000 - hi));
            shifted.extend(row.iter().map(|&v| (i64::from(v) + shift) as u32));
        }
        let shifted = AccuracyTable::from_micros(l, i, shifted).map_err(|e| e.to_string())?;
        check(shifted.to_loss_domain() == loss, || {
            format!("table {k}: shift changed the loss table")
        })?;
    }
    Ok("1000 tables: non-negative rows with a zero, argmin/argmax agree, shift invariant".into())
}

fn kendall() -> Outcome {
    let tau = |xs: &[f64], ys: &[f64]| {
        kendall_tau(&PairedSamples::new(xs.to_vec(), ys.to_vec()).unwrap()).unwrap()
    };
    check(tau(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) == 1.0, || {
        "concordant".into()
    })?;
    check(tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) == -1.0, || {
        "discordant".into()
    })?;
    check(tau(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]) == 1.0 / 3.0, || {
        "one discordant pair".into()
    })?;

    let sampled_tau = |seed: u64| {
        let m = default_macro();
        let eval = SyntheticEvaluator::new(seed, m.num_searchable());
        let loss = build_table(&m, &eval, None).unwrap().table.to_loss_domain();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut predicted, mut measured) = (Vec::new(), Vec::new());
        for _ in 0..6 {
            let genes: Vec<usize> = (0..19).map(|_| rng.gen_range(0..12)).collect();
            predicted.push(loss.total_micros(&genes) as f64 / 1e6);
            measured.push(eval.accuracy(&genes));
        }
        tau(&predicted, &measured)
    };
    let t = sampled_tau(42);
    check(t <= -0.6, || format!("tau {t:.6}"))?;
    let holding = (0..50).filter(|&s| sampled_tau(s) <= -0.6).count();
    Ok(format!(
        "examples exact; six synthetic architectures tau = {t:.6}; holds in {holding}/50 worlds"
    ))
}

fn ablation() -> Outcome {
    let mut worst_margin = u64::MAX;
    for seed in 0..100 {
        let loss = synth_table(seed, 19, 12, SynthProfile::Peaked)
            .unwrap()
            .to_loss_domain();
        let worst = worst_network(&loss);
        let (most, least) = importance_extremes(&loss);
        let base = loss.total_micros(worst.genes());
        let gain =
            |layer| base - loss.total_micros(improve_at(&worst, layer, &loss).unwrap().genes());
        let (g_most, g_least) = (gain(most), gain(least));
        check(g_most >= g_least, || {
            format!("seed {seed}: most-important gain {g_most} < least-important gain {g_least}")
        })?;
        worst_margin = worst_margin.min(g_most - g_least);
    }
    Ok(format!(
        "100/100 tables, smallest margin {:.6}",
        worst_margin as f64 / 1e6
    ))
}

fn ga_invariants() -> Outcome {
    let costs = LayerCostTable::from_macro(&default_macro()).unwrap();
    let mut runs = 0;
    for seed in [1u64, 7, 42] {
        let loss = synthetic_loss(seed);
        for ceiling in [320_000_000u64, 360_000_000, 450_000_000] {
            let constraint = Constraint::new(Metric::Flops, ceiling).unwrap();
            let cfg = GaConfig {
                generations: 300,
                ..GaConfig::with_seed(seed)
            };
            let a = audited_run(&loss, &costs, constraint, &cfg)?;
            let b = audited_run(&loss, &costs, constraint, &cfg)?;
            check(a == b, || {
                format!("seed {seed}, ceiling {ceiling}: runs differ")
            })?;
            runs += 2;
        }
    }
    for seed in 0..40u64 {
        let (l, i) = small_shape(seed + 900);
        let inst = binding_instance(seed + 900, l, i);
        let cfg = GaConfig {
            generations: 200,
            selection: if seed % 2 == 0 {
                ponas::Selection::Pooled
            } else {
                ponas::Selection::ParentsOnly
            },
            ..GaConfig::with_seed(seed)
        };
        let a = audited_run(&inst.loss, &inst.costs, inst.constraint, &cfg)?;
        let b = audited_run(&inst.loss, &inst.costs, inst.constraint, &cfg)?;
        check(a == b, || format!("small seed {seed}: runs differ"))?;
        runs += 2;
    }
    Ok(format!(
        "{runs} audited runs: elitist, feasible, deterministic"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("specialization speed", speed),
        ("oracle equivalence", oracle_equivalence),
        ("unconstrained optimum", unconstrained),
        ("cost-model goldens", cost_goldens),
        ("table-protocol determinism", table_determinism),
        ("loss-domain properties", loss_domain),
        ("kendall tau", kendall),
        ("ablation structure", ablation),
        ("GA invariants", ga_invariants),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", n + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
