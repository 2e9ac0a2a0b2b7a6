//! Constrained specialization: pick one block per layer so that the summed
//! accuracy loss is minimal while the network's cost stays under a ceiling.
//!
//! [`specialize`] is the genetic algorithm used in deployment;
//! [`brute_force`] enumerates small spaces exactly and serves as its oracle.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accuracy_table::{from_micros, AccuracyLossTable};
use crate::cost_model::{Constraint, CostReport, LayerCostTable};
use crate::error::{Error, Result};
use crate::search_space::{Chromosome, MacroArchitecture};

/// Random draws tried for the initial population before falling back to
/// downgrading the zero-loss startpoint.
pub const INIT_DRAW_LIMIT: usize = 10_000;

/// Largest space [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// How the next generation's parents are chosen from parents and children.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Parents and children are ranked together; the top half become parents.
    #[default]
    Pooled,
    /// The better half of the current parents is retained unconditionally;
    /// the best children fill the remaining parent slots.
    ParentsOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub parents_kept: usize,
    pub generations: usize,
    pub mutation_prob: f64,
    pub seed: u64,
    pub repair_attempts: usize,
    pub selection: Selection,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            parents_kept: 10,
            generations: 1000,
            mutation_prob: 0.1,
            seed: 42,
            repair_attempts: 100,
            selection: Selection::Pooled,
        }
    }
}

impl GaConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "population {} must be even and at least 4",
                self.population
            )));
        }
        if self.parents_kept != self.population / 2 {
            return Err(Error::InvalidConfig(format!(
                "parents_kept {} must be half the population",
                self.parents_kept
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::InvalidConfig(format!(
                "mutation probability {} outside [0, 1]",
                self.mutation_prob
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_loss: f64,
    pub mean_loss: f64,
    pub best_genes: Chromosome,
}

/// Per-generation trace of a run plus its final answer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvolutionLog {
    pub records: Vec<GenerationRecord>,
    pub best: Chromosome,
    pub best_loss: f64,
    pub best_cost: CostReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Specialized {
    pub chromosome: Chromosome,
    /// Total loss in micro-units.
    pub loss_micros: u64,
    pub cost: CostReport,
    pub log: EvolutionLog,
}

impl Specialized {
    pub fn loss(&self) -> f64 {
        from_micros(self.loss_micros)
    }
}

/// Summed loss of `genes` against `loss`.
pub fn chromosome_loss(genes: &Chromosome, loss: &AccuracyLossTable) -> Result<f64> {
    genes.validate(loss.layers(), loss.candidates())?;
    Ok(from_micros(loss.total_micros(genes.genes())))
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Individual {
    genes: Vec<usize>,
    loss: u64,
}

fn rank(a: &Individual, b: &Individual) -> Ordering {
    a.loss.cmp(&b.loss).then_with(|| a.genes.cmp(&b.genes))
}

struct Problem<'a> {
    loss: &'a AccuracyLossTable,
    costs: &'a LayerCostTable,
    constraint: Constraint,
}

impl Problem<'_> {
    fn new<'a>(
        loss: &'a AccuracyLossTable,
        costs: &'a LayerCostTable,
        constraint: Constraint,
    ) -> Result<Problem<'a>> {
        if loss.layers() != costs.layers() || loss.candidates() != costs.candidates() {
            return Err(Error::DimensionMismatch {
                layers: loss.layers(),
                candidates: loss.candidates(),
                expected_layers: costs.layers(),
                expected_candidates: costs.candidates(),
            });
        }
        let metric = constraint.metric();
        let cheapest = costs.cheapest(metric);
        if cheapest > constraint.ceiling() {
            return Err(Error::Infeasible {
                metric: metric.name(),
                cheapest,
                ceiling: constraint.ceiling(),
            });
        }
        Ok(Problem {
            loss,
            costs,
            constraint,
        })
    }

    fn feasible(&self, genes: &[usize]) -> bool {
        self.costs.metric_cost(genes, self.constraint.metric()) <= self.constraint.ceiling()
    }

    fn individual(&self, genes: Vec<usize>) -> Individual {
        let loss = self.loss.total_micros(&genes);
        Individual { genes, loss }
    }

    /// Starting from the zero-loss chromosome, swaps in the cheapest block
    /// layer by layer, least important layers first, until the ceiling is met.
    fn downgraded_startpoint(&self) -> Vec<usize> {
        let mut genes = self.loss.best_genes();
        let cheapest = self.costs.cheapest_genes(self.constraint.metric());
        let importance = self.loss.layer_importance_micros();
        let mut order: Vec<usize> = (0..genes.len()).collect();
        order.sort_by_key(|&l| (importance[l], l));
        for l in order {
            if self.feasible(&genes) {
                break;
            }
            genes[l] = cheapest[l];
        }
        genes
    }
}

fn random_genes(rng: &mut ChaCha8Rng, layers: usize, candidates: usize) -> Vec<usize> {
    (0..layers).map(|_| rng.gen_range(0..candidates)).collect()
}

fn mutate(genes: &mut [usize], candidates: usize, prob: f64, rng: &mut ChaCha8Rng) {
    if candidates < 2 {
        return;
    }
    for g in genes.iter_mut() {
        if rng.gen_bool(prob) {
            let other = rng.gen_range(0..candidates - 1);
            *g = if other >= *g { other + 1 } else { other };
        }
    }
}

/// Child `side` of a single-point crossover between `primary` and `mate`,
/// mutated and regenerated until feasible. After `repair_attempts` failed
/// retries the primary parent is cloned instead.
fn breed(
    problem: &Problem<'_>,
    primary: &Individual,
    mate: &Individual,
    cfg: &GaConfig,
    rng: &mut ChaCha8Rng,
) -> Individual {
    let layers = primary.genes.len();
    for _ in 0..=cfg.repair_attempts {
        let cut = if layers >= 2 {
            rng.gen_range(1..layers)
        } else {
            layers
        };
        let mut child: Vec<usize> = primary.genes[..cut]
            .iter()
            .chain(&mate.genes[cut..])
            .copied()
            .collect();
        mutate(
            &mut child,
            problem.loss.candidates(),
            cfg.mutation_prob,
            rng,
        );
        if problem.feasible(&child) {
            return problem.individual(child);
        }
    }
    primary.clone()
}

fn select_parents(
    population: &mut Vec<Individual>,
    parents_len: usize,
    kept: usize,
    selection: Selection,
) -> Vec<Individual> {
    match selection {
        Selection::ParentsOnly if parents_len > 0 => {
            let mut children = population.split_off(parents_len);
            population.sort_by(rank);
            children.sort_by(rank);
            let retained = kept.div_ceil(2).min(population.len());
            let mut parents: Vec<Individual> = population.drain(..retained).collect();
            parents.extend(children.into_iter().take(kept - retained));
            parents.sort_by(rank);
            parents
        }
        _ => {
            population.sort_by(rank);
            population.truncate(kept);
            std::mem::take(population)
        }
    }
}

/// Runs the genetic algorithm and returns the best feasible chromosome seen
/// over the whole run.
pub fn specialize(
    loss: &AccuracyLossTable,
    costs: &LayerCostTable,
    constraint: Constraint,
    cfg: &GaConfig,
) -> Result<Specialized> {
    specialize_observed(loss, costs, constraint, cfg, |_, _| {})
}

/// [`specialize`] against the cost model of `macro_arch`.
pub fn specialize_macro(
    loss: &AccuracyLossTable,
    constraint: Constraint,
    macro_arch: &MacroArchitecture,
    cfg: &GaConfig,
) -> Result<Specialized> {
    let costs = LayerCostTable::from_macro(macro_arch)?;
    specialize(loss, &costs, constraint, cfg)
}

/// [`specialize`] with a callback receiving every population: the initial
/// one as generation 0, then each bred generation.
pub fn specialize_observed<F>(
    loss: &AccuracyLossTable,
    costs: &LayerCostTable,
    constraint: Constraint,
    cfg: &GaConfig,
    mut on_population: F,
) -> Result<Specialized>
where
    F: FnMut(usize, &[Chromosome]),
{
    cfg.validate()?;
    let problem = Problem::new(loss, costs, constraint)?;
    let (layers, candidates) = (loss.layers(), loss.candidates());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut population = Vec::with_capacity(cfg.population);
    let startpoint = loss.best_genes();
    if problem.feasible(&startpoint) {
        population.push(problem.individual(startpoint));
    }
    let mut draws = 0;
    while population.len() < cfg.population && draws < INIT_DRAW_LIMIT {
        draws += 1;
        let genes = random_genes(&mut rng, layers, candidates);
        if problem.feasible(&genes) {
            population.push(problem.individual(genes));
        }
    }
    if population.len() < cfg.population {
        let fallback = problem.individual(problem.downgraded_startpoint());
        population.resize(cfg.population, fallback);
    }

    let snapshot = |pop: &[Individual]| -> Vec<Chromosome> {
        pop.iter()
            .map(|i| Chromosome::new(i.genes.clone()))
            .collect()
    };
    on_population(0, &snapshot(&population));
    let mut best = population.iter().min_by(|a, b| rank(a, b)).unwrap().clone();
    let mut records = Vec::with_capacity(cfg.generations);
    let mut parents_len = 0;

    for generation in 1..=cfg.generations {
        let parents = select_parents(
            &mut population,
            parents_len,
            cfg.parents_kept,
            cfg.selection,
        );
        let mut children = Vec::with_capacity(parents.len());
        for pair in parents.chunks(2) {
            match pair {
                [a, b] => {
                    children.push(breed(&problem, a, b, cfg, &mut rng));
                    children.push(breed(&problem, b, a, cfg, &mut rng));
                }
                [a] => children.push(breed(&problem, a, &parents[0], cfg, &mut rng)),
                _ => unreachable!(),
            }
        }
        parents_len = parents.len();
        population = parents;
        population.extend(children);
        on_population(generation, &snapshot(&population));

        let gen_best = population.iter().min_by(|a, b| rank(a, b)).unwrap();
        if rank(gen_best, &best) == Ordering::Less {
            best = gen_best.clone();
        }
        let total: u64 = population.iter().map(|i| i.loss).sum();
        records.push(GenerationRecord {
            generation,
            best_loss: from_micros(gen_best.loss),
            mean_loss: total as f64 / population.len() as f64 / 1e6,
            best_genes: Chromosome::new(gen_best.genes.clone()),
        });
    }

    let cost = costs.cost(&best.genes);
    let chromosome = Chromosome::new(best.genes);
    Ok(Specialized {
        log: EvolutionLog {
            records,
            best: chromosome.clone(),
            best_loss: from_micros(best.loss),
            best_cost: cost,
        },
        chromosome,
        loss_micros: best.loss,
        cost,
    })
}

/// Exhaustive search over all `I^L` chromosomes. Ties go to the
/// lexicographically smallest gene vector.
pub fn brute_force(
    loss: &AccuracyLossTable,
    costs: &LayerCostTable,
    constraint: Constraint,
) -> Result<(Chromosome, u64)> {
    let size = (loss.candidates() as u128)
        .checked_pow(loss.layers() as u32)
        .unwrap_or(u128::MAX);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SpaceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let problem = Problem::new(loss, costs, constraint)?;
    let (layers, candidates) = (loss.layers(), loss.candidates());
    let mut genes = vec![0; layers];
    let mut best: Option<(Vec<usize>, u64)> = None;
    loop {
        if problem.feasible(&genes) {
            let l = loss.total_micros(&genes);
            if best.as_ref().is_none_or(|(_, b)| l < *b) {
                best = Some((genes.clone(), l));
            }
        }
        // Odometer increment, last layer fastest.
        let mut pos = layers;
        loop {
            if pos == 0 {
                let (g, l) = best.expect("feasibility checked up front");
                return Ok((Chromosome::new(g), l));
            }
            pos -= 1;
            genes[pos] += 1;
            if genes[pos] < candidates {
                break;
            }
            genes[pos] = 0;
        }
    }
}

/// Per-layer largest-loss block, lowest index on ties.
pub fn worst_network(loss: &AccuracyLossTable) -> Chromosome {
    Chromosome::new(
        (0..loss.layers())
            .map(|l| loss.row_worst(l).unwrap())
            .collect(),
    )
}

/// Replaces the gene at `layer` with that layer's best block.
pub fn improve_at(
    genes: &Chromosome,
    layer: usize,
    loss: &AccuracyLossTable,
) -> Result<Chromosome> {
    genes.validate(loss.layers(), loss.candidates())?;
    let best = loss.row_best(layer)?;
    let mut out = genes.clone().into_genes();
    out[layer] = best;
    Ok(Chromosome::new(out))
}

/// Layers with the largest and smallest maximum loss, lowest index on ties.
pub fn importance_extremes(loss: &AccuracyLossTable) -> (usize, usize) {
    let imp = loss.layer_importance_micros();
    let most = (0..imp.len())
        .max_by_key(|&l| (imp[l], std::cmp::Reverse(l)))
        .unwrap();
    let least = (0..imp.len()).min_by_key(|&l| (imp[l], l)).unwrap();
    (most, least)
}

/// The three networks of the layer-importance ablation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AblationNetworks {
    pub worst: Chromosome,
    pub worst_least: Chromosome,
    pub worst_most: Chromosome,
    pub least_layer: usize,
    pub most_layer: usize,
}

pub fn ablation_networks(loss: &AccuracyLossTable) -> AblationNetworks {
    let worst = worst_network(loss);
    let (most, least) = importance_extremes(loss);
    AblationNetworks {
        worst_least: improve_at(&worst, least, loss).unwrap(),
        worst_most: improve_at(&worst, most, loss).unwrap(),
        worst,
        least_layer: least,
        most_layer: most,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::Metric;

    fn loss(rows: &[&[f64]]) -> AccuracyLossTable {
        AccuracyLossTable::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn unit_costs(layers: usize, per_block: &[u64]) -> LayerCostTable {
        let row = per_block
            .iter()
            .map(|&c| CostReport::new(c, c))
            .collect::<Vec<_>>();
        LayerCostTable::new(CostReport::ZERO, vec![row; layers]).unwrap()
    }

    #[test]
    fn chromosome_loss_examples() {
        let t = loss(&[&[0.0, 0.02], &[0.01, 0.0], &[0.0, 0.03]]);
        let l = chromosome_loss(&Chromosome::new(vec![1, 0, 1]), &t).unwrap();
        assert!((l - 0.06).abs() < 1e-12);
        assert_eq!(
            chromosome_loss(&Chromosome::new(t.best_genes()), &t).unwrap(),
            0.0
        );

        let uniform = AccuracyLossTable::from_rows(&vec![vec![0.01; 12]; 19]).unwrap();
        let l = chromosome_loss(
            &Chromosome::new((0..19).map(|i| i % 12).collect()),
            &uniform,
        )
        .unwrap();
        assert!((l - 0.19).abs() < 1e-12);

        assert!(matches!(
            chromosome_loss(&Chromosome::new(vec![0, 2, 0]), &t),
            Err(Error::GeneOutOfRange { layer: 1, .. })
        ));
    }

    #[test]
    fn config_validation() {
        GaConfig::default().validate().unwrap();
        let bad = |f: fn(&mut GaConfig)| {
            let mut c = GaConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.population = 5));
        assert!(bad(|c| c.population = 2));
        assert!(bad(|c| c.parents_kept = 8));
        assert!(bad(|c| c.mutation_prob = 1.5));
    }

    #[test]
    fn brute_force_small_cases() {
        let t = loss(&[&[0.0, 0.05], &[0.0, 0.04]]);
        // Block 1 is the only one cheap enough.
        let costs = unit_costs(2, &[10, 1]);
        let c = Constraint::new(Metric::Flops, 2).unwrap();
        let (g, l) = brute_force(&t, &costs, c).unwrap();
        assert_eq!(g.genes(), &[1, 1]);
        assert_eq!(l, 90_000);

        let mut row = vec![0.05; 12];
        row[4] = 0.0;
        let t = AccuracyLossTable::from_rows(&[row]).unwrap();
        let costs = unit_costs(1, &[1; 12]);
        let (g, _) = brute_force(&t, &costs, Constraint::unbounded(Metric::Flops)).unwrap();
        assert_eq!(g.genes(), &[4]);
    }

    #[test]
    fn brute_force_guards() {
        let t = AccuracyLossTable::from_rows(&vec![vec![0.0; 12]; 19]).unwrap();
        let costs = unit_costs(19, &[1; 12]);
        assert!(matches!(
            brute_force(&t, &costs, Constraint::unbounded(Metric::Flops)),
            Err(Error::SpaceTooLarge { .. })
        ));
        let t = loss(&[&[0.0, 0.1]]);
        let costs = unit_costs(1, &[5, 6]);
        assert!(matches!(
            brute_force(&t, &costs, Constraint::new(Metric::Params, 4).unwrap()),
            Err(Error::Infeasible {
                cheapest: 5,
                ceiling: 4,
                ..
            })
        ));
    }

    #[test]
    fn unconstrained_run_returns_startpoint() {
        let t = loss(&[&[0.02, 0.0, 0.01], &[0.0, 0.03, 0.01], &[0.01, 0.01, 0.0]]);
        let costs = unit_costs(3, &[1, 2, 3]);
        let cfg = GaConfig {
            generations: 20,
            ..GaConfig::default()
        };
        let out = specialize(&t, &costs, Constraint::unbounded(Metric::Flops), &cfg).unwrap();
        assert_eq!(out.chromosome.genes(), &[1, 0, 2]);
        assert_eq!(out.loss_micros, 0);
        assert_eq!(out.log.records.len(), 20);
    }

    #[test]
    fn infeasible_and_mismatched_inputs() {
        let t = loss(&[&[0.0, 0.1], &[0.0, 0.1]]);
        let costs = unit_costs(2, &[5, 6]);
        let err = specialize(
            &t,
            &costs,
            Constraint::new(Metric::Flops, 9).unwrap(),
            &GaConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Infeasible {
                cheapest: 10,
                ceiling: 9,
                ..
            }
        ));
        let costs = unit_costs(3, &[5, 6]);
        assert!(matches!(
            specialize(
                &t,
                &costs,
                Constraint::unbounded(Metric::Flops),
                &GaConfig::default()
            ),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tight_constraint_uses_downgraded_startpoint() {
        // Only the all-cheapest network fits; random draws almost never hit it.
        let layers = 12;
        let t = AccuracyLossTable::from_rows(&vec![vec![0.0, 0.01, 0.02, 0.03]; layers]).unwrap();
        let costs = unit_costs(layers, &[100, 1, 50, 60]);
        let c = Constraint::new(Metric::Flops, layers as u64).unwrap();
        let cfg = GaConfig {
            generations: 5,
            ..GaConfig::default()
        };
        let mut seen = 0;
        let out = specialize_observed(&t, &costs, c, &cfg, |_, pop| {
            for g in pop {
                assert!(c.admits(&costs.cost(g.genes())));
            }
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 6);
        assert_eq!(out.chromosome.genes(), &vec![1; layers][..]);
    }

    #[test]
    fn parents_only_selection_keeps_elitism() {
        let t = crate::accuracy_table::synth_table(3, 6, 4, crate::SynthProfile::Peaked)
            .unwrap()
            .to_loss_domain();
        let costs = unit_costs(6, &[1, 2, 3, 4]);
        let cfg = GaConfig {
            selection: Selection::ParentsOnly,
            generations: 200,
            ..GaConfig::default()
        };
        let out = specialize(
            &t,
            &costs,
            Constraint::new(Metric::Flops, 12).unwrap(),
            &cfg,
        )
        .unwrap();
        for w in out.log.records.windows(2) {
            assert!(w[1].best_loss <= w[0].best_loss);
        }
        let (_, opt) =
            brute_force(&t, &costs, Constraint::new(Metric::Flops, 12).unwrap()).unwrap();
        assert!(out.loss_micros >= opt);
    }

    #[test]
    fn ablation_constructors() {
        let t = loss(&[&[0.02, 0.0, 0.01], &[0.0, 0.005, 0.001], &[0.04, 0.0, 0.04]]);
        let worst = worst_network(&t);
        assert_eq!(worst.genes(), &[0, 1, 0]);
        let a = ablation_networks(&t);
        assert_eq!((a.most_layer, a.least_layer), (2, 1));
        assert_eq!(a.worst_most.genes(), &[0, 1, 1]);
        assert_eq!(a.worst_least.genes(), &[0, 0, 0]);
        let base = chromosome_loss(&worst, &t).unwrap();
        assert!(chromosome_loss(&a.worst_most, &t).unwrap() < base);
        assert!(matches!(
            improve_at(&worst, 3, &t),
            Err(Error::LayerOutOfRange { .. })
        ));
    }

    #[test]
    fn improving_all_zero_row_changes_nothing() {
        let t = loss(&[&[0.0, 0.0], &[0.0, 0.02]]);
        let worst = worst_network(&t);
        let improved = improve_at(&worst, 0, &t).unwrap();
        assert_eq!(
            chromosome_loss(&improved, &t).unwrap(),
            chromosome_loss(&worst, &t).unwrap()
        );
    }
}
