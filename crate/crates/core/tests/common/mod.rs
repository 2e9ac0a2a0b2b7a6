#![allow(dead_code)]

use ponas::{AccuracyLossTable, AccuracyTable, Constraint, CostReport, LayerCostTable, Metric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small specialization problem whose unconstrained optimum is infeasible.
pub struct Instance {
    pub loss: AccuracyLossTable,
    pub costs: LayerCostTable,
    pub constraint: Constraint,
}

pub fn random_accuracy(rng: &mut ChaCha8Rng, layers: usize, candidates: usize) -> AccuracyTable {
    let rows: Vec<Vec<f64>> = (0..layers)
        .map(|_| (0..candidates).map(|_| rng.gen_range(0.5..0.8)).collect())
        .collect();
    AccuracyTable::from_rows(&rows).unwrap()
}

pub fn random_costs(rng: &mut ChaCha8Rng, layers: usize, candidates: usize) -> LayerCostTable {
    let blocks = (0..layers)
        .map(|_| {
            (0..candidates)
                .map(|_| CostReport::new(rng.gen_range(1..100), rng.gen_range(1..100)))
                .collect()
        })
        .collect();
    LayerCostTable::new(CostReport::new(50, 50), blocks).unwrap()
}

/// Instance with a FLOPs ceiling between the cheapest network and the cost
/// of the per-layer best network, so the constraint always binds.
pub fn binding_instance(seed: u64, layers: usize, candidates: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let loss = random_accuracy(&mut rng, layers, candidates).to_loss_domain();
        let costs = random_costs(&mut rng, layers, candidates);
        let cheapest = costs.cheapest(Metric::Flops);
        let best = costs.metric_cost(&loss.best_genes(), Metric::Flops);
        if best <= cheapest {
            continue;
        }
        let ceiling = rng.gen_range(cheapest..best);
        return Instance {
            loss,
            costs,
            constraint: Constraint::new(Metric::Flops, ceiling).unwrap(),
        };
    }
}

/// Draws the (layers, candidates) shape used by the small-instance suites.
pub fn small_shape(seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    ([3, 4, 5][rng.gen_range(0..3)], [3, 4][rng.gen_range(0..2)])
}
