//! FedAvg, FedNova and FedAdagrad on the same three client updates.

use fedtune::model::{init_params, MlpSpec, ModelParams};
use fedtune::sim::{AggregatorKind, ClientUpdate, ServerAggregator};

fn shifted(base: &ModelParams, by: f64) -> ModelParams {
    let mut p = base.clone();
    p.values.iter_mut().for_each(|v| *v += by);
    p
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MlpSpec::new(4, 3, 2)?;
    let global = init_params(spec, 7);
    let updates = vec![
        ClientUpdate { client_id: 0, params: shifted(&global, 0.10), n_k: 40, local_steps: 8 },
        ClientUpdate { client_id: 1, params: shifted(&global, 0.30), n_k: 10, local_steps: 2 },
        ClientUpdate { client_id: 2, params: shifted(&global, -0.05), n_k: 25, local_steps: 5 },
    ];
    for kind in [AggregatorKind::FedAvg, AggregatorKind::FedNova, AggregatorKind::fedadagrad_default()] {
        let mut server = ServerAggregator::new(kind)?;
        let mut g = global.clone();
        let mut moves = Vec::new();
        for _ in 0..3 {
            let next = server.aggregate(&g, &updates)?;
            moves.push(next.values[0] - g.values[0]);
            g = next;
        }
        println!("{:10} first-coordinate moves over 3 rounds: {moves:+.4?}", kind.name());
    }
    Ok(())
}
