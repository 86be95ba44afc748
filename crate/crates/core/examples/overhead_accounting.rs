//! Per-round and cumulative system overhead for a scripted participation
//! trace, with cost constants taken from a small MLP.

use fedtune::model::{cost_counts, MlpSpec};
use fedtune::overhead::{model_cost_constants, round_overhead, trace_overhead, RoundParticipation};
use fedtune::LocalPasses;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MlpSpec::new(32, 16, 10)?;
    let (flops, params) = cost_counts(&spec);
    let costs = model_cost_constants(flops, params)?;
    println!("model 32-16-10: {flops} FLOPs per input, {params} parameters");

    let trace = vec![
        RoundParticipation::new(1, vec![30, 12, 45], LocalPasses::Whole(2)),
        RoundParticipation::new(2, vec![8, 60], LocalPasses::Whole(2)),
        RoundParticipation::new(3, vec![30, 12, 45, 9], LocalPasses::Whole(1)),
        RoundParticipation::new(4, vec![50], LocalPasses::Fraction(0.5)),
    ];
    for p in &trace {
        let o = round_overhead(p, &costs)?;
        println!(
            "round {} sizes {:?} E={}: CompT {:.0} TransT {:.0} CompL {:.0} TransL {:.0}",
            p.round_index, p.participant_sizes, p.e, o.comp_time, o.trans_time, o.comp_load, o.trans_load
        );
    }
    let total = trace_overhead(&trace, &costs)?;
    println!("total: {total:?}");
    Ok(())
}
