use tandem_core::domain::{generate_mosaic, mosaic_preset, GenerationConfig};
use tandem_core::planner::{self, Budget, PlanMode, PlanOutcome};

fn main() {
    let spec = mosaic_preset(4).unwrap();
    let config = GenerationConfig { midpoint_durations: true, ..GenerationConfig::default() };
    let g = generate_mosaic(&spec, &config, 0).unwrap();
    for t in &g.problem.tasks {
        print!("{}: ", t.id);
        for (w, d) in &t.per_worker_duration {
            print!("{w}={:.1} ", d.midpoint());
        }
        println!();
    }
    println!("workspace {}x{}", g.workspace.width, g.workspace.height);
    for (label, cells) in &g.workspace.locations {
        println!("  {label}: {:?}", cells);
    }
    match planner::synthesize_plan(&g.problem, PlanMode::Flexible, Budget::default()).unwrap() {
        PlanOutcome::Solved(p) => {
            println!("assignment: {:?}", p.assignment);
            println!("cost: fd={} fs={}", p.cost.f_d, p.cost.f_s);
            for tl in &p.timelines {
                println!("timeline {}:", tl.state_variable);
                for t in &tl.tokens {
                    println!("  {} [{:.1},{:.1}]", t.value, t.dispatch, t.completion);
                }
            }
        }
        other => println!("{other:?}"),
    }
}
