use std::time::Instant;
use tandem_core::domain::{generate_mosaic, mosaic_preset, preset_config};
use tandem_core::model::WorkerId;
use tandem_core::planner::{self, Budget, PlanMode, PlanOutcome};

fn main() {
    let spec = mosaic_preset(50).unwrap();
    let g = generate_mosaic(&spec, &preset_config(50, false), 0).unwrap();
    println!("workspace {}x{}", g.workspace.width, g.workspace.height);
    let t0 = Instant::now();
    match planner::synthesize_plan(&g.problem, PlanMode::Flexible, Budget::default()).unwrap() {
        PlanOutcome::Solved(p) => {
            let h = p.assignment.values().filter(|w| **w == WorkerId::Human).count();
            let r = p.assignment.values().filter(|w| **w == WorkerId::Robot).count();
            println!(
                "solved in {:?}: fd={:.1} fs={:.1} human={} robot={} expansions={} generated={} pruned={} peak={}",
                t0.elapsed(), p.cost.f_d, p.cost.f_s, h, r,
                p.stats.expansions, p.stats.generated, p.stats.pruned, p.stats.fringe_peak
            );
            planner::validate_solution(&p, &g.problem).unwrap();
            println!("valid");
        }
        other => println!("{:?} after {:?}", other, t0.elapsed()),
    }
}
