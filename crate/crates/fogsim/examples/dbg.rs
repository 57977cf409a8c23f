use fogsim::model::shortest_hops;
use fogsim::sim::{run_experiment, Scheduler, SimParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let s = fogsim::scenario::load(std::path::Path::new(&args[1])).unwrap();
    for theta in [10u32, 30, 50] {
        for balancing in [false, true] {
            let params = SimParams { theta, balancing, scheduler: Scheduler::Agent, ..SimParams::default() };
            let r = run_experiment(&s, &params, None).unwrap();
            let mut hist = std::collections::BTreeMap::new();
            let mut total = 0u32; let mut sum = 0u32;
            for rt in r.world.devices.values() {
                if let Some(c) = rt.da.contract {
                    let h = shortest_hops(&r.world.topology, rt.da.device.gateway, c.node).unwrap().unwrap_or(99);
                    *hist.entry(h).or_insert(0u32) += 1; total += 1; sum += h;
                }
            }
            println!("theta={theta} bal={balancing}: makespan={:.0} net={:.0} GB, transfers={}, avg_hops={:.2}, hist={:?}",
                r.metrics.makespan, r.metrics.network_usage_gb, r.world.transfers.len(), sum as f64/total as f64, hist);
        }
    }
}
