//! Every strategy on one scenario, side by side.

use monaas::sim::run;
use monaas::sim::suite::builtin;
use monaas::strategy::StrategyTag;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "s1".into());
    let sc = builtin(&name).expect("built-in scenario");
    println!("{}", sc.name);
    println!("{:>9} {:>6} {:>5} {:>10} {:>9} {:>7} {:>7}", "strategy", "pdr", "tcr", "activ_ms", "overhead", "peak/s", "rdc");
    for tag in StrategyTag::ALL {
        let m = run(&sc, tag, 1).metrics;
        println!(
            "{:>9} {:>6.3} {:>5.2} {:>10.0} {:>9.3} {:>7.1} {:>7.4}",
            m.strategy, m.pdr_hop, m.tcr, m.activation_delay_ms, m.control_overhead, m.control_peak_pps, m.rdc
        );
    }
}
