//! Runs one built-in scenario and writes its trace, schedule and metrics.
//!
//! cargo run --example simulate -- s3 monaas 1 /tmp/s3

use std::fs;
use std::path::PathBuf;

use monaas::sim::metrics::write_metrics_csv;
use monaas::sim::run;
use monaas::sim::suite::builtin;
use monaas::strategy::StrategyTag;
use monaas::trace::write_csv;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("s3", String::as_str);
    let tag: StrategyTag = args.get(1).map_or("monaas", String::as_str).parse().expect("strategy tag");
    let seed = args.get(2).map_or(1, |s| s.parse().expect("seed"));
    let dir = args.get(3).map_or_else(|| std::env::temp_dir().join("monaas-simulate"), PathBuf::from);

    let sc = builtin(name).expect("built-in scenario");
    let out = run(&sc, tag, seed);
    fs::create_dir_all(&dir).unwrap();
    write_csv(&out.trace, fs::File::create(dir.join("trace.csv")).unwrap()).unwrap();
    fs::write(dir.join("schedule.csv"), &out.schedule).unwrap();
    write_metrics_csv(std::slice::from_ref(&out.metrics), fs::File::create(dir.join("metrics.csv")).unwrap()).unwrap();

    let m = &out.metrics;
    println!("{} {} seed {seed}: {} trace records in {}", m.scenario, m.strategy, out.trace.len(), dir.display());
    println!("pdr {:.3}  tcr {:.2}  activation {:.0} ms  overhead {:.3}  rdc {:.4}", m.pdr_hop, m.tcr, m.activation_delay_ms, m.control_overhead, m.rdc);
}
