//! Writes the built-in scenarios as TOML, then loads and validates them.

use monaas::sim::suite::scenario_suite;
use monaas::sim::Scenario;

fn main() {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("monaas-scenarios"), Into::into);
    std::fs::create_dir_all(&dir).unwrap();
    for sc in scenario_suite() {
        let path = dir.join(format!("{}.toml", sc.name));
        std::fs::write(&path, sc.to_toml_string()).unwrap();
        let back = Scenario::from_file(&path).expect("written file parses");
        back.validate().expect("built-ins are valid");
        println!("{} ({} nodes, {} tasks)", path.display(), back.nodes.len(), back.tasks.len());
    }
}
