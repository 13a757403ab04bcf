//! Runs the bundled reference scenario through the library API and prints the
//! report plus an Urban Intersection KPI summary.

use std::path::Path;

fn main() {
    let scenario =
        mergesim::Scenario::from_json(&mergesim::world::reference_scenario_json()).unwrap();
    let out = Path::new("out-reference");
    let report = mergesim::run(&scenario, out).unwrap();
    println!(
        "run {}: {} vehicles, {} sent / {} delivered / {} dropped",
        report.run_id,
        report.vehicles_spawned,
        report.messages_sent,
        report.messages_delivered,
        report.messages_dropped
    );
    let req = mergesim::kpi::find_requirement("Urban Intersection").unwrap();
    let (kpi, _) = mergesim::kpi::analyze(
        Path::new(&report.message_trace),
        Path::new(&report.position_trace),
        &req,
        scenario.merge_zone,
        &scenario.doc.radio,
    )
    .unwrap();
    print!("{}", kpi.to_text());
}
