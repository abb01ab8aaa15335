// Draws a dataset from the built-in simulation design and writes it as CSV.
//
// `cargo run --example simulate_data -- [n] [seed] [path]`

use cfsurv::simulation::{simulate_dataset, DgpConfig};

fn run(n: usize, seed: u64, path: &str) -> cfsurv::Result<()> {
    let data = simulate_dataset(&DgpConfig { n, seed, ..DgpConfig::default() })?;
    data.write_csv(path)?;
    let events = data.observations().iter().filter(|o| o.is_event()).count();
    println!("{n} rows ({} treated, {events} events) -> {path}", data.count_arm(1));
    Ok(())
}

#[allow(dead_code)]
fn main() -> cfsurv::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let path = args.get(2).map(String::as_str).unwrap_or("simulated.csv");
    run(n, seed, path)
}
