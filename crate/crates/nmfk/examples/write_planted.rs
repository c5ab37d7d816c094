//! Writes a planted instance as a CSV table: `write_planted N M K SEED [MISSING]`.
use nmfk::synthetic::{planted, to_table, PlantedSpec};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 4 {
        eprintln!("usage: write_planted N M K SEED [MISSING_FRACTION]");
        std::process::exit(2);
    }
    let num = |i: usize| args[i].parse::<usize>().expect("integer argument");
    let spec = PlantedSpec {
        missing_fraction: args.get(4).map_or(0.0, |s| s.parse().expect("fraction")),
        ..PlantedSpec::new(num(0), num(1), num(2))
    };
    print!("{}", to_table(&planted(&spec, num(3) as u64), true));
}
