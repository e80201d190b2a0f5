//! Writes a synthetic descriptor table with all three targets.
//!
//! cargo run -p phosml --example make_synthetic -- data/synthetic_206.csv 206 7

use phosml::dataset::write_dataset;
use phosml::synthetic::emitter_dataset;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "synthetic.csv".into());
    let n: usize = args.next().map_or(206, |s| s.parse().expect("row count"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let file = std::fs::File::create(&path).expect("create output file");
    write_dataset(file, &emitter_dataset(n, seed)).expect("write dataset");
    eprintln!("wrote {n} rows to {path}");
}
