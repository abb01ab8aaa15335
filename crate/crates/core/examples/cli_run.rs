// Drives the command-line front end in-process on the bundled dataset and
// lists the files it writes.

use std::path::{Path, PathBuf};

fn run(out: &Path) -> Vec<PathBuf> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data/simulated_200.csv");
    let out_s = out.to_string_lossy().into_owned();
    let code = cfsurv::cli::run([
        "cfsurv", "estimate", "--data", data, "--covariates", "w1,w2,w3", "--tau", "12", "--band", "variable", "--t0", "2", "--t1", "11",
        "--s-learners", "km,exp,cox", "--g-learners", "km,exp", "--paths", "2000", "--out", &out_s,
    ]);
    assert_eq!(code, 0, "estimate failed");
    let mut files: Vec<PathBuf> = std::fs::read_dir(out).expect("output dir").map(|e| e.expect("entry").path()).collect();
    files.sort();
    files
}

#[allow(dead_code)]
fn main() {
    let out = std::env::temp_dir().join("cfsurv_cli_example");
    for f in run(&out) {
        println!("{}", f.display());
    }
}
