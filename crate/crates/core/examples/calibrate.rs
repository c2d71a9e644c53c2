//! Regenerates the reference activity trace and fits the default energy
//! coefficients to it.
//!
//! ```text
//! cargo run --release -p dtsnn-core --example calibrate -- runs/desk/model.ckpt data/mnist 1000
//! ```
//!
//! Writes `crates/core/assets/reference_activity.csv` and prints the
//! coefficient block to paste into `imc/calibration.rs`.

use std::path::Path;

use dtsnn::data::{load_checkpoint, load_idx, Normalization, Split};
use dtsnn::imc::{calibrate, map_network, static_breakdown, ActivityTrace, ArchConfig, CalibrationTargets, BASE_COEFFICIENTS};

fn main() -> dtsnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ckpt = args.first().map_or("runs/desk/model.ckpt", String::as_str);
    let dir = Path::new(args.get(1).map_or("data/mnist", String::as_str));
    let samples: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);

    let model = load_checkpoint(Path::new(ckpt))?.model;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
        Normalization::MNIST,
    )?
    .take(samples)?;
    let targets = CalibrationTargets::default();
    let trace = ActivityTrace::record(&model, &test, targets.ratio_timesteps, 250)?;
    let out = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/reference_activity.csv");
    let mut csv = String::from("# mean nonzero inputs per weighted layer; desk network, first MNIST test images\n");
    csv.push_str(&trace.to_csv());
    std::fs::write(&out, csv).map_err(|e| dtsnn::Error::Io { path: out.clone(), source: e })?;
    println!("wrote {}", out.display());

    let mut arch = ArchConfig::default();
    let mapping = map_network(model.spec(), &arch)?;
    let fitted = calibrate(&BASE_COEFFICIENTS, &mapping, &trace, &arch, &targets)?;
    arch.energy = fitted.clone();
    let e = |t| static_breakdown(&mapping, &trace, t, &arch).map(|b| b.total());
    let shares = static_breakdown(&mapping, &trace, targets.share_timesteps, &arch)?.shares();
    println!("E(8)/E(1) = {:.4}, shares at T=4 = {shares:?}", e(8)? / e(1)?);
    println!("pub const DEFAULT_COEFFICIENTS: EnergyCoefficients = {fitted:#?};");
    Ok(())
}
