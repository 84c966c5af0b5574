//! Spectrum of the averaged Pauli-weight chain for one gate and coupling.
//!
//! Usage: chain_spectra [gate] [coupling] [n] [k] [tol]
//! Defaults: xy random 6 8 1e-9. Gate specs are the same strings the CLI
//! accepts: cnot, xy, dcnot, swap, u4, or w:ax,ay,az.

use randent::cli::markov_kernel;
use randent::gatelib::GateSpec;
use randent::paulichain::{chain_operator, lumped_chain, Coupling, LinearChain};
use randent::spectral::{degeneracy_profile, dense_spectrum, gap, top_eigenvalues, SpectrumResult};
use std::time::Instant;

fn report(label: &str, spec: &SpectrumResult) {
    println!("{label}: unit multiplicity {}", spec.unit_multiplicity);
    println!("  gap {:.12}", gap(spec).unwrap());
    for (value, mult) in degeneracy_profile(spec, 1e-6) {
        println!("  {value:.12}  x{mult}");
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gate: GateSpec = args.get(1).map(String::as_str).unwrap_or("xy").parse().unwrap();
    let coupling: Coupling = args.get(2).map(String::as_str).unwrap_or("random").parse().unwrap();
    let n: usize = args.get(3).map(String::as_str).unwrap_or("6").parse().unwrap();
    let k: usize = args.get(4).map(String::as_str).unwrap_or("8").parse().unwrap();
    let tol: f64 = args.get(5).map(String::as_str).unwrap_or("1e-9").parse().unwrap();

    let kernel = markov_kernel(&gate).unwrap();
    let full = chain_operator(&kernel, n, coupling).unwrap();

    let t0 = Instant::now();
    let spec_full = if full.dim() <= 4096 {
        dense_spectrum(&full).unwrap()
    } else {
        top_eigenvalues(&full, k, tol).unwrap()
    };
    report(
        &format!("full chain n={n} ({:.1}s)", t0.elapsed().as_secs_f64()),
        &spec_full,
    );

    // the lumped chain sees the same leading spectrum at a fraction of the cost
    let lumped = lumped_chain(&kernel, n, coupling).unwrap();
    let t0 = Instant::now();
    let spec_lumped = if lumped.dim() <= 2048 {
        dense_spectrum(&lumped).unwrap()
    } else {
        top_eigenvalues(&lumped, k, tol).unwrap()
    };
    report(
        &format!("lumped chain n={n} ({:.1}s)", t0.elapsed().as_secs_f64()),
        &spec_lumped,
    );
}
