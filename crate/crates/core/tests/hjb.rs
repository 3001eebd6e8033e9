mod common;

use ergodic_core::hjb::{extract_eigenvector, run_time_dependent, HjbConfig};
use ergodic_core::perron::optimize_perron;
use ergodic_core::simplex::to_chart;
use ergodic_core::ModelParams;

fn separation_error(dy: f64) -> (f64, f64) {
    let p = ModelParams::reference();
    let cfg = HjbConfig {
        dy,
        ..HjbConfig::default()
    };
    let run = run_time_dependent(&p, &cfg).unwrap();
    let eig = extract_eigenvector(&p, &run).unwrap();
    let star = optimize_perron(&p).unwrap().alpha();
    let target = to_chart(&common::right_vector(&p, star));
    (eig.distance_to_separation(target), eig.stationarity_spread)
}

#[test]
fn separation_passes_through_optimal_eigenvector() {
    let (fine, spread) = separation_error(1e-2);
    assert!(fine <= 2e-2, "distance {fine}");
    assert!(spread <= 2e-2, "stationarity {spread}");
}

#[test]
fn refinement_does_not_worsen_eigenvalue() {
    let p = ModelParams::reference();
    let star = optimize_perron(&p).unwrap().lambda();
    let gap = |dy: f64| {
        let cfg = HjbConfig {
            dy,
            ..HjbConfig::default()
        };
        (run_time_dependent(&p, &cfg).unwrap().lambda_slope - star).abs()
    };
    let coarse = gap(2e-2);
    let fine = gap(1e-2);
    assert!(fine < coarse, "coarse {coarse}, fine {fine}");
}
