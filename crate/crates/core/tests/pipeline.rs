use normsol_core::constants::{a0, classify};
use normsol_core::dynamics::{evolve, ComplexProfile, EvolveOptions};
use normsol_core::functionals::{energy, lagrange_multiplier};
use normsol_core::io::ProfileDocument;
use normsol_core::minimize::{minimize_default, MinimizeOptions};
use normsol_core::mountainpass::{estimate_mp_level, FamilySpec};
use normsol_core::{ProblemParams, RadialGrid, Regime, SharpConstants};

#[test]
fn minimizer_survives_serialization_and_stands_still() {
    let base = ProblemParams::new(3, 2.5, 1.0, 1.0).unwrap();
    let c = SharpConstants::compute(&base).unwrap();
    let params = base.with_mass(0.5 * a0(&base, &c).unwrap());
    assert_eq!(classify(&params).unwrap(), Regime::Omega1);

    let grid = RadialGrid::new(3, 40.0, 2048).unwrap();
    let min = minimize_default(&params, &grid, &MinimizeOptions::default()).unwrap();
    assert!(min.converged && min.energy < 0.0);

    let text = ProfileDocument::of(&min.final_profile).to_json().unwrap();
    let back = ProfileDocument::from_json(&text).unwrap().into_profile().unwrap();
    assert_eq!(back.values(), min.final_profile.values());
    assert_eq!(energy(&params, &back).unwrap(), min.energy);

    let opts = EvolveOptions { dt: 1e-3, t_end: 0.5, sample_interval: 0.1, ..Default::default() };
    let traj = evolve(&params, &ComplexProfile::from_real(&back), Some(&back), &opts).unwrap();
    assert!(traj.blowup.is_none());
    assert!(traj.mass_drift_rate() < 1e-10);
    assert!(traj.modulus_drift.iter().all(|&d| d < 1e-6));
    let lambda = lagrange_multiplier(&params, &back).unwrap();
    assert!((traj.phase_rate() + lambda).abs() < 1e-4 * lambda.abs());

    let level = estimate_mp_level(&params, &min, &FamilySpec { members: 12, refine: false, ..Default::default() }).unwrap();
    assert!(level.accepted && level.level > 0.0 && level.level > min.energy);
}
