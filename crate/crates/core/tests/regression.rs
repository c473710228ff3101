//! Frozen values from this engine, cross-checked against the phase-screen
//! oracle (coupling) and the turbulence-free closed forms (dimensionality).

use oamturb::channel::shannon_operator;
use oamturb::modes::{plate_spectrum, PhasePlate, DEFAULT_L_MAX};
use oamturb::scattering::{coupling_table, purity, DEFAULT_DL_MAX};
use oamturb::turbulence::TurbulenceModel;

const COUPLING: [(f64, [f64; 4]); 3] = [
    (
        0.30,
        [0.684538373, 0.0902049343, 0.0130014541, 0.00266405094],
    ),
    (0.65, [0.349938607, 0.125064968, 0.0399500131, 0.0131544055]),
    (1.00, [0.19254518, 0.102701632, 0.0479146627, 0.0218120716]),
];

// (ratio, quadrant D, half D)
const DIMENSIONALITY: [(f64, f64, f64); 6] = [
    (0.1, 5.74414063, 2.9921311),
    (0.3, 4.76180701, 2.92881091),
    (0.5, 3.8473492, 2.77430436),
    (0.65, 3.32946166, 2.62183407),
    (0.8, 2.9378865, 2.46409381),
    (1.0, 2.55932151, 2.27001078),
];

#[test]
fn coupling_tables() {
    for (ratio, expected) in COUPLING {
        let t = coupling_table(&TurbulenceModel::new(ratio).unwrap(), 3).unwrap();
        for (d, e) in expected.iter().enumerate() {
            assert!(
                (t.values()[d] - e).abs() < 1e-6,
                "ratio {ratio} delta {d}: {}",
                t.values()[d]
            );
        }
    }
}

#[test]
fn dimensionality_decay() {
    let quad = plate_spectrum(&PhasePlate::quadrant(), DEFAULT_L_MAX).unwrap();
    let half = plate_spectrum(&PhasePlate::half(), DEFAULT_L_MAX).unwrap();
    for (ratio, dq, dh) in DIMENSIONALITY {
        let t = coupling_table(&TurbulenceModel::new(ratio).unwrap(), DEFAULT_DL_MAX).unwrap();
        assert!(
            (shannon_operator(&quad, &t).unwrap() - dq).abs() < 1e-5,
            "quadrant at {ratio}"
        );
        assert!(
            (shannon_operator(&half, &t).unwrap() - dh).abs() < 1e-5,
            "half at {ratio}"
        );
    }
}

#[test]
fn purity_at_working_point() {
    let t = coupling_table(&TurbulenceModel::new(0.65).unwrap(), DEFAULT_DL_MAX).unwrap();
    for plate in [PhasePlate::quadrant(), PhasePlate::half()] {
        let p = purity(&plate_spectrum(&plate, DEFAULT_L_MAX).unwrap(), &t);
        assert!((p - 0.1572074).abs() < 1e-6, "{p}");
    }
}
