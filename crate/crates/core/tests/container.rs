use num_complex::Complex;
use omega_core::container::*;
use omega_core::linalg::CMatrix;
use omega_core::phase_grid::{Domain, PhaseGrid, Symbol};
use omega_core::quantizer::{Basis, OperatorMatrix};
use omega_core::{OmegaError, OrderingRule};

fn sample_symbol() -> Symbol<f64> {
    let grid = PhaseGrid::square(8, 2.0, 0.5).unwrap();
    Symbol::from_fn_1d(&grid, OrderingRule::Antinormal, |q: f64, p: f64| Complex::new(q * q - p, 0.25 * q * p))
}

#[test]
fn symbol_round_trip_and_layout() {
    let f = sample_symbol();
    let bytes = encode_symbol(&f, 1_700_000_000);
    // 56-byte header, then 64 complex doubles.
    assert_eq!(bytes.len(), 56 + 64 * 16);
    assert_eq!(&bytes[..4], b"OMGC");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1_700_000_000);
    assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 8);
    assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), 2.0);
    assert_eq!(f64::from_le_bytes(bytes[44..52].try_into().unwrap()), 0.5);
    assert_eq!(bytes[52], OrderingRule::Antinormal.tag());
    assert_eq!(bytes[53], Domain::Phase.tag());
    // First lattice point is (−L, −L): q² − p = 6, qp/4 = 1.
    assert_eq!(f64::from_le_bytes(bytes[56..64].try_into().unwrap()), 6.0);
    assert_eq!(f64::from_le_bytes(bytes[64..72].try_into().unwrap()), 1.0);

    let back = decode::<f64>(&bytes).unwrap();
    assert_eq!(back.timestamp, 1_700_000_000);
    let Payload::Symbol(g) = back.payload else { panic!("expected a symbol") };
    assert_eq!(g.values(), f.values());
    assert_eq!(g.ordering(), OrderingRule::Antinormal);
    assert_eq!(g.grid(), f.grid());
}

#[test]
fn matrix_round_trip() {
    let m = CMatrix::from_fn(8, 8, |i, j| Complex::new(i as f64, -(j as f64) * 0.5));
    for basis in [Basis::Fock { levels: 8 }, Basis::PositionGrid { n: 8, l: 3.5 }] {
        let a = OperatorMatrix { basis, matrix: m.clone(), hbar: 0.1 };
        let bytes = encode_matrix(&a, 5);
        assert_eq!(bytes.len(), 48 + 64 * 16);
        let Payload::Matrix(b) = decode::<f64>(&bytes).unwrap().payload else { panic!("expected a matrix") };
        assert_eq!(b.basis, basis);
        assert_eq!(b.matrix, m);
        assert_eq!(b.hbar, 0.1);
    }
}

#[test]
fn checksum_view_ignores_timestamp() {
    let f = sample_symbol();
    let a = encode_symbol(&f, 1);
    let b = encode_symbol(&f, 2);
    assert_ne!(a, b);
    assert_eq!(checksum_view(&a), checksum_view(&b));
}

#[test]
fn malformed_containers_are_rejected() {
    let bytes = encode_symbol(&sample_symbol(), 0);
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode::<f64>(&bad), Err(OmegaError::Format(_))));
    assert!(matches!(decode::<f64>(&bytes[..bytes.len() - 3]), Err(OmegaError::Format(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode::<f64>(&extra), Err(OmegaError::Format(_))));
    let mut tag = bytes;
    tag[52] = 99;
    assert!(matches!(decode::<f64>(&tag), Err(OmegaError::Format(_))));
}

#[test]
fn text_dumps() {
    let f = sample_symbol();
    let csv = symbol_csv(&f);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "q1,p1,re,im");
    assert_eq!(lines.len(), 65);
    assert_eq!(lines[1], "-2.0000000000000000e0,-2.0000000000000000e0,6.0000000000000000e0,1.0000000000000000e0");
    let c = decode::<f64>(&encode_symbol(&f, 9)).unwrap();
    let text = describe(&c, 2);
    assert!(text.contains("kind: symbol"));
    assert!(text.contains("ordering: antinormal"));
    assert!(text.contains("[1] "));
    assert!(!text.contains("[2] "));
}

#[test]
fn single_precision_round_trip() {
    let grid = PhaseGrid::<f32>::square(8, 2.0, 0.5).unwrap();
    let f = Symbol::from_fn_1d(&grid, OrderingRule::Weyl, Complex::new);
    let Payload::Symbol(g) = decode::<f32>(&encode_symbol(&f, 0)).unwrap().payload else { panic!() };
    assert_eq!(g.values(), f.values());
}
