//! Flat binary container for symbols and operator matrices, plus text dumps.
//!
//! Layout (all fields little-endian):
//!
//! | offset | field |
//! |---|---|
//! | 0  | magic `OMGC` |
//! | 4  | version `u16` |
//! | 6  | kind `u8` (0 symbol, 1 matrix), one reserved byte |
//! | 8  | timestamp `u64` (seconds since the Unix epoch) |
//! | 16 | kind header |
//!
//! Symbol header: `d, n_q, n_p` (`u32`), `L_q, L_p, ℏ` (`f64`), ordering tag
//! and domain flag (`u8`), two pad bytes. Matrix header: `rows, cols`
//! (`u32`), `ℏ` (`f64`), basis kind `u8` (0 Fock, 1 position grid), seven pad
//! bytes, position-grid half-width `f64` (0 for Fock). The payload follows
//! as interleaved `re, im` doubles in row-major (q-major) order.

use std::io::{Cursor, Read, Write};
use std::ops::Range;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{OmegaError, Result};
use crate::linalg::CMatrix;
use crate::ordering::OrderingRule;
use crate::phase_grid::{Domain, PhaseGrid, Symbol};
use crate::quantizer::{Basis, OperatorMatrix};
use crate::scalar::{c, Real};

pub const MAGIC: [u8; 4] = *b"OMGC";
pub const VERSION: u16 = 1;
/// Bytes holding the timestamp; checksums are taken with them zeroed.
pub const TIMESTAMP_RANGE: Range<usize> = 8..16;

const KIND_SYMBOL: u8 = 0;
const KIND_MATRIX: u8 = 1;

#[derive(Clone, Debug)]
pub enum Payload<T: Real> {
    Symbol(Symbol<T>),
    Matrix(OperatorMatrix<T>),
}

#[derive(Clone, Debug)]
pub struct Container<T: Real> {
    pub timestamp: u64,
    pub payload: Payload<T>,
}

fn io_err(e: std::io::Error) -> OmegaError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        OmegaError::Format("container is truncated".into())
    } else {
        OmegaError::Io(e)
    }
}

fn write_preamble<W: Write>(w: &mut W, kind: u8, timestamp: u64) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u8(kind)?;
    w.write_u8(0)?;
    w.write_u64::<LittleEndian>(timestamp)
}

fn write_values<W: Write, T: Real>(w: &mut W, values: &[num_complex::Complex<T>]) -> std::io::Result<()> {
    for v in values {
        w.write_f64::<LittleEndian>(v.re.to_f64_lossy())?;
        w.write_f64::<LittleEndian>(v.im.to_f64_lossy())?;
    }
    Ok(())
}

pub fn write_symbol<W: Write, T: Real>(w: &mut W, f: &Symbol<T>, timestamp: u64) -> Result<()> {
    let g = f.grid();
    write_preamble(w, KIND_SYMBOL, timestamp)?;
    for n in [g.dim(), g.n_q(), g.n_p()] {
        w.write_u32::<LittleEndian>(n as u32)?;
    }
    for x in [g.l_q(), g.l_p(), g.hbar()] {
        w.write_f64::<LittleEndian>(x.to_f64_lossy())?;
    }
    w.write_u8(f.ordering().tag())?;
    w.write_u8(f.domain().tag())?;
    w.write_all(&[0, 0])?;
    write_values(w, f.values())?;
    Ok(())
}

pub fn write_matrix<W: Write, T: Real>(w: &mut W, a: &OperatorMatrix<T>, timestamp: u64) -> Result<()> {
    write_preamble(w, KIND_MATRIX, timestamp)?;
    w.write_u32::<LittleEndian>(a.matrix.rows() as u32)?;
    w.write_u32::<LittleEndian>(a.matrix.cols() as u32)?;
    w.write_f64::<LittleEndian>(a.hbar.to_f64_lossy())?;
    let (kind, l) = match a.basis {
        Basis::Fock { .. } => (0u8, 0.0),
        Basis::PositionGrid { l, .. } => (1u8, l.to_f64_lossy()),
    };
    w.write_u8(kind)?;
    w.write_all(&[0; 7])?;
    w.write_f64::<LittleEndian>(l)?;
    write_values(w, a.matrix.as_slice())?;
    Ok(())
}

pub fn encode_symbol<T: Real>(f: &Symbol<T>, timestamp: u64) -> Vec<u8> {
    let mut out = Vec::new();
    write_symbol(&mut out, f, timestamp).expect("writing to memory");
    out
}

pub fn encode_matrix<T: Real>(a: &OperatorMatrix<T>, timestamp: u64) -> Vec<u8> {
    let mut out = Vec::new();
    write_matrix(&mut out, a, timestamp).expect("writing to memory");
    out
}

fn read_values<R: Read, T: Real>(r: &mut R, n: usize) -> Result<Vec<num_complex::Complex<T>>> {
    (0..n)
        .map(|_| {
            let re = r.read_f64::<LittleEndian>().map_err(io_err)?;
            let im = r.read_f64::<LittleEndian>().map_err(io_err)?;
            Ok(c(T::lit(re), T::lit(im)))
        })
        .collect()
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<Container<T>> {
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != MAGIC {
        return Err(OmegaError::Format("not a symbol/matrix container (bad magic)".into()));
    }
    let version = r.read_u16::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(OmegaError::Format(format!("unsupported container version {version}")));
    }
    let kind = r.read_u8().map_err(io_err)?;
    r.read_u8().map_err(io_err)?;
    let timestamp = r.read_u64::<LittleEndian>().map_err(io_err)?;
    let payload = match kind {
        KIND_SYMBOL => {
            let mut dims = [0usize; 3];
            for slot in dims.iter_mut() {
                *slot = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
            }
            let mut lens = [0f64; 3];
            for slot in lens.iter_mut() {
                *slot = r.read_f64::<LittleEndian>().map_err(io_err)?;
            }
            let ordering = OrderingRule::from_tag(r.read_u8().map_err(io_err)?)
                .ok_or_else(|| OmegaError::Format("unknown ordering tag".into()))?;
            let domain = Domain::from_tag(r.read_u8().map_err(io_err)?)
                .ok_or_else(|| OmegaError::Format("unknown domain flag".into()))?;
            let mut pad = [0u8; 2];
            r.read_exact(&mut pad).map_err(io_err)?;
            let grid = PhaseGrid::new(dims[0], dims[1], dims[2], T::lit(lens[0]), T::lit(lens[1]), T::lit(lens[2]))?;
            let values = read_values(&mut r, grid.len())?;
            Payload::Symbol(Symbol::new(grid, values, ordering, domain)?)
        }
        KIND_MATRIX => {
            let rows = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
            let cols = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
            let hbar = r.read_f64::<LittleEndian>().map_err(io_err)?;
            let basis_kind = r.read_u8().map_err(io_err)?;
            let mut pad = [0u8; 7];
            r.read_exact(&mut pad).map_err(io_err)?;
            let l = r.read_f64::<LittleEndian>().map_err(io_err)?;
            let basis = match basis_kind {
                0 => Basis::Fock { levels: rows },
                1 => Basis::PositionGrid { n: rows, l: T::lit(l) },
                k => return Err(OmegaError::Format(format!("unknown basis kind {k}"))),
            };
            let values = read_values(&mut r, rows * cols)?;
            let matrix = CMatrix::from_row_major(rows, cols, values)?;
            Payload::Matrix(OperatorMatrix {
                basis,
                matrix,
                hbar: T::lit(hbar),
            })
        }
        k => return Err(OmegaError::Format(format!("unknown container kind {k}"))),
    };
    if (r.position() as usize) != bytes.len() {
        return Err(OmegaError::Format("trailing bytes after the payload".into()));
    }
    Ok(Container { timestamp, payload })
}

pub fn read_file(path: &Path) -> Result<Container<f64>> {
    decode(&std::fs::read(path)?)
}

/// The bytes with the timestamp zeroed, for checksums.
pub fn checksum_view(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    if out.len() >= TIMESTAMP_RANGE.end && out[..4] == MAGIC {
        out[TIMESTAMP_RANGE].fill(0);
    }
    out
}

/// Plot-ready CSV: one row per lattice point, `q…, p…, re, im`.
pub fn symbol_csv<T: Real>(f: &Symbol<T>) -> String {
    let g = f.grid();
    let d = g.dim();
    let mut head: Vec<String> = (1..=d).map(|i| format!("q{i}")).collect();
    head.extend((1..=d).map(|i| format!("p{i}")));
    head.push("re".into());
    head.push("im".into());
    let mut s = head.join(",");
    s.push('\n');
    for (i, v) in f.values().iter().enumerate() {
        let z = g.point(i);
        for x in z.q.iter().chain(z.p.iter()) {
            s.push_str(&format!("{:.16e},", x.to_f64_lossy()));
        }
        s.push_str(&format!("{:.16e},{:.16e}\n", v.re.to_f64_lossy(), v.im.to_f64_lossy()));
    }
    s
}

/// Human-readable summary of a container.
pub fn describe<T: Real>(c: &Container<T>, preview: usize) -> String {
    let mut s = format!("timestamp: {}\n", c.timestamp);
    let values = match &c.payload {
        Payload::Symbol(f) => {
            let g = f.grid();
            s.push_str(&format!(
                "kind: symbol\nd: {}\nn_q: {}\nn_p: {}\nL_q: {:.16e}\nL_p: {:.16e}\nhbar: {:.16e}\nordering: {}\ndomain: {:?}\n",
                g.dim(),
                g.n_q(),
                g.n_p(),
                g.l_q().to_f64_lossy(),
                g.l_p().to_f64_lossy(),
                g.hbar().to_f64_lossy(),
                f.ordering(),
                f.domain()
            ));
            f.values()
        }
        Payload::Matrix(a) => {
            let basis = match a.basis {
                Basis::Fock { levels } => format!("fock ({levels} levels)"),
                Basis::PositionGrid { n, l } => format!("position grid (n = {n}, L = {:.16e})", l.to_f64_lossy()),
            };
            s.push_str(&format!(
                "kind: matrix\nrows: {}\ncols: {}\nhbar: {:.16e}\nbasis: {basis}\n",
                a.matrix.rows(),
                a.matrix.cols(),
                a.hbar.to_f64_lossy()
            ));
            a.matrix.as_slice()
        }
    };
    let norm: f64 = values.iter().map(|v| v.norm_sqr().to_f64_lossy()).sum::<f64>().sqrt();
    s.push_str(&format!("entries: {}\nl2_norm: {:.16e}\n", values.len(), norm));
    for (i, v) in values.iter().take(preview).enumerate() {
        s.push_str(&format!("[{i}] {:.16e} {:+.16e}i\n", v.re.to_f64_lossy(), v.im.to_f64_lossy()));
    }
    s
}
