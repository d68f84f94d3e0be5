//! CSV artifacts.
//!
//! Field files start with `dim,nx[,ny[,nz]],Lx[,Ly[,Lz]]` (cells per axis and
//! side lengths of a box anchored at the origin), followed by one vertex value
//! per line with x varying fastest. Values carry 17 significant digits, so a
//! write/read cycle reproduces every bit.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::coeff::{CoeffField, SymMatrix};
use crate::diagnostics::RegularityFit;
use crate::error::{Error, Result};
use crate::mesh::{BoxDomain, Mesh, ScalarField};
use crate::optimizer::HistoryRow;

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{what}: cannot parse `{}` as a number", s.trim())))
}

pub fn field_to_string(u: &ScalarField) -> String {
    let mesh = u.mesh();
    let mut header = vec![mesh.dim().to_string()];
    header.extend(mesh.cells_per_axis().iter().map(|n| n.to_string()));
    header.extend(mesh.domain().side_lengths.iter().map(|l| l.to_string()));
    let mut out = header.join(",");
    out.push('\n');
    for x in u.values() {
        out.push_str(&fmt_real(*x));
        out.push('\n');
    }
    out
}

pub fn field_from_str(text: &str) -> Result<ScalarField> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty field file".into()))?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    let dim: usize = parts
        .first()
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::Format(format!("header `{header}`: missing dimension")))?;
    if !(1..=3).contains(&dim) || parts.len() != 1 + 2 * dim {
        return Err(Error::Format(format!(
            "header `{header}`: expected dim followed by {dim} counts and {dim} lengths"
        )));
    }
    let cells = parts[1..=dim]
        .iter()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("header `{header}`: bad cell count `{s}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let sides = parts[dim + 1..]
        .iter()
        .map(|s| parse_real(s, "header"))
        .collect::<Result<Vec<f64>>>()?;
    let mesh = Mesh::build(BoxDomain::new(&sides, &vec![0.0; dim])?, &cells)?;
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| parse_real(l, &format!("value {}", i + 1)))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != mesh.vertex_count() {
        return Err(Error::CountMismatch {
            expected: mesh.vertex_count(),
            actual: values.len(),
        });
    }
    ScalarField::from_values(&mesh, values)
}

pub fn write_field(u: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, field_to_string(u))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    field_from_str(&fs::read_to_string(path)?)
}

/// Rows `cell,a11,a12,…` with the upper triangle row by row; no header.
pub fn coeff_to_string(a: &CoeffField) -> String {
    let mut out = String::new();
    for (c, m) in a.matrices().iter().enumerate() {
        let upper: Vec<String> = m.upper().iter().map(|x| fmt_real(*x)).collect();
        out.push_str(&format!("{c},{}\n", upper.join(",")));
    }
    out
}

/// Reads coefficient rows for `mesh`; bounds are the observed eigenvalue range.
pub fn coeff_from_str(text: &str, mesh: &Arc<Mesh>) -> Result<CoeffField> {
    let dim = mesh.dim();
    let width = dim * (dim + 1) / 2;
    let mut matrices = Vec::with_capacity(mesh.cell_count());
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 1 + width {
            return Err(Error::Format(format!(
                "coefficient row {}: expected {} columns, got {}",
                i + 1,
                1 + width,
                parts.len()
            )));
        }
        if parts[0].trim().parse::<usize>().ok() != Some(i) {
            return Err(Error::Format(format!(
                "coefficient row {}: expected cell index {i}, got `{}`",
                i + 1,
                parts[0].trim()
            )));
        }
        let upper = parts[1..]
            .iter()
            .map(|s| parse_real(s, "coefficient"))
            .collect::<Result<Vec<f64>>>()?;
        matrices.push(SymMatrix::from_upper(dim, &upper)?);
    }
    if matrices.len() != mesh.cell_count() {
        return Err(Error::CountMismatch {
            expected: mesh.cell_count(),
            actual: matrices.len(),
        });
    }
    CoeffField::from_matrices(mesh, matrices)
}

pub fn write_coeff(a: &CoeffField, path: &Path) -> Result<()> {
    fs::write(path, coeff_to_string(a))?;
    Ok(())
}

pub fn read_coeff(path: &Path, mesh: &Arc<Mesh>) -> Result<CoeffField> {
    coeff_from_str(&fs::read_to_string(path)?, mesh)
}

pub fn write_history(rows: &[HistoryRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        f,
        "stage,iter,total,dirichlet,mass_penalty,volume_penalty,exact_volume,step"
    )?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            r.stage,
            r.iter,
            fmt_real(r.total),
            fmt_real(r.dirichlet),
            fmt_real(r.mass_penalty),
            fmt_real(r.volume_penalty),
            fmt_real(r.exact_volume),
            fmt_real(r.step)
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Per-point fits: coordinates, exponent, prefactor, r2.
pub fn write_fits(fits: &[RegularityFit], dim: usize, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    let coords = ["x", "y", "z"];
    writeln!(f, "{},exponent,prefactor,r2", coords[..dim].join(","))?;
    for fit in fits {
        let xs: Vec<String> = fit.center.iter().map(|x| fmt_real(*x)).collect();
        writeln!(
            f,
            "{},{},{},{}",
            xs.join(","),
            fmt_real(fit.exponent),
            fmt_real(fit.prefactor),
            fmt_real(fit.r2)
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_points(points: &[Vec<f64>], dim: usize, path: &Path) -> Result<()> {
    let coords = ["x", "y", "z"];
    let mut out = coords[..dim].join(",");
    out.push('\n');
    for p in points {
        let xs: Vec<String> = p.iter().map(|x| fmt_real(*x)).collect();
        out.push_str(&xs.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_random_piecewise, Ellipticity};
    use proptest::prelude::*;

    fn mesh() -> Arc<Mesh> {
        Mesh::build(BoxDomain::new(&[3.0, 2.5], &[0.0, 0.0]).unwrap(), &[7, 5]).unwrap()
    }

    #[test]
    fn zero_field_round_trip() {
        let u = ScalarField::zeros(&mesh());
        let text = field_to_string(&u);
        assert!(text.starts_with("2,7,5,3,2.5\n"));
        let back = field_from_str(&text).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(**back.mesh(), **u.mesh());
    }

    #[test]
    fn count_mismatch_reports_both_counts() {
        let u = ScalarField::zeros(&mesh());
        let mut text = field_to_string(&u);
        text.push_str("1.0\n");
        match field_from_str(&text) {
            Err(Error::CountMismatch {
                expected: 48,
                actual: 49,
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(field_from_str("2,7\n"), Err(Error::Format(_))));
        assert!(matches!(field_from_str(""), Err(Error::Format(_))));
    }

    #[test]
    fn coeff_round_trip() {
        let m = mesh();
        let a = make_random_piecewise(&m, 3, Ellipticity::new(0.5, 4.0).unwrap(), 2).unwrap();
        let back = coeff_from_str(&coeff_to_string(&a), &m).unwrap();
        assert_eq!(back.matrices(), a.matrices());
        assert!(coeff_from_str("0,1,0,1\n", &m).is_err());
    }

    proptest! {
        #[test]
        fn random_field_round_trip_is_bit_exact(values in prop::collection::vec(-1e300f64..1e300, 48)) {
            let u = ScalarField::from_values(&mesh(), values).unwrap();
            let back = field_from_str(&field_to_string(&u)).unwrap();
            for (a, b) in back.values().iter().zip(u.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
