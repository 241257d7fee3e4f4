//! CSV ingest and export.
//!
//! Schemas (header row required, column order free):
//! - observations: `t0..t{p-1}, y`
//! - model runs: `t0..t{p-1}, c0..c{q-1}, z`
//! - liquid drop data: `Z, N, E`
//! - prediction targets: `t0..t{p-1}`

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{Interval, ModelRunSet, ObservationSet};
use crate::error::{CalibError, Result};
use crate::models::LdmRecord;

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Table { headers, rows })
}

impl Table {
    fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| CalibError::MissingColumn(name.to_string()))
    }

    /// Indices of `prefix0, prefix1, ...` up to the first gap.
    fn indexed(&self, prefix: &str) -> Vec<usize> {
        (0..).map_while(|j| self.column(&format!("{prefix}{j}")).ok()).collect()
    }

    fn value(&self, row: usize, col: usize) -> Result<f64> {
        let cell = self.rows[row].get(col).unwrap_or("");
        let name = &self.headers[col];
        let v: f64 = cell.parse().map_err(|_| CalibError::Data {
            row: row + 1,
            column: name.clone(),
            message: format!("cannot parse '{cell}' as a number"),
        })?;
        if !v.is_finite() {
            return Err(CalibError::Data { row: row + 1, column: name.clone(), message: format!("non-finite value '{cell}'") });
        }
        Ok(v)
    }

    fn matrix(&self, cols: &[usize]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.rows.len(), cols.len());
        for i in 0..self.rows.len() {
            for (j, &c) in cols.iter().enumerate() {
                m[(i, j)] = self.value(i, c)?;
            }
        }
        Ok(m)
    }

    fn vector(&self, col: usize) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(self.matrix(&[col])?.as_slice()))
    }
}

/// Observations; the domain defaults to the bounding box of the inputs.
pub fn read_observations<R: Read>(reader: R, domain: Option<Vec<Interval>>) -> Result<ObservationSet> {
    let t = read_table(reader)?;
    let tc = t.indexed("t");
    if tc.is_empty() {
        return Err(CalibError::MissingColumn("t0".into()));
    }
    let yc = t.column("y")?;
    let x = t.matrix(&tc)?;
    let y = t.vector(yc)?;
    match domain {
        Some(d) => ObservationSet::new(x, y, d),
        None => ObservationSet::with_bounding_domain(x, y),
    }
}

pub fn read_model_runs<R: Read>(reader: R) -> Result<ModelRunSet> {
    let t = read_table(reader)?;
    let tc = t.indexed("t");
    if tc.is_empty() {
        return Err(CalibError::MissingColumn("t0".into()));
    }
    let cc = t.indexed("c");
    if cc.is_empty() {
        return Err(CalibError::MissingColumn("c0".into()));
    }
    let zc = t.column("z")?;
    ModelRunSet::new(t.matrix(&tc)?, t.matrix(&cc)?, t.vector(zc)?)
}

pub fn read_ldm<R: Read>(reader: R) -> Result<Vec<LdmRecord>> {
    let t = read_table(reader)?;
    let (zc, nc, ec) = (t.column("Z")?, t.column("N")?, t.column("E")?);
    (0..t.rows.len())
        .map(|i| {
            let count = |c: usize| -> Result<u32> {
                let v = t.value(i, c)?;
                if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(CalibError::Data {
                        row: i + 1,
                        column: t.headers[c].clone(),
                        message: format!("expected a positive integer, got {v}"),
                    });
                }
                Ok(v as u32)
            };
            Ok(LdmRecord { z: count(zc)?, n: count(nc)?, binding_energy: t.value(i, ec)? })
        })
        .collect()
}

/// Prediction targets; columns other than `t0, t1, ...` are ignored.
pub fn read_inputs<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let t = read_table(reader)?;
    let tc = t.indexed("t");
    if tc.is_empty() {
        return Err(CalibError::MissingColumn("t0".into()));
    }
    t.matrix(&tc)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))
}

pub fn read_observations_file(path: &Path, domain: Option<Vec<Interval>>) -> Result<ObservationSet> {
    read_observations(open(path)?, domain)
}

pub fn read_model_runs_file(path: &Path) -> Result<ModelRunSet> {
    read_model_runs(open(path)?)
}

pub fn read_inputs_file(path: &Path) -> Result<DMatrix<f64>> {
    read_inputs(open(path)?)
}

pub fn read_ldm_file(path: &Path) -> Result<Vec<LdmRecord>> {
    read_ldm(open(path)?)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_observations<W: Write>(writer: W, obs: &ObservationSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..obs.input_dim()).map(|j| format!("t{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for i in 0..obs.len() {
        let mut rec: Vec<String> = obs.inputs().row(i).iter().map(|v| fmt(*v)).collect();
        rec.push(fmt(obs.outputs()[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model_runs<W: Write>(writer: W, runs: &ModelRunSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..runs.input_dim()).map(|j| format!("t{j}")).collect();
    header.extend((0..runs.calib_dim()).map(|j| format!("c{j}")));
    header.push("z".into());
    w.write_record(&header)?;
    for i in 0..runs.len() {
        let mut rec: Vec<String> = runs.inputs().row(i).iter().map(|v| fmt(*v)).collect();
        rec.extend(runs.calib_settings().row(i).iter().map(|v| fmt(*v)));
        rec.push(fmt(runs.outputs()[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ldm<W: Write>(writer: W, records: &[LdmRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["Z", "N", "E"])?;
    for r in records {
        w.write_record([r.z.to_string(), r.n.to_string(), fmt(r.binding_energy)])?;
    }
    w.flush()?;
    Ok(())
}

/// Suffix of the band columns, e.g. `95` for a 0.95 level.
pub fn level_label(level: f64) -> String {
    let pct = 100.0 * level;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct}")
    }
}

/// Columns `t0..t{p-1}, mean, var, lo{L}, hi{L}`.
pub fn write_predictions<W: Write>(
    writer: W,
    targets: &DMatrix<f64>,
    mean: &[f64],
    var: &[f64],
    lower: &[f64],
    upper: &[f64],
    level: f64,
) -> Result<()> {
    let m = targets.nrows();
    for (name, col) in [("mean", mean), ("var", var), ("lower", lower), ("upper", upper)] {
        if col.len() != m {
            return Err(CalibError::dims(format!("prediction column {name}"), m, col.len()));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let l = level_label(level);
    let mut header: Vec<String> = (0..targets.ncols()).map(|j| format!("t{j}")).collect();
    header.extend(["mean".to_string(), "var".to_string(), format!("lo{l}"), format!("hi{l}")]);
    w.write_record(&header)?;
    for i in 0..m {
        let mut rec: Vec<String> = targets.row(i).iter().map(|v| fmt(*v)).collect();
        rec.extend([fmt(mean[i]), fmt(var[i]), fmt(lower[i]), fmt(upper[i])]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Create `path` and hand a buffered writer to `f`.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let file = std::fs::File::create(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_observations() {
        let o = read_observations("t0,t1,y\n0.1,0.2,1.5\n0.3,0.4,-2\n".as_bytes(), None).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.input_dim(), 2);
        assert_eq!(o.outputs()[1], -2.0);
    }

    #[test]
    fn nan_cell_cites_row() {
        let e = read_observations("t0,y\nNaN,1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(e, CalibError::Data { row: 1, ref column, .. } if column == "t0"), "{e:?}");
        let e = read_observations("t0,y\n0.5,1\n0.2,abc\n".as_bytes(), None).unwrap_err();
        assert!(matches!(e, CalibError::Data { row: 2, ref column, .. } if column == "y"));
    }

    #[test]
    fn missing_columns_named() {
        assert_eq!(read_observations("t0,x\n1,2\n".as_bytes(), None).unwrap_err(), CalibError::MissingColumn("y".into()));
        assert_eq!(read_model_runs("t0,z\n1,2\n".as_bytes()).unwrap_err(), CalibError::MissingColumn("c0".into()));
        assert_eq!(read_ldm("Z,E\n1,2\n".as_bytes()).unwrap_err(), CalibError::MissingColumn("N".into()));
    }

    #[test]
    fn runs_round_trip() {
        let runs = ModelRunSet::new(
            DMatrix::from_row_slice(2, 1, &[0.1, 1.0 / 3.0]),
            DMatrix::from_row_slice(2, 2, &[0.7, 1.9, 2.0 / 7.0, 0.0]),
            DVector::from_vec(vec![-0.25, 1e-17]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_model_runs(&mut buf, &runs).unwrap();
        assert_eq!(read_model_runs(buf.as_slice()).unwrap(), runs);
    }

    #[test]
    fn targets_ignore_extra_columns() {
        let t = read_inputs("t1,t0,mean\n2,1,9\n4,3,9\n".as_bytes()).unwrap();
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(read_inputs("x\n1\n".as_bytes()).unwrap_err(), CalibError::MissingColumn("t0".into()));
    }

    #[test]
    fn prediction_columns() {
        let t = DMatrix::from_row_slice(1, 2, &[0.5, 0.25]);
        let mut buf = Vec::new();
        write_predictions(&mut buf, &t, &[1.0], &[0.04], &[0.6], &[1.4], 0.95).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t0,t1,mean,var,lo95,hi95\n0.5,0.25,1.0,0.04,0.6,1.4\n");
        assert_eq!(level_label(0.975), "97.5");
        assert!(write_predictions(Vec::new(), &t, &[], &[0.0], &[0.0], &[0.0], 0.9).is_err());
    }

    #[test]
    fn ldm_rejects_fractional_counts() {
        assert!(read_ldm("Z,N,E\n2.5,2,28\n".as_bytes()).is_err());
        let r = read_ldm("Z,N,E\n2,2,28.29\n".as_bytes()).unwrap();
        assert_eq!(r[0], LdmRecord { z: 2, n: 2, binding_energy: 28.29 });
    }
}
