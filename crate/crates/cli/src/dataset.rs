//! CSV ingestion: `x,y[,z][,f2,...]` with a header row.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use gfref_core::designs::{SpatialDesign, Trend};
use gfref_core::likelihoods::DataVector;
use nalgebra::{DMatrix, DVector};

use crate::failure::Failure;

/// Parsed sampling design with optional observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub source: PathBuf,
    pub locations: Vec<[f64; 2]>,
    pub z: Option<Vec<f64>>,
    /// Names of the covariate columns after the coordinates (and response).
    pub covariate_names: Vec<String>,
    pub covariates: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.locations.len()
    }

    /// Number of mean parameters: the synthesized intercept plus the
    /// covariate columns.
    pub fn p(&self) -> usize {
        1 + self.covariate_names.len()
    }

    /// Design with the file's covariates, or with `trend` when given.
    pub fn design(&self, trend: Option<Trend>) -> Result<SpatialDesign, Failure> {
        let d = match trend {
            Some(t) => SpatialDesign::with_trend(self.locations.clone(), t)?,
            None if self.covariate_names.is_empty() => SpatialDesign::constant_mean(self.locations.clone())?,
            None => {
                let n = self.n();
                let x = DMatrix::from_fn(n, self.p(), |i, j| if j == 0 { 1.0 } else { self.covariates[i][j - 1] });
                SpatialDesign::new(self.locations.clone(), x)?
            }
        };
        Ok(d)
    }

    pub fn data(&self, trend: Option<Trend>) -> Result<DataVector, Failure> {
        let z = self
            .z
            .as_ref()
            .ok_or_else(|| Failure::validation(format!("{}: no response column 'z'", self.source.display())))?;
        Ok(DataVector::new(self.design(trend)?, DVector::from_column_slice(z))?)
    }
}

fn err(path: &Path, line: u64, msg: impl std::fmt::Display) -> Failure {
    Failure::validation(format!("{}:{line}: {msg}", path.display()))
}

/// Reads a dataset. The header must start with `x,y`; a third column named
/// `z` is the response; any further columns are covariates.
pub fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    parse_dataset(file, path)
}

pub fn parse_dataset<R: std::io::Read>(reader: R, path: &Path) -> Result<Dataset, Failure> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(|e| err(path, 1, e))?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if header.len() < 2 || header[0] != "x" || header[1] != "y" {
        return Err(err(path, 1, format!("header must start with 'x,y', found '{}'", header.join(","))));
    }
    let has_z = header.get(2).is_some_and(|h| h == "z");
    let first_cov = if has_z { 3 } else { 2 };
    let covariate_names: Vec<String> = header[first_cov..].to_vec();
    if let Some(dup) = covariate_names.iter().find(|c| *c == "x" || *c == "y" || *c == "z") {
        return Err(err(path, 1, format!("column '{dup}' appears twice")));
    }

    let mut locations = Vec::new();
    let mut z = Vec::new();
    let mut covariates = Vec::new();
    let mut seen: HashMap<(u64, u64), u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(path, line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(err(path, line, format!("expected {} columns, found {}", header.len(), rec.len())));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(path, line, format!("column '{}': '{field}' is not a number", header[k])))?;
            if !v.is_finite() {
                return Err(err(path, line, format!("column '{}': value '{field}' is missing or not finite", header[k])));
            }
            vals.push(v);
        }
        let key = ((vals[0] + 0.0).to_bits(), (vals[1] + 0.0).to_bits());
        if let Some(prev) = seen.insert(key, line) {
            return Err(err(path, line, format!("duplicate coordinates ({}, {}) also on line {prev}", vals[0], vals[1])));
        }
        locations.push([vals[0], vals[1]]);
        if has_z {
            z.push(vals[2]);
        }
        covariates.push(vals[first_cov..].to_vec());
    }
    if locations.is_empty() {
        return Err(err(path, 2, "no data rows"));
    }
    Ok(Dataset { source: path.to_path_buf(), locations, z: has_z.then_some(z), covariate_names, covariates })
}

/// Writes `x,y,z[,f2..fp]`, with the covariates taken from the non-intercept
/// columns of the design.
pub fn write_dataset(path: &Path, data: &DataVector) -> Result<(), Failure> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let p = data.p();
    let mut header = vec!["x".to_string(), "y".into(), "z".into()];
    header.extend((2..=p).map(|k| format!("f{k}")));
    wtr.write_record(&header).map_err(Failure::io)?;
    let x = data.design.covariates();
    for (i, s) in data.design.locations().iter().enumerate() {
        let mut row = vec![format!("{}", s[0]), format!("{}", s[1]), format!("{}", data.z[i])];
        row.extend((1..p).map(|j| format!("{}", x[(i, j)])));
        wtr.write_record(&row).map_err(Failure::io)?;
    }
    wtr.flush().map_err(Failure::io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset, Failure> {
        parse_dataset(s.as_bytes(), Path::new("in.csv"))
    }

    #[test]
    fn three_rows_constant_mean() {
        let d = parse("x,y,z\n0,0,1.5\n1,0,2\n0,1,-1\n").unwrap();
        assert_eq!((d.n(), d.p()), (3, 1));
        assert_eq!(d.z.as_deref(), Some(&[1.5, 2.0, -1.0][..]));
    }

    #[test]
    fn covariate_columns_raise_p() {
        let mut s = String::from("x,y,z,f2,f3,f4,f5,f6\n");
        for i in 0..8 {
            s.push_str(&format!("{i},{},0.1,1,2,3,4,{}\n", i * i, i % 3));
        }
        let d = parse(&s).unwrap();
        assert_eq!(d.p(), 6);
        assert_eq!(d.covariates[3], vec![1.0, 2.0, 3.0, 4.0, 0.0]);
    }

    #[test]
    fn duplicate_coordinates_name_both_lines() {
        let e = parse("x,y,z\n0,0,1\n1,1,2\n0,0,3\n").unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains(":4:") && e.message.contains("line 2"), "{}", e.message);
    }

    #[test]
    fn bad_values_are_line_numbered() {
        let e = parse("x,y,z\n0,0,1\n1,1,NaN\n").unwrap_err();
        assert!(e.message.contains("in.csv:3:"), "{}", e.message);
        let e = parse("x,y,z\n0,0,1\n1,1,\n").unwrap_err();
        assert!(e.message.contains("in.csv:3:"), "{}", e.message);
        let e = parse("x,y,z\n0,0,1\n1,1\n").unwrap_err();
        assert!(e.message.contains("in.csv:3:"), "{}", e.message);
        let e = parse("lon,lat,z\n0,0,1\n").unwrap_err();
        assert!(e.message.contains("in.csv:1:"), "{}", e.message);
    }

    #[test]
    fn design_only_files_have_no_response() {
        let d = parse("x,y\n0,0\n1,0\n").unwrap();
        assert!(d.z.is_none());
        assert!(d.data(None).is_err());
    }

    proptest::proptest! {
        #[test]
        fn written_datasets_read_back_exactly(
            rows in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e6f64..1e6), 5..30),
        ) {
            let mut locs: Vec<[f64; 2]> = rows.iter().map(|r| [r.0, r.1]).collect();
            locs.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
            locs.dedup();
            proptest::prop_assume!(locs.len() >= 5);
            let z: Vec<f64> = rows.iter().take(locs.len()).map(|r| r.2).collect();
            let design = SpatialDesign::with_trend(locs.clone(), Trend::Linear);
            proptest::prop_assume!(design.is_ok());
            let design = design.unwrap();
            let data = DataVector::new(design, DVector::from_vec(z.clone())).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.csv");
            write_dataset(&path, &data).unwrap();
            let back = load_dataset(&path).unwrap();
            proptest::prop_assert_eq!(back.p(), 3);
            proptest::prop_assert_eq!(back.locations, locs);
            proptest::prop_assert_eq!(back.z, Some(z));
        }
    }
}
