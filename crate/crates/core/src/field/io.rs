use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Field, GridSpec, Provenance};
use crate::error::{Error, Result};
use crate::numfmt::sci;

/// JSON companion of a field CSV: everything but the values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub grid: GridSpec,
    pub provenance: Option<Provenance>,
    pub columns: Vec<String>,
}

fn columns(dim: usize) -> Vec<String> {
    let mut cols: Vec<String> = (0..dim).map(|k| format!("i_x{k}")).collect();
    cols.push("i_t".into());
    cols.push("value".into());
    cols
}

impl Field {
    pub fn sidecar(&self) -> FieldSidecar {
        FieldSidecar {
            grid: self.spec.clone(),
            provenance: self.provenance,
            columns: columns(self.dim()),
        }
    }

    /// CSV with one row per node: the per-axis indices, then the value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(columns(self.dim()))?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.spec.multi_index(i).iter().map(|k| k.to_string()).collect();
            row.push(sci(*v));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(sidecar: &FieldSidecar, input: R) -> Result<Field> {
        let spec = sidecar.grid.clone();
        let d = spec.dim();
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != columns(d) {
            return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
        }
        let mut values = vec![f64::NAN; spec.node_count()];
        let mut seen = vec![false; spec.node_count()];
        for rec in r.records() {
            let rec = rec?;
            let idx: Vec<usize> = (0..=d)
                .map(|k| {
                    rec[k]
                        .parse::<usize>()
                        .map_err(|e| Error::Parse(format!("index `{}`: {e}", &rec[k])))
                })
                .collect::<Result<_>>()?;
            let in_range = idx[..d].iter().all(|&i| i < spec.nx) && idx[d] < spec.nt;
            if !in_range {
                return Err(Error::Parse(format!("node index {idx:?} outside the grid")));
            }
            let flat = spec.flat_index(&idx);
            if seen[flat] {
                return Err(Error::Parse(format!("node {idx:?} listed twice")));
            }
            seen[flat] = true;
            values[flat] = rec[d + 1]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("value `{}`: {e}", &rec[d + 1])))?;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Parse(format!("node {:?} missing", spec.multi_index(missing))));
        }
        Field::new(spec, values, sidecar.provenance)
    }
}

/// Writes `field` as CSV plus its JSON sidecar.
pub fn write_field(field: &Field, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    field.write_csv(&mut buf)?;
    std::fs::write(csv_path, buf)?;
    let json = serde_json::to_string_pretty(&field.sidecar())?;
    std::fs::write(sidecar_path, json + "\n")?;
    Ok(())
}

pub fn read_field(csv_path: &Path, sidecar_path: &Path) -> Result<Field> {
    let sidecar: FieldSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    Field::read_csv(&sidecar, std::fs::File::open(csv_path)?)
}
