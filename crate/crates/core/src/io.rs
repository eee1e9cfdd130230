//! File formats: the JSON complex document, hyperedge lists and OFF meshes.
//!
//! The JSON document looks like
//!
//! ```json
//! {
//!   "kind": "cellular",
//!   "vertices": ["a", "b", "c"],
//!   "cells": [
//!     {"vertices": ["a", "b"], "rank": 1},
//!     {"vertices": ["b", "c"], "rank": 1},
//!     {"vertices": ["a", "c"], "rank": 1},
//!     {"vertices": ["a", "b", "c"], "rank": 2, "cycle": ["a", "b", "c"]}
//!   ],
//!   "features": {"0": [[0.5], [1.0], [2.0]]}
//! }
//! ```
//!
//! Cellular cells of rank 3 and up list their faces instead of a cycle, as
//! `"boundary": [{"cell": 3, "sign": -1}, ...]` where `cell` indexes into
//! `cells`. Feature rows follow the canonical cell order; a rank with no
//! cells states its feature width in a separate `"widths": {"2": 4}` map.
//! Written files list cells in canonical order and print every float with
//! 17 significant digits, so reading them back is exact.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::complex::{build_complex, close_downward, BoundaryRef, CellSpec, Complex, DomainKind};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::model::ModelOutput;
use crate::tensor::DenseMatrix;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComplexDoc {
    kind: DomainKind,
    vertices: Vec<String>,
    #[serde(default)]
    cells: Vec<CellDoc>,
    #[serde(default)]
    features: BTreeMap<usize, Vec<Vec<f64>>>,
    #[serde(default)]
    widths: Widths,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    vertices: Vec<String>,
    rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cycle: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<Vec<BoundaryDoc>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundaryDoc {
    cell: usize,
    sign: i8,
}

#[derive(Serialize)]
struct ComplexOut<'a> {
    kind: DomainKind,
    vertices: &'a [String],
    cells: Vec<CellDoc>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    features: BTreeMap<usize, Vec<Vec<Box<RawValue>>>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    widths: Widths,
}

/// Widths of feature matrices with no rows, which a list of rows cannot
/// express.
pub type Widths = BTreeMap<usize, usize>;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub(crate) fn schema_error(e: serde_json::Error) -> Error {
    Error::Schema {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

/// A float printed with 17 significant digits.
pub fn float_token(v: f64) -> Result<Box<RawValue>> {
    if !v.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot serialize non-finite value {v}")));
    }
    Ok(RawValue::from_string(format!("{v:.16e}")).expect("formatted float is valid JSON"))
}

pub fn matrix_tokens(m: &DenseMatrix) -> Result<Vec<Vec<Box<RawValue>>>> {
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|&v| float_token(v)).collect())
        .collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DenseMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Schema {
            location: format!("{what} row {i}"),
            message: format!("expected {cols} values, found {}", rows[i].len()),
        });
    }
    DenseMatrix::from_rows(rows, cols)
}

pub fn features_from_rows(raw: &BTreeMap<usize, Vec<Vec<f64>>>, widths: &Widths) -> Result<FeatureStore> {
    let mut store = FeatureStore::new();
    for (&rank, rows) in raw {
        let m = match widths.get(&rank) {
            Some(&w) if rows.is_empty() => DenseMatrix::zeros(0, w),
            Some(_) => {
                return Err(Error::Schema {
                    location: format!("widths.{rank}"),
                    message: "only allowed for a rank with no feature rows".into(),
                })
            }
            None => matrix_from_rows(rows, &format!("features.{rank}"))?,
        };
        store.insert(rank, m);
    }
    if let Some(rank) = widths.keys().find(|r| !raw.contains_key(r)) {
        return Err(Error::Schema {
            location: format!("widths.{rank}"),
            message: "no features at this rank".into(),
        });
    }
    Ok(store)
}

/// The [`Widths`] entries `h` needs to be read back exactly.
pub fn feature_widths(h: &FeatureStore) -> Widths {
    h.iter()
        .filter(|(_, m)| m.rows() == 0 && m.cols() > 0)
        .map(|(r, m)| (r, m.cols()))
        .collect()
}

pub fn features_tokens(h: &FeatureStore) -> Result<BTreeMap<usize, Vec<Vec<Box<RawValue>>>>> {
    h.iter().map(|(r, m)| Ok((r, matrix_tokens(m)?))).collect()
}

/// Parses a JSON complex document; features are checked against the
/// complex.
pub fn complex_from_json(text: &str) -> Result<(Complex, FeatureStore)> {
    let doc: ComplexDoc = serde_json::from_str(text).map_err(schema_error)?;
    let specs: Vec<CellSpec> = doc
        .cells
        .into_iter()
        .map(|c| CellSpec {
            vertices: c.vertices,
            rank: c.rank,
            cycle: c.cycle,
            boundary: c
                .boundary
                .map(|b| b.into_iter().map(|e| (BoundaryRef::Spec(e.cell), e.sign)).collect()),
        })
        .collect();
    let complex = build_complex(doc.kind, &doc.vertices, &specs)?;
    let features = features_from_rows(&doc.features, &doc.widths)?;
    features.validate(&complex)?;
    Ok((complex, features))
}

/// Canonical JSON for a complex and its features.
pub fn complex_to_json(c: &Complex, h: &FeatureStore) -> Result<String> {
    h.validate(c)?;
    let labels = c.vertex_labels();
    let names = |vs: &[usize]| vs.iter().map(|&v| labels[v].clone()).collect::<Vec<_>>();
    // position of the first cell of each rank within `cells`
    let mut offset = vec![0usize; c.max_rank() + 2];
    for r in 1..=c.max_rank() {
        offset[r + 1] = offset[r] + c.num_cells(r);
    }
    let mut cells = Vec::new();
    for r in 1..=c.max_rank() {
        for cell in c.skeleton(r)? {
            let mut doc = CellDoc {
                vertices: names(cell.vertices()),
                rank: r,
                cycle: None,
                boundary: None,
            };
            if c.kind() == DomainKind::Cellular && r >= 2 {
                match cell.cycle() {
                    Some(cycle) => doc.cycle = Some(names(cycle)),
                    None => {
                        doc.boundary = Some(
                            cell.faces()
                                .iter()
                                .map(|&(f, sign)| BoundaryDoc {
                                    cell: offset[f.rank] + f.index,
                                    sign,
                                })
                                .collect(),
                        )
                    }
                }
            }
            cells.push(doc);
        }
    }
    let out = ComplexOut {
        kind: c.kind(),
        vertices: labels,
        cells,
        features: features_tokens(h)?,
        widths: feature_widths(h),
    };
    let mut text = serde_json::to_string_pretty(&out).expect("serializable");
    text.push('\n');
    Ok(text)
}

#[derive(Serialize)]
struct OutputDoc {
    layer: usize,
    features: BTreeMap<usize, Vec<Vec<Box<RawValue>>>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    widths: Widths,
    #[serde(skip_serializing_if = "Option::is_none")]
    logits: Option<Vec<Vec<Box<RawValue>>>>,
}

/// JSON for a model output: `layer`, `features` by rank and, with a
/// readout, `logits`.
pub fn output_to_json(out: &ModelOutput) -> Result<String> {
    let doc = OutputDoc {
        layer: out.features.layer,
        features: features_tokens(&out.features)?,
        widths: feature_widths(&out.features),
        logits: out.logits.as_ref().map(matrix_tokens).transpose()?,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    Ok(text)
}

pub fn read_complex(path: &Path) -> Result<(Complex, FeatureStore)> {
    complex_from_json(&read_text(path)?)
}

pub fn write_complex(c: &Complex, h: &FeatureStore, path: &Path) -> Result<()> {
    write_text(path, &complex_to_json(c, h)?)
}

/// One hyperedge per line, labels separated by whitespace. Blank lines and
/// lines starting with `#` are skipped. Repeated hyperedges (same vertex
/// set) are kept once and reported in the returned warnings.
pub fn hyperedges_from_text(text: &str) -> Result<(Complex, Vec<String>)> {
    let mut vertices: Vec<String> = Vec::new();
    let mut known: HashSet<String> = HashSet::new();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut specs = Vec::new();
    let mut warnings = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut edge: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        for v in &edge {
            if known.insert(v.clone()) {
                vertices.push(v.clone());
            }
        }
        edge.sort();
        edge.dedup();
        if !seen.insert(edge.clone()) {
            warnings.push(format!("line {}: duplicate hyperedge {{{}}} ignored", lineno + 1, edge.join(",")));
            continue;
        }
        specs.push(CellSpec::new(1, &edge));
    }
    Ok((build_complex(DomainKind::Hypergraph, &vertices, &specs)?, warnings))
}

pub fn read_hyperedge_list(path: &Path) -> Result<(Complex, Vec<String>)> {
    hyperedges_from_text(&read_text(path)?)
}

/// Triangle meshes in OFF format. Vertices are labelled by their zero-padded
/// index, so label order equals file order, and their coordinates become
/// rank-0 features.
pub fn off_from_text(text: &str) -> Result<(Complex, FeatureStore)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let bad = |line: usize, message: String| Error::Schema {
        location: format!("line {line}"),
        message,
    };
    let (hline, header) = lines.next().ok_or_else(|| bad(1, "empty OFF file".into()))?;
    let counts_text = match header.strip_prefix("OFF") {
        Some(rest) if !rest.trim().is_empty() => (hline, rest.trim()),
        Some(_) => lines.next().ok_or_else(|| bad(hline, "missing counts line".into()))?,
        None => return Err(bad(hline, format!("expected OFF header, found {header:?}"))),
    };
    let counts: Vec<usize> = counts_text
        .1
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(counts_text.0, format!("bad count {t:?}"))))
        .collect::<Result<_>>()?;
    let (nv, nf) = match counts[..] {
        [nv, nf, ..] => (nv, nf),
        _ => return Err(bad(counts_text.0, "expected vertex and face counts".into())),
    };
    let width = nv.saturating_sub(1).to_string().len();
    let labels: Vec<String> = (0..nv).map(|i| format!("{i:0width$}")).collect();
    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| bad(0, "missing vertex lines".into()))?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, format!("bad coordinate {t:?}"))))
            .collect::<Result<_>>()?;
        coords.push(row);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| bad(0, "missing face lines".into()))?;
        let nums: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, format!("bad face index {t:?}"))))
            .collect::<Result<_>>()?;
        match nums.split_first() {
            Some((&3, rest)) if rest.len() >= 3 => {
                let tri = &rest[..3];
                if let Some(&v) = tri.iter().find(|&&v| v >= nv) {
                    return Err(bad(ln, format!("vertex index {v} out of range")));
                }
                faces.push(tri.iter().map(|&v| labels[v].clone()).collect::<Vec<_>>());
            }
            Some((&k, _)) => {
                return Err(bad(ln, format!("face with {k} vertices; only triangles are supported")))
            }
            None => return Err(bad(ln, "empty face line".into())),
        }
    }
    let complex = close_downward(&labels, &faces)?;
    let features = FeatureStore::new().with(0, matrix_from_rows(&coords, "vertex coordinates")?);
    Ok((complex, features))
}

pub fn read_off_mesh(path: &Path) -> Result<(Complex, FeatureStore)> {
    off_from_text(&read_text(path)?)
}

/// Coordinate-list text: one `row col value` line per stored entry.
pub fn coo_text(m: &crate::sparse::Csr<i64>) -> String {
    let mut out = String::new();
    for (r, c, v) in m.triplets() {
        out.push_str(&format!("{r} {c} {v}\n"));
    }
    out
}
