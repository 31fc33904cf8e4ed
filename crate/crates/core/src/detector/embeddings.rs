use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diffmath::Tape;
use crate::error::{Error, Result};
use crate::gnn::GinCheckpoint;
use crate::graphdata::Graph;
use crate::masker::{mask_graph, GraphMask};

/// Embeddings of one graph's subgraph and remainder.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub graph_index: usize,
    pub ood_flag: Option<bool>,
    pub h_z: Vec<f64>,
    pub h_remainder: Vec<f64>,
}

pub fn mask_embeddings(ckpt: &GinCheckpoint, graphs: &[Graph], masks: &[GraphMask]) -> Result<Vec<EmbeddingRow>> {
    if graphs.len() != masks.len() {
        return Err(Error::contract(format!(
            "{} graphs but {} masks",
            graphs.len(),
            masks.len()
        )));
    }
    graphs
        .iter()
        .zip(masks)
        .enumerate()
        .map(|(i, (g, m))| {
            let mut tape = Tape::new();
            let (_, pair) = mask_graph(&mut tape, g, m, false)?;
            let z = ckpt.forward_on(&mut tape, pair.subgraph_x, pair.subgraph_a)?;
            let r = ckpt.forward_on(&mut tape, pair.remainder_x, pair.remainder_a)?;
            Ok(EmbeddingRow {
                graph_index: i,
                ood_flag: g.ood_flag,
                h_z: tape.value(z.embedding).data().to_vec(),
                h_remainder: tape.value(r.embedding).data().to_vec(),
            })
        })
        .collect()
}

/// One comma-separated row per graph: index, OOD flag (empty when
/// unknown), then `h_Z` and `h_Z'`. The first line is a header.
pub fn dump_embeddings(
    ckpt: &GinCheckpoint,
    graphs: &[Graph],
    masks: &[GraphMask],
    path: impl AsRef<Path>,
) -> Result<Vec<EmbeddingRow>> {
    let rows = mask_embeddings(ckpt, graphs, masks)?;
    let hidden = ckpt.config().hidden_dim;
    let mut out = String::from("graph_index,ood_flag");
    for prefix in ["h_z", "h_zp"] {
        for k in 0..hidden {
            let _ = write!(out, ",{prefix}{k}");
        }
    }
    out.push('\n');
    for r in &rows {
        let flag = r.ood_flag.map_or(String::new(), |f| (f as u8).to_string());
        let _ = write!(out, "{},{flag}", r.graph_index);
        for v in r.h_z.iter().chain(&r.h_remainder) {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(rows)
}

pub fn read_embedding_dump(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty dump".into()))?.1;
    let fields = header.split(',').count();
    if fields < 4 || (fields - 2) % 2 != 0 {
        return Err(parse_err(1, format!("header has {fields} fields")));
    }
    let hidden = (fields - 2) / 2;
    lines
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != fields {
                return Err(parse_err(
                    i + 1,
                    format!("expected {fields} fields, found {}", cols.len()),
                ));
            }
            let graph_index = cols[0]
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad graph index {:?}", cols[0])))?;
            let ood_flag = match cols[1] {
                "" => None,
                "0" => Some(false),
                "1" => Some(true),
                other => return Err(parse_err(i + 1, format!("bad OOD flag {other:?}"))),
            };
            let values = cols[2..]
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| parse_err(i + 1, format!("bad number {c:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EmbeddingRow {
                graph_index,
                ood_flag,
                h_z: values[..hidden].to_vec(),
                h_remainder: values[hidden..].to_vec(),
            })
        })
        .collect()
}

/// Distance between the centroids of the `h_Z` and `h_Z'` clouds and the
/// mean distance of a point to its own cloud's centroid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudSeparation {
    pub centroid_distance: f64,
    pub mean_within_spread: f64,
}

pub fn cloud_separation(rows: &[EmbeddingRow]) -> Result<CloudSeparation> {
    if rows.is_empty() {
        return Err(Error::contract("no embeddings"));
    }
    let centroid = |pick: fn(&EmbeddingRow) -> &[f64]| {
        let mut c = vec![0.0; pick(&rows[0]).len()];
        for r in rows {
            c.iter_mut().zip(pick(r)).for_each(|(a, v)| *a += v);
        }
        c.iter_mut().for_each(|a| *a /= rows.len() as f64);
        c
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let cz = centroid(|r| &r.h_z);
    let cr = centroid(|r| &r.h_remainder);
    let spread: f64 = rows
        .iter()
        .map(|r| dist(&r.h_z, &cz) + dist(&r.h_remainder, &cr))
        .sum::<f64>()
        / (2 * rows.len()) as f64;
    Ok(CloudSeparation {
        centroid_distance: dist(&cz, &cr),
        mean_within_spread: spread,
    })
}
