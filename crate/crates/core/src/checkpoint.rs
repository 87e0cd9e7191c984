//! Embedding checkpoints: `label<TAB>c1<TAB>…<TAB>cd` per node, plus a
//! `.meta` sidecar holding the config and epoch.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::TrainConfig;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::HierarchyGraph;

/// Rows keyed by label, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub labels: Vec<String>,
    pub table: EmbeddingTable,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Formats every row with 17 significant digits.
pub fn to_tsv(labels: &[String], table: &EmbeddingTable) -> String {
    let mut s = String::with_capacity(table.len() * (16 + 24 * table.dim()));
    for (label, row) in labels.iter().zip(table.rows()) {
        s.push_str(label);
        for c in row {
            let _ = write!(s, "\t{c:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn write_checkpoint(path: &Path, g: &HierarchyGraph, table: &EmbeddingTable) -> Result<()> {
    if g.len() != table.len() {
        return Err(Error::invalid("checkpoint rows do not match graph nodes"));
    }
    write_file(path, to_tsv(g.labels(), table).as_bytes())
}

pub fn write_meta(path: &Path, cfg: &TrainConfig, epoch: usize) -> Result<()> {
    let text = format!("epoch = {epoch}\n{}", cfg.to_text());
    write_file(&meta_path(path), text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    f.write_all(bytes).map_err(|e| Error::io(ctx(), e))
}

pub fn parse_checkpoint(text: &str, origin: &Path) -> Result<Checkpoint> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message,
        };
        let mut fields = line.split('\t');
        let label = fields.next().unwrap_or_default();
        let coords = fields
            .map(|f| f.trim().parse::<f64>().map_err(|_| err(format!("bad coordinate `{f}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != coords.len() {
                return Err(err(format!("expected {} coordinates, found {}", first.len(), coords.len())));
            }
        }
        labels.push(label.to_owned());
        rows.push(coords);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: "empty checkpoint".into(),
        });
    }
    let table = EmbeddingTable::from_rows(rows)?;
    Ok(Checkpoint { labels, table })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_checkpoint(&text, path)
}

/// Config and epoch from a `.meta` sidecar.
pub fn read_meta(path: &Path) -> Result<(TrainConfig, usize)> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(format!("reading {}", mp.display()), e))?;
    let mut epoch = None;
    let mut rest = String::new();
    for line in text.lines() {
        match line.split_once('=') {
            Some((k, v)) if k.trim() == "epoch" => {
                epoch = Some(v.trim().parse().map_err(|_| Error::invalid(format!("bad epoch `{}`", v.trim())))?);
                rest.push('\n');
            }
            _ => {
                rest.push_str(line);
                rest.push('\n');
            }
        }
    }
    let mut cfg = TrainConfig::default();
    cfg.merge_text(&rest, &mp)?;
    let epoch = epoch.ok_or_else(|| Error::invalid(format!("{} has no epoch", mp.display())))?;
    Ok((cfg, epoch))
}

impl Checkpoint {
    /// Reorders rows to the graph's node order. Every graph label must be present.
    pub fn align(&self, g: &HierarchyGraph) -> Result<EmbeddingTable> {
        let index: HashMap<&str, usize> = self.labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
        if index.len() != self.labels.len() {
            return Err(Error::invalid("checkpoint has duplicate labels"));
        }
        let mut table = EmbeddingTable::zeros(g.len(), self.table.dim());
        for v in g.nodes() {
            let label = g.label(v);
            let &k = index
                .get(label)
                .ok_or_else(|| Error::invalid(format!("checkpoint has no row for `{label}`")))?;
            table.row_mut(v).copy_from_slice(self.table.row(crate::graph::NodeId::from(k)));
        }
        Ok(table)
    }
}
