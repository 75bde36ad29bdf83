//! Graph text files and dataset manifests.
//!
//! A graph file holds records separated by blank lines. Each record is
//!
//! ```text
//! n a b
//! c_0 c_1 ... c_{n-1}
//! i j class
//! ...
//! ```
//!
//! with `n ≥ 1`, one `i j class` line per edge, `i < j`, `1 ≤ class < b`, no pair
//! listed twice. Text after `#` is a comment. The writer emits edges in
//! `(i, j)` order, so `write_graphs` followed by `read_graphs` is exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Renders graphs in the text format.
pub fn format_graphs(graphs: &[Graph]) -> String {
    let mut out = String::new();
    for (k, g) in graphs.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        out.push_str(&format!("{} {} {}\n", g.n(), g.a(), g.b()));
        let nodes: Vec<String> = g.nodes().iter().map(ToString::to_string).collect();
        out.push_str(&nodes.join(" "));
        out.push('\n');
        for (i, j, c) in g.edge_list() {
            out.push_str(&format!("{i} {j} {c}\n"));
        }
    }
    out
}

fn numbers(line: &str) -> std::result::Result<Vec<usize>, String> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| format!("'{t}' is not a nonnegative integer")))
        .collect()
}

/// Parses the text format; `source` names the input in error messages.
pub fn parse_graphs(text: &str, source: &str) -> Result<Vec<Graph>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    // (line number, content) of every non-comment line; blank lines kept as separators.
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
        .collect();
    let mut graphs = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        let (ln, header) = lines[k];
        k += 1;
        if header.is_empty() {
            continue;
        }
        let [n, a, b] = numbers(header).map_err(|m| err(ln, m))?[..] else {
            return Err(err(ln, format!("expected header 'n a b', got '{header}'")));
        };
        if n == 0 {
            return Err(err(ln, "graphs need at least one node".into()));
        }
        let mut g = Graph::empty(n, a, b).map_err(|e| err(ln, e.to_string()))?;
        let Some(&(node_ln, node_line)) = lines.get(k) else {
            return Err(err(ln, "missing node class line".into()));
        };
        k += 1;
        let classes = numbers(node_line).map_err(|m| err(node_ln, m))?;
        if classes.len() != n {
            return Err(err(node_ln, format!("expected {n} node classes, got {}", classes.len())));
        }
        for (i, &c) in classes.iter().enumerate() {
            g.set_node(i, c).map_err(|e| err(node_ln, e.to_string()))?;
        }
        while let Some(&(eln, line)) = lines.get(k) {
            if line.is_empty() {
                break;
            }
            k += 1;
            let [i, j, c] = numbers(line).map_err(|m| err(eln, m))?[..] else {
                return Err(err(eln, format!("expected edge 'i j class', got '{line}'")));
            };
            if i >= j || j >= n {
                return Err(err(eln, format!("edge ({i}, {j}) must satisfy i < j < {n}")));
            }
            if c == 0 {
                return Err(err(eln, "edge class 0 means no edge and must not be listed".into()));
            }
            if g.edge(i, j) != 0 {
                return Err(err(eln, format!("edge ({i}, {j}) listed twice")));
            }
            g.set_edge(i, j, c).map_err(|e| err(eln, e.to_string()))?;
        }
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn read_graphs(path: &Path) -> Result<Vec<Graph>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graphs(&text, &path.display().to_string())
}

pub fn write_graphs(path: &Path, graphs: &[Graph]) -> Result<()> {
    fs::write(path, format_graphs(graphs)).map_err(|e| Error::io(path, e))
}

/// Dataset split listing graph files; relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub train: Vec<PathBuf>,
    #[serde(default)]
    pub val: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in m.train.iter_mut().chain(&mut m.val).chain(&mut m.test) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn files(&self, split: Split) -> &[PathBuf] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// All graphs of one split, in file order.
    pub fn read(&self, split: Split) -> Result<Vec<Graph>> {
        let mut out = Vec::new();
        for p in self.files(split) {
            out.extend(read_graphs(p)?);
        }
        Ok(out)
    }
}
