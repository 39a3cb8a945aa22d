//! Edge-list text format: a header line `n m`, then `m` lines `u v` with
//! 0-based node ids. Blank lines and lines starting with `#` are skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use plurality_core::pattern::Matching;
use plurality_core::Graph;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EdgeListError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("header announces {expected} edges but {found} were listed")]
    Count { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] plurality_core::Error),
}

/// Node count and edges as listed, without graph validation.
pub fn parse_edge_list(text: &str) -> Result<(usize, Vec<(usize, usize)>), EdgeListError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or(EdgeListError::Parse { line: 1, msg: "missing `n m` header".into() })?;
    let [n, m] = pair(hl, header)?;
    let mut edges = Vec::with_capacity(m);
    for (line, l) in lines {
        let [u, v] = pair(line, l)?;
        if u >= n || v >= n {
            return Err(EdgeListError::Parse { line, msg: format!("node id out of range 0..{n}") });
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        return Err(EdgeListError::Count { expected: m, found: edges.len() });
    }
    Ok((n, edges))
}

fn pair(line: usize, l: &str) -> Result<[usize; 2], EdgeListError> {
    let parts: Vec<&str> = l.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(EdgeListError::Parse { line, msg: format!("expected two integers, got `{l}`") });
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| EdgeListError::Parse { line, msg: format!("`{s}`: {e}") });
    Ok([parse(parts[0])?, parse(parts[1])?])
}

fn read(path: &Path) -> Result<String, EdgeListError> {
    fs::read_to_string(path).map_err(|source| EdgeListError::Io { path: path.display().to_string(), source })
}

pub fn parse_graph(text: &str) -> Result<Graph, EdgeListError> {
    let (n, edges) = parse_edge_list(text)?;
    Ok(Graph::from_edges(n, edges)?)
}

pub fn read_graph(path: &Path) -> Result<Graph, EdgeListError> {
    parse_graph(&read(path)?)
}

pub fn format_graph(graph: &Graph) -> String {
    format_edges(graph.n(), graph.edges())
}

pub fn format_edges(n: usize, edges: &[(usize, usize)]) -> String {
    let mut out = format!("{n} {}\n", edges.len());
    for (u, v) in edges {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

pub fn write_graph<W: Write>(graph: &Graph, mut w: W) -> std::io::Result<()> {
    w.write_all(format_graph(graph).as_bytes())
}

/// One matching per file, in the same format. The node count in the header
/// must agree with the graph; matching checks happen when the pattern is
/// built.
pub fn read_matching(path: &Path, n: usize) -> Result<Matching, EdgeListError> {
    let (m, edges) = parse_edge_list(&read(path)?)?;
    if m != n {
        return Err(EdgeListError::Parse { line: 1, msg: format!("matching is over {m} nodes, graph has {n}") });
    }
    Ok(edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect())
}
