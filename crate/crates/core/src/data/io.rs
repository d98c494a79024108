//! Tab-separated dataset files and the plain-text embedding matrix format.
//!
//! | file            | line format                          |
//! |-----------------|--------------------------------------|
//! | edges           | `src<TAB>dst<TAB>relation`           |
//! | labels          | `node_id<TAB>class_name`             |
//! | texts           | `node_id<TAB>utf-8 text`             |
//! | embedding matrix| header `n D`, then `n` rows of `D` floats |
//!
//! Blank lines and lines starting with `#` are ignored in the TSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::encoders::tokenize;
use crate::error::{Error, Result};
use crate::graph::{build_graph, Edge, HeteroGraph};
use crate::numerics::DenseMatrix;

fn ingest(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn read_string(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        let offset = e.utf8_error().valid_up_to();
        Error::Data(format!(
            "{}: invalid UTF-8 at byte offset {offset}",
            path.display()
        ))
    })
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_node(path: &Path, line: usize, field: &str, n: usize) -> Result<usize> {
    let id: usize = field.trim().parse().map_err(|_| {
        ingest(
            path,
            line,
            format!("node id {field:?} is not a non-negative integer"),
        )
    })?;
    if id >= n {
        return Err(ingest(
            path,
            line,
            format!("node id {id} out of range for {n} nodes"),
        ));
    }
    Ok(id)
}

pub fn read_edges(path: &Path, n: usize, declared: &[String]) -> Result<Vec<Edge>> {
    let text = read_string(path)?;
    let mut edges = Vec::new();
    for (line, l) in data_lines(&text) {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != 3 {
            return Err(ingest(
                path,
                line,
                format!(
                    "expected src<TAB>dst<TAB>relation, found {} fields",
                    fields.len()
                ),
            ));
        }
        let src = parse_node(path, line, fields[0], n)?;
        let dst = parse_node(path, line, fields[1], n)?;
        let relation = fields[2].trim();
        if !declared.iter().any(|d| d == relation) {
            return Err(ingest(
                path,
                line,
                format!(
                    "unknown relation {relation:?}; declared relations: {}",
                    declared.join(", ")
                ),
            ));
        }
        edges.push(Edge::new(src, dst, relation));
    }
    Ok(edges)
}

pub fn load_edges(path: &Path, n: usize, declared: &[String]) -> Result<HeteroGraph> {
    build_graph(&read_edges(path, n, declared)?, n, declared)
}

pub fn write_edges(path: &Path, edges: &[Edge]) -> Result<()> {
    let mut out = String::new();
    for e in edges {
        writeln!(out, "{}\t{}\t{}", e.src, e.dst, e.relation).unwrap();
    }
    write_string(path, &out)
}

/// `None` marks an unlabeled node.
pub fn load_labels(path: &Path, n: usize, classes: &[String]) -> Result<Vec<Option<usize>>> {
    let text = read_string(path)?;
    let mut labels = vec![None; n];
    for (line, l) in data_lines(&text) {
        let (id, class) = l
            .split_once('\t')
            .ok_or_else(|| ingest(path, line, "expected node_id<TAB>class_name"))?;
        let id = parse_node(path, line, id, n)?;
        let class = class.trim();
        let c = classes.iter().position(|k| k == class).ok_or_else(|| {
            ingest(
                path,
                line,
                format!(
                    "unknown class {class:?}; known classes: {}",
                    classes.join(", ")
                ),
            )
        })?;
        match labels[id] {
            Some(prev) if prev != c => {
                return Err(ingest(
                    path,
                    line,
                    format!("node {id} labeled both {:?} and {class:?}", classes[prev]),
                ))
            }
            _ => labels[id] = Some(c),
        }
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[Option<usize>], classes: &[String]) -> Result<()> {
    let mut out = String::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            writeln!(out, "{i}\t{}", classes[*c]).unwrap();
        }
    }
    write_string(path, &out)
}

/// Token sequences per user; several lines for one user are concatenated in
/// file order.
pub fn load_texts(path: &Path, n: usize) -> Result<Vec<Vec<String>>> {
    let text = read_string(path)?;
    let mut tokens = vec![Vec::new(); n];
    for (line, l) in data_lines(&text) {
        let (id, body) = l.split_once('\t').unwrap_or((l, ""));
        let id = parse_node(path, line, id, n)?;
        tokens[id].extend(tokenize(body));
    }
    Ok(tokens)
}

pub fn write_texts(path: &Path, tokens: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if !t.is_empty() {
            writeln!(out, "{i}\t{}", t.join(" ")).unwrap();
        }
    }
    write_string(path, &out)
}

/// Header `n D`, then one row per line, 17 significant digits per value.
pub fn write_embedding_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 25 + 32);
    writeln!(out, "{} {}", m.rows(), m.cols()).unwrap();
    for i in 0..m.rows() {
        let mut first = true;
        for v in m.row(i) {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    write_string(path, &out)
}

pub fn read_embedding_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = read_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| ingest(path, 1, "missing `n D` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| ingest(path, 1, "header must be two integers `n D`"))?;
    let [n, d] = dims[..] else {
        return Err(ingest(path, 1, "header must be two integers `n D`"));
    };
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (k, l) in lines {
        let row: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ingest(path, k + 1, format!("bad value: {e}")))?;
        if row.len() != d {
            return Err(ingest(
                path,
                k + 1,
                format!("row has {} values, header declares {d}", row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ingest(path, k + 1, "non-finite value"));
        }
        data.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::Data(format!(
            "{}: header declares {n} rows, found {rows}",
            path.display()
        )));
    }
    DenseMatrix::from_vec(n, d, data)
}

/// `key<TAB>value` lines.
pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = read_string(path)?;
    let mut out = BTreeMap::new();
    for (line, l) in data_lines(&text) {
        let (k, v) = l
            .split_once('\t')
            .ok_or_else(|| ingest(path, line, "expected key<TAB>value"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn write_key_values<'a>(
    path: &Path,
    entries: impl IntoIterator<Item = (&'a str, String)>,
) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        writeln!(out, "{k}\t{v}").unwrap();
    }
    write_string(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn three_line_edge_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.tsv");
        fs::write(&p, "0\t1\tfollow\n1\t2\tretweet\n2\t0\tfollow\n").unwrap();
        let g = load_edges(&p, 3, &names(&["follow", "retweet"])).unwrap();
        assert_eq!(g.relations().len(), 4);
        assert_eq!(g.relation("follow").unwrap().nnz(), 2);
    }

    #[test]
    fn edge_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.tsv");
        fs::write(&p, "0\t1\tfollow\n0\t7\tfollow\n").unwrap();
        let err = load_edges(&p, 3, &names(&["follow"]))
            .unwrap_err()
            .to_string();
        assert!(err.contains(":2:"), "{err}");
        fs::write(&p, "0\t1\n").unwrap();
        assert!(load_edges(&p, 3, &names(&["follow"]))
            .unwrap_err()
            .to_string()
            .contains(":1:"));
        fs::write(&p, "0\t1\tpoke\n").unwrap();
        let err = load_edges(&p, 3, &names(&["follow", "like"]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("follow, like"), "{err}");
    }

    #[test]
    fn labels_empty_and_conflicting() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.tsv");
        let classes = names(&["dem", "rep"]);
        fs::write(&p, "").unwrap();
        assert_eq!(load_labels(&p, 3, &classes).unwrap(), vec![None; 3]);
        fs::write(&p, "1\tdem\n1\tdem\n2\trep\n").unwrap();
        assert_eq!(
            load_labels(&p, 3, &classes).unwrap(),
            vec![None, Some(0), Some(1)]
        );
        fs::write(&p, "1\tdem\n1\trep\n").unwrap();
        assert!(load_labels(&p, 3, &classes).is_err());
        fs::write(&p, "1\tgreen\n").unwrap();
        assert!(load_labels(&p, 3, &classes).is_err());
    }

    #[test]
    fn texts_concatenate_and_default_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("texts.tsv");
        fs::write(&p, "0\thello World\n2\tfoo\n0\tagain\n").unwrap();
        let t = load_texts(&p, 3).unwrap();
        assert_eq!(t[0], vec!["hello", "world", "again"]);
        assert!(t[1].is_empty());
        assert_eq!(t[2], vec!["foo"]);
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("texts.tsv");
        fs::write(&p, b"0\tok\n1\t\xff\n").unwrap();
        let err = load_texts(&p, 2).unwrap_err().to_string();
        assert!(err.contains("byte offset 7"), "{err}");
    }

    #[test]
    fn embedding_matrix_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        let m = DenseMatrix::filled(1, 1, 0.5);
        write_embedding_matrix(&p, &m).unwrap();
        assert_eq!(read_embedding_matrix(&p).unwrap(), m);
        fs::write(&p, "3 2\n1 2\n3 4\n").unwrap();
        assert!(read_embedding_matrix(&p)
            .unwrap_err()
            .to_string()
            .contains("declares 3 rows"));
        fs::write(&p, "1 2\n1 2 3\n").unwrap();
        assert!(read_embedding_matrix(&p).is_err());
    }
}
