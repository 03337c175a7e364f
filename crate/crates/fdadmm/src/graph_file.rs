//! Plain-text edge lists: a first line `n m`, then `m` lines `to from`
//! (node `to` receives from node `from`). Blank lines and `#` comments are
//! ignored.

use std::fmt::Write as _;
use std::path::Path;

use fdadmm_core::Digraph;

use crate::error::{CliError, Result};

pub fn parse_graph(text: &str, path: &Path) -> Result<Digraph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (header_line, header) = lines.next().ok_or_else(|| CliError::format(path, 1, "empty graph file"))?;
    let [n, m] = parse_pair(header, header_line, path)?;
    let mut edges = Vec::with_capacity(m);
    for (line, content) in lines {
        let [to, from] = parse_pair(content, line, path)?;
        if to >= n || from >= n {
            return Err(CliError::format(path, line, format!("node id out of range 0..{n}")));
        }
        if to == from {
            return Err(CliError::format(path, line, "self-loops are implicit and must not be listed"));
        }
        if edges.contains(&(to, from)) {
            return Err(CliError::format(path, line, format!("duplicate edge {to} {from}")));
        }
        edges.push((to, from));
    }
    if edges.len() != m {
        return Err(CliError::format(path, header_line, format!("header announces {m} edges, found {}", edges.len())));
    }
    let g = Digraph::new(n, &edges)?;
    if !g.is_strongly_connected() {
        return Err(fdadmm_core::Error::NotStronglyConnected.into());
    }
    Ok(g)
}

pub fn read_graph(path: &Path) -> Result<Digraph> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_graph(&text, path)
}

pub fn format_graph(g: &Digraph) -> String {
    let mut out = format!("{} {}\n", g.node_count(), g.edge_count());
    for (to, from) in g.edges() {
        writeln!(out, "{to} {from}").expect("writing to a String");
    }
    out
}

fn parse_pair(content: &str, line: usize, path: &Path) -> Result<[usize; 2]> {
    let fields: Vec<&str> = content.split_whitespace().collect();
    let [a, b] = fields[..] else {
        return Err(CliError::format(path, line, format!("expected two integers, got `{content}`")));
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| CliError::format(path, line, format!("`{s}` is not a nonnegative integer")));
    Ok([parse(a)?, parse(b)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("g.txt")
    }

    #[test]
    fn round_trip_cycle() {
        let g = Digraph::cycle(4);
        assert_eq!(parse_graph(&format_graph(&g), p()).unwrap(), g);
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = parse_graph("# ring\n3 3\n\n1 0\n2 1 # last\n0 2\n", p()).unwrap();
        assert_eq!(g, Digraph::cycle(3));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_graph("3 3\n1 0\n2 7\n0 2\n", p()).unwrap_err();
        assert!(matches!(e, CliError::Format { line: 3, .. }), "{e}");
        let e = parse_graph("3 2\n1 0\n2 1\n0 2\n", p()).unwrap_err();
        assert!(matches!(e, CliError::Format { line: 1, .. }), "{e}");
        let e = parse_graph("2 1\n1 x\n", p()).unwrap_err();
        assert!(e.to_string().starts_with("g.txt:2:"), "{e}");
    }

    #[test]
    fn not_strongly_connected() {
        let e = parse_graph("3 2\n1 0\n2 1\n", p()).unwrap_err();
        assert!(matches!(e, CliError::Core(fdadmm_core::Error::NotStronglyConnected)));
    }
}
